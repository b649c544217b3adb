"""Micro-F1 evaluation and attention-weight extraction/reporting."""

from __future__ import annotations

import json

import numpy as np

from .errors import EmptySplit, LengthMismatch
from .graph import SINGLE_LABEL
from .head import predict
from .sampler import derive_sample_seed, rng_for, sample_paths

_EVAL_TAG = 0xE7A1


def micro_f1(predictions, targets, task):
    """F1 from class-pooled tp/fp/fn counts; 0 when the denominator is 0.

    single_label inputs are integer class ids (counted one-hot);
    multi_label inputs are binary indicator matrices.
    """
    p = np.asarray(predictions)
    t = np.asarray(targets)
    if p.shape != t.shape:
        raise LengthMismatch(f"predictions {p.shape} vs targets {t.shape}")
    if task == SINGLE_LABEL:
        tp = int((p == t).sum())
        fp = fn = int(p.size - tp)
    else:
        p = p.astype(bool)
        t = t.astype(bool)
        tp = int((p & t).sum())
        fp = int((p & ~t).sum())
        fn = int((~p & t).sum())
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def _per_sample_losses(logits, targets, task):
    z = logits.astype(np.float64)
    if task == SINGLE_LABEL:
        zmax = z.max(axis=-1, keepdims=True)
        lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=-1))
        return lse - z[np.arange(len(z)), np.asarray(targets, dtype=np.int64)]
    y = np.asarray(targets, dtype=np.float64)
    per = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    return per.mean(axis=-1)


def eval_split(model, graph, labels, nodes, counts_per_length, seed,
               batch_size=64, run=0):
    """Inference-mode evaluation over a node set -> (micro-F1, mean loss).

    Paths are drawn with per-node evaluation seeds; a fixed (seed, run)
    pair is exactly reproducible.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    if nodes.size == 0:
        raise EmptySplit("evaluation split is empty")
    plan = model.plan(counts_per_length)
    preds, losses = [], []
    for b0 in range(0, len(nodes), batch_size):
        chunk = nodes[b0:b0 + batch_size]
        batches = [sample_paths(graph, int(c), plan,
                                rng_for(derive_sample_seed(seed ^ _EVAL_TAG, run, int(c))))
                   for c in chunk]
        logits, _ = model.forward_batch(graph, batches, train=False)
        target = labels.labels[chunk]
        preds.append(predict(logits, labels.task))
        losses.append(_per_sample_losses(logits.data, target, labels.task))
    preds = np.concatenate(preds)
    losses = np.concatenate(losses)
    return micro_f1(preds, labels.labels[nodes], labels.task), float(losses.mean())


def eval_runs(model, graph, labels, nodes, counts_per_length, seed, runs=5,
              batch_size=64, split_name="test"):
    """Repeat eval_split over `runs` evaluation seeds -> mean +/- sample std."""
    f1s, losses = [], []
    for run in range(runs):
        f1, loss = eval_split(model, graph, labels, nodes, counts_per_length,
                              seed, batch_size=batch_size, run=run)
        f1s.append(f1)
        losses.append(loss)
    std = float(np.std(f1s, ddof=1)) if runs > 1 else 0.0
    return {
        "split": split_name,
        "runs": runs,
        "micro_f1_mean": float(np.mean(f1s)),
        "micro_f1_std": std,
        "loss_mean": float(np.mean(losses)),
    }


def format_score(mean, std):
    return f"{mean:.3f}±{std:.3f}"


# ---------------------------------------------------------------------------
# attention extraction
# ---------------------------------------------------------------------------

def _token_labels(labels, path):
    if labels is None:
        return [-1] * len(path)
    if labels.task == SINGLE_LABEL:
        return [int(labels.labels[v]) for v in path]
    out = []
    for v in path:
        pos = np.flatnonzero(labels.labels[v])
        out.append(int(pos[0]) if pos.size else -1)
    return out


def dump_attention(model, graph, labels, node, counts_per_length, seed, out_path):
    """One inference forward for `node`; write a JSON line per
    (path, layer, head) with the full attention weight matrix."""
    plan = model.plan(counts_per_length)
    batch = sample_paths(graph, int(node), plan,
                         rng_for(derive_sample_seed(seed ^ _EVAL_TAG, 0, int(node))))
    _, attention = model.forward_node(graph, batch, train=False,
                                      collect_attention=True)
    count = 0
    with open(out_path, "w") as fh:
        for l in range(1, model.config.depth_s + 1):
            walks = batch.paths_by_length[l - 1]
            per_layer = attention[l]  # list over layers of (n_l, heads, T, T)
            for j in range(walks.shape[0]):
                path = [int(v) for v in walks[j]]
                toks = _token_labels(labels, path)
                for layer_idx, weights in enumerate(per_layer):
                    for h in range(weights.shape[1]):
                        record = {
                            "central": int(node),
                            "path": path,
                            "layer": layer_idx,
                            "head": h,
                            "weights": [[float(w) for w in row]
                                        for row in weights[j, h]],
                            "labels": toks,
                        }
                        fh.write(json.dumps(record) + "\n")
                        count += 1
    return count


def attention_stats(dump_path):
    """Aggregate a dump file: mean attention mass between same-label token
    pairs vs different-label pairs, overall and per (layer, head)."""
    same = {}
    diff = {}
    records = 0
    with open(dump_path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            records += 1
            key = (rec["layer"], rec["head"])
            weights = np.asarray(rec["weights"], dtype=np.float64)
            labs = np.asarray(rec["labels"], dtype=np.int64)
            valid = labs >= 0
            for i in range(len(labs)):
                if not valid[i]:
                    continue
                for j in range(len(labs)):
                    if i == j or not valid[j]:
                        continue
                    bucket = same if labs[i] == labs[j] else diff
                    bucket.setdefault(key, []).append(weights[i, j])
    per_head = []
    for key in sorted(set(same) | set(diff)):
        per_head.append({
            "layer": key[0],
            "head": key[1],
            "same_label_mean": float(np.mean(same[key])) if key in same else None,
            "diff_label_mean": float(np.mean(diff[key])) if key in diff else None,
        })
    all_same = [w for v in same.values() for w in v]
    all_diff = [w for v in diff.values() for w in v]
    return {
        "records": records,
        "same_label_mean": float(np.mean(all_same)) if all_same else None,
        "diff_label_mean": float(np.mean(all_diff)) if all_diff else None,
        "per_head": per_head,
    }

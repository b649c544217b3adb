"""Mini-batch training: Adam with linear warmup/decay, deterministic replay.

All stochastic choices (epoch shuffles, per-node path sampling, dropout)
are derived from (seed, epoch, ...) with a 64-bit mixing function, so a
run can be replayed or resumed from an epoch-boundary checkpoint and
produce the identical loss sequence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autograd as ag
from . import head as head_ops
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import NonFiniteLoss, ShapeMismatch
from .graph import SINGLE_LABEL
from .metrics import micro_f1
from .model import ModelConfig, PathSageModel
from .sampler import SamplePlan, derive_sample_seed, rng_for, sample_paths

_SHUFFLE_TAG = 0x5F5CAA1D
_DROPOUT_TAG = 0xD20F0C37


@dataclass
class TrainConfig:
    epochs: int = 10
    seed: int = 0
    depth_s: int = 8
    counts_per_length: tuple = (5, 5, 5, 5, 5, 10, 10, 10)
    hidden: int = 128
    heads: int = 8
    layers: int = 2
    batch_size: int = 32
    lr: float = 1e-3
    warmup_ratio: float = 0.1
    dropout_encoder: float = 0.1
    dropout_output: float = 0.3
    grad_clip: float = 5.0
    patience: int = 10

    def __post_init__(self):
        self.counts_per_length = tuple(int(c) for c in self.counts_per_length)
        if not 0.0 <= self.warmup_ratio <= 1.0:
            raise ValueError(f"warmup_ratio {self.warmup_ratio} outside [0,1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if len(self.counts_per_length) != self.depth_s:
            raise ValueError(f"{len(self.counts_per_length)} counts for depth {self.depth_s}")

    def plan(self):
        return SamplePlan(self.depth_s, self.counts_per_length)


def lr_at(step, total_steps, cfg: TrainConfig):
    """Piecewise-linear schedule: 0 -> lr over the first ceil(ratio*total)
    steps, then lr -> 0 at total_steps."""
    warmup = math.ceil(cfg.warmup_ratio * total_steps)
    if step <= warmup:
        return cfg.lr * step / warmup if warmup else (cfg.lr if step else 0.0)
    return cfg.lr * (total_steps - step) / (total_steps - warmup)


@dataclass
class OptimizerState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(named_params, grads, state: OptimizerState, lr):
    """Standard bias-corrected Adam update, in the parameter dtype."""
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for name, param in named_params:
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != param.data.shape:
            raise ShapeMismatch(f"gradient shape for {name}", g.shape, param.data.shape)
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(param.data)
            state.m[name] = m
            state.v[name] = np.zeros_like(param.data)
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        param.data -= (lr * mhat / (np.sqrt(vhat) + state.eps)).astype(param.dtype)


def _clip_grads(grads, max_norm):
    total = math.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.values()))
    if max_norm and total > max_norm:
        factor = max_norm / total
        for g in grads.values():
            g *= factor
    return total


def _batch_targets(labels, nodes):
    if labels.task == SINGLE_LABEL:
        return labels.labels[nodes]
    return labels.labels[nodes].astype(np.float64)


def sample_many(graph, nodes, plan, seed_for_node, workers=1):
    """Sample PathBatches for many central nodes, optionally on a thread
    pool. Per-node seeds keep the result identical for any worker count."""
    def one(c):
        return sample_paths(graph, int(c), plan, rng_for(seed_for_node(int(c))))

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, nodes))
    return [one(c) for c in nodes]


def train_epoch(model: PathSageModel, graph, labels, train_nodes, cfg: TrainConfig,
                epoch, state: OptimizerState, total_steps, workers=1):
    """One pass over the training nodes; fresh paths are sampled per epoch.

    Returns (mean loss, micro-F1 of the in-epoch predictions).
    """
    plan = cfg.plan()
    order = rng_for(derive_sample_seed(cfg.seed, epoch, _SHUFFLE_TAG)).permutation(train_nodes)
    losses = []
    preds, targets = [], []
    for b0 in range(0, len(order), cfg.batch_size):
        nodes = order[b0:b0 + cfg.batch_size]
        batches = sample_many(graph, nodes, plan,
                              lambda c: derive_sample_seed(cfg.seed, epoch, c),
                              workers=workers)
        drop_rng = rng_for(derive_sample_seed(cfg.seed ^ _DROPOUT_TAG, epoch, b0))
        model.zero_grad()
        logits, _ = model.forward_batch(graph, batches, train=True, rng=drop_rng)
        target = _batch_targets(labels, nodes)
        loss = head_ops.loss(logits, target, labels.task)
        value = loss.item()
        if not math.isfinite(value):
            raise NonFiniteLoss(
                f"non-finite loss {value} at epoch {epoch} step {state.step} "
                f"(lr={lr_at(state.step + 1, total_steps, cfg):.3e})")
        ag.backward(loss)
        grads = {name: p.grad for name, p in model.named_params() if p.grad is not None}
        _clip_grads(grads, cfg.grad_clip)
        adam_step(model.named_params(), grads, state,
                  lr_at(state.step + 1, total_steps, cfg))
        losses.append(value)
        preds.append(head_ops.predict(logits, labels.task))
        targets.append(labels.labels[nodes])
    preds = np.concatenate(preds)
    targets = np.concatenate(targets)
    return float(np.mean(losses)), micro_f1(preds, targets, labels.task)


@dataclass
class FitResult:
    history: list
    best_val: float
    epochs_run: int


def fit(model, graph, labels, splits, cfg: TrainConfig, state=None,
        start_epoch=0, checkpoint_path=None, eval_fn=None, log_fn=None,
        early_stopping=True, best_val=-1.0, bad_epochs=0, workers=1):
    """Train for cfg.epochs epochs with patience-based early stopping on
    validation micro-F1 (when a val split and eval_fn are provided)."""
    state = state or OptimizerState()
    steps_per_epoch = math.ceil(len(splits.train) / cfg.batch_size)
    total_steps = steps_per_epoch * cfg.epochs
    history = []
    epoch = start_epoch
    for epoch in range(start_epoch, cfg.epochs):
        mean_loss, train_f1 = train_epoch(model, graph, labels, splits.train,
                                          cfg, epoch, state, total_steps,
                                          workers=workers)
        record = {"epoch": epoch, "loss": mean_loss, "train_micro_f1": train_f1}
        if eval_fn is not None and len(splits.val):
            val_f1, val_loss = eval_fn(model, epoch)
            record.update({"val_micro_f1": val_f1, "val_loss": val_loss})
            if val_f1 > best_val:
                best_val, bad_epochs = val_f1, 0
            else:
                bad_epochs += 1
        history.append(record)
        if log_fn:
            log_fn(record)
        if checkpoint_path:
            save_model_checkpoint(checkpoint_path, model, state, cfg,
                                  next_epoch=epoch + 1, best_val=best_val,
                                  bad_epochs=bad_epochs)
        if early_stopping and eval_fn is not None and bad_epochs >= cfg.patience:
            break
    return FitResult(history=history, best_val=best_val, epochs_run=len(history))


# ---------------------------------------------------------------------------
# checkpoint glue
# ---------------------------------------------------------------------------

def save_model_checkpoint(path, model, state, cfg, next_epoch, best_val=-1.0,
                          bad_epochs=0):
    blocks = {}
    for name, p in model.named_params():
        blocks[f"param:{name}"] = p.data
    for name, m in state.m.items():
        blocks[f"adam.m:{name}"] = m
        blocks[f"adam.v:{name}"] = state.v[name]
    meta = {
        "model": model.config.to_json_dict(),
        "train": dict(asdict(cfg), counts_per_length=list(cfg.counts_per_length)),
        "adam": {"beta1": state.beta1, "beta2": state.beta2, "eps": state.eps,
                 "step": state.step},
        "next_epoch": next_epoch,
        "best_val": best_val,
        "bad_epochs": bad_epochs,
    }
    save_checkpoint(path, meta, blocks)


def load_model_checkpoint(path):
    """-> (model, optimizer state, TrainConfig, extras dict)."""
    meta, blocks = load_checkpoint(path)
    mc = ModelConfig(**meta["model"])
    model = PathSageModel.init(mc, rng_for(0))
    for name, p in model.named_params():
        stored = blocks[f"param:{name}"]
        if stored.shape != p.data.shape:
            raise ShapeMismatch(f"checkpoint block {name}", stored.shape, p.data.shape)
        p.data = stored.copy()
    adam_meta = meta["adam"]
    state = OptimizerState(beta1=adam_meta["beta1"], beta2=adam_meta["beta2"],
                           eps=adam_meta["eps"], step=adam_meta["step"])
    for key, arr in blocks.items():
        if key.startswith("adam.m:"):
            state.m[key[len("adam.m:"):]] = arr.copy()
        elif key.startswith("adam.v:"):
            state.v[key[len("adam.v:"):]] = arr.copy()
    cfg = TrainConfig(**dict(meta["train"],
                             counts_per_length=tuple(meta["train"]["counts_per_length"])))
    extras = {"next_epoch": meta["next_epoch"], "best_val": meta["best_val"],
              "bad_epochs": meta["bad_epochs"]}
    return model, state, cfg, extras

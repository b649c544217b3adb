"""Immutable graph storage: CSR adjacency, node features, labels, splits.

Dataset directory layout:
    meta.json     {"num_nodes", "feature_dim", "num_classes", "task", "directed"}
    edges.csv     one `src,dst` per line, 0-based, no header
    features.bin  magic "PSGF", u32 version, u64 rows, u64 cols, f32 LE row-major
    labels.csv    single_label: `node,label`; multi_label: `node,l1;l2;...`
    splits.json   {"train": [...], "val": [...], "test": [...]}
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatch,
    IndexOutOfRange,
    MalformedRecord,
    MissingFile,
    SplitOverlap,
)

FEATURES_MAGIC = b"PSGF"
FEATURES_VERSION = 1

SINGLE_LABEL = "single_label"
MULTI_LABEL = "multi_label"


@dataclass(frozen=True)
class Graph:
    num_nodes: int
    offsets: np.ndarray      # int64, len num_nodes + 1
    neighbors: np.ndarray    # int64 CSR column indices, sorted per node
    features: np.ndarray     # float32, [num_nodes, F]
    directed: bool

    @property
    def feature_dim(self):
        return self.features.shape[1]

    def degree(self, u):
        return int(self.offsets[u + 1] - self.offsets[u])


@dataclass(frozen=True)
class LabelSet:
    task: str
    num_classes: int
    labels: np.ndarray  # single: int64 [N]; multi: uint8 [N, num_classes]

    def of(self, u):
        return self.labels[u]


@dataclass(frozen=True)
class SplitMasks:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


def neighbors_of(g: Graph, u) -> np.ndarray:
    """Read-only CSR slice of u's neighbors (O(1))."""
    if not 0 <= u < g.num_nodes:
        raise IndexOutOfRange(f"node {u} not in [0, {g.num_nodes})")
    return g.neighbors[g.offsets[u]:g.offsets[u + 1]]


def build_csr(num_nodes, edges, directed):
    """Build sorted CSR from an edge list; symmetrize when undirected and
    give isolated nodes a self-loop so random walks never stall."""
    src = np.asarray([e[0] for e in edges], dtype=np.int64)
    dst = np.asarray([e[1] for e in edges], dtype=np.int64)
    if len(src) and (src.min() < 0 or dst.min() < 0 or src.max() >= num_nodes or dst.max() >= num_nodes):
        raise IndexOutOfRange("edge endpoint outside [0, num_nodes)")
    if not directed:
        src, dst = np.concatenate([src, dst]), np.concatenate([dst, src])
    pairs = np.unique(np.stack([src, dst], axis=1), axis=0) if len(src) else np.empty((0, 2), np.int64)
    degrees = np.bincount(pairs[:, 0], minlength=num_nodes)
    isolated = np.flatnonzero(degrees == 0)
    if len(isolated):
        loops = np.stack([isolated, isolated], axis=1)
        pairs = np.concatenate([pairs, loops], axis=0)
        order = np.lexsort((pairs[:, 1], pairs[:, 0]))
        pairs = pairs[order]
        degrees = np.bincount(pairs[:, 0], minlength=num_nodes)
    offsets = np.zeros(num_nodes + 1, dtype=np.int64)
    np.cumsum(degrees, out=offsets[1:])
    return offsets, pairs[:, 1].copy()


def _require(path: Path):
    if not path.is_file():
        raise MissingFile(str(path))
    return path


def read_features_bin(path: Path) -> np.ndarray:
    with open(_require(path), "rb") as fh:
        header = fh.read(24)
        if len(header) < 24 or header[:4] != FEATURES_MAGIC:
            raise MalformedRecord(path, 0, "bad features header")
        version, rows, cols = struct.unpack("<IQQ", header[4:])
        if version != FEATURES_VERSION:
            raise MalformedRecord(path, 0, f"unsupported features version {version}")
        data = np.fromfile(fh, dtype="<f4", count=rows * cols)
    if data.size != rows * cols:
        raise MalformedRecord(path, 0, "truncated feature payload")
    return data.reshape(rows, cols)


def write_features_bin(path: Path, features: np.ndarray):
    features = np.ascontiguousarray(features, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(FEATURES_MAGIC)
        fh.write(struct.pack("<IQQ", FEATURES_VERSION, features.shape[0], features.shape[1]))
        features.tofile(fh)


def _read_edges(path: Path, num_nodes):
    edges = []
    with open(_require(path)) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise MalformedRecord(path, line_no, f"expected `src,dst`, got {line!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise MalformedRecord(path, line_no, f"non-integer endpoint in {line!r}") from None
            if not (0 <= u < num_nodes and 0 <= v < num_nodes):
                raise IndexOutOfRange(f"{path}:{line_no}: edge ({u},{v}) outside [0,{num_nodes})")
            edges.append((u, v))
    return edges


def _read_labels(path: Path, num_nodes, num_classes, task):
    if task == SINGLE_LABEL:
        labels = np.full(num_nodes, -1, dtype=np.int64)
    else:
        labels = np.zeros((num_nodes, num_classes), dtype=np.uint8)
    with open(_require(path)) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",", 1)
            if len(parts) != 2:
                raise MalformedRecord(path, line_no, f"expected `node,label`, got {line!r}")
            try:
                node = int(parts[0])
            except ValueError:
                raise MalformedRecord(path, line_no, f"non-integer node in {line!r}") from None
            if not 0 <= node < num_nodes:
                raise IndexOutOfRange(f"{path}:{line_no}: node {node} outside [0,{num_nodes})")
            if task == SINGLE_LABEL:
                try:
                    lab = int(parts[1])
                except ValueError:
                    raise MalformedRecord(path, line_no, f"non-integer label in {line!r}") from None
                if not 0 <= lab < num_classes:
                    raise IndexOutOfRange(f"{path}:{line_no}: label {lab} outside [0,{num_classes})")
                labels[node] = lab
            else:
                field = parts[1].strip()
                for tok in (field.split(";") if field else []):
                    try:
                        lab = int(tok)
                    except ValueError:
                        raise MalformedRecord(path, line_no, f"non-integer label id {tok!r}") from None
                    if not 0 <= lab < num_classes:
                        raise IndexOutOfRange(f"{path}:{line_no}: label {lab} outside [0,{num_classes})")
                    labels[node, lab] = 1
    if task == SINGLE_LABEL and (labels < 0).any():
        missing = int(np.flatnonzero(labels < 0)[0])
        raise MalformedRecord(path, 0, f"node {missing} has no label")
    return labels


def _read_splits(path: Path, num_nodes):
    with open(_require(path)) as fh:
        raw = json.load(fh)
    out = {}
    for name in ("train", "val", "test"):
        idx = np.asarray(raw.get(name, []), dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= num_nodes):
            raise IndexOutOfRange(f"{name} split index outside [0,{num_nodes})")
        if len(np.unique(idx)) != len(idx):
            raise SplitOverlap(f"duplicate indices inside {name} split")
        out[name] = np.sort(idx)
    for a, b in (("train", "val"), ("train", "test"), ("val", "test")):
        if np.intersect1d(out[a], out[b]).size:
            raise SplitOverlap(f"{a} and {b} splits overlap")
    if out["train"].size == 0:
        raise SplitOverlap("train split is empty")
    return SplitMasks(out["train"], out["val"], out["test"])


def load_dataset(dir_path):
    """Load and validate a dataset directory -> (Graph, LabelSet, SplitMasks)."""
    root = Path(dir_path)
    with open(_require(root / "meta.json")) as fh:
        meta = json.load(fh)
    num_nodes = int(meta["num_nodes"])
    feature_dim = int(meta["feature_dim"])
    num_classes = int(meta["num_classes"])
    task = meta["task"]
    if task not in (SINGLE_LABEL, MULTI_LABEL):
        raise MalformedRecord(root / "meta.json", 0, f"unknown task {task!r}")
    directed = bool(meta.get("directed", False))

    features = read_features_bin(root / "features.bin")
    if features.shape[0] != num_nodes:
        raise DimensionMismatch(f"features rows {features.shape[0]} != num_nodes {num_nodes}")
    if features.shape[1] != feature_dim:
        raise DimensionMismatch(f"features cols {features.shape[1]} != feature_dim {feature_dim}")

    edges = _read_edges(root / "edges.csv", num_nodes)
    offsets, neighbors = build_csr(num_nodes, edges, directed)
    graph = Graph(num_nodes=num_nodes, offsets=offsets, neighbors=neighbors,
                  features=features, directed=directed)
    labels = LabelSet(task=task, num_classes=num_classes,
                      labels=_read_labels(root / "labels.csv", num_nodes, num_classes, task))
    splits = _read_splits(root / "splits.json", num_nodes)
    return graph, labels, splits


def write_dataset(dir_path, edges, features, labels, splits, task, num_classes, directed=False):
    """Write a dataset directory in the canonical on-disk layout."""
    root = Path(dir_path)
    root.mkdir(parents=True, exist_ok=True)
    features = np.asarray(features, dtype=np.float32)
    num_nodes = features.shape[0]
    meta = {"num_nodes": num_nodes, "feature_dim": int(features.shape[1]),
            "num_classes": int(num_classes), "task": task, "directed": bool(directed)}
    (root / "meta.json").write_text(json.dumps(meta, sort_keys=True) + "\n")
    with open(root / "edges.csv", "w") as fh:
        for u, v in edges:
            fh.write(f"{u},{v}\n")
    write_features_bin(root / "features.bin", features)
    with open(root / "labels.csv", "w") as fh:
        if task == SINGLE_LABEL:
            for node, lab in enumerate(labels):
                fh.write(f"{node},{int(lab)}\n")
        else:
            for node, row in enumerate(labels):
                pos = ";".join(str(i) for i in np.flatnonzero(row))
                fh.write(f"{node},{pos}\n")
    (root / "splits.json").write_text(json.dumps(
        {k: [int(i) for i in v] for k, v in splits.items()}, sort_keys=True) + "\n")
    return root

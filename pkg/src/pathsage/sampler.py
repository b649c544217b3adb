"""Random path sampling: fixed-count uniform random walks per length.

For a central node c and a plan (depth s, counts [n_1..n_s]) the sampler
draws, for each length l, exactly n_l independent walks of l steps. Every
step picks uniformly among the current node's CSR neighbors; revisits and
backtracking are allowed. Each stored sequence is [c, v_1, ..., v_l].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IndexOutOfRange, InvalidPlan
from .graph import Graph

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


@dataclass(frozen=True)
class SamplePlan:
    depth_s: int
    counts_per_length: tuple

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts_per_length)
        object.__setattr__(self, "counts_per_length", counts)
        if self.depth_s < 1:
            raise InvalidPlan(f"depth {self.depth_s} < 1")
        if len(counts) != self.depth_s:
            raise InvalidPlan(f"{len(counts)} counts for depth {self.depth_s}")
        if any(c < 1 for c in counts):
            raise InvalidPlan(f"counts must be >= 1, got {counts}")


@dataclass(frozen=True)
class PathBatch:
    central: int
    paths_by_length: tuple  # index l-1 -> int64 array [n_l, l+1]


def _splitmix64(x):
    x = (x + _GOLDEN) & np.uint64(0xFFFFFFFFFFFFFFFF)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x &= np.uint64(0xFFFFFFFFFFFFFFFF)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    x &= np.uint64(0xFFFFFFFFFFFFFFFF)
    return x ^ (x >> np.uint64(31))


def derive_sample_seed(global_seed, epoch, node):
    """64-bit mix of (global_seed, epoch, node); stable and decorrelated.

    Re-running an epoch reproduces identical batches; distinct triples give
    independent walk streams.
    """
    with np.errstate(over="ignore"):
        x = np.uint64(global_seed) & np.uint64(0xFFFFFFFFFFFFFFFF)
        x = _splitmix64(x ^ (np.uint64(epoch) * _GOLDEN))
        x = _splitmix64(x ^ (np.uint64(node) * _GOLDEN))
    return int(x)


def sample_paths(g: Graph, central, plan: SamplePlan, rng) -> PathBatch:
    """Run Algorithm-style random walks for one central node.

    Deterministic given (graph, central, plan, rng seed). Walks within a
    length bucket advance in lockstep off vectorized uniform draws.
    """
    if not 0 <= central < g.num_nodes:
        raise IndexOutOfRange(f"central node {central} not in [0, {g.num_nodes})")
    offsets, neighbors = g.offsets, g.neighbors
    buckets = []
    for l in range(1, plan.depth_s + 1):
        n_l = plan.counts_per_length[l - 1]
        walks = np.empty((n_l, l + 1), dtype=np.int64)
        walks[:, 0] = central
        current = np.full(n_l, central, dtype=np.int64)
        for step in range(1, l + 1):
            start = offsets[current]
            deg = offsets[current + 1] - start
            pick = rng.integers(0, deg)  # per-walk uniform over each degree
            current = neighbors[start + pick]
            walks[:, step] = current
        buckets.append(walks)
    return PathBatch(central=int(central), paths_by_length=tuple(buckets))


def rng_for(seed):
    """Deterministic generator for a derived seed."""
    return np.random.Generator(np.random.PCG64(np.uint64(seed)))

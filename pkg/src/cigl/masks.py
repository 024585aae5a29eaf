"""Sparse-topology machinery.

The persistent (deterministic) mask fixes which weights exist; it is
updated at intervals by pruning small-magnitude weights and regrowing
positions with large dense gradients, preserving the nonzero count
exactly. A second, per-iteration Bernoulli mask temporarily drops a small
fraction of the active weights. Late-training snapshots of the doubly
masked weights are folded into a running mean.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SparsityPlan:
    """Global target sparsity plus the per-layer allocation realizing it."""

    global_sparsity: float
    mode: str  # "uniform" | "erk"
    layer_sparsities: tuple[float, ...]


def erk_allocate(shapes, global_sparsity: float) -> list[float]:
    """Per-layer sparsities with density proportional to (n_in + n_out) / (n_in * n_out).

    Densities that would exceed 1 are clipped to 1 and their surplus
    nonzero budget is redistributed over the remaining layers.
    """
    if not 0.0 <= global_sparsity < 1.0:
        raise ValueError("global sparsity must be in [0, 1)")
    numels = [int(np.prod(s)) for s in shapes]
    raw = [(s[0] + s[1]) / (s[0] * s[1]) for s in shapes]
    if len(shapes) == 1:
        return [global_sparsity]

    budget = (1.0 - global_sparsity) * sum(numels)
    clipped: set[int] = set()
    scale = 0.0
    while True:
        rest = [i for i in range(len(shapes)) if i not in clipped]
        rest_budget = budget - sum(numels[i] for i in clipped)
        if not rest:
            # every layer saturated at density 1; only valid if no budget remains
            if rest_budget > 1e-6:
                raise ValueError("infeasible sparsity budget: all layers clipped to dense")
            break
        if rest_budget <= 0:
            raise ValueError("infeasible sparsity budget after clipping dense layers")
        scale = rest_budget / sum(raw[i] * numels[i] for i in rest)
        over = [i for i in rest if scale * raw[i] > 1.0 + 1e-12]
        if not over:
            break
        clipped.update(over)

    densities = [1.0 if i in clipped else min(scale * raw[i], 1.0) for i in range(len(shapes))]
    return [1.0 - d for d in densities]


def build_sparsity_plan(shapes, global_sparsity, mode="uniform", exclude=()) -> SparsityPlan:
    """Allocation over maskable layers; excluded layer indices stay dense."""
    if not 0.0 <= global_sparsity < 1.0:
        raise ValueError("global sparsity must be in [0, 1)")
    if mode not in ("uniform", "erk"):
        raise ValueError(f"unknown sparsity mode {mode!r}")
    exclude = set(exclude)
    maskable = [i for i in range(len(shapes)) if i not in exclude]
    per_layer = [0.0] * len(shapes)
    if mode == "uniform":
        for i in maskable:
            per_layer[i] = global_sparsity
    else:
        alloc = erk_allocate([shapes[i] for i in maskable], global_sparsity)
        for i, s in zip(maskable, alloc):
            per_layer[i] = s
    return SparsityPlan(global_sparsity, mode, tuple(per_layer))


@dataclass
class DeterministicMask:
    """Per-layer boolean topology masks plus their fixed nonzero targets."""

    layers: list[np.ndarray]
    target_nnz: tuple[int, ...]

    def nnz(self) -> tuple[int, ...]:
        return tuple(int(np.count_nonzero(m)) for m in self.layers)

    def numel(self) -> int:
        return sum(m.size for m in self.layers)

    def sparsity(self) -> float:
        return 1.0 - sum(self.nnz()) / self.numel()

    def copy(self) -> "DeterministicMask":
        return DeterministicMask([m.copy() for m in self.layers], self.target_nnz)


def init_mask(shapes, plan: SparsityPlan, rng: np.random.Generator) -> DeterministicMask:
    """Random topology: per layer, round((1 - s_l) * numel) positions set,
    drawn uniformly without replacement. Nonzero counts round half to even."""
    if len(shapes) != len(plan.layer_sparsities):
        raise ValueError("plan does not cover all layers")
    layers, targets = [], []
    for li, (shape, s) in enumerate(zip(shapes, plan.layer_sparsities)):
        numel = int(np.prod(shape))
        keep = int(round((1.0 - s) * numel))
        if keep <= 0:
            raise ValueError(f"layer {li}: sparsity {s} leaves no active weights")
        flat = np.zeros(numel, dtype=bool)
        flat[rng.choice(numel, size=keep, replace=False)] = True
        layers.append(flat.reshape(shape))
        targets.append(keep)
    return DeterministicMask(layers, tuple(targets))


def sample_random_mask(mask: DeterministicMask, keep_prob: float, rng: np.random.Generator):
    """Bernoulli(keep_prob) over the active positions of the topology mask.

    Positions inactive in the topology are 0 by convention. Returns one
    boolean array per layer.
    """
    if not 0.0 <= keep_prob <= 1.0:
        raise ValueError("keep probability must be in [0, 1]")
    out = []
    for m in mask.layers:
        z = np.zeros_like(m)
        n_active = int(np.count_nonzero(m))
        z[m] = rng.random(n_active) < keep_prob
        out.append(z)
    return out


def ones_mask_like(mask: DeterministicMask):
    """All-ones per-layer arrays (the degenerate random mask)."""
    return [np.ones_like(m) for m in mask.layers]


def apply_masks(w: np.ndarray, m: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Elementwise w * m * z; the input weight array is not modified."""
    if not (w.shape == m.shape == z.shape):
        raise ValueError(f"shape mismatch: {w.shape}, {m.shape}, {z.shape}")
    return w * m * z


def mask_update_fraction(step: int, alpha: float, t_end: int) -> float:
    """Cosine-annealed prune/regrow fraction: alpha/2 * (1 + cos(pi * step / t_end))."""
    if not 0 <= step <= t_end:
        raise ValueError("step must be in [0, t_end]")
    return alpha / 2.0 * (1.0 + math.cos(math.pi * step / t_end))


def update_deterministic_mask(weights, dense_grads, mask: DeterministicMask,
                              fraction: float) -> DeterministicMask:
    """Prune-and-regrow update of the topology, preserving nonzero counts.

    Per layer, k = floor(fraction * nnz): the k active positions with the
    smallest |weight| are deactivated and the k inactive positions with the
    largest |gradient| are activated. Ties resolve to the lowest flat
    row-major index. k is clamped (with a warning) when fewer than k
    inactive positions exist. Pruning looks at the persistent weights, not
    the per-iteration masked product.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must be in [0, 1]")
    new_layers = []
    for li, (w, g, m) in enumerate(zip(weights, dense_grads, mask.layers)):
        flat_m = m.ravel()
        active = np.flatnonzero(flat_m)
        inactive = np.flatnonzero(~flat_m)
        k = int(fraction * active.size)
        if k > inactive.size:
            log.warning("layer %d: prune/regrow count %d clamped to %d inactive positions",
                        li, k, inactive.size)
            k = inactive.size
        new = flat_m.copy()
        if k > 0:
            drop = np.argsort(np.abs(w.ravel()[active]), kind="stable")[:k]
            new[active[drop]] = False
            grow = np.argsort(-np.abs(g.ravel()[inactive]), kind="stable")[:k]
            new[inactive[grow]] = True
        new_layers.append(new.reshape(m.shape))
    return DeterministicMask(new_layers, mask.target_nnz)


@dataclass
class WmaAccumulator:
    """Running elementwise mean of snapshot tensor sets (float64 accumulation)."""

    means: list[np.ndarray] | None = None
    n_models: int = 0


def wma_update(acc: WmaAccumulator, snapshot) -> WmaAccumulator:
    """Fold one snapshot (a list of arrays) into the running mean."""
    snap = [np.asarray(a, dtype=np.float64) for a in snapshot]
    if acc.means is None:
        acc.means = [a.copy() for a in snap]
        acc.n_models = 1
        return acc
    if len(snap) != len(acc.means):
        raise ValueError("snapshot tensor count changed between updates")
    n = acc.n_models
    for i, (mean, a) in enumerate(zip(acc.means, snap)):
        if mean.shape != a.shape:
            raise ValueError(f"snapshot tensor {i}: shape {a.shape} vs {mean.shape}")
        acc.means[i] = (mean * n + a) / (n + 1)
    acc.n_models = n + 1
    return acc

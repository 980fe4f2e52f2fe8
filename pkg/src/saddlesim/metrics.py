"""Convergence measures: distance to a reference saddle, duality gap,
averaged operator norm, and steady-state error floors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from saddlesim.consensus import consensus_error
from saddlesim.core import Box, IteratePoint, ProblemInstance, project
from saddlesim.problems import gap_bilinear

__all__ = ["MetricSuite", "dist_sq", "avg_grad_norm_sq", "error_floor"]


def _as_vector(z) -> np.ndarray:
    if isinstance(z, IteratePoint):
        return z.z
    return np.asarray(z, dtype=float)


def dist_sq(z, z_star) -> float:
    """Squared Euclidean distance ||z - z*||^2."""
    z, z_star = _as_vector(z), _as_vector(z_star)
    if z.shape != z_star.shape:
        raise ValueError(f"dimension mismatch: {z.shape} vs {z_star.shape}")
    d = z - z_star
    return float(np.dot(d, d))


def avg_grad_norm_sq(trajectory, problem: ProblemInstance) -> float:
    """Mean of ||F(z)||^2 along a trajectory, using exact operators."""
    points = [_as_vector(z) for z in trajectory]
    if not points:
        raise ValueError("trajectory is empty")
    total = 0.0
    for z in points:
        f = problem.mean_operator(z)
        total += float(np.dot(f, f))
    return total / len(points)


@dataclass(frozen=True)
class MetricSuite:
    """Selection of metrics a runner records at each checkpoint.

    dist_sq needs a reference point; the gap needs a bilinear problem on a
    box (the iterate is projected before the gap is evaluated, since the gap
    certifies feasible points only).
    """

    reference: np.ndarray | None = None
    want_gap: bool = False
    want_grad_norm: bool = True
    floor_window: float = 0.2

    def __post_init__(self):
        if self.reference is not None:
            ref = np.asarray(_as_vector(self.reference), dtype=float)
            ref.setflags(write=False)
            object.__setattr__(self, "reference", ref)
        if not 0.0 < self.floor_window <= 1.0:
            raise ValueError("floor window must be a fraction in (0, 1]")

    def evaluate(self, problem: ProblemInstance, z, node_matrix=None) -> dict:
        z = _as_vector(z)
        out = {"dist_sq": None, "gap": None, "grad_norm_sq": None, "consensus_err": None}
        if self.reference is not None:
            out["dist_sq"] = dist_sq(z, self.reference)
        if self.want_gap and isinstance(problem.feasible_set, Box):
            out["gap"] = gap_bilinear(problem, project(problem.feasible_set, z))
        if self.want_grad_norm:
            f = problem.mean_operator(z)
            out["grad_norm_sq"] = float(np.dot(f, f))
        if node_matrix is not None:
            out["consensus_err"] = consensus_error(node_matrix)
        return out


def error_floor(result, metric: str, window: float = 0.2) -> float:
    """Steady-state level of a metric: the median over the trailing window.

    The median is robust to the oscillation stochastic runs settle into.
    Requires at least 10 checkpoints in the window.
    """
    checkpoints = result.checkpoints if hasattr(result, "checkpoints") else list(result)
    values = []
    for cp in checkpoints:
        v = getattr(cp, metric) if hasattr(cp, metric) else cp[metric]
        if v is not None:
            values.append(float(v))
    count = int(round(len(values) * window))
    if count < 10:
        raise ValueError(
            f"trailing window holds {count} checkpoints; need at least 10 "
            f"(trajectory has {len(values)} values of {metric!r})"
        )
    return float(np.median(values[-count:]))

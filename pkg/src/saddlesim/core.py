"""Domain types for distributed saddle-point problems.

A saddle-point problem min_x max_y f(x, y) is handled through its monotone
operator F(z) = (grad_x f, -grad_y f) evaluated on the stacked variable
z = (x, y).  The types here carry the per-node operators, the feasible set
with its projection rule, and the stochastic first-order oracle used by the
algorithm runners.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np

__all__ = [
    "IteratePoint",
    "Unconstrained",
    "Box",
    "Ball",
    "FeasibleSet",
    "BilinearOperator",
    "RegularizedOperator",
    "LowerBoundPiece",
    "LocalOperator",
    "ProblemInstance",
    "StochasticOracle",
    "project",
    "eval_operator",
    "sample_batch",
    "estimate_heterogeneity",
]


def _readonly(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


def _check_dim(z: np.ndarray, dim: int, what: str) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape != (dim,):
        raise ValueError(f"{what}: expected vector of dimension {dim}, got shape {z.shape}")
    return z


@dataclass(frozen=True)
class IteratePoint:
    """A point z = (x, y) stored as one concatenated vector."""

    z: np.ndarray
    n_x: int
    n_y: int

    def __post_init__(self):
        object.__setattr__(self, "z", _readonly(self.z))
        if self.z.shape != (self.n_x + self.n_y,):
            raise ValueError(
                f"iterate has dimension {self.z.shape}, expected ({self.n_x + self.n_y},)"
            )
        if not np.all(np.isfinite(self.z)):
            raise ValueError("iterate contains non-finite entries")

    @property
    def x(self) -> np.ndarray:
        return self.z[: self.n_x]

    @property
    def y(self) -> np.ndarray:
        return self.z[self.n_x :]


# ---------------------------------------------------------------------------
# Feasible sets


@dataclass(frozen=True)
class Unconstrained:
    dim: int

    @property
    def diameter(self) -> float:
        return math.inf

    def project(self, z: np.ndarray) -> np.ndarray:
        return _check_dim(z, self.dim, "project")


@dataclass(frozen=True)
class Box:
    """Axis-aligned box; projection is coordinatewise clamping."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lower", _readonly(self.lower))
        object.__setattr__(self, "upper", _readonly(self.upper))
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise ValueError("box bounds must be 1-d arrays of equal length")
        if np.any(self.lower > self.upper):
            raise ValueError("box requires lower <= upper coordinatewise")

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    def project(self, z: np.ndarray) -> np.ndarray:
        z = _check_dim(z, self.dim, "project")
        return np.clip(z, self.lower, self.upper)

    @classmethod
    def symmetric(cls, dim: int, half_width: float = 1.0) -> "Box":
        b = half_width * np.ones(dim)
        return cls(-b, b)


@dataclass(frozen=True)
class Ball:
    """Euclidean ball; projection is radial rescaling toward the center."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _readonly(self.center))
        if self.radius <= 0:
            raise ValueError("ball radius must be positive")

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def project(self, z: np.ndarray) -> np.ndarray:
        p = _check_dim(z, self.dim, "project")
        # Rescale until the norm test passes so that re-projection is a
        # bitwise no-op even when rounding leaves the norm an ulp outside.
        while True:
            d = p - self.center
            n = float(np.linalg.norm(d))
            if n <= self.radius:
                return p
            p = self.center + d * (self.radius / n)


FeasibleSet = Union[Unconstrained, Box, Ball]


def project(feasible_set: FeasibleSet, z: np.ndarray) -> np.ndarray:
    """Euclidean projection of z onto the feasible set."""
    return feasible_set.project(z)


# ---------------------------------------------------------------------------
# Local operators


def _split(z: np.ndarray, n_x: int):
    return z[:n_x], z[n_x:]


@dataclass(frozen=True)
class BilinearOperator:
    """Operator of f(x, y) = x^T A y + b^T x + c^T y.

    F(z) = (A y + b, -(A^T x + c)); linear in z when b = c = 0.
    """

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "a", _readonly(self.a))
        object.__setattr__(self, "b", _readonly(self.b))
        object.__setattr__(self, "c", _readonly(self.c))
        nx, ny = self.a.shape
        if self.b.shape != (nx,) or self.c.shape != (ny,):
            raise ValueError("coefficient vectors do not match the matrix shape")

    @property
    def n_x(self) -> int:
        return self.a.shape[0]

    @property
    def n_y(self) -> int:
        return self.a.shape[1]

    @property
    def dim(self) -> int:
        return self.n_x + self.n_y

    def __call__(self, z: np.ndarray) -> np.ndarray:
        x, y = _split(_check_dim(z, self.dim, "operator"), self.n_x)
        return np.concatenate([self.a @ y + self.b, -(self.a.T @ x + self.c)])


@dataclass(frozen=True)
class RegularizedOperator:
    """A local operator shifted by modulus * (z - anchor).

    Adding the shift to every node of a monotone problem makes the averaged
    operator strongly monotone with the given modulus.
    """

    inner: "LocalOperator"
    modulus: float
    anchor: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "anchor", _readonly(self.anchor))
        if self.anchor.shape != (self.inner.dim,):
            raise ValueError("anchor dimension does not match the inner operator")

    @property
    def n_x(self) -> int:
        return self.inner.n_x

    @property
    def n_y(self) -> int:
        return self.inner.n_y

    @property
    def dim(self) -> int:
        return self.inner.dim

    def __call__(self, z: np.ndarray) -> np.ndarray:
        z = _check_dim(z, self.dim, "operator")
        return self.inner(z) + self.modulus * (z - self.anchor)


def chain_matrix(n: int, offset: int) -> np.ndarray:
    """Upper bidiagonal n x n matrix with unit diagonal and -2 above it on
    every second row starting at `offset` (0 or 1)."""
    a = np.eye(n)
    for i in range(offset, n - 1, 2):
        a[i, i + 1] = -2.0
    return a


@dataclass(frozen=True)
class LowerBoundPiece:
    """One node's share of the adversarial chain-structured instance.

    kind "driver" couples coordinate pairs (2, 3), (4, 5), ... and carries the
    constant forcing term that seeds the first y coordinate; "bridge" couples
    pairs (1, 2), (3, 4), ...; "idle" is the plain quadratic.  `scale` is the
    reweighting that makes the node average equal the global objective.
    """

    kind: str
    n: int
    lipschitz: float
    mu: float
    scale: float = 1.0
    _matrix: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("driver", "bridge", "idle"):
            raise ValueError(f"unknown piece kind {self.kind!r}")
        if not self.lipschitz > self.mu > 0:
            raise ValueError("requires lipschitz > mu > 0")
        if self.kind == "driver":
            object.__setattr__(self, "_matrix", _readonly(chain_matrix(self.n, 1)))
        elif self.kind == "bridge":
            object.__setattr__(self, "_matrix", _readonly(chain_matrix(self.n, 0)))

    @property
    def n_x(self) -> int:
        return self.n

    @property
    def n_y(self) -> int:
        return self.n

    @property
    def dim(self) -> int:
        return 2 * self.n

    def __call__(self, z: np.ndarray) -> np.ndarray:
        x, y = _split(_check_dim(z, self.dim, "operator"), self.n)
        fx = self.mu * x
        fy = self.mu * y
        if self.kind != "idle":
            coef = self.scale * self.lipschitz / 2.0
            fx = fx + coef * (self._matrix @ y)
            fy = fy - coef * (self._matrix.T @ x)
        if self.kind == "driver":
            forcing = self.scale * self.lipschitz**2 / (2.0 * self.mu)
            fy = fy.copy()
            fy[0] -= forcing
        return np.concatenate([fx, fy])


LocalOperator = Union[BilinearOperator, RegularizedOperator, LowerBoundPiece]


# ---------------------------------------------------------------------------
# Problem instance


@dataclass(frozen=True)
class ProblemInstance:
    """M local operators plus the feasible set and certified constants.

    `lipschitz` bounds the averaged operator, `lipschitz_max` every local one,
    `mu` is the strong-monotonicity modulus of the average (0 when merely
    monotone).  `heterogeneity` is the uniform bound on ||F_m - F|| when
    known, else None.
    """

    operators: tuple
    feasible_set: FeasibleSet
    lipschitz: float
    lipschitz_max: float
    mu: float = 0.0
    noise_variance: float = 0.0
    heterogeneity: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "operators", tuple(self.operators))
        if len(self.operators) < 1:
            raise ValueError("need at least one local operator")
        dims = {op.dim for op in self.operators}
        if len(dims) != 1:
            raise ValueError("local operators disagree on dimension")
        if self.feasible_set.dim != self.operators[0].dim:
            raise ValueError("feasible set dimension does not match the operators")
        if self.lipschitz > self.lipschitz_max * (1.0 + 1e-9):
            raise ValueError(
                f"lipschitz={self.lipschitz} exceeds lipschitz_max={self.lipschitz_max}; "
                "the averaged operator cannot be less smooth than the per-node bound"
            )
        if self.noise_variance < 0:
            raise ValueError("noise variance must be nonnegative")

    @property
    def num_nodes(self) -> int:
        return len(self.operators)

    @property
    def n_x(self) -> int:
        return self.operators[0].n_x

    @property
    def n_y(self) -> int:
        return self.operators[0].n_y

    @property
    def dim(self) -> int:
        return self.operators[0].dim

    def operator(self, m: int, z: np.ndarray) -> np.ndarray:
        """Exact value of the m-th local operator."""
        if not 0 <= m < self.num_nodes:
            raise IndexError(f"node index {m} out of range [0, {self.num_nodes})")
        return self.operators[m](z)

    def mean_operator(self, z: np.ndarray) -> np.ndarray:
        """Exact value of the averaged operator F = (1/M) sum F_m."""
        acc = self.operators[0](z)
        for op in self.operators[1:]:
            acc = acc + op(z)
        return acc / self.num_nodes

    def point(self, z: np.ndarray) -> IteratePoint:
        return IteratePoint(z, self.n_x, self.n_y)


def eval_operator(problem: ProblemInstance, m: int, z: np.ndarray) -> np.ndarray:
    """Noiseless evaluation of F_m at z."""
    return problem.operator(m, z)


# ---------------------------------------------------------------------------
# Stochastic oracle


@dataclass(frozen=True)
class StochasticOracle:
    """Additive-Gaussian stochastic oracle with counter-based noise streams.

    Each single evaluation F_m(z, xi) draws an i.i.d. Gaussian vector with
    total variance `noise_variance` (per-coordinate variance sigma^2 / dim),
    keyed by (seed, node, call counter) so the realization is independent of
    evaluation order and node-level parallelism.
    """

    problem: ProblemInstance
    seed: int = 0
    noise_variance: float | None = None

    def __post_init__(self):
        if self.seed < 0:
            raise ValueError("oracle seed must be nonnegative")
        if self.noise_variance is None:
            object.__setattr__(self, "noise_variance", self.problem.noise_variance)
        if self.noise_variance < 0:
            raise ValueError("noise variance must be nonnegative")

    def with_seed(self, seed: int) -> "StochasticOracle":
        return replace(self, seed=seed)

    def noise(self, m: int, counter: int) -> np.ndarray:
        """The noise vector for the given (node, call counter) pair."""
        if self.noise_variance == 0.0:
            return np.zeros(self.problem.dim)
        rng = np.random.default_rng((self.seed, m, counter))
        scale = math.sqrt(self.noise_variance / self.problem.dim)
        return rng.standard_normal(self.problem.dim) * scale

    def sample(self, m: int, z: np.ndarray, counter: int) -> np.ndarray:
        """One noisy evaluation F_m(z, xi) at the given stream position."""
        value = self.problem.operator(m, z)
        if self.noise_variance == 0.0:
            return value
        return value + self.noise(m, counter)

    def sample_batch(self, m: int, z: np.ndarray, batch_size: int, counter: int) -> np.ndarray:
        """Mean of `batch_size` independent noisy evaluations at z.

        Consumes stream positions counter, ..., counter + batch_size - 1;
        the caller advances its counter by batch_size.
        """
        if batch_size < 1:
            raise ValueError("batch size must be at least 1")
        value = self.problem.operator(m, z)
        if self.noise_variance == 0.0:
            return value
        total = np.zeros(self.problem.dim)
        for i in range(batch_size):
            total += self.noise(m, counter + i)
        return value + total / batch_size


def sample_batch(
    oracle: StochasticOracle, m: int, z: np.ndarray, batch_size: int, counter: int
) -> np.ndarray:
    """Module-level alias for StochasticOracle.sample_batch."""
    return oracle.sample_batch(m, z, batch_size, counter)


def estimate_heterogeneity(
    problem: ProblemInstance, samples: int, radius: float, seed: int = 0
) -> float:
    """Empirical lower bound on the heterogeneity constant D.

    Maximizes ||F_m(z) - F(z)|| over `samples` points drawn uniformly from
    the ball of the given radius (projected onto the feasible set) and over
    all nodes.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    dim = problem.dim
    worst = 0.0
    for _ in range(samples):
        direction = rng.standard_normal(dim)
        norm = np.linalg.norm(direction)
        if norm == 0.0 or radius == 0.0:
            z = np.zeros(dim)
        else:
            z = direction / norm * radius * rng.uniform() ** (1.0 / dim)
        z = project(problem.feasible_set, z)
        mean = problem.mean_operator(z)
        for m in range(problem.num_nodes):
            dev = float(np.linalg.norm(problem.operator(m, z) - mean))
            worst = max(worst, dev)
    return worst

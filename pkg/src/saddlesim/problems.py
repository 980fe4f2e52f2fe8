"""Problem constructors and reference-solution machinery.

Three families: random bilinear games on a box (the benchmark instance),
their strongly-monotone regularizations, and the adversarial chain-structured
instance whose solution activates one coordinate per communication exchange.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from saddlesim.core import (
    Ball,
    BilinearOperator,
    Box,
    IteratePoint,
    LowerBoundPiece,
    ProblemInstance,
    RegularizedOperator,
    Unconstrained,
    chain_matrix,
    project,
)
from saddlesim.topology import Topology, distance_from_set

__all__ = [
    "gen_bilinear",
    "gen_rotation",
    "regularize",
    "LowerBoundSpec",
    "gen_lower_bound_instance",
    "lb_global_operator",
    "lb_reference_solution",
    "averaged_chain_matrix",
    "averaged_bilinear_parts",
    "gap_bilinear",
    "solve_reference",
    "ReferenceSolveError",
    "problem_to_text",
    "problem_from_text",
]


def _random_spd(rng: np.random.Generator, n: int, lambda_max: float) -> np.ndarray:
    """Random SPD matrix Q diag(lam) Q^T with spectrum in (0, lambda_max] and
    the top eigenvalue pinned at lambda_max exactly."""
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    q = q * np.sign(np.diag(r))
    lam = lambda_max * (1.0 - rng.uniform(0.0, 1.0, size=n))  # in (0, lambda_max]
    lam[0] = lambda_max
    a = (q * lam) @ q.T
    return 0.5 * (a + a.T)


def gen_bilinear(
    n: int,
    num_nodes: int,
    lambda_max: float,
    coef_bound: float,
    seed: int,
    noise_variance: float = 0.0,
) -> ProblemInstance:
    """Random bilinear game on the box [-1, 1]^n x [-1, 1]^n.

    Node m holds f_m = x^T A_m y + b_m^T x + c_m^T y with A_m random SPD
    (top eigenvalue pinned at lambda_max, so every node is exactly
    lambda_max-smooth) and offset coordinates uniform on
    [-coef_bound, coef_bound].
    """
    if n < 1 or num_nodes < 1 or lambda_max <= 0:
        raise ValueError("need n >= 1, num_nodes >= 1, lambda_max > 0")
    rng = np.random.default_rng(seed)
    operators = []
    for _ in range(num_nodes):
        a = _random_spd(rng, n, lambda_max)
        b = rng.uniform(-coef_bound, coef_bound, size=n)
        c = rng.uniform(-coef_bound, coef_bound, size=n)
        operators.append(BilinearOperator(a, b, c))
    mean_a = sum(op.a for op in operators) / num_nodes
    lipschitz = float(np.linalg.norm(mean_a, 2))
    return ProblemInstance(
        operators=tuple(operators),
        feasible_set=Box.symmetric(2 * n),
        lipschitz=min(lipschitz, float(lambda_max)),
        lipschitz_max=float(lambda_max),
        mu=0.0,
        noise_variance=noise_variance,
    )


def gen_rotation(
    n: int, num_nodes: int, strength: float, noise_variance: float = 0.0,
    half_width: float = 1.0,
) -> ProblemInstance:
    """Homogeneous pure-rotation game f_m = strength * x^T y on a box.

    Every mode of the operator rotates at the same rate, which makes this the
    canonical instance where plain descent-ascent spirals outward while the
    extra-step update contracts.
    """
    a = strength * np.eye(n)
    op = BilinearOperator(a, np.zeros(n), np.zeros(n))
    return ProblemInstance(
        operators=tuple([op] * num_nodes),
        feasible_set=Box.symmetric(2 * n, half_width),
        lipschitz=float(strength),
        lipschitz_max=float(strength),
        mu=0.0,
        noise_variance=noise_variance,
        heterogeneity=0.0,
    )


def regularize(
    problem: ProblemInstance, epsilon: float, anchor: np.ndarray | None = None
) -> ProblemInstance:
    """Strongly-monotone surrogate: every local operator gains
    modulus * (z - anchor) with modulus = epsilon / (4 * diameter^2).

    Solving the surrogate to accuracy epsilon / 2 in gap solves the original
    to accuracy epsilon at the same point.
    """
    if epsilon <= 0:
        raise ValueError("target accuracy must be positive")
    diam = problem.feasible_set.diameter
    if not math.isfinite(diam):
        raise ValueError("regularization needs a feasible set with finite diameter")
    if anchor is None:
        anchor = np.zeros(problem.dim)
    modulus = epsilon / (4.0 * diam**2)
    operators = tuple(RegularizedOperator(op, modulus, anchor) for op in problem.operators)
    return ProblemInstance(
        operators=operators,
        feasible_set=problem.feasible_set,
        lipschitz=problem.lipschitz + modulus,
        lipschitz_max=problem.lipschitz_max + modulus,
        mu=problem.mu + modulus,
        noise_variance=problem.noise_variance,
        heterogeneity=problem.heterogeneity,
    )


# ---------------------------------------------------------------------------
# Chain-structured adversarial instance


def averaged_chain_matrix(n: int) -> np.ndarray:
    """Average of the two coupling matrices: unit diagonal, -1 superdiagonal."""
    return 0.5 * (chain_matrix(n, 1) + chain_matrix(n, 0))


@dataclass(frozen=True)
class LowerBoundSpec:
    """Placement recipe for the chain instance.

    `bridge_nodes` hold the even-link coupling piece; `driver_nodes` sit at
    graph distance >= `distance` from them and hold the odd-link piece with
    the constant forcing term.  alpha and q parameterize the geometric
    reference solution.
    """

    n: int
    lipschitz: float
    mu: float
    distance: int
    driver_nodes: frozenset
    bridge_nodes: frozenset

    def __post_init__(self):
        object.__setattr__(self, "driver_nodes", frozenset(self.driver_nodes))
        object.__setattr__(self, "bridge_nodes", frozenset(self.bridge_nodes))
        if self.n < 1:
            raise ValueError("block dimension must be at least 1")
        if not self.lipschitz > self.mu > 0:
            raise ValueError("requires lipschitz > mu > 0")
        if self.distance < 1:
            raise ValueError("placement distance must be at least 1")
        if not self.driver_nodes:
            raise ValueError("driver set must be nonempty")
        if not self.bridge_nodes:
            raise ValueError("bridge set must be nonempty")
        if self.driver_nodes & self.bridge_nodes:
            raise ValueError("driver and bridge sets must be disjoint")
        q = self.q
        if not 0.0 < q < 1.0:
            raise ValueError("geometric ratio q fell outside (0, 1)")
        residual = q * q - (2.0 + self.alpha) * q + 1.0
        if abs(residual) > 1e-12:
            raise ValueError(f"q root residual {residual} exceeds 1e-12")

    @property
    def alpha(self) -> float:
        return 4.0 * self.mu**2 / self.lipschitz**2

    @property
    def q(self) -> float:
        a = self.alpha
        return 0.5 * (2.0 + a - math.sqrt(a * a + 4.0 * a))


def gen_lower_bound_instance(spec: LowerBoundSpec, topology: Topology) -> ProblemInstance:
    """Distribute the chain pieces over the topology's nodes.

    Driver nodes get weight M / (2 |driver|), bridge nodes M / (2 |bridge|),
    so the node average equals the global chain objective exactly.
    """
    m = topology.num_nodes
    for v in spec.driver_nodes | spec.bridge_nodes:
        if not 0 <= v < m:
            raise ValueError(f"node {v} outside the topology")
    for v in spec.driver_nodes:
        d = distance_from_set(topology, spec.bridge_nodes, v)
        if d < spec.distance:
            raise ValueError(
                f"driver node {v} is at distance {d} < {spec.distance} from the bridge set"
            )
    scale_driver = m / (2.0 * len(spec.driver_nodes))
    scale_bridge = m / (2.0 * len(spec.bridge_nodes))
    operators = []
    for v in range(m):
        if v in spec.driver_nodes:
            operators.append(
                LowerBoundPiece("driver", spec.n, spec.lipschitz, spec.mu, scale_driver)
            )
        elif v in spec.bridge_nodes:
            operators.append(
                LowerBoundPiece("bridge", spec.n, spec.lipschitz, spec.mu, scale_bridge)
            )
        else:
            operators.append(LowerBoundPiece("idle", spec.n, spec.lipschitz, spec.mu))
    a_avg = averaged_chain_matrix(spec.n)
    half = 0.5 * spec.lipschitz
    lip_global = math.hypot(spec.mu, half * float(np.linalg.norm(a_avg, 2)))
    lip_nodes = [
        math.hypot(spec.mu, scale_driver * half * float(np.linalg.norm(chain_matrix(spec.n, 1), 2))),
        math.hypot(spec.mu, scale_bridge * half * float(np.linalg.norm(chain_matrix(spec.n, 0), 2))),
        spec.mu,
    ]
    return ProblemInstance(
        operators=tuple(operators),
        feasible_set=Unconstrained(2 * spec.n),
        lipschitz=lip_global,
        lipschitz_max=max(lip_nodes),
        mu=spec.mu,
        noise_variance=0.0,
    )


def lb_global_operator(spec: LowerBoundSpec) -> RegularizedOperator:
    """The averaged operator of the chain instance, built independently."""
    n = spec.n
    forcing = np.zeros(n)
    forcing[0] = spec.lipschitz**2 / (4.0 * spec.mu)
    bilinear = BilinearOperator(0.5 * spec.lipschitz * averaged_chain_matrix(n), np.zeros(n), forcing)
    return RegularizedOperator(bilinear, spec.mu, np.zeros(2 * n))


def lb_reference_solution(spec: LowerBoundSpec):
    """Exact and geometric y-solutions of the chain instance.

    Returns (y_exact, y_approx, bound): y_exact solves the normal equations
    by a direct linear solve, y_approx has coordinates q^i / (1 - q), and
    ||y_approx - y_exact|| <= bound = q^(n+1) / (alpha (1 - q)).
    """
    n = spec.n
    a = averaged_chain_matrix(n)
    alpha, q = spec.alpha, spec.q
    rhs = np.zeros(n)
    rhs[0] = 1.0
    y_exact = np.linalg.solve(a.T @ a + alpha * np.eye(n), rhs)
    y_approx = q ** np.arange(1, n + 1) / (1.0 - q)
    bound = q ** (n + 1) / (alpha * (1.0 - q))
    return y_exact, y_approx, bound


# ---------------------------------------------------------------------------
# Gap function and reference solver


def averaged_bilinear_parts(problem: ProblemInstance):
    """Averaged (A, b, c, modulus, anchor) of a (possibly regularized)
    bilinear problem; raises if any local is not of that shape."""
    mats, offs_b, offs_c = [], [], []
    modulus = None
    anchor = None
    for op in problem.operators:
        mod_m, anchor_m = 0.0, None
        if isinstance(op, RegularizedOperator):
            mod_m, anchor_m, op = op.modulus, op.anchor, op.inner
        if not isinstance(op, BilinearOperator):
            raise ValueError("problem is not bilinear")
        if modulus is None:
            modulus, anchor = mod_m, anchor_m
        elif mod_m != modulus or (anchor_m is None) != (anchor is None) or (
            anchor is not None and not np.array_equal(anchor_m, anchor)
        ):
            raise ValueError("local regularizations disagree")
        mats.append(op.a)
        offs_b.append(op.b)
        offs_c.append(op.c)
    m = problem.num_nodes
    if anchor is None:
        anchor = np.zeros(problem.dim)
    return sum(mats) / m, sum(offs_b) / m, sum(offs_c) / m, modulus, anchor


def gap_bilinear(problem: ProblemInstance, z) -> float:
    """Exact duality gap of a (regularized) bilinear game on a box.

    gap(x, y) = max_{y' in Y} f(x, y') - min_{x' in X} f(x', y), evaluated in
    closed form: the inner problems separate per coordinate (linear on the box
    edges, or clamped scalar quadratics when regularized).  Nonnegative for
    feasible z and zero exactly at a saddle.
    """
    if not isinstance(problem.feasible_set, Box):
        raise ValueError("the closed-form gap is only available on box sets")
    a, b, c, modulus, anchor = averaged_bilinear_parts(problem)
    nx = problem.n_x
    if isinstance(z, IteratePoint):
        z = z.z
    z = np.asarray(z, dtype=float)
    x, y = z[:nx], z[nx:]
    x0, y0 = anchor[:nx], anchor[nx:]
    lo, hi = problem.feasible_set.lower, problem.feasible_set.upper
    lx, ux, ly, uy = lo[:nx], hi[:nx], lo[nx:], hi[nx:]

    v = a.T @ x + c  # linear coefficient of the inner max over y'
    w = a @ y + b  # linear coefficient of the inner min over x'
    if modulus == 0.0:
        best_y = float(np.sum(np.maximum(v * ly, v * uy)))
        best_x = float(np.sum(np.minimum(w * lx, w * ux)))
    else:
        y_star = np.clip(y0 + v / modulus, ly, uy)
        best_y = float(v @ y_star - 0.5 * modulus * np.sum((y_star - y0) ** 2))
        x_star = np.clip(x0 - w / modulus, lx, ux)
        best_x = float(w @ x_star + 0.5 * modulus * np.sum((x_star - x0) ** 2))
    upper = float(b @ x) + 0.5 * modulus * float(np.sum((x - x0) ** 2)) + best_y
    lower = float(c @ y) - 0.5 * modulus * float(np.sum((y - y0) ** 2)) + best_x
    # the true gap is nonnegative; near a saddle the two sides cancel and
    # roundoff can leave a tiny negative, so clamping improves the estimate
    return max(0.0, upper - lower)


class ReferenceSolveError(RuntimeError):
    """Raised when the reference solver runs out of iterations."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


def solve_reference(
    problem: ProblemInstance,
    tol: float = 1e-10,
    max_iters: int = 200_000,
    z0: np.ndarray | None = None,
) -> IteratePoint:
    """Deterministic extra-step solver used as the solution oracle.

    Runs the exact averaged operator with step 1 / (4 L) until the
    fixed-point residual ||z - proj(z - gamma F(z))|| drops below tol; that
    residual certifies the saddle point.
    """
    if problem.mu <= 0 and not math.isfinite(problem.feasible_set.diameter):
        raise ValueError("need mu > 0 or a bounded feasible set")
    gamma = 1.0 / (4.0 * problem.lipschitz)
    z = np.zeros(problem.dim) if z0 is None else np.asarray(z0, dtype=float)
    z = project(problem.feasible_set, z)
    residual = math.inf
    for _ in range(max_iters):
        half = project(problem.feasible_set, z - gamma * problem.mean_operator(z))
        residual = float(np.linalg.norm(z - half))
        if residual <= tol:
            return problem.point(z)
        z = project(problem.feasible_set, z - gamma * problem.mean_operator(half))
    raise ReferenceSolveError(
        f"no saddle point to residual {tol} within {max_iters} iterations "
        f"(last residual {residual:.3e})",
        residual,
    )


# ---------------------------------------------------------------------------
# Text serialization (round-trips bit-exactly via repr floats)


def _vec_line(name: str, vec: np.ndarray) -> str:
    return name + " " + " ".join(repr(float(v)) for v in vec)


def _operator_lines(op) -> list:
    if isinstance(op, BilinearOperator):
        lines = [f"operator bilinear {op.n_x} {op.n_y}"]
        lines.extend(_vec_line("row", row) for row in op.a)
        lines.append(_vec_line("b", op.b))
        lines.append(_vec_line("c", op.c))
        return lines
    if isinstance(op, RegularizedOperator):
        lines = [f"operator regularized {op.modulus!r}", _vec_line("anchor", op.anchor)]
        lines.extend(_operator_lines(op.inner))
        return lines
    if isinstance(op, LowerBoundPiece):
        return [
            f"operator chain {op.kind} {op.n} {op.lipschitz!r} {op.mu!r} {op.scale!r}"
        ]
    raise ValueError(f"cannot serialize operator of type {type(op).__name__}")


def problem_to_text(problem: ProblemInstance) -> str:
    lines = [
        "saddlesim-problem 1",
        f"nodes {problem.num_nodes}",
        f"n_x {problem.n_x}",
        f"n_y {problem.n_y}",
        f"lipschitz {problem.lipschitz!r}",
        f"lipschitz_max {problem.lipschitz_max!r}",
        f"mu {problem.mu!r}",
        f"noise_variance {problem.noise_variance!r}",
        "heterogeneity "
        + ("none" if problem.heterogeneity is None else repr(problem.heterogeneity)),
    ]
    fs = problem.feasible_set
    if isinstance(fs, Unconstrained):
        lines.append(f"set unconstrained {fs.dim}")
    elif isinstance(fs, Box):
        lines.append("set box")
        lines.append(_vec_line("lower", fs.lower))
        lines.append(_vec_line("upper", fs.upper))
    elif isinstance(fs, Ball):
        lines.append(f"set ball {fs.radius!r}")
        lines.append(_vec_line("center", fs.center))
    else:
        raise ValueError(f"cannot serialize set of type {type(fs).__name__}")
    for op in problem.operators:
        lines.extend(_operator_lines(op))
    return "\n".join(lines) + "\n"


def _parse_vec(line: str, name: str) -> np.ndarray:
    head, *vals = line.split()
    if head != name:
        raise ValueError(f"expected {name!r} line, got {line!r}")
    return np.array([float(v) for v in vals])


def _parse_operator(lines: list, pos: int):
    head = lines[pos].split()
    if head[0] != "operator":
        raise ValueError(f"expected operator line, got {lines[pos]!r}")
    if head[1] == "bilinear":
        n_x, n_y = int(head[2]), int(head[3])
        rows = [_parse_vec(lines[pos + 1 + i], "row") for i in range(n_x)]
        b = _parse_vec(lines[pos + 1 + n_x], "b")
        c = _parse_vec(lines[pos + 2 + n_x], "c")
        return BilinearOperator(np.array(rows).reshape(n_x, n_y), b, c), pos + 3 + n_x
    if head[1] == "regularized":
        modulus = float(head[2])
        anchor = _parse_vec(lines[pos + 1], "anchor")
        inner, nxt = _parse_operator(lines, pos + 2)
        return RegularizedOperator(inner, modulus, anchor), nxt
    if head[1] == "chain":
        kind, n = head[2], int(head[3])
        lip, mu, scale = float(head[4]), float(head[5]), float(head[6])
        return LowerBoundPiece(kind, n, lip, mu, scale), pos + 1
    raise ValueError(f"unknown operator kind {head[1]!r}")


def problem_from_text(text: str) -> ProblemInstance:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if lines[0].split() != ["saddlesim-problem", "1"]:
        raise ValueError("unrecognized problem header")

    def scalar(pos, name, conv=float):
        head, val = lines[pos].split(maxsplit=1)
        if head != name:
            raise ValueError(f"expected {name!r} at line {pos}, got {lines[pos]!r}")
        return conv(val)

    num_nodes = scalar(1, "nodes", int)
    scalar(2, "n_x", int), scalar(3, "n_y", int)
    lipschitz = scalar(4, "lipschitz")
    lipschitz_max = scalar(5, "lipschitz_max")
    mu = scalar(6, "mu")
    noise_variance = scalar(7, "noise_variance")
    het_raw = lines[8].split(maxsplit=1)[1]
    heterogeneity = None if het_raw == "none" else float(het_raw)
    set_head = lines[9].split()
    pos = 10
    if set_head[1] == "unconstrained":
        feasible_set: object = Unconstrained(int(set_head[2]))
    elif set_head[1] == "box":
        feasible_set = Box(_parse_vec(lines[10], "lower"), _parse_vec(lines[11], "upper"))
        pos = 12
    elif set_head[1] == "ball":
        feasible_set = Ball(_parse_vec(lines[10], "center"), float(set_head[2]))
        pos = 11
    else:
        raise ValueError(f"unknown set kind {set_head[1]!r}")
    operators = []
    for _ in range(num_nodes):
        op, pos = _parse_operator(lines, pos)
        operators.append(op)
    return ProblemInstance(
        operators=tuple(operators),
        feasible_set=feasible_set,
        lipschitz=lipschitz,
        lipschitz_max=lipschitz_max,
        mu=mu,
        noise_variance=noise_variance,
        heterogeneity=heterogeneity,
    )

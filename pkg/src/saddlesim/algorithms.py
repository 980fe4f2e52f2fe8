"""Distributed extragradient runners and a descent-ascent baseline.

Four runners share the same instrumentation: a server-side minibatch
extra-step method, its gossip-based decentralized variant, a federated
local extra-step method that averages on a schedule, and plain local
descent-ascent (which is expected to diverge on rotation-dominated games
and is reported, not raised, when it does).

All randomness flows through counter-based oracle streams keyed by
(seed, node, call counter), so a run is reproducible bit-for-bit and
independent of how node loops are scheduled.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from saddlesim.consensus import fastmix
from saddlesim.core import ProblemInstance, StochasticOracle, project
from saddlesim.metrics import MetricSuite
from saddlesim.topology import GossipMatrix, Topology

__all__ = [
    "CONVERGED",
    "BUDGET_EXHAUSTED",
    "DIVERGED",
    "Checkpoint",
    "RunResult",
    "CentralizedSchedule",
    "LocalSchedule",
    "run_centralized_extra_step",
    "run_decentralized_extra_step",
    "run_extra_step_local_sgd",
    "run_local_sgda",
]

CONVERGED = "converged"
BUDGET_EXHAUSTED = "budget_exhausted"
DIVERGED = "diverged"

DIVERGENCE_NORM = 1e12


@dataclass(frozen=True)
class CentralizedSchedule:
    """Budgets for the server-side method: K communication rounds, T oracle
    samples per node, and the node-to-server distance r.

    Derived: iterations k = K // r and batch size b = T // (2k); every
    iteration spends r rounds and 2b samples per node.
    """

    comm_budget: int
    oracle_budget: int
    gamma: float
    server_distance: int = 1

    def __post_init__(self):
        if self.comm_budget < 0 or self.oracle_budget < 0:
            raise ValueError("budgets must be nonnegative")
        if self.server_distance < 1:
            raise ValueError("server distance must be at least 1")
        if not self.gamma > 0:
            raise ValueError("step size must be positive")
        if self.iterations < 1:
            raise ValueError(
                "communication budget admits no iteration (K // r = 0); "
                "increase K or reduce the server distance"
            )
        if self.batch_size < 1:
            raise ValueError(
                "batch size T // (2k) fell below 1; reduce the communication "
                "budget K or increase the oracle budget T"
            )

    @property
    def iterations(self) -> int:
        return self.comm_budget // self.server_distance

    @property
    def batch_size(self) -> int:
        return self.oracle_budget // (2 * self.iterations)


@dataclass(frozen=True)
class LocalSchedule:
    """Local-step schedule: T total steps and the set of step indices after
    which all nodes are replaced by their exact average."""

    total_steps: int
    comm_steps: frozenset
    gamma: float

    def __post_init__(self):
        object.__setattr__(self, "comm_steps", frozenset(int(t) for t in self.comm_steps))
        if self.total_steps < 1:
            raise ValueError("need at least one local step")
        if not self.gamma > 0:
            raise ValueError("step size must be positive")
        bad = [t for t in self.comm_steps if not 0 <= t < self.total_steps]
        if bad:
            raise ValueError(f"communication steps {sorted(bad)} outside [0, {self.total_steps})")

    @classmethod
    def uniform(cls, total_steps: int, every: int, gamma: float) -> "LocalSchedule":
        """Synchronize after every `every`-th step (H = every)."""
        if every < 1:
            raise ValueError("averaging period must be at least 1")
        steps = frozenset(range(every - 1, total_steps, every))
        return cls(total_steps, steps, gamma)

    @property
    def max_gap(self) -> int:
        """Largest number of consecutive steps without averaging (H)."""
        marks = sorted(self.comm_steps)
        if not marks:
            return self.total_steps
        gaps = [marks[0] + 1]
        gaps.extend(b - a for a, b in zip(marks, marks[1:]))
        gaps.append(self.total_steps - 1 - marks[-1])
        return max(gaps)

    def theory_gamma(self, lipschitz_max: float) -> float:
        """Step bound under which the strongly monotone guarantees hold."""
        return 1.0 / (21.0 * self.max_gap * lipschitz_max)


@dataclass
class Checkpoint:
    step: int
    comm_rounds: int
    oracle_samples: int
    dist_sq: float | None = None
    gap: float | None = None
    grad_norm_sq: float | None = None
    consensus_err: float | None = None


@dataclass
class RunResult:
    """Instrumented trajectory of one algorithm run.

    `oracle_samples_per_node` counts individual stochastic evaluations
    (2*b*k for the batched methods, 2*T for local extra-step, T for the
    descent-ascent baseline); `local_steps` counts iterations.
    `node_trajectory`, when recorded, holds (comm_rounds, node matrix)
    snapshots for structure probes.
    """

    checkpoints: list
    status: str
    output: np.ndarray
    comm_rounds_used: int
    oracle_samples_per_node: int
    local_steps: int
    virtual_mean: np.ndarray | None = None
    node_trajectory: list | None = None


def _resolve_oracle(problem: ProblemInstance, oracle: StochasticOracle | None, seed: int):
    if oracle is None:
        oracle = StochasticOracle(problem, seed=seed)
    elif oracle.seed != seed:
        oracle = oracle.with_seed(seed)
    if oracle.problem is not problem:
        raise ValueError("oracle is bound to a different problem instance")
    return oracle


def _blown_up(z: np.ndarray) -> bool:
    if not np.all(np.isfinite(z)):
        return True
    return float(np.linalg.norm(z)) > DIVERGENCE_NORM


def _start_point(problem: ProblemInstance, z0) -> np.ndarray:
    z = np.zeros(problem.dim) if z0 is None else np.array(z0, dtype=float)
    return project(problem.feasible_set, z)


def _warn_step(gamma: float, bound: float, label: str) -> None:
    if gamma > bound * (1.0 + 1e-12):
        warnings.warn(
            f"step size {gamma:.3g} exceeds the {label} theory bound {bound:.3g}; "
            "the run proceeds but guarantees do not apply",
            RuntimeWarning,
            stacklevel=3,
        )


def run_centralized_extra_step(
    problem: ProblemInstance,
    oracle: StochasticOracle | None,
    schedule: CentralizedSchedule,
    seed: int,
    metrics: MetricSuite | None = None,
    z0=None,
    checkpoint_every: int = 1,
    record_node_states: bool = False,
) -> RunResult:
    """Server-side minibatch extra-step method.

    Every iteration draws fresh batches on all nodes twice: once at the
    current server iterate for the extrapolation step, once at the
    extrapolated point for the update; the server state is the single
    authoritative iterate.
    """
    oracle = _resolve_oracle(problem, oracle, seed)
    metrics = metrics or MetricSuite()
    _warn_step(schedule.gamma, 1.0 / (4.0 * problem.lipschitz), "1/(4L)")
    k, b, r = schedule.iterations, schedule.batch_size, schedule.server_distance
    gamma = schedule.gamma
    m_nodes = problem.num_nodes
    z = _start_point(problem, z0)

    checkpoints: list = []
    trajectory: list | None = [] if record_node_states else None
    rounds = 0
    samples = 0
    status = BUDGET_EXHAUSTED

    def record(step):
        vals = metrics.evaluate(problem, z)
        checkpoints.append(Checkpoint(step, rounds, samples, **vals))
        if trajectory is not None:
            trajectory.append((rounds, np.tile(z, (m_nodes, 1))))

    record(0)
    for t in range(k):
        base = 2 * b * t
        g = np.zeros(problem.dim)
        for m in range(m_nodes):
            g += oracle.sample_batch(m, z, b, base)
        z_half = project(problem.feasible_set, z - gamma * g / m_nodes)
        g = np.zeros(problem.dim)
        for m in range(m_nodes):
            g += oracle.sample_batch(m, z_half, b, base + b)
        z = project(problem.feasible_set, z - gamma * g / m_nodes)
        rounds += r
        samples += 2 * b
        if _blown_up(z):
            status = DIVERGED
            record(t + 1)
            break
        if (t + 1) % checkpoint_every == 0 or t == k - 1:
            record(t + 1)

    return RunResult(
        checkpoints=checkpoints,
        status=status,
        output=z,
        comm_rounds_used=rounds,
        oracle_samples_per_node=samples,
        local_steps=k,
        node_trajectory=trajectory,
    )


def run_decentralized_extra_step(
    problem: ProblemInstance,
    oracle: StochasticOracle | None,
    topology: Topology,
    gossip: GossipMatrix,
    comm_budget: int,
    oracle_budget: int,
    mix_rounds: int,
    gamma: float,
    seed: int,
    metrics: MetricSuite | None = None,
    z0=None,
    checkpoint_every: int = 1,
    record_node_states: bool = False,
) -> RunResult:
    """Gossip-based extra-step method: local batch steps, an accelerated
    mixing phase of `mix_rounds` gossip rounds, then per-node projection,
    twice per iteration (extrapolation and update).

    Budget accounting follows k = K // P iterations with P rounds charged
    per iteration.
    """
    if topology.num_nodes != problem.num_nodes or gossip.num_nodes != problem.num_nodes:
        raise ValueError("topology, gossip matrix, and problem disagree on node count")
    if mix_rounds < 1:
        raise ValueError("need at least one gossip round per mixing phase")
    k = comm_budget // mix_rounds
    if k < 1:
        raise ValueError("communication budget admits no iteration; increase K or reduce P")
    b = oracle_budget // (2 * k)
    if b < 1:
        raise ValueError(
            "batch size T // (2k) fell below 1; reduce the communication "
            "budget K or increase the oracle budget T"
        )
    oracle = _resolve_oracle(problem, oracle, seed)
    metrics = metrics or MetricSuite()
    _warn_step(gamma, 1.0 / (4.0 * problem.lipschitz), "1/(4L)")
    m_nodes = problem.num_nodes
    z_start = _start_point(problem, z0)
    nodes = np.tile(z_start, (m_nodes, 1))

    checkpoints: list = []
    trajectory: list | None = [] if record_node_states else None
    rounds = 0
    samples = 0
    status = BUDGET_EXHAUSTED

    def record(step):
        mean = nodes.mean(axis=0)
        vals = metrics.evaluate(problem, mean, node_matrix=nodes)
        checkpoints.append(Checkpoint(step, rounds, samples, **vals))
        if trajectory is not None:
            trajectory.append((rounds, nodes.copy()))

    def half_step(points, counter_base):
        # batches are drawn at `points`, but the step always leaves from the
        # pre-iteration node states
        drawn = np.empty_like(nodes)
        for m in range(m_nodes):
            drawn[m] = oracle.sample_batch(m, points[m], b, counter_base)
        mixed = fastmix(nodes - gamma * drawn, gossip, mix_rounds)
        for m in range(m_nodes):
            mixed[m] = project(problem.feasible_set, mixed[m])
        return mixed

    record(0)
    for t in range(k):
        base = 2 * b * t
        half = half_step(nodes, base)
        nodes = half_step(half, base + b)
        rounds += mix_rounds
        samples += 2 * b
        if _blown_up(nodes):
            status = DIVERGED
            record(t + 1)
            break
        if (t + 1) % checkpoint_every == 0 or t == k - 1:
            record(t + 1)

    return RunResult(
        checkpoints=checkpoints,
        status=status,
        output=nodes.mean(axis=0),
        comm_rounds_used=rounds,
        oracle_samples_per_node=samples,
        local_steps=k,
        node_trajectory=trajectory,
    )


def _run_local(
    problem: ProblemInstance,
    oracle: StochasticOracle | None,
    schedule: LocalSchedule,
    seed: int,
    metrics: MetricSuite | None,
    z0,
    checkpoint_every: int,
    record_node_states: bool,
    extra_step: bool,
) -> RunResult:
    oracle = _resolve_oracle(problem, oracle, seed)
    metrics = metrics or MetricSuite()
    if extra_step:
        _warn_step(schedule.gamma, 1.0 / (4.0 * problem.lipschitz_max), "1/(4L_max)")
    m_nodes = problem.num_nodes
    gamma = schedule.gamma
    z_start = _start_point(problem, z0)
    nodes = np.tile(z_start, (m_nodes, 1))
    synced = z_start.copy()

    checkpoints: list = []
    trajectory: list | None = [] if record_node_states else None
    rounds = 0
    samples = 0
    samples_per_step = 2 if extra_step else 1
    status = BUDGET_EXHAUSTED

    def record(step):
        mean = nodes.mean(axis=0)
        vals = metrics.evaluate(problem, mean, node_matrix=nodes)
        checkpoints.append(Checkpoint(step, rounds, samples, **vals))
        if trajectory is not None:
            trajectory.append((rounds, nodes.copy()))

    def local_update(points, counter):
        # operators are sampled at `points`, but the step always leaves from
        # the pre-step node states
        out = np.empty_like(points)
        for m in range(m_nodes):
            g = oracle.sample(m, points[m], counter)
            out[m] = project(problem.feasible_set, nodes[m] - gamma * g)
        return out

    record(0)
    for t in range(schedule.total_steps):
        if extra_step:
            half = local_update(nodes, 2 * t)
            nodes = local_update(half, 2 * t + 1)
        else:
            nodes = local_update(nodes, t)
        samples += samples_per_step
        if t in schedule.comm_steps:
            synced = nodes.mean(axis=0)
            nodes = np.tile(synced, (m_nodes, 1))
            rounds += 1
        if _blown_up(nodes):
            status = DIVERGED
            record(t + 1)
            break
        if (t + 1) % checkpoint_every == 0 or t == schedule.total_steps - 1:
            record(t + 1)

    return RunResult(
        checkpoints=checkpoints,
        status=status,
        output=synced,
        comm_rounds_used=rounds,
        oracle_samples_per_node=samples,
        local_steps=schedule.total_steps,
        virtual_mean=nodes.mean(axis=0),
        node_trajectory=trajectory,
    )


def run_extra_step_local_sgd(
    problem: ProblemInstance,
    oracle: StochasticOracle | None,
    schedule: LocalSchedule,
    seed: int,
    metrics: MetricSuite | None = None,
    z0=None,
    checkpoint_every: int = 1,
    record_node_states: bool = False,
) -> RunResult:
    """Federated extra-step method: single-sample extragradient steps on
    every node, with all nodes replaced by their exact average after each
    scheduled step.

    The official output is the last synchronized average; the checkpoint
    stream tracks the virtual mean of the node states at every step.  Each
    local update is projected onto the feasible set (a no-op on
    unconstrained problems).
    """
    return _run_local(
        problem, oracle, schedule, seed, metrics, z0, checkpoint_every,
        record_node_states, extra_step=True,
    )


def run_local_sgda(
    problem: ProblemInstance,
    oracle: StochasticOracle | None,
    schedule: LocalSchedule,
    seed: int,
    metrics: MetricSuite | None = None,
    z0=None,
    checkpoint_every: int = 1,
    record_node_states: bool = False,
) -> RunResult:
    """Local descent-ascent baseline: same communication pattern as the
    extra-step method but plain simultaneous updates (one sample per step).

    Divergence is an expected, reportable outcome on rotation-dominated
    games, not an error.
    """
    return _run_local(
        problem, oracle, schedule, seed, metrics, z0, checkpoint_every,
        record_node_states, extra_step=False,
    )

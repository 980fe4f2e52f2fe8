"""Self-contained invariant checks behind the `props` CLI subcommand.

Each check exercises one structural property of the library with fresh
random data and prints a single PASS/FAIL line; the suite returns whether
everything passed.  These are quick smoke-level versions of the full pytest
suite, runnable from an installed package alone.
"""

from __future__ import annotations

import math

import numpy as np

from saddlesim.algorithms import CentralizedSchedule, run_centralized_extra_step
from saddlesim.consensus import consensus_error, fastmix
from saddlesim.core import Ball, Box, StochasticOracle, Unconstrained, project
from saddlesim.lowerbound import PROBE_ALGORITHMS, probe_solution_bound, probe_zero_chain
from saddlesim.problems import gap_bilinear, gen_bilinear, regularize, solve_reference
from saddlesim.topology import laplacian, path_topology, ring_topology, star_topology

__all__ = ["run_props"]


def _check_projection():
    rng = np.random.default_rng(100)
    sets = [
        Box(np.array([-1.0, 0.0, -2.0]), np.array([1.0, 3.0, -1.0])),
        Ball(np.array([0.5, -0.5, 0.0]), 1.5),
        Unconstrained(3),
    ]
    for feasible in sets:
        for _ in range(300):
            z1, z2 = rng.normal(scale=3, size=3), rng.normal(scale=3, size=3)
            p1, p2 = project(feasible, z1), project(feasible, z2)
            if np.linalg.norm(p1 - p2) > np.linalg.norm(z1 - z2) + 1e-12:
                return False, "expansion detected"
            if not np.array_equal(project(feasible, p1), p1):
                return False, "projection not idempotent"
    return True, "nonexpansive and idempotent on 900 random pairs"


def _check_oracle_determinism():
    problem = gen_bilinear(n=4, num_nodes=3, lambda_max=5.0, coef_bound=1.0, seed=0,
                           noise_variance=9.0)
    a = StochasticOracle(problem, seed=7)
    b = StochasticOracle(problem, seed=7)
    z = np.zeros(8)
    for m in range(3):
        for counter in (0, 5, 1000):
            if not np.array_equal(a.sample_batch(m, z, 4, counter),
                                  b.sample_batch(m, z, 4, counter)):
                return False, f"stream ({m}, {counter}) not reproducible"
    return True, "streams keyed by (seed, node, counter) reproduce bit-identically"


def _check_gossip_invariants():
    for topo in (path_topology(5), ring_topology(6), star_topology(7)):
        g = laplacian(topo)
        ones = np.ones(g.num_nodes)
        if np.linalg.norm(g.matrix @ ones) > 1e-10:
            return False, f"{topo.kind}: kernel violated"
        if np.min(np.linalg.eigvalsh(g.matrix)) < -1e-10:
            return False, f"{topo.kind}: not PSD"
        two_ways = abs(np.sort(np.linalg.eigvalsh(g.mixing))[-2] - g.lambda2_mixing)
        if two_ways > 1e-9:
            return False, f"{topo.kind}: lambda2 mismatch {two_ways:.2e}"
    return True, "kernel, PSD, and lambda2 consistency on path/ring/star"


def _check_fastmix():
    rng = np.random.default_rng(200)
    for topo in (path_topology(5), ring_topology(5), star_topology(5)):
        g = laplacian(topo)
        base = (1.0 - 1.0 / math.sqrt(g.chi)) ** 2
        for rounds in (1, 5, 20):
            for _ in range(20):
                z = rng.normal(size=(5, 3))
                out = fastmix(z, g, rounds)
                drift = np.linalg.norm(out.mean(axis=0) - z.mean(axis=0))
                if drift > 1e-11 * max(1.0, np.linalg.norm(z.mean(axis=0))):
                    return False, f"{topo.kind}: average drifted {drift:.2e}"
                ratio = consensus_error(out) / consensus_error(z)
                if ratio > 14.0 * base**rounds + 1e-28:
                    return False, f"{topo.kind}: P={rounds} ratio {ratio:.2e}"
    return True, "average preserved; contraction within the transient envelope"


def _check_budget_accounting():
    rng = np.random.default_rng(300)
    problem = gen_bilinear(n=2, num_nodes=3, lambda_max=3.0, coef_bound=1.0, seed=1,
                           noise_variance=1.0)
    for _ in range(20):
        k = int(rng.integers(1, 10))
        b = int(rng.integers(1, 4))
        sched = CentralizedSchedule(k, 2 * k * b, gamma=0.01)
        res = run_centralized_extra_step(problem, None, sched, seed=int(rng.integers(1e6)))
        if res.comm_rounds_used > k or res.oracle_samples_per_node != 2 * k * b:
            return False, f"accounting broke at k={k}, b={b}"
    return True, "20 random schedules matched 2bk samples and the round budget"


def _check_zero_chain():
    for algorithm in PROBE_ALGORITHMS:
        report = probe_zero_chain(algorithm, lipschitz=2.0, mu=1.0, n=8, delta=3,
                                  comm_budget=6, oracle_budget=24)
        if not report.passed:
            return False, f"{algorithm}: frontier {report.max_frontier} > cap {report.cap}"
    return True, "frontier stayed within floor(rounds/distance) for all three runners"


def _check_solution_bound():
    for ratio, n in ((2.0, 20), (10.0, 50), (100.0, 100)):
        report = probe_solution_bound(lipschitz=ratio, mu=1.0, n=n)
        if not report.passed:
            return False, f"L/mu={ratio}, n={n}: error {report.error:.2e} > {report.bound:.2e}"
    return True, "geometric approximation within its analytic bound"


def _check_gap_at_reference():
    problem = regularize(
        gen_bilinear(n=3, num_nodes=3, lambda_max=2.0, coef_bound=1.0, seed=2), epsilon=24.0
    )
    z_star = solve_reference(problem, tol=1e-11)
    gap = gap_bilinear(problem, z_star)
    if gap < 0 or gap > 1e-9:
        return False, f"gap at the reference point is {gap:.2e}"
    rng = np.random.default_rng(400)
    for _ in range(100):
        z = project(problem.feasible_set, rng.uniform(-1.5, 1.5, 6))
        if gap_bilinear(problem, z) < 0:
            return False, "negative gap at a feasible point"
    return True, "gap nonnegative and ~0 at the reference saddle"


CHECKS = (
    ("projection", _check_projection),
    ("oracle-determinism", _check_oracle_determinism),
    ("gossip-invariants", _check_gossip_invariants),
    ("fastmix", _check_fastmix),
    ("budget-accounting", _check_budget_accounting),
    ("zero-chain", _check_zero_chain),
    ("solution-bound", _check_solution_bound),
    ("gap-function", _check_gap_at_reference),
)


def run_props(stream=None) -> bool:
    import sys

    stream = stream or sys.stdout
    all_ok = True
    for name, check in CHECKS:
        ok, detail = check()
        all_ok &= ok
        print(f"PROP {name}: {'PASS' if ok else 'FAIL'} ({detail})", file=stream)
    return all_ok

"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines as they complete.  Criterion 2 is implemented exactly as specified and
is expected to fail: the fixed-momentum gossip recursion provably exceeds
the constant-free contraction envelope at small round counts (see the test
body for the measured worst cells; its transient carries a bounded constant
that the stated bound omits).
"""

import math

import numpy as np
import pytest

from saddlesim.algorithms import (
    DIVERGED,
    CentralizedSchedule,
    LocalSchedule,
    run_centralized_extra_step,
    run_decentralized_extra_step,
    run_extra_step_local_sgd,
    run_local_sgda,
)
from saddlesim.consensus import consensus_error, fastmix
from saddlesim.harness import DEFAULT_GAMMA_GRID
from saddlesim.lowerbound import PROBE_ALGORITHMS, probe_zero_chain
from saddlesim.metrics import MetricSuite, error_floor
from saddlesim.problems import (
    LowerBoundSpec,
    gen_bilinear,
    gen_rotation,
    lb_reference_solution,
    regularize,
    solve_reference,
)
from saddlesim.topology import (
    complete_topology,
    laplacian,
    path_topology,
    ring_topology,
    star_topology,
)


def report(number: int, name: str, passed: bool, detail: str) -> None:
    print(f"ACCEPTANCE {number} {name}: {'PASS' if passed else 'FAIL'} ({detail})")
    assert passed, f"criterion {number} ({name}): {detail}"


def unit_regularized(problem):
    return regularize(problem, epsilon=4.0 * problem.feasible_set.diameter**2)


def test_criterion_1_per_iteration_contraction():
    # deterministic server method on a strongly monotone instance contracts
    # every iteration at factor (1 - mu * gamma)
    problem = unit_regularized(
        gen_bilinear(n=20, num_nodes=5, lambda_max=10.0, coef_bound=1.0, seed=0)
    )
    z_star = solve_reference(problem, tol=1e-10)
    gamma = 1.0 / (4.0 * problem.lipschitz)
    sched = CentralizedSchedule(comm_budget=200, oracle_budget=400, gamma=gamma)
    result = run_centralized_extra_step(
        problem, None, sched, seed=0, metrics=MetricSuite(reference=z_star.z)
    )
    dists = [cp.dist_sq for cp in result.checkpoints]
    factor = 1.0 - problem.mu * gamma
    slack = 1e-10 * dists[0]
    worst = max(after - (factor * before + slack) for before, after in zip(dists, dists[1:]))
    report(
        1, "per-iteration contraction", worst <= 0.0,
        f"max violation {worst:.3e} over {len(dists) - 1} iterations, "
        f"mu*gamma = {problem.mu * gamma:.4f}",
    )


def test_criterion_2_fastmix_contraction():
    # The constant-free contraction envelope, exactly as stated.  The
    # recursion's transient provably exceeds it for small P (the double root
    # at the edge mode contributes a (1 + (1 - sqrt(eta)) P) polynomial
    # factor), so this criterion fails honestly; the module test suite
    # covers the attainable constant-factor form.
    rng = np.random.default_rng(2024)
    makers = {"path": path_topology, "ring": ring_topology, "star": star_topology}
    worst_cells = []
    ratio_ok = True
    average_ok = True
    for name, make in makers.items():
        for m in (3, 5, 10):
            g = laplacian(make(m))
            bound_base = (1.0 - 1.0 / math.sqrt(g.chi)) ** 2
            for rounds in (1, 5, 10, 20):
                bound = bound_base**rounds * (1.0 + 1e-6)
                worst = 0.0
                for _ in range(50):
                    z = rng.standard_normal((m, 5))
                    out = fastmix(z, g, rounds)
                    drift = np.linalg.norm(out.mean(axis=0) - z.mean(axis=0))
                    if drift > 1e-11 * max(1.0, np.linalg.norm(z.mean(axis=0))):
                        average_ok = False
                    worst = max(worst, consensus_error(out) / consensus_error(z))
                if worst > bound:
                    ratio_ok = False
                    excess = worst / bound if bound > 0 else math.inf
                    worst_cells.append(f"{name}/M={m}/P={rounds}: {excess:.2f}x")
    detail = "average preservation " + ("ok" if average_ok else "violated")
    if worst_cells:
        detail += "; bound exceeded at " + ", ".join(worst_cells[:4])
        detail += f" (+{len(worst_cells) - 4} more cells)" if len(worst_cells) > 4 else ""
    report(2, "fastmix contraction", ratio_ok and average_ok, detail)


def test_criterion_3_zero_chain():
    # path of length 4, budget 8: no coordinate past floor(8/4) = 2 anywhere
    details = []
    all_passed = True
    for algorithm in PROBE_ALGORITHMS:
        rep = probe_zero_chain(
            algorithm, lipschitz=2.0, mu=1.0, n=8, delta=4,
            comm_budget=8, oracle_budget=32,
        )
        ok = rep.passed and rep.cap == 2
        all_passed &= ok
        details.append(f"{algorithm}: frontier {rep.max_frontier}/cap {rep.cap}")
    report(3, "zero chain", all_passed, "; ".join(details))


def test_criterion_4_geometric_solution_bound():
    details = []
    all_passed = True
    for ratio, n in ((2.0, 20), (10.0, 50), (100.0, 100)):
        spec = LowerBoundSpec(
            n=n, lipschitz=ratio, mu=1.0, distance=1,
            driver_nodes=frozenset({1}), bridge_nodes=frozenset({0}),
        )
        y_exact, y_approx, bound = lb_reference_solution(spec)
        err = float(np.linalg.norm(y_approx - y_exact))
        ok = err <= bound * (1.0 + 1e-9)
        all_passed &= ok
        details.append(f"L/mu={ratio:g},n={n}: err/bound={err / bound:.3f}")
    report(4, "geometric solution bound", all_passed, "; ".join(details))


def test_criterion_5_variance_floor_scaling():
    # doubling the batch size should halve the distance floor
    base = gen_bilinear(n=10, num_nodes=5, lambda_max=10.0, coef_bound=0.0, seed=0,
                        noise_variance=100.0)
    problem = unit_regularized(base)
    z_star = solve_reference(problem, tol=1e-10)
    gamma = 1.0 / (4.0 * problem.lipschitz)
    suite = MetricSuite(reference=z_star.z, want_grad_norm=False)
    iterations = 250
    floors = {}
    for batch in (2, 4):
        sched = CentralizedSchedule(
            comm_budget=iterations, oracle_budget=2 * iterations * batch, gamma=gamma
        )
        per_seed = [
            error_floor(
                run_centralized_extra_step(problem, None, sched, seed=seed, metrics=suite),
                "dist_sq",
            )
            for seed in range(100)
        ]
        floors[batch] = float(np.mean(per_seed))
    ratio = floors[2] / floors[4]
    report(
        5, "variance floor scaling", 1.5 <= ratio <= 2.5,
        f"floor(b=2)/floor(b=4) = {ratio:.3f} "
        f"({floors[2]:.4f} vs {floors[4]:.4f}, 100 seeds each)",
    )


def test_criterion_6_frequency_ordering():
    # benchmark desk instance: lower averaging frequency converges faster per
    # communication round early on but settles at a higher floor
    problem = gen_bilinear(n=20, num_nodes=10, lambda_max=100.0, coef_bound=300.0,
                           seed=0, noise_variance=100.0)
    gamma = 1.0 / (15.0 * problem.lipschitz)
    suite = MetricSuite(want_gap=True, want_grad_norm=False)
    floors, early = {}, {}
    for h in (1, 3, 10):
        sched = LocalSchedule.uniform(600, every=h, gamma=gamma)
        floor_values, early_values = [], []
        for seed in range(20):
            result = run_extra_step_local_sgd(problem, None, sched, seed=seed, metrics=suite)
            floor_values.append(error_floor(result, "gap"))
            first = next(cp for cp in result.checkpoints if cp.comm_rounds >= 2)
            early_values.append(first.gap)
        floors[h] = float(np.mean(floor_values))
        early[h] = float(np.mean(early_values))
    ordered = floors[1] * 1.05 <= floors[3] and floors[3] * 1.05 <= floors[10]
    fastest = early[10] < early[3] and early[10] < early[1]
    report(
        6, "frequency ordering", ordered and fastest,
        f"floors H=1/3/10: {floors[1]:.1f}/{floors[3]:.1f}/{floors[10]:.1f}; "
        f"gap after 2 rounds: {early[1]:.0f}/{early[3]:.0f}/{early[10]:.0f}",
    )


def test_criterion_7_rotation_divergence():
    # descent-ascent spirals outward on the pure-rotation game at every grid
    # step while the extra-step method contracts
    problem = gen_rotation(n=4, num_nodes=4, strength=10.0)
    z0 = np.full(8, 0.05)
    d0_sq = float(np.dot(z0, z0))
    suite = MetricSuite(reference=np.zeros(8), want_gap=True, want_grad_norm=False)

    sgda_ok = True
    sgda_details = []
    for c in DEFAULT_GAMMA_GRID:
        sched = LocalSchedule.uniform(2000, every=3, gamma=1.0 / (c * problem.lipschitz_max))
        result = run_local_sgda(problem, None, sched, seed=0, z0=z0, metrics=suite)
        blew_up = result.status == DIVERGED or any(
            cp.dist_sq > 100.0 * d0_sq for cp in result.checkpoints
        )
        sgda_ok &= blew_up
        peak = math.sqrt(max(cp.dist_sq for cp in result.checkpoints) / d0_sq)
        sgda_details.append(f"c={c:g}: {result.status}, peak {peak:.1f}x")

    sched = LocalSchedule.uniform(2000, every=3, gamma=1.0 / (4.0 * problem.lipschitz_max))
    result = run_extra_step_local_sgd(problem, None, sched, seed=0, z0=z0, metrics=suite)
    peak = math.sqrt(max(cp.dist_sq for cp in result.checkpoints) / d0_sq)
    gaps = [cp.gap for cp in result.checkpoints]
    bounded = peak <= 2.0
    reduced = gaps[-1] <= gaps[0] / 10.0
    report(
        7, "rotation divergence", sgda_ok and bounded and reduced,
        "descent-ascent: " + "; ".join(sgda_details)
        + f"; extra-step peak {peak:.2f}x, gap {gaps[0]:.2f} -> {gaps[-1]:.2e}",
    )


def test_criterion_8_centralized_decentralized_equivalence():
    boxed = gen_bilinear(n=4, num_nodes=4, lambda_max=3.0, coef_bound=1.0, seed=9)
    problem = unit_regularized(boxed)
    # move to an unconstrained copy of the same operators
    from saddlesim.core import ProblemInstance, Unconstrained

    problem = ProblemInstance(
        problem.operators, Unconstrained(problem.dim),
        lipschitz=problem.lipschitz, lipschitz_max=problem.lipschitz_max,
        mu=problem.mu, noise_variance=1.0,
    )
    gamma = 1.0 / (4.0 * problem.lipschitz)
    iterations, batch = 50, 2
    central = run_centralized_extra_step(
        problem, None,
        CentralizedSchedule(iterations, 2 * iterations * batch, gamma=gamma),
        seed=5, record_node_states=True,
    )
    topo = complete_topology(4)
    decentral = run_decentralized_extra_step(
        problem, None, topo, laplacian(topo),
        comm_budget=iterations, oracle_budget=2 * iterations * batch,
        mix_rounds=1, gamma=gamma, seed=5, record_node_states=True,
    )
    worst = 0.0
    for (_, a), (_, b) in zip(central.node_trajectory, decentral.node_trajectory):
        za, zb = a.mean(axis=0), b.mean(axis=0)
        worst = max(worst, float(np.linalg.norm(za - zb) / max(1.0, np.linalg.norm(za))))
    report(
        8, "centralized/decentralized equivalence", worst <= 1e-9,
        f"max relative trajectory deviation {worst:.2e} over {iterations} iterations",
    )


def test_criterion_9_budget_accounting():
    rng = np.random.default_rng(99)
    problem = gen_bilinear(n=2, num_nodes=3, lambda_max=2.0, coef_bound=1.0, seed=1,
                           noise_variance=1.0)
    topo = complete_topology(3)
    gossip = laplacian(topo)
    checked = 0
    failures = []

    for _ in range(80):  # server method
        k, b, r = (int(rng.integers(1, 12)), int(rng.integers(1, 4)), int(rng.integers(1, 4)))
        comm = k * r + int(rng.integers(0, r))
        sched = CentralizedSchedule(comm, 2 * (comm // r) * b, gamma=0.05, server_distance=r)
        res = run_centralized_extra_step(problem, None, sched, seed=int(rng.integers(1e6)))
        if res.comm_rounds_used > comm or res.oracle_samples_per_node != 2 * sched.batch_size * sched.iterations:
            failures.append(f"centralized k={k} b={b} r={r}")
        checked += 1

    for _ in range(60):  # gossip method
        mix = int(rng.integers(1, 4))
        comm = mix * int(rng.integers(1, 10)) + int(rng.integers(0, mix))
        b = int(rng.integers(1, 4))
        oracle_budget = 2 * (comm // mix) * b
        res = run_decentralized_extra_step(
            problem, None, topo, gossip, comm, oracle_budget, mix, 0.05,
            seed=int(rng.integers(1e6)),
        )
        if res.comm_rounds_used > comm or res.oracle_samples_per_node != oracle_budget:
            failures.append(f"decentralized K={comm} P={mix}")
        checked += 1

    for _ in range(60):  # local methods: 2T samples for extra-step, T for plain
        steps = int(rng.integers(1, 30))
        every = int(rng.integers(1, 6))
        sched = LocalSchedule.uniform(steps, every, gamma=0.05)
        seed = int(rng.integers(1e6))
        extra = run_extra_step_local_sgd(problem, None, sched, seed=seed)
        plain = run_local_sgda(problem, None, sched, seed=seed)
        syncs = len(sched.comm_steps)
        if extra.oracle_samples_per_node != 2 * steps or plain.oracle_samples_per_node != steps:
            failures.append(f"local T={steps}")
        if extra.comm_rounds_used != syncs or plain.comm_rounds_used != syncs:
            failures.append(f"local comm T={steps} H={every}")
        checked += 1

    report(
        9, "budget accounting", not failures,
        f"{checked} random schedules checked"
        + ("" if not failures else "; broke at " + ", ".join(failures[:3])),
    )

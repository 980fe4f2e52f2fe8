import numpy as np
import pytest

from saddlesim.algorithms import (
    BUDGET_EXHAUSTED,
    DIVERGED,
    CentralizedSchedule,
    LocalSchedule,
    run_centralized_extra_step,
    run_decentralized_extra_step,
    run_extra_step_local_sgd,
    run_local_sgda,
)
from saddlesim.consensus import rounds_for_accuracy
from saddlesim.core import (
    BilinearOperator,
    ProblemInstance,
    RegularizedOperator,
    StochasticOracle,
    Unconstrained,
)
from saddlesim.metrics import MetricSuite, dist_sq
from saddlesim.problems import gen_bilinear, regularize, solve_reference
from saddlesim.topology import complete_topology, laplacian, path_topology, ring_topology


def xy_game(noise_variance=0.0, mu=0.0, num_nodes=1):
    """f = x*y, optionally with quadratic terms of modulus mu, unconstrained."""
    op = BilinearOperator(np.eye(1), np.zeros(1), np.zeros(1))
    if mu > 0:
        op = RegularizedOperator(op, mu, np.zeros(2))
    return ProblemInstance(
        tuple([op] * num_nodes), Unconstrained(2),
        lipschitz=1.0 + mu, lipschitz_max=1.0 + mu, mu=mu,
        noise_variance=noise_variance,
    )


def unconstrained_bilinear(n, num_nodes, seed, noise_variance=0.0, modulus=0.5):
    """Random regularized bilinear game on R^(2n)."""
    boxed = gen_bilinear(n, num_nodes, lambda_max=3.0, coef_bound=1.0, seed=seed)
    ops = tuple(
        RegularizedOperator(op, modulus, np.zeros(2 * n)) for op in boxed.operators
    )
    return ProblemInstance(
        ops, Unconstrained(2 * n),
        lipschitz=boxed.lipschitz + modulus, lipschitz_max=boxed.lipschitz_max + modulus,
        mu=modulus, noise_variance=noise_variance,
    )


class TestSchedules:
    def test_centralized_budget_arithmetic(self):
        s = CentralizedSchedule(comm_budget=100, oracle_budget=1000, gamma=0.1, server_distance=2)
        assert s.iterations == 50
        assert s.batch_size == 10
        assert 2 * s.iterations * s.batch_size == 1000

    def test_centralized_rejects_empty_batch(self):
        with pytest.raises(ValueError, match="reduce the communication"):
            CentralizedSchedule(comm_budget=100, oracle_budget=10, gamma=0.1)

    def test_centralized_rejects_zero_iterations(self):
        with pytest.raises(ValueError, match="admits no iteration"):
            CentralizedSchedule(comm_budget=2, oracle_budget=100, gamma=0.1, server_distance=3)

    def test_local_uniform_max_gap(self):
        s = LocalSchedule.uniform(total_steps=10, every=3, gamma=0.1)
        assert sorted(s.comm_steps) == [2, 5, 8]
        assert s.max_gap == 3

    def test_local_empty_schedule_gap_is_total(self):
        s = LocalSchedule(total_steps=7, comm_steps=frozenset(), gamma=0.1)
        assert s.max_gap == 7

    def test_local_rejects_out_of_range_steps(self):
        with pytest.raises(ValueError):
            LocalSchedule(total_steps=5, comm_steps=frozenset({5}), gamma=0.1)

    def test_theory_gamma(self):
        s = LocalSchedule.uniform(total_steps=12, every=4, gamma=0.001)
        assert s.theory_gamma(10.0) == pytest.approx(1.0 / (21 * 4 * 10.0))


class TestCentralized:
    def test_hand_executed_extragradient_step(self):
        # f = x*y from (1, 1) with gamma = 1/4: half point (0.75, 1.25),
        # update (1 - 0.25 * 1.25, 1 + 0.25 * 0.75) = (0.6875, 1.1875)
        problem = xy_game()
        sched = CentralizedSchedule(comm_budget=1, oracle_budget=2, gamma=0.25)
        result = run_centralized_extra_step(problem, None, sched, seed=0, z0=np.array([1.0, 1.0]))
        assert np.allclose(result.output, [0.6875, 1.1875], atol=1e-15)

    def test_budget_fields(self):
        problem = xy_game(noise_variance=1.0)
        sched = CentralizedSchedule(comm_budget=100, oracle_budget=1000, gamma=0.1,
                                    server_distance=2)
        result = run_centralized_extra_step(problem, None, sched, seed=1)
        assert result.comm_rounds_used == 100
        assert result.oracle_samples_per_node == 1000
        assert result.local_steps == 50
        assert result.status == BUDGET_EXHAUSTED

    def test_deterministic_per_iteration_contraction(self):
        # sigma = 0, mu > 0, gamma = 1/(4L): strict linear contraction
        problem = regularize(
            gen_bilinear(n=6, num_nodes=3, lambda_max=4.0, coef_bound=1.0, seed=5), epsilon=8.0
        )
        z_star = solve_reference(problem, tol=1e-12)
        gamma = 1.0 / (4.0 * problem.lipschitz)
        sched = CentralizedSchedule(comm_budget=80, oracle_budget=160, gamma=gamma)
        suite = MetricSuite(reference=z_star.z)
        result = run_centralized_extra_step(problem, None, sched, seed=2, metrics=suite)
        dists = [cp.dist_sq for cp in result.checkpoints]
        factor = 1.0 - problem.mu * gamma
        slack = 1e-10 * dists[0]
        for before, after in zip(dists, dists[1:]):
            assert after <= factor * before + slack

    def test_seed_determinism(self):
        problem = xy_game(noise_variance=4.0)
        sched = CentralizedSchedule(comm_budget=20, oracle_budget=80, gamma=0.1)
        r1 = run_centralized_extra_step(problem, None, sched, seed=11)
        r2 = run_centralized_extra_step(problem, None, sched, seed=11)
        assert np.array_equal(r1.output, r2.output)
        for c1, c2 in zip(r1.checkpoints, r2.checkpoints):
            assert c1 == c2

    def test_step_size_warning(self):
        problem = xy_game()
        sched = CentralizedSchedule(comm_budget=2, oracle_budget=4, gamma=10.0)
        with pytest.warns(RuntimeWarning, match="theory bound"):
            run_centralized_extra_step(problem, None, sched, seed=0)


class TestDecentralized:
    def test_complete_graph_matches_centralized(self):
        # P = 1 on a complete graph averages exactly; trajectories must agree
        # with the server method on identical seeds to roundoff.
        problem = unconstrained_bilinear(n=4, num_nodes=4, seed=9, noise_variance=1.0)
        topo = complete_topology(4)
        gossip = laplacian(topo)
        gamma = 1.0 / (4.0 * problem.lipschitz)
        k, b = 50, 2
        central = run_centralized_extra_step(
            problem, None,
            CentralizedSchedule(comm_budget=k, oracle_budget=2 * k * b, gamma=gamma),
            seed=3,
        )
        decentral = run_decentralized_extra_step(
            problem, None, topo, gossip,
            comm_budget=k, oracle_budget=2 * k * b, mix_rounds=1, gamma=gamma, seed=3,
        )
        scale = max(1.0, float(np.linalg.norm(central.output)))
        assert np.linalg.norm(central.output - decentral.output) <= 1e-9 * scale
        for c1, c2 in zip(central.checkpoints, decentral.checkpoints):
            assert abs(c1.grad_norm_sq - c2.grad_norm_sq) <= 1e-8 * max(1.0, c1.grad_norm_sq)

    @pytest.mark.parametrize("make_topo", [ring_topology, complete_topology])
    def test_identical_operators_stay_synchronized(self, make_topo):
        # homogeneous nodes with sigma = 0 follow the single-node trajectory;
        # mixing weights carry eigensolver jitter in the last ulp, so the
        # node states agree to roundoff rather than bitwise
        problem = xy_game(mu=0.5, num_nodes=3)
        topo = make_topo(3)
        result = run_decentralized_extra_step(
            problem, None, topo, laplacian(topo), comm_budget=20, oracle_budget=40,
            mix_rounds=1, gamma=0.1, seed=0, z0=np.array([1.0, -1.0]),
            record_node_states=True,
        )
        for _, nodes in result.node_trajectory:
            spread = nodes - nodes[0]
            assert np.max(np.abs(spread)) <= 1e-13 * max(1.0, np.max(np.abs(nodes)))
        single = xy_game(mu=0.5, num_nodes=1)
        reference = run_centralized_extra_step(
            single, None, CentralizedSchedule(20, 40, gamma=0.1), seed=0,
            z0=np.array([1.0, -1.0]),
        )
        assert np.allclose(result.output, reference.output, atol=1e-12)

    def test_consensus_error_tracks_mixing_accuracy(self):
        problem = regularize(
            gen_bilinear(n=3, num_nodes=3, lambda_max=2.0, coef_bound=1.0, seed=13), epsilon=4.0
        )
        topo = path_topology(3)
        gossip = laplacian(topo)
        rounds = rounds_for_accuracy(gossip, 1e-8)
        result = run_decentralized_extra_step(
            problem, None, topo, gossip, comm_budget=10 * rounds, oracle_budget=40,
            mix_rounds=rounds, gamma=1.0 / (4 * problem.lipschitz), seed=1,
            record_node_states=True,
        )
        for (_, nodes), cp in zip(result.node_trajectory[1:], result.checkpoints[1:]):
            mean_sq = float(np.mean(np.sum(nodes * nodes, axis=1)))
            assert cp.consensus_err <= 1e-6 * mean_sq + 1e-20

    def test_budget_validation(self):
        problem = xy_game(num_nodes=3)
        topo = path_topology(3)
        gossip = laplacian(topo)
        with pytest.raises(ValueError, match="admits no iteration"):
            run_decentralized_extra_step(problem, None, topo, gossip, 3, 100, 5, 0.1, 0)
        with pytest.raises(ValueError, match="batch size"):
            run_decentralized_extra_step(problem, None, topo, gossip, 10, 2, 1, 0.1, 0)

    def test_deterministic_monotone_decrease(self):
        # sigma = 0, mu > 0, theory step: the mean iterate's distance to the
        # saddle never increases (finite mixing leaves a sub-1e-9 floor,
        # covered by the absolute slack)
        problem = unconstrained_bilinear(n=3, num_nodes=3, seed=21, modulus=1.0)
        z_star = solve_reference(problem, tol=1e-12)
        suite = MetricSuite(reference=z_star.z, want_grad_norm=False)
        topo = path_topology(3)
        gossip = laplacian(topo)
        mix = rounds_for_accuracy(gossip, 1e-10)
        result = run_decentralized_extra_step(
            problem, None, topo, gossip,
            comm_budget=60 * mix, oracle_budget=240,
            mix_rounds=mix, gamma=1.0 / (4.0 * problem.lipschitz), seed=0,
            metrics=suite, z0=np.ones(6),
        )
        dists = [cp.dist_sq for cp in result.checkpoints]
        slack = 1e-12 * dists[0]
        assert all(after <= before + slack for before, after in zip(dists, dists[1:]))


class TestLocalRunners:
    def test_every_step_single_node_matches_centralized(self):
        # communicating after every step with M = 1 is plain stochastic
        # extragradient; counters line up with the b = 1 server method
        problem = xy_game(noise_variance=1.0, mu=0.4)
        steps = 30
        local = run_extra_step_local_sgd(
            problem, None,
            LocalSchedule.uniform(steps, every=1, gamma=0.05), seed=7,
            z0=np.array([1.0, 0.5]),
        )
        central = run_centralized_extra_step(
            problem, None, CentralizedSchedule(steps, 2 * steps, gamma=0.05), seed=7,
            z0=np.array([1.0, 0.5]),
        )
        assert np.array_equal(local.output, central.output)

    def test_homogeneous_nodes_independent_of_schedule(self):
        # D = 0 and sigma = 0: nodes stay synchronized, any schedule gives
        # the same trajectory
        problem = xy_game(mu=0.5, num_nodes=4)
        z0 = np.array([2.0, -1.0])
        outs = []
        for every in (1, 3, 10):
            sched = LocalSchedule.uniform(30, every=every, gamma=0.1)
            outs.append(
                run_extra_step_local_sgd(problem, None, sched, seed=0, z0=z0).virtual_mean
            )
        assert np.allclose(outs[0], outs[1], atol=1e-13)
        assert np.allclose(outs[0], outs[2], atol=1e-13)

    def test_virtual_mean_recursion(self):
        # the recorded mean follows mean_{t+1} = mean_t - gamma * gbar
        problem = unconstrained_bilinear(n=3, num_nodes=3, seed=4, noise_variance=2.0)
        sched = LocalSchedule.uniform(12, every=4, gamma=0.02)
        result = run_extra_step_local_sgd(
            problem, None, sched, seed=5, record_node_states=True
        )
        oracle = StochasticOracle(problem, seed=5)
        gamma = sched.gamma
        for t in range(len(result.node_trajectory) - 1):
            _, nodes = result.node_trajectory[t]
            mean_now = nodes.mean(axis=0)
            applied = np.zeros(problem.dim)
            for m in range(problem.num_nodes):
                g1 = oracle.sample(m, nodes[m], 2 * t)
                half = nodes[m] - gamma * g1
                applied += oracle.sample(m, half, 2 * t + 1)
            predicted = mean_now - gamma * applied / problem.num_nodes
            _, nodes_next = result.node_trajectory[t + 1]
            assert np.linalg.norm(nodes_next.mean(axis=0) - predicted) <= 1e-12

    def test_sgda_rotation_growth_closed_form(self):
        # simultaneous descent-ascent on f = x*y multiplies the norm by
        # sqrt(1 + gamma^2) every step
        problem = xy_game()
        gamma = 0.1
        sched = LocalSchedule(200, frozenset(), gamma=gamma)
        result = run_local_sgda(
            problem, None, sched, seed=0, z0=np.array([1.0, 1.0]), record_node_states=True
        )
        norms = [float(np.linalg.norm(nodes[0])) for _, nodes in result.node_trajectory]
        assert all(b > a for a, b in zip(norms, norms[1:]))
        growth = (1.0 + gamma * gamma) ** 0.5
        for a, b in zip(norms, norms[1:]):
            assert b / a == pytest.approx(growth, rel=1e-12)

    def test_sgda_converges_on_strongly_monotone(self):
        # with mu large relative to the rotation the baseline contracts
        problem = xy_game(mu=1.0)
        sched = LocalSchedule(300, frozenset(), gamma=0.3)
        result = run_local_sgda(problem, None, sched, seed=0, z0=np.array([1.0, 1.0]))
        assert result.status == BUDGET_EXHAUSTED
        assert np.linalg.norm(result.virtual_mean) <= 1e-6

    def test_sgda_divergence_is_reported_not_raised(self):
        problem = xy_game()
        sched = LocalSchedule(5000, frozenset(), gamma=1.5)
        result = run_local_sgda(problem, None, sched, seed=0, z0=np.array([1.0, 0.0]))
        assert result.status == DIVERGED
        assert result.comm_rounds_used == 0

    def test_sample_accounting(self):
        problem = xy_game(noise_variance=1.0, mu=0.5)
        sched = LocalSchedule.uniform(20, every=5, gamma=0.05)
        extra = run_extra_step_local_sgd(problem, None, sched, seed=1)
        plain = run_local_sgda(problem, None, sched, seed=1)
        assert extra.oracle_samples_per_node == 40
        assert plain.oracle_samples_per_node == 20
        assert extra.comm_rounds_used == plain.comm_rounds_used == 4

    def test_output_is_last_synchronized_average(self):
        problem = xy_game(noise_variance=1.0, mu=0.5)
        sched = LocalSchedule(10, frozenset({3}), gamma=0.05)
        result = run_extra_step_local_sgd(
            problem, None, sched, seed=2, z0=np.ones(2), record_node_states=True
        )
        _, nodes_after_sync = result.node_trajectory[4]  # records start at step 0
        assert np.array_equal(result.output, nodes_after_sync[0])
        assert not np.array_equal(result.output, result.virtual_mean)


class TestBudgetInvariants:
    def test_random_schedules_respect_budgets(self):
        rng = np.random.default_rng(0)
        problem = xy_game(noise_variance=1.0, mu=0.5, num_nodes=3)
        topo = complete_topology(3)
        gossip = laplacian(topo)
        for _ in range(25):
            k = int(rng.integers(1, 20))
            b = int(rng.integers(1, 5))
            r = int(rng.integers(1, 4))
            K = k * r + int(rng.integers(0, r))
            T = 2 * (K // r) * b + int(rng.integers(0, 2 * (K // r)))
            sched = CentralizedSchedule(K, T, gamma=0.05, server_distance=r)
            res = run_centralized_extra_step(problem, None, sched, seed=int(rng.integers(1e6)))
            assert res.comm_rounds_used <= K
            assert res.oracle_samples_per_node == 2 * sched.batch_size * sched.iterations
            assert res.oracle_samples_per_node <= T

            P = int(rng.integers(1, 4))
            Kd = P * int(rng.integers(1, 10))
            kd = Kd // P
            Td = 2 * kd * int(rng.integers(1, 5))
            res = run_decentralized_extra_step(
                problem, None, topo, gossip, Kd, Td, P, 0.05, seed=int(rng.integers(1e6))
            )
            assert res.comm_rounds_used <= Kd
            assert res.oracle_samples_per_node == Td

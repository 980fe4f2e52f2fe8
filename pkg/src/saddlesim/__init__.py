"""saddlesim: distributed stochastic saddle-point optimization at desk scale.

Library + CLI for simulating extragradient-family methods on distributed
min-max problems: a server-side minibatch method, a gossip-based
decentralized variant with accelerated consensus, a federated local
extra-step method, and a descent-ascent baseline, together with the
adversarial chain instance whose information flow certifies communication
lower bounds empirically.
"""

__version__ = "0.1.0"

from saddlesim.algorithms import (  # noqa: F401
    BUDGET_EXHAUSTED,
    CONVERGED,
    DIVERGED,
    CentralizedSchedule,
    Checkpoint,
    LocalSchedule,
    RunResult,
    run_centralized_extra_step,
    run_decentralized_extra_step,
    run_extra_step_local_sgd,
    run_local_sgda,
)
from saddlesim.consensus import (  # noqa: F401
    consensus_error,
    fastmix,
    rounds_for_accuracy,
)
from saddlesim.core import (  # noqa: F401
    Ball,
    BilinearOperator,
    Box,
    IteratePoint,
    LowerBoundPiece,
    ProblemInstance,
    RegularizedOperator,
    StochasticOracle,
    Unconstrained,
    estimate_heterogeneity,
    eval_operator,
    project,
    sample_batch,
)
from saddlesim.harness import (  # noqa: F401
    ExperimentConfig,
    figure1_suite,
    load_config,
    run_experiment,
)
from saddlesim.lowerbound import (  # noqa: F401
    ZeroChainReport,
    probe_solution_bound,
    probe_zero_chain,
)
from saddlesim.metrics import (  # noqa: F401
    MetricSuite,
    avg_grad_norm_sq,
    dist_sq,
    error_floor,
)
from saddlesim.problems import (  # noqa: F401
    LowerBoundSpec,
    gap_bilinear,
    gen_bilinear,
    gen_lower_bound_instance,
    gen_rotation,
    lb_reference_solution,
    regularize,
    solve_reference,
)
from saddlesim.topology import (  # noqa: F401
    GossipMatrix,
    Topology,
    build_topology,
    diameter,
    laplacian,
    tune_chi,
)

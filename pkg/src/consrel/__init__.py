"""Consensus reliability analysis toolkit.

Models consensus protocols as sequences of communication components, computes
exact and approximate consensus failure rates under probabilistic node and
link failures, predicts and optimizes latency, and validates the analytics
with Monte Carlo and discrete-event simulation.
"""

from .approx import (
    GainReport,
    JointReliabilityVector,
    OverallJointFailure,
    PowerSeriesExpansion,
    c_graph_avg_activation,
    c_graph_avg_activation_iid,
    hotstuff_variant_ratio,
    iid_first_order_failure,
    joint_reliability,
    joint_reliability_vector,
    overall_joint_failure_rate_iid,
    power_series_failure,
    reliability_gain,
    tolerance_gain,
    tree_decomposed_failure,
)
from .errors import ComputationError, ConsrelError, ParamError, StructureError
from .exact import (
    ClusterParams,
    ReliabilityResult,
    activation_probability,
    exact_reliability,
    exact_reliability_iid,
    multi_instance_reliability,
    node_only_reliability,
)
from .latency import (
    LatencyParams,
    LatencyReport,
    expected_transmission_latency,
    queuing_latency,
    transmission_latency_pmf,
)
from .protocols import (
    BUILTIN_NAMES,
    Component,
    DependenceTree,
    F_PLUS_ONE,
    GraphKind,
    N_MINUS_F,
    ProtocolStructure,
    ResolvedStructure,
    Threshold,
    builtin_protocol,
    default_fault_threshold,
    dependence_tree,
    emit_json,
    explicit,
    first_order_paths,
    parse_json,
    protocol_family,
    validate_structure,
)
from .simulate import (
    SimConfig,
    SimTrace,
    TraceSummary,
    TrialOutcome,
    format_trace_csv,
    simulate_consensus_trials,
    simulate_raft_latency,
    summarize_trace,
)
from .wireless import (
    PowerAllocation,
    WirelessScenario,
    db_to_linear,
    equal_split_allocation,
    load_scenario,
    node_count_sweep,
    optimize_power,
    raft_failure_from_losses,
    rayleigh_link_loss,
)

__version__ = "0.1.0"

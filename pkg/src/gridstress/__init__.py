"""N-1 stress metrics and LODF-guided transmission switching on DC networks."""
__version__ = "0.1.0"

from .dcflow import (
    FlowState,
    LodfMatrix,
    MonitorSets,
    PtdfMatrix,
    compute_lodf,
    compute_ptdf,
    post_outage_flows,
    save_matrices,
    solve_dc,
)
from .errors import (
    CaseFormatError,
    DispatchError,
    GridStressError,
    InfeasibleError,
    InvalidNetworkError,
    IslandingError,
    NoContingenciesError,
    SingularNetworkError,
)
from .metrics import (
    LimitSet,
    PostContingencyTable,
    StressReport,
    analyze,
    build_table,
    criticality_degree,
    criticality_rank,
    stress_report,
    system_criticality_degree,
    system_vulnerability_degree,
    violation_counts,
    vulnerability_degree,
    vulnerability_rank,
)
from .network import (
    Branch,
    Bus,
    Generator,
    Network,
    TopologyClassification,
    builtin_case,
    classify_topology,
    increase_overrides,
    load_case,
    parse_case,
    scale_load,
    to_json,
)
from .switching import (
    StressPolicy,
    SwitchingAction,
    SwitchingRecommendation,
    corrective_search,
    evaluate_switch,
    preventive_search,
    rank_candidates,
)

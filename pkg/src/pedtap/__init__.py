"""Pedestrian traffic assignment with bidirectional, optionally stochastic, volume-delay functions."""
from .assignment import (
    AssignmentResult,
    Mode,
    SolverConfig,
    all_or_nothing,
    link_costs,
    relative_gap,
    shortest_path,
    solve,
    summary,
    total_system_travel_time,
)
from .calibration import (
    CalibrationRun,
    FitReport,
    Observation,
    ObservationSet,
    SpeedLaw,
    calibrate,
    capacity,
    critical_density,
    fit_pvdf,
    fit_sigma,
    fit_speed_law,
    goodness,
    quasi_density,
    r_squared,
    rmse_mean,
    rmse_sum,
)
from .errors import *  # noqa: F401,F403
from .netgen import Centerline, GenConfig, GenReport, build_footpath_graph, close_links, generate, offset, simplify
from .network import (
    DemandTable,
    Link,
    LinkKind,
    Network,
    Node,
    NodeKind,
    Path,
    build_network,
    flows_to_volumes,
    stream_of,
    volumes_to_flows,
)
from .pvdf import (
    AsymmetricParams,
    Family,
    LogNormalSpec,
    PvdfConfig,
    SigmaParams,
    SymmetricParams,
    eval_asym_components,
    eval_det_asymmetric,
    eval_det_symmetric,
    fenton_wilkinson,
    lognormal_spec,
    sigma,
    stream_correlated_sample,
)

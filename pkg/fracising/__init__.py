from .enums import *
from .errors import *
from .couplings import (
    CouplingTable,
    PeriodicCouplingTable,
    asymptotic_amplitude,
    asymptotic_exponent,
    build_table,
    coupling,
    generalized_binomial,
    momentum_coupling,
    periodic_table,
    residual_subleading,
    spectral_residual,
    sum_rule_residual,
)
from .lattice import (
    ClassicalModel,
    Geometry,
    SpinConfiguration,
    energy,
    exact_enumeration,
    local_field,
)
from .engine import (
    EngineOptions,
    GridPoint,
    MeasurementRecord,
    RunSpec,
    campaign,
    cluster_update,
    metropolis_sweep,
    run,
)
from .trotter import QuantumSpec, TrotterOptions, map_to_classical, quantum_campaign
from .stats import (
    ObservableEstimate,
    autocorrelation_time,
    bootstrap,
    estimate_observables,
)
from .fss import (
    AnalysisOptions,
    ExponentEstimate,
    ScalingCurve,
    analyze_blocks,
    binder_crossing,
    collapse_quality,
    exponent_from_peaks,
    extract_delta,
    extract_eta,
    extrapolate_tc,
    hausdorff_report,
    kappa_exponent,
    locate_peak,
    optimize_collapse,
    qfss_rescale,
)

__version__ = "0.3.0"
__all__ = [
    # Exceptions
    "FisException",
    "FisInternalError",
    "FisMemoryAllocError",
    "FisArgumentError",
    "FisInvalidArgError",
    "FisInvalidArgValueError",
    "FisInvalidSpinError",
    "FisFieldWithClusterError",
    "FisGeometryMismatchError",
    "FisSizeCapError",
    "FisOrderRangeError",
    "FisNumericalError",
    "FisDomainError",
    "FisCouplingOverflowError",
    "FisTailToleranceError",
    "FisNonPositiveCouplingError",
    "FisTrotterMappingError",
    "FisStatisticsError",
    "FisInsufficientSamplesError",
    "FisTooFewBlocksError",
    "FisAnalysisError",
    "FisPeakAtEdgeError",
    "FisFitConvergenceError",
    "FisCollapseError",
    "FisWindowTooSmallError",
    "FisNoCrossoverError",
    "FisInsufficientSizesError",
    "FisIoError",
    "FisConfigError",
    "FisRecordFormatError",
    # Enums
    "ErrorLevel",
    "ErrorCode",
    "Algorithm",
    "GeometryKind",
    "Mode",
    "ControlKind",
    "MagnetizationConvention",
    "BinderConvention",
    "FieldScalingForm",
    "AspectRule",
    # Couplings
    "CouplingTable",
    "PeriodicCouplingTable",
    "generalized_binomial",
    "coupling",
    "asymptotic_amplitude",
    "build_table",
    "periodic_table",
    "momentum_coupling",
    "asymptotic_exponent",
    "residual_subleading",
    "spectral_residual",
    "sum_rule_residual",
    # Lattice
    "Geometry",
    "SpinConfiguration",
    "ClassicalModel",
    "energy",
    "local_field",
    "exact_enumeration",
    # Engine
    "RunSpec",
    "MeasurementRecord",
    "EngineOptions",
    "GridPoint",
    "metropolis_sweep",
    "cluster_update",
    "run",
    "campaign",
    # Trotter
    "QuantumSpec",
    "TrotterOptions",
    "map_to_classical",
    "quantum_campaign",
    # Statistics
    "ObservableEstimate",
    "autocorrelation_time",
    "bootstrap",
    "estimate_observables",
    # Finite-size scaling
    "AnalysisOptions",
    "ScalingCurve",
    "ExponentEstimate",
    "locate_peak",
    "extrapolate_tc",
    "binder_crossing",
    "collapse_quality",
    "optimize_collapse",
    "exponent_from_peaks",
    "extract_eta",
    "extract_delta",
    "kappa_exponent",
    "qfss_rescale",
    "hausdorff_report",
    "analyze_blocks",
]

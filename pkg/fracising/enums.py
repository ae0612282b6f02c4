from enum import Enum, IntEnum

from _fracising_cffi import lib as _lib


class ErrorLevel(IntEnum):
    NOTICE = _lib.FIS_NOTICE
    WARNING = _lib.FIS_WARNING
    ERROR = _lib.FIS_ERROR


class ErrorCode(IntEnum):
    # Raised by the native kernels
    INTERNAL_ERROR = _lib.FIS_ERR_INTERNAL_ERROR
    MEMORY_ALLOC_ERROR = _lib.FIS_ERR_MEMORY_ALLOC_ERROR
    INVALID_ARG = _lib.FIS_ERR_INVALID_ARG
    INVALID_ARG_VALUE = _lib.FIS_ERR_INVALID_ARG_VALUE
    INVALID_SPIN = _lib.FIS_ERR_INVALID_SPIN
    FIELD_WITH_CLUSTER = _lib.FIS_ERR_FIELD_WITH_CLUSTER
    # Raised by the Python layer
    GEOMETRY_MISMATCH = 20
    SIZE_CAP = 21
    ORDER_RANGE = 22
    DOMAIN_ERROR = 30
    COUPLING_OVERFLOW = 31
    TAIL_TOLERANCE = 32
    NON_POSITIVE_COUPLING = 33
    TROTTER_MAPPING = 34
    INSUFFICIENT_SAMPLES = 40
    TOO_FEW_BLOCKS = 41
    PEAK_AT_EDGE = 50
    FIT_CONVERGENCE = 51
    COLLAPSE = 52
    WINDOW_TOO_SMALL = 53
    NO_CROSSOVER = 54
    INSUFFICIENT_SIZES = 55
    CONFIG = 60
    RECORD_FORMAT = 61


class Algorithm(IntEnum):
    METROPOLIS = _lib.FIS_ALGORITHM_METROPOLIS
    CLUSTER = _lib.FIS_ALGORITHM_CLUSTER
    MIXED = _lib.FIS_ALGORITHM_MIXED


class GeometryKind(str, Enum):
    CHAIN = "chain"
    GRID = "grid"


class Mode(str, Enum):
    CLASSICAL_1D = "classical_1d"
    CLASSICAL_2D = "classical_2d"
    QUANTUM_1D = "quantum_1d"


class ControlKind(str, Enum):
    TEMPERATURE = "temperature"
    TRANSVERSE_FIELD = "g"
    FIELD = "h"


class MagnetizationConvention(str, Enum):
    ABSOLUTE = "abs"
    SIGNED = "signed"


class BinderConvention(str, Enum):
    SQUARED = "squared"
    LITERAL = "literal"


class FieldScalingForm(str, Enum):
    GAP = "gap"
    LITERAL = "literal"


class AspectRule(str, Enum):
    LINEAR = "linear"
    POWER = "power"
    FIXED = "fixed"

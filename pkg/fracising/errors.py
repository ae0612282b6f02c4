import logging
from typing import Optional, Sequence

from .enums import ErrorCode, ErrorLevel

logger = logging.getLogger("fracising")


class FisException(Exception):
    """Base class for all fracising errors."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.message = message
        self.code = code

    def __str__(self):
        return f"{self.__class__.__name__} ({self.code}): {self.message}"

    def __reduce__(self):
        # Worker processes send failures back pickled
        return self.__class__, (self.code, self.message)


class FisInternalError(FisException):
    """Superclass for internal kernel errors."""

    pass


class FisMemoryAllocError(FisInternalError, MemoryError):
    """Kernel buffer allocation failed."""

    pass


class FisArgumentError(FisException):
    """Superclass for invalid argument errors."""

    pass


class FisInvalidArgError(FisArgumentError):
    """Invalid argument."""

    pass


class FisInvalidArgValueError(FisArgumentError, ValueError):
    """Invalid argument value."""

    pass


class FisInvalidSpinError(FisInvalidArgValueError):
    """Spin entry outside {-1, +1}."""

    pass


class FisFieldWithClusterError(FisInvalidArgValueError):
    """Cluster update requested on a model with a longitudinal field."""

    pass


class FisGeometryMismatchError(FisInvalidArgValueError):
    """Configuration geometry does not match the model."""

    pass


class FisSizeCapError(FisInvalidArgValueError):
    """System too large for exact enumeration."""

    pass


class FisOrderRangeError(FisInvalidArgValueError):
    """Fractional order outside the simulated range (0, 2]."""

    pass


class FisNumericalError(FisException, ArithmeticError):
    """Superclass for numerical errors."""

    pass


class FisDomainError(FisNumericalError):
    """Gamma pole with a non-cancelling singularity."""

    pass


class FisCouplingOverflowError(FisNumericalError, OverflowError):
    """Coupling table larger than the representable range."""

    pass


class FisTailToleranceError(FisNumericalError):
    """Image-sum tail bound not met within the iteration cap."""

    pass


class FisNonPositiveCouplingError(FisNumericalError):
    """Non-positive coupling inside a log-log fit window."""

    pass


class FisTrotterMappingError(FisNumericalError):
    """Trotter time coupling under- or overflows."""

    pass


class FisStatisticsError(FisException):
    """Superclass for estimator errors."""

    pass


class FisInsufficientSamplesError(FisStatisticsError):
    """Not enough measurements."""

    pass


class FisTooFewBlocksError(FisStatisticsError):
    """Not enough blocks for a block bootstrap."""

    pass


class FisAnalysisError(FisException):
    """Superclass for finite-size-scaling analysis errors."""

    pass


class FisPeakAtEdgeError(FisAnalysisError):
    """Observable maximum at the edge of the scanned window."""

    pass


class FisFitConvergenceError(FisAnalysisError):
    """Non-convergent fit."""

    def __init__(
        self,
        code: int,
        message: str,
        residuals: Optional[Sequence[float]] = None,
    ):
        super().__init__(code, message)
        self.residuals = list(residuals) if residuals is not None else []


class FisCollapseError(FisAnalysisError):
    """Degenerate collapse window."""

    pass


class FisWindowTooSmallError(FisAnalysisError):
    """Fit window too small."""

    pass


class FisNoCrossoverError(FisAnalysisError):
    """No crossover in the scanned window."""

    pass


class FisInsufficientSizesError(FisAnalysisError):
    """Not enough sizes or control points."""

    pass


class FisIoError(FisException, IOError):
    """Superclass for input/output errors."""

    pass


class FisConfigError(FisIoError):
    """Invalid campaign or analysis configuration."""

    pass


class FisRecordFormatError(FisIoError):
    """Malformed record store file."""

    pass


_exception_map = {
    ErrorCode.INTERNAL_ERROR: FisInternalError,
    ErrorCode.MEMORY_ALLOC_ERROR: FisMemoryAllocError,
    ErrorCode.INVALID_ARG: FisInvalidArgError,
    ErrorCode.INVALID_ARG_VALUE: FisInvalidArgValueError,
    ErrorCode.INVALID_SPIN: FisInvalidSpinError,
    ErrorCode.FIELD_WITH_CLUSTER: FisFieldWithClusterError,
}


def report_kernel_exception(level: int, code: int, message: str):
    exception_class = _exception_map.get(code, FisException)
    exception = exception_class(code, message)
    if level == ErrorLevel.NOTICE:
        logger.info("KERNEL NOTICE: ", exc_info=exception)
    elif level == ErrorLevel.WARNING:
        logger.warning("KERNEL WARNING: ", exc_info=exception)
    elif level == ErrorLevel.ERROR:
        logger.error("KERNEL ERROR: ", exc_info=exception)
        raise exception
    else:
        logger.error(f"Error raised with unknown level {level}: {exception}")
        raise exception

import logging
from typing import Optional, Tuple

import numpy as np
import _fracising_cffi

from .errors import report_kernel_exception

_ffi = _fracising_cffi.ffi
_lib = _fracising_cffi.lib

_error: Optional[int] = None
_error_level: Optional[int] = None
_error_message: Optional[str] = None

logger = logging.getLogger("fracising")

RNG_ALGORITHM = "xoshiro256**/splitmix64"
N_OBSERVABLES = _lib.FIS_N_OBSERVABLES


def _check_error() -> None:
    global _error, _error_level, _error_message
    if _error is not None:
        error = _error
        error_level = _error_level
        error_message = _error_message
        _error = None
        _error_level = None
        _error_message = None
        report_kernel_exception(error_level, error, error_message)


@_ffi.def_extern()
def py_error_handler(error_level, error_code, error_msg):
    global _error, _error_level, _error_message
    _error = error_code
    _error_level = error_level
    _error_message = _ffi.string(error_msg).decode("utf-8")
    logger.debug(
        f"ERROR Handler called: Level: {_error_level} | Code: {_error} | Message: {_error_message}"
    )


def fis_initialize() -> None:
    _lib.fis_initialize(_lib.py_error_handler)


class KernelRng:
    """xoshiro256** state owned by Python, advanced only by the C kernels."""

    algorithm = RNG_ALGORITHM

    def __init__(self, seed: int) -> None:
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self._state = _ffi.new("uint64_t[4]")
        _lib.fis_rng_seed(self._state, self.seed)

    @property
    def state(self) -> Tuple[int, int, int, int]:
        return tuple(int(self._state[i]) for i in range(4))

    def next_uint64(self) -> int:
        return int(_lib.fis_rng_next(self._state))

    def uniform(self) -> float:
        return float(_lib.fis_rng_uniform(self._state))


class KernelModel:
    """Keeps the ``fis_model`` struct and the arrays it points to alive."""

    def __init__(
        self,
        lx: int,
        ltau: int,
        j0: float,
        ktau: float,
        h: float,
        couplings: np.ndarray,
    ) -> None:
        self.couplings = np.ascontiguousarray(couplings, dtype=np.float64)
        if self.couplings.shape != (lx,):
            raise ValueError(
                f"Coupling array of shape {self.couplings.shape} does not match lx={lx}"
            )
        self.active = np.ascontiguousarray(
            np.flatnonzero(self.couplings[1:]) + 1, dtype=np.int32
        )
        self._couplings_c = _ffi.from_buffer("double[]", self.couplings)
        self._active_c = _ffi.from_buffer("int32_t[]", self.active)
        self.struct = _ffi.new("fis_model *")
        self.struct.lx = lx
        self.struct.ltau = ltau
        self.struct.j0 = j0
        self.struct.ktau = ktau
        self.struct.h = h
        self.struct.couplings = self._couplings_c
        self.struct.n_active = len(self.active)
        self.struct.active = self._active_c
        self.n_sites = lx * ltau


class KernelSchedule:
    def __init__(self, algorithm: int, cluster_updates: int = 1) -> None:
        self.struct = _ffi.new("fis_schedule *")
        self.struct.algorithm = int(algorithm)
        self.struct.cluster_updates = int(cluster_updates)


def _spins_buffer(spins: np.ndarray) -> "int8_t *":
    if spins.dtype != np.int8 or not spins.flags.c_contiguous:
        raise ValueError("Spins must be a C-contiguous int8 array")
    return _ffi.from_buffer("int8_t[]", spins)


def random_spins(spins: np.ndarray, rng: KernelRng) -> None:
    _lib.fis_random_spins(_spins_buffer(spins), spins.size, rng._state)
    _check_error()


def local_field(model: KernelModel, spins: np.ndarray, site: int) -> float:
    result = _lib.fis_local_field(model.struct, _spins_buffer(spins), site)
    _check_error()
    return result


def energy(model: KernelModel, spins: np.ndarray) -> float:
    result = _lib.fis_energy(model.struct, _spins_buffer(spins))
    _check_error()
    return result


def metropolis_sweep(
    model: KernelModel, spins: np.ndarray, beta: float, rng: KernelRng
) -> int:
    result = _lib.fis_metropolis_sweep(
        model.struct, _spins_buffer(spins), beta, rng._state
    )
    _check_error()
    return result


def cluster_update(
    model: KernelModel, spins: np.ndarray, beta: float, rng: KernelRng
) -> int:
    result = _lib.fis_cluster_update(
        model.struct, _spins_buffer(spins), beta, rng._state
    )
    _check_error()
    return result


def step(
    model: KernelModel,
    spins: np.ndarray,
    beta: float,
    schedule: KernelSchedule,
    rng: KernelRng,
    n_steps: int,
) -> Tuple[int, int]:
    accepted = _ffi.new("int64_t *")
    clustered = _ffi.new("int64_t *")
    _lib.fis_step(
        model.struct,
        _spins_buffer(spins),
        beta,
        schedule.struct,
        rng._state,
        n_steps,
        accepted,
        clustered,
    )
    _check_error()
    return accepted[0], clustered[0]


def measure(
    model: KernelModel, spins: np.ndarray, correlations: np.ndarray
) -> np.ndarray:
    observables = np.zeros(N_OBSERVABLES, dtype=np.float64)
    _lib.fis_measure(
        model.struct,
        _spins_buffer(spins),
        _ffi.from_buffer("double[]", observables),
        _ffi.from_buffer("double[]", correlations),
    )
    _check_error()
    return observables


def sample(
    model: KernelModel,
    spins: np.ndarray,
    beta: float,
    schedule: KernelSchedule,
    rng: KernelRng,
    n_measure: int,
    thin: int,
    correlations: np.ndarray,
) -> Tuple[np.ndarray, int, int]:
    observables = np.zeros((n_measure, N_OBSERVABLES), dtype=np.float64)
    accepted = _ffi.new("int64_t *")
    clustered = _ffi.new("int64_t *")
    _lib.fis_sample(
        model.struct,
        _spins_buffer(spins),
        beta,
        schedule.struct,
        rng._state,
        n_measure,
        thin,
        _ffi.from_buffer("double[]", observables),
        _ffi.from_buffer("double[]", correlations),
        accepted,
        clustered,
    )
    _check_error()
    return observables, accepted[0], clustered[0]


fis_initialize()

"""Covariance representations and robust Cholesky factorization.

Three interchangeable covariance forms are supported:

``DiagonalCovariance``
    Independent per-step standard deviations; materializes to ``diag(sigma**2)``.
``PdccCovariance``
    Pattern-dictionary composition ``U diag(aux_sigma**2) U^T + ridge * I``
    where the ``T x V`` dictionary ``U`` (``V >= T``) is shared by reference
    across all components of a forecast.
``DenseCovariance``
    An explicit symmetric matrix.

Factorization uses a fixed jitter-escalation policy: a clean lower Cholesky is
attempted first; on failure, ``jitter * I`` is added with ``jitter`` escalating
from 1e-10 by factors of 10 up to 1e-4 before ``NotPositiveDefinite`` is
raised.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from numpy.typing import NDArray

from .errors import DimensionMismatch, NonFiniteInput, NotPositiveDefinite, ValidationError

__all__ = [
    "PatternDictionary",
    "DiagonalCovariance",
    "PdccCovariance",
    "DenseCovariance",
    "CovarianceSpec",
    "dimension",
    "materialize",
    "cholesky_lower",
    "cholesky_lower_batch",
    "JITTER_INITIAL",
    "JITTER_MAX",
    "JITTER_GROWTH",
    "SYMMETRY_TOL",
]

JITTER_INITIAL = 1e-10
JITTER_MAX = 1e-4
JITTER_GROWTH = 10.0
SYMMETRY_TOL = 1e-10


def _frozen_array(value, dtype=np.float64) -> np.ndarray:
    """Copy ``value`` into a read-only float array."""
    arr = np.array(value, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _require_finite(arr: np.ndarray, what: str) -> None:
    if not np.isfinite(arr).all():
        raise NonFiniteInput(f"{what} contains non-finite entries")


@dataclass(frozen=True, eq=False)
class PatternDictionary:
    """A ``T x V`` bank of temporal patterns shared across mixture components.

    Parameters
    ----------
    id : str
        Stable identifier used by serialized models to reference this
        dictionary.
    u : ndarray of shape (T, V)
        Pattern matrix with at least as many patterns as time steps
        (``V >= T``).
    """

    id: str
    u: NDArray[np.float64]

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise ValidationError("dictionary id must be a non-empty string")
        u = _frozen_array(self.u)
        if u.ndim != 2:
            raise DimensionMismatch("dictionary matrix must be 2-D")
        t, v = u.shape
        if t < 1:
            raise DimensionMismatch("dictionary must span at least one time step")
        if v < t:
            raise DimensionMismatch(f"dictionary needs at least as many patterns as steps (got {v} < {t})")
        _require_finite(u, "dictionary matrix")
        object.__setattr__(self, "u", u)

    @property
    def horizon(self) -> int:
        return self.u.shape[0]

    @property
    def n_patterns(self) -> int:
        return self.u.shape[1]


@dataclass(frozen=True, eq=False)
class DiagonalCovariance:
    """Diagonal covariance given by per-step standard deviations (all > 0)."""

    sigma: NDArray[np.float64]

    def __post_init__(self):
        sigma = _frozen_array(self.sigma)
        if sigma.ndim != 1 or sigma.size < 1:
            raise DimensionMismatch("sigma must be a non-empty vector")
        _require_finite(sigma, "sigma")
        if not (sigma > 0).all():
            raise ValidationError("sigma entries must be strictly positive")
        object.__setattr__(self, "sigma", sigma)


@dataclass(frozen=True, eq=False)
class PdccCovariance:
    """Pattern-dictionary covariance ``U diag(aux_sigma**2) U^T + ridge * I``.

    ``aux_sigma`` holds one positive scale per dictionary pattern; ``ridge``
    is a non-negative diagonal stabilizer applied at materialization, before
    any partitioning.
    """

    dictionary: PatternDictionary
    aux_sigma: NDArray[np.float64]
    ridge: float

    def __post_init__(self):
        if not isinstance(self.dictionary, PatternDictionary):
            raise ValidationError("dictionary must be a PatternDictionary")
        aux = _frozen_array(self.aux_sigma)
        if aux.ndim != 1:
            raise DimensionMismatch("aux_sigma must be a vector")
        if aux.size != self.dictionary.n_patterns:
            raise DimensionMismatch(
                f"aux_sigma length {aux.size} does not match dictionary pattern count "
                f"{self.dictionary.n_patterns}"
            )
        _require_finite(aux, "aux_sigma")
        if not (aux > 0).all():
            raise ValidationError("aux_sigma entries must be strictly positive")
        ridge = float(self.ridge)
        if not np.isfinite(ridge) or ridge < 0:
            raise ValidationError("ridge must be finite and >= 0")
        object.__setattr__(self, "aux_sigma", aux)
        object.__setattr__(self, "ridge", ridge)


@dataclass(frozen=True, eq=False)
class DenseCovariance:
    """Explicit symmetric covariance matrix (symmetry tolerance 1e-10)."""

    matrix: NDArray[np.float64]

    def __post_init__(self):
        mat = _frozen_array(self.matrix)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1] or mat.shape[0] < 1:
            raise DimensionMismatch("covariance matrix must be square and non-empty")
        _require_finite(mat, "covariance matrix")
        if not np.allclose(mat, mat.T, rtol=0.0, atol=SYMMETRY_TOL):
            raise ValidationError("covariance matrix is not symmetric within 1e-10")
        object.__setattr__(self, "matrix", mat)


CovarianceSpec = Union[DiagonalCovariance, PdccCovariance, DenseCovariance]


def dimension(cov: CovarianceSpec) -> int:
    """Number of time steps the covariance spans."""
    if isinstance(cov, DiagonalCovariance):
        return cov.sigma.size
    if isinstance(cov, PdccCovariance):
        return cov.dictionary.horizon
    if isinstance(cov, DenseCovariance):
        return cov.matrix.shape[0]
    raise ValidationError(f"not a covariance spec: {type(cov).__name__}")


def materialize(cov: CovarianceSpec) -> np.ndarray:
    """Expand a covariance spec into a full symmetric matrix.

    Diagonal specs become ``diag(sigma**2)``; pattern-dictionary specs become
    ``U diag(aux_sigma**2) U^T + ridge * I``; dense specs return their stored
    (read-only) matrix unchanged.
    """
    if isinstance(cov, DiagonalCovariance):
        return np.diag(cov.sigma**2)
    if isinstance(cov, PdccCovariance):
        u = cov.dictionary.u
        mat = (u * cov.aux_sigma**2) @ u.T
        if cov.ridge:
            mat[np.diag_indices_from(mat)] += cov.ridge
        return mat
    if isinstance(cov, DenseCovariance):
        return cov.matrix
    raise ValidationError(f"not a covariance spec: {type(cov).__name__}")


def _jitter_schedule():
    jitter = JITTER_INITIAL
    while jitter <= JITTER_MAX * (1 + 1e-12):
        yield jitter
        jitter *= JITTER_GROWTH


def cholesky_lower(matrix: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of ``matrix`` under the jitter-escalation policy.

    Raises
    ------
    NotPositiveDefinite
        If factorization still fails with the maximum jitter (1e-4).
    NonFiniteInput
        If the matrix contains non-finite entries.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    _require_finite(matrix, "matrix")
    try:
        return np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError:
        pass
    eye = np.eye(matrix.shape[0])
    for jitter in _jitter_schedule():
        try:
            return np.linalg.cholesky(matrix + jitter * eye)
        except np.linalg.LinAlgError:
            continue
    raise NotPositiveDefinite(
        f"matrix is not positive definite even with jitter up to {JITTER_MAX:g}"
    )


def cholesky_lower_batch(stack: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Factor a ``(K, n, n)`` stack, flagging rather than raising on failure.

    Returns
    -------
    factors : ndarray of shape (K, n, n)
        Lower Cholesky factors; rows whose factorization failed are set to the
        identity and must be ignored via the mask.
    ok : ndarray of shape (K,), bool
        True where factorization (possibly jittered) succeeded.
    """
    stack = np.asarray(stack, dtype=np.float64)
    if stack.ndim != 3 or stack.shape[1] != stack.shape[2]:
        raise DimensionMismatch("expected a (K, n, n) stack")
    k = stack.shape[0]
    ok = np.ones(k, dtype=bool)
    try:
        return np.linalg.cholesky(stack), ok
    except np.linalg.LinAlgError:
        pass
    factors = np.empty_like(stack)
    eye = np.eye(stack.shape[1])
    for i in range(k):
        try:
            factors[i] = cholesky_lower(stack[i])
        except NotPositiveDefinite:
            factors[i] = eye
            ok[i] = False
    return factors, ok

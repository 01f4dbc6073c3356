"""Small dense complex linear algebra for the artificial-noise construction.

Channels and signals are plain numpy arrays (complex128): matrices are 2-D,
vectors 1-D. Everything here stays tiny (a handful of antennas on a side),
so the null-space basis is computed by full SVD, which is numerically the
most robust choice at these sizes. Rank is decided from the singular
values relative to the largest one.

All randomness flows through an explicit ``numpy.random.Generator`` so
callers control seeding; there is no hidden global state.
"""

import numpy as np

from .errors import (
    DimensionMismatchError,
    NegativeVarianceError,
    NoNullSpaceError,
    NonFiniteError,
)

DEFAULT_TOLERANCE = 1e-12


def _as_matrix(a, name="matrix"):
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim == 1:
        a = a[np.newaxis, :]
    if a.ndim != 2:
        raise DimensionMismatchError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def null_space_basis(h, tolerance=DEFAULT_TOLERANCE):
    """Orthonormal basis of the null space of ``h``, one column per dimension.

    Parameters
    ----------
    h : array_like, shape (r, t)
        Complex matrix. A 1-D array is treated as a single row.
    tolerance : float
        Relative threshold: singular values below ``tolerance * s_max``
        count as zero when deciding the rank.

    Returns
    -------
    z : ndarray, shape (t, t - rank)
        Columns satisfy ``h @ z ~ 0`` and ``z.conj().T @ z = I`` to working
        precision. Column phases are arbitrary.

    Raises
    ------
    NoNullSpaceError
        If ``h`` has full column rank.
    NonFiniteError
        If ``h`` contains NaN or Inf.
    """
    h = _as_matrix(h, "h")
    if not np.all(np.isfinite(h)):
        raise NonFiniteError("matrix contains NaN or Inf entries")
    if tolerance <= 0:
        raise ValueError(f"tolerance must be positive, got {tolerance}")
    n_cols = h.shape[1]
    _, s, vh = np.linalg.svd(h)
    s_max = s[0] if s.size else 0.0
    rank = int(np.sum(s > tolerance * s_max))
    if rank >= n_cols:
        raise NoNullSpaceError(
            f"matrix of shape {h.shape} has rank {rank}; null space is trivial"
        )
    return vh[rank:].conj().T.copy()


def hermitian(a):
    """Conjugate transpose A^H. 1-D input is treated as a row vector."""
    return _as_matrix(a).conj().T.copy()


def sample_complex_gaussian(n, variance, rng):
    """Vector of ``n`` i.i.d. circularly symmetric CN(0, variance) samples.

    Real and imaginary parts are independent N(0, variance/2), so
    E|entry|^2 == variance. ``variance == 0`` gives an exact zero vector.
    """
    if variance < 0:
        raise NegativeVarianceError(f"variance must be >= 0, got {variance}")
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


def matvec(a, x):
    """Matrix-vector product with an explicit dimension check."""
    a = _as_matrix(a, "a")
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim != 1:
        raise DimensionMismatchError(f"x must be 1-D, got shape {x.shape}")
    if a.shape[1] != x.shape[0]:
        raise DimensionMismatchError(
            f"cannot multiply {a.shape} matrix by length-{x.shape[0]} vector"
        )
    return a @ x


def norm(x):
    """Euclidean norm of a vector."""
    return float(np.linalg.norm(np.asarray(x)))


def frobenius_norm(a):
    """Frobenius norm of a matrix."""
    return float(np.linalg.norm(np.asarray(a)))

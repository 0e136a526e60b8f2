"""Dense complex linear-algebra primitives.

All decompositions run a deterministic cyclic Jacobi iteration with a
fixed sweep order, so results are reproducible bit-for-bit on identical
input.  The operator norm alone goes through LAPACK singular values: it
is called far more often than the decompositions and only its largest
singular value is consumed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _jacobi
from .config import DEFAULT_TOLS, Tolerances
from .errors import NotHermitian, NotSkewHermitian, ValidationError

_MAX_SWEEPS = 60


@dataclass
class SpectralData:
    """Eigendecomposition of a Hermitian matrix.

    ``eigenvalues`` are real and sorted descending; ``eigenvectors`` holds
    the matching orthonormal eigenvectors as columns.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.conj().T


@dataclass
class PolarData:
    """Polar/singular data of a general matrix ``v``.

    ``isometric_part`` is the partial isometry of the polar decomposition
    (zero on the kernel of ``|v|``), ``positive_part`` is ``(v*v)^(1/2)``
    and ``singular_values`` are sorted descending.
    """

    isometric_part: np.ndarray
    positive_part: np.ndarray
    singular_values: np.ndarray


def as_matrix(a) -> np.ndarray:
    a = np.ascontiguousarray(np.asarray(a, dtype=np.complex128))
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ValidationError("expected a matrix with rows, cols >= 1")
    if not np.all(np.isfinite(a.real)) or not np.all(np.isfinite(a.imag)):
        raise ValidationError("matrix entries must be finite")
    return a


def operator_norm(a) -> float:
    """Largest singular value of ``a``."""
    a = as_matrix(a)
    if a.shape == (1, 1):
        return abs(a[0, 0])
    return float(np.linalg.svd(a, compute_uv=False)[0])


def herm_eig(b, tols: Tolerances = DEFAULT_TOLS) -> SpectralData:
    """Eigendecomposition of a Hermitian matrix by cyclic Jacobi rotations.

    Raises NotHermitian when ``norm(b - b*) > herm_tol * norm(b)``.  The
    strictly Hermitian part ``(b + b*)/2`` is what gets diagonalized.
    """
    b = as_matrix(b)
    if b.shape[0] != b.shape[1]:
        raise NotHermitian("matrix is not square")
    scale = operator_norm(b)
    if operator_norm(b - b.conj().T) > tols.herm_tol * max(scale, 1e-300):
        raise NotHermitian("matrix is not Hermitian within tolerance")
    h = np.ascontiguousarray((b + b.conj().T) / 2.0)
    n = h.shape[0]
    v = np.eye(n, dtype=np.complex128)
    # convergence floor scales with n: off-diagonal rounding noise does too
    sweeps = _jacobi.hermitian_sweeps(h, v, 2e-15 * n * max(scale, 1e-300), _MAX_SWEEPS)
    if sweeps < 0:
        raise ValidationError("Jacobi eigenvalue iteration did not converge")
    lam = np.diag(h).real.copy()
    order = np.argsort(-lam, kind="stable")
    return SpectralData(eigenvalues=lam[order], eigenvectors=np.ascontiguousarray(v[:, order]))


def _onesided_svd(a):
    """One-sided Jacobi SVD; returns (u_cols, sv, v) with a = u_cols * sv @ v*."""
    work = a.copy()
    n = work.shape[1]
    v = np.eye(n, dtype=np.complex128)
    pair_tol = 1e-15 * np.sqrt(max(work.shape[0], n))
    sweeps = _jacobi.onesided_sweeps(work, v, pair_tol, _MAX_SWEEPS)
    if sweeps < 0:
        raise ValidationError("Jacobi singular value iteration did not converge")
    sv = np.sqrt(np.sum(work.real**2 + work.imag**2, axis=0))
    order = np.argsort(-sv, kind="stable")
    return work[:, order], sv[order], v[:, order]


def polar_svd(v, tols: Tolerances = DEFAULT_TOLS) -> PolarData:
    """Polar decomposition data via one-sided Jacobi.

    The isometric part keeps exactly the singular directions above
    ``rank_rel * max_sv``; everything below counts as kernel.
    """
    v = as_matrix(v)
    m, n = v.shape
    cols, sv, w = _onesided_svd(v)
    keep = sv > tols.rank_rel * (sv[0] if sv.size else 0.0)
    u = np.zeros((m, n), dtype=np.complex128)
    u[:, keep] = cols[:, keep] / sv[keep]
    isometric = u @ w.conj().T
    positive = (w * sv) @ w.conj().T
    positive = (positive + positive.conj().T) / 2.0
    return PolarData(
        isometric_part=isometric,
        positive_part=positive,
        singular_values=sv[: min(m, n)],
    )


def exp_skew(k, tols: Tolerances = DEFAULT_TOLS) -> np.ndarray:
    """Unitary exponential of a skew-Hermitian matrix.

    Raises NotSkewHermitian when ``norm(k + k*) > herm_tol``; the strictly
    skew part is what gets exponentiated.
    """
    k = as_matrix(k)
    if k.shape[0] != k.shape[1]:
        raise NotSkewHermitian("matrix is not square")
    if operator_norm(k + k.conj().T) > tols.herm_tol:
        raise NotSkewHermitian("matrix is not skew-Hermitian within tolerance")
    skew = (k - k.conj().T) / 2.0
    spec = herm_eig(-1j * skew, tols)
    phases = np.exp(1j * spec.eigenvalues)
    return (spec.eigenvectors * phases) @ spec.eigenvectors.conj().T

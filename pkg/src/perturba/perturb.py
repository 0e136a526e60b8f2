"""Correction algorithms: from approximately structured to exactly structured.

Every routine returns the corrected matrix together with a certificate
recording the measured input defect, the distance moved, the residual
violation of the target identity, and (where one exists) the explicit
distance bound that the construction guarantees.

Sub-diagonal blocks of triangularized outputs are zero by construction,
not merely small, so membership in the target algebra is bit-exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import BlockComposition, MasaPartition, expectation
from .config import DEFAULT_TOLS, Tolerances
from .errors import (
    DefectTooLarge,
    DimensionMismatch,
    NotHermitian,
    NotPartialIsometry,
    NotProjection,
    ProjectionsTooFar,
    RankMismatch,
    ValidationError,
)
from .numkernel import as_matrix, herm_eig, operator_norm, polar_svd


@dataclass
class CorrectionCertificate:
    """Measured quantities certifying one correction.

    ``bound_claimed`` is the construction's explicit distance bound when
    one exists; ``correction_distance <= bound_claimed`` must then hold.
    """

    input_defect: float
    correction_distance: float
    structural_residual: float
    bound_claimed: float | None = None

    def to_obj(self) -> dict:
        return {
            "input_defect": self.input_defect,
            "correction_distance": self.correction_distance,
            "structural_residual": self.structural_residual,
            "bound_claimed": self.bound_claimed,
        }


def _square(x) -> np.ndarray:
    x = as_matrix(x)
    if x.shape[0] != x.shape[1]:
        raise DimensionMismatch("matrix must be square")
    return x


def round_to_projection(b, tols: Tolerances = DEFAULT_TOLS):
    """Round a near-idempotent Hermitian matrix to a spectral projection.

    Requires ``delta = norm(b^2 - b) < 1/4``.  Eigenvalues round at the
    midpoint 1/2; the output commutes with ``b`` and satisfies
    ``norm(p - b) <= 2 delta``.
    """
    b = _square(b)
    n = b.shape[0]
    scale = operator_norm(b)
    if operator_norm(b - b.conj().T) > tols.herm_tol * max(scale, 1e-300):
        raise NotHermitian("input is not Hermitian within tolerance")
    delta = operator_norm(b @ b - b)
    if delta >= tols.round_ceiling:
        raise DefectTooLarge(
            f"projection rounding requires norm(b^2 - b) < {tols.round_ceiling}; got {delta:.6g}"
        )
    spec = herm_eig(b, tols)
    keep = spec.eigenvectors[:, spec.eigenvalues >= 0.5]
    p = keep @ keep.conj().T
    p = (p + p.conj().T) / 2.0
    residual = max(
        operator_norm(p @ p - p),
        operator_norm(p - p.conj().T),
        operator_norm(p @ b - b @ p),
    )
    cert = CorrectionCertificate(
        input_defect=delta,
        correction_distance=operator_norm(p - b),
        structural_residual=residual,
        bound_claimed=2.0 * delta,
    )
    return p, cert


def fix_partial_isometry(v, tols: Tolerances = DEFAULT_TOLS):
    """Correct an approximate partial isometry to an exact one.

    Requires ``eps = norm(v*v - (v*v)^2) < 1/4``.  The output is the polar
    isometric part cut down by the spectral projection of ``v*v`` at 1/2,
    so it is dominated by the polar partial isometry, and the distance is
    bounded by ``norm(|v| - p)`` (recorded as the claimed bound).
    """
    v = as_matrix(v)
    g = v.conj().T @ v
    eps = operator_norm(g - g @ g)
    if eps >= tols.round_ceiling:
        raise DefectTooLarge(
            f"partial isometry correction requires norm(v*v - (v*v)^2) < {tols.round_ceiling}; got {eps:.6g}"
        )
    pol = polar_svd(v, tols)
    spec = herm_eig(g, tols)
    keep = spec.eigenvectors[:, spec.eigenvalues >= 0.5]
    p = keep @ keep.conj().T
    vhat = pol.isometric_part @ p
    gh = vhat.conj().T @ vhat
    residual = max(operator_norm(gh - gh @ gh), operator_norm(gh - gh.conj().T))
    cert = CorrectionCertificate(
        input_defect=eps,
        correction_distance=operator_norm(v - vhat),
        structural_residual=residual,
        bound_claimed=operator_norm(pol.positive_part - p),
    )
    return vhat, cert


def _require_projection(p, tols: Tolerances, name: str) -> np.ndarray:
    p = _square(p)
    tol = tols.struct_tol(p.shape[0])
    if operator_norm(p @ p - p) > tol or operator_norm(p - p.conj().T) > tol:
        raise NotProjection(f"{name} is not a projection within tolerance")
    return p


def conjugating_unitary(p, q, tols: Tolerances = DEFAULT_TOLS):
    """Unitary ``u`` with ``q = u p u*`` and ``norm(I - u) <= sqrt(2) norm(q - p)``.

    ``u`` is the unitary polar factor of ``I - p - q + 2qp``, which is
    invertible precisely when ``norm(q - p) < 1``.
    """
    p = _require_projection(p, tols, "p")
    q = _require_projection(q, tols, "q")
    if p.shape != q.shape:
        raise DimensionMismatch("projections must have equal shape")
    n = p.shape[0]
    d = operator_norm(q - p)
    if d >= 1.0:
        raise ProjectionsTooFar(f"projections at distance {d:.6g} >= 1 cannot be conjugated")
    v = np.eye(n) - p - q + 2.0 * (q @ p)
    pol = polar_svd(v, tols)
    if pol.singular_values[-1] <= tols.rank_rel * max(pol.singular_values[0], 1e-300):
        raise ProjectionsTooFar("interpolating element is numerically singular")
    u = pol.isometric_part
    residual = max(
        operator_norm(u @ u.conj().T - np.eye(n)),
        operator_norm(q - u @ p @ u.conj().T),
    )
    cert = CorrectionCertificate(
        input_defect=d,
        correction_distance=operator_norm(np.eye(n) - u),
        structural_residual=residual,
        bound_claimed=np.sqrt(2.0) * d,
    )
    return u, cert


def _blockwise_round_projection(x, comp: BlockComposition, tols: Tolerances):
    """Round a block-diagonal Hermitian matrix blockwise; exact support."""
    n = comp.total
    p = np.zeros((n, n), dtype=complex)
    worst = 0.0
    for k in range(1, comp.r + 1):
        sl = comp.block_slice(k)
        blk = np.ascontiguousarray(x[sl, sl])
        pb, cert = round_to_projection(blk, tols)
        p[sl, sl] = pb
        worst = max(worst, cert.structural_residual)
    return p, worst


def align_block_diagonal_range(w, comp: BlockComposition, v, tols: Tolerances = DEFAULT_TOLS):
    """Rotate a partial isometry so its final projection is block diagonal.

    ``v`` is an exact partial isometry near ``w`` whose range projection
    ``v v*`` is nearly block diagonal.  The output is ``u v`` for the
    unitary conjugating ``v v*`` onto its block-diagonal rounding, with
    distance at most ``norm(w - v) + sqrt(2) norm(vv* - p)``.  The
    composition describes the row space; rectangular inputs are fine.
    """
    w = as_matrix(w)
    v = as_matrix(v)
    if w.shape != v.shape:
        raise DimensionMismatch("w and v must have equal shape")
    if w.shape[0] != comp.total:
        raise DimensionMismatch("matrices do not match the composition")
    eps1 = operator_norm(w - v)
    pprime = v @ v.conj().T
    masa = MasaPartition.from_blocks(comp)
    compressed = expectation(pprime, masa)
    compressed = (compressed + compressed.conj().T) / 2.0
    p, _ = _blockwise_round_projection(compressed, comp, tols)
    tilt = operator_norm(pprime - p)
    u, ucert = conjugating_unitary(pprime, p, tols)
    wbar = u @ v
    final = wbar @ wbar.conj().T
    residual = max(
        operator_norm(final - expectation(final, masa)),
        operator_norm(final @ final - final),
    )
    cert = CorrectionCertificate(
        input_defect=max(eps1, tilt),
        correction_distance=operator_norm(w - wbar),
        structural_residual=residual,
        bound_claimed=eps1 + np.sqrt(2.0) * tilt,
    )
    return wbar, cert


def _triangularize_rect(v, rows, cols, tols: Tolerances, depth: int):
    """Recursive block triangularization for possibly non-square blocks.

    ``v`` is an exact partial isometry whose final projection is block
    diagonal relative to ``rows``; entries of the output below the block
    diagonal (row block > column block) are exactly zero.
    """
    if len(rows) == 1:
        return v
    m1, k1 = rows[0], cols[0]
    m_rest, k_rest = sum(rows[1:]), sum(cols[1:])
    try:
        if k_rest == 0:
            # everything right of block column 1 is empty: rows 2..r must vanish
            if m1 == 0:
                return np.zeros_like(v)
            w1, _ = fix_partial_isometry(np.ascontiguousarray(v[:m1, :]), tols)
            return np.vstack([w1, np.zeros((m_rest, v.shape[1]), dtype=complex)])
        if m_rest == 0:
            # no rows below block 1: nothing sits under the diagonal
            return v
        u_blk = np.ascontiguousarray(v[m1:, k1:])
        u_fixed, _ = fix_partial_isometry(u_blk, tols)
        # zero-size row blocks carry no entries; squeeze them for the alignment
        row_comp = BlockComposition(tuple(r for r in rows[1:] if r > 0))
        u_aligned, _ = align_block_diagonal_range(u_blk, row_comp, u_fixed, tols)
    except DefectTooLarge as exc:
        raise DefectTooLarge(str(exc), stage=f"triangularize-depth-{depth}") from exc
    u_hat = _triangularize_rect(u_aligned, rows[1:], cols[1:], tols, depth + 1)
    w2 = np.hstack([np.zeros((m_rest, k1), dtype=complex), u_hat])
    if m1 == 0:
        return w2
    q = w2.conj().T @ w2
    w1_tilde = v[:m1, :] @ (np.eye(v.shape[1]) - q)
    try:
        w1, _ = fix_partial_isometry(np.ascontiguousarray(w1_tilde), tols)
    except DefectTooLarge as exc:
        raise DefectTooLarge(str(exc), stage=f"triangularize-depth-{depth}") from exc
    return np.vstack([w1, w2])


def _subdiagonal_defect(v, row_comp: BlockComposition, col_comp: BlockComposition) -> float:
    worst = 0.0
    for i in range(2, row_comp.r + 1):
        for j in range(1, i):
            blk = v[row_comp.block_slice(i), col_comp.block_slice(j)]
            if blk.size:
                worst = max(worst, operator_norm(blk))
    return worst


def _zero_subdiagonal(v, row_comp: BlockComposition, col_comp: BlockComposition) -> np.ndarray:
    out = v.copy()
    for i in range(2, row_comp.r + 1):
        for j in range(1, i):
            out[row_comp.block_slice(i), col_comp.block_slice(j)] = 0.0
    return out


def block_triangularize(v, comp: BlockComposition, tols: Tolerances = DEFAULT_TOLS):
    """Correct a partial isometry with block-diagonal range to block upper
    triangular form.

    The first block row is split off, the remaining corner is rounded to a
    partial isometry with exactly block-diagonal range and triangularized
    recursively, and the first row is compressed against the result and
    re-rounded.  Unitary inputs stay unitary whenever the total distance
    moved is below one.
    """
    v = _square(v)
    n = comp.total
    if v.shape[0] != n:
        raise DimensionMismatch("matrix does not match the composition")
    tol = tols.struct_tol(n)
    g = v.conj().T @ v
    if operator_norm(g - g @ g) > tol:
        raise NotPartialIsometry("input is not a partial isometry within tolerance")
    final = v @ v.conj().T
    if operator_norm(final - expectation(final, MasaPartition.from_blocks(comp))) > tol:
        raise ValidationError("final projection is not block diagonal within tolerance")
    eps_in = _subdiagonal_defect(v, comp, comp)
    vhat = _triangularize_rect(v, comp.sizes, comp.sizes, tols, depth=0)
    vhat = _zero_subdiagonal(vhat, comp, comp)
    gh = vhat.conj().T @ vhat
    residual = max(operator_norm(gh - gh @ gh), operator_norm(gh - gh.conj().T))
    cert = CorrectionCertificate(
        input_defect=eps_in,
        correction_distance=operator_norm(v - vhat),
        structural_residual=residual,
        bound_claimed=None,
    )
    return vhat, cert


def _range_basis_blockwise(p, comp: BlockComposition, tols: Tolerances):
    """Orthonormal bases of the ranges of the diagonal blocks of ``p``."""
    bases = []
    for k in range(1, comp.r + 1):
        sl = comp.block_slice(k)
        blk = np.ascontiguousarray(p[sl, sl])
        spec = herm_eig(blk, tols)
        bases.append(spec.eigenvectors[:, spec.eigenvalues >= 0.5])
    return bases


def frame_triangularize(b, comp: BlockComposition, P, Q, tols: Tolerances = DEFAULT_TOLS):
    """Triangularize a partial isometry between two block-diagonal frames.

    ``b`` maps ran Q unitarily onto ran P (``b*b = Q``, ``bb* = P``).  The
    matrix is compressed to those ranges blockwise, the reduced square
    matrix is block triangularized, and the result is expanded back; the
    sub-diagonal blocks of the output vanish identically while both frame
    identities are preserved.
    """
    b = _square(b)
    n = comp.total
    if b.shape[0] != n:
        raise DimensionMismatch("matrix does not match the composition")
    P = _require_projection(P, tols, "P")
    Q = _require_projection(Q, tols, "Q")
    masa = MasaPartition.from_blocks(comp)
    tol = tols.struct_tol(n)
    if operator_norm(P - expectation(P, masa)) > tol or operator_norm(Q - expectation(Q, masa)) > tol:
        raise ValidationError("frames must be block diagonal")
    rank_p = int(round(float(np.trace(P).real)))
    rank_q = int(round(float(np.trace(Q).real)))
    if rank_p != rank_q:
        raise RankMismatch(f"frame ranks differ: {rank_p} vs {rank_q}")
    if operator_norm(b.conj().T @ b - Q) > tol or operator_norm(b @ b.conj().T - P) > tol:
        raise ValidationError("b does not intertwine the given frames")
    p_bases = _range_basis_blockwise(P, comp, tols)
    q_bases = _range_basis_blockwise(Q, comp, tols)
    rows = tuple(base.shape[1] for base in p_bases)
    cols = tuple(base.shape[1] for base in q_bases)
    if sum(rows) != sum(cols):
        raise RankMismatch("blockwise frame ranks are inconsistent")
    B = np.zeros((n, sum(rows)), dtype=complex)
    C = np.zeros((n, sum(cols)), dtype=complex)
    ro, co = 0, 0
    for k in range(1, comp.r + 1):
        sl = comp.block_slice(k)
        pb, qb = p_bases[k - 1], q_bases[k - 1]
        B[sl, ro:ro + pb.shape[1]] = pb
        C[sl, co:co + qb.shape[1]] = qb
        ro += pb.shape[1]
        co += qb.shape[1]
    reduced = B.conj().T @ b @ C
    eps_in = _subdiagonal_defect(b, comp, comp)
    reduced_hat = _triangularize_rect(reduced, rows, cols, tols, depth=0)
    bhat = B @ reduced_hat @ C.conj().T
    bhat = _zero_subdiagonal(bhat, comp, comp)
    residual = max(
        operator_norm(bhat.conj().T @ bhat - Q),
        operator_norm(bhat @ bhat.conj().T - P),
    )
    if residual > tol:
        raise DefectTooLarge(
            f"frame identities lost during triangularization (residual {residual:.3g})",
            stage="frame-triangularize",
        )
    cert = CorrectionCertificate(
        input_defect=eps_in,
        correction_distance=operator_norm(b - bhat),
        structural_residual=residual,
        bound_claimed=None,
    )
    return bhat, cert


def partial_isometry_rank(v, tols: Tolerances = DEFAULT_TOLS) -> int:
    v = as_matrix(v)
    g = v.conj().T @ v
    tol = tols.struct_tol(max(v.shape))
    if operator_norm(g - g @ g) > tol:
        raise NotPartialIsometry("matrix is not a partial isometry within tolerance")
    return int(round(float(np.trace(g).real)))


def check_rank_stability(v, w, tols: Tolerances = DEFAULT_TOLS) -> bool:
    """Whether two partial isometries have equal rank.

    Guaranteed true whenever ``norm(v - w) < 1``.
    """
    return partial_isometry_rank(v, tols) == partial_isometry_rank(w, tols)

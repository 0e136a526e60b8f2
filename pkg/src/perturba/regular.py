"""Masa-relative corrections and synthesis of regular embeddings.

Everything here works at the cell level: a digraph pattern on k vertices
together with a k-cell partition of the ambient diagonal describes an
algebra spanned by aligned cell-to-cell units.  Normalizing elements of
such an algebra are cell permutations with unimodular scalar blocks, so
exactness of the corrected objects is a structural property (support and
modulus), not a tolerance statement.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import (
    IncidencePattern,
    MasaPartition,
    MatrixUnitSystem,
    StarEmbedding,
    ampliated_units,
    cell_average,
    expectation,
    matrix_unit_residual,
    normalizer_defect,
    pisometry_defect,
)
from .config import DEFAULT_TOLS, Tolerances
from .errors import (
    AmbiguousSupport,
    DefectTooLarge,
    DimensionMismatch,
    FrameMismatch,
    HypothesisError,
    NotRefined,
    SupportMismatch,
    ValidationError,
)
from .numkernel import as_matrix, operator_norm
from .perturb import CorrectionCertificate


def _check_cell_setup(pattern: IncidencePattern, masa: MasaPartition):
    if pattern.dim != masa.n_cells:
        raise DimensionMismatch("pattern vertices must match partition cells")


def approx_projection_transport(w, p, masa: MasaPartition, tols: Tolerances = DEFAULT_TOLS):
    """Exact masa projections near ``w* p w`` and ``w p w*``.

    ``p`` must be a projection in the masa (a 0/1 sum of cells).  Each
    conjugate is averaged onto the masa and its per-cell scalars rounded
    at 1/2; rounding requires every scalar defect ``|t - t^2|`` below 1/4.
    Returns ``(p1, p2, (r1, r2))`` with the measured residuals.
    """
    w = as_matrix(w)
    p = as_matrix(p)
    if w.shape != (masa.dim, masa.dim) or p.shape != (masa.dim, masa.dim):
        raise DimensionMismatch("matrices do not match the partition")
    diag = np.diag(p).real
    ids = masa.cell_ids()
    for k in range(masa.n_cells):
        vals = set(np.round(diag[ids == k], 12))
        if not vals <= {0.0, 1.0} or len(vals) != 1:
            raise ValidationError("p must be a 0/1 sum of partition cells")
    if operator_norm(p - np.diag(np.diag(p))) > tols.struct_tol(masa.dim):
        raise ValidationError("p must be diagonal")

    def round_conjugate(x):
        avg = np.diag(cell_average(x, masa)).real
        out = np.zeros(masa.dim)
        for k in range(masa.n_cells):
            t = float(avg[ids == k][0])
            if abs(t - t * t) >= tols.round_ceiling:
                raise DefectTooLarge(
                    f"cell scalar {t:.6g} cannot be rounded to 0/1", stage="projection-transport"
                )
            out[ids == k] = 1.0 if t >= 0.5 else 0.0
        return np.diag(out).astype(complex)

    x1 = w.conj().T @ p @ w
    x2 = w @ p @ w.conj().T
    p1 = round_conjugate(x1)
    p2 = round_conjugate(x2)
    residuals = (operator_norm(x1 - p1), operator_norm(x2 - p2))
    return p1, p2, residuals


def _cell_block_norms(v, masa: MasaPartition) -> np.ndarray:
    k = masa.n_cells
    out = np.zeros((k, k))
    for a in range(k):
        ia = np.array(masa.cells[a]) - 1
        for b in range(k):
            ib = np.array(masa.cells[b]) - 1
            out[a, b] = operator_norm(np.ascontiguousarray(v[np.ix_(ia, ib)]))
    return out


def fix_normalizer(v, pattern: IncidencePattern, masa: MasaPartition,
                   tols: Tolerances = DEFAULT_TOLS):
    """Correct an approximately normalizing approximate partial isometry to
    an exact normalizer of the masa inside the pattern algebra.

    The support is the set of cell pairs where the block norm exceeds 1/2;
    it must pick each row and column cell at most once.  The correction is
    the aligned 0/1 sum over the support times a diagonal phase, the phase
    per cell coming from the masa expectation of ``v1* v`` rounded at 1/2.
    """
    _check_cell_setup(pattern, masa)
    v = as_matrix(v)
    if v.shape != (masa.dim, masa.dim):
        raise DimensionMismatch("matrix does not match the partition")
    pdef = pisometry_defect(v)
    ndef = normalizer_defect(v, masa)
    defect = max(pdef, ndef)
    if defect >= tols.round_ceiling:
        raise DefectTooLarge(
            f"normalizer correction requires defects < {tols.round_ceiling}; got {defect:.6g}"
        )
    norms = _cell_block_norms(v, masa)
    support = [(a + 1, b + 1) for a in range(masa.n_cells) for b in range(masa.n_cells)
               if norms[a, b] > 0.5]
    for a, b in support:
        if (a, b) not in pattern.pairs:
            raise ValidationError(
                f"large block at cell pair ({a},{b}) outside the pattern; input not in the algebra span"
            )
        if len(masa.cells[a - 1]) != len(masa.cells[b - 1]):
            raise AmbiguousSupport(f"support pairs cells of unequal size at ({a},{b})")
    rows = [a for a, _ in support]
    cols = [b for _, b in support]
    if len(set(rows)) != len(rows) or len(set(cols)) != len(cols):
        raise AmbiguousSupport("two support blocks share a row or column cell")

    n = masa.dim
    v1 = np.zeros((n, n), dtype=complex)
    for a, b in support:
        for x, y in zip(masa.cells[a - 1], masa.cells[b - 1]):
            v1[x - 1, y - 1] = 1.0
    d = np.diag(cell_average(v1.conj().T @ v, masa))
    ids = masa.cell_ids()
    phases = np.zeros(n, dtype=complex)
    for k in range(masa.n_cells):
        lam = complex(d[ids == k][0])
        t = abs(lam)
        if abs(t - t * t) >= tols.round_ceiling:
            raise DefectTooLarge(
                f"phase magnitude {t:.6g} cannot be rounded to 0/1", stage="normalizer-phase"
            )
        phases[ids == k] = lam / t if t > 0.5 else 0.0
    vhat = v1 @ np.diag(phases)

    nz = np.abs(vhat) > 0.0
    residual = float(np.max(np.abs(np.abs(vhat[nz]) - 1.0))) if nz.any() else 0.0
    cert = CorrectionCertificate(
        input_defect=defect,
        correction_distance=operator_norm(v - vhat),
        structural_residual=residual,
        bound_claimed=None,
    )
    return vhat, cert


def masa_containment(c1: MasaPartition, c2: MasaPartition) -> dict:
    """Refinement map of one partition masa inside a finer one.

    Maps each cell index of ``c1`` to the tuple of ``c2`` cell indices
    partitioning it; raises NotRefined with a witness when some ``c2``
    cell straddles a ``c1`` boundary.
    """
    if c1.dim != c2.dim:
        raise DimensionMismatch("partitions live on different dimensions")
    owner = {}
    for k, cell in enumerate(c1.cells, start=1):
        for i in cell:
            owner[i] = k
    refinement = {k: [] for k in range(1, c1.n_cells + 1)}
    for l, cell in enumerate(c2.cells, start=1):
        owners = {owner[i] for i in cell}
        if len(owners) > 1:
            raise NotRefined(
                f"cell {tuple(cell)} straddles cells {sorted(owners)}; "
                "the coarse projection sits at distance 1 from the fine masa"
            )
        refinement[owners.pop()].append(l)
    return {k: tuple(v) for k, v in refinement.items()}


def algebra_truncate(x, pattern: IncidencePattern, masa: MasaPartition) -> np.ndarray:
    """Orthogonal projection (Frobenius) onto the span of the aligned cell units."""
    _check_cell_setup(pattern, masa)
    x = as_matrix(x)
    if x.shape != (masa.dim, masa.dim):
        raise DimensionMismatch("matrix does not match the partition")
    units = ampliated_units(pattern, masa)
    out = np.zeros_like(x)
    for _, g in units.generators():
        m = float(np.sum(np.abs(g) ** 2))
        coeff = np.sum(np.conj(g) * x) / m
        out = out + coeff * g
    return out


def transfer_normalizer(v, pattern: IncidencePattern, masa: MasaPartition,
                        tols: Tolerances = DEFAULT_TOLS):
    """Move a normalizing partial isometry into the normalizer of a
    subalgebra it approximately lies in.

    The input is projected onto the algebra span; the projection must stay
    within 1/4 of the input, approximately normalizes the cell masa
    because the input exactly normalized the finer one, and is then
    corrected to an exact normalizer.
    """
    v = as_matrix(v)
    w = algebra_truncate(v, pattern, masa)
    eps = operator_norm(v - w)
    if eps >= tols.round_ceiling:
        raise DefectTooLarge(
            f"distance {eps:.6g} to the algebra span exceeds {tols.round_ceiling}",
            stage="transfer-truncation",
        )
    vhat, cert = fix_normalizer(w, pattern, masa, tols)
    return vhat, CorrectionCertificate(
        input_defect=eps,
        correction_distance=operator_norm(v - vhat),
        structural_residual=cert.structural_residual,
        bound_claimed=None,
    )


@dataclass(frozen=True)
class TreeWords:
    """Spanning-forest factorization data of a digraph pattern.

    ``tree_edges`` lists the chosen generator pairs; ``words`` maps each
    off-diagonal pattern pair to its unique reduced path, encoded as
    signed 1-based edge indices (negative means the adjoint).
    """

    pattern: IncidencePattern
    tree_edges: tuple
    words: dict


def tree_words(pattern: IncidencePattern) -> TreeWords:
    """Choose a deterministic spanning forest and factor every off-diagonal
    pattern pair through it.

    Edges of the transitive reduction come first (they generate the digraph
    without shortcuts), lexicographically, then any remaining pattern edges;
    a union-find scan keeps the first edge joining two components.
    """
    n = pattern.dim
    undirected = {}
    for i, j in sorted(pattern.pairs):
        if i == j:
            continue
        key = (min(i, j), max(i, j))
        if key not in undirected or (i, j) < undirected[key]:
            undirected[key] = (i, j)

    def is_reduced(pair):
        i, j = pair
        return not any(
            k != i and k != j and (i, k) in pattern.pairs and (k, j) in pattern.pairs
            for k in range(1, n + 1)
        )

    ordered = sorted(undirected, key=lambda key: (not is_reduced(undirected[key]), key))

    parent = list(range(n + 1))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    edges = []
    adjacency = {i: [] for i in range(1, n + 1)}
    for key in ordered:
        i, j = undirected[key]
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            edges.append((i, j))
            k = len(edges)
            adjacency[i].append((j, k))
            adjacency[j].append((i, -k))

    def path(src, dst):
        # BFS in the forest; the path is unique
        prev = {src: None}
        queue = [src]
        while queue:
            cur = queue.pop(0)
            if cur == dst:
                break
            for nxt, signed in adjacency[cur]:
                if nxt not in prev:
                    prev[nxt] = (cur, signed)
                    queue.append(nxt)
        if dst not in prev:
            return None
        steps = []
        cur = dst
        while prev[cur] is not None:
            cur, signed = prev[cur]
            steps.append(signed)
        return tuple(reversed(steps))

    words = {}
    for i, j in pattern.pairs:
        if i == j:
            words[(i, j)] = ()
            continue
        w = path(i, j)
        if w is None:
            raise ValidationError(f"pattern pair ({i},{j}) spans disconnected components")
        words[(i, j)] = w
    return TreeWords(pattern=pattern, tree_edges=tuple(edges), words=words)


def evaluate_word(word, edge_mats, start_projection=None):
    """Product of edge matrices (or adjoints) along a signed word."""
    result = None
    for step in word:
        mat = edge_mats[abs(step) - 1]
        factor = mat if step > 0 else mat.conj().T
        result = factor if result is None else result @ factor
    if result is None:
        return start_projection
    return result


@dataclass
class SynthesisReport:
    residual: float
    unit_distance_max: float
    bound_claimed: float
    bound_ok: bool
    regular: bool
    support_ok: bool


def synthesize_regular_embedding(a1_pattern: IncidencePattern, masa1: MasaPartition,
                                 edge_images, f_diag, a2_pattern: IncidencePattern,
                                 masa2: MasaPartition, reference: MatrixUnitSystem | None = None,
                                 tols: Tolerances = DEFAULT_TOLS):
    """Generate a full regular embedding from exact edge normalizers.

    ``edge_images`` gives one exact normalizing partial isometry per tree
    edge of the source pattern, with initial and final projections equal to
    the prescribed diagonal projections ``f_diag``.  Every other unit is
    the word product; the largest unit distance is certified to be at most
    ``n1 * (max edge distance)`` against the reference system (canonical
    units of the source when not supplied).
    """
    _check_cell_setup(a2_pattern, masa2)
    tw = tree_words(a1_pattern)
    if len(edge_images) != len(tw.tree_edges):
        raise ValidationError(
            f"expected {len(tw.tree_edges)} edge images, got {len(edge_images)}"
        )
    if reference is None:
        reference = ampliated_units(a1_pattern, masa1)
    n = masa2.dim
    tol = tols.struct_tol(n)

    units = {}
    for i in range(1, a1_pattern.dim + 1):
        units[(i, i)] = as_matrix(f_diag[i])

    edge_mats = [as_matrix(e) for e in edge_images]
    for k, (a, b) in enumerate(tw.tree_edges):
        e = edge_mats[k]
        if operator_norm(e.conj().T @ e - units[(b, b)]) > tol or \
           operator_norm(e @ e.conj().T - units[(a, a)]) > tol:
            raise FrameMismatch(f"edge {k + 1} does not match its prescribed frames")

    mask2 = ampliated_support_mask(a2_pattern, masa2)
    for i, j in a1_pattern.pairs:
        if i == j:
            continue
        f = evaluate_word(tw.words[(i, j)], edge_mats)
        outside = np.abs(np.where(mask2, 0.0, f))
        if outside.size and float(outside.max()) > tol:
            raise SupportMismatch(
                f"word for ({i},{j}) leaves the target pattern (mass {float(outside.max()):.3g})"
            )
        units[(i, j)] = f

    system = MatrixUnitSystem(a1_pattern, n, units)
    residual = matrix_unit_residual(system)

    edge_dist = 0.0
    for k, (a, b) in enumerate(tw.tree_edges):
        edge_dist = max(edge_dist, operator_norm(reference.unit(a, b) - edge_mats[k]))
    dist = 0.0
    for (i, j), u in system.generators():
        dist = max(dist, operator_norm(reference.unit(i, j) - u))
    bound = a1_pattern.dim * edge_dist

    regular = True
    for (i, j), u in system.generators():
        if i == j:
            continue
        nz = np.abs(u) > 0.0
        if nz.any() and float(np.max(np.abs(np.abs(u[nz]) - 1.0))) > tol:
            regular = False

    report = SynthesisReport(
        residual=residual,
        unit_distance_max=dist,
        bound_claimed=bound,
        bound_ok=dist <= bound + tol,
        regular=regular,
        support_ok=True,
    )
    return StarEmbedding(system), report


def ampliated_support_mask(pattern: IncidencePattern, masa: MasaPartition) -> np.ndarray:
    """Entry support of the algebra span: aligned positions of pattern cells."""
    n = masa.dim
    mask = np.zeros((n, n), dtype=bool)
    for i, j in pattern.pairs:
        ci, cj = masa.cells[i - 1], masa.cells[j - 1]
        if len(ci) != len(cj):
            continue
        for a, b in zip(ci, cj):
            mask[a - 1, b - 1] = True
    return mask


@dataclass
class RegularReport:
    """Stage measurements of one regular stabilization run."""

    refinement: dict
    edge_distances: list
    unit_distance_max: float
    residual: float
    bound_claimed: float
    bound_ok: bool
    regular: bool
    source_dim: int
    measured_defect: float


def regular_stabilize(phi1: StarEmbedding, c1: MasaPartition, a2_pattern: IncidencePattern,
                      masa2: MasaPartition, tols: Tolerances = DEFAULT_TOLS):
    """Correct an approximate regular containment to an exact one.

    Stages: verify the masa refinement, transfer each tree-edge normalizer
    into the target algebra, then synthesize the full embedding by words.
    The certificate depends only on the source pattern and the measured
    defect, never on the ambient dimension.
    """
    _check_cell_setup(phi1.pattern, c1)
    _check_cell_setup(a2_pattern, masa2)
    if c1.dim != masa2.dim:
        raise DimensionMismatch("source and target partitions live on different ambients")

    refinement = masa_containment(c1, masa2)
    f_diag = {i: c1.cell_projection(i) for i in range(1, c1.n_cells + 1)}

    tw = tree_words(phi1.pattern)
    edges = []
    edge_dists = []
    measured = 0.0
    for k, (a, b) in enumerate(tw.tree_edges):
        img = phi1.unit(a, b)
        try:
            vhat, cert = transfer_normalizer(img, a2_pattern, masa2, tols)
        except HypothesisError as exc:
            raise type(exc)(str(exc), stage=f"transfer-edge-{k + 1}") from exc
        measured = max(measured, cert.input_defect)
        edges.append(vhat)
        edge_dists.append(operator_norm(img - vhat))

    phi, synth = synthesize_regular_embedding(
        phi1.pattern, c1, edges, f_diag, a2_pattern, masa2,
        reference=phi1.images, tols=tols,
    )
    report = RegularReport(
        refinement=refinement,
        edge_distances=edge_dists,
        unit_distance_max=synth.unit_distance_max,
        residual=synth.residual,
        bound_claimed=synth.bound_claimed,
        bound_ok=synth.bound_ok,
        regular=synth.regular,
        source_dim=phi1.pattern.dim,
        measured_defect=measured,
    )
    return phi, report

"""Finite-dimensional operator-algebra structures and defect measures.

Index conventions: basis indices, pattern pairs and partition cells are
1-based (matching the JSON file formats); only internal numpy slicing is
0-based.  A masa is always modeled as a partition of the diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .config import DEFAULT_TOLS
from .errors import DimensionMismatch, ValidationError
from .matio import matrix_to_obj, obj_to_matrix
from .numkernel import as_matrix, exp_skew, operator_norm


@dataclass(frozen=True)
class BlockComposition:
    """Ordered block sizes (n_1, ..., n_r) decomposing the identity of M_N."""

    sizes: tuple[int, ...]

    def __post_init__(self):
        if len(self.sizes) < 1 or any(int(s) < 1 for s in self.sizes):
            raise ValidationError("composition sizes must be positive")
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))

    @property
    def total(self) -> int:
        return sum(self.sizes)

    @property
    def r(self) -> int:
        return len(self.sizes)

    @property
    def boundaries(self) -> tuple[int, ...]:
        out, acc = [], 0
        for s in self.sizes:
            acc += s
            out.append(acc)
        return tuple(out)

    def block_of(self, index: int) -> int:
        """Block number (1-based) containing the 1-based basis index."""
        if not 1 <= index <= self.total:
            raise DimensionMismatch(f"index {index} outside 1..{self.total}")
        for k, b in enumerate(self.boundaries):
            if index <= b:
                return k + 1
        raise AssertionError

    def block_slice(self, k: int) -> slice:
        b = (0,) + self.boundaries
        return slice(b[k - 1], b[k])

    def nest_projection(self, k: int) -> np.ndarray:
        """Diagonal projection onto the first n_1 + ... + n_k coordinates."""
        p = np.zeros((self.total, self.total), dtype=complex)
        cut = self.boundaries[k - 1]
        p[:cut, :cut] = np.eye(cut)
        return p

    def scaled(self, multiplicity: int) -> "BlockComposition":
        return BlockComposition(tuple(s * multiplicity for s in self.sizes))

    def to_obj(self) -> dict:
        return {"sizes": list(self.sizes)}

    @classmethod
    def from_obj(cls, obj) -> "BlockComposition":
        return cls(tuple(int(s) for s in obj["sizes"]))


@dataclass(frozen=True)
class IncidencePattern:
    """Reflexive transitive 0/1 relation on 1..dim; defines a digraph algebra.

    ``composition`` is set for the two structured variants (nest and
    block-diagonal patterns), where exact distance formulas exist.
    """

    dim: int
    pairs: frozenset
    composition: BlockComposition | None = None
    structure: str | None = None

    def __post_init__(self):
        pairs = frozenset((int(i), int(j)) for i, j in self.pairs)
        object.__setattr__(self, "pairs", pairs)
        n = self.dim
        for i, j in pairs:
            if not (1 <= i <= n and 1 <= j <= n):
                raise ValidationError(f"pair ({i},{j}) outside 1..{n}")
        for i in range(1, n + 1):
            if (i, i) not in pairs:
                raise ValidationError(f"pattern not reflexive at {i}")
        index = {}
        for i, j in pairs:
            index.setdefault(i, set()).add(j)
        for i, j in pairs:
            for k in index.get(j, ()):
                if (i, k) not in pairs:
                    raise ValidationError(f"pattern not transitive: ({i},{j}),({j},{k})")

    def contains(self, i: int, j: int) -> bool:
        return (i, j) in self.pairs

    def mask(self) -> np.ndarray:
        m = np.zeros((self.dim, self.dim), dtype=bool)
        for i, j in self.pairs:
            m[i - 1, j - 1] = True
        return m

    def is_symmetric(self) -> bool:
        return all((j, i) in self.pairs for i, j in self.pairs)

    def to_obj(self) -> dict:
        return {"dim": self.dim, "pairs": sorted([i, j] for i, j in self.pairs)}

    @classmethod
    def from_obj(cls, obj) -> "IncidencePattern":
        return cls(int(obj["dim"]), frozenset((int(i), int(j)) for i, j in obj["pairs"]))


def nest_pattern(comp: BlockComposition) -> IncidencePattern:
    """Block upper-triangular pattern of a nest algebra."""
    n = comp.total
    pairs = frozenset(
        (i, j)
        for i in range(1, n + 1)
        for j in range(1, n + 1)
        if comp.block_of(i) <= comp.block_of(j)
    )
    return IncidencePattern(n, pairs, composition=comp, structure="nest")


def block_diagonal_pattern(comp: BlockComposition) -> IncidencePattern:
    """Pattern of the self-adjoint part of a nest algebra (block diagonal)."""
    n = comp.total
    pairs = frozenset(
        (i, j)
        for i in range(1, n + 1)
        for j in range(1, n + 1)
        if comp.block_of(i) == comp.block_of(j)
    )
    return IncidencePattern(n, pairs, composition=comp, structure="blockdiag")


def full_pattern(n: int) -> IncidencePattern:
    return nest_pattern(BlockComposition((n,)))


@dataclass(frozen=True)
class MasaPartition:
    """Partition of 1..dim; each cell supports one minimal projection."""

    dim: int
    cells: tuple

    def __post_init__(self):
        cells = tuple(tuple(sorted(int(i) for i in c)) for c in self.cells)
        cells = tuple(sorted(cells, key=lambda c: c[0]))
        object.__setattr__(self, "cells", cells)
        seen = []
        for c in cells:
            if not c:
                raise ValidationError("empty cell in partition")
            seen.extend(c)
        if sorted(seen) != list(range(1, self.dim + 1)):
            raise ValidationError("cells must partition 1..dim")

    @classmethod
    def full_diagonal(cls, n: int) -> "MasaPartition":
        return cls(n, tuple((i,) for i in range(1, n + 1)))

    @classmethod
    def from_blocks(cls, comp: BlockComposition) -> "MasaPartition":
        b = (0,) + comp.boundaries
        return cls(comp.total, tuple(tuple(range(b[k] + 1, b[k + 1] + 1)) for k in range(comp.r)))

    @classmethod
    def uniform(cls, n_cells: int, cell_size: int) -> "MasaPartition":
        return cls.from_blocks(BlockComposition((cell_size,) * n_cells))

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    def cell_projection(self, k: int) -> np.ndarray:
        p = np.zeros((self.dim, self.dim), dtype=complex)
        idx = np.array(self.cells[k - 1]) - 1
        p[idx, idx] = 1.0
        return p

    def cell_ids(self) -> np.ndarray:
        ids = np.empty(self.dim, dtype=int)
        for k, c in enumerate(self.cells):
            for i in c:
                ids[i - 1] = k
        return ids

    def to_obj(self) -> dict:
        return {"dim": self.dim, "cells": [list(c) for c in self.cells]}

    @classmethod
    def from_obj(cls, obj) -> "MasaPartition":
        return cls(int(obj["dim"]), tuple(tuple(int(i) for i in c) for c in obj["cells"]))


@dataclass
class MatrixUnitSystem:
    """Family of matrices indexed by pattern pairs, intended as matrix units."""

    pattern: IncidencePattern
    ambient_dim: int
    units: dict

    def __post_init__(self):
        keys = set(self.units)
        if keys != set(self.pattern.pairs):
            raise ValidationError("unit keys must match the pattern pairs")
        for key, u in self.units.items():
            u = as_matrix(u)
            if u.shape != (self.ambient_dim, self.ambient_dim):
                raise DimensionMismatch(f"unit {key} has shape {u.shape}")
            self.units[key] = u

    def unit(self, i: int, j: int) -> np.ndarray:
        return self.units[(i, j)]

    def generators(self):
        return self.units.items()


@dataclass
class StarEmbedding:
    """Linear extension of a matrix-unit correspondence; fixed by its images."""

    images: MatrixUnitSystem

    @property
    def pattern(self) -> IncidencePattern:
        return self.images.pattern

    @property
    def ambient_dim(self) -> int:
        return self.images.ambient_dim

    def unit(self, i: int, j: int) -> np.ndarray:
        return self.images.unit(i, j)

    def to_obj(self) -> dict:
        return {
            "pattern": self.pattern.to_obj(),
            "ambient_dim": self.ambient_dim,
            "units": {f"{i},{j}": matrix_to_obj(u) for (i, j), u in sorted(self.images.units.items())},
        }

    @classmethod
    def from_obj(cls, obj) -> "StarEmbedding":
        pattern = IncidencePattern.from_obj(obj["pattern"])
        units = {}
        for key, mat in obj["units"].items():
            i, j = (int(t) for t in key.split(","))
            units[(i, j)] = obj_to_matrix(mat)
        return cls(MatrixUnitSystem(pattern, int(obj["ambient_dim"]), units))


@dataclass
class DefectReport:
    """Measured hypothesis defects of a unit system against its targets."""

    pisometry_defect: float
    normalizer_defect: float
    containment_defect: float
    per_generator: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# canonical systems

def canonical_units(pattern: IncidencePattern) -> MatrixUnitSystem:
    """Elementary matrix units e_ij of the pattern at ambient dim = pattern dim."""
    n = pattern.dim
    units = {}
    for i, j in pattern.pairs:
        e = np.zeros((n, n), dtype=complex)
        e[i - 1, j - 1] = 1.0
        units[(i, j)] = e
    return MatrixUnitSystem(pattern, n, units)


def ampliated_units(pattern: IncidencePattern, masa: MasaPartition) -> MatrixUnitSystem:
    """Cell-level canonical units: vertex k of the pattern acts on cell k.

    Unit (i, j) maps cell j onto cell i aligning the sorted indices, so
    every unit is a 0/1 partial permutation matrix.
    """
    if pattern.dim != masa.n_cells:
        raise DimensionMismatch("pattern vertices must match partition cells")
    n = masa.dim
    units = {}
    for i, j in pattern.pairs:
        ci, cj = masa.cells[i - 1], masa.cells[j - 1]
        if len(ci) != len(cj):
            raise ValidationError(f"cells {i} and {j} differ in size; no aligned unit")
        u = np.zeros((n, n), dtype=complex)
        for a, b in zip(ci, cj):
            u[a - 1, b - 1] = 1.0
        units[(i, j)] = u
    return MatrixUnitSystem(pattern, n, units)


def ampliate(pattern: IncidencePattern, multiplicity: int):
    """Contiguous multiplicity-m ampliation; returns (units, masa)."""
    if multiplicity < 1:
        raise ValidationError("multiplicity must be >= 1")
    masa = MasaPartition.uniform(pattern.dim, multiplicity)
    return ampliated_units(pattern, masa), masa


# ---------------------------------------------------------------------------
# distances and defects

def _check_square(x, n=None):
    x = as_matrix(x)
    if x.shape[0] != x.shape[1]:
        raise DimensionMismatch("matrix must be square")
    if n is not None and x.shape[0] != n:
        raise DimensionMismatch(f"expected dimension {n}, got {x.shape[0]}")
    return x


def arveson_distance(x, comp: BlockComposition) -> float:
    """Distance from x to the block upper-triangular algebra of ``comp``.

    Equals the maximum over the nontrivial nest projections P of
    ``norm((I-P) x P)``, which is the exact distance.
    """
    x = _check_square(x, comp.total)
    best = 0.0
    bounds = comp.boundaries
    for cut in bounds[:-1]:
        best = max(best, operator_norm(x[cut:, :cut]))
    return best


def pattern_truncate(x, pattern: IncidencePattern) -> np.ndarray:
    x = _check_square(x, pattern.dim)
    return np.where(pattern.mask(), x, 0.0)


def expectation(b, masa: MasaPartition) -> np.ndarray:
    """Compression onto the cell-block-diagonal: sum of p b p over cells."""
    b = _check_square(b, masa.dim)
    ids = masa.cell_ids()
    keep = ids[:, None] == ids[None, :]
    return np.where(keep, b, 0.0)


def cell_average(b, masa: MasaPartition) -> np.ndarray:
    """Trace-preserving conditional expectation onto the masa itself.

    Each cell of the output diagonal carries the normalized trace of the
    corresponding diagonal block of ``b``.
    """
    b = _check_square(b, masa.dim)
    out = np.zeros(masa.dim, dtype=complex)
    for c in masa.cells:
        idx = np.array(c) - 1
        out[idx] = np.mean(np.diag(b)[idx])
    return np.diag(out)


@dataclass
class MasaDistanceResult:
    estimate: float
    commutator_bound: float
    exhaustive: bool


def masa_distance(w, masa: MasaPartition, brute_limit: int = DEFAULT_TOLS.brute_limit) -> MasaDistanceResult:
    """Distance estimate of ``w`` from the commutant of the masa.

    ``estimate = norm(w - E(w))``.  The commutator bound maximizes
    ``norm(w p - p w)`` over all 2^cells subset projections when the cell
    count allows, otherwise over single-cell projections only (then it is
    merely a lower bound and ``exhaustive`` is False).  In exhaustive mode
    ``bound/2 <= true distance <= estimate <= 2 * bound``.
    """
    w = _check_square(w, masa.dim)
    estimate = operator_norm(w - expectation(w, masa))
    cells = masa.cells

    def comm_norm(cell_subset):
        p = np.zeros(masa.dim)
        for k in cell_subset:
            p[np.array(cells[k]) - 1] = 1.0
        return operator_norm(w * p[None, :] - p[:, None] * w)

    exhaustive = len(cells) <= brute_limit
    bound = 0.0
    if exhaustive:
        # proper nonempty subsets; the trivial projections commute with everything
        for size in range(1, len(cells)):
            for subset in combinations(range(len(cells)), size):
                bound = max(bound, comm_norm(subset))
    else:
        for k in range(len(cells)):
            bound = max(bound, comm_norm((k,)))
    return MasaDistanceResult(estimate=estimate, commutator_bound=bound, exhaustive=exhaustive)


def _pattern_distance(g, target: IncidencePattern) -> float:
    """Distance from g to the span of the target pattern.

    Exact for nest targets; for the block-diagonal variant the exact
    two-sided truncation distance; otherwise the truncation norm, which is
    only an upper bound.
    """
    if target.structure == "nest" and target.composition is not None:
        return arveson_distance(g, target.composition)
    if target.structure == "blockdiag" and target.composition is not None:
        comp = target.composition
        return max(arveson_distance(g, comp), arveson_distance(g.conj().T, comp))
    return operator_norm(g - pattern_truncate(g, target))


def containment_defect(sys: MatrixUnitSystem, target: IncidencePattern) -> float:
    """Generator-level containment defect of a unit system in a pattern span."""
    if sys.ambient_dim != target.dim:
        raise DimensionMismatch("system and target live in different ambients")
    return max(_pattern_distance(g, target) for _, g in sys.generators())


def normalizer_defect(v, masa: MasaPartition) -> float:
    """How far conjugation by ``v`` moves the masa's minimal projections.

    Maximizes the masa-distance estimate ``norm(x - E(x))`` of ``v p v*``
    and ``v* p v`` over minimal cell projections; zero exactly when ``v``
    normalizes.  Checking minimal projections suffices by linearity of the
    conjugation map.
    """
    v = _check_square(v, masa.dim)
    worst = 0.0
    for k in range(1, masa.n_cells + 1):
        p = masa.cell_projection(k)
        for x in (v @ p @ v.conj().T, v.conj().T @ p @ v):
            worst = max(worst, operator_norm(x - expectation(x, masa)))
    return worst


def pisometry_defect(v) -> float:
    v = as_matrix(v)
    g = v.conj().T @ v
    return operator_norm(g - g @ g)


def matrix_unit_residual(sys: MatrixUnitSystem) -> float:
    """Worst violation of the matrix-unit relations over the adjoint closure.

    The stored family is closed under adjoints (g_ji := g_ij* when (j,i)
    is not stored); every product g_ij g_kl with j != k must vanish, and
    every product with j == k must reproduce g_il whenever that unit is
    available in the closure.  Products whose abstract value has no stored
    representative are not relations and are skipped.
    """
    closure = {}
    for (i, j), u in sys.generators():
        closure[(i, j)] = u
    for (i, j), u in list(closure.items()):
        if (j, i) not in closure:
            closure[(j, i)] = u.conj().T
    worst = 0.0
    for (i, j), u in sys.generators():
        if (j, i) in sys.units:
            worst = max(worst, operator_norm(u.conj().T - sys.units[(j, i)]))
    items = sorted(closure.items())
    for (i, j), a in items:
        for (k, l), b in items:
            if j == k:
                if (i, l) in closure:
                    worst = max(worst, operator_norm(a @ b - closure[(i, l)]))
            else:
                worst = max(worst, operator_norm(a @ b))
    return worst


def measure_defects(sys: MatrixUnitSystem, target: IncidencePattern | None = None,
                    masa: MasaPartition | None = None) -> DefectReport:
    per = {}
    pdef = 0.0
    ndef = 0.0
    cdef = 0.0
    for key, g in sys.generators():
        entry = {"pisometry": pisometry_defect(g)}
        pdef = max(pdef, entry["pisometry"])
        if masa is not None:
            entry["normalizer"] = normalizer_defect(g, masa)
            ndef = max(ndef, entry["normalizer"])
        if target is not None:
            entry["containment"] = _pattern_distance(g, target)
            cdef = max(cdef, entry["containment"])
        per[key] = entry
    return DefectReport(pisometry_defect=pdef, normalizer_defect=ndef,
                        containment_defect=cdef, per_generator=per)


# ---------------------------------------------------------------------------
# ensembles

def random_skew(n: int, rng) -> np.ndarray:
    g = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return (g - g.conj().T) / 2.0


def random_near_identity_embedding(pattern: IncidencePattern, multiplicity: int,
                                   epsilon: float, seed) -> StarEmbedding:
    """Conjugate the canonical multiplicity-m ampliation by exp(k), norm(k) = epsilon.

    Deterministic under a fixed seed; epsilon zero returns the exact
    ampliation bit-for-bit.
    """
    if epsilon < 0:
        raise ValidationError("epsilon must be nonnegative")
    units, _ = ampliate(pattern, multiplicity)
    if epsilon == 0.0:
        return StarEmbedding(units)
    rng = np.random.default_rng(seed)
    k = random_skew(units.ambient_dim, rng)
    k *= epsilon / operator_norm(k)
    u = exp_skew(k)
    conj = {key: u @ mat @ u.conj().T for key, mat in units.generators()}
    return StarEmbedding(MatrixUnitSystem(pattern, units.ambient_dim, conj))

"""Finite towers of regularly included digraph algebras in one ambient M_N.

A tower holds one exact cell-level system per depth, all acting on the
same space, with each level's masa refined by the next.  Perturbing the
tower conjugates each level independently; recovery runs the regular
stabilization against the next level's canonical algebra and reports the
per-level unit distances, whose partial sums are the finite surrogate for
asymptotic commutation of the diagram.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import (
    IncidencePattern,
    MasaPartition,
    MatrixUnitSystem,
    StarEmbedding,
    ampliated_units,
    random_skew,
)
from .config import DEFAULT_TOLS, Tolerances
from .errors import (
    ConfigError,
    DimensionMismatch,
    DimensionOverflow,
    HypothesisError,
    ValidationError,
)
from .numkernel import as_matrix, exp_skew, operator_norm
from .regular import RegularReport, regular_stabilize

MAX_AMBIENT = 512


@dataclass(frozen=True)
class TowerConfig:
    """Tower description.

    ``patterns[k]`` is the cell-level digraph pattern of level k; vertex i
    of level k refines into ``multiplicities[k]`` consecutive vertices of
    level k+1, and the final entry of ``multiplicities`` is the cell size
    at the top.  ``eps_schedule`` gives the per-level conjugation sizes.
    """

    depth: int
    patterns: tuple
    multiplicities: tuple
    eps_schedule: tuple
    seed: int

    def __post_init__(self):
        if self.depth < 1:
            raise ConfigError("depth must be >= 1")
        if len(self.patterns) != self.depth or len(self.multiplicities) != self.depth:
            raise ConfigError("patterns and multiplicities must have one entry per level")
        if len(self.eps_schedule) != self.depth:
            raise ConfigError("eps_schedule must have one entry per level")
        if any(int(m) < 1 for m in self.multiplicities):
            raise ConfigError("multiplicities must be >= 1")
        for eps in self.eps_schedule:
            if not 0.0 <= float(eps) < 0.25:
                raise ConfigError("eps_schedule entries must lie in [0, 1/4)")
        for k in range(self.depth - 1):
            dk = self.patterns[k].dim
            if self.patterns[k + 1].dim != dk * self.multiplicities[k]:
                raise ConfigError(
                    f"level {k + 2} must have {dk * self.multiplicities[k]} vertices"
                )
            m = self.multiplicities[k]
            nxt = self.patterns[k + 1]
            for i, j in self.patterns[k].pairs:
                for t in range(m):
                    child = ((i - 1) * m + t + 1, (j - 1) * m + t + 1)
                    if child not in nxt.pairs:
                        raise ConfigError(
                            f"pattern of level {k + 2} misses the refined pair {child}"
                        )
        if self.ambient_dim > MAX_AMBIENT:
            raise DimensionOverflow(
                f"ambient dimension {self.ambient_dim} exceeds {MAX_AMBIENT}"
            )

    @property
    def cell_sizes(self) -> tuple:
        sizes = [int(self.multiplicities[-1])]
        for m in reversed(self.multiplicities[:-1]):
            sizes.append(sizes[-1] * int(m))
        return tuple(reversed(sizes))

    @property
    def ambient_dim(self) -> int:
        return self.patterns[0].dim * self.cell_sizes[0]


@dataclass
class TowerLevel:
    embedding: StarEmbedding
    masa: MasaPartition


def refine_pattern(pattern: IncidencePattern, multiplicity: int) -> IncidencePattern:
    """Vertex refinement: each vertex splits into ``multiplicity`` children,
    each pattern pair into its aligned child pairs (plus the diagonal)."""
    if multiplicity < 1:
        raise ValidationError("multiplicity must be >= 1")
    m = multiplicity
    n = pattern.dim * m
    pairs = set((i, i) for i in range(1, n + 1))
    for i, j in pattern.pairs:
        for t in range(m):
            pairs.add(((i - 1) * m + t + 1, (j - 1) * m + t + 1))
    return IncidencePattern(n, frozenset(pairs))


def tower_to_obj(tower: list) -> dict:
    return {
        "levels": [
            {"embedding": level.embedding.to_obj(), "masa": level.masa.to_obj()}
            for level in tower
        ]
    }


def tower_from_obj(obj) -> list:
    levels = []
    for entry in obj["levels"]:
        levels.append(TowerLevel(
            embedding=StarEmbedding.from_obj(entry["embedding"]),
            masa=MasaPartition.from_obj(entry["masa"]),
        ))
    return levels


def generate_tower(cfg: TowerConfig) -> list:
    """Exact nested chain: every level's units are aligned 0/1 cell units and
    each is bit-exactly a sum of the next level's units.
    """
    levels = []
    for k in range(cfg.depth):
        masa = MasaPartition.uniform(cfg.patterns[k].dim, cfg.cell_sizes[k])
        units = ampliated_units(cfg.patterns[k], masa)
        levels.append(TowerLevel(embedding=StarEmbedding(units), masa=masa))
    return levels


def perturb_tower(tower: list, cfg: TowerConfig) -> list:
    """Conjugate level k by an independent unitary with ``norm(u - I) = eps_k``."""
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.depth)
    out = []
    for k, level in enumerate(tower):
        eps = float(cfg.eps_schedule[k])
        if eps == 0.0:
            out.append(TowerLevel(embedding=level.embedding, masa=level.masa))
            continue
        rng = np.random.default_rng(seeds[k])
        n = level.embedding.ambient_dim
        skew = random_skew(n, rng)
        # norm(exp(k) - I) = 2 sin(norm(k)/2) for skew-Hermitian k
        skew *= 2.0 * np.arcsin(eps / 2.0) / operator_norm(skew)
        u = exp_skew(skew)
        units = {
            key: u @ mat @ u.conj().T
            for key, mat in level.embedding.images.generators()
        }
        sys = MatrixUnitSystem(level.embedding.pattern, n, units)
        out.append(TowerLevel(embedding=StarEmbedding(sys), masa=level.masa))
    return out


@dataclass
class ChainReport:
    """Recovery measurements: c_values[k] is the largest unit movement when
    level k+1's perturbed copy is stabilized into level k+2's algebra."""

    c_values: list
    partial_sums: list
    residuals: list
    regular_flags: list
    level_reports: list


def recover_chain(perturbed: list, cfg: TowerConfig, tols: Tolerances = DEFAULT_TOLS):
    """Stabilize each level into the next canonical algebra.

    Returns the recovered maps and the commutation report; a hypothesis
    failure is re-raised naming the offending level.
    """
    if len(perturbed) != cfg.depth:
        raise DimensionMismatch("tower depth does not match its configuration")
    maps = []
    c_values = []
    residuals = []
    regular_flags = []
    level_reports: list[RegularReport] = []
    for k in range(cfg.depth - 1):
        try:
            phi, report = regular_stabilize(
                perturbed[k].embedding,
                perturbed[k].masa,
                cfg.patterns[k + 1],
                perturbed[k + 1].masa,
                tols,
            )
        except HypothesisError as exc:
            raise type(exc)(str(exc), stage=f"level-{k + 1}") from exc
        maps.append(phi)
        c_values.append(report.unit_distance_max)
        residuals.append(report.residual)
        regular_flags.append(report.regular)
        level_reports.append(report)
    sums = list(np.cumsum(c_values)) if c_values else []
    return maps, ChainReport(
        c_values=c_values,
        partial_sums=[float(s) for s in sums],
        residuals=residuals,
        regular_flags=regular_flags,
        level_reports=level_reports,
    )


# ---------------------------------------------------------------------------
# masa density

def _circumcenter(a: complex, b: complex, c: complex):
    d = 2.0 * (a.real * (b.imag - c.imag) + b.real * (c.imag - a.imag)
               + c.real * (a.imag - b.imag))
    scale = max(abs(a - b), abs(b - c), abs(a - c), 1e-300)
    if abs(d) <= 1e-14 * scale * scale:
        return None
    sa, sb, sc = abs(a) ** 2, abs(b) ** 2, abs(c) ** 2
    ux = (sa * (b.imag - c.imag) + sb * (c.imag - a.imag) + sc * (a.imag - b.imag)) / d
    uy = (sa * (c.real - b.real) + sb * (a.real - c.real) + sc * (b.real - a.real)) / d
    return complex(ux, uy)


def smallest_enclosing_radius(points) -> float:
    """Radius of the smallest circle enclosing complex points (deterministic
    incremental construction, fixed processing order)."""
    pts = [complex(p) for p in points]
    if not pts:
        return 0.0
    scale = max(max(abs(p) for p in pts), 1.0)
    eps = 1e-12 * scale
    c, r = pts[0], 0.0
    for i, p in enumerate(pts):
        if abs(p - c) <= r + eps:
            continue
        c, r = p, 0.0
        for j in range(i):
            q = pts[j]
            if abs(q - c) <= r + eps:
                continue
            c = (p + q) / 2.0
            r = abs(p - c)
            for l in range(j):
                s = pts[l]
                if abs(s - c) <= r + eps:
                    continue
                center = _circumcenter(p, q, s)
                if center is None:
                    # collinear: the two farthest endpoints determine the circle
                    far = max(((abs(x - y), (x, y)) for x in (p, q, s) for y in (p, q, s)),
                              key=lambda t: t[0])[1]
                    center = (far[0] + far[1]) / 2.0
                c = center
                r = max(abs(p - c), abs(q - c), abs(s - c))
    return max(abs(p - c) for p in pts)


def masa_distance_diagonal(probe_diag, masa: MasaPartition) -> float:
    """Exact distance from a diagonal matrix to the span of the masa cells."""
    worst = 0.0
    for cell in masa.cells:
        pts = [probe_diag[i - 1] for i in cell]
        worst = max(worst, smallest_enclosing_radius(pts))
    return worst


def masa_density_report(tower: list, probes) -> list:
    """Distances of diagonal probes to each level's masa span.

    Returns one row per probe: a list of distances indexed by level, which
    is non-increasing because the masas are nested.
    """
    rows = []
    for probe in probes:
        probe = as_matrix(probe)
        n = tower[0].embedding.ambient_dim
        if probe.shape != (n, n):
            raise DimensionMismatch("probe does not match the tower ambient")
        if operator_norm(probe - np.diag(np.diag(probe))) > 0:
            raise ValidationError("probes must be diagonal")
        d = np.diag(probe)
        rows.append([masa_distance_diagonal(d, level.masa) for level in tower])
    return rows

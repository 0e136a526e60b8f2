"""Seeded experiment drivers writing delimited results plus a manifest.

Reruns with an identical manifest are bit-identical: every random draw
derives from (seed, epsilon index, trial index) and all numbers are
formatted with 17 significant digits.  Because of that byte-level
contract the runtime_ms column carries the sentinel -1 rather than a
wall-clock reading; timing is printed to stderr instead.
"""

from __future__ import annotations

import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .algebra import (
    BlockComposition,
    IncidencePattern,
    MasaPartition,
    ampliate,
    containment_defect,
    full_pattern,
    nest_pattern,
    normalizer_defect,
    pisometry_defect,
    random_near_identity_embedding,
    random_skew,
)
from .config import DEFAULT_TOLS, Tolerances
from .errors import ConfigError, HypothesisError, ValidationError
from .matio import dumps, read_json
from .numkernel import exp_skew, operator_norm
from .perturb import block_triangularize
from .regular import fix_normalizer, regular_stabilize
from .stability import stabilize_nest_inclusion
from .tower import TowerConfig, generate_tower, perturb_tower, recover_chain

EXPERIMENTS = ("stability", "regular-stability", "tower", "normfix-sweep", "triangularize-sweep")

CSV_COLUMNS = ("experiment", "trial", "epsilon", "defect_in", "recovery_distance",
               "structural_residual", "runtime_ms", "status")


@dataclass
class ExperimentConfig:
    experiment: str
    composition: tuple = (2, 2, 2)
    pattern: str = "t3"
    multiplicity: int = 2
    epsilons: tuple = (1e-2, 1e-3, 1e-4)
    trials: int = 50
    seed: int = 42
    depth: int = 4

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(
                f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}"
            )
        if self.trials < 0 or self.multiplicity < 1 or self.depth < 1:
            raise ConfigError("trials must be >= 0; multiplicity and depth >= 1")
        if any(e < 0 for e in self.epsilons):
            raise ConfigError("epsilons must be nonnegative")

    def to_obj(self) -> dict:
        return {
            "experiment": self.experiment,
            "composition": list(self.composition),
            "pattern": self.pattern,
            "multiplicity": self.multiplicity,
            "epsilons": list(self.epsilons),
            "trials": self.trials,
            "seed": self.seed,
            "depth": self.depth,
        }


def parse_config_file(path) -> dict:
    """Flat key=value lines; blank lines and # comments allowed."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def build_config(mapping: dict) -> ExperimentConfig:
    def ints(v):
        return tuple(int(t) for t in str(v).split(",") if t != "")

    def floats(v):
        return tuple(float(t) for t in str(v).split(",") if t != "")

    known = {"experiment", "composition", "pattern", "multiplicity", "epsilons",
             "trials", "seed", "depth"}
    unknown = set(mapping) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    if "experiment" not in mapping:
        raise ConfigError("config must set experiment")
    kwargs = {"experiment": str(mapping["experiment"])}
    if "composition" in mapping:
        kwargs["composition"] = ints(mapping["composition"])
    if "pattern" in mapping:
        kwargs["pattern"] = str(mapping["pattern"])
    if "multiplicity" in mapping:
        kwargs["multiplicity"] = int(mapping["multiplicity"])
    if "epsilons" in mapping:
        kwargs["epsilons"] = floats(mapping["epsilons"])
    if "trials" in mapping:
        kwargs["trials"] = int(mapping["trials"])
    if "seed" in mapping:
        kwargs["seed"] = int(mapping["seed"])
    if "depth" in mapping:
        kwargs["depth"] = int(mapping["depth"])
    return ExperimentConfig(**kwargs)


def resolve_pattern(spec: str) -> IncidencePattern:
    """Named patterns ("t3" = triangular with singleton blocks, "full4",
    "diag3") or a path to a pattern JSON file."""
    if spec.endswith(".json"):
        return IncidencePattern.from_obj(read_json(spec))
    name = spec.lower()
    if name.startswith("t") and name[1:].isdigit():
        return nest_pattern(BlockComposition((1,) * int(name[1:])))
    if name.startswith("full") and name[4:].isdigit():
        return full_pattern(int(name[4:]))
    if name.startswith("diag") and name[4:].isdigit():
        n = int(name[4:])
        return IncidencePattern(n, frozenset((i, i) for i in range(1, n + 1)))
    raise ConfigError(f"unknown pattern {spec!r}")


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def _row(experiment, trial, epsilon, defect, distance, residual, status) -> list:
    return [experiment, str(trial), _fmt(float(epsilon)), _fmt(float(defect)),
            _fmt(float(distance)), _fmt(float(residual)), "-1", status]


# ---------------------------------------------------------------------------
# per-trial drivers

def _trial_stability(cfg, eps, seed_seq, tols):
    comp1 = BlockComposition(cfg.composition)
    pattern1 = nest_pattern(comp1)
    emb = random_near_identity_embedding(pattern1, cfg.multiplicity, eps, seed_seq)
    a2 = nest_pattern(comp1.scaled(cfg.multiplicity))
    defect = containment_defect(emb.images, a2)
    psi, report = stabilize_nest_inclusion(emb, a2, tols)
    return defect, report.unit_distance_max, report.residual, emb.ambient_dim


def _trial_regular(cfg, eps, seed_seq, tols, multiplicity=None):
    m = multiplicity if multiplicity is not None else cfg.multiplicity
    pattern = resolve_pattern(cfg.pattern)
    emb = random_near_identity_embedding(pattern, m, eps, seed_seq)
    masa = MasaPartition.uniform(pattern.dim, m)
    phi, report = regular_stabilize(emb, masa, pattern, masa, tols)
    return report.measured_defect, report.unit_distance_max, report.residual, emb.ambient_dim


def _random_pattern_permutation(pattern: IncidencePattern, rng) -> list:
    """Partial permutation of vertices supported on the pattern, greedy over
    a seeded shuffle of the off-diagonal pairs, padded with fixed points."""
    pairs = sorted(p for p in pattern.pairs if p[0] != p[1])
    rng.shuffle(pairs)
    used_rows, used_cols, chosen = set(), set(), []
    for i, j in pairs:
        if i not in used_rows and j not in used_cols:
            chosen.append((i, j))
            used_rows.add(i)
            used_cols.add(j)
    for i in range(1, pattern.dim + 1):
        if i not in used_rows and i not in used_cols:
            chosen.append((i, i))
    return chosen


def _trial_normfix(cfg, eps, seed_seq, tols):
    pattern = resolve_pattern(cfg.pattern)
    rng = np.random.default_rng(seed_seq)
    units, masa = ampliate(pattern, cfg.multiplicity)
    n = masa.dim
    support = _random_pattern_permutation(pattern, rng)
    v0 = np.zeros((n, n), dtype=complex)
    for a, b in support:
        phase = np.exp(2j * np.pi * rng.uniform())
        v0 += phase * units.unit(a, b)
    if eps > 0:
        k1 = random_skew(n, rng)
        k2 = random_skew(n, rng)
        u1 = exp_skew(k1 * (eps / 2.0) / operator_norm(k1))
        u2 = exp_skew(k2 * (eps / 2.0) / operator_norm(k2))
        v = u1 @ v0 @ u2
    else:
        v = v0
    defect = max(pisometry_defect(v), normalizer_defect(v, masa))
    vhat, cert = fix_normalizer(v, pattern, masa, tols)
    return defect, cert.correction_distance, cert.structural_residual, n


def _random_blockdiag_unitary(comp: BlockComposition, rng) -> np.ndarray:
    out = np.zeros((comp.total, comp.total), dtype=complex)
    for k in range(1, comp.r + 1):
        sl = comp.block_slice(k)
        g = rng.standard_normal((comp.sizes[k - 1],) * 2) \
            + 1j * rng.standard_normal((comp.sizes[k - 1],) * 2)
        q, r = np.linalg.qr(g)
        out[sl, sl] = q * (np.diag(r) / np.abs(np.diag(r)))
    return out


def _trial_triangularize(cfg, eps, seed_seq, tols):
    comp = BlockComposition(cfg.composition).scaled(cfg.multiplicity)
    rng = np.random.default_rng(seed_seq)
    d = _random_blockdiag_unitary(comp, rng)
    if eps > 0:
        k = random_skew(comp.total, rng)
        v = d @ exp_skew(k * eps / operator_norm(k))
    else:
        v = d
    vhat, cert = block_triangularize(v, comp, tols)
    return cert.input_defect, cert.correction_distance, cert.structural_residual, comp.total


def _tower_config(cfg, seed) -> "TowerConfig":
    from .tower import refine_pattern

    base = resolve_pattern(cfg.pattern)
    patterns = [base]
    for _ in range(cfg.depth - 1):
        patterns.append(refine_pattern(patterns[-1], cfg.multiplicity))
    mults = (cfg.multiplicity,) * cfg.depth
    if len(cfg.epsilons) == cfg.depth:
        schedule = tuple(cfg.epsilons)
    elif len(cfg.epsilons) == 1:
        schedule = tuple(cfg.epsilons[0] * 2.0 ** (-k) for k in range(1, cfg.depth + 1))
    else:
        raise ConfigError("tower needs one epsilon (geometric schedule) or one per level")
    return TowerConfig(depth=cfg.depth, patterns=tuple(patterns),
                       multiplicities=mults, eps_schedule=schedule, seed=seed)


def run_experiment(cfg: ExperimentConfig, out_csv, manifest_path=None, figure_path=None,
                   tols: Tolerances = DEFAULT_TOLS):
    """Run all trials, write the CSV (and optional manifest/figure).

    Returns the rows (lists of strings, excluding the header).
    """
    started = time.perf_counter()
    rows = []
    if cfg.experiment == "tower":
        for trial in range(cfg.trials):
            trial_seed = int(np.random.SeedSequence((cfg.seed, trial)).generate_state(1)[0])
            tower_cfg = _tower_config(cfg, trial_seed)
            tower = generate_tower(tower_cfg)
            perturbed = perturb_tower(tower, tower_cfg)
            try:
                _, chain = recover_chain(perturbed, tower_cfg, tols)
                n = tower[0].embedding.ambient_dim
                for k, c in enumerate(chain.c_values):
                    defect = chain.level_reports[k].measured_defect
                    status = "ok" if chain.residuals[k] <= tols.struct_tol(n) else "FAILED:residual"
                    rows.append(_row(cfg.experiment, trial, tower_cfg.eps_schedule[k],
                                     defect, c, chain.residuals[k], status))
            except HypothesisError as exc:
                rows.append(_row(cfg.experiment, trial, 0.0, 0.0, 0.0, 0.0,
                                 f"FAILED:{exc.stage or 'unknown'}"))
    else:
        driver = {
            "stability": _trial_stability,
            "regular-stability": _trial_regular,
            "normfix-sweep": _trial_normfix,
            "triangularize-sweep": _trial_triangularize,
        }[cfg.experiment]
        for ei, eps in enumerate(cfg.epsilons):
            for trial in range(cfg.trials):
                seed_seq = np.random.SeedSequence((cfg.seed, ei, trial))
                try:
                    defect, dist, residual, n = driver(cfg, eps, seed_seq, tols)
                    status = "ok" if residual <= tols.struct_tol(n) else "FAILED:residual"
                    rows.append(_row(cfg.experiment, trial, eps, defect, dist, residual, status))
                except HypothesisError as exc:
                    rows.append(_row(cfg.experiment, trial, eps, 0.0, 0.0, 0.0,
                                     f"FAILED:{exc.stage or 'hypothesis'}"))

    lines = [",".join(CSV_COLUMNS)] + [",".join(r) for r in rows]
    Path(out_csv).write_text("\n".join(lines) + "\n")

    if manifest_path is not None:
        manifest = {
            "artifact": "perturba",
            "version": __version__,
            "config": cfg.to_obj(),
            "tolerances": {
                "recon_coeff": tols.recon_coeff,
                "rank_rel": tols.rank_rel,
                "struct_coeff": tols.struct_coeff,
                "herm_tol": tols.herm_tol,
                "round_ceiling": tols.round_ceiling,
                "selfadjoint_gate": tols.selfadjoint_gate,
                "brute_limit": tols.brute_limit,
            },
            "columns": list(CSV_COLUMNS),
        }
        Path(manifest_path).write_text(dumps(manifest) + "\n")

    if figure_path is not None:
        from .plots import render_results_figure

        render_results_figure(rows, cfg, figure_path)

    elapsed = time.perf_counter() - started
    print(f"perturba experiment {cfg.experiment}: {len(rows)} rows in {elapsed:.2f}s",
          file=sys.stderr)
    return rows

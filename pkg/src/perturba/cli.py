"""Command-line surface: one-shot correction tools and experiment driver.

Exit codes: 0 success, 1 I/O or validation problems, 2 hypothesis
failures (the input was structurally valid but too far from the target
set for a certified correction).
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .algebra import BlockComposition, IncidencePattern, MasaPartition, full_pattern, masa_distance
from .errors import HypothesisError, PerturbaError, ValidationError
from .experiments import build_config, parse_config_file, run_experiment
from .matio import load_matrix, read_json, save_matrix, write_json
from .perturb import (
    block_triangularize,
    conjugating_unitary,
    fix_partial_isometry,
    round_to_projection,
)
from .regular import fix_normalizer


def _comp_from_arg(text: str) -> BlockComposition:
    try:
        return BlockComposition(tuple(int(t) for t in text.split(",")))
    except ValueError as exc:
        raise ValidationError(f"bad composition {text!r}: {exc}") from exc


def _out_paths(inp: str, out: str | None, cert: str | None):
    stem = Path(inp).with_suffix("")
    out = out or f"{stem}.out.json"
    cert = cert or f"{stem}.cert.json"
    return out, cert


def _write_result(args, matrix, cert):
    out, certpath = _out_paths(args.matrix, args.out, args.cert)
    save_matrix(out, matrix)
    write_json(certpath, cert.to_obj())
    print(f"wrote {out} and {certpath}")


def _cmd_project(args):
    b = load_matrix(args.matrix)
    p, cert = round_to_projection(b)
    _write_result(args, p, cert)


def _cmd_pisofix(args):
    v = load_matrix(args.matrix)
    vhat, cert = fix_partial_isometry(v)
    _write_result(args, vhat, cert)


def _cmd_triangularize(args):
    v = load_matrix(args.matrix)
    comp = _comp_from_arg(args.composition)
    vhat, cert = block_triangularize(v, comp)
    _write_result(args, vhat, cert)


def _cmd_conjugate(args):
    p = load_matrix(args.p)
    q = load_matrix(args.q)
    u, cert = conjugating_unitary(p, q)
    stem = Path(args.p).with_suffix("")
    out = args.out or f"{stem}.out.json"
    certpath = args.cert or f"{stem}.cert.json"
    save_matrix(out, u)
    write_json(certpath, cert.to_obj())
    print(f"wrote {out} and {certpath}")


def _cmd_normfix(args):
    v = load_matrix(args.matrix)
    n = v.shape[0]
    pattern = IncidencePattern.from_obj(read_json(args.pattern)) if args.pattern else full_pattern(n)
    masa = MasaPartition.from_obj(read_json(args.masa)) if args.masa else MasaPartition.full_diagonal(n)
    vhat, cert = fix_normalizer(v, pattern, masa)
    _write_result(args, vhat, cert)


def _cmd_distance(args):
    x = load_matrix(args.matrix)
    report = {}
    if args.composition:
        from .algebra import arveson_distance

        comp = _comp_from_arg(args.composition)
        report["triangular_distance"] = arveson_distance(x, comp)
    if args.masa:
        masa = MasaPartition.from_obj(read_json(args.masa))
        res = masa_distance(x, masa)
        report["masa_estimate"] = res.estimate
        report["masa_commutator_bound"] = res.commutator_bound
        report["masa_exhaustive"] = res.exhaustive
    if not report:
        raise ValidationError("distance needs --composition and/or --masa")
    text = write_json(args.out, report) if args.out else None
    from .matio import dumps

    print(dumps(report))


def _cmd_experiment(args):
    mapping = {}
    if args.config:
        mapping.update(parse_config_file(args.config))
    if "PERTURBA_SEED" in os.environ:
        mapping["seed"] = os.environ["PERTURBA_SEED"]
    for key in ("experiment", "composition", "pattern", "multiplicity",
                "epsilons", "trials", "seed", "depth"):
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            mapping[key] = val
    for item in args.set or []:
        if "=" not in item:
            raise ValidationError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        mapping[k.strip()] = v.strip()
    cfg = build_config(mapping)
    out = args.out or f"{cfg.experiment}.csv"
    manifest = args.manifest or str(Path(out).with_suffix("")) + ".manifest.json"
    figure = None if args.no_figure else (args.figure or str(Path(out).with_suffix("")) + ".png")
    rows = run_experiment(cfg, out, manifest, figure)
    print(f"wrote {out} ({len(rows)} rows), {manifest}" + (f", {figure}" if figure else ""))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="perturba",
        description="Correct approximately structured matrices to exactly structured ones, "
                    "with certified distances.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_io(p):
        p.add_argument("matrix", help="input matrix JSON")
        p.add_argument("-o", "--out", help="output matrix JSON")
        p.add_argument("--cert", help="certificate JSON")

    p = sub.add_parser("project", help="round a near-idempotent Hermitian matrix to a projection")
    add_io(p)
    p.set_defaults(func=_cmd_project)

    p = sub.add_parser("pisofix", help="correct an approximate partial isometry")
    add_io(p)
    p.set_defaults(func=_cmd_pisofix)

    p = sub.add_parser("triangularize", help="make a partial isometry block upper triangular")
    add_io(p)
    p.add_argument("--composition", required=True, help="block sizes, e.g. 1,1 or 2,2,2")
    p.set_defaults(func=_cmd_triangularize)

    p = sub.add_parser("conjugate", help="unitary carrying one projection to another")
    p.add_argument("p", help="source projection JSON")
    p.add_argument("q", help="target projection JSON")
    p.add_argument("-o", "--out", help="output matrix JSON")
    p.add_argument("--cert", help="certificate JSON")
    p.set_defaults(func=_cmd_conjugate)

    p = sub.add_parser("normfix", help="correct an approximate masa normalizer")
    add_io(p)
    p.add_argument("--pattern", help="pattern JSON (default: full)")
    p.add_argument("--masa", help="masa partition JSON (default: full diagonal)")
    p.set_defaults(func=_cmd_normfix)

    p = sub.add_parser("distance", help="distances to structured sets")
    p.add_argument("matrix", help="input matrix JSON")
    p.add_argument("--composition", help="block sizes for the triangular distance")
    p.add_argument("--masa", help="masa partition JSON for the masa distance")
    p.add_argument("-o", "--out", help="also write the report to this path")
    p.set_defaults(func=_cmd_distance)

    p = sub.add_parser("experiment", help="run a seeded experiment sweep")
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--experiment", help="experiment name")
    p.add_argument("--composition", help="block sizes, e.g. 2,2,2")
    p.add_argument("--pattern", help="pattern name or JSON path")
    p.add_argument("--multiplicity", help="ampliation multiplicity")
    p.add_argument("--epsilons", help="comma-separated conjugation sizes")
    p.add_argument("--trials", help="trials per epsilon")
    p.add_argument("--seed", help="base seed (flags win over PERTURBA_SEED and file)")
    p.add_argument("--depth", help="tower depth")
    p.add_argument("--set", action="append", help="extra key=value override")
    p.add_argument("-o", "--out", help="results CSV path")
    p.add_argument("--manifest", help="manifest JSON path")
    p.add_argument("--figure", help="figure PNG path")
    p.add_argument("--no-figure", action="store_true", help="skip figure rendering")
    p.set_defaults(func=_cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except HypothesisError as exc:
        print(f"hypothesis failure: {exc}", file=sys.stderr)
        return 2
    except (ValidationError, PerturbaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

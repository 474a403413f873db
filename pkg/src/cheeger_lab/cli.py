"""Command-line front end.

Exit codes: 0 success / no violations, 1 verification failure, 2 input
error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from collections.abc import Sequence

from .bounds import (
    BoundReport,
    check_sandwich,
    default_corpus,
    reports_to_csv,
    run_suite,
    violations,
)
from .cheeger import ConsistencyError, ProfileError, shape_cheeger
from .config import ConfigError, RunConfig, load_config
from .geometry import (
    Box,
    InvalidResolutionError,
    InvalidShapeError,
    Product,
    ResourceError,
    dimension,
    load_shape,
)
from .search import (
    FamilySpec,
    MinimizerReport,
    ball_asymptotics,
    default_families,
    estimate_m,
    evaluate_member,
    sweep,
    verify_strict_decrease,
)
from .spectral import ConvergenceError, lambda_p

EXIT_OK, EXIT_VIOLATION, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2, 3

SOLVER_ERRORS = (ConvergenceError, ConsistencyError, ProfileError, ResourceError)
INPUT_ERRORS = (ConfigError, InvalidShapeError, InvalidResolutionError, OSError)

SWEEP_COLUMNS = ("family", "member", "N", "p", "h", "lambda", "inradius", "F", "route", "error")

log = logging.getLogger("cheeger_lab")


class InputError(ValueError):
    pass


def parse_p(text: str) -> float:
    t = text.strip().lower()
    if t in ("inf", "+inf", "infinity"):
        return math.inf
    try:
        p = float(t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid exponent {text!r}") from None
    if not p > 1 or math.isnan(p):
        raise argparse.ArgumentTypeError("exponent must exceed 1")
    return p


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_csv(path: str, columns: Sequence[str], rows: Sequence[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])


def _config_from_args(args) -> RunConfig:
    overrides = {"seed": args.seed, "out_dir": args.out}
    res = getattr(args, "resolution", None)
    if res is not None:
        overrides["resolution_2d"] = res
        overrides["resolution_3d"] = res
    tol = getattr(args, "tolerance", None)
    if tol is not None:
        overrides["grid_tol_2d"] = tol
        overrides["grid_tol_3d"] = tol
    for name in ("lmin", "lmax"):
        v = getattr(args, name, None)
        if v is not None:
            overrides[name] = v
    return load_config(args.config, overrides)


# ------------------------------------------------------------- compute


def cmd_compute(args, cfg: RunConfig) -> int:
    s = load_shape(args.shape)
    n = dimension(s)
    res = cfg.resolution_2d if n <= 2 else cfg.resolution_3d
    p = args.p
    rec: dict = {"shape": args.shape, "N": n, "quantity": args.quantity}
    if args.quantity == "h":
        r = shape_cheeger(s, res, cfg.perimeter, cfg.dinkelbach_max_iter)
        rec.update({"h": r.h, "route": r.method, "iterations": r.iterations})
    elif args.quantity == "lambda":
        lres = cfg.lambda_resolution if p != 2 else res
        r = lambda_p(s, p, lres)
        if math.isinf(p):
            rec.update({"p": "inf", "inradius": 1 / r.inv_root, "route": r.method})
        else:
            rec.update({"p": p, "lambda": r.lambda_p, "route": r.method, "residual": r.residual})
    else:
        r = evaluate_member(args.shape, s, p, cfg.sweep_config())
        rec.update({"p": "inf" if math.isinf(p) else p, "h": r.h, "F": r.F, "route": r.routes})
        if r.lambda_p is not None:
            rec["lambda"] = r.lambda_p
    print(json.dumps(rec))
    return EXIT_OK


# -------------------------------------------------------------- verify


def _structure_reports(cfg: RunConfig, p: float, dim_max: int = 3) -> list[BoundReport]:
    sc = cfg.sweep_config()
    entries = [estimate_m(N, _families(N, cfg), p, sc) for N in range(1, dim_max + 1)]
    rep = MinimizerReport(p, entries, tolerance=cfg.strict_margin)
    out = [verify_strict_decrease(rep)]
    if not math.isinf(p):
        ba = ball_asymptotics(p, range(2, 21))
        fs = [r.F for r in ba.records]
        steps = min(a - b for a, b in zip(fs, fs[1:]))
        out.append(
            BoundReport(
                "ball_decrease", "balls", p, steps, 0.0, steps, ba.decreasing, 0.0, "F_p(B^N) decreasing in N", note="N = 2..20"
            )
        )
        floor = min(fs) - 1 / p
        out.append(
            BoundReport("ball_floor", "balls", p, min(fs), 1 / p, floor, ba.above_floor, 0.0, "F_p(B^N) > 1/p", note="N = 2..20")
        )
    return out


def cmd_verify(args, cfg: RunConfig) -> int:
    suite = args.suite
    if suite == "bounds":
        corpus = [(os.path.basename(args.shape), load_shape(args.shape))] if args.shape else default_corpus()
        p_list = [args.p] if args.p is not None else list(cfg.p_list)
        reports = run_suite(corpus, p_list, cfg.suite_config())
    elif suite == "sandwich":
        cross = load_shape(args.shape) if args.shape else Box((1.0, 1.0))
        if dimension(cross) != 2:
            raise InputError("sandwich cross-section must be planar")
        reports = check_sandwich(
            cross,
            list(cfg.sandwich_heights),
            cfg.suite_config(),
            shape_id="cross",
            resolution=cfg.resolution_3d,
            tol_3d=cfg.grid_tol_3d,
        )
    else:
        reports = _structure_reports(cfg, args.p if args.p is not None else 2.0)
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, f"verify_{suite}.csv")
    reports_to_csv(reports, path)
    bad = violations(reports)
    for r in bad:
        print(f"VIOLATION {r.check_id} {r.shape_id} p={r.p} margin={r.margin:.6g}", file=sys.stderr)
    print(f"{suite}: {len(reports)} reports, {len(bad)} violations -> {path}")
    return EXIT_VIOLATION if bad else EXIT_OK


# -------------------------------------------------------------- search


def _families(N: int, cfg: RunConfig) -> list[FamilySpec]:
    if N == 3:
        return [FamilySpec("square_cylinders", cfg.witness_heights), FamilySpec("balls", (3,))]
    return default_families(N)


def _powers_of_two(lo: float, hi: float) -> list[float]:
    k0, k1 = math.ceil(math.log2(lo) - 1e-12), math.floor(math.log2(hi) + 1e-12)
    return [2.0**k for k in range(k0, k1 + 1)]


def cmd_search(args, cfg: RunConfig) -> int:
    N_max = args.dim_max
    p = args.p if args.p is not None else 2.0
    sc = cfg.sweep_config()
    os.makedirs(cfg.out_dir, exist_ok=True)
    entries = []
    status = EXIT_OK
    for N in range(1, N_max + 1):
        recs = []
        for fam in _families(N, cfg):
            recs.extend(sweep(fam, p, sc))
        _write_csv(os.path.join(cfg.out_dir, f"sweep_N{N}.csv"), SWEEP_COLUMNS, [r.to_row() for r in recs])
        if any(r.error for r in recs):
            status = EXIT_SOLVER
        try:
            entries.append(estimate_m(N, [], p, sc, records=recs))
        except ValueError:
            status = EXIT_SOLVER
            break
    rep = MinimizerReport(p, entries, tolerance=cfg.strict_margin)
    m = rep.m_hats()
    margins = rep.margins() + [None]
    _write_csv(
        os.path.join(cfg.out_dir, "minimizers.csv"),
        ("N", "member", "family", "m_hat", "margin_to_next", "tolerance"),
        [
            {"N": e.N, "member": e.member_id, "family": e.family, "m_hat": e.m_hat, "margin_to_next": g, "tolerance": rep.tolerance}
            for e, g in zip(entries, margins)
        ],
    )
    if N_max >= 3:
        rows = []
        for L in _powers_of_two(cfg.lmin, cfg.lmax):
            r = evaluate_member(f"sqcyl[{L:g}]", _square_cylinder(L), p, sc, "square_cylinders")
            rows.append({"L": L, "h": r.h, "F": r.F, "route": r.routes})
        _write_csv(os.path.join(cfg.out_dir, "cylinder_series.csv"), ("L", "h", "F", "route"), rows)
    if not math.isinf(p):
        ba = ball_asymptotics(p, range(2, 21))
        _write_csv(os.path.join(cfg.out_dir, "ball_series.csv"), ("N", "F"), [{"N": r.N, "F": r.F} for r in ba.records])
    summary = " > ".join(f"{x:.7f}" for x in m)
    print(f"m_hat (p={_fmt(p)}): {summary}")
    if len(m) >= 2:
        verdict = verify_strict_decrease(rep)
        print(f"strict decrease: {'yes' if verdict.satisfied else 'NO'} (min margin {verdict.lhs:.6g})")
        if not verdict.satisfied and status == EXIT_OK:
            status = EXIT_VIOLATION
    return status


def _square_cylinder(L: float) -> Product:
    return Product(Box((1.0, 1.0)), L)


# ---------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file (default: $CHEEGER_LAB_CONFIG)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--resolution", type=float, help="grid cells per unit length")
    common.add_argument("--tolerance", type=float, help="relative tolerance on grid routes")
    common.add_argument("-v", "--verbose", action="store_true")

    ap = argparse.ArgumentParser(prog="cheeger-lab", description="Cheeger constants and p-Laplacian eigenvalues")
    sub = ap.add_subparsers(dest="command", required=True)

    c = sub.add_parser("compute", parents=[common], help="one quantity for one shape file")
    c.add_argument("--shape", required=True, help="JSON shape file")
    c.add_argument("--quantity", choices=("h", "lambda", "F"), default="h")
    c.add_argument("--p", type=parse_p, default=2.0, help="exponent > 1 or 'inf'")

    v = sub.add_parser("verify", parents=[common], help="run a verification suite and write a CSV report")
    v.add_argument("--suite", choices=("bounds", "sandwich", "structure"), default="bounds")
    v.add_argument("--shape", help="restrict to one shape file (bounds) or set the cross-section (sandwich)")
    v.add_argument("--p", type=parse_p, help="single exponent (default: configured list)")

    s = sub.add_parser("search", parents=[common], help="minimise F_p over convex families up to a dimension")
    s.add_argument("dim_max", type=int, choices=(1, 2, 3), help="largest dimension")
    s.add_argument("--p", type=parse_p, default=2.0)
    s.add_argument("--lmin", type=float, help="smallest cylinder height in the plot series")
    s.add_argument("--lmax", type=float, help="largest cylinder height in the plot series")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handlers = {"compute": cmd_compute, "verify": cmd_verify, "search": cmd_search}
    try:
        cfg = _config_from_args(args)
        return handlers[args.command](args, cfg)
    except SOLVER_ERRORS as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (*INPUT_ERRORS, InputError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())

"""Registry of spectral/isoperimetric inequalities, evaluated as margin reports.

Every report follows one sign convention: ``margin = lhs - rhs`` and the
check is satisfied when ``margin >= -tolerance_applied``. Checks that do not
apply to an input (wrong dimension, non-convex shape, p = inf) still produce
a report, with ``satisfied = None``, so nothing is skipped silently.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass, field

import numpy as np

from .cheeger import (
    CheegerResult,
    c_constant,
    estimate_v_epsilon,
    grid_cheeger,
    isoperimetric_profile,
    shape_cheeger,
)
from .cuts import set_perimeter
from .geometry import (
    Ball,
    Box,
    Interval,
    Polygon,
    ShapeSpec,
    bounding_box,
    dimension,
    extrude,
    extruded_height,
    is_convex,
    shape_to_dict,
    unit_ball_volume,
    voxelize,
)
from .spectral import SpectralResult, bessel_zero, box_lambda_2, lambda_p

log = logging.getLogger(__name__)

CHECK_IDS = (
    "cheeger_ineq",
    "fp_lower",
    "parini",
    "ftouhi_bessel",
    "bbp_general",
    "sandwich",
    "reverse_cheeger",
    "volume_lb",
    "coarea_proj",
    "inclusion_mono",
    "section_eig",
)

# short statement of each inequality, written into every report
ANCHORS = {
    "cheeger_ineq": "lambda_p >= (h/p)^p",
    "fp_lower": "F_p >= 1/p",
    "parini": "F_2 >= pi/(2N), convex",
    "ftouhi_bessel": "F_2 >= pi j01/(2 j01 + pi), convex planar",
    "bbp_general": "F_p >= max(1/p, pi (p-1)^(1/p) / (N p sin(pi/p))), convex",
    "sandwich.upper": "h(cross x (0,L)) <= h(cross) + 2/L",
    "sandwich.above": "h(cross x (0,L)) > h(cross)",
    "sandwich.lower": "h(cross x (0,L)) >= h(cross) + c/L, L >= 1",
    "sandwich.gap": "L (h(cross x (0,L)) - h(cross)) >= c",
    "sandwich.small_L": "L h(cross x (0,L)) -> 2 as L -> 0, convex cross",
    "reverse_cheeger": "lambda_2 / h^2 < pi^2/4, convex planar",
    "volume_lb": "|C| >= omega_N (N/h)^N for a Cheeger set C",
    "coarea_proj": "P(D) >= sum_t P(D_t) dt over horizontal sections",
    "inclusion_mono": "E subset F implies h(E) >= h(F)",
    "section_eig": "lambda_p(box) >= min over axis sections lambda_p(section)",
}

ANALYTIC_TOL = 1e-9
GRID_TOL = {1: 1e-9, 2: 0.02, 3: 0.05}
SMALL_L_BAND = 0.15


class UnknownCheckError(ValueError):
    pass


class MissingInputError(ValueError):
    pass


@dataclass(frozen=True)
class BoundReport:
    check_id: str
    shape_id: str
    p: float | None
    lhs: float
    rhs: float
    margin: float
    satisfied: bool | None  # None: not applicable
    tolerance_applied: float
    anchor: str
    units: str = ""
    note: str = ""

    @property
    def applicable(self) -> bool:
        return self.satisfied is not None

    @property
    def violated(self) -> bool:
        return self.satisfied is False

    def to_record(self) -> dict:
        return asdict(self)


def _need(inputs: dict, *names: str):
    missing = [n for n in names if inputs.get(n) is None]
    if missing:
        raise MissingInputError(f"missing input(s): {', '.join(missing)}")
    return [inputs[n] for n in names]


def _make(check_id, shape_id, p, lhs, rhs, rel_tol, units="", note="", abs_tol=None, strict=False) -> BoundReport:
    lhs, rhs = float(lhs), float(rhs)
    margin = lhs - rhs
    tol = abs_tol if abs_tol is not None else rel_tol * max(abs(rhs), abs(lhs) if rhs == 0 else 0.0)
    return BoundReport(
        check_id=check_id,
        shape_id=shape_id,
        p=p,
        lhs=lhs,
        rhs=rhs,
        margin=margin,
        satisfied=bool(margin > 0 if strict else margin >= -tol),
        tolerance_applied=float(tol),
        anchor=ANCHORS[check_id],
        units=units,
        note=note,
    )


def _na(check_id, shape_id, p, reason, lhs=float("nan"), rhs=float("nan")) -> BoundReport:
    return BoundReport(
        check_id=check_id,
        shape_id=shape_id,
        p=p,
        lhs=float(lhs),
        rhs=float(rhs),
        margin=float("nan"),
        satisfied=None,
        tolerance_applied=0.0,
        anchor=ANCHORS[check_id],
        note=f"not applicable: {reason}",
    )


def _spectral_ratio(inputs: dict) -> float:
    if inputs.get("F") is not None:
        return float(inputs["F"])
    lam, h, p = _need(inputs, "lambda_p", "h", "p")
    return lam ** (1 / p) / h


def bbp_rhs(N: int, p: float) -> float:
    return max(1 / p, math.pi * (p - 1) ** (1 / p) / (N * p * math.sin(math.pi / p)))


def evaluate_bound(check_id: str, inputs: dict, *, shape_id: str = "", rel_tol: float = ANALYTIC_TOL) -> BoundReport:
    """Evaluate one named inequality on the supplied quantities.

    ``rel_tol`` is relative to the magnitude of the right-hand side.
    Recognised inputs: h, lambda_p, F, p, N, convex, set_volume, h_cross,
    h_cyl, L, c, side, floor, cells, spacing, mode, h_inner, h_outer,
    edges, lambda_box, lambda_sections.
    """
    p = inputs.get("p")
    pf = float(p) if p is not None else None
    finite = pf is not None and math.isfinite(pf)
    if check_id == "cheeger_ineq":
        _need(inputs, "p")
        if not finite:
            return _na(check_id, shape_id, pf, "p = inf")
        lam, h = _need(inputs, "lambda_p", "h")
        return _make(check_id, shape_id, pf, lam, (h / pf) ** pf, rel_tol, "length^-p")
    if check_id == "fp_lower":
        _need(inputs, "p")
        if not finite:
            # only recorded: F_inf = 1/(rho h)
            F = inputs.get("F", float("nan"))
            return _na(check_id, shape_id, pf, "no bound asserted for p = inf", lhs=F)
        return _make(check_id, shape_id, pf, _spectral_ratio(inputs), 1 / pf, rel_tol)
    if check_id in ("parini", "ftouhi_bessel"):
        (N,) = _need(inputs, "N")
        _need(inputs, "p")
        if pf != 2:
            return _na(check_id, shape_id, pf, "stated for p = 2")
        if not inputs.get("convex", False):
            return _na(check_id, shape_id, pf, "non-convex shape")
        if check_id == "ftouhi_bessel" and N != 2:
            return _na(check_id, shape_id, pf, "planar only")
        if check_id == "parini":
            rhs = math.pi / (2 * N)
        else:
            j = bessel_zero(0.0)
            rhs = math.pi * j / (2 * j + math.pi)
        return _make(check_id, shape_id, pf, _spectral_ratio(inputs), rhs, rel_tol)
    if check_id == "bbp_general":
        (N,) = _need(inputs, "N")
        _need(inputs, "p")
        if not finite:
            return _na(check_id, shape_id, pf, "finite p only")
        if not inputs.get("convex", False):
            return _na(check_id, shape_id, pf, "non-convex shape")
        return _make(check_id, shape_id, pf, _spectral_ratio(inputs), bbp_rhs(int(N), pf), rel_tol)
    if check_id == "reverse_cheeger":
        N, _ = _need(inputs, "N", "p")
        if pf != 2 or N != 2 or not inputs.get("convex", False):
            return _na(check_id, shape_id, pf, "convex planar sets with p = 2 only")
        lam, h = _need(inputs, "lambda_p", "h")
        return _make(check_id, shape_id, pf, math.pi**2 / 4, lam / h**2, rel_tol)
    if check_id == "volume_lb":
        vol, h, N = _need(inputs, "set_volume", "h", "N")
        return _make(check_id, shape_id, pf, vol, unit_ball_volume(int(N)) * (N / h) ** N, rel_tol, "length^N")
    if check_id == "sandwich":
        (side,) = _need(inputs, "side")
        cid = f"sandwich.{side}"
        if side == "gap":
            gap, floor = _need(inputs, "gap", "floor")
            return _make(cid, shape_id, pf, gap, floor, rel_tol, abs_tol=inputs.get("abs_tol"), note=inputs.get("note", ""))
        h_cross, h_cyl, L = _need(inputs, "h_cross", "h_cyl", "L")
        if side == "upper":
            return _make(cid, shape_id, pf, h_cross + 2 / L, h_cyl, rel_tol, "1/length")
        if side == "above":
            return _make(cid, shape_id, pf, h_cyl, h_cross, 0.0, "1/length", strict=True)
        if side == "lower":
            (c,) = _need(inputs, "c")
            if L < 1:
                return _na(cid, shape_id, pf, "requires L >= 1")
            return _make(cid, shape_id, pf, h_cyl, h_cross + c / L, rel_tol, "1/length")
        if side == "small_L":
            if not inputs.get("convex", False):
                return _na(cid, shape_id, pf, "convex cross-section only")
            dev = abs(L * h_cyl / 2 - 1)
            return _make(cid, shape_id, pf, SMALL_L_BAND, dev, 0.0, note=f"L*h = {L * h_cyl:.6g}")
        raise UnknownCheckError(f"unknown sandwich side {side!r}")
    if check_id == "coarea_proj":
        cells, spacing = _need(inputs, "cells", "spacing")
        mode = inputs.get("mode", "faces")
        cells = np.asarray(cells, dtype=bool)
        total = set_perimeter(cells, spacing, mode)
        layers = sum(set_perimeter(cells[..., t], spacing, mode) for t in range(cells.shape[-1])) * spacing
        return _make(check_id, shape_id, pf, total, layers, rel_tol, "length^(N-1)", note=mode)
    if check_id == "inclusion_mono":
        hi_, ho = _need(inputs, "h_inner", "h_outer")
        return _make(check_id, shape_id, pf, hi_, ho, rel_tol, "1/length")
    if check_id == "section_eig":
        _need(inputs, "p")
        if inputs.get("lambda_box") is not None and inputs.get("lambda_sections") is not None:
            return _make(check_id, shape_id, pf, inputs["lambda_box"], min(inputs["lambda_sections"]), rel_tol)
        (edges,) = _need(inputs, "edges")
        edges = list(edges)
        if pf != 2:
            return _na(check_id, shape_id, pf, "closed form only for p = 2; supply lambda_box/lambda_sections")
        if len(edges) < 2:
            return _na(check_id, shape_id, pf, "needs dimension >= 2")
        secs = [box_lambda_2(edges[:i] + edges[i + 1 :]) for i in range(len(edges))]
        return _make(check_id, shape_id, pf, box_lambda_2(edges), min(secs), rel_tol, "length^-2")
    raise UnknownCheckError(f"unknown check id {check_id!r}")


# -------------------------------------------------------------- suites


@dataclass
class SuiteConfig:
    resolution_2d: float = 128  # cells per unit for planar grid routes
    resolution_3d: float = 32
    lambda_p_resolution_2d: float = 64
    grid_tol: dict = field(default_factory=lambda: dict(GRID_TOL))
    analytic_tol: float = ANALYTIC_TOL
    perimeter: str = "crofton"


_ANALYTIC_METHODS = ("closed-form", "klr", "bessel", "radial-ode", "inradius")


def _tol_for(method: str, ndim: int, cfg: SuiteConfig) -> float:
    if method.startswith(_ANALYTIC_METHODS) and "fd" not in method and "grid" not in method:
        return cfg.analytic_tol
    return cfg.grid_tol.get(ndim, 0.05)


def _lambda_route(s: ShapeSpec, p: float, cfg: SuiteConfig) -> SpectralResult:
    n = dimension(s)
    if n >= 3:
        res = cfg.resolution_3d
    elif p == 2:
        res = cfg.resolution_2d
    else:
        res = cfg.lambda_p_resolution_2d
    return lambda_p(s, p, res)


def shape_reports(shape_id: str, s: ShapeSpec, p: float, hres: CheegerResult, lres: SpectralResult, cfg: SuiteConfig):
    """All per-shape checks for one (shape, p) pair."""
    N = dimension(s)
    convex = is_convex(s)
    h = hres.h
    tol = max(_tol_for(hres.method, N, cfg), _tol_for(lres.method, N, cfg))
    inputs = {"h": h, "p": p, "N": N, "convex": convex, "set_volume": hres.set_volume, "F": lres.inv_root / h}
    if not math.isinf(p):
        inputs["lambda_p"] = lres.lambda_p
    out = []
    for cid in ("cheeger_ineq", "fp_lower", "parini", "ftouhi_bessel", "bbp_general", "reverse_cheeger"):
        out.append(evaluate_bound(cid, inputs, shape_id=shape_id, rel_tol=tol))
    htol = _tol_for(hres.method, N, cfg)
    if math.isnan(hres.set_volume):
        out.append(_na("volume_lb", shape_id, p, "no Cheeger set available"))
    else:
        out.append(evaluate_bound("volume_lb", inputs, shape_id=shape_id, rel_tol=htol))
    if isinstance(s, Box):
        out.append(evaluate_bound("section_eig", {"p": p, "edges": s.edges}, shape_id=shape_id, rel_tol=cfg.analytic_tol))
    return out


def run_suite(corpus, p_list: Sequence[float], config: SuiteConfig | None = None) -> list[BoundReport]:
    """Evaluate every applicable check over ``corpus`` x ``p_list``.

    ``corpus`` is a sequence of ``(shape_id, shape)`` pairs or bare shapes.
    Output is ordered by (shape id, check id, p).
    """
    cfg = config or SuiteConfig()
    items = [(c if isinstance(c, tuple) else (f"shape{i}", c)) for i, c in enumerate(corpus)]
    if not items:
        raise ValueError("corpus must not be empty")
    reports = []
    for sid, s in items:
        if not p_list:
            continue
        try:
            n = dimension(s)
            hres = shape_cheeger(s, cfg.resolution_2d if n <= 2 else cfg.resolution_3d, cfg.perimeter)
            for p in p_list:
                p = float(p)
                if not p > 1:
                    raise ValueError(f"exponent must exceed 1, got {p}")
                lres = _lambda_route(s, p, cfg)
                reports.extend(shape_reports(sid, s, p, hres, lres, cfg))
        except Exception as exc:
            raise type(exc)(f"[{sid}] {exc}") from exc
    reports.sort(key=lambda r: (r.shape_id, r.check_id, -1.0 if r.p is None else r.p))
    return reports


def violations(reports: Iterable[BoundReport]) -> list[BoundReport]:
    return [r for r in reports if r.violated]


def default_corpus() -> list[tuple[str, ShapeSpec]]:
    """Convex shapes covering closed-form, root-finding and grid routes."""
    from .geometry import ConvexPolygon

    return [
        ("interval", Interval(1.0)),
        ("square", Polygon(ConvexPolygon.rectangle(1, 1))),
        ("rect1x2", Polygon(ConvexPolygon.rectangle(1, 2))),
        ("rect1x4", Polygon(ConvexPolygon.rectangle(1, 4))),
        ("triangle", Polygon(ConvexPolygon.regular(3))),
        ("pentagon", Polygon(ConvexPolygon.regular(5))),
        ("hexagon", Polygon(ConvexPolygon.regular(6))),
        ("octagon", Polygon(ConvexPolygon.regular(8))),
        ("disk", Ball(2, 1.0)),
        ("ball3", Ball(3, 1.0)),
        ("cube", Box((1.0, 1.0, 1.0))),
        ("box1x1x2", Box((1.0, 1.0, 2.0))),
    ]


# -------------------------------------------------------------- sandwich


@dataclass
class SandwichPoint:
    L: float
    L_eff: float
    resolution: float
    h: float
    gap: float  # L_eff (h - h_cross)
    iterations: int


@dataclass
class SandwichConstants:
    h_cross: float
    v: float
    epsilon: float
    epsilon_clipped: bool
    c: float


def height_resolution(L: float, resolution: float, min_layers: int = 16) -> float:
    """Resolution >= ``resolution`` at which a thin height L spans whole layers (at least ``min_layers``)."""
    layers = math.ceil(L * resolution - 1e-9)
    if L >= 1 or layers >= min_layers:
        return resolution
    return max(layers, min_layers) / L


def sandwich_constants(cross: ShapeSpec, config: SuiteConfig | None = None, profile_resolution: float = 128):
    """h(cross) by the best route, and c from the sampled isoperimetric profile."""
    cfg = config or SuiteConfig()
    h_cross = shape_cheeger(cross, cfg.resolution_2d, cfg.perimeter).h
    pmask = voxelize(cross, profile_resolution)
    hp = grid_cheeger(pmask, perimeter=cfg.perimeter)
    prof = isoperimetric_profile(pmask, h=hp.h, perimeter=cfg.perimeter)
    ve = estimate_v_epsilon(pmask, hp.h, prof)
    c = c_constant(ve.v, ve.epsilon, hp.h, pmask.volume) if ve.epsilon > 0 else 0.0
    log.info("sandwich: h_cross=%.7g v=%.4g eps=%.4g c=%.4g", h_cross, ve.v, ve.epsilon, c)
    return SandwichConstants(h_cross, ve.v, ve.epsilon, ve.clipped, c)


MAX_SOLVER_CELLS_3D = 96**3


def cylinder_resolution(cross: ShapeSpec, L: float, resolution: float, cap: int = MAX_SOLVER_CELLS_3D) -> float:
    """Height-refined resolution, lowered until the mirror-reduced grid fits ``cap`` cells.

    Cylinders over symmetric cross-sections fold along all three axes, so
    the solver sees about 1/8 of the full grid.
    """
    res = height_resolution(L, resolution)
    lo, hi = bounding_box(cross)
    area = float(np.prod(np.asarray(hi) - np.asarray(lo)))
    while area * res**2 * L * res / 8 > cap and res > 16:
        res = max(16.0, math.floor(res * 0.95))
    return res


_CYLINDER_CACHE: dict = {}


def _cylinder_solve(cross: ShapeSpec, L: float, resolution: float, perimeter: str):
    res = cylinder_resolution(cross, L, resolution)
    key = (json.dumps(shape_to_dict(cross), sort_keys=True), float(L), float(res), perimeter)
    if key not in _CYLINDER_CACHE:
        m = extrude(voxelize(cross, res), L, res)
        r = grid_cheeger(m, perimeter=perimeter)
        _CYLINDER_CACHE[key] = (r.h, extruded_height(L, res), res, r.iterations)
    return _CYLINDER_CACHE[key]


def cylinder_h(cross: ShapeSpec, L: float, resolution: float, perimeter: str = "crofton") -> tuple[float, float, float]:
    """(h, represented height, resolution used) for cross x (0, L) on the grid; memoised per process."""
    return _cylinder_solve(cross, L, resolution, perimeter)[:3]


def cylinder_point(cross: ShapeSpec, L: float, h_cross: float, resolution: float = 64, perimeter: str = "crofton"):
    h, L_eff, res, iters = _cylinder_solve(cross, L, resolution, perimeter)
    return SandwichPoint(L, L_eff, res, h, L_eff * (h - h_cross), iters)


def check_sandwich(
    cross: ShapeSpec,
    L_list: Sequence[float],
    config: SuiteConfig | None = None,
    *,
    shape_id: str = "cross",
    resolution: float = 64,
    tol_3d: float = 0.05,
    profile_resolution: float = 128,
    constants: SandwichConstants | None = None,
    points: Sequence[SandwichPoint] | None = None,
    points_out: list | None = None,
) -> list[BoundReport]:
    """Cylinder envelope checks over heights ``L_list``.

    h(cross) uses the best route; cylinders are extruded cross-section
    masks solved on the grid. Heights below one are refined so they span
    whole layers (see :func:`height_resolution`); the represented height
    ``L_eff`` is used throughout. ``constants`` and ``points`` can be passed
    to reuse earlier solves.
    """
    cfg = config or SuiteConfig()
    k = constants or sandwich_constants(cross, cfg, profile_resolution)
    if points is None:
        points = [cylinder_point(cross, L, k.h_cross, resolution, cfg.perimeter) for L in L_list]
    if points_out is not None:
        points_out.extend(points)
    convex = is_convex(cross)
    reports = []
    for pt in points:
        base = {"h_cross": k.h_cross, "h_cyl": pt.h, "L": pt.L_eff, "c": k.c, "p": None, "convex": convex}
        reports.append(evaluate_bound("sandwich", {**base, "side": "upper"}, shape_id=shape_id, rel_tol=tol_3d))
        reports.append(evaluate_bound("sandwich", {**base, "side": "above"}, shape_id=shape_id))
        reports.append(evaluate_bound("sandwich", {**base, "side": "lower"}, shape_id=shape_id, rel_tol=tol_3d))
        if pt.L_eff <= 0.25:
            reports.append(evaluate_bound("sandwich", {**base, "side": "small_L"}, shape_id=shape_id))
    if points:
        gap = min(pt.gap for pt in points)
        note = f"min over {len(points)} heights; c = {k.c:.6g}"
        reports.append(
            evaluate_bound(
                "sandwich",
                {"side": "gap", "gap": gap, "floor": k.c, "abs_tol": tol_3d * k.c, "note": note},
                shape_id=shape_id,
            )
        )
    return reports


# -------------------------------------------------------------- export

CSV_COLUMNS = ("check_id", "shape_id", "p", "lhs", "rhs", "margin", "satisfied", "tolerance", "anchor")


def reports_to_csv(reports: Iterable[BoundReport], path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(CSV_COLUMNS)
    for r in reports:
        sat = "n/a" if r.satisfied is None else str(r.satisfied).lower()
        p = "n/a" if r.p is None else repr(r.p)
        w.writerow([r.check_id, r.shape_id, p, repr(r.lhs), repr(r.rhs), repr(r.margin), sat, repr(r.tolerance_applied), r.anchor])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text

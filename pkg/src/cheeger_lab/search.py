"""Sweeps of F_p = lambda_p^(1/p) / h over parametric convex families.

F_p is scale invariant, so each family is sampled over shape parameters
only (aspect ratio, number of sides, cylinder height). The best value per
dimension is an upper estimate of the infimum over convex sets.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .bounds import BoundReport, bbp_rhs, cylinder_h, height_resolution
from .cheeger import klr_cheeger, shape_cheeger
from .geometry import (
    Ball,
    Box,
    ConvexPolygon,
    Interval,
    Polygon,
    Product,
    ShapeSpec,
    dimension,
)
from .spectral import (
    ball_lambda_p,
    bessel_zero,
    cylinder_lambda2,
    inradius,
    lambda_p,
    radial_first_zero,
)

log = logging.getLogger(__name__)

FAMILIES = (
    "intervals",
    "rectangles",
    "regular_polygons",
    "disks",
    "boxes",
    "square_cylinders",
    "disk_cylinders",
    "balls",
)


@dataclass
class FamilySpec:
    """A family tag plus the sampled parameter values.

    ``values`` meaning per tag: intervals/disks: sizes; rectangles: aspect
    ratios b/a; regular_polygons: side counts; boxes: edge tuples;
    *_cylinders: heights L; balls: dimensions.
    """

    tag: str
    values: tuple
    scale: float = 1.0

    def __post_init__(self):
        if self.tag not in FAMILIES:
            raise ValueError(f"unknown family {self.tag!r}")
        self.values = tuple(self.values)
        if not self.values:
            raise ValueError("family needs at least one member")
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def members(self) -> list[tuple[str, ShapeSpec]]:
        t = self.scale
        out = []
        for v in self.values:
            if self.tag == "intervals":
                out.append((f"interval[{v:g}]", Interval(float(v) * t)))
            elif self.tag == "rectangles":
                out.append((f"rect[1x{v:g}]", Box((t, float(v) * t))))
            elif self.tag == "regular_polygons":
                out.append((f"ngon[{int(v)}]", Polygon(ConvexPolygon.regular(int(v), t))))
            elif self.tag == "disks":
                out.append((f"disk[{v:g}]", Ball(2, float(v) * t)))
            elif self.tag == "boxes":
                edges = tuple(float(e) * t for e in v)
                out.append(("box[" + "x".join(f"{e:g}" for e in v) + "]", Box(edges)))
            elif self.tag == "square_cylinders":
                out.append((f"sqcyl[{v:g}]", Product(Box((t, t)), float(v) * t)))
            elif self.tag == "disk_cylinders":
                out.append((f"diskcyl[{v:g}]", Product(Ball(2, t), float(v) * t)))
            elif self.tag == "balls":
                out.append((f"ball[{int(v)}]", Ball(int(v), t)))
        return out

    @property
    def dimension(self) -> int:
        dims = {dimension(s) for _, s in self.members()}
        if len(dims) != 1:
            raise ValueError(f"family {self.tag} mixes dimensions {sorted(dims)}")
        return dims.pop()


def default_families(N: int) -> list[FamilySpec]:
    """Log-spaced aspect ratios, k = 3..12 polygons, cylinder heights in [1/8, 32]."""
    if N == 1:
        return [FamilySpec("intervals", (0.5, 1.0, 2.0))]
    if N == 2:
        return [
            FamilySpec("rectangles", tuple(np.round(np.geomspace(1, 16, 9), 6))),
            FamilySpec("regular_polygons", tuple(range(3, 13))),
            FamilySpec("disks", (1.0,)),
        ]
    if N == 3:
        return [
            FamilySpec("square_cylinders", (1.0, 2.0, 4.0, 8.0)),
            FamilySpec("balls", (3,)),
        ]
    raise ValueError("default families exist for N = 1, 2, 3")


@dataclass
class SweepConfig:
    resolution_2d: float = 128
    resolution_3d: float = 64
    lambda_p_resolution: float = 64
    lambda_p_resolution_3d: float = 24
    perimeter: str = "crofton"


@dataclass
class SweepRecord:
    member_id: str
    family: str
    N: int
    p: float
    h: float
    lambda_p: float | None  # None for p = inf
    inradius: float | None
    F: float
    routes: str
    params: dict = field(default_factory=dict)
    error: str | None = None

    def recompute_F(self) -> float:
        if math.isinf(self.p):
            return 1.0 / (self.inradius * self.h)
        return self.lambda_p ** (1 / self.p) / self.h

    def to_row(self) -> dict:
        return {
            "family": self.family,
            "member": self.member_id,
            "N": self.N,
            "p": self.p,
            "h": self.h,
            "lambda": self.lambda_p if self.lambda_p is not None else "",
            "inradius": self.inradius if self.inradius is not None else "",
            "F": self.F,
            "route": self.routes,
            "error": self.error or "",
        }


def _product_cheeger(s: Product, cfg: SweepConfig):
    if isinstance(s.cross, Interval):
        return klr_cheeger(ConvexPolygon.rectangle(s.cross.length, s.height)).h, "klr"
    h, L_eff, res = cylinder_h(s.cross, s.height, cfg.resolution_3d, cfg.perimeter)
    if abs(L_eff - s.height) > 1e-9 * s.height:
        log.info("cylinder height %g represented as %g", s.height, L_eff)
    return h, f"grid@{res:g}"


def evaluate_member(member_id: str, s: ShapeSpec, p: float, cfg: SweepConfig, family: str = "") -> SweepRecord:
    """F_p of one shape by the cheapest exact route available."""
    N = dimension(s)
    p = float(p)
    if isinstance(s, Product):
        h, hroute = _product_cheeger(s, cfg)
    else:
        hres = shape_cheeger(s, cfg.resolution_2d if N <= 2 else cfg.resolution_3d, cfg.perimeter)
        h, hroute = hres.h, hres.method
    if math.isinf(p):
        rho = inradius(s)
        return SweepRecord(member_id, family, N, p, h, None, rho, 1 / (rho * h), f"h:{hroute}|rho:exact")
    if p == 2 and isinstance(s, Product) and isinstance(s.cross, (Polygon, Ball, Interval, Box)):
        cross = lambda_p(s.cross, 2.0, cfg.resolution_2d)
        lam = cylinder_lambda2(cross.lambda_p, s.height)
        lroute = f"additivity+{cross.method}"
    elif isinstance(s, Product):
        res = height_resolution(s.height, cfg.lambda_p_resolution_3d)
        r = lambda_p(s, p, res)
        lam, lroute = r.lambda_p, f"{r.method}@{res:g}"
    else:
        if N >= 3:
            res = cfg.lambda_p_resolution_3d
        else:
            res = cfg.resolution_2d if p == 2 else cfg.lambda_p_resolution
        r = lambda_p(s, p, res)
        lam, lroute = r.lambda_p, r.method
    return SweepRecord(member_id, family, N, p, h, lam, None, lam ** (1 / p) / h, f"h:{hroute}|lambda:{lroute}")


def sweep(family: FamilySpec, p: float, config: SweepConfig | None = None) -> list[SweepRecord]:
    """Evaluate F_p on every member; failures are recorded, not raised."""
    cfg = config or SweepConfig()
    out = []
    for mid, s in family.members():
        try:
            out.append(evaluate_member(mid, s, p, cfg, family.tag))
        except Exception as exc:  # keep sweeping
            log.warning("member %s failed: %s", mid, exc)
            out.append(
                SweepRecord(mid, family.tag, dimension(s), float(p), math.nan, None, None, math.nan, "", error=str(exc))
            )
    return out


@dataclass
class MinimizerEntry:
    N: int
    member_id: str
    family: str
    m_hat: float
    n_records: int


@dataclass
class MinimizerReport:
    p: float
    entries: list
    tolerance: float = 1e-3

    def m_hats(self) -> list[float]:
        return [e.m_hat for e in sorted(self.entries, key=lambda e: e.N)]

    def margins(self) -> list[float]:
        m = self.m_hats()
        return [a - b for a, b in zip(m, m[1:])]


def estimate_m(N: int, families: Sequence[FamilySpec], p: float, config: SweepConfig | None = None, records=None) -> MinimizerEntry:
    """m_hat_N = min of F_p over all sampled members of dimension N."""
    recs = list(records) if records is not None else []
    for f in families:
        if f.dimension != N:
            raise ValueError(f"family {f.tag} has dimension {f.dimension}, expected {N}")
        recs.extend(sweep(f, p, config))
    good = [r for r in recs if r.error is None and math.isfinite(r.F)]
    if not good:
        raise ValueError("empty sweep: no member evaluated successfully")
    best = min(good, key=lambda r: r.F)
    return MinimizerEntry(N, best.member_id, best.family, best.F, len(good))


@dataclass
class CylinderSearch:
    cross_F: float
    best: SweepRecord
    records: list
    witness: bool  # some height gives F_p(cross x (0,L)) < F_p(cross)


def optimize_cylinder_height(
    cross: ShapeSpec, p: float, L_range: Sequence[float], config: SweepConfig | None = None
) -> CylinderSearch:
    """Sweep heights and report the best cylinder over ``cross``.

    Grid solves of h are memoised per process, so sweeps that revisit a
    height (or follow a sandwich run at the same resolution) reuse them.
    """
    cfg = config or SweepConfig()
    base = evaluate_member("cross", cross, p, cfg)
    if not L_range:
        raise ValueError("empty height range")
    recs = [evaluate_member(f"cyl[{L:g}]", Product(cross, float(L)), p, cfg, "cylinders") for L in L_range]
    best = min(recs, key=lambda r: r.F)
    return CylinderSearch(base.F, best, recs, witness=best.F < base.F)


STRICT_DECREASE_ANCHOR = "m_1 > m_2 > ... and m_N > 1/p"


def verify_strict_decrease(report: MinimizerReport, p: float | None = None, tolerance: float | None = None) -> BoundReport:
    """Strict decrease of m_hat_N with margins above ``tolerance``, and m_hat_N > 1/p.

    The report's lhs is the smallest of all step gaps m_N - m_(N+1) and of
    m_N - 1/p; rhs is the required margin. A failure is a report with
    ``satisfied = False``, never an exception.
    """
    p = report.p if p is None else float(p)
    tol = report.tolerance if tolerance is None else tolerance
    m = report.m_hats()
    if len(m) < 2:
        raise ValueError("need estimates for at least two dimensions")
    floor = 0.0 if math.isinf(p) else 1 / p
    gaps = report.margins() + [x - floor for x in m]
    lhs = min(gaps)
    return BoundReport(
        check_id="strict_decrease",
        shape_id="m_hat",
        p=p,
        lhs=lhs,
        rhs=tol,
        margin=lhs - tol,
        satisfied=bool(lhs - tol >= 0),
        tolerance_applied=0.0,
        anchor=STRICT_DECREASE_ANCHOR,
        note="m_hat = " + ", ".join(f"{x:.7g}" for x in m),
    )


@dataclass
class BallAsymptotics:
    records: list
    decreasing: bool
    above_floor: bool


def ball_F(N: int, p: float) -> float:
    """F_p of the unit N-ball: lambda_p^(1/p) / N."""
    if p == 2:
        return bessel_zero(N / 2 - 1) / N
    if math.isinf(p):
        return 1.0 / N
    if N == 1:
        return ball_lambda_p(1, p) ** (1 / p)
    return radial_first_zero(N, p) / N


def ball_asymptotics(p: float, N_list: Sequence[int]) -> BallAsymptotics:
    """F_p[B_1^N] along ``N_list``; checks monotone decrease and F > 1/p."""
    p = float(p)
    if math.isinf(p):
        raise ValueError("finite p only")
    Ns = [int(n) for n in N_list]
    if any(b <= a for a, b in zip(Ns, Ns[1:])):
        raise ValueError("N_list must be increasing")
    recs = []
    for N in Ns:
        F = ball_F(N, p)
        lam = (F * N) ** p
        route = "bessel" if p == 2 else "radial-ode"
        recs.append(SweepRecord(f"ball[{N}]", "balls", N, p, float(N), lam, None, F, f"h:closed-form|lambda:{route}"))
    Fs = [r.F for r in recs]
    dec = all(b < a for a, b in zip(Fs, Fs[1:]))
    above = all(f > 1 / p for f in Fs)
    return BallAsymptotics(recs, dec, above)


def general_lower_bound(N: int, p: float) -> float:
    return bbp_rhs(N, p)

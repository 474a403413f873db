"""Cheeger constants: closed forms, convex-planar root finding, and a grid solver.

The grid route runs Dinkelbach's iteration on the discrete ratio P(E)/|E|;
each step is one parametric min-cut (see :mod:`cheeger_lab.cuts`).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import distance_transform_edt
from scipy.optimize import brentq

from .cuts import CutProblem, set_perimeter
from .geometry import (
    Ball,
    Box,
    ConvexPolygon,
    Grid,
    GridMask,
    Interval,
    Polygon,
    Product,
    ShapeSpec,
    exact_volume,
    inner_parallel_area,
    inner_parallel_polygon,
    polygon_measures,
    rle_encode,
    unit_ball_volume,
    voxelize,
)

log = logging.getLogger(__name__)


class ConsistencyError(RuntimeError):
    """A solver detected a state that cannot occur for valid input."""


class ProfileError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class RoundedBody:
    """Inner parallel polygon dilated by a disk: the convex-planar Cheeger set."""

    inner: np.ndarray
    radius: float
    area: float
    perimeter: float


@dataclass(eq=False)
class CheegerResult:
    h: float
    method: str
    optimal_set: GridMask | RoundedBody | None = None
    iterations: int = 0
    ratio_trace: list = field(default_factory=list)
    residual: float = 0.0
    set_volume: float = float("nan")
    set_perimeter: float = float("nan")

    def to_record(self, include_set: bool = False) -> dict:
        rec = {
            "method": self.method,
            "h": self.h,
            "iterations": self.iterations,
            "residual": self.residual,
        }
        if include_set and isinstance(self.optimal_set, GridMask):
            m = self.optimal_set
            rec["set"] = {"dims": list(m.dims), "spacing": m.spacing, "cells": rle_encode(m.cells)}
        return rec


# ------------------------------------------------------------ closed forms


def rectangle_cheeger(a: float, b: float) -> float:
    """Cheeger constant of an a-by-b rectangle."""
    if not (a > 0 and b > 0):
        raise ValueError("rectangle sides must be positive")
    return (a + b + math.sqrt((a - b) ** 2 + math.pi * a * b)) / (a * b)


def ball_cheeger(dim: int, radius: float = 1.0) -> float:
    if dim < 1 or not radius > 0:
        raise ValueError("need dim >= 1 and radius > 0")
    return dim / radius


def interval_cheeger(length: float) -> float:
    return 2.0 / length


# ---------------------------------------------------------- convex planar


def _offset_piece(v: np.ndarray) -> tuple[float, float, float]:
    """(area, perimeter, K) with |inner set at extra offset t| = area - perimeter t + K t^2 on this piece.

    K is the sum of tan(turning angle / 2) over the vertices.
    """
    nv = np.concatenate([v[1:], v[:1]])
    e = nv - v
    lengths = np.hypot(e[:, 0], e[:, 1])
    keep = lengths > 1e-12 * lengths.max()
    d = e[keep] / lengths[keep, None]
    nd = np.concatenate([d[1:], d[:1]])
    turn = np.arctan2(d[:, 0] * nd[:, 1] - d[:, 1] * nd[:, 0], (d * nd).sum(axis=1))
    area = 0.5 * float(np.dot(v[:, 0], nv[:, 1]) - np.dot(nv[:, 0], v[:, 1]))
    return area, float(lengths.sum()), float(np.tan(turn / 2).sum())


def _klr_root(p: ConvexPolygon, rho: float) -> tuple[float, int]:
    """Root of g(r) = |inner set| - pi r^2 by exact quadratic steps, piece by piece.

    g is convex (curvature 2K - 2 pi only grows as edges vanish), so each
    step lands at or below the root and the iteration ends on the piece
    that contains it.
    """
    r = 0.0
    for it in range(1, 4 * len(p.vertices) + 8):
        v = inner_parallel_polygon(p, r)
        if len(v) < 3:
            break
        a, per, K = _offset_piece(v)
        qa, qb, qc = K - math.pi, -(per + 2 * math.pi * r), a - math.pi * r * r
        if qc <= 0:
            return r, it
        disc = max(qb * qb - 4 * qa * qc, 0.0)
        step = 2 * qc / (-qb + math.sqrt(disc))  # smaller root, stable when qa ~ 0
        r = min(r + step, rho)
        if step <= 4 * np.finfo(float).eps * r:
            return r, it
    raise ConsistencyError("piecewise quadratic iteration did not settle")


def klr_cheeger(p: ConvexPolygon, tol: float = 1e-12) -> CheegerResult:
    """h = 1/r where r solves |inner parallel set at distance r| = pi r^2."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    area, _, rho = polygon_measures(p)

    def g(r):
        return inner_parallel_area(p, r) - math.pi * r * r

    try:
        r, iters = _klr_root(p, rho)
    except ConsistencyError:
        if not (g(0.0) > 0 > g(rho)):
            raise ConsistencyError("inner-parallel equation is not bracketed on [0, inradius]") from None
        r, info = brentq(g, 0.0, rho, xtol=1e-12, rtol=4 * np.finfo(float).eps, maxiter=200, full_output=True)
        iters = info.iterations
    inner = inner_parallel_polygon(p, r)
    a_in, p_in = _offset_piece(inner)[:2] if len(inner) >= 3 else (0.0, 0.0)
    resid = abs(a_in - math.pi * r * r)
    if resid > max(tol, 1e-10 * area):
        raise ConsistencyError(f"root residual {resid:.3e} above tolerance")
    body = RoundedBody(
        inner=inner,
        radius=r,
        area=a_in + p_in * r + math.pi * r * r,
        perimeter=p_in + 2 * math.pi * r,
    )
    return CheegerResult(
        h=1.0 / r,
        method="klr",
        optimal_set=body,
        iterations=iters,
        residual=resid,
        set_volume=body.area,
        set_perimeter=body.perimeter,
    )


# -------------------------------------------------------------- grid route


def grid_cheeger(
    mask: GridMask,
    *,
    perimeter: str = "crofton",
    max_iter: int = 50,
    tol: float = 1e-10,
    reduce: bool = True,
    problem: CutProblem | None = None,
) -> CheegerResult:
    """Dinkelbach iteration h_{k+1} = P(E_k)/|E_k|, E_k = argmin P(E) - h_k |E|.

    Starts from the ratio of the whole mask. Stops when a step no longer
    lowers the ratio by more than ``tol`` (relative) or the subproblem
    returns the empty set.
    """
    if mask.count == 0:
        raise ValueError("empty mask")
    cp = problem if problem is not None else CutProblem(mask.cells, mask.spacing, perimeter, reduce)
    x = np.ones(cp.n, dtype=bool)
    per, vol = cp.perimeter(x), cp.volume(x)
    h = per / vol
    trace = [h]
    it = 0
    for it in range(1, max_iter + 1):
        y = cp.minimize(h)
        if not y.any():
            break
        per_y, vol_y = cp.perimeter(y), cp.volume(y)
        h_new = per_y / vol_y
        if h_new >= h * (1 - tol):
            slack = cp.rounding_bound(h) / vol_y
            if h_new > h + slack + 1e-12 * h:
                raise ConsistencyError(f"Dinkelbach ratio increased: {h} -> {h_new}")
            break
        x, per, vol, h = y, per_y, vol_y, h_new
        trace.append(h)
    else:
        log.warning("grid_cheeger hit max_iter=%d", max_iter)
    cells = cp.expand(x)
    full_per = set_perimeter(cells, mask.spacing, perimeter)
    full_vol = np.count_nonzero(cells) * mask.cell_volume
    h_cert = full_per / full_vol
    return CheegerResult(
        h=h_cert,
        method=f"grid-{perimeter}",
        optimal_set=mask.with_cells(cells),
        iterations=it,
        ratio_trace=trace,
        residual=abs(h_cert - h),
        set_volume=full_vol,
        set_perimeter=full_per,
    )


# ---------------------------------------------------- isoperimetric profile


@dataclass
class ProfileSample:
    volume: float
    perimeter: float
    source: str  # "multiplier" or "window"
    parameter: float  # multiplier mu, or window radius

    @property
    def ratio(self) -> float:
        return self.perimeter / self.volume


@dataclass
class IsoperimetricProfile:
    samples: list
    h: float
    ndim: int
    domain_volume: float

    def volumes(self) -> np.ndarray:
        return np.array([s.volume for s in self.samples])

    def ratios(self) -> np.ndarray:
        return np.array([s.ratio for s in self.samples])


def _window_radii(mask: GridMask, center_idx: tuple, n: int) -> np.ndarray:
    """Ball radii whose windows cover volume fractions evenly spaced in (0, 1]."""
    ax = [np.arange(d) for d in mask.dims]
    grids = np.meshgrid(*ax, indexing="ij")
    dist = np.sqrt(sum((g - c) ** 2 for g, c in zip(grids, center_idx)))[mask.cells] * mask.spacing
    dist.sort()
    fr = np.arange(1, n + 1) / n
    k = np.clip(np.ceil(fr * len(dist)).astype(int) - 1, 0, len(dist) - 1)
    return np.unique(dist[k] + 1e-9 * mask.spacing)


def isoperimetric_profile(
    mask: GridMask,
    n_samples: int = 24,
    *,
    h: float | None = None,
    perimeter: str = "crofton",
    mu_max_factor: float = 50.0,
    n_windows: int | None = None,
) -> IsoperimetricProfile:
    """Sampled (volume, perimeter) pairs of near-optimal subsets.

    Two sample families:

    * multiplier sweep: minimisers of P(E) - mu |E| for mu log-spaced in
      (h, mu_max_factor * h]; these are the support points of the convex
      envelope of the profile and all have volume >= the Cheeger-set volume;
    * windows: Cheeger sets of mask ∩ B(c, R) with c the deepest cell and R
      chosen so the windows cover evenly spaced volume fractions; these reach
      the volumes below the Cheeger-set volume that the sweep cannot.
    """
    if n_samples < 8:
        raise ValueError("n_samples must be >= 8")
    cp = CutProblem(mask.cells, mask.spacing, perimeter)
    if h is None:
        h = grid_cheeger(mask, perimeter=perimeter, problem=cp).h
    n_mu = n_samples // 2
    n_win = n_windows if n_windows is not None else n_samples - n_mu
    samples = []
    for mu in h * np.geomspace(1 + 1e-3, mu_max_factor, n_mu):
        x = cp.minimize(mu)
        if x.any():
            samples.append(ProfileSample(cp.volume(x) * cp.multiplicity, cp.perimeter(x) * cp.multiplicity, "multiplier", float(mu)))
    if not samples:
        raise ProfileError("multiplier sweep returned only empty sets; range misconfigured")
    if all(abs(s.volume - mask.volume) < 0.5 * mask.cell_volume for s in samples) and n_mu > 1:
        raise ProfileError("multiplier sweep returned only the full mask; range misconfigured")

    if n_win > 0:
        edt = distance_transform_edt(np.pad(mask.cells, 1))[tuple(slice(1, -1) for _ in mask.dims)]
        center = np.unravel_index(np.argmax(edt), mask.dims)
        ax = [np.arange(d) for d in mask.dims]
        grids = np.meshgrid(*ax, indexing="ij")
        dist = np.sqrt(sum((g - c) ** 2 for g, c in zip(grids, center))) * mask.spacing
        for R in _window_radii(mask, center, n_win):
            win = mask.cells & (dist <= R)
            if not win.any():
                continue
            res = grid_cheeger(mask.with_cells(win), perimeter=perimeter)
            samples.append(ProfileSample(res.set_volume, res.set_perimeter, "window", float(R)))

    samples.sort(key=lambda s: (s.volume, s.perimeter))
    return IsoperimetricProfile(samples=samples, h=float(h), ndim=mask.ndim, domain_volume=mask.volume)


@dataclass
class VEpsilon:
    v: float
    epsilon: float
    clipped: bool
    epsilon_floor: float  # free-space isoperimetric lower bound on epsilon


def estimate_v_epsilon(mask: GridMask, h: float, profile: IsoperimetricProfile, ratio_tol: float = 1e-2) -> VEpsilon:
    """Minimal Cheeger-set volume proxy ``v`` and the gap ``epsilon``.

    ``v`` is the smallest sampled volume whose ratio is within
    ``(1 + ratio_tol)`` of ``h``; ``epsilon`` is the smallest sampled ratio
    among volumes <= v/2, minus ``h``. ``epsilon_floor`` is the bound implied
    by the free-space isoperimetric inequality alone.
    """
    vols, ratios = profile.volumes(), profile.ratios()
    near = ratios <= h * (1 + ratio_tol)
    if not near.any():
        raise ProfileError("no sample attains the Cheeger ratio; sweep too coarse")
    v = float(vols[near].min())
    small = vols <= v / 2
    if not small.any():
        raise ProfileError("no sample with volume <= v/2; request a denser window sweep")
    eps = float(ratios[small].min()) - h
    n = mask.ndim
    floor = n * unit_ball_volume(n) ** (1 / n) * (v / 2) ** (-1 / n) - h
    return VEpsilon(v=v, epsilon=max(eps, 0.0), clipped=eps < 0, epsilon_floor=floor)


def c_constant(v: float, eps: float, h: float, total_volume: float) -> float:
    """min{ v/(8|Ω|), eps v/(8 h |Ω|), eps }."""
    for name, val in (("v", v), ("eps", eps), ("h", h), ("total_volume", total_volume)):
        if not val > 0:
            raise ValueError(f"{name} must be positive, got {val}")
    return min(v / (8 * total_volume), eps * v / (8 * h * total_volume), eps)


@dataclass(frozen=True)
class CylinderEnvelope:
    h_cross: float
    L: float
    lower: float
    upper: float
    c_used: float


def cylinder_envelope(h_cross: float, L: float, c: float = 0.0) -> CylinderEnvelope:
    """Lower h + c/L (only for L >= 1) and upper h + 2/L bounds on h(Ω x (0,L))."""
    if not (h_cross > 0 and L > 0 and c >= 0):
        raise ValueError("need h_cross > 0, L > 0, c >= 0")
    lower = h_cross + (c / L if L >= 1 else 0.0)
    return CylinderEnvelope(h_cross=h_cross, L=L, lower=lower, upper=h_cross + 2.0 / L, c_used=c)


# ------------------------------------------------------------- dispatch


def shape_cheeger(s: ShapeSpec, resolution: float = 128, perimeter: str = "crofton", max_iter: int = 50) -> CheegerResult:
    """Cheapest route: closed form, then convex-planar root finding, then grid."""
    if isinstance(s, Interval):
        return CheegerResult(interval_cheeger(s.length), "closed-form", set_volume=s.length, set_perimeter=2.0)
    if isinstance(s, Ball):
        vol = exact_volume(s)
        return CheegerResult(ball_cheeger(s.dim, s.radius), "closed-form", set_volume=vol, set_perimeter=vol * s.dim / s.radius)
    if isinstance(s, Box) and len(s.edges) == 1:
        return shape_cheeger(Interval(s.edges[0]))
    if isinstance(s, Box) and len(s.edges) == 2:
        return klr_cheeger(ConvexPolygon.rectangle(*s.edges))
    if isinstance(s, Product) and isinstance(s.cross, Interval):
        return klr_cheeger(ConvexPolygon.rectangle(s.cross.length, s.height))
    if isinstance(s, Polygon):
        return klr_cheeger(s.polygon)
    mask = s.mask if isinstance(s, Grid) else voxelize(s, resolution)
    return grid_cheeger(mask, perimeter=perimeter, max_iter=max_iter)

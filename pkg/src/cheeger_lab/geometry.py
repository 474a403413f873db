"""Domain representations and exact geometric primitives.

Shapes are plain frozen dataclasses. ``ShapeSpec`` is the union of the
variants; solvers dispatch on the concrete type. Grid masks always carry a
one-cell empty margin so that Dirichlet and perimeter terms at the border
of the occupied region are well defined.
"""

from __future__ import annotations

import json
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np
from scipy.optimize import linprog

POS_TOL = 1e-12
AREA_TOL = 1e-14

# cells; extrude and voxelize refuse to allocate more than this by default
DEFAULT_MEMORY_BUDGET = 64_000_000


class InvalidShapeError(ValueError):
    pass


class InvalidResolutionError(ValueError):
    pass


class ResourceError(MemoryError):
    pass


# ---------------------------------------------------------------- polygons


@dataclass(frozen=True, eq=False)
class ConvexPolygon:
    """Strictly convex polygon with counterclockwise vertices."""

    vertices: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise InvalidShapeError("polygon needs at least 3 two-dimensional vertices")
        edges = np.roll(v, -1, axis=0) - v
        if np.any(np.hypot(edges[:, 0], edges[:, 1]) <= POS_TOL):
            raise InvalidShapeError("duplicate consecutive vertices")
        nxt = np.roll(edges, -1, axis=0)
        cross = edges[:, 0] * nxt[:, 1] - edges[:, 1] * nxt[:, 0]
        if np.all(cross < 0):
            # accept clockwise input, store counterclockwise
            v = v[::-1].copy()
            edges = np.roll(v, -1, axis=0) - v
            nxt = np.roll(edges, -1, axis=0)
            cross = edges[:, 0] * nxt[:, 1] - edges[:, 1] * nxt[:, 0]
        if not np.all(cross > 0):
            raise InvalidShapeError("polygon is not strictly convex")
        if _shoelace(v) <= AREA_TOL:
            raise InvalidShapeError("degenerate polygon")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @classmethod
    def rectangle(cls, a: float, b: float) -> ConvexPolygon:
        return cls(np.array([[0.0, 0.0], [a, 0.0], [a, b], [0.0, b]]))

    @classmethod
    def regular(cls, k: int, circumradius: float = 1.0, phase: float | None = None) -> ConvexPolygon:
        """Regular k-gon centred at the origin; default phase puts one edge at the bottom."""
        if k < 3:
            raise InvalidShapeError("regular polygon needs k >= 3")
        if phase is None:
            phase = -math.pi / 2 + math.pi / k
        t = phase + 2 * math.pi * np.arange(k) / k
        return cls(circumradius * np.column_stack([np.cos(t), np.sin(t)]))

    def scaled(self, t: float) -> ConvexPolygon:
        return ConvexPolygon(self.vertices * t)

    def halfplanes(self) -> tuple[np.ndarray, np.ndarray]:
        """Outward unit normals ``n`` and offsets ``c`` with the polygon = {x : n.x <= c}."""
        return self._halfplanes

    @cached_property
    def _halfplanes(self) -> tuple[np.ndarray, np.ndarray]:
        v = self.vertices
        e = np.roll(v, -1, axis=0) - v
        n = np.column_stack([e[:, 1], -e[:, 0]])
        n /= np.hypot(n[:, 0], n[:, 1])[:, None]
        c = np.einsum("ij,ij->i", n, v)
        n.setflags(write=False)
        c.setflags(write=False)
        return n, c

    def contains(self, pts: np.ndarray) -> np.ndarray:
        n, c = self.halfplanes()
        return np.all(pts @ n.T <= c, axis=-1)

    @property
    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def _shoelace(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _perimeter(v: np.ndarray) -> float:
    e = np.roll(v, -1, axis=0) - v
    return float(np.hypot(e[:, 0], e[:, 1]).sum())


def _chebyshev_lp(n: np.ndarray, c: np.ndarray) -> float:
    a_ub = np.column_stack([n, np.ones(len(c))])
    res = linprog([0.0, 0.0, -1.0], A_ub=a_ub, b_ub=c, bounds=[(None, None)] * 3, method="highs")
    if not res.success:
        raise InvalidShapeError(f"inradius LP failed: {res.message}")
    return float(res.x[2])


def polygon_inradius(p: ConvexPolygon) -> float:
    """Chebyshev radius: max r with n_i.x + r <= c_i for all edges.

    The optimum of this 3-variable LP sits where three edge constraints are
    active, so small polygons enumerate edge triples exactly; large ones use
    an LP solver.
    """
    n, c = p.halfplanes()
    k = len(c)
    if k > 24:
        return _chebyshev_lp(n, c)
    idx = np.array([(i, j, l) for i in range(k) for j in range(i + 1, k) for l in range(j + 1, k)])
    A = np.concatenate([n[idx], np.ones(idx.shape + (1,))], axis=2)
    det = np.linalg.det(A)
    ok = np.abs(det) > 1e-12
    sol = np.linalg.solve(A[ok], c[idx[ok]][..., None])[..., 0]
    scale = max(1.0, float(np.abs(c).max()))
    feasible = np.all(sol[:, :2] @ n.T + sol[:, 2:3] <= c + 1e-10 * scale, axis=1)
    return float(sol[feasible, 2].max())


def polygon_measures(p: ConvexPolygon) -> tuple[float, float, float]:
    """Return ``(area, perimeter, inradius)``."""
    area = _shoelace(p.vertices)
    if area <= AREA_TOL:
        raise InvalidShapeError("degenerate polygon")
    return area, _perimeter(p.vertices), polygon_inradius(p)


def _clip(poly: np.ndarray, n: np.ndarray, c: float) -> np.ndarray:
    """Sutherland-Hodgman clip of a convex polygon against {x : n.x <= c}."""
    if len(poly) == 0:
        return poly
    d = (poly @ n - c).tolist()
    if max(d) <= 0:
        return poly
    out = []
    m = len(poly)
    for i in range(m):
        j = (i + 1) % m
        di, dj = d[i], d[j]
        if di <= 0:
            out.append(poly[i])
        if (di < 0 < dj) or (dj < 0 < di):
            s = di / (di - dj)
            out.append(poly[i] + s * (poly[j] - poly[i]))
    return np.array(out).reshape(-1, 2)


def inner_parallel_polygon(p: ConvexPolygon, r: float) -> np.ndarray:
    """Vertices of {x in p : dist(x, boundary) > r}; empty array when r >= inradius."""
    if r < 0:
        raise ValueError("offset must be nonnegative")
    n, c = p.halfplanes()
    poly = p.vertices.copy()
    for ni, ci in zip(n, c):
        poly = _clip(poly, ni, ci - r)
        if len(poly) < 3:
            return np.empty((0, 2))
    return poly


def inner_parallel_area(p: ConvexPolygon, r: float) -> float:
    poly = inner_parallel_polygon(p, r)
    if len(poly) < 3:
        return 0.0
    return max(_shoelace(poly), 0.0)


def inner_parallel_perimeter(p: ConvexPolygon, r: float) -> float:
    poly = inner_parallel_polygon(p, r)
    if len(poly) < 3:
        return 0.0
    return _perimeter(poly)


# ------------------------------------------------------------------- grids


@dataclass(frozen=True, eq=False)
class GridMask:
    """Binary voxel indicator with uniform spacing.

    ``origin`` is the lower corner of cell ``(0, ..., 0)``; the centre of cell
    ``i`` sits at ``origin + (i + 0.5) * spacing``. A one-cell empty margin is
    added on construction if the occupied cells touch the array border.
    """

    cells: np.ndarray
    spacing: float
    origin: tuple = field(default=None)

    def __post_init__(self) -> None:
        if not self.spacing > 0:
            raise InvalidShapeError("spacing must be positive")
        cells = np.asarray(self.cells, dtype=bool)
        if cells.ndim < 1:
            raise InvalidShapeError("mask needs at least one axis")
        origin = self.origin
        if origin is None:
            origin = (0.0,) * cells.ndim
        origin = tuple(float(o) for o in origin)
        if len(origin) != cells.ndim:
            raise InvalidShapeError("origin dimension mismatch")
        if _touches_border(cells):
            cells = np.pad(cells, 1)
            origin = tuple(o - self.spacing for o in origin)
        cells = np.ascontiguousarray(cells)
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "spacing", float(self.spacing))

    @property
    def dims(self) -> tuple[int, ...]:
        return self.cells.shape

    @property
    def ndim(self) -> int:
        return self.cells.ndim

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.ndim

    @property
    def count(self) -> int:
        return int(self.cells.sum())

    @property
    def volume(self) -> float:
        return self.count * self.cell_volume

    def with_cells(self, cells: np.ndarray) -> GridMask:
        if cells.shape != self.cells.shape:
            raise InvalidShapeError("shape mismatch")
        return GridMask(cells, self.spacing, self.origin)

    def rescaled(self, t: float) -> GridMask:
        return GridMask(self.cells, self.spacing * t, tuple(o * t for o in self.origin))

    def centers(self, axis: int) -> np.ndarray:
        return self.origin[axis] + (np.arange(self.dims[axis]) + 0.5) * self.spacing


def _touches_border(cells: np.ndarray) -> bool:
    for ax in range(cells.ndim):
        if cells.take(0, axis=ax).any() or cells.take(-1, axis=ax).any():
            return True
    return False


# ------------------------------------------------------------------ shapes


@dataclass(frozen=True)
class Interval:
    length: float

    def __post_init__(self) -> None:
        if not self.length > 0:
            raise InvalidShapeError("interval length must be positive")


@dataclass(frozen=True)
class Box:
    edges: tuple

    def __post_init__(self) -> None:
        edges = tuple(float(e) for e in self.edges)
        if not edges:
            raise InvalidShapeError("box needs at least one edge")
        if any(not e > 0 for e in edges):
            raise InvalidShapeError("box edges must be positive")
        object.__setattr__(self, "edges", edges)


@dataclass(frozen=True)
class Ball:
    dim: int
    radius: float = 1.0

    def __post_init__(self) -> None:
        if int(self.dim) < 1:
            raise InvalidShapeError("ball dimension must be >= 1")
        if not self.radius > 0:
            raise InvalidShapeError("ball radius must be positive")


@dataclass(frozen=True, eq=False)
class Polygon:
    polygon: ConvexPolygon


@dataclass(frozen=True, eq=False)
class Grid:
    mask: GridMask


@dataclass(frozen=True, eq=False)
class Product:
    """Cylinder ``cross x (0, height)``."""

    cross: ShapeSpec
    height: float

    def __post_init__(self) -> None:
        if not self.height > 0:
            raise InvalidShapeError("cylinder height must be positive")


ShapeSpec = Union[Interval, Box, Ball, Polygon, Grid, Product]


def dimension(s: ShapeSpec) -> int:
    if isinstance(s, Interval):
        return 1
    if isinstance(s, Box):
        return len(s.edges)
    if isinstance(s, Ball):
        return int(s.dim)
    if isinstance(s, Polygon):
        return 2
    if isinstance(s, Grid):
        return s.mask.ndim
    if isinstance(s, Product):
        return dimension(s.cross) + 1
    raise TypeError(f"not a shape: {s!r}")


def is_convex(s: ShapeSpec) -> bool:
    if isinstance(s, Grid):
        return False
    if isinstance(s, Product):
        return is_convex(s.cross)
    return True


def scale_shape(s: ShapeSpec, t: float) -> ShapeSpec:
    if isinstance(s, Interval):
        return Interval(s.length * t)
    if isinstance(s, Box):
        return Box(tuple(e * t for e in s.edges))
    if isinstance(s, Ball):
        return Ball(s.dim, s.radius * t)
    if isinstance(s, Polygon):
        return Polygon(s.polygon.scaled(t))
    if isinstance(s, Grid):
        return Grid(s.mask.rescaled(t))
    if isinstance(s, Product):
        return Product(scale_shape(s.cross, t), s.height * t)
    raise TypeError(f"not a shape: {s!r}")


def exact_volume(s: ShapeSpec) -> float:
    if isinstance(s, Interval):
        return s.length
    if isinstance(s, Box):
        return float(np.prod(s.edges))
    if isinstance(s, Ball):
        return unit_ball_volume(s.dim) * s.radius**s.dim
    if isinstance(s, Polygon):
        return _shoelace(s.polygon.vertices)
    if isinstance(s, Grid):
        return s.mask.volume
    if isinstance(s, Product):
        return exact_volume(s.cross) * s.height
    raise TypeError(f"not a shape: {s!r}")


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def _bounds(s: ShapeSpec) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(s, Interval):
        return np.zeros(1), np.array([s.length])
    if isinstance(s, Box):
        return np.zeros(len(s.edges)), np.array(s.edges)
    if isinstance(s, Ball):
        return -s.radius * np.ones(s.dim), s.radius * np.ones(s.dim)
    if isinstance(s, Polygon):
        return s.polygon.bounds
    raise TypeError(f"no analytic bounds for {type(s).__name__}")


def bounding_box(s: ShapeSpec) -> tuple[np.ndarray, np.ndarray]:
    """Axis-aligned bounds of an analytic shape (products stack the height last)."""
    if isinstance(s, Product):
        lo, hi = _bounds(s.cross)
        return np.append(lo, 0.0), np.append(hi, s.height)
    return _bounds(s)


def _inside(s: ShapeSpec, pts: np.ndarray) -> np.ndarray:
    if isinstance(s, (Interval, Box)):
        hi = np.array([s.length]) if isinstance(s, Interval) else np.array(s.edges)
        return np.all((pts > 0) & (pts < hi), axis=-1)
    if isinstance(s, Ball):
        return np.einsum("...i,...i->...", pts, pts) < s.radius**2
    if isinstance(s, Polygon):
        return s.polygon.contains(pts)
    raise TypeError(f"no inside test for {type(s).__name__}")


def voxelize(s: ShapeSpec, resolution: float, memory_budget: int = DEFAULT_MEMORY_BUDGET) -> GridMask:
    """Occupancy by cell-centre inside test, with the grid centred on the bounding box."""
    if resolution < 8:
        raise InvalidResolutionError("resolution must be >= 8 cells per unit")
    if isinstance(s, Grid):
        return s.mask
    if isinstance(s, Product):
        return extrude(voxelize(s.cross, resolution, memory_budget), s.height, resolution, memory_budget)
    h = 1.0 / resolution
    lo, hi = _bounds(s)
    ext = hi - lo
    n = np.maximum(np.ceil(ext * resolution - 1e-9).astype(int), 1)
    total = int(np.prod(n + 2))
    if total > memory_budget:
        raise ResourceError(f"grid of {total} cells exceeds budget {memory_budget}")
    # centre the cells on the box so symmetric shapes give symmetric masks
    origin = lo - 0.5 * (n * h - ext) - h
    axes = [origin[i] + (np.arange(n[i] + 2) + 0.5) * h for i in range(len(n))]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    cells = _inside(s, pts)
    for ax in range(cells.ndim):
        idx = [slice(None)] * cells.ndim
        idx[ax] = [0, -1]
        cells[tuple(idx)] = False
    if not cells.any():
        raise InvalidResolutionError("resolution too low: no cell centre inside the shape")
    return GridMask(cells, h, tuple(origin))


def extrude(cross: GridMask, L: float, resolution: float, memory_budget: int = DEFAULT_MEMORY_BUDGET) -> GridMask:
    """Replicate ``cross`` over ceil(L * resolution) layers along a new last axis."""
    if not L > 0:
        raise InvalidShapeError("height must be positive")
    if abs(cross.spacing * resolution - 1.0) > 1e-9:
        raise InvalidResolutionError("extrusion resolution must match the cross-section spacing")
    layers = math.ceil(L * resolution - 1e-9)
    total = int(np.prod(cross.dims)) * (layers + 2)
    if total > memory_budget:
        raise ResourceError(f"extruded grid of {total} cells exceeds budget {memory_budget}")
    cells = np.zeros(cross.dims + (layers + 2,), dtype=bool)
    cells[..., 1:-1] = cross.cells[..., None]
    h = cross.spacing
    z0 = 0.5 * L - 0.5 * layers * h - h
    return GridMask(cells, h, tuple(cross.origin) + (z0,))


def extruded_height(L: float, resolution: float) -> float:
    """Height actually represented by ``extrude`` (whole layers)."""
    return math.ceil(L * resolution - 1e-9) / resolution


# ------------------------------------------------------- run-length coding


def rle_encode(cells: np.ndarray) -> list[int]:
    """Run lengths of the C-order flattened bits, starting with a run of zeros."""
    flat = np.asarray(cells, dtype=bool).ravel()
    if flat.size == 0:
        return []
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs = [0] + runs
    return [int(r) for r in runs]


def rle_decode(runs: Sequence[int], dims: Sequence[int]) -> np.ndarray:
    total = int(np.prod(dims))
    if sum(runs) != total:
        raise InvalidShapeError(f"run lengths sum to {sum(runs)}, expected {total}")
    vals = np.arange(len(runs)) % 2 == 1
    return np.repeat(vals, runs).reshape(tuple(dims))


# ------------------------------------------------------------ shape files


def shape_to_dict(s: ShapeSpec) -> dict:
    if isinstance(s, Interval):
        return {"shape": "interval", "length": s.length}
    if isinstance(s, Box):
        return {"shape": "box", "edges": list(s.edges)}
    if isinstance(s, Ball):
        return {"shape": "ball", "dim": int(s.dim), "radius": s.radius}
    if isinstance(s, Polygon):
        return {"shape": "polygon", "vertices": s.polygon.vertices.tolist()}
    if isinstance(s, Product):
        return {"shape": "product", "cross": shape_to_dict(s.cross), "height": s.height}
    if isinstance(s, Grid):
        m = s.mask
        out = {"shape": "grid", "dims": list(m.dims), "spacing": m.spacing, "cells": rle_encode(m.cells)}
        if any(o != 0 for o in m.origin):
            out["origin"] = list(m.origin)
        return out
    raise TypeError(f"cannot serialise {type(s).__name__}")


def _num(d: dict, key: str) -> float:
    if key not in d:
        raise InvalidShapeError(f"missing field {key!r}")
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise InvalidShapeError(f"field {key!r} must be a number")
    return float(v)


def shape_from_dict(d: dict) -> ShapeSpec:
    """Inverse of :func:`shape_to_dict`; raises InvalidShapeError on malformed input."""
    if not isinstance(d, dict) or "shape" not in d:
        raise InvalidShapeError("shape record needs a 'shape' field")
    kind = d["shape"]
    try:
        if kind == "interval":
            return Interval(_num(d, "length"))
        if kind == "box":
            return Box(tuple(d["edges"]))
        if kind == "ball":
            dim = d["dim"]
            if isinstance(dim, bool) or not isinstance(dim, int):
                raise InvalidShapeError("ball dim must be an integer")
            return Ball(dim, _num(d, "radius") if "radius" in d else 1.0)
        if kind == "polygon":
            return Polygon(ConvexPolygon(np.asarray(d["vertices"], dtype=float)))
        if kind == "product":
            return Product(shape_from_dict(d["cross"]), _num(d, "height"))
        if kind == "grid":
            dims = [int(x) for x in d["dims"]]
            cells = rle_decode([int(r) for r in d["cells"]], dims)
            return Grid(GridMask(cells, _num(d, "spacing"), d.get("origin")))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, InvalidShapeError):
            raise
        raise InvalidShapeError(f"malformed {kind} record: {exc}") from exc
    raise InvalidShapeError(f"unknown shape kind {kind!r}")


def load_shape(path) -> ShapeSpec:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidShapeError(f"not valid JSON: {exc}") from exc
    return shape_from_dict(d)


def dump_shape(s: ShapeSpec, path) -> None:
    with open(path, "w") as fh:
        json.dump(shape_to_dict(s), fh, indent=1)
        fh.write("\n")

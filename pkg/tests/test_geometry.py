from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cheeger_lab.geometry import (
    Ball,
    Box,
    ConvexPolygon,
    Grid,
    GridMask,
    Interval,
    InvalidResolutionError,
    InvalidShapeError,
    Polygon,
    Product,
    ResourceError,
    bounding_box,
    dump_shape,
    exact_volume,
    extrude,
    extruded_height,
    inner_parallel_area,
    load_shape,
    polygon_measures,
    rle_decode,
    rle_encode,
    shape_from_dict,
    shape_to_dict,
    voxelize,
)

SQ = ConvexPolygon.rectangle(1, 1)


def test_polygon_measures_square_and_rectangle():
    assert polygon_measures(SQ) == pytest.approx((1, 4, 0.5), abs=1e-12)
    assert polygon_measures(ConvexPolygon.rectangle(1, 2)) == pytest.approx((2, 6, 0.5), abs=1e-12)


def test_polygon_measures_hexagon():
    a, p, r = polygon_measures(ConvexPolygon.regular(6, 1.0))
    assert a == pytest.approx(3 * math.sqrt(3) / 2, abs=1e-12)
    assert p == pytest.approx(6, abs=1e-12)
    assert r == pytest.approx(math.sqrt(3) / 2, abs=1e-9)


def test_polygon_rejects_bad_input():
    with pytest.raises(InvalidShapeError):
        ConvexPolygon(np.array([[0, 0], [1, 0]]))
    with pytest.raises(InvalidShapeError):
        ConvexPolygon(np.array([[0, 0], [1, 0], [1, 0], [0, 1]]))
    with pytest.raises(InvalidShapeError):  # reflex vertex
        ConvexPolygon(np.array([[0, 0], [2, 0], [1, 0.2], [1, 2]]))
    with pytest.raises(InvalidShapeError):  # collinear
        ConvexPolygon(np.array([[0, 0], [1, 0], [2, 0]]))


def test_clockwise_input_is_reoriented():
    p = ConvexPolygon(np.array([[0, 0], [0, 1], [1, 1], [1, 0]]))
    assert polygon_measures(p)[0] == pytest.approx(1)


@pytest.mark.parametrize("r,area", [(0.0, 1.0), (0.25, 0.25), (0.5, 0.0), (0.7, 0.0)])
def test_inner_parallel_area_square(r, area):
    assert inner_parallel_area(SQ, r) == pytest.approx(area, abs=1e-12)


@given(st.integers(3, 12), st.floats(0.0, 1.0))
def test_inner_parallel_area_regular_polygon(k, frac):
    # for a regular polygon the inner parallel set is a scaled copy
    p = ConvexPolygon.regular(k, 1.0)
    a, _, rho = polygon_measures(p)
    r = frac * rho
    assert inner_parallel_area(p, r) == pytest.approx(a * (1 - r / rho) ** 2, abs=1e-10)


def test_inner_parallel_area_monotone():
    p = ConvexPolygon.regular(5, 1.0)
    rho = polygon_measures(p)[2]
    vals = [inner_parallel_area(p, r) for r in np.linspace(0, rho, 50)]
    assert all(b < a for a, b in zip(vals[:-1], vals[1:-1]))
    assert vals[-1] == pytest.approx(0, abs=1e-12)


def test_voxelize_unit_square_exact():
    m = voxelize(Polygon(SQ), 64)
    assert m.count == 64 * 64
    assert m.spacing == pytest.approx(1 / 64)
    assert not m.cells[0].any() and not m.cells[-1].any()


def test_voxelize_disk_and_ball_volume():
    assert voxelize(Ball(2, 1.0), 128).volume == pytest.approx(math.pi, rel=0.01)
    assert voxelize(Ball(3, 1.0), 64).volume == pytest.approx(4 * math.pi / 3, rel=0.02)


def test_voxelize_rejects_low_resolution():
    with pytest.raises(InvalidResolutionError):
        voxelize(Polygon(SQ), 4)


def test_voxelize_memory_budget():
    with pytest.raises(ResourceError):
        voxelize(Box((1.0, 1.0, 1.0)), 64, memory_budget=1000)


@pytest.mark.parametrize("L,res,vol", [(4.0, 32, 4.0), (1.0, 32, 1.0)])
def test_extrude_square(L, res, vol):
    m = extrude(voxelize(Polygon(SQ), res), L, res)
    assert m.ndim == 3
    assert abs(m.volume - vol) <= 1 / res


def test_extrude_disk_volume():
    m = extrude(voxelize(Ball(2, 1.0), 64), 2.0, 64)
    assert m.volume == pytest.approx(2 * math.pi, rel=0.02)


def test_extrude_checks():
    c = voxelize(Polygon(SQ), 16)
    with pytest.raises(InvalidResolutionError):
        extrude(c, 1.0, 32)
    with pytest.raises(InvalidShapeError):
        extrude(c, 0.0, 16)
    with pytest.raises(ResourceError):
        extrude(c, 100.0, 16, memory_budget=10_000)
    assert extruded_height(0.1, 16) == pytest.approx(2 / 16)


def test_gridmask_margin_enforced():
    m = GridMask(np.ones((3, 3), dtype=bool), 0.5)
    assert m.dims == (5, 5)
    assert m.count == 9
    assert m.origin == (-0.5, -0.5)


def test_exact_volume_and_bounds():
    assert exact_volume(Ball(3, 2.0)) == pytest.approx(4 * math.pi / 3 * 8)
    assert exact_volume(Product(Box((1.0, 2.0)), 3.0)) == pytest.approx(6.0)
    lo, hi = bounding_box(Product(Ball(2, 1.0), 2.0))
    assert list(lo) == [-1, -1, 0] and list(hi) == [1, 1, 2]


@given(st.lists(st.booleans(), min_size=1, max_size=300))
def test_rle_roundtrip(bits):
    a = np.array(bits)
    assert np.array_equal(rle_decode(rle_encode(a), a.shape), a)


def test_rle_rejects_wrong_length():
    with pytest.raises(InvalidShapeError):
        rle_decode([2, 3], (4,))


@pytest.mark.parametrize(
    "shape",
    [
        Interval(2.0),
        Box((1.0, 1.0, 4.0)),
        Ball(3, 0.5),
        Polygon(ConvexPolygon.regular(6, 1.0)),
        Product(Box((1.0, 1.0)), 4.0),
        Grid(voxelize(Ball(2, 1.0), 8)),
    ],
)
def test_shape_json_roundtrip(shape, tmp_path):
    path = tmp_path / "s.json"
    dump_shape(shape, path)
    back = load_shape(path)
    assert shape_to_dict(back) == shape_to_dict(shape)
    json.loads(path.read_text())


@pytest.mark.parametrize(
    "rec",
    [
        {},
        {"shape": "torus"},
        {"shape": "ball", "dim": 2.5},
        {"shape": "box", "edges": [1, -1]},
        {"shape": "polygon", "vertices": [[0, 0], [1, 1]]},
        {"shape": "product", "cross": {"shape": "box", "edges": [1, 1]}},
        {"shape": "grid", "dims": [3, 3], "spacing": 1.0, "cells": [1, 2]},
    ],
)
def test_shape_from_dict_rejects(rec):
    with pytest.raises(InvalidShapeError):
        shape_from_dict(rec)

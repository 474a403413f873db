"""Hypothesis properties; the "repo" profile fixes 100 derandomised cases."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cheeger_lab.bounds import evaluate_bound
from cheeger_lab.cheeger import grid_cheeger, klr_cheeger
from cheeger_lab.cuts import set_perimeter
from cheeger_lab.geometry import (
    ConvexPolygon,
    GridMask,
    Polygon,
    inner_parallel_area,
    polygon_measures,
    voxelize,
)
from cheeger_lab.spectral import dirichlet_laplacian, grid_lambda_2, grid_lambda_p

masks2d = arrays(bool, st.tuples(st.integers(3, 9), st.integers(3, 9)), elements=st.booleans()).filter(lambda a: a.any())
masks3d = arrays(bool, st.tuples(st.integers(2, 5), st.integers(2, 5), st.integers(2, 5)), elements=st.booleans())
spacings = st.floats(0.05, 4.0)


@st.composite
def convex_polygons(draw):
    k = draw(st.integers(3, 9))
    angles = np.sort(np.array(draw(st.lists(st.floats(0, 2 * math.pi, exclude_max=True), min_size=k, max_size=k, unique=True))))
    gaps = np.diff(np.append(angles, angles[0] + 2 * math.pi))
    if gaps.max() >= math.pi - 0.2 or gaps.min() < 0.05:
        # fall back to a regular polygon, which is always well formed
        return ConvexPolygon.regular(k, draw(st.floats(0.3, 3.0)))
    r = draw(st.floats(0.3, 3.0))
    return ConvexPolygon(np.c_[r * np.cos(angles), r * np.sin(angles)])


@given(masks2d, spacings, st.floats(0.25, 4.0))
def test_grid_h_scales_inversely(cells, s, t):
    a = grid_cheeger(GridMask(cells, s), reduce=False).h
    b = grid_cheeger(GridMask(cells, s * t), reduce=False).h
    assert b == pytest.approx(a / t, rel=1e-9)


@given(masks2d, masks2d)
def test_grid_h_inclusion_monotone(a, b):
    shape = tuple(max(x, y) for x, y in zip(a.shape, b.shape))
    outer = np.zeros(shape, bool)
    outer[: a.shape[0], : a.shape[1]] |= a
    outer[: b.shape[0], : b.shape[1]] |= b
    inner = np.zeros(shape, bool)
    inner[: a.shape[0], : a.shape[1]] = a
    h_in = grid_cheeger(GridMask(inner, 0.5), reduce=False).h
    h_out = grid_cheeger(GridMask(outer, 0.5), reduce=False).h
    assert evaluate_bound("inclusion_mono", {"h_inner": h_in, "h_outer": h_out}, rel_tol=1e-9).satisfied


@given(masks2d, masks2d)
def test_lambda_2_inclusion_monotone(a, b):
    shape = tuple(max(x, y) for x, y in zip(a.shape, b.shape))
    outer = np.zeros(shape, bool)
    outer[: a.shape[0], : a.shape[1]] |= a
    outer[: b.shape[0], : b.shape[1]] |= b
    inner = np.zeros(shape, bool)
    inner[: a.shape[0], : a.shape[1]] = a
    li = np.linalg.eigvalsh(dirichlet_laplacian(GridMask(inner, 1.0)).toarray())[0]
    lo = np.linalg.eigvalsh(dirichlet_laplacian(GridMask(outer, 1.0)).toarray())[0]
    assert li >= lo * (1 - 1e-10)


@given(masks3d, spacings)
def test_coarea_exact_in_faces_mode(cells, s):
    r = evaluate_bound("coarea_proj", {"cells": cells, "spacing": s, "mode": "faces"}, rel_tol=0.0)
    assert r.satisfied and r.margin >= 0


@given(masks2d, st.sampled_from(["faces", "crofton"]))
def test_dinkelbach_trace_and_certificate(cells, mode):
    m = GridMask(cells, 1.0)
    r = grid_cheeger(m, perimeter=mode, reduce=False)
    assert all(b <= a for a, b in zip(r.ratio_trace, r.ratio_trace[1:]))
    e = r.optimal_set.cells
    assert e.any() and np.all(e <= m.cells)
    assert set_perimeter(e, 1.0, mode) / e.sum() == pytest.approx(r.h, rel=1e-12)


@given(masks2d)
def test_lambda_2_residual(cells):
    r = grid_lambda_2(GridMask(cells, 0.25))
    assert r.residual <= 1e-7
    exact = np.linalg.eigvalsh(dirichlet_laplacian(GridMask(cells, 0.25)).toarray())[0]
    assert r.lambda_p == pytest.approx(exact, rel=1e-7)


@given(convex_polygons(), st.floats(0.25, 4.0))
def test_klr_scaling_and_volume_bound(poly, t):
    a = klr_cheeger(poly)
    b = klr_cheeger(poly.scaled(t))
    assert b.h == pytest.approx(a.h / t, rel=1e-9)
    # Cheeger sets are not too small, and h exceeds the disk of equal area
    area, per, rho = polygon_measures(poly)
    assert a.set_volume >= math.pi * (2 / a.h) ** 2 * (1 - 1e-9)
    assert a.h >= 2 * math.sqrt(math.pi / area) * (1 - 1e-12)
    assert a.h <= per / area + 1e-12
    assert 1 / rho <= a.h <= 2 / rho + 1e-12


@given(convex_polygons(), st.floats(0, 1))
def test_inner_parallel_monotone(poly, u):
    _, _, rho = polygon_measures(poly)
    r1, r2 = sorted([u * rho, min(rho, u * rho + 0.1 * rho)])
    assert inner_parallel_area(poly, r2) <= inner_parallel_area(poly, r1) + 1e-12


@given(convex_polygons())
def test_cheeger_inequality_on_masks(poly):
    m = voxelize(Polygon(poly), max(8.0, 16 / max(np.ptp(poly.vertices, axis=0))))
    h = grid_cheeger(m).h
    lam = grid_lambda_2(m).lambda_p
    assert evaluate_bound("cheeger_ineq", {"h": h, "lambda_p": lam, "p": 2}, rel_tol=0.02).satisfied
    lp = grid_lambda_p(m, 3.0).lambda_p
    assert evaluate_bound("cheeger_ineq", {"h": h, "lambda_p": lp, "p": 3}, rel_tol=0.02).satisfied


@given(st.integers(8, 16), st.floats(0.3, 3.0), st.sampled_from([1.5, 3.0]))
def test_lambda_p_scaling(n, t, p):
    cells = np.ones((n, n // 2 + 2), bool)
    a = grid_lambda_p(GridMask(cells, 1.0), p).lambda_p
    b = grid_lambda_p(GridMask(cells, t), p).lambda_p
    assert b == pytest.approx(a / t**p, rel=1e-6)


@given(masks2d, st.floats(0.25, 4.0), st.sampled_from([2.0, 3.0]))
def test_F_p_scale_invariant(cells, t, p):
    def F(s):
        m = GridMask(cells, s)
        lam = grid_lambda_2(m).lambda_p if p == 2 else grid_lambda_p(m, p).lambda_p
        return lam ** (1 / p) / grid_cheeger(m, reduce=False).h

    assert F(t) == pytest.approx(F(1.0), rel=1e-6)


@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(0, 1))
def test_report_sign_convention(lhs, rhs, tol):
    r = evaluate_bound("inclusion_mono", {"h_inner": lhs, "h_outer": rhs}, rel_tol=tol)
    assert r.margin == lhs - rhs
    assert r.satisfied == (r.margin >= -r.tolerance_applied)

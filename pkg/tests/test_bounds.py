from __future__ import annotations

import csv
import io
import math

import numpy as np
import pytest
from scipy import special

from cheeger_lab.bounds import (
    ANCHORS,
    CHECK_IDS,
    CSV_COLUMNS,
    MissingInputError,
    SandwichConstants,
    SandwichPoint,
    SuiteConfig,
    UnknownCheckError,
    bbp_rhs,
    check_sandwich,
    cylinder_resolution,
    default_corpus,
    evaluate_bound,
    height_resolution,
    reports_to_csv,
    run_suite,
    violations,
)
from cheeger_lab.geometry import Ball, Box, ConvexPolygon, Interval, Polygon

H_SQ = 2 + math.sqrt(math.pi)
LAM_SQ = 2 * math.pi**2
J01 = special.jn_zeros(0, 1)[0]


def test_cheeger_ineq_square():
    r = evaluate_bound("cheeger_ineq", {"h": H_SQ, "lambda_p": LAM_SQ, "p": 2})
    assert r.satisfied
    assert r.rhs == pytest.approx(3.5578, abs=1e-4)
    assert r.margin == pytest.approx(16.18, abs=0.01)
    assert r.margin == r.lhs - r.rhs


def test_parini_disk():
    r = evaluate_bound("parini", {"F": J01 / 2, "p": 2, "N": 2, "convex": True})
    assert r.satisfied
    assert r.lhs == pytest.approx(1.2024128, abs=1e-7)
    assert r.rhs == pytest.approx(math.pi / 4, abs=1e-12)


def test_ftouhi_square():
    r = evaluate_bound("ftouhi_bessel", {"lambda_p": LAM_SQ, "h": H_SQ, "p": 2, "N": 2, "convex": True})
    assert r.satisfied
    assert r.lhs == pytest.approx(math.pi * math.sqrt(2) / H_SQ, abs=1e-12)
    assert r.rhs == pytest.approx(math.pi * J01 / (2 * J01 + math.pi), abs=1e-10)


def test_reverse_cheeger_square():
    r = evaluate_bound("reverse_cheeger", {"lambda_p": LAM_SQ, "h": H_SQ, "p": 2, "N": 2, "convex": True})
    assert r.satisfied
    assert r.rhs == pytest.approx(1.3870, abs=1e-4)
    assert r.lhs == pytest.approx(math.pi**2 / 4)


def test_bbp_rhs():
    assert bbp_rhs(1, 2) == pytest.approx(math.pi / 2)
    assert bbp_rhs(10, 2) == 0.5
    r = evaluate_bound("bbp_general", {"F": math.pi / 2, "p": 2, "N": 1, "convex": True})
    assert r.satisfied and abs(r.margin) < 1e-15


@pytest.mark.parametrize(
    "cid,inputs,reason",
    [
        ("reverse_cheeger", {"lambda_p": 1, "h": 1, "p": 2, "N": 2, "convex": False}, "convex"),
        ("reverse_cheeger", {"lambda_p": 1, "h": 1, "p": 3, "N": 2, "convex": True}, "p = 2"),
        ("ftouhi_bessel", {"F": 1, "p": 2, "N": 3, "convex": True}, "planar"),
        ("parini", {"F": 1, "p": 3, "N": 2, "convex": True}, "p = 2"),
        ("cheeger_ineq", {"h": 1, "p": math.inf}, "inf"),
        ("fp_lower", {"F": 2.0, "p": math.inf}, "inf"),
        ("bbp_general", {"F": 1, "p": 2, "N": 2, "convex": False}, "non-convex"),
    ],
)
def test_not_applicable_reports(cid, inputs, reason):
    r = evaluate_bound(cid, inputs)
    assert r.satisfied is None and not r.applicable and not r.violated
    assert reason in r.note


def test_errors():
    with pytest.raises(UnknownCheckError):
        evaluate_bound("nope", {})
    with pytest.raises(MissingInputError, match="lambda_p"):
        evaluate_bound("cheeger_ineq", {"h": 1.0, "p": 2})
    with pytest.raises(MissingInputError, match="set_volume"):
        evaluate_bound("volume_lb", {"h": 1.0, "N": 2})
    with pytest.raises(UnknownCheckError):
        evaluate_bound("sandwich", {"side": "sideways", "h_cross": 1, "h_cyl": 1, "L": 1})


def test_violation_and_tolerance():
    r = evaluate_bound("fp_lower", {"F": 0.49, "p": 2}, rel_tol=0.0)
    assert r.violated
    r = evaluate_bound("fp_lower", {"F": 0.495, "p": 2}, rel_tol=0.02)
    assert r.satisfied and r.margin < 0
    assert r.satisfied == (r.margin >= -r.tolerance_applied)


def test_volume_lb_and_inclusion_and_section():
    r = evaluate_bound("volume_lb", {"set_volume": math.pi, "h": 2.0, "N": 2})
    assert r.satisfied and r.margin == pytest.approx(0, abs=1e-12)
    assert evaluate_bound("inclusion_mono", {"h_inner": 3.0, "h_outer": 2.0}).satisfied
    assert evaluate_bound("inclusion_mono", {"h_inner": 1.0, "h_outer": 2.0}).violated
    r = evaluate_bound("section_eig", {"p": 2, "edges": (1.0, 2.0, 3.0)})
    assert r.satisfied and r.rhs == pytest.approx(math.pi**2 * (1 / 4 + 1 / 9))
    assert evaluate_bound("section_eig", {"p": 3, "edges": (1.0, 2.0)}).satisfied is None
    assert evaluate_bound("section_eig", {"p": 3, "lambda_box": 5.0, "lambda_sections": [4.0, 6.0]}).satisfied


def test_coarea_exact_in_faces_mode():
    rng = np.random.default_rng(3)
    cells = rng.random((9, 8, 7)) < 0.5
    r = evaluate_bound("coarea_proj", {"cells": cells, "spacing": 0.25, "mode": "faces"}, rel_tol=0.0)
    assert r.satisfied and r.margin >= 0


def test_sandwich_sides():
    base = {"h_cross": H_SQ, "L": 4.0, "c": 0.0156, "p": None, "convex": True}
    up = evaluate_bound("sandwich", {**base, "h_cyl": 4.1, "side": "upper"})
    assert up.check_id == "sandwich.upper" and up.lhs == pytest.approx(4.2724539, abs=1e-7) and up.satisfied
    assert evaluate_bound("sandwich", {**base, "h_cyl": H_SQ, "side": "above"}).violated
    lo = evaluate_bound("sandwich", {**base, "h_cyl": 4.1, "side": "lower"})
    assert lo.rhs == pytest.approx(3.7763539, abs=1e-7) and lo.satisfied
    assert evaluate_bound("sandwich", {**base, "L": 0.5, "h_cyl": 5, "side": "lower"}).satisfied is None
    sm = evaluate_bound("sandwich", {**base, "L": 0.1, "h_cyl": 23.0, "side": "small_L"})
    assert sm.rhs == pytest.approx(0.15, abs=1e-12) and not sm.satisfied


def test_sandwich_with_supplied_points():
    k = SandwichConstants(H_SQ, 0.94, 0.5, False, 0.0155)
    pts = [SandwichPoint(L, L, 64, H_SQ + 1.3 / L, 1.3, 3) for L in (1.0, 4.0)]
    reps = check_sandwich(Polygon(ConvexPolygon.rectangle(1, 1)), [1, 4], constants=k, points=pts)
    ids = [r.check_id for r in reps]
    assert ids.count("sandwich.upper") == 2 and ids[-1] == "sandwich.gap"
    assert not violations(reps)
    gap = reps[-1]
    assert gap.lhs == pytest.approx(1.3) and gap.tolerance_applied == pytest.approx(0.05 * 0.0155)


def test_sandwich_small_grid_run():
    out = []
    reps = check_sandwich(
        Box((1.0, 1.0)), [2.0], resolution=16, profile_resolution=32, config=SuiteConfig(resolution_2d=32), points_out=out
    )
    assert len(out) == 1 and out[0].L_eff == 2.0
    assert not violations(reps)


def test_height_and_cylinder_resolution():
    assert height_resolution(4, 64) == 64
    assert height_resolution(0.1, 80) == 160
    assert height_resolution(0.1, 64) * 0.1 == pytest.approx(16)
    assert cylinder_resolution(Box((1.0, 1.0)), 16, 64) == 64
    r = cylinder_resolution(Box((1.0, 1.0)), 64, 64)
    assert r < 64 and r**3 * 64 / 8 <= 96**3


def test_run_suite_example_corpus():
    corpus = [
        ("square", Polygon(ConvexPolygon.rectangle(1, 1))),
        ("disk", Ball(2, 1.0)),
        ("rect1x2", Polygon(ConvexPolygon.rectangle(1, 2))),
        ("hexagon", Polygon(ConvexPolygon.regular(6))),
    ]
    reps = run_suite(corpus, [2])
    per_shape = {}
    for r in reps:
        per_shape.setdefault(r.shape_id, set()).add(r.check_id)
    expect = {"cheeger_ineq", "fp_lower", "parini", "ftouhi_bessel", "bbp_general", "reverse_cheeger", "volume_lb"}
    assert all(v == expect for v in per_shape.values())
    assert all(r.satisfied for r in reps)
    keys = [(r.shape_id, r.check_id, r.p) for r in reps]
    assert keys == sorted(keys)


def test_run_suite_interval_saturates():
    reps = run_suite([("interval", Interval(1.0))], [2])
    bbp = next(r for r in reps if r.check_id == "bbp_general")
    assert bbp.satisfied and abs(bbp.margin) < 1e-12


def test_run_suite_empty_and_errors():
    assert run_suite([Interval(1.0)], []) == []
    with pytest.raises(ValueError):
        run_suite([], [2])
    with pytest.raises(ValueError, match=r"\[shape0\]"):
        run_suite([Interval(1.0)], [0.5])


def test_run_suite_p_inf():
    reps = run_suite([("disk", Ball(2, 1.0))], [math.inf])
    fp = next(r for r in reps if r.check_id == "fp_lower")
    assert fp.satisfied is None and fp.lhs == pytest.approx(0.5)


def test_default_corpus_ids_unique():
    ids = [i for i, _ in default_corpus()]
    assert len(ids) == len(set(ids))


def test_csv_export(tmp_path):
    reps = [
        evaluate_bound("fp_lower", {"F": 0.7, "p": 2}),
        evaluate_bound("fp_lower", {"F": 0.7, "p": math.inf}),
    ]
    text = reports_to_csv(reps, tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_bytes().decode() == text
    rows = list(csv.reader(io.StringIO(text)))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert rows[1][6] == "true" and rows[2][6] == "n/a"
    assert float(rows[1][5]) == reps[0].margin


def test_anchor_registry_covers_checks():
    for cid in CHECK_IDS:
        assert cid in ANCHORS or any(k.startswith(cid + ".") for k in ANCHORS)


def test_reports_are_pure():
    inputs = {"h": 3.1, "lambda_p": 12.0, "p": 2.5}
    assert evaluate_bound("cheeger_ineq", dict(inputs)) == evaluate_bound("cheeger_ineq", dict(inputs))

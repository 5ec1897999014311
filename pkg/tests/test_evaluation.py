import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import cross_scene
from crosswalk.errors import RoadMismatch
from crosswalk.evaluation import (
    REPORT_COLUMNS,
    TABLE2_CORRUPTION,
    TAUS,
    AblationSpec,
    aggregate,
    calibrate_lambda,
    collect_hypotheses,
    count_matches,
    crosswalk_distance,
    evaluate,
    format_report,
    inject,
    precision_recall,
    run_ablation,
    scene_corruption,
    scene_iou,
    score_scene,
    table2_suite,
)
from crosswalk.featuremaps import CorruptionConfig, corrupt, render_oracle
from crosswalk.geometry import GridSpec, Polygon, crosswalk_polygon, segment_distance
from crosswalk.inference import CrosswalkPrediction, EnergyConfig, infer_scene
from crosswalk.scene import CrosswalkGT, GeneratorConfig, generate_scene

PERP = math.pi / 2


def as_pred(cw, present=True, shift=0.0, dbeta=0.0, road=None):
    s1, s2, beta = cw.s1 + shift, cw.s2 + shift, cw.beta + dbeta
    poly = cw.polygon if road is None else crosswalk_polygon(road.centerline, s1, s2, beta, road.half_width)
    return CrosswalkPrediction(cw.road_id, s1, s2, beta, 0.0, poly, present)


def gt_preds(scene, **kw):
    return [as_pred(cw, road=scene.road(cw.road_id), **kw) for cw in scene.crosswalks]


@pytest.fixture(scope="module")
def scene():
    return cross_scene((PERP, None, PERP + 0.1, -0.05), res=0.04)


# --- distances ---------------------------------------------------------------------------


def test_distance_zero_for_identical(scene):
    for cw in scene.crosswalks:
        assert crosswalk_distance(as_pred(cw), cw, scene.road(cw.road_id)) == 0.0


def test_distance_translation(scene):
    for cw in scene.crosswalks:
        road = scene.road(cw.road_id)
        d = crosswalk_distance(as_pred(cw, shift=0.5, road=road), cw, road)
        assert d == pytest.approx(0.5, abs=1e-9)


def dense_hausdorff(a0, a1, b0, b1, n=4001):
    """Point-to-segment distances from densely sampled points, both directions."""
    t = np.linspace(0, 1, n)
    pa = np.asarray(a0) + t[:, None] * (np.asarray(a1) - np.asarray(a0))
    pb = np.asarray(b0) + t[:, None] * (np.asarray(b1) - np.asarray(b0))
    return max(segment_distance(pa[:, 0], pa[:, 1], b0, b1).max(), segment_distance(pb[:, 0], pb[:, 1], a0, a1).max())


@pytest.mark.parametrize("theta_deg", [1.0, 3.0, 7.0, 15.0])
def test_distance_angle_error_against_dense_oracle(scene, theta_deg):
    from crosswalk.geometry import crosswalk_boundaries

    cw = scene.crosswalks[0]
    road = scene.road(cw.road_id)
    theta = math.radians(theta_deg)
    d = crosswalk_distance(as_pred(cw, dbeta=theta, road=road), cw, road)
    pb = crosswalk_boundaries(road.centerline, cw.s1, cw.s2, cw.beta + theta, road.half_width)
    gb = crosswalk_boundaries(road.centerline, cw.s1, cw.s2, cw.beta, road.half_width)
    oracle = max(dense_hausdorff(*p, *g) for p, g in zip(pb, gb))
    assert d == pytest.approx(oracle, abs=0.01)
    assert oracle == pytest.approx(road.half_width * math.sin(theta), abs=1e-3)


def test_distance_missing_prediction(scene):
    cw = scene.crosswalks[0]
    empty = CrosswalkPrediction(cw.road_id, None, None, None, None, None, False)
    assert crosswalk_distance(empty, cw, scene.road(cw.road_id)) == math.inf


def test_distance_road_mismatch(scene):
    a, b = scene.crosswalks[:2]
    with pytest.raises(RoadMismatch):
        crosswalk_distance(as_pred(a), b, scene.road(b.road_id))


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(-1.0, 1.0), st.floats(-0.15, 0.15)), min_size=3, max_size=3))
def test_distance_is_a_metric(perturb):
    sc = cross_scene((PERP, None, None, None))
    road = sc.roads[0]
    base = sc.crosswalks[0]
    items = []
    for ds, db in perturb:
        s1, s2, beta = base.s1 + ds, base.s2 + ds, base.beta + db
        items.append(CrosswalkGT(road.id, s1, s2, beta, crosswalk_polygon(road.centerline, s1, s2, beta, road.half_width)))
    a, b, c = items

    def d(x, y):
        return crosswalk_distance(as_pred(x), y, road)

    assert d(a, b) == pytest.approx(d(b, a), abs=1e-12)
    assert d(a, c) <= d(a, b) + d(b, c) + 1e-9
    assert d(a, a) == 0.0


# --- precision / recall ------------------------------------------------------------------------


def test_identical_sets_are_perfect(scene):
    prec, rec = precision_recall(gt_preds(scene), scene)
    assert all(prec[t] == 1.0 and rec[t] == 1.0 for t in TAUS)
    assert scene_iou(gt_preds(scene), scene.crosswalks, scene.grid) == 1.0


def test_shifted_predictions(scene):
    prec, rec = precision_recall(gt_preds(scene, shift=0.5), scene)
    assert prec[0.4] == 0.0 and prec[0.6] == 1.0
    assert rec[0.2] == 0.0 and rec[0.8] == 1.0


def test_spurious_prediction(scene):
    extra = CrosswalkPrediction("r1", 5.0, 7.0, 0.0, 0.0, crosswalk_polygon(scene.road("r1").centerline, 5.0, 7.0, 0.0, 3.0), True)
    prec, rec = precision_recall(gt_preds(scene) + [extra], scene)
    n = len(scene.crosswalks)
    assert all(prec[t] == pytest.approx(n / (n + 1)) for t in TAUS)
    assert all(rec[t] == 1.0 for t in TAUS)


def test_absent_predictions_are_ignored(scene):
    preds = gt_preds(scene, present=False)
    c = count_matches(preds, scene)
    assert c.n_pred == 0 and c.precision_undefined and not c.recall_undefined
    prec, rec = precision_recall(preds, scene)
    assert all(prec[t] == 1.0 for t in TAUS)  # undefined, reported as 1
    assert all(rec[t] == 0.0 for t in TAUS)


def test_no_ground_truth_flags():
    bare = cross_scene((None, None, None, None))
    c = count_matches([], bare)
    assert c.recall_undefined and c.precision_undefined
    report = aggregate([score_scene(0, bare, [])])
    assert report.precision_undefined and report.recall_undefined
    assert report.mean_iou == 1.0


def test_precision_recall_monotone_in_tau():
    cfg = GeneratorConfig(seed=31)
    for i in range(4):
        s = generate_scene(cfg, i)
        maps = corrupt(render_oracle(s), scene_corruption(TABLE2_CORRUPTION, i))
        prec, rec = precision_recall(infer_scene(s, maps), s)
        for a, b in zip(TAUS, TAUS[1:]):
            assert prec[a] <= prec[b] and rec[a] <= rec[b]


# --- IoU ------------------------------------------------------------------------------------------


def rect(x0, y0, x1, y1):
    return Polygon(((x0, y0), (x1, y0), (x1, y1), (x0, y1)))


def box_gt(poly):
    return CrosswalkGT("r0", 0.0, 1.0, 0.0, poly)


def box_pred(poly):
    return CrosswalkPrediction("r0", 0.0, 1.0, 0.0, 0.0, poly, True)


G = GridSpec((-5.0, -5.0), 0.04, 251, 251)


def test_iou_disjoint():
    assert scene_iou([box_pred(rect(0.01, 0.01, 1.01, 1.01))], [box_gt(rect(2.01, 0.01, 3.01, 1.01))], G) == 0.0


def test_iou_half_overlap_is_one_third():
    a, b = rect(0.01, 0.01, 2.01, 1.01), rect(1.01, 0.01, 3.01, 1.01)
    assert scene_iou([box_pred(a)], [box_gt(b)], G) == pytest.approx(1 / 3)


def test_iou_both_empty():
    assert scene_iou([], [], G) == 1.0


def rotate(poly, k):
    c, s = round(math.cos(k * math.pi / 2)), round(math.sin(k * math.pi / 2))
    return Polygon(tuple((c * x - s * y, s * x + c * y) for x, y in poly.vertices))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3.9, 3.9), min_size=8, max_size=8), st.integers(1, 3))
def test_iou_symmetric_and_rotation_invariant(v, k):
    a = rect(min(v[0], v[1]) - 0.3, min(v[2], v[3]) - 0.3, max(v[0], v[1]) + 0.3, max(v[2], v[3]) + 0.3)
    b = rect(min(v[4], v[5]) - 0.3, min(v[6], v[7]) - 0.3, max(v[4], v[5]) + 0.3, max(v[6], v[7]) + 0.3)
    g = GridSpec((-200 * 0.04, -200 * 0.04), 0.04, 401, 401)  # pixel lattice symmetric under quarter turns
    iou = scene_iou([box_pred(a)], [box_gt(b)], g)
    assert iou == scene_iou([box_pred(b)], [box_gt(a)], g)
    rotated = scene_iou([box_pred(rotate(a, k))], [box_gt(rotate(b, k))], g)
    assert rotated == pytest.approx(iou, abs=0.02)


# --- aggregation and reports ------------------------------------------------------------------------


def test_aggregate_pools_counts(scene):
    good = score_scene(0, scene, gt_preds(scene))
    bad = score_scene(1, scene, gt_preds(scene, shift=1.0))
    report = aggregate([good, bad])
    assert report.precision_at[0.4] == pytest.approx(0.5)
    assert report.mean_iou == pytest.approx((good.iou + bad.iou) / 2)
    assert len(report.per_scene) == 2


def test_angle_statistics(scene):
    preds = [dataclasses.replace(p, mode_angle=p.beta + math.radians(8)) for p in gt_preds(scene)]
    rec = score_scene(0, scene, preds)
    assert rec.n_angles == 3 and rec.angle_ok_before == 0 and rec.angle_ok_after == 3
    rec = score_scene(0, scene, gt_preds(scene))  # no mode: the perpendicular is the first guess
    assert rec.angle_ok_before == 2  # the 0.1 rad (5.7 degree) boundary misses


def test_report_format(scene):
    report = evaluate([scene], [gt_preds(scene)])
    text = format_report([("Ours", report)])
    lines = text.splitlines()
    assert lines[0].split(",") == REPORT_COLUMNS
    assert lines[1].startswith("Ours,1.000000,")
    assert len(lines[1].split(",")) == len(REPORT_COLUMNS)


# --- ablations ----------------------------------------------------------------------------------------


def test_table2_suite_rows():
    specs = table2_suite()
    assert [s.name for s in specs] == [
        "Ours", "No Ang Search", "No Cent Ang", "No Pred Ang", "GT DT", "GT Seg", "GT Ang", "GT DT+S+A",
    ]
    assert specs[-1].oracle_injection == {"dt", "seg", "ang"}
    assert specs[3].candidate_policy == "perpendicular_only"
    assert all(0 < s.energy.lambda_i < 1 for s in specs)


def test_ablation_spec_validation():
    with pytest.raises(ValueError):
        AblationSpec("x", candidate_policy="sideways")
    with pytest.raises(ValueError):
        AblationSpec("x", oracle_injection={"depth"})
    with pytest.raises(ValueError):
        run_ablation([AblationSpec("a"), AblationSpec("a")], GeneratorConfig(), 1)


def test_inject_replaces_channels():
    s = cross_scene((PERP, None, None, None), res=0.08)
    clean = render_oracle(s)
    noisy = corrupt(clean, CorruptionConfig(blur_sigma=2, noise_sigma=0.1, angle_jitter=5, seed=1))
    out = inject(noisy, clean, {"seg", "ang"})
    assert np.array_equal(out.seg, clean.seg) and np.array_equal(out.angle_x, clean.angle_x)
    assert np.array_equal(out.dt, noisy.dt)
    assert inject(noisy, clean, ()) is noisy


def test_scene_corruption_streams():
    a, b = scene_corruption(TABLE2_CORRUPTION, 0), scene_corruption(TABLE2_CORRUPTION, 1)
    assert a.seed != b.seed and a.blur_sigma == TABLE2_CORRUPTION.blur_sigma
    assert scene_corruption(TABLE2_CORRUPTION, 0) == a


def test_clean_oracle_injection_spec():
    spec = AblationSpec("GT DT+S+A", oracle_injection={"dt", "seg", "ang"}, corruption=TABLE2_CORRUPTION)
    (name, report), = run_ablation([spec], GeneratorConfig(seed=3), 3)
    assert name == "GT DT+S+A" and report.mean_iou >= 0.97


def test_ablation_is_deterministic_across_jobs():
    specs = [AblationSpec("Ours", corruption=TABLE2_CORRUPTION), AblationSpec("perp", "perpendicular_only", corruption=TABLE2_CORRUPTION)]
    gen = GeneratorConfig(seed=5)
    one = format_report(run_ablation(specs, gen, 3, jobs=1))
    two = format_report(run_ablation(specs, gen, 3, jobs=2))
    assert one == two
    assert one == format_report(run_ablation(specs, gen, 3, jobs=1))


def test_calibration_picks_from_grid():
    hyps = collect_hypotheses(GeneratorConfig(seed=77), TABLE2_CORRUPTION, EnergyConfig(), 2)
    best, scores = calibrate_lambda(hyps, EnergyConfig(), (0.1, 0.2, 0.5))
    assert best in (0.1, 0.2, 0.5)
    assert [lam for lam, _ in scores] == [0.1, 0.2, 0.5]
    assert max(iou for _, iou in scores) == dict(scores)[best]

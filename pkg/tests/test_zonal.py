import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from epiguide.errors import DomainError, SchemaError
from epiguide.zonal import (
    Box,
    Zone,
    ZoneSpec,
    average_precision,
    iou,
    load_boxes,
    match_detections,
    sweep_circle,
    zonal_map,
    zone_of,
)

W, H = 1280, 960


def oracle_ap(flags, npos):
    """AP from every ranked prefix: area under the precision envelope."""
    if npos == 0:
        return None
    points = []
    tp = 0
    for k, f in enumerate(flags, 1):
        tp += f
        points.append((tp / npos, tp / k))
    total, prev_r = 0.0, 0.0
    for r, _ in sorted(set(points)):
        if r > prev_r:
            total += (r - prev_r) * max(p for rr, p in points if rr >= r)
            prev_r = r
    return total


def random_scene(rng, n_gt=None, n_det=None, n_images=3, classes=(0, 1)):
    n_gt = rng.integers(1, 12) if n_gt is None else n_gt
    n_det = rng.integers(0, 15) if n_det is None else n_det
    gts, dets = [], []
    for _ in range(n_gt):
        x, y = rng.uniform(0, W - 100), rng.uniform(0, H - 100)
        w, h = rng.uniform(10, 100, 2)
        gts.append(Box(int(rng.choice(classes)), x, y, x + w, y + h,
                       image=f"im{rng.integers(n_images)}"))
    for _ in range(n_det):
        if gts and rng.uniform() < 0.6:
            g = gts[rng.integers(len(gts))]
            j = rng.normal(scale=6, size=4)
            x1, y1 = g.x1 + j[0], g.y1 + j[1]
            dets.append(Box(g.class_id, x1, y1, max(g.x2 + j[2], x1 + 1), max(g.y2 + j[3], y1 + 1),
                            score=float(rng.uniform()), image=g.image))
        else:
            x, y = rng.uniform(0, W - 100), rng.uniform(0, H - 100)
            dets.append(Box(int(rng.choice(classes)), x, y, x + 50, y + 50,
                            score=float(rng.uniform()), image=f"im{rng.integers(n_images)}"))
    return gts, dets


def test_iou_examples():
    a = Box(0, 0, 0, 2, 2)
    b = Box(0, 1, 1, 3, 3)
    assert iou(a, b) == pytest.approx(1 / 7)
    assert iou(a, a) == 1.0
    assert iou(a, Box(0, 5, 5, 6, 6)) == 0.0
    # touching edges do not overlap
    assert iou(a, Box(0, 2, 0, 4, 2)) == 0.0


def test_box_validation():
    with pytest.raises(DomainError):
        Box(0, 5, 0, 5, 1)
    with pytest.raises(DomainError):
        Box(0, 0, 0, 1, 1, score=1.5)
    with pytest.raises(DomainError):
        Box(0, 0, 0, math.inf, 1)


def test_circle_zone_examples():
    zone = ZoneSpec.circle(W, H, 0.5)
    assert zone.max_distance == 480
    assert zone_of(Box(0, 1130, 430, 1230, 530), zone) is Zone.PERIPHERAL
    assert zone_of(Box(0, 600, 440, 680, 520), zone) is Zone.CENTRAL
    # boundary at exactly 240 px is central
    assert zone_of(Box(0, 870, 470, 890, 490), zone) is Zone.CENTRAL
    assert zone_of(Box(0, 871, 470, 891, 490), zone) is Zone.PERIPHERAL


def test_zone_validation():
    with pytest.raises(DomainError):
        ZoneSpec.circle(W, H, 0.0)
    with pytest.raises(DomainError):
        ZoneSpec.annulus(W, H, 0.5, 0.3)
    with pytest.raises(DomainError):
        ZoneSpec.circle(W, H, 0.5, center=(-5, 10))
    with pytest.raises(DomainError):
        ZoneSpec("hexagon", W, H)
    with pytest.raises(DomainError):
        ZoneSpec.ellipse_union(W, H, [])


def test_annulus_is_half_open():
    zone = ZoneSpec.annulus(W, H, 0.25, 0.5)
    assert zone.contains(640 + 120, 480)
    assert not zone.contains(640 + 240, 480)
    assert not zone.contains(640 + 100, 480)


def test_ellipse_union():
    zone = ZoneSpec.ellipse_union(W, H, [((300, 480), (100, 50)), ((900, 480), (50, 200))])
    assert zone.contains(390, 480)
    assert zone.contains(900, 670)
    assert not zone.contains(640, 480)
    assert not zone.contains(300, 540)


def test_greedy_matching_takes_best_unmatched():
    gts = [Box(0, 0, 0, 10, 10), Box(0, 2, 0, 12, 10)]
    dets = [Box(0, 2, 0, 12, 10, score=0.9), Box(0, 1, 0, 11, 10, score=0.8)]
    ranked, flags = match_detections(dets, gts)
    # the first takes the exact match, the second falls back to the other box
    assert flags == [True, True]


def test_matching_is_per_image():
    gts = [Box(0, 0, 0, 10, 10, image="a")]
    dets = [Box(0, 0, 0, 10, 10, score=0.9, image="b")]
    assert match_detections(dets, gts)[1] == [False]


def test_duplicate_detection_is_false_positive():
    gts = [Box(0, 0, 0, 10, 10)]
    dets = [Box(0, 0, 0, 10, 10, score=0.9), Box(0, 0, 0, 10, 10, score=0.8)]
    assert match_detections(dets, gts)[1] == [True, False]
    assert average_precision(dets, gts) == 1.0


def test_equal_scores_keep_input_order():
    gts = [Box(0, 0, 0, 10, 10)]
    dets = [Box(0, 50, 50, 60, 60, score=0.5), Box(0, 0, 0, 10, 10, score=0.5)]
    assert match_detections(dets, gts)[1] == [False, True]
    assert average_precision(dets, gts) == 0.5


def test_ap_edge_cases():
    gts = [Box(0, 0, 0, 10, 10)]
    assert average_precision([], gts) == 0.0
    assert average_precision([Box(0, 0, 0, 10, 10, score=0.3)], []) is None


def test_ap_matches_prefix_oracle():
    rng = np.random.default_rng(11)
    for _ in range(300):
        gts, dets = random_scene(rng, classes=(0,))
        _, flags = match_detections(dets, gts)
        want = oracle_ap(flags, len(gts))
        got = average_precision(dets, gts)
        assert got == pytest.approx(want, abs=1e-12)


def test_two_image_two_class_fixture():
    gts = [
        Box("car", 100, 100, 200, 200, image="a"),
        Box("car", 600, 440, 700, 520, image="a"),
        Box("person", 1100, 100, 1150, 220, image="b"),
        Box("person", 620, 430, 660, 530, image="b"),
    ]
    dets = [
        Box("car", 600, 440, 700, 520, score=0.95, image="a"),
        Box("car", 100, 100, 200, 200, score=0.4, image="a"),
        Box("car", 900, 800, 950, 850, score=0.6, image="a"),
        Box("person", 620, 430, 660, 530, score=0.9, image="b"),
        Box("person", 1100, 100, 1150, 220, score=0.2, image="a"),
    ]
    rep = zonal_map(dets, gts, ZoneSpec.circle(W, H, 0.5))
    assert rep.per_class["car"]["central"] == 1.0
    # peripheral car: fp at 0.6 ranks above the tp at 0.4
    assert rep.per_class["car"]["peripheral"] == 0.5
    assert rep.per_class["person"]["central"] == 1.0
    assert rep.per_class["person"]["peripheral"] == 0.0
    assert rep.map_central == 1.0
    assert rep.map_peripheral == 0.25
    assert (rep.count_total, rep.count_central, rep.count_peripheral) == (4, 2, 2)
    d = rep.to_dict()
    assert d["ap_interpolation"] == "all-point"
    assert [c["class"] for c in d["per_class"]] == ["car", "person"]
    json.dumps(d)


def test_class_without_gt_in_zone_is_excluded():
    gts = [Box(0, 600, 440, 680, 520), Box(1, 10, 10, 50, 50)]
    dets = [Box(0, 600, 440, 680, 520, score=0.9)]
    rep = zonal_map(dets, gts, ZoneSpec.circle(W, H, 0.5))
    assert rep.per_class[1]["central"] is None
    assert rep.map_central == 1.0
    assert rep.map_peripheral == 0.0


def test_full_cover_zone_matches_full():
    rng = np.random.default_rng(4)
    gts, dets = random_scene(rng, 10, 14)
    # fraction large enough that every point of the image is inside
    rep = zonal_map(dets, gts, ZoneSpec.circle(W, H, 10.0))
    assert rep.count_peripheral == 0
    assert rep.map_central == pytest.approx(rep.map_full, abs=1e-15)
    assert rep.map_peripheral is None


def test_empty_ground_truth_raises():
    with pytest.raises(DomainError):
        zonal_map([], [], ZoneSpec.circle(W, H, 0.5))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10_000), frac=st.floats(0.05, 2.0))
def test_partition_property(seed, frac):
    rng = np.random.default_rng(seed)
    gts, dets = random_scene(rng)
    rep = zonal_map(dets, gts, ZoneSpec.circle(W, H, frac))
    assert rep.count_central + rep.count_peripheral == rep.count_total == len(gts)
    for aps in rep.per_class.values():
        for v in aps.values():
            assert v is None or 0.0 <= v <= 1.0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_central_count_grows_with_radius(seed):
    rng = np.random.default_rng(seed)
    gts, dets = random_scene(rng)
    counts = [rep.count_central
              for _, rep in sweep_circle(dets, gts, W, H, np.linspace(0.1, 2.0, 12))]
    assert all(a <= b for a, b in zip(counts, counts[1:]))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), scale=st.floats(0.1, 1.0))
def test_monotone_score_scaling_keeps_ap(seed, scale):
    rng = np.random.default_rng(seed)
    gts, dets = random_scene(rng)
    scaled = [Box(d.class_id, d.x1, d.y1, d.x2, d.y2, score=d.score * scale, image=d.image)
              for d in dets]
    zone = ZoneSpec.circle(W, H, 0.5)
    a, b = zonal_map(dets, gts, zone), zonal_map(scaled, gts, zone)
    assert a.to_dict()["per_class"] == b.to_dict()["per_class"]


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000), grow=st.floats(0.5, 2.0))
def test_zone_depends_only_on_center(seed, grow):
    rng = np.random.default_rng(seed)
    gts, _ = random_scene(rng, 10, 0)
    zone = ZoneSpec.circle(W, H, 0.4)
    for g in gts:
        cx, cy = g.center
        hw, hh = grow * (g.x2 - g.x1) / 2, grow * (g.y2 - g.y1) / 2
        resized = Box(g.class_id, cx - hw, cy - hh, cx + hw, cy + hh)
        assert zone_of(resized, zone) is zone_of(g, zone)


def test_load_boxes(tmp_path):
    p = tmp_path / "det.jsonl"
    p.write_text('{"image": "a", "class": 1, "box": [0, 0, 10, 10], "score": 0.5}\n\n'
                 '{"image": "a", "class": "car", "box": [1, 1, 5, 5], "score": 1}\n')
    boxes = load_boxes(p, detections=True)
    assert [b.class_id for b in boxes] == [1, "car"]
    p.write_text('{"image": "a", "class": 1, "box": [0, 0, 10, 10]}\n')
    with pytest.raises(SchemaError) as err:
        load_boxes(p, detections=True)
    assert err.value.field == "score"
    assert load_boxes(p, detections=False)[0].score is None
    p.write_text('{"image": "a", "class": 1, "box": [0, 0, 10]}\n')
    with pytest.raises(SchemaError) as err:
        load_boxes(p, detections=False)
    assert err.value.field == "box"
    p.write_text('{"image": "a", "box": [0, 0, 1, 1]}\n')
    with pytest.raises(SchemaError) as err:
        load_boxes(p, detections=False)
    assert err.value.field == "class"

"""Acceptance criteria, one test per criterion.

A PASS/FAIL line per criterion is printed in the terminal summary.
"""

import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest

from epiguide.camera import project, rho_to_theta, theta_to_rho, unproject
from epiguide.color import compression_ratio, rgb_nbytes, rgb_to_yuv420, yuv420_to_rgb
from epiguide.epipolar import DepthCandidates
from epiguide.motion import EgoMotion, Pose, vehicle_motion_pose
from epiguide.predictor import BlockSpec, predict_block, predict_frame, translate_block, mse
from epiguide.synth import (
    SyntheticScene,
    default_intrinsics,
    ego_pose,
    forward_pose,
    render_synthetic_pair,
    yaw_pose,
)
from epiguide.zonal import Box, Zone, ZoneSpec, average_precision, match_detections, zonal_map, \
    zone_of

from conftest import random_intrinsics
from test_motion import unicycle_euler
from test_zonal import oracle_ap


@pytest.mark.acceptance(1, "projection round-trip < 1e-6 px, inversion < 1e-9, < 1 s")
def test_ac1_projection_round_trip():
    rng = np.random.default_rng(101)
    lenses = [random_intrinsics(rng) for _ in range(5)]
    samples = []
    for intr in lenses:
        # image-circle pixels that also fall on the sensor
        px = np.empty((0, 2))
        while len(px) < 2000:
            r = intr.rho_max * np.sqrt(rng.uniform(0, 1, 4000))
            phi = rng.uniform(0, 2 * np.pi, 4000)
            cand = np.stack([intr.cx + r * np.cos(phi), intr.cy + r * np.sin(phi)], axis=-1)
            on = ((cand[:, 0] >= 0) & (cand[:, 0] <= intr.width - 1)
                  & (cand[:, 1] >= 0) & (cand[:, 1] <= intr.height - 1))
            px = np.concatenate([px, cand[on]])
        samples.append(px[:2000])
    assert sum(len(s) for s in samples) == 10_000

    t0 = time.perf_counter()
    worst_px = worst_theta = 0.0
    for intr, px in zip(lenses, samples):
        back, ok = project(intr, unproject(intr, px))
        assert ok.all()
        worst_px = max(worst_px, float(np.max(np.abs(back - px))))
        theta = rng.uniform(0, intr.theta_max, 2000)
        worst_theta = max(worst_theta, float(np.max(np.abs(
            rho_to_theta(intr, theta_to_rho(intr, theta)) - theta))))
    elapsed = time.perf_counter() - t0
    print(f"max pixel error {worst_px:.3e}, max theta error {worst_theta:.3e}, {elapsed:.3f} s")
    assert worst_px < 1e-6
    assert worst_theta < 1e-9
    assert elapsed < 1.0


@pytest.mark.acceptance(2, "ego-motion matches 1e6-step ODE within 1e-6 m / 1e-9 rad")
@pytest.mark.parametrize("speed,yaw", [(6.2, -0.6), (32.0, 1.3)])
def test_ac2_ego_motion_oracle(speed, yaw):
    x, y, psi = unicycle_euler(speed, yaw, 1.0, steps=1_000_000)
    pose = vehicle_motion_pose(EgoMotion(speed, yaw, 1.0))
    heading = math.atan2(pose.R[1, 0], pose.R[0, 0])
    print(f"dx err {abs(pose.t[0] - x):.2e} m, dy err {abs(pose.t[1] - y):.2e} m, "
          f"yaw err {abs(heading - psi):.2e} rad")
    assert abs(pose.t[0] - x) < 1e-6
    assert abs(pose.t[1] - y) < 1e-6
    assert abs(pose.t[2]) < 1e-6
    assert abs(heading - psi) < 1e-9


@pytest.mark.acceptance(3, "equal corner MVs: affine prediction bit-exact equals translation")
def test_ac3_affine_degenerate_equivalence():
    from epiguide.predictor import affine_subblock_mvs
    rng = np.random.default_rng(303)
    ref = rng.uniform(0, 255, (240, 320))
    for _ in range(1000):
        S = int(rng.choice([8, 16, 32]))
        block = BlockSpec.at(int(rng.integers(0, 240 // S)), int(rng.integers(0, 320 // S)), S)
        mv = rng.uniform(-20, 20, 2)
        if rng.uniform() < 0.3:
            mv = np.round(mv)
        sub = affine_subblock_mvs(mv, mv, mv, S, 4)
        assert np.array_equal(predict_block(ref, block, sub), translate_block(ref, block, mv))


def _random_pair(rng):
    intr = default_intrinsics(96, 64)
    kind = rng.integers(3)
    if kind == 0:
        pose = forward_pose(rng.uniform(0.1, 1.5))
    elif kind == 1:
        pose = yaw_pose(rng.uniform(-4, 4))
    else:
        pose = ego_pose(rng.uniform(0, 15), rng.uniform(-20, 20), 0.1)
    scene = SyntheticScene(intr, plane_depth=rng.uniform(3, 20), target_pose=pose,
                           seed=int(rng.integers(1 << 31)))
    return intr, render_synthetic_pair(scene)


@pytest.mark.acceptance(4, "guided never worse than zero motion (frame and every block)")
def test_ac4_guided_never_worse():
    rng = np.random.default_rng(404)
    depths = DepthCandidates.inverse_uniform(16, 0.5, 200.0)
    for _ in range(50):
        intr, (ref, target, rel) = _random_pair(rng)
        res = predict_frame(ref, target, intr, rel, depths=depths, include_zero_mv=True)
        assert res.frame_mse <= mse(ref, target)
        zero_ssd = ((ref - target) ** 2).reshape(4, 16, 6, 16).sum(axis=(1, 3))
        assert np.all(res.block_mse * 256 <= zero_ssd * (1 + 1e-12))


@pytest.mark.acceptance(5, "synthetic plane: guided MSE <= 0.5 x zero-motion, < 10 s")
def test_ac5_synthetic_gain():
    intr = default_intrinsics(640, 480)
    scene = SyntheticScene(intr, plane_depth=10.0, target_pose=forward_pose(1.0), seed=0)
    ref, target, rel = render_synthetic_pair(scene)
    # 32 candidates, one of them the true plane depth
    depths = DepthCandidates.inverse_uniform(31, 0.5, 200.0, include_infinity=False,
                                             extra=[10.0])
    assert len(depths) == 32 and 10.0 in depths.d
    t0 = time.perf_counter()
    res = predict_frame(ref, target, intr, rel, block_size=16, depths=depths)
    elapsed = time.perf_counter() - t0
    zero = mse(ref, target)
    ratio = res.frame_mse / zero
    print(f"zero-motion MSE {zero:.1f}, guided MSE {res.frame_mse:.1f}, "
          f"ratio {ratio:.3f}, {elapsed:.2f} s")
    assert res.frame_mse <= 0.5 * zero
    assert elapsed < 10.0


@pytest.mark.acceptance(6, "identity relative pose gives frame MSE exactly 0")
def test_ac6_static_camera():
    intr = default_intrinsics(160, 120)
    scene = SyntheticScene(intr, seed=6)
    ref, target, rel = render_synthetic_pair(scene)
    assert rel.is_identity()
    for zero in (False, True):
        for four in (False, True):
            res = predict_frame(ref, target, intr, Pose.identity(), include_zero_mv=zero,
                                four_param=four)
            assert res.frame_mse == 0.0


@pytest.mark.acceptance(7, "average_precision equals exhaustive prefix oracle on 500 instances")
def test_ac7_ap_oracle():
    rng = np.random.default_rng(707)
    for _ in range(500):
        n_gt = int(rng.integers(0, 6))
        n_det = int(rng.integers(0, 9))
        gts = []
        for _ in range(n_gt):
            x, y = rng.uniform(0, 80, 2)
            gts.append(Box(0, x, y, x + rng.uniform(5, 30), y + rng.uniform(5, 30)))
        dets = []
        for _ in range(n_det):
            if gts and rng.uniform() < 0.6:
                g = gts[rng.integers(len(gts))]
                j = rng.normal(scale=3, size=2)
                dets.append(Box(0, g.x1 + j[0], g.y1 + j[1], g.x2 + j[0], g.y2 + j[1],
                                score=float(rng.choice([0.2, 0.5, 0.8, rng.uniform()]))))
            else:
                x, y = rng.uniform(0, 80, 2)
                dets.append(Box(0, x, y, x + 20, y + 20, score=float(rng.uniform())))
        got = average_precision(dets, gts)
        if not gts:
            assert got is None
            continue
        _, flags = match_detections(dets, gts)
        want = oracle_ap(flags, len(gts)) if dets else 0.0
        assert abs(got - want) < 1e-9


@pytest.mark.acceptance(8, "zonal partition, full-cover limit and annulus selection")
def test_ac8_zonal_partition():
    W, H = 1280, 960
    rng = np.random.default_rng(808)
    for _ in range(30):
        gts, dets = [], []
        for _ in range(int(rng.integers(1, 25))):
            x, y = rng.uniform(0, W - 60), rng.uniform(0, H - 60)
            c = int(rng.integers(3))
            gts.append(Box(c, x, y, x + 60, y + 40, image=f"im{rng.integers(2)}"))
            if rng.uniform() < 0.7:
                dets.append(Box(c, x + 2, y + 1, x + 61, y + 42, score=float(rng.uniform()),
                                image=gts[-1].image))
        for f in (0.1, 0.5, 1.0):
            rep = zonal_map(dets, gts, ZoneSpec.circle(W, H, f))
            assert rep.count_central + rep.count_peripheral == rep.count_total == len(gts)
        # the farthest pixel is hypot(640, 480) = 800 px away; 480 px is the unit
        rep = zonal_map(dets, gts, ZoneSpec.circle(W, H, 800 / 480 + 1e-9))
        assert rep.map_central == rep.map_full
        assert rep.count_peripheral == 0

        annulus = ZoneSpec.annulus(W, H, 0.3, 0.6)
        for g in gts:
            cx, cy = (g.x1 + g.x2) / 2, (g.y1 + g.y2) / 2
            frac = math.hypot(cx - 640, cy - 480) / 480
            expected = Zone.CENTRAL if 0.3 <= frac < 0.6 else Zone.PERIPHERAL
            assert zone_of(g, annulus) is expected
    # boundary samples: 0.3 is in, 0.6 is out
    annulus = ZoneSpec.annulus(W, H, 0.3, 0.6)
    assert annulus.contains(640 + 144, 480)
    assert not annulus.contains(640 + 288, 480)


@pytest.mark.acceptance(9, "YUV420 = 1.5 W H bytes, CR vs RGB = 2.0, luma round-trip <= 1")
def test_ac9_chroma_accounting():
    for w, h in [(1280, 960), (640, 480), (2, 2), (1920, 1080)]:
        yuv = rgb_to_yuv420(np.zeros((h, w, 3), dtype=np.uint8))
        assert yuv.nbytes == len(yuv.tobytes()) == 1.5 * w * h
        assert compression_ratio(rgb_nbytes(w, h), yuv.nbytes).cr == 2.0
    rng = np.random.default_rng(909)
    worst = 0
    for _ in range(100):
        h, w = 2 * rng.integers(1, 64, 2)
        img = rng.integers(0, 256, (h, w, 3), dtype=np.uint8)
        yuv = rgb_to_yuv420(img)
        y_back = rgb_to_yuv420(yuv420_to_rgb(yuv)).y
        worst = max(worst, int(np.max(np.abs(y_back.astype(int) - yuv.y.astype(int)))))
    print(f"max luma round-trip error {worst}")
    assert worst <= 1


def _run(*args):
    proc = subprocess.run([sys.executable, "-m", "epiguide", *args], capture_output=True)
    assert proc.returncode == 0, proc.stderr.decode()
    return proc.stdout


@pytest.mark.acceptance(10, "predict and zonal-map are byte-identical across runs")
def test_ac10_determinism(tmp_path):
    data = tmp_path / "data"
    _run("synth", "--seed", "10", "--width", "128", "--height", "96", "--motion",
         "ego:8,5,0.1", "--plane-depth", "6", "--out-dir", str(data))
    outputs = []
    for run in ("a", "b"):
        out = tmp_path / run
        stdout = _run("predict", "--ref", str(data / "ref.pgm"), "--target",
                      str(data / "target.pgm"), "--calib", str(data / "calib.json"), "--motion",
                      str(data / "motion.json"), "--extrinsics", str(data / "extrinsics.json"),
                      "--include-zero-mv", "--out-dir", str(out))
        files = {p.name: p.read_bytes() for p in sorted(out.iterdir())}
        outputs.append((stdout, files))
    assert set(outputs[0][1]) == {"predicted.pgm", "error.pgm", "depth_map.csv", "metrics.json"}
    assert outputs[0] == outputs[1]

    rng = np.random.default_rng(1010)
    gt, det = tmp_path / "gt.jsonl", tmp_path / "det.jsonl"
    with open(gt, "w") as g, open(det, "w") as d:
        for _ in range(40):
            x, y = (float(v) for v in rng.uniform(0, 1200, 2))
            box = [x, y, x + 50, y + 40]
            g.write(json.dumps({"image": "f0", "class": int(rng.integers(2)), "box": box}) + "\n")
            d.write(json.dumps({"image": "f0", "class": int(rng.integers(2)),
                                "box": [x + 3, y, x + 52, y + 41],
                                "score": float(rng.uniform())}) + "\n")
    runs = []
    for _ in range(2):
        report = _run("zonal-map", "--gt", str(gt), "--det", str(det), "--width", "1280",
                      "--height", "1280", "--zone", "circle:0.5")
        sweep = _run("zonal-map", "--gt", str(gt), "--det", str(det), "--width", "1280",
                     "--height", "1280", "--sweep-radius", "0.1:1.0:0.1")
        runs.append((report, sweep))
    assert runs[0] == runs[1]
    assert json.loads(runs[0][0])["counts"]["total"] == 40

"""Command-line front end.

Subcommands: predict, epipole-trace, zonal-map, yuv, cr, synth.
Exit codes: 0 success, 2 usage error, 3 input/schema error, 4 domain error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import re
import sys
from pathlib import Path

import numpy as np

from . import color, imageio
from .camera import load_calibration, save_calibration
from .epipolar import DepthCandidates, build_epipole_table, epipole_curve
from .errors import DomainError, SchemaError
from .motion import (
    EgoMotion,
    front_camera_extrinsics,
    load_extrinsics,
    load_motion,
    relative_camera_pose,
    vehicle_motion_pose,
)
from .predictor import mse, mse_change_percent, predict_frame
from .synth import SyntheticScene, default_intrinsics, render_synthetic_pair
from .zonal import ZoneSpec, load_boxes, sweep_circle, zonal_map

log = logging.getLogger("epiguide")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_DOMAIN = 4
SCHEMA_VERSION = 1


class UsageError(Exception):
    pass


def _g(x) -> float | None:
    """Round to 6 significant digits for stable text output."""
    if x is None:
        return None
    x = float(x)
    if math.isinf(x):
        return None
    return float(f"{x:.6g}")


def _s(x) -> str:
    if x is None:
        return ""
    x = float(x)
    return "inf" if math.isinf(x) else f"{x:.6g}"


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    if path is None:
        sys.stdout.write(buf.getvalue())
    else:
        Path(path).write_text(buf.getvalue(), encoding="utf-8")


# -- argument helpers --------------------------------------------------------

def _floats(text: str, name: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"{name}: expected comma-separated numbers, got {text!r}") from None


def _depths_from_args(args) -> DepthCandidates:
    if args.depth_list:
        vals = _floats(args.depth_list, "--depth-list")
        try:
            return DepthCandidates(vals)
        except DomainError as exc:
            raise UsageError(f"--depth-list: {exc}") from None
    parts = args.depths.split(",")
    if len(parts) != 3:
        raise UsageError("--depths: expected count,min,max")
    try:
        count = int(parts[0])
        near, far = float(parts[1]), float(parts[2])
        return DepthCandidates.inverse_uniform(count, near, far,
                                               include_infinity=not args.no_infinity)
    except (ValueError, DomainError) as exc:
        raise UsageError(f"--depths: {exc}") from None


def _add_depth_args(p):
    p.add_argument("--depths", default="32,0.5,200", metavar="COUNT,MIN,MAX",
                   help="inverse-depth uniform candidates in meters (default %(default)s)")
    p.add_argument("--depth-list", metavar="D1,D2,...",
                   help="explicit increasing candidate list; overrides --depths ('inf' allowed)")
    p.add_argument("--no-infinity", action="store_true",
                   help="omit the infinite-depth candidate from --depths")


def _add_pose_args(p):
    p.add_argument("--calib", required=True, help="calibration JSON")
    p.add_argument("--motion", required=True, help="motion JSON (speed_mps, yaw_rate_dps, dt_s)")
    p.add_argument("--extrinsics", help="camera-to-vehicle pose JSON; default: front camera")
    p.add_argument("--invert-extrinsics", action="store_true",
                   help="the extrinsics file is vehicle-to-camera")


def _relpose_from_args(args):
    motion = load_motion(args.motion)
    if args.extrinsics:
        ext = load_extrinsics(args.extrinsics, invert_direction=args.invert_extrinsics)
    else:
        ext = front_camera_extrinsics()
    return relative_camera_pose(vehicle_motion_pose(motion), ext)


def _read_gray_checked(path):
    try:
        return imageio.read_gray(path)
    except (OSError, ValueError) as exc:
        raise SchemaError(f"cannot read image {path}: {exc}") from exc


# -- subcommands -------------------------------------------------------------

def cmd_predict(args) -> int:
    ref = _read_gray_checked(args.ref)
    target = _read_gray_checked(args.target)
    intr = load_calibration(args.calib)
    relpose = _relpose_from_args(args)
    depths = _depths_from_args(args)
    if ref.shape != target.shape:
        raise SchemaError(f"ref is {ref.shape[1]}x{ref.shape[0]} but target is "
                          f"{target.shape[1]}x{target.shape[0]}", "target")
    if (intr.width, intr.height) != (ref.shape[1], ref.shape[0]):
        raise SchemaError(f"calibration width/height {intr.width}x{intr.height} do not match "
                          f"images {ref.shape[1]}x{ref.shape[0]}", "width")
    result = predict_frame(ref, target, intr, relpose, block_size=args.block_size,
                           depths=depths, include_zero_mv=args.include_zero_mv,
                           four_param=args.four_param)
    zero = mse(ref, target)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ext = "." + args.format
    imageio.write_image(out / f"predicted{ext}", result.predicted)
    imageio.write_image(out / f"error{ext}", result.error_image)
    d = result.depths.d
    rows = []
    for (r, c), idx in np.ndenumerate(result.depth_map):
        depth = "" if idx < 0 else _s(d[idx])
        rows.append([r, c, int(idx), depth, _s(result.block_mse[r, c])])
    _write_csv(out / "depth_map.csv", ["row", "col", "depth_index", "depth_m", "block_mse"], rows)
    metrics = {
        "schema_version": SCHEMA_VERSION,
        "frame_mse_guided": _g(result.frame_mse),
        "frame_mse_zero": _g(zero),
        "mse_change_percent": _g(mse_change_percent(zero, result.frame_mse)),
        "block_size": args.block_size,
        "depths": [_g(v) for v in d],
        "include_zero_mv": args.include_zero_mv,
        "four_param": args.four_param,
        "width": intr.width,
        "height": intr.height,
    }
    _write_json(out / "metrics.json", metrics)
    print(f"{'Frame':<12}{'Baseline':>12}{'Epipole guided':>16}{'MSE change[%]':>15}")
    print(f"{Path(args.target).stem:<12}{zero:>12.1f}{result.frame_mse:>16.1f}"
          f"{mse_change_percent(zero, result.frame_mse):>14.1f}%")
    return EXIT_OK


def _parse_points(text: str):
    pts = []
    for chunk in text.split(";"):
        if chunk.strip():
            xy = _floats(chunk, "--points")
            if len(xy) != 2:
                raise UsageError(f"--points: bad point {chunk!r}")
            pts.append(xy)
    return pts


def _draw_line(rgb, p0, p1, colour):
    h, w, _ = rgb.shape
    n = int(max(abs(p1[0] - p0[0]), abs(p1[1] - p0[1]))) + 1
    xs = np.rint(np.linspace(p0[0], p1[0], n + 1)).astype(int)
    ys = np.rint(np.linspace(p0[1], p1[1], n + 1)).astype(int)
    keep = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    rgb[ys[keep], xs[keep]] = colour


def cmd_epipole_trace(args) -> int:
    intr = load_calibration(args.calib)
    relpose = _relpose_from_args(args)
    depths = _depths_from_args(args)
    if args.points:
        points = _parse_points(args.points)
    else:
        step = args.grid
        points = [[x, y] for y in range(step // 2, intr.height, step)
                  for x in range(step // 2, intr.width, step)]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows, curves = [], []
    for i, (x, y) in enumerate(points):
        try:
            pts, valid = epipole_curve(intr, relpose, (x, y), depths)
        except DomainError:
            log.warning("point (%s, %s) lies outside the lens image circle; skipped", x, y)
            continue
        curves.append(((x, y), pts, valid))
        for j, ((u, v), ok) in enumerate(zip(pts, valid)):
            rows.append([i, _s(x), _s(y), j, _s(depths.d[j]), _s(u), _s(v), int(ok)])
    _write_csv(out / "curves.csv",
               ["point", "u_target", "v_target", "depth_index", "depth_m", "u_ref", "v_ref",
                "valid"], rows)
    if args.table_block_size:
        table = build_epipole_table(intr, relpose, args.table_block_size, depths)
        trows = []
        for (r, c, k), ok in np.ndenumerate(table.valid):
            mvx, mvy = table.mv[r, c, k]
            trows.append([r, c, k, _s(depths.d[k]), _s(mvx) if ok else "",
                          _s(mvy) if ok else "", int(ok)])
        _write_csv(out / "table.csv", ["row", "col", "depth_index", "depth_m", "mv_x", "mv_y",
                                       "valid"], trows)
    if args.image:
        base = imageio.read_image(args.image)
        if base.ndim == 2:
            base = np.repeat(base[..., None], 3, axis=2)
        rgb = base.copy()
        for (x, y), pts, valid in curves:
            good = pts[valid]
            for a, b in zip(good[:-1], good[1:]):
                _draw_line(rgb, a, b, (255, 0, 0))
            _draw_line(rgb, (x, y), (x, y), (0, 255, 0))
        imageio.write_image(out / f"overlay.{args.format}", rgb)
    return EXIT_OK


def _parse_zone(text: str, width, height, center):
    kind, _, rest = text.partition(":")
    if kind == "circle":
        vals = _floats(rest, "--zone")
        if len(vals) != 1:
            raise UsageError("--zone circle:FRACTION")
        return ZoneSpec.circle(width, height, vals[0], center)
    if kind == "annulus":
        vals = _floats(rest, "--zone")
        if len(vals) != 2:
            raise UsageError("--zone annulus:INNER,OUTER")
        return ZoneSpec.annulus(width, height, vals[0], vals[1], center)
    if kind in ("ellipses", "ellipse"):
        try:
            data = json.loads(Path(rest).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{rest}: not valid JSON ({exc})") from exc
        ells = data.get("ellipses") if isinstance(data, dict) else None
        if not isinstance(ells, list) or not ells:
            raise SchemaError(f"{rest}: field 'ellipses' must be a non-empty list", "ellipses")
        parsed = []
        for e in ells:
            if not (isinstance(e, dict) and isinstance(e.get("center"), list)
                    and isinstance(e.get("axes"), list)
                    and len(e["center"]) == 2 and len(e["axes"]) == 2):
                raise SchemaError(f"{rest}: each ellipse needs 'center' [x, y] and 'axes' [a, b]",
                                  "ellipses")
            parsed.append((e["center"], e["axes"]))
        return ZoneSpec.ellipse_union(width, height, parsed)
    raise UsageError(f"--zone: unknown zone {text!r}")


def _parse_sweep(text: str):
    parts = text.split(":")
    if len(parts) != 3:
        raise UsageError("--sweep-radius START:STOP:STEP")
    start, stop, step = (float(p) for p in parts)
    if step <= 0 or start <= 0 or stop < start:
        raise UsageError("--sweep-radius needs 0 < START <= STOP and STEP > 0")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 10) for i in range(n)]


def cmd_zonal_map(args) -> int:
    gt = load_boxes(args.gt, detections=False)
    det = load_boxes(args.det, detections=True)
    center = _floats(args.center, "--center") if args.center else None
    if center is not None and len(center) != 2:
        raise UsageError("--center CX,CY")
    if args.sweep_radius:
        rows = []
        for f, rep in sweep_circle(det, gt, args.width, args.height,
                                   _parse_sweep(args.sweep_radius), args.iou, center):
            rows.append([_s(f), _s(rep.map_full), _s(rep.map_central), _s(rep.map_peripheral),
                         rep.count_central, rep.count_peripheral])
        _write_csv(args.out, ["radius_fraction", "mAP_full", "mAP_central", "mAP_peripheral",
                              "n_central", "n_peripheral"], rows)
        return EXIT_OK
    zone = _parse_zone(args.zone, args.width, args.height, center)
    report = zonal_map(det, gt, zone, args.iou).to_dict()
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_yuv(args) -> int:
    if args.decode:
        if not (args.width and args.height):
            raise UsageError("--decode needs --width and --height")
        yuv = color.read_yuv(args.input, args.width, args.height)
        imageio.write_image(args.output, color.yuv420_to_rgb(yuv))
    else:
        img = imageio.read_image(args.input)
        if img.ndim == 2:
            img = np.repeat(img[..., None], 3, axis=2)
        yuv = color.rgb_to_yuv420(img)
        color.write_yuv(yuv, args.output)
    raw = color.rgb_nbytes(yuv.width, yuv.height)
    rec = color.compression_ratio(raw, yuv.nbytes, "yuv420")
    info = {"schema_version": SCHEMA_VERSION, "width": yuv.width, "height": yuv.height,
            "rgb_bytes": raw, "yuv420_bytes": yuv.nbytes, "cr_vs_rgb": _g(rec.cr)}
    sys.stdout.write(json.dumps(info, sort_keys=True) + "\n")
    return EXIT_OK


_SCAN_NAME = re.compile(r"^(?P<codec>.+?)[_-]qp(?P<qp>\d+)", re.IGNORECASE)


def _raw_bytes_from_args(args) -> int:
    if args.raw_bytes is not None:
        return args.raw_bytes
    if args.frames:
        parts = args.frames.split(",")
        try:
            w, h, n = (int(p) for p in parts)
        except ValueError:
            raise UsageError("--frames W,H,N") from None
        return color.rgb_nbytes(w, h) * n
    raise UsageError("give --raw-bytes or --frames")


def cmd_cr(args) -> int:
    raw = _raw_bytes_from_args(args)
    if args.scan:
        rows = []
        for f in sorted(Path(args.scan).iterdir()):
            m = _SCAN_NAME.match(f.name)
            if not f.is_file() or not m:
                continue
            rec = color.compression_ratio(raw, f.stat().st_size, m["codec"], int(m["qp"]))
            rows.append([rec.codec_label, rec.qp, rec.raw_bytes, rec.compressed_bytes,
                         _s(rec.cr)])
        rows.sort(key=lambda r: (r[0], r[1]))
        _write_csv(args.out, ["codec", "qp", "raw_bytes", "compressed_bytes", "cr"], rows)
        return EXIT_OK
    if args.compressed_bytes is None:
        raise UsageError("give --compressed-bytes or --scan")
    rec = color.compression_ratio(raw, args.compressed_bytes, args.codec or "", args.qp)
    payload = {"schema_version": SCHEMA_VERSION, **rec.to_dict(), "cr": _g(rec.cr)}
    sys.stdout.write(json.dumps(payload, sort_keys=True) + "\n")
    return EXIT_OK


def _parse_synth_motion(text: str) -> EgoMotion:
    kind, _, rest = text.partition(":")
    vals = _floats(rest, "--motion")
    if kind == "forward" and len(vals) == 1:
        return EgoMotion(vals[0], 0.0, 1.0)
    if kind == "yaw" and len(vals) == 1:
        return EgoMotion(0.0, vals[0], 1.0)
    if kind == "ego" and len(vals) == 3:
        return EgoMotion(*vals)
    raise UsageError("--motion forward:METERS | yaw:DEGREES | ego:SPEED,YAW_RATE,DT")


def cmd_synth(args) -> int:
    ego = _parse_synth_motion(args.motion)
    intr = default_intrinsics(args.width, args.height)
    ext = front_camera_extrinsics()
    relpose = relative_camera_pose(vehicle_motion_pose(ego), ext)
    scene = SyntheticScene(intr, args.plane_depth, target_pose=relpose, seed=args.seed)
    ref, target, _ = render_synthetic_pair(scene)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ext_name = "." + args.format
    imageio.write_image(out / f"ref{ext_name}", ref)
    imageio.write_image(out / f"target{ext_name}", target)
    save_calibration(intr, out / "calib.json")
    _write_json(out / "motion.json", ego.to_dict())
    _write_json(out / "extrinsics.json", {"schema_version": SCHEMA_VERSION, **ext.to_dict()})
    return EXIT_OK


# -- parser ------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="epiguide", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("predict", help="epipole-guided prediction of a target frame")
    p.add_argument("--ref", required=True)
    p.add_argument("--target", required=True)
    _add_pose_args(p)
    _add_depth_args(p)
    p.add_argument("--block-size", type=int, default=16)
    p.add_argument("--include-zero-mv", action="store_true",
                   help="also try a zero MV per block (index -1)")
    p.add_argument("--four-param", action="store_true", help="use the 4-parameter affine model")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--format", choices=("pgm", "png"), default="pgm")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("epipole-trace", help="epipolar curves and candidate MV table")
    _add_pose_args(p)
    _add_depth_args(p)
    p.add_argument("--points", help="target pixels 'x,y;x,y;...'")
    p.add_argument("--grid", type=int, default=128, help="grid spacing when --points is absent")
    p.add_argument("--table-block-size", type=int, help="also dump the MV table for this block size")
    p.add_argument("--image", help="reference image to draw curves on")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--format", choices=("ppm", "png"), default="ppm")
    p.set_defaults(func=cmd_epipole_trace)

    p = sub.add_parser("zonal-map", help="central/peripheral mAP")
    p.add_argument("--gt", required=True, help="ground truth JSON lines")
    p.add_argument("--det", required=True, help="detections JSON lines")
    p.add_argument("--width", type=float, required=True)
    p.add_argument("--height", type=float, required=True)
    p.add_argument("--zone", default="circle:0.5",
                   help="circle:F | annulus:INNER,OUTER | ellipses:FILE (default %(default)s)")
    p.add_argument("--center", help="zone center CX,CY (default image center)")
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--sweep-radius", metavar="START:STOP:STEP",
                   help="CSV of circle-zone mAP over radius fractions")
    p.add_argument("--out", help="output file (default stdout)")
    p.set_defaults(func=cmd_zonal_map)

    p = sub.add_parser("yuv", help="RGB <-> raw I420 conversion with byte accounting")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.add_argument("--decode", action="store_true", help="input is raw I420")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.set_defaults(func=cmd_yuv)

    p = sub.add_parser("cr", help="compression ratio from byte counts")
    p.add_argument("--raw-bytes", type=int)
    p.add_argument("--frames", metavar="W,H,N", help="raw size of N RGB frames")
    p.add_argument("--compressed-bytes", type=int)
    p.add_argument("--codec")
    p.add_argument("--qp", type=int)
    p.add_argument("--scan", help="directory of <codec>_qp<NN>.* bitstreams")
    p.add_argument("--out", help="CSV output for --scan (default stdout)")
    p.set_defaults(func=cmd_cr)

    p = sub.add_parser("synth", help="render a synthetic textured-plane frame pair")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--motion", default="forward:1.0",
                   help="forward:M | yaw:DEG | ego:SPEED,YAW_RATE,DT")
    p.add_argument("--plane-depth", type=float, default=10.0)
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=480)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--format", choices=("pgm", "png"), default="pgm")
    p.set_defaults(func=cmd_synth)
    return parser


def cli_main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (DomainError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()

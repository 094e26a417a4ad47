"""Zonal detection metric for fisheye images.

Objects are split by where their box center falls: inside a low-distortion
central zone, or in the periphery. AP is computed separately for the full
set, the central objects and the peripheral objects.
"""

from __future__ import annotations

import enum
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, SchemaError

REPORT_SCHEMA_VERSION = 1


class Zone(str, enum.Enum):
    CENTRAL = "central"
    PERIPHERAL = "peripheral"


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in pixels. ``score`` is set for detections only."""

    class_id: object
    x1: float
    y1: float
    x2: float
    y2: float
    score: float | None = None
    image: str = ""

    def __post_init__(self):
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(v) for v in coords):
            raise DomainError("box coordinates must be finite")
        if not (self.x2 > self.x1 and self.y2 > self.y1):
            raise DomainError(f"degenerate box {coords}")
        if self.score is not None and not 0.0 <= self.score <= 1.0:
            raise DomainError(f"score must lie in [0, 1], got {self.score}")

    @property
    def center(self):
        return (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)


@dataclass(frozen=True)
class ZoneSpec:
    """Central-region geometry on a ``width`` x ``height`` image.

    ``circle``: center within ``fraction`` of the max perpendicular distance,
    i.e. ``min(cx, cy, W - cx, H - cy)``. ``annulus``: distance fraction in
    ``[inner, outer)``. ``ellipse_union``: inside any axis-aligned ellipse
    ``((ex, ey), (a, b))``. The center defaults to the image center.
    """

    variant: str
    width: float
    height: float
    center: tuple | None = None
    fraction: float | None = None
    inner: float | None = None
    outer: float | None = None
    ellipses: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise DomainError("zone image size must be positive")
        if self.center is None:
            object.__setattr__(self, "center", (self.width / 2.0, self.height / 2.0))
        if self.variant == "circle":
            if self.fraction is None or not self.fraction > 0:
                raise DomainError("circle zone needs a positive fraction")
        elif self.variant == "annulus":
            if self.inner is None or self.outer is None or not 0 < self.inner < self.outer:
                raise DomainError("annulus zone needs 0 < inner < outer")
        elif self.variant == "ellipse_union":
            if not self.ellipses:
                raise DomainError("ellipse_union zone needs at least one ellipse")
            ells = tuple((tuple(map(float, c)), tuple(map(float, ax))) for c, ax in self.ellipses)
            for _, (a, b) in ells:
                if not (a > 0 and b > 0):
                    raise DomainError("ellipse semi-axes must be positive")
            object.__setattr__(self, "ellipses", ells)
        else:
            raise DomainError(f"unknown zone variant {self.variant!r}")
        if self.variant != "ellipse_union" and self.max_distance <= 0:
            raise DomainError("zone center must lie inside the image")

    @classmethod
    def circle(cls, width, height, fraction, center=None) -> "ZoneSpec":
        return cls("circle", width, height, center=center, fraction=fraction)

    @classmethod
    def annulus(cls, width, height, inner, outer, center=None) -> "ZoneSpec":
        return cls("annulus", width, height, center=center, inner=inner, outer=outer)

    @classmethod
    def ellipse_union(cls, width, height, ellipses) -> "ZoneSpec":
        return cls("ellipse_union", width, height, ellipses=tuple(ellipses))

    @property
    def max_distance(self) -> float:
        cx, cy = self.center
        return min(cx, cy, self.width - cx, self.height - cy)

    def distance_fraction(self, x: float, y: float) -> float:
        cx, cy = self.center
        return math.hypot(x - cx, y - cy) / self.max_distance

    def contains(self, x: float, y: float) -> bool:
        if self.variant == "circle":
            cx, cy = self.center
            return math.hypot(x - cx, y - cy) <= self.fraction * self.max_distance
        if self.variant == "annulus":
            return self.inner <= self.distance_fraction(x, y) < self.outer
        return any(((x - ex) / a) ** 2 + ((y - ey) / b) ** 2 <= 1.0
                   for (ex, ey), (a, b) in self.ellipses)

    def describe(self) -> dict:
        out = {"variant": self.variant, "width": self.width, "height": self.height}
        if self.variant == "circle":
            out.update(center=list(self.center), fraction=self.fraction)
        elif self.variant == "annulus":
            out.update(center=list(self.center), inner=self.inner, outer=self.outer)
        else:
            out["ellipses"] = [{"center": list(c), "axes": list(ax)} for c, ax in self.ellipses]
        return out


def zone_of(box: Box, zone: ZoneSpec) -> Zone:
    """Central if the box center is inside the zone (boundary included for circles)."""
    return Zone.CENTRAL if zone.contains(*box.center) else Zone.PERIPHERAL


def iou(a: Box, b: Box) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def match_detections(detections, ground_truth, iou_threshold: float = 0.5):
    """Greedy matching in descending score order.

    Each detection takes the unmatched ground truth of its image with the
    highest IoU, provided that IoU reaches ``iou_threshold``. Returns the
    score-sorted detections and a parallel list of true-positive flags.
    """
    by_image = defaultdict(list)
    for g in ground_truth:
        by_image[g.image].append(g)
    taken = {img: [False] * len(gs) for img, gs in by_image.items()}
    # stable sort keeps input order among equal scores
    ranked = sorted(detections, key=lambda d: -d.score)
    flags = []
    for det in ranked:
        gts = by_image.get(det.image, ())
        best, best_iou = -1, iou_threshold
        for j, g in enumerate(gts):
            if taken[det.image][j]:
                continue
            o = iou(det, g)
            if o >= best_iou and (best < 0 or o > best_iou):
                best, best_iou = j, o
        if best >= 0:
            taken[det.image][best] = True
        flags.append(best >= 0)
    return ranked, flags


def average_precision(detections, ground_truth, iou_threshold: float = 0.5):
    """All-point interpolated AP for a single class.

    Returns None when there is no ground truth.
    """
    npos = len(ground_truth)
    if npos == 0:
        return None
    if not detections:
        return 0.0
    _, flags = match_detections(detections, ground_truth, iou_threshold)
    tp = np.cumsum(flags, dtype=np.float64)
    fp = np.cumsum(np.logical_not(flags), dtype=np.float64)
    recall = tp / npos
    precision = tp / (tp + fp)
    mrec = np.concatenate([[0.0], recall, [1.0]])
    mpre = np.concatenate([[0.0], precision, [0.0]])
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    steps = np.nonzero(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[steps + 1] - mrec[steps]) * mpre[steps + 1]))


@dataclass
class EvalReport:
    per_class: dict
    map_full: float | None
    map_central: float | None
    map_peripheral: float | None
    count_total: int
    count_central: int
    count_peripheral: int
    iou_threshold: float = 0.5
    zone: dict = field(default_factory=dict)

    def to_dict(self, digits: int = 6) -> dict:
        def fmt(v):
            return None if v is None else float(f"{v:.{digits}g}")

        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "iou_threshold": self.iou_threshold,
            "ap_interpolation": "all-point",
            "zone": self.zone,
            "mAP_full": fmt(self.map_full),
            "mAP_central": fmt(self.map_central),
            "mAP_peripheral": fmt(self.map_peripheral),
            "counts": {
                "total": self.count_total,
                "central": self.count_central,
                "peripheral": self.count_peripheral,
            },
            "per_class": [
                {"class": c, **{k: fmt(v) for k, v in aps.items()}}
                for c, aps in self.per_class.items()
            ],
        }


def _class_key(c):
    return (0, c, "") if isinstance(c, (int, float)) else (1, 0, str(c))


def _mean_ap(aps):
    vals = [a for a in aps if a is not None]
    return float(np.mean(vals)) if vals else None


def zonal_map(detections, ground_truth, zone: ZoneSpec, iou_threshold: float = 0.5) -> EvalReport:
    """Full, central and peripheral mAP.

    Detections and ground truths are filtered by their own centers, so a
    central detection can never match a peripheral object. Classes without
    ground truth in a zone are left out of that zone's mean.
    """
    ground_truth = list(ground_truth)
    detections = list(detections)
    if not ground_truth:
        raise DomainError("zonal_map needs at least one ground-truth box")
    if any(d.score is None for d in detections):
        raise DomainError("every detection needs a score")
    gt_zone = [zone_of(g, zone) for g in ground_truth]
    det_zone = [zone_of(d, zone) for d in detections]
    classes = sorted({g.class_id for g in ground_truth}, key=_class_key)
    subsets = {
        "full": (ground_truth, detections),
        "central": ([g for g, z in zip(ground_truth, gt_zone) if z is Zone.CENTRAL],
                    [d for d, z in zip(detections, det_zone) if z is Zone.CENTRAL]),
        "peripheral": ([g for g, z in zip(ground_truth, gt_zone) if z is Zone.PERIPHERAL],
                       [d for d, z in zip(detections, det_zone) if z is Zone.PERIPHERAL]),
    }
    per_class = {}
    for c in classes:
        per_class[c] = {
            name: average_precision([d for d in dets if d.class_id == c],
                                    [g for g in gts if g.class_id == c], iou_threshold)
            for name, (gts, dets) in subsets.items()
        }
    n_central = sum(z is Zone.CENTRAL for z in gt_zone)
    return EvalReport(
        per_class=per_class,
        map_full=_mean_ap(aps["full"] for aps in per_class.values()),
        map_central=_mean_ap(aps["central"] for aps in per_class.values()),
        map_peripheral=_mean_ap(aps["peripheral"] for aps in per_class.values()),
        count_total=len(ground_truth),
        count_central=n_central,
        count_peripheral=len(ground_truth) - n_central,
        iou_threshold=iou_threshold,
        zone=zone.describe(),
    )


def sweep_circle(detections, ground_truth, width, height, fractions, iou_threshold=0.5,
                 center=None):
    """Circle-zone reports for each radius fraction, in order."""
    return [(f, zonal_map(detections, ground_truth,
                          ZoneSpec.circle(width, height, f, center), iou_threshold))
            for f in fractions]


def load_boxes(path, detections: bool) -> list:
    """Read JSON-lines boxes ``{"image", "class", "box": [x1, y1, x2, y2], "score"?}``."""
    boxes = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            where = f"{path}:{lineno}"
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{where}: not valid JSON ({exc})") from exc
            if not isinstance(rec, dict):
                raise SchemaError(f"{where}: record must be an object")
            for key in ("image", "class", "box"):
                if key not in rec:
                    raise SchemaError(f"{where}: missing field '{key}'", key)
            coords = rec["box"]
            if not (isinstance(coords, list) and len(coords) == 4
                    and all(isinstance(v, (int, float)) and not isinstance(v, bool)
                            for v in coords)):
                raise SchemaError(f"{where}: field 'box' must be 4 numbers", "box")
            score = rec.get("score")
            if detections and score is None:
                raise SchemaError(f"{where}: detections need field 'score'", "score")
            if score is not None and (not isinstance(score, (int, float))
                                      or isinstance(score, bool)):
                raise SchemaError(f"{where}: field 'score' must be a number", "score")
            cls_id = rec["class"]
            if isinstance(cls_id, bool) or not isinstance(cls_id, (int, str)):
                raise SchemaError(f"{where}: field 'class' must be an int or string", "class")
            try:
                boxes.append(Box(cls_id, *map(float, coords),
                                 score=None if score is None else float(score),
                                 image=str(rec["image"])))
            except DomainError as exc:
                raise SchemaError(f"{where}: {exc}", "box") from exc
    return boxes

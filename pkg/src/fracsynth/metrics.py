"""Segmentation evaluation for the joint (foreground) class.

Masks follow the dataset convention: joint = 0, background = 255.  With the
pixel confusion counts,

    IoU       = TP / (TP + FP + FN)
    Dice      = 2 TP / (2 TP + FP + FN)
    Precision = TP / (TP + FP)
    Recall    = TP / (TP + FN)

A 0/0 denominator returns 1.0 when both masks are empty of joints (an
all-background prediction of an all-background tile is correct), else 0.0.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import UndefinedCorrelationError, ValidationError

JOINT = 0
BACKGROUND = 255


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValidationError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other):
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.fn + other.fn, self.tn + other.tn)


@dataclass(frozen=True)
class MetricReport:
    iou: float
    dice: float
    precision: float
    recall: float


def _check_mask(mask) -> np.ndarray:
    m = np.asarray(mask)
    values = np.unique(m)
    if not np.all(np.isin(values, (JOINT, BACKGROUND))):
        raise ValidationError(f"mask must be binary 0/255, got values {values[:8]}")
    return m


def confusion(pred_mask, label_mask) -> ConfusionCounts:
    """Pixel confusion counts with joint (0) as the positive class."""
    pred = _check_mask(pred_mask)
    label = _check_mask(label_mask)
    if pred.shape != label.shape:
        raise ValidationError(f"shape mismatch {pred.shape} vs {label.shape}")
    pred_joint = pred == JOINT
    label_joint = label == JOINT
    tp = int(np.sum(pred_joint & label_joint))
    fp = int(np.sum(pred_joint & ~label_joint))
    fn = int(np.sum(~pred_joint & label_joint))
    tn = int(np.sum(~pred_joint & ~label_joint))
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def _safe_ratio(num: float, denom: float, both_empty: bool) -> float:
    if denom == 0:
        return 1.0 if both_empty else 0.0
    return num / denom


def iou(c: ConfusionCounts) -> float:
    return _safe_ratio(c.tp, c.tp + c.fp + c.fn, c.tp + c.fp + c.fn == 0)


def dice(c: ConfusionCounts) -> float:
    return _safe_ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, c.tp + c.fp + c.fn == 0)


def precision(c: ConfusionCounts) -> float:
    return _safe_ratio(c.tp, c.tp + c.fp, c.tp + c.fp + c.fn == 0)


def recall(c: ConfusionCounts) -> float:
    return _safe_ratio(c.tp, c.tp + c.fn, c.tp + c.fp + c.fn == 0)


def report(c: ConfusionCounts) -> MetricReport:
    return MetricReport(iou=iou(c), dice=dice(c), precision=precision(c), recall=recall(c))


def background_report(c: ConfusionCounts) -> MetricReport:
    """Metrics for the background class (off by default in summaries)."""
    swapped = ConfusionCounts(tp=c.tn, fp=c.fn, fn=c.fp, tn=c.tp)
    return report(swapped)


def binarize(prob_map, threshold: float = 0.5) -> np.ndarray:
    """Joint probability map -> 0/255 mask; ties at the threshold are joint."""
    p = np.asarray(prob_map, dtype=np.float64)
    if p.size and (p.min() < 0.0 or p.max() > 1.0):
        raise ValidationError("probabilities must be in [0, 1]")
    return np.where(p >= threshold, JOINT, BACKGROUND).astype(np.uint8)


def pearson_r(xs, ys) -> float:
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1 or len(xs) < 2:
        raise ValidationError("need two equal-length series with >= 2 points")
    dx = xs - xs.mean()
    dy = ys - ys.mean()
    sx = math.sqrt(float(dx @ dx))
    sy = math.sqrt(float(dy @ dy))
    if sx == 0.0 or sy == 0.0:
        raise UndefinedCorrelationError("correlation undefined for a constant series")
    r = float(dx @ dy) / (sx * sy)
    return max(-1.0, min(1.0, r))


# ---------------------------------------------------------------------------
# Qualitative scores (1-5 scale, four criteria)
# ---------------------------------------------------------------------------

QUALITY_CRITERIA = ("recognisability", "persistence", "localisation", "noise")


@dataclass(frozen=True)
class QualityScore:
    experiment: str
    epoch: int
    image: str
    recognisability: int
    persistence: int
    localisation: int
    noise: int

    def __post_init__(self):
        for name in QUALITY_CRITERIA:
            v = getattr(self, name)
            if not (isinstance(v, int) and 1 <= v <= 5):
                raise ValidationError(f"{name} must be an integer in [1, 5], got {v}")

    @property
    def mean(self) -> float:
        return (self.recognisability + self.persistence + self.localisation + self.noise) / 4.0


def quality_ingest(csv_path):
    """Read per-image criterion scores.

    Expected columns: experiment, epoch, image, recognisability, persistence,
    localisation, noise.  Returns (scores, per_experiment_means, rejects)
    where rejects is a list of (row_number, reason).
    """
    scores = []
    rejects = []
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, start=2):
            try:
                scores.append(
                    QualityScore(
                        experiment=row["experiment"],
                        epoch=int(row["epoch"]),
                        image=row.get("image", ""),
                        recognisability=int(row["recognisability"]),
                        persistence=int(row["persistence"]),
                        localisation=int(row["localisation"]),
                        noise=int(row["noise"]),
                    )
                )
            except (ValidationError, KeyError, ValueError) as exc:
                rejects.append((lineno, str(exc)))
    by_exp: dict = {}
    for s in scores:
        by_exp.setdefault(s.experiment, []).append(s.mean)
    means = {k: float(np.mean(v)) for k, v in sorted(by_exp.items())}
    return scores, means, rejects


def join_quality_with_dice(scores, dice_by_key) -> list:
    """Pair quality means with Dice values by (experiment, epoch)."""
    out = []
    for s in scores:
        key = (s.experiment, s.epoch)
        if key in dice_by_key:
            out.append((dice_by_key[key], s.mean))
    return out


# ---------------------------------------------------------------------------
# Dice-vs-quality fits (linear and quadratic, with r^2 delta)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CorrelationFits:
    r: float
    linear: tuple          # polynomial coefficients, highest power first
    quadratic: tuple
    r2_linear: float
    r2_quadratic: float

    @property
    def delta_r2(self) -> float:
        return self.r2_quadratic - self.r2_linear


def _r2(ys, fitted) -> float:
    ys = np.asarray(ys, dtype=np.float64)
    ss_res = float(np.sum((ys - fitted) ** 2))
    ss_tot = float(np.sum((ys - ys.mean()) ** 2))
    return 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0


def correlation_fits(xs, ys) -> CorrelationFits:
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    r = pearson_r(xs, ys)
    lin = np.polyfit(xs, ys, 1)
    quad = np.polyfit(xs, ys, 2)
    return CorrelationFits(
        r=r,
        linear=tuple(lin.tolist()),
        quadratic=tuple(quad.tolist()),
        r2_linear=_r2(ys, np.polyval(lin, xs)),
        r2_quadratic=_r2(ys, np.polyval(quad, xs)),
    )


def save_dice_quality_svg(xs, ys, fits: CorrelationFits, path) -> None:
    from .svgplot import scatter_svg

    xs = np.asarray(xs, dtype=np.float64)
    grid = np.linspace(xs.min(), xs.max(), 64)
    scatter_svg(
        xs, ys, path,
        fits=[(grid, np.polyval(np.asarray(fits.linear), grid)),
              (grid, np.polyval(np.asarray(fits.quadratic), grid))],
        labels=("validation Dice (joints)", "mean quality score"),
    )


# ---------------------------------------------------------------------------
# Per-image evaluation tables
# ---------------------------------------------------------------------------

def evaluate_pairs(pairs) -> list:
    """pairs: iterable of (name, pred_mask, label_mask) -> per-image rows."""
    rows = []
    for name, pred, label in pairs:
        c = confusion(pred, label)
        rows.append((name, c, report(c)))
    return rows


def save_eval_csv(rows, path, aggregate: str = "image") -> None:
    """Per-image metric CSV plus one summary line; names the aggregate mode."""
    if aggregate not in ("image", "pixel"):
        raise ValidationError("aggregate must be 'image' or 'pixel'")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "tp", "fp", "fn", "tn", "iou", "dice", "precision", "recall"])
        for name, c, m in rows:
            w.writerow([name, c.tp, c.fp, c.fn, c.tn,
                        f"{m.iou:.6f}", f"{m.dice:.6f}",
                        f"{m.precision:.6f}", f"{m.recall:.6f}"])
        if rows:
            m = summarize(rows, aggregate)
            w.writerow([f"summary({aggregate})", "", "", "", "",
                        f"{m.iou:.6f}", f"{m.dice:.6f}",
                        f"{m.precision:.6f}", f"{m.recall:.6f}"])


def summarize(rows, aggregate: str = "image") -> MetricReport:
    """Average per-image metrics, or pool all pixels first."""
    if aggregate == "image":
        ms = [m for _, _, m in rows]
        return MetricReport(
            iou=float(np.mean([m.iou for m in ms])),
            dice=float(np.mean([m.dice for m in ms])),
            precision=float(np.mean([m.precision for m in ms])),
            recall=float(np.mean([m.recall for m in ms])),
        )
    if aggregate == "pixel":
        total = ConfusionCounts(0, 0, 0, 0)
        for _, c, _ in rows:
            total = total + c
        return report(total)
    raise ValidationError("aggregate must be 'image' or 'pixel'")

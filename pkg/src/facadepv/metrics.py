"""Segmentation quality metrics for (prediction, ground truth) label maps.

Confusion matrices are indexed ``[pred, gt]`` over the evaluated classes.
Pixels whose ground truth is an ignored class are skipped; a prediction
of an ignored class on an evaluated pixel lands in ``unassigned`` and
still counts as a miss for its ground-truth class.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import raster
from .raster import CLASS_NAMES, LabelMap

EVALUATED_CLASSES = tuple(i for i, n in enumerate(CLASS_NAMES) if n != "unknown")
DEFAULT_IGNORE = frozenset({raster.UNKNOWN})

GROUPS = ("wall", "glazing", "other")
DEFAULT_GROUPING = {
    **{name: "other" for name in CLASS_NAMES if name not in ("background", "unknown")},
    "facade": "wall",
    "window": "glazing",
    "shop": "glazing",
}


class DimensionMismatch(ValueError):
    pass


class NoEvaluatedPixels(ValueError):
    pass


class EmptyInput(ValueError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    classes: tuple[int, ...]
    counts: np.ndarray = field(repr=False)  # [pred, gt]
    unassigned: np.ndarray = field(repr=False)  # per gt class, predicted as ignored

    @property
    def total(self) -> int:
        return int(self.counts.sum() + self.unassigned.sum())

    @property
    def tp(self) -> np.ndarray:
        return np.diag(self.counts).astype(np.int64)

    @property
    def fp(self) -> np.ndarray:
        return self.counts.sum(axis=1) - self.tp

    @property
    def fn(self) -> np.ndarray:
        return self.counts.sum(axis=0) + self.unassigned - self.tp

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.classes != other.classes:
            raise ValueError("confusion matrices cover different classes")
        return ConfusionMatrix(self.classes, self.counts + other.counts, self.unassigned + other.unassigned)

    def restrict(self, classes: Iterable[int]) -> "ConfusionMatrix":
        """Sub-matrix over ``classes``; predictions outside it become unassigned."""
        keep = [self.classes.index(c) for c in classes]
        sub = self.counts[np.ix_(keep, keep)]
        lost = self.counts[:, keep].sum(axis=0) - sub.sum(axis=0)
        return ConfusionMatrix(tuple(classes), sub, self.unassigned[keep] + lost)


def confusion(
    pred: LabelMap, gt: LabelMap, ignore: Iterable[int] = DEFAULT_IGNORE
) -> ConfusionMatrix:
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"prediction {pred.shape} vs ground truth {gt.shape}")
    ignored = {raster.class_id(c) for c in ignore}
    classes = tuple(i for i in range(len(CLASS_NAMES)) if i not in ignored)
    n_all = len(CLASS_NAMES)
    g = gt.labels.ravel().astype(np.int64)
    p = pred.labels.ravel().astype(np.int64)
    full = np.bincount(p * n_all + g, minlength=n_all * n_all).reshape(n_all, n_all)
    idx = list(classes)
    counts = full[np.ix_(idx, idx)]
    unassigned = full[sorted(ignored)][:, idx].sum(axis=0) if ignored else np.zeros(len(idx), np.int64)
    return ConfusionMatrix(classes, counts.astype(np.int64), np.asarray(unassigned, dtype=np.int64))


def iou_per_class(cm: ConfusionMatrix) -> dict[int, float]:
    """IoU for each class with a non-empty union; zero-union classes are omitted."""
    union = cm.tp + cm.fp + cm.fn
    return {c: float(cm.tp[i] / union[i]) for i, c in enumerate(cm.classes) if union[i] > 0}


def _mean(values: Iterable[float]) -> float:
    values = list(values)
    if not values:
        raise NoEvaluatedPixels("no class has a non-empty denominator")
    return math.fsum(values) / len(values)


def miou(cm: ConfusionMatrix) -> float:
    return _mean(iou_per_class(cm).values())


def miou_dataset(cms: Sequence[ConfusionMatrix]) -> float:
    """mIoU from counts summed over all images."""
    if not cms:
        raise NoEvaluatedPixels("no confusion matrices")
    total = cms[0]
    for cm in cms[1:]:
        total = total + cm
    return miou(total)


def miou_per_image_mean(per_image_miou: Sequence[float]) -> float:
    if not per_image_miou:
        raise NoEvaluatedPixels("no per-image values")
    return math.fsum(per_image_miou) / len(per_image_miou)


def macro_prf(cm: ConfusionMatrix) -> tuple[float, float, float]:
    tp, fp, fn = cm.tp, cm.fp, cm.fn
    pred_n, gt_n = tp + fp, tp + fn
    precision = _mean(tp[i] / pred_n[i] for i in range(len(tp)) if pred_n[i] > 0) if pred_n.any() else 0.0
    recall = _mean(tp[i] / gt_n[i] for i in range(len(tp)) if gt_n[i] > 0)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return float(precision), float(recall), float(f1)


def pixel_accuracy(cm: ConfusionMatrix) -> float:
    total = cm.total
    if total == 0:
        raise NoEvaluatedPixels("no evaluated pixels")
    return float(cm.tp.sum() / total)


@dataclass(frozen=True)
class ImageMetrics:
    name: str
    iou_per_class: dict[int, float]
    miou: float
    pixel_accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float


@dataclass(frozen=True)
class MetricsReport:
    iou_per_class: dict[int, float]
    miou_dataset: float
    miou_per_image_mean: float
    pixel_accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    per_image: tuple[ImageMetrics, ...]
    confusion: ConfusionMatrix = field(repr=False)
    notes: tuple[str, ...] = (
        "classes with an empty union or denominator are excluded from macro averages",
        "per-image mIoU averages over the classes present in that image",
        "pixels with ignored ground truth are skipped; ignored predictions count as misses",
    )

    def to_dict(self) -> dict:
        def named(d: Mapping[int, float]) -> dict[str, float]:
            return {CLASS_NAMES[c]: v for c, v in d.items()}

        return {
            "iou_per_class": named(self.iou_per_class),
            "miou_dataset": self.miou_dataset,
            "miou_per_image_mean": self.miou_per_image_mean,
            "pixel_accuracy": self.pixel_accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "evaluated_pixels": self.confusion.total,
            "classes": [CLASS_NAMES[c] for c in self.confusion.classes],
            "confusion_pred_by_gt": self.confusion.counts.tolist(),
            "unassigned_by_gt": self.confusion.unassigned.tolist(),
            "per_image": [
                {
                    "name": im.name,
                    "iou_per_class": named(im.iou_per_class),
                    "miou": im.miou,
                    "pixel_accuracy": im.pixel_accuracy,
                    "macro_precision": im.macro_precision,
                    "macro_recall": im.macro_recall,
                    "macro_f1": im.macro_f1,
                }
                for im in self.per_image
            ],
            "notes": list(self.notes),
        }


def image_metrics(name: str, cm: ConfusionMatrix) -> ImageMetrics:
    p, r, f1 = macro_prf(cm)
    return ImageMetrics(name, iou_per_class(cm), miou(cm), pixel_accuracy(cm), p, r, f1)


def evaluate(
    pairs: Iterable[tuple[str, LabelMap, LabelMap]], ignore: Iterable[int] = DEFAULT_IGNORE
) -> MetricsReport:
    """Metrics over ``(name, pred, gt)`` triples; images with no evaluated pixels are skipped."""
    cms: list[ConfusionMatrix] = []
    per_image: list[ImageMetrics] = []
    for name, pred, gt in pairs:
        cm = confusion(pred, gt, ignore)
        cms.append(cm)
        if cm.total:
            per_image.append(image_metrics(name, cm))
    if not cms:
        raise EmptyInput("no image pairs")
    total = cms[0]
    for cm in cms[1:]:
        total = total + cm
    p, r, f1 = macro_prf(total)
    return MetricsReport(
        iou_per_class=iou_per_class(total),
        miou_dataset=miou(total),
        miou_per_image_mean=miou_per_image_mean([im.miou for im in per_image]),
        pixel_accuracy=pixel_accuracy(total),
        macro_precision=p,
        macro_recall=r,
        macro_f1=f1,
        per_image=tuple(per_image),
        confusion=total,
    )


# -- class-share errors -------------------------------------------------------


@dataclass(frozen=True)
class ShareErrorReport:
    # signed errors in percentage points, one list entry per image
    class_errors_pp: dict[str, list[float]]
    group_errors_pp: dict[str, list[float]]
    class_mae: dict[str, float]
    class_rmse: dict[str, float]
    group_mae: dict[str, float]
    group_rmse: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "class_errors_pp": self.class_errors_pp,
            "group_errors_pp": self.group_errors_pp,
            "class_mae_pp": self.class_mae,
            "class_rmse_pp": self.class_rmse,
            "group_mae_pp": self.group_mae,
            "group_rmse_pp": self.group_rmse,
        }


def mae(errors: Sequence[float]) -> float:
    return math.fsum(abs(e) for e in errors) / len(errors)


def rmse(errors: Sequence[float]) -> float:
    return math.sqrt(math.fsum(e * e for e in errors) / len(errors))


def class_shares(label_map: LabelMap, region: np.ndarray) -> dict[str, float]:
    """Percentage of ``region`` pixels carrying each class."""
    n = int(region.sum())
    counts = np.bincount(label_map.labels[region], minlength=len(CLASS_NAMES))
    return {name: (100.0 * counts[i] / n if n else 0.0) for i, name in enumerate(CLASS_NAMES)}


def group_shares(label_map: LabelMap, grouping: Mapping[str, str] = DEFAULT_GROUPING) -> dict[str, float]:
    """Percentage of the map's own facade surface held by each class group."""
    labels = label_map.labels.ravel()
    counts = np.bincount(labels, minlength=len(CLASS_NAMES))
    shares = {g: 0.0 for g in sorted(set(grouping.values()))}
    total = sum(int(counts[raster.CLASS_IDS[name]]) for name in grouping)
    if total == 0:
        return shares
    for name, group in grouping.items():
        shares[group] += 100.0 * counts[raster.CLASS_IDS[name]] / total
    return shares


def share_errors(
    preds: Sequence[LabelMap],
    gts: Sequence[LabelMap],
    grouping: Mapping[str, str] = DEFAULT_GROUPING,
    ignore: Iterable[int] = DEFAULT_IGNORE,
) -> ShareErrorReport:
    if len(preds) != len(gts):
        raise DimensionMismatch("prediction and ground-truth lists differ in length")
    if not preds:
        raise EmptyInput("no image pairs")
    ignored = sorted(raster.class_id(c) for c in ignore)
    class_names = [n for i, n in enumerate(CLASS_NAMES) if i not in ignored]
    class_err: dict[str, list[float]] = {n: [] for n in class_names}
    group_err: dict[str, list[float]] = {g: [] for g in sorted(set(grouping.values()))}
    for pred, gt in zip(preds, gts):
        if pred.shape != gt.shape:
            raise DimensionMismatch(f"prediction {pred.shape} vs ground truth {gt.shape}")
        region = ~np.isin(gt.labels, ignored)
        ps, gs = class_shares(pred, region), class_shares(gt, region)
        for n in class_names:
            class_err[n].append(ps[n] - gs[n])
        pg, gg = group_shares(pred, grouping), group_shares(gt, grouping)
        for g in group_err:
            group_err[g].append(pg[g] - gg[g])
    return ShareErrorReport(
        class_errors_pp=class_err,
        group_errors_pp=group_err,
        class_mae={n: mae(v) for n, v in class_err.items()},
        class_rmse={n: rmse(v) for n, v in class_err.items()},
        group_mae={g: mae(v) for g, v in group_err.items()},
        group_rmse={g: rmse(v) for g, v in group_err.items()},
    )


# -- baselines -----------------------------------------------------------------


def baseline_uniform_random(
    shape: tuple[int, int], classes: Sequence[int] = EVALUATED_CLASSES, seed: int = 0
) -> LabelMap:
    rng = np.random.default_rng(seed)
    return LabelMap(rng.choice(np.asarray(classes, dtype=np.uint8), size=shape))


def baseline_majority(shape: tuple[int, int], cls: int | str = "background") -> LabelMap:
    return LabelMap(np.full(shape, raster.class_id(cls), dtype=np.uint8))


# -- text rendering --------------------------------------------------------------


def format_table(rows: Mapping[str, MetricsReport]) -> str:
    """Aligned summary table plus per-class IoU table."""
    head = ("Method", "mIoU", "mIoU/img", "Pixel Acc", "Macro P", "Macro R", "Macro F1")
    body = [
        (name, *(f"{v:.2f}" for v in (r.miou_dataset, r.miou_per_image_mean, r.pixel_accuracy,
                                      r.macro_precision, r.macro_recall, r.macro_f1)))
        for name, r in rows.items()
    ]
    out = [_align([head, *body])]
    abbrev = ("Bg", "Fac", "Win", "Door", "Corn", "Sill", "Balc", "Blind", "Mold", "Deco", "Pill", "Shop")
    head2 = ("Method", *abbrev)
    body2 = []
    for name, r in rows.items():
        cells = [f"{r.iou_per_class[c]:.2f}" if c in r.iou_per_class else "-" for c in EVALUATED_CLASSES]
        body2.append((name, *cells))
    out.append(_align([head2, *body2]))
    return "\n\n".join(out) + "\n"


def _align(rows: list[tuple[str, ...]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = []
    for k, r in enumerate(rows):
        lines.append("  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))))
        if k == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)

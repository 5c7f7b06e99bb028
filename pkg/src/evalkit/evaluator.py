import csv
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from evalkit.center_error import MM_PER_PX, center_pairs, center_stats, error_histogram
from evalkit.metrics import (Images, Truths, class_matches, confusion_matrix, detection_counts, f1_score,
                             map_range, pr_curve, precision_recall)
from evalkit.utils.ground_truth import ground_truths
from model.model_graph import ModelGraph
from postprocess.decode import CONF_THRESH
from postprocess.nms import IOU_THRESH
from postprocess.pipeline import detect
from postprocess.utils.detection import Detection
from utils.sample import CLASS_NAMES, Sample

logger = logging.getLogger(__name__)


@dataclass
class MetricsReport:
    """Everything `eval` reports for one model on one split."""
    num_images: int
    conf_thresh: float
    map50: float
    map5095: float
    precision: float
    recall: float
    f1: float
    per_class: Dict[str, Dict[str, Optional[float]]]
    confusion: List[List[float]]
    confusion_counts: List[List[int]]
    center: Optional[Dict[str, float]] = None
    excluded_classes: List[str] = field(default_factory=list)
    inference: Optional[Dict[str, float]] = None

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)

    def summary_rows(self) -> List[Tuple[str, str]]:
        rows = [
            ("mAP@50", f"{self.map50:.4f}"),
            ("mAP@50:95", f"{self.map5095:.4f}"),
            ("Precision", f"{self.precision:.4f}"),
            ("Recall", f"{self.recall:.4f}"),
            ("F1", f"{self.f1:.4f}"),
        ]
        for name, stats in self.per_class.items():
            ap = stats.get("ap50")
            rows.append((f"AP@50 {name}", "n/a" if ap is None else f"{ap:.4f}"))
        if self.center:
            rows.append(("Center RMSE (px)", f"{self.center['rmse_euclidean']:.2f}"))
            rows.append(("Center RMSE (mm)", f"{self.center['rmse_euclidean_mm']:.2f}"))
        if self.inference:
            rows.append(("ms / image", f"{self.inference['ms_per_image']:.1f}"))
        return rows


def evaluate(dets: Images, gts: Truths, conf_thresh: float = CONF_THRESH, iou_thresh: float = 0.5,
             mm_per_px: float = MM_PER_PX, num_classes: int = 2) -> MetricsReport:
    """
    Compute the full metric set.

    AP figures use every detection; precision, recall, F1, the confusion
    matrix and the center statistics use those scoring at least `conf_thresh`.

    Args:
        dets: Detections per image
        gts: Ground truths per image, aligned with `dets`
        conf_thresh: Operating threshold of the report
        iou_thresh: Match threshold for P/R, confusion and centers
        mm_per_px: Pixel to millimetre factor for center errors
        num_classes: Number of classes

    Returns:
        The report
    """
    classes = list(range(num_classes))
    ranged = map_range(dets, gts, classes)
    per_class: Dict[str, Dict[str, Optional[float]]] = {}
    totals = np.zeros(3, dtype=np.int64)
    for c in classes:
        tp, fp, fn = detection_counts(dets, gts, c, iou_thresh, conf_thresh)
        totals += (tp, fp, fn)
        p, r = precision_recall(tp, fp, fn)
        per_class[CLASS_NAMES[c] if c < len(CLASS_NAMES) else str(c)] = {
            "precision": p, "recall": r, "f1": f1_score(p, r),
            "ap50": ranged["ap50"].get(c), "ap5095": ranged["ap5095"].get(c),
            "tp": tp, "fp": fp, "fn": fn,
        }
    precision, recall = precision_recall(*totals.tolist())
    normalized, counts = confusion_matrix(dets, gts, iou_thresh, conf_thresh, num_classes)
    stats = center_stats(*center_pairs(dets, gts, iou_thresh, conf_thresh))

    return MetricsReport(
        num_images=len(gts),
        conf_thresh=conf_thresh,
        map50=ranged["map50"],
        map5095=ranged["map5095"],
        precision=precision,
        recall=recall,
        f1=f1_score(precision, recall),
        per_class=per_class,
        confusion=normalized.tolist(),
        confusion_counts=counts.tolist(),
        center=None if stats is None else stats.to_dict(mm_per_px),
        excluded_classes=[CLASS_NAMES[c] for c in ranged["excluded"] if c < len(CLASS_NAMES)],
    )


def evaluate_model(model: ModelGraph, samples: Sequence[Sample], batch_size: int = 8,
                   conf_thresh: float = CONF_THRESH, iou_thresh: float = IOU_THRESH,
                   mm_per_px: float = MM_PER_PX) -> Tuple[MetricsReport, Dict[str, List[Detection]]]:
    """
    Detect on every sample and evaluate against its labels.

    Decoding keeps low-scoring detections so AP sees the full ranking; the
    report threshold applies afterwards.

    Returns:
        The report (with throughput) and the detections by image id
    """
    detections: Dict[str, List[Detection]] = {}
    started = time.perf_counter()
    for start in range(0, len(samples), batch_size):
        chunk = samples[start:start + batch_size]
        images = np.stack([s.image.transpose(2, 0, 1) for s in chunk])
        for sample, dets in zip(chunk, detect(model, images, min(conf_thresh, 0.01), iou_thresh)):
            detections[sample.image_id] = dets
    elapsed = time.perf_counter() - started

    dets = [detections[s.image_id] for s in samples]
    gts = [ground_truths(s) for s in samples]
    report = evaluate(dets, gts, conf_thresh, 0.5, mm_per_px, model.num_classes)
    ms = 1000.0 * elapsed / max(len(samples), 1)
    report.inference = {"ms_per_image": ms, "fps": 1000.0 / ms if ms > 0 else 0.0}
    logger.info("evaluated %d images: mAP@50 %.4f, mAP@50:95 %.4f", len(samples), report.map50, report.map5095)
    return report, detections


def write_report_json(report: MetricsReport, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as f:
        json.dump(report.to_dict(), f, indent=2)


def write_pr_csv(dets: Images, gts: Truths, path: str, num_classes: int = 2, iou_thresh: float = 0.5) -> None:
    """PR points at `iou_thresh`: one row per detection rank and class."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["class", "recall", "precision"])
        for c in range(num_classes):
            scores, flags, n_gt = class_matches(dets, gts, c, iou_thresh)
            if n_gt == 0:
                continue
            recall, precision = pr_curve(scores, flags, n_gt)
            for r, p in zip(recall, precision):
                writer.writerow([CLASS_NAMES[c] if c < len(CLASS_NAMES) else c, f"{r:.6f}", f"{p:.6f}"])


def write_center_histogram(dets: Images, gts: Truths, path: str, conf_thresh: float = CONF_THRESH) -> None:
    pred, truth = center_pairs(dets, gts, 0.5, conf_thresh)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["error_px_lo", "error_px_hi", "count"])
        for lo, hi, count in error_histogram(pred, truth):
            writer.writerow([f"{lo:g}", f"{hi:g}", count])

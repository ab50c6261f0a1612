"""
Grounding metrics.

Spotting AP under a tolerance window (averaged over tolerance grids for
tight and loose average-mAP), average recall of segment proposals at k
over a tIoU grid, and the area under the AR-AN curve.
"""

import math
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.core.exceptions import DetectionException, EvaluationException
from src.core.labeling import Segment, make_segment_label
from src.core.postprocess import GlobalProposal, temporal_iou
from src.dataset.manifest import Manifest
from src.dataset.predictions import SpotPrediction, read_predictions
from src.dataset.features import PathLike
from src.evaluation.report import MetricsReport
from src.utils.config import MetricConfig
from src.utils.logger import get_logger


logger = get_logger(__name__)

GroundTruth = Tuple[str, float]


def _gt_index(gts: Sequence[GroundTruth]) -> Dict[str, float]:
    index: Dict[str, float] = {}
    for replay_id, time_s in gts:
        if replay_id in index:
            raise EvaluationException(f"Duplicate ground truth for replay {replay_id}", replay_id=replay_id)
        index[replay_id] = time_s
    return index


def rank_predictions(preds: Sequence[SpotPrediction]) -> List[SpotPrediction]:
    """Confidence descending; ties by time, replay id, then rank."""
    return sorted(preds, key=lambda p: (-p.confidence, p.time_s, p.replay_id, p.rank))


def spotting_ap(gts: Sequence[GroundTruth], preds: Sequence[SpotPrediction], delta_s: float) -> float:
    """Average precision of spots within `delta_s` of their replay's ground truth.

    Predictions are matched greedily in confidence order, each ground truth
    at most once. AP is the sum of precision at every true-positive rank
    divided by the number of ground truths.

    Raises:
        EvaluationException: If a replay has more than one ground truth
    """
    index = _gt_index(gts)
    if not index:
        return 0.0

    matched = set()
    tp = 0
    precisions = []
    for i, pred in enumerate(rank_predictions(preds), start=1):
        gt = index.get(pred.replay_id)
        if gt is None or pred.replay_id in matched:
            continue
        if abs(pred.time_s - gt) <= delta_s:
            matched.add(pred.replay_id)
            tp += 1
            precisions.append(tp / i)
    return math.fsum(precisions) / len(index)


def average_map(gts: Sequence[GroundTruth], preds: Sequence[SpotPrediction], deltas: Sequence[float]) -> float:
    """100 x mean spotting AP over the tolerance grid."""
    if not deltas:
        raise EvaluationException("Tolerance grid is empty")
    return 100.0 * float(np.mean([spotting_ap(gts, preds, d) for d in deltas]))


def _best_iou_curves(
    gt_segments: Mapping[str, Segment],
    proposals_per_replay: Mapping[str, Sequence[GlobalProposal]]
) -> List[np.ndarray]:
    """Per ground truth: running maximum tIoU over its ranked proposals."""
    curves = []
    for replay_id in sorted(gt_segments):
        gt = gt_segments[replay_id].as_interval()
        ranked = sorted(
            proposals_per_replay.get(replay_id, ()),
            key=lambda p: (-p.score, p.start_s, p.end_s)
        )
        ious = np.array([temporal_iou(gt, p.as_interval()) for p in ranked])
        curves.append(np.maximum.accumulate(ious) if ious.size else ious)
    return curves


def _ar_from_curves(curves: List[np.ndarray], k: int, tious: Sequence[float]) -> float:
    if not curves:
        return 0.0
    best = np.array([c[min(k, c.size) - 1] if c.size else 0.0 for c in curves])
    return 100.0 * float(np.mean([np.mean(best >= t) for t in tious]))


def ar_at_k(
    gt_segments: Mapping[str, Segment],
    proposals_per_replay: Mapping[str, Sequence[GlobalProposal]],
    k: int,
    tiou_thresholds: Sequence[float]
) -> float:
    """Average recall at k over the tIoU thresholds, as a percentage.

    Args:
        gt_segments: Ground-truth segment per replay
        proposals_per_replay: Proposals per replay (ranked here by score)
        k: Proposal budget per replay
        tiou_thresholds: tIoU grid
    """
    return _ar_from_curves(_best_iou_curves(gt_segments, proposals_per_replay), k, tiou_thresholds)


def ar_an_curve(
    gt_segments: Mapping[str, Segment],
    proposals_per_replay: Mapping[str, Sequence[GlobalProposal]],
    cfg: MetricConfig
) -> List[float]:
    """AR at every proposal budget AN of the grid."""
    curves = _best_iou_curves(gt_segments, proposals_per_replay)
    return [_ar_from_curves(curves, an, cfg.tiou_thresholds) for an in cfg.an_grid]


def auc_ar_an(
    gt_segments: Mapping[str, Segment],
    proposals_per_replay: Mapping[str, Sequence[GlobalProposal]],
    cfg: MetricConfig
) -> float:
    """Mean of the AR-AN curve over the AN grid."""
    return float(np.mean(ar_an_curve(gt_segments, proposals_per_replay, cfg)))


def evaluate(
    manifest: Manifest,
    predictions_path: PathLike,
    cfg: MetricConfig,
    report_path: Optional[PathLike] = None
) -> MetricsReport:
    """Score a predictions file against the manifest's ground truth.

    Args:
        manifest: Manifest with gt_time_s on every replay
        predictions_path: Predictions JSON Lines
        cfg: Tolerance and tIoU grids
        report_path: Where to write the report JSON, if given

    Raises:
        EvaluationException: On unknown replay ids or missing ground truth
        PredictionFormatException: If the predictions file is malformed
    """
    replays = {r.replay_id: r for r in manifest.replays()}
    missing = [rid for rid, r in replays.items() if r.gt_time_s is None]
    if missing:
        raise EvaluationException(
            f"{len(missing)} replays lack gt_time_s, first {missing[0]}", replay_id=missing[0]
        )

    preds = read_predictions(predictions_path)
    for pred in preds:
        if pred.replay_id not in replays:
            raise EvaluationException(
                f"Prediction references unknown replay {pred.replay_id}", replay_id=pred.replay_id
            )

    gts = [(rid, r.gt_time_s) for rid, r in sorted(replays.items())]
    segments = {
        rid: make_segment_label(r.gt_time_s, manifest.get_half(r.game_id, r.half).duration_s, r.label)
        for rid, r in replays.items()
    }
    proposals: Dict[str, List[GlobalProposal]] = {}
    for pred in preds:
        try:
            proposals.setdefault(pred.replay_id, []).append(
                GlobalProposal(pred.replay_id, pred.time_s, pred.end_s, pred.confidence)
            )
        except DetectionException as e:
            raise EvaluationException(
                f"Prediction for {pred.replay_id} rank {pred.rank} has an empty segment",
                replay_id=pred.replay_id,
                cause=e
            )

    deltas = sorted(set(cfg.tight_deltas_s) | set(cfg.loose_deltas_s))
    per_delta = {f"{d:g}": 100.0 * spotting_ap(gts, preds, d) for d in deltas}
    report = MetricsReport(
        tight_avg_map=average_map(gts, preds, cfg.tight_deltas_s),
        loose_avg_map=average_map(gts, preds, cfg.loose_deltas_s),
        per_delta_map=per_delta,
        ar_at_1=ar_at_k(segments, proposals, 1, cfg.tiou_thresholds),
        ar_at_5=ar_at_k(segments, proposals, 5, cfg.tiou_thresholds),
        auc=auc_ar_an(segments, proposals, cfg),
        n_replays=len(replays),
    )
    if report_path is not None:
        report.save(report_path)

    logger.info(
        "evaluation_complete",
        replays=report.n_replays,
        predictions=len(preds),
        tight_avg_map=round(report.tight_avg_map, 4),
        ar_at_1=round(report.ar_at_1, 4)
    )
    return report

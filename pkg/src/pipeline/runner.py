"""
Stage orchestration for the replay grounding pipeline.

Each stage reads the outputs of earlier stages, writes its own artifacts
into an output directory and records `run_config.json` plus `stage.json`
(the resolved configuration and the SHA-256 of every input) beside them.
"""

import hashlib
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import orjson

from src.core.actionness import (
    ActionnessScorer,
    load_model,
    save_model,
    train_actionness,
)
from src.core.augmentation import augment_dataset
from src.core.conditioning import Mode, Sample, build_samples
from src.core.detection import ProposalScorer, SimilarityScorer, detect_window
from src.core.exceptions import ConfigException, StorageException
from src.core.postprocess import (
    GlobalProposal,
    OffsetPrior,
    apply_offset_prior,
    fit_offset_prior,
    group_by_replay,
    load_offset_prior,
    save_offset_prior,
    soft_nms,
    to_global,
    to_spots,
)
from src.dataset.features import PathLike
from src.dataset.manifest import Manifest, load_manifest
from src.dataset.predictions import SpotPrediction, write_predictions
from src.dataset.samples import INDEX_NAME, read_samples, write_samples
from src.dataset.synthetic import MANIFEST_NAME, generate_synthetic
from src.evaluation.metrics import evaluate
from src.evaluation.report import MetricsReport
from src.utils.config import RunConfig
from src.utils.logger import get_logger, get_performance_logger


RUN_CONFIG_NAME = "run_config.json"
STAGE_NAME = "stage.json"
SAMPLES_DIR = "samples"
MODEL_NAME = "model.json"
PRIOR_NAME = "offset_prior.json"
PREDICTIONS_NAME = "predictions.jsonl"
REPORT_NAME = "report.json"


def file_sha256(path: Path) -> str:
    """SHA-256 of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def manifest_inputs(manifest: Manifest, manifest_path: Path) -> Dict[str, Path]:
    """The manifest file and every feature file it references."""
    inputs = {MANIFEST_NAME: manifest_path}
    for _, half in manifest.iter_halves():
        for rel in half.streams.values():
            inputs[rel] = manifest.root / rel
    return inputs


@dataclass
class StageResult:
    """Outcome of one stage run."""

    stage: str
    out_dir: Path
    outputs: Dict[str, Path] = field(default_factory=dict)
    counts: Dict[str, float] = field(default_factory=dict)
    elapsed_s: float = 0.0


class ReplayGroundingPipeline:
    """Runs the pipeline stages under one resolved configuration.

    Stages are independent entry points so any of them can be re-run (or fed
    external files) on its own; identical inputs and configuration produce
    byte-identical outputs.
    """

    def __init__(self, config: RunConfig):
        """Initialize the pipeline.

        Args:
            config: Resolved run configuration
        """
        self.config = config
        self.logger = get_logger(__name__)
        self.perf = get_performance_logger(__name__)

    @property
    def streams(self) -> Optional[List[str]]:
        return list(self.config.streams) or None

    def _record_stage(self, stage: str, out_dir: Path, inputs: Dict[str, Path]) -> None:
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            self.config.save(out_dir / RUN_CONFIG_NAME)
            record = {
                "stage": stage,
                "config": self.config.to_dict(),
                "inputs": {name: file_sha256(path) for name, path in sorted(inputs.items())},
            }
            (out_dir / STAGE_NAME).write_bytes(
                orjson.dumps(record, option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS) + b"\n"
            )
        except OSError as e:
            raise StorageException(
                f"Cannot write run metadata in {out_dir}", path=str(out_dir), operation="write", cause=e
            )
        self.logger.info("stage_complete", stage=stage, out_dir=str(out_dir), elapsed_s=self._elapsed(stage))

    def _elapsed(self, stage: str) -> float:
        return round(self.perf.get_timings().get(stage, 0.0), 3)

    def gen(self, out_dir: PathLike) -> StageResult:
        """Generate a synthetic dataset."""
        out_dir = Path(out_dir)
        with self.perf.timed("gen"):
            manifest = generate_synthetic(self.config.synth, out_dir)
        self._record_stage("gen", out_dir, {})
        return StageResult(
            "gen",
            out_dir,
            outputs={"manifest": out_dir / MANIFEST_NAME},
            counts={"games": len(manifest.games), "replays": len(manifest.replays())},
            elapsed_s=self._elapsed("gen"),
        )

    def prepare(self, manifest_path: PathLike, out_dir: PathLike) -> StageResult:
        """Build training samples (real plus synthetic) and persist them."""
        manifest_path, out_dir = Path(manifest_path), Path(out_dir)
        manifest = load_manifest(manifest_path)

        with self.perf.timed("prepare"):
            samples = build_samples(manifest, self.config.window, Mode.TRAIN, self.streams)
            samples = augment_dataset(
                samples, manifest, self.config.window, self.config.augment, self.streams
            )

        sample_dir = out_dir / SAMPLES_DIR
        if (sample_dir / INDEX_NAME).exists():
            shutil.rmtree(sample_dir)
        index = write_samples(samples, sample_dir)
        self._record_stage("prepare", out_dir, manifest_inputs(manifest, manifest_path))

        n_synthetic = sum(1 for s in samples if s.is_synthetic)
        return StageResult(
            "prepare",
            out_dir,
            outputs={"index": index},
            counts={"samples": len(samples), "real": len(samples) - n_synthetic, "synthetic": n_synthetic},
            elapsed_s=self._elapsed("prepare"),
        )

    def train(
        self,
        sample_dir: PathLike,
        out_dir: PathLike,
        manifest_path: Optional[PathLike] = None
    ) -> StageResult:
        """Train the actionness head; also fit the offset prior when a manifest is given."""
        sample_dir, out_dir = Path(sample_dir), Path(out_dir)
        samples = read_samples(sample_dir)
        inputs = {f"{SAMPLES_DIR}/{INDEX_NAME}": sample_dir / INDEX_NAME}
        inputs.update({f"{SAMPLES_DIR}/{p.name}": p for p in sorted(sample_dir.glob("*.rgf"))})

        with self.perf.timed("train"):
            model = train_actionness(samples, self.config.training, self.config.seed)
        outputs = {"model": out_dir / MODEL_NAME}
        save_model(model, outputs["model"])

        if manifest_path is not None:
            manifest = load_manifest(manifest_path)
            inputs.update(manifest_inputs(manifest, Path(manifest_path)))
            outputs["prior"] = out_dir / PRIOR_NAME
            save_offset_prior(fit_offset_prior(manifest), outputs["prior"])

        self._record_stage("train", out_dir, inputs)
        return StageResult(
            "train",
            out_dir,
            outputs=outputs,
            counts={"final_loss": model.final_loss},
            elapsed_s=self._elapsed("train"),
        )

    def _scorer(self, model_path: Optional[PathLike]) -> ProposalScorer:
        if self.config.scorer == "similarity":
            return SimilarityScorer()
        if model_path is None:
            raise ConfigException(
                "The actionness scorer needs a trained model (--model)", config_key="scorer"
            )
        return ActionnessScorer(load_model(model_path))

    def detect_replay(
        self,
        samples: Sequence[Sample],
        scorer: ProposalScorer
    ) -> List[GlobalProposal]:
        """Pooled global proposals of one replay's windows (ordered by start)."""
        pooled = []
        last = len(samples) - 1
        for i, sample in enumerate(samples):
            proposals = detect_window(
                sample, scorer, self.config.anchors, open_left=i > 0, open_right=i < last
            )
            pooled.extend(to_global(p) for p in proposals)
        return pooled

    def detect(
        self,
        manifest_path: PathLike,
        out_dir: PathLike,
        model_path: Optional[PathLike] = None,
        prior_path: Optional[PathLike] = None
    ) -> StageResult:
        """Score test windows and write ranked spots per replay."""
        manifest_path, out_dir = Path(manifest_path), Path(out_dir)
        manifest = load_manifest(manifest_path)
        scorer = self._scorer(model_path)
        inputs = manifest_inputs(manifest, manifest_path)
        if model_path is not None and self.config.scorer == "actionness":
            inputs[MODEL_NAME] = Path(model_path)

        prior: Optional[OffsetPrior] = None
        if self.config.post.prior_weight > 0:
            if prior_path is None:
                raise ConfigException(
                    "post.prior_weight > 0 needs an offset prior (--prior)", config_key="post.prior_weight"
                )
            prior = load_offset_prior(prior_path)
            inputs[PRIOR_NAME] = Path(prior_path)

        with self.perf.timed("detect"):
            samples = build_samples(manifest, self.config.window, Mode.TEST, self.streams)
            by_replay: Dict[str, List[Sample]] = {}
            for sample in samples:
                by_replay.setdefault(sample.replay_id, []).append(sample)

            pooled: List[GlobalProposal] = []
            for replay_samples in by_replay.values():
                pooled.extend(self.detect_replay(replay_samples, scorer))
            proposals = group_by_replay(pooled)

            spots: List[SpotPrediction] = []
            for replay in manifest.replays():
                kept = soft_nms(proposals.get(replay.replay_id, []), self.config.post)
                if prior is not None:
                    kept = apply_offset_prior(kept, replay, prior, self.config.post.prior_weight)
                spots.extend(to_spots(kept, self.config.post, replay))

        spots.sort(key=lambda s: (s.replay_id, s.rank))
        predictions = out_dir / PREDICTIONS_NAME
        write_predictions(spots, predictions)
        self._record_stage("detect", out_dir, inputs)
        self.logger.info("detection_complete", replays=len(manifest.replays()), spots=len(spots))
        return StageResult(
            "detect",
            out_dir,
            outputs={"predictions": predictions},
            counts={"replays": len(manifest.replays()), "spots": len(spots)},
            elapsed_s=self._elapsed("detect"),
        )

    def evaluate(self, manifest_path: PathLike, predictions_path: PathLike, out_dir: PathLike) -> MetricsReport:
        """Score a predictions file and write the report."""
        manifest_path, predictions_path, out_dir = Path(manifest_path), Path(predictions_path), Path(out_dir)
        manifest = load_manifest(manifest_path)
        with self.perf.timed("eval"):
            report = evaluate(manifest, predictions_path, self.config.metrics, out_dir / REPORT_NAME)
        inputs = manifest_inputs(manifest, manifest_path)
        inputs[PREDICTIONS_NAME] = predictions_path
        self._record_stage("eval", out_dir, inputs)
        return report

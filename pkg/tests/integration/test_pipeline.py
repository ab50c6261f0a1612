"""
End-to-end pipeline runs on generated data.
"""

import orjson
import pytest

from src.core.exceptions import ConfigException
from src.core.postprocess import fit_offset_prior, group_by_replay, save_offset_prior
from src.dataset.manifest import load_manifest
from src.dataset.predictions import read_predictions
from src.dataset.samples import INDEX_NAME
from src.pipeline.runner import (
    PREDICTIONS_NAME,
    REPORT_NAME,
    RUN_CONFIG_NAME,
    STAGE_NAME,
    ReplayGroundingPipeline,
)
from src.utils.config import RunConfig

def _pipeline(**overrides):
    return ReplayGroundingPipeline(RunConfig.load(overrides=overrides))

def _run_similarity(pipeline, root):
    gen = pipeline.gen(root / "data")
    manifest = gen.outputs["manifest"]
    detect = pipeline.detect(manifest, root / "detect")
    report = pipeline.evaluate(manifest, detect.outputs["predictions"], root / "eval")
    return gen, detect, report

@pytest.mark.timeout(60)
class TestSyntheticRecovery:
    """Grounding quality of the similarity scorer on synthetic data."""

    def test_noiseless(self, tmp_path):
        """Test near-perfect recovery when replays copy their actions exactly."""
        pipeline = _pipeline(synth={"seed": 7, "noise_sigma": 0.0})
        gen, detect, report = _run_similarity(pipeline, tmp_path)

        assert gen.counts == {"games": 2, "replays": 12}
        assert report.n_replays == 12
        assert report.tight_avg_map >= 90.0
        assert report.ar_at_1 >= 90.0
        assert report.loose_avg_map >= report.tight_avg_map

    def test_noisy_with_distractors(self, tmp_path):
        """Test recovery survives replay noise and unreplayed actions."""
        pipeline = _pipeline(synth={"seed": 7, "noise_sigma": 0.5, "distractors_per_half": 2})
        _, _, report = _run_similarity(pipeline, tmp_path)
        assert report.tight_avg_map >= 60.0

class TestStages:
    """Stage outputs and their metadata."""

    def test_predictions_layout(self, tmp_path):
        """Test ranked spots per replay with at most top-M entries."""
        pipeline = _pipeline(synth={"seed": 7, "n_games": 1, "actions_per_half": 2, "duration_s": 300.0})
        gen, detect, _ = _run_similarity(pipeline, tmp_path)

        preds = read_predictions(detect.outputs["predictions"])
        by_replay = {}
        for p in preds:
            by_replay.setdefault(p.replay_id, []).append(p)
        assert [(p.replay_id, p.rank) for p in preds] == sorted((p.replay_id, p.rank) for p in preds)
        assert len(by_replay) == gen.counts["replays"]
        for spots in by_replay.values():
            assert [s.rank for s in spots] == list(range(1, len(spots) + 1))
            assert len(spots) <= 10
            confidences = [s.confidence for s in spots]
            assert confidences == sorted(confidences, reverse=True)
            assert all(s.time_s < s.end_s for s in spots)

    def test_stage_metadata(self, tmp_path):
        """Test every stage records its config and input hashes."""
        pipeline = _pipeline(synth={"seed": 1, "n_games": 1, "actions_per_half": 2, "duration_s": 300.0})
        _run_similarity(pipeline, tmp_path)

        for stage in ("data", "detect", "eval"):
            assert (tmp_path / stage / RUN_CONFIG_NAME).exists()
        record = orjson.loads((tmp_path / "detect" / STAGE_NAME).read_bytes())
        assert record["stage"] == "detect"
        assert "manifest.json" in record["inputs"]
        assert all(len(digest) == 64 for digest in record["inputs"].values())
        assert (tmp_path / "eval" / REPORT_NAME).exists()

    def test_stage_timings(self, tmp_path, mocker):
        """Test stages report their elapsed time and log it on completion."""
        pipeline = _pipeline(synth={"seed": 1, "n_games": 1, "actions_per_half": 2, "duration_s": 300.0})
        pipeline.logger = mocker.Mock()
        gen, detect, _ = _run_similarity(pipeline, tmp_path)

        assert gen.elapsed_s >= 0.0 and detect.elapsed_s >= 0.0
        completed = [c.kwargs for c in pipeline.logger.info.call_args_list if c.args == ("stage_complete",)]
        assert [c["stage"] for c in completed] == ["gen", "detect", "eval"]
        assert all(c["elapsed_s"] >= 0.0 for c in completed)
        assert "elapsed_s" not in orjson.loads((tmp_path / "detect" / STAGE_NAME).read_bytes())

    def test_detect_groups_proposals_per_replay(self, tmp_path, mocker):
        """Test window proposals are pooled per replay before suppression."""
        pipeline = _pipeline(synth={"seed": 1, "n_games": 1, "actions_per_half": 2, "duration_s": 300.0})
        grouped = mocker.patch("src.pipeline.runner.group_by_replay", wraps=group_by_replay)
        gen, detect, _ = _run_similarity(pipeline, tmp_path)

        grouped.assert_called_once()
        replay_ids = {p.replay_id for p in grouped.call_args.args[0]}
        assert replay_ids == {r.replay_id for r in load_manifest(gen.outputs["manifest"]).replays()}

    def test_deterministic(self, tmp_path):
        """Test identical configuration reproduces every artifact byte for byte."""
        overrides = {"synth": {"seed": 2, "n_games": 1, "actions_per_half": 2, "duration_s": 300.0}}
        _run_similarity(_pipeline(**overrides), tmp_path / "a")
        _run_similarity(_pipeline(**overrides), tmp_path / "b")

        for rel in ("data/manifest.json", f"detect/{PREDICTIONS_NAME}", f"detect/{STAGE_NAME}",
                    f"eval/{REPORT_NAME}"):
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes(), rel

    def test_actionness_chain(self, tmp_path):
        """Test prepare, train and detect with the learned scorer."""
        pipeline = _pipeline(
            scorer="actionness",
            synth={"seed": 3, "n_games": 1, "actions_per_half": 2, "duration_s": 300.0, "dim": 8},
            training={"epochs": 3, "hidden": 8, "batch_size": 128},
        )
        gen = pipeline.gen(tmp_path / "data")
        manifest = gen.outputs["manifest"]

        prepared = pipeline.prepare(manifest, tmp_path / "prep")
        assert (tmp_path / "prep" / "samples" / INDEX_NAME).exists()
        assert prepared.counts["synthetic"] == prepared.counts["real"]

        trained = pipeline.train(tmp_path / "prep" / "samples", tmp_path / "model", manifest)
        assert trained.counts["final_loss"] > 0
        assert trained.outputs["prior"].exists()

        detect = pipeline.detect(manifest, tmp_path / "detect", trained.outputs["model"])
        report = pipeline.evaluate(manifest, detect.outputs["predictions"], tmp_path / "eval")
        assert 0.0 <= report.tight_avg_map <= 100.0
        assert 0.0 <= report.auc <= 100.0

    def test_prior_blending(self, tmp_path):
        """Test detection with the offset prior enabled."""
        pipeline = _pipeline(
            synth={"seed": 3, "n_games": 1, "actions_per_half": 2, "duration_s": 300.0},
            post={"prior_weight": 0.5},
        )
        gen = pipeline.gen(tmp_path / "data")
        manifest = gen.outputs["manifest"]

        with pytest.raises(ConfigException):
            pipeline.detect(manifest, tmp_path / "detect")

        trained_prior = tmp_path / "prior.json"
        save_offset_prior(fit_offset_prior(load_manifest(manifest)), trained_prior)

        detect = pipeline.detect(manifest, tmp_path / "detect", prior_path=trained_prior)
        assert detect.counts["replays"] == 4

    def test_actionness_needs_model(self, tmp_path):
        """Test the learned scorer refuses to run without a model."""
        pipeline = _pipeline(
            scorer="actionness", synth={"seed": 3, "n_games": 1, "actions_per_half": 2, "duration_s": 300.0}
        )
        gen = pipeline.gen(tmp_path / "data")
        with pytest.raises(ConfigException):
            pipeline.detect(gen.outputs["manifest"], tmp_path / "detect")

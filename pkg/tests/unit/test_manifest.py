"""
Tests for manifest loading and validation.
"""

import numpy as np
import orjson
import pytest

from src.core.exceptions import ManifestException, StorageException
from src.dataset.features import write_matrix
from src.dataset.manifest import ReplayEvent, dump_manifest, load_manifest, save_manifest


def _write_dataset(root, replays, frames=(40, 40), fps=4.0):
    root.mkdir(parents=True, exist_ok=True)
    write_matrix(np.zeros((frames[0], 2)), fps, root / "g1" / "a.rgf")
    write_matrix(np.zeros((frames[1], 3)), fps, root / "g1" / "b.rgf")
    data = {
        "version": 1,
        "games": [{
            "id": "g1",
            "halves": [{
                "half": 1,
                "duration_s": frames[0] / fps,
                "streams": {"6s": "g1/a.rgf", "3s_style1": "g1/b.rgf"},
                "replays": replays,
            }],
        }],
    }
    path = root / "manifest.json"
    path.write_bytes(orjson.dumps(data))
    return path


def _replay(replay_id="r1", start=8.0, end=9.0, gt=2.0, half=1, game="g1"):
    return {
        "replay_id": replay_id,
        "game_id": game,
        "half": half,
        "replay_start_s": start,
        "replay_end_s": end,
        "gt_time_s": gt,
    }


class TestReplayEvent:
    """Test suite for replay event validation."""

    def test_gt_must_precede_replay(self):
        """Test gt_time_s >= replay_start_s is rejected."""
        with pytest.raises(ValueError):
            ReplayEvent(replay_id="r", game_id="g", half=1, replay_start_s=5.0, replay_end_s=6.0, gt_time_s=5.0)

    def test_empty_span_rejected(self):
        """Test replay_end_s <= replay_start_s is rejected."""
        with pytest.raises(ValueError):
            ReplayEvent(replay_id="r", game_id="g", half=1, replay_start_s=5.0, replay_end_s=5.0)

    def test_gt_optional(self):
        """Test ground truth may be absent."""
        event = ReplayEvent(replay_id="r", game_id="g", half=1, replay_start_s=5.0, replay_end_s=6.0)
        assert event.gt_time_s is None

    def test_half_is_one_or_two(self):
        """Test only the two halves of a game are accepted."""
        for half in (0, 3):
            with pytest.raises(ValueError):
                ReplayEvent(replay_id="r", game_id="g", half=half, replay_start_s=5.0, replay_end_s=6.0)
        assert ReplayEvent(replay_id="r", game_id="g", half=2, replay_start_s=5.0, replay_end_s=6.0).half == 2


class TestLoadManifest:
    """Test suite for manifest files."""

    def test_load_valid(self, tmp_path):
        """Test a valid manifest loads and resolves tracks."""
        path = _write_dataset(tmp_path, [_replay()])
        manifest = load_manifest(path)

        assert [r.replay_id for r in manifest.replays()] == ["r1"]
        assert manifest.stream_names("g1", 1) == ["6s", "3s_style1"]
        tracks = manifest.load_tracks("g1", 1)
        assert [t.dim for t in tracks] == [2, 3]
        assert manifest.load_tracks("g1", 1, ["3s_style1"])[0].dim == 3

    def test_missing_file_names_half(self, tmp_path):
        """Test a missing feature file is reported."""
        path = _write_dataset(tmp_path, [_replay()])
        (tmp_path / "g1" / "b.rgf").unlink()
        with pytest.raises(ManifestException) as exc:
            load_manifest(path)
        assert exc.value.details["record"] == "g1/half1"

    def test_stream_length_mismatch(self, tmp_path):
        """Test streams of one half must have equal length."""
        path = _write_dataset(tmp_path, [_replay()], frames=(40, 41))
        with pytest.raises(ManifestException, match="length mismatch"):
            load_manifest(path)

    def test_replay_outside_half(self, tmp_path):
        """Test a replay running past the half is rejected."""
        path = _write_dataset(tmp_path, [_replay(start=9.0, end=11.0)])
        with pytest.raises(ManifestException) as exc:
            load_manifest(path)
        assert exc.value.details["record"] == "r1"

    def test_duplicate_replay_ids(self, tmp_path):
        """Test replay ids are unique."""
        path = _write_dataset(tmp_path, [_replay(), _replay(start=6.0, end=7.0)])
        with pytest.raises(ManifestException, match="duplicate"):
            load_manifest(path)

    def test_schema_violation_names_record(self, tmp_path):
        """Test a schema error names the offending location."""
        path = _write_dataset(tmp_path, [_replay(gt=9.5)])
        with pytest.raises(ManifestException) as exc:
            load_manifest(path)
        assert "replays" in exc.value.details["record"]

    def test_third_half_rejected(self, tmp_path):
        """Test a half numbered 3 is a schema violation."""
        path = _write_dataset(tmp_path, [_replay(half=3)])
        with pytest.raises(ManifestException) as exc:
            load_manifest(path)
        assert "half" in exc.value.details["record"]

    def test_unknown_version(self, tmp_path):
        """Test a manifest of another format version is rejected."""
        path = _write_dataset(tmp_path, [_replay()])
        data = orjson.loads(path.read_bytes())
        data["version"] = 2
        path.write_bytes(orjson.dumps(data))
        with pytest.raises(ManifestException, match="version"):
            load_manifest(path)


    def test_invalid_json(self, tmp_path):
        """Test non-JSON content is rejected."""
        path = tmp_path / "manifest.json"
        path.write_text("{not json")
        with pytest.raises(ManifestException):
            load_manifest(path)

    def test_dump_is_stable(self, tmp_path):
        """Test serialization is byte-stable across loads."""
        path = _write_dataset(tmp_path, [_replay()])
        first = dump_manifest(load_manifest(path))
        (tmp_path / "again.json").write_bytes(first)
        assert dump_manifest(load_manifest(tmp_path / "again.json")) == first

    def test_save_manifest(self, tmp_path):
        """Test a saved manifest reloads to the same content."""
        manifest = load_manifest(_write_dataset(tmp_path, [_replay()]))
        save_manifest(manifest, tmp_path / "saved.json")
        assert dump_manifest(load_manifest(tmp_path / "saved.json")) == dump_manifest(manifest)

    def test_save_to_directory_fails(self, tmp_path):
        """Test an unwritable target is a storage error."""
        manifest = load_manifest(_write_dataset(tmp_path, [_replay()]))
        with pytest.raises(StorageException):
            save_manifest(manifest, tmp_path)

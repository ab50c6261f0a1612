"""
Tests for proposal scoring, generation and refinement.
"""

import numpy as np
import pytest

from src.core.detection import (
    Proposal,
    SimilarityScorer,
    anchor_grid,
    detect_window,
    generate_proposals,
    refine_boundaries,
    similarity_score,
    span_contrast,
)
from src.core.exceptions import DetectionException
from src.core.labeling import FrameSpan
from src.utils.config import AnchorConfig


def _step(n=100, lo=20, hi=32, inside=1.0, outside=0.0):
    scores = np.full(n, outside)
    scores[lo:hi] = inside
    return scores


def _two_level_frames(n, lo, hi):
    """Rows [lo, hi) equal the replay mean [1, 0]; the rest are orthogonal to it."""
    frames = np.tile([0.0, 1.0], (n, 1))
    frames[lo:hi] = [1.0, 0.0]
    return frames


class TestSimilarity:
    """Test suite for similarity scoring."""

    def test_similarity_score(self, make_sample):
        """Test cosine of the span mean against the replay mean."""
        sample = make_sample(_two_level_frames(100, 40, 52), [1.0, 0.0])
        assert similarity_score(sample, FrameSpan(40, 52)) == pytest.approx(1.0)
        assert similarity_score(sample, FrameSpan(0, 10)) == pytest.approx(0.0)
        assert similarity_score(sample, FrameSpan(36, 44)) == pytest.approx(np.sqrt(0.5))

    def test_fractional_span_uses_whole_rows(self, make_sample):
        """Test only rows fully inside the span are pooled."""
        sample = make_sample(_two_level_frames(100, 40, 52), [1.0, 0.0])
        assert similarity_score(sample, FrameSpan(39.5, 52.5)) == pytest.approx(1.0)

    def test_zero_vector(self, make_sample):
        """Test a zero mean frame scores 0."""
        sample = make_sample(np.zeros((10, 2)), [1.0, 0.0])
        assert similarity_score(sample, FrameSpan(0, 5, n_frames=10)) == 0.0

    def test_empty_span(self, make_sample):
        """Test a span covering no whole row is rejected."""
        sample = make_sample(np.ones((10, 2)), [1.0, 0.0])
        with pytest.raises(DetectionException):
            similarity_score(sample, FrameSpan(2.2, 2.8, n_frames=10))

    def test_frame_scores(self, make_sample):
        """Test per-frame scores map cosine to [0, 1]."""
        frames = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, 0.0]])
        scores = SimilarityScorer().frame_scores(make_sample(frames, [2.0, 0.0]))
        np.testing.assert_allclose(scores, [1.0, 0.5, 0.0, 0.5])

    def test_frame_scores_match_single_row_spans(self, make_sample, rng):
        """Test each frame score is the similarity of its one-row span."""
        sample = make_sample(rng.standard_normal((30, 4)), rng.standard_normal(4))
        scores = SimilarityScorer().frame_scores(sample)
        expected = [(1.0 + similarity_score(sample, FrameSpan(i, i + 1, n_frames=30))) / 2.0 for i in range(30)]
        np.testing.assert_allclose(scores, expected, rtol=0, atol=1e-12)


class TestGenerateProposals:
    """Test suite for anchor ranking."""

    def test_anchor_grid(self):
        """Test anchors never run past the window."""
        grid = anchor_grid(AnchorConfig(durations_f=[2, 4], start_stride_f=3), 10)
        assert grid == [(0, 2), (0, 4), (3, 5), (3, 7), (6, 8), (6, 10)]

    def test_step_contrast(self):
        """Test an isolated block has contrast 1 against zero flanks."""
        assert span_contrast(_step(), 20, 32) == 1.0
        assert span_contrast(_step(), 18, 30) == pytest.approx(10 / 12 - 2 / 6)

    def test_top_proposal_is_the_block(self):
        """Test the exact block ranks first."""
        anchors = AnchorConfig(durations_f=[12], start_stride_f=2, K=5)
        proposals = generate_proposals(_step(), anchors)
        assert len(proposals) == 5
        assert (proposals[0].start_f, proposals[0].end_f) == (20.0, 32.0)
        assert proposals[0].score == 1.0
        contrasts = [p.contrast for p in proposals]
        assert contrasts == sorted(contrasts, reverse=True)

    def test_constant_scores(self):
        """Test constant scores give zero contrast and ties ordered by start, duration."""
        anchors = AnchorConfig(durations_f=[4, 8], start_stride_f=2, K=3)
        proposals = generate_proposals(np.full(20, 0.5), anchors)
        assert [p.contrast for p in proposals] == [0.0, 0.0, 0.0]
        assert [(p.start_f, p.end_f) for p in proposals] == [(0.0, 4.0), (0.0, 8.0), (2.0, 6.0)]

    def test_shift_invariance(self, rng):
        """Test adding a constant to every score leaves contrasts unchanged."""
        scores = rng.integers(0, 8, size=100) / 8.0
        anchors = AnchorConfig(K=50)
        a = generate_proposals(scores, anchors)
        b = generate_proposals(scores + 0.25, anchors)
        assert [(p.start_f, p.end_f, p.contrast) for p in a] == [(p.start_f, p.end_f, p.contrast) for p in b]

    def test_scores_clipped(self):
        """Test negative contrasts score 0."""
        proposals = generate_proposals(1.0 - _step(), AnchorConfig(durations_f=[12], K=200))
        assert min(p.contrast for p in proposals) < 0
        assert all(0.0 <= p.score <= 1.0 for p in proposals)

    def test_span_scorer(self):
        """Test a span scorer ranks like the equivalent score vector."""
        scores = _step()
        anchors = AnchorConfig(durations_f=[12], K=3)
        proposals = generate_proposals(lambda lo, hi: float(scores[lo:hi].mean()), anchors, n_frames=100)
        assert (proposals[0].start_f, proposals[0].end_f) == (20.0, 32.0)
        assert proposals[0].contrast == pytest.approx(1.0)

    def test_span_scorer_needs_length(self):
        """Test n_frames is required with a span scorer."""
        with pytest.raises(DetectionException):
            generate_proposals(lambda lo, hi: 0.0, AnchorConfig())

    def test_proposal_bounds(self):
        """Test proposals must lie inside the window."""
        with pytest.raises(DetectionException):
            Proposal(90.0, 101.0, 0.5, 0.5, 100)


class TestRefineBoundaries:
    """Test suite for boundary refinement."""

    def test_snaps_to_edges(self):
        """Test both boundaries move onto the block edges."""
        proposal = Proposal(18.0, 34.0, 0.0, 0.0, 100)
        refined = refine_boundaries(proposal, _step(), radius_f=4)
        assert (refined.start_f, refined.end_f) == (20.0, 32.0)
        assert refined.contrast == 1.0
        assert refined.score == 1.0

    def test_out_of_radius(self):
        """Test edges beyond the radius are not reached."""
        proposal = Proposal(10.0, 40.0, 0.0, 0.0, 100)
        refined = refine_boundaries(proposal, _step(), radius_f=4)
        assert (refined.start_f, refined.end_f) == (10.0, 40.0)

    def test_zero_radius(self):
        """Test radius 0 disables refinement."""
        proposal = Proposal(18.0, 34.0, 0.0, 0.0, 100)
        assert refine_boundaries(proposal, _step(), radius_f=0) is proposal

    def test_flat_scores_keep_original(self):
        """Test ties keep the original boundaries."""
        proposal = Proposal(10.0, 30.0, 0.0, 0.0, 100)
        assert refine_boundaries(proposal, np.full(100, 0.3), radius_f=4) is proposal

    def test_sub_frame_edge(self):
        """Test a boundary on a ramp lands at its half-height crossing."""
        scores = _step()
        scores[20] = 0.25
        refined = refine_boundaries(Proposal(18.0, 34.0, 0.0, 0.0, 100), scores, radius_f=4)
        assert refined.start_f == pytest.approx(20.5 + 0.25 / 0.75)
        assert refined.end_f == 32.0
        assert refined.contrast == pytest.approx(span_contrast(scores, 21, 32))

    def test_sub_frame_edge_both_sides(self):
        """Test a symmetric ramp gives symmetric fractional boundaries."""
        scores = _step()
        scores[20] = scores[31] = 0.5
        refined = refine_boundaries(Proposal(18.0, 34.0, 0.0, 0.0, 100), scores, radius_f=4)
        assert refined.start_f == pytest.approx(20.5)
        assert refined.end_f == pytest.approx(31.5)


class TestDetectWindow:
    """Test suite for per-window detection."""

    def test_finds_the_replayed_block(self, make_sample):
        """Test the best proposal matches the rows equal to the replay mean."""
        sample = make_sample(_two_level_frames(100, 40, 52), [1.0, 0.0], replay_id="r7", window_start_s=8.0)
        proposals = detect_window(sample, SimilarityScorer(), AnchorConfig(durations_f=[12, 19], K=10))

        best = proposals[0]
        assert (best.start_f, best.end_f) == (40.0, 52.0)
        assert best.score == pytest.approx(0.5)
        assert best.origin.replay_id == "r7"
        assert best.origin.window_start_s == 8.0

    def test_open_left_drops_edge_anchors(self, make_sample):
        """Test anchors flush with an interior left edge are dropped."""
        sample = make_sample(_two_level_frames(100, 0, 12), [1.0, 0.0])
        anchors = AnchorConfig(durations_f=[12], K=10)

        closed = detect_window(sample, SimilarityScorer(), anchors)
        assert (closed[0].start_f, closed[0].end_f) == (0.0, 12.0)

        opened = detect_window(sample, SimilarityScorer(), anchors, open_left=True)
        assert all(p.start_f > 0 for p in opened)

    def test_open_right_drops_edge_anchors(self, make_sample):
        """Test anchors flush with an interior right edge are dropped."""
        sample = make_sample(_two_level_frames(100, 88, 100), [1.0, 0.0])
        anchors = AnchorConfig(durations_f=[12], K=10)
        opened = detect_window(sample, SimilarityScorer(), anchors, open_right=True)
        assert all(p.end_f < 100 for p in opened)

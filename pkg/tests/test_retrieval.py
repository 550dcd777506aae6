"""Destination retrieval: scoring, search equivalence, candidate assembly."""

from __future__ import annotations

import numpy as np
import pytest

import crowdcast as cc
from crowdcast.retrieval import (
    LINEAR_PROVENANCE,
    Candidate,
    QueryPose,
    candidate_destinations,
    linear_continuation,
    query_pose,
    query_similar,
    sample_score,
    scan_similar,
)

from conftest import STEP, line_track


def _db_from_lines(cfg, lines):
    """lines: (agent_id, first_frame, n, start, velocity) tuples."""
    tracks = [line_track(*line) for line in lines]
    return cc.build_database(tracks, cfg)


class TestSampleScore:
    def _sample(self, pos, direction):
        return cc.core.DatabaseSample("s", 5, 4, np.asarray(pos, float),
                                      np.asarray(direction, float),
                                      np.zeros(2))

    def test_distance_and_direction_terms(self, cfg):
        pose = QueryPose("q", np.zeros(2), np.array([1.0, 0.0]))
        assert sample_score(pose, self._sample((5.0, 0.0), (2.0, 0.0)), cfg) \
            == pytest.approx(0.5)
        score = sample_score(pose, self._sample((5.0, 0.0), (0.0, 1.0)), cfg)
        assert score == pytest.approx(0.5 + 1.0)

    def test_opposing_sample_excluded(self, cfg):
        pose = QueryPose("q", np.zeros(2), np.array([1.0, 0.0]))
        assert sample_score(pose, self._sample((1.0, 0.0), (-1.0, 0.1)), cfg) \
            is None

    def test_stationary_query_keeps_all(self, cfg):
        pose = QueryPose("q", np.zeros(2), np.zeros(2))
        score = sample_score(pose, self._sample((5.0, 0.0), (-1.0, 0.0)), cfg)
        assert score == pytest.approx(0.5)

    def test_direction_weight_config(self):
        cfg = cc.Config(direction_weight=2.0)
        pose = QueryPose("q", np.zeros(2), np.array([1.0, 0.0]))
        score = sample_score(pose, self._sample((0.0, 0.0), (0.0, 1.0)), cfg)
        assert score == pytest.approx(2.0)


class TestQuerySimilar:
    def test_one_best_sample_per_agent(self, cfg):
        db = _db_from_lines(cfg, [
            ("near", 0, 20, (1.0, 0.0), (1.0, 0.0)),
            ("far", 0, 20, (50.0, 0.0), (1.0, 0.0)),
        ])
        pose = QueryPose("q", np.array([2.0, 0.0]), np.array([1.0, 0.0]))
        hits = query_similar(db, pose, cfg, k=5)
        assert [s.agent_id for _, s in hits] == ["near", "far"]

    def test_self_and_exclusions_dropped(self, cfg):
        db = _db_from_lines(cfg, [
            ("q", 0, 10, (0.0, 0.0), (1.0, 0.0)),
            ("mate", 0, 10, (0.0, 0.5), (1.0, 0.0)),
            ("other", 0, 10, (0.0, 1.0), (1.0, 0.0)),
        ])
        pose = QueryPose("q", np.zeros(2), np.array([1.0, 0.0]))
        hits = query_similar(db, pose, cfg, k=5, exclude=("mate",))
        assert [s.agent_id for _, s in hits] == ["other"]

    def test_tie_broken_by_natural_id(self, cfg):
        db = _db_from_lines(cfg, [
            ("10", 0, 10, (0.0, 2.0), (1.0, 0.0)),
            ("9", 0, 10, (0.0, -2.0), (1.0, 0.0)),
        ])
        pose = QueryPose("q", np.array([9 * STEP, 0.0]), np.array([1.0, 0.0]))
        hits = query_similar(db, pose, cfg, k=2)
        assert [s.agent_id for _, s in hits] == ["9", "10"]
        assert hits[0][0] == hits[1][0]

    def test_matches_scan_with_against_flow_samples(self, cfg):
        rng = np.random.default_rng(21)
        lines = [(f"t{i}", 0, int(rng.integers(3, 25)),
                  rng.uniform(-20, 20, 2), rng.uniform(-1.5, 1.5, 2))
                 for i in range(40)]
        db = _db_from_lines(cfg, lines)
        for _ in range(10):
            pose = QueryPose("q", rng.uniform(-20, 20, 2),
                             rng.uniform(-1.5, 1.5, 2))
            fast = query_similar(db, pose, cfg)
            slow = scan_similar(db, pose, cfg)
            assert [(s.agent_id, s.step) for _, s in fast] \
                == [(s.agent_id, s.step) for _, s in slow]

    def test_empty_database(self, cfg):
        db = cc.build_database([], cfg)
        pose = QueryPose("q", np.zeros(2), np.array([1.0, 0.0]))
        assert query_similar(db, pose, cfg) == []


class TestLinearContinuation:
    def test_constant_velocity_track(self, cfg):
        tr = line_track("a", 0, 10, (0.0, 0.0), (1.0, 0.0))
        dest = linear_continuation(tr, cfg)
        expected_x = tr.positions[-1, 0] \
            + cfg.predict_time_steps * cfg.step_duration
        assert np.allclose(dest, [expected_x, 0.0], atol=1e-9)

    def test_stationary_track_stays(self, cfg):
        tr = line_track("a", 0, 10, (2.0, 3.0), (0.0, 0.0))
        assert np.allclose(linear_continuation(tr, cfg), [2.0, 3.0])


class TestCandidateDestinations:
    def test_k_plus_one_with_linear_last(self, cfg):
        lines = [(f"h{i}", 0, 15, (0.0, 2.0 * i), (1.0, 0.0))
                 for i in range(8)]
        db = _db_from_lines(cfg, lines)
        traj = line_track("subject", 0, 15, (0.5, 0.1), (1.0, 0.0))
        cands = candidate_destinations(db, traj, cfg)
        assert len(cands) == cfg.k_candidates + 1
        assert cands[-1].provenance == LINEAR_PROVENANCE
        assert cands[-1].score is None
        assert all(c.provenance.startswith("db:") for c in cands[:-1])
        scores = [c.score for c in cands[:-1]]
        assert scores == sorted(scores)

    def test_small_database_gives_fewer(self, cfg):
        db = _db_from_lines(cfg, [("h0", 0, 15, (0.0, 0.0), (1.0, 0.0))])
        traj = line_track("subject", 0, 15, (0.5, 0.1), (1.0, 0.0))
        cands = candidate_destinations(db, traj, cfg)
        assert len(cands) == 2
        assert cands[-1].provenance == LINEAR_PROVENANCE

    def test_query_pose_uses_final_state(self):
        tr = line_track("a", 0, 5, (0.0, 0.0), (2.0, 0.0))
        pose = query_pose(tr)
        assert np.array_equal(pose.pos, tr.positions[-1])
        assert pose.direction[0] > 0 and abs(pose.direction[1]) < 1e-12

"""Force integrator and member reconstruction."""

from __future__ import annotations

import numpy as np
import pytest

import crowdcast as cc
from crowdcast.core import DataError
from crowdcast.dynamics import (
    ForceParams,
    GroupInit,
    ReconstructionPolicy,
    constant_velocity_baseline,
    make_sim_state,
    predict_group_trajectory,
    reconstruct_members,
    step,
)

from conftest import STEP, line_track


@pytest.fixture
def params(cfg):
    return ForceParams.from_config(cfg)


@pytest.fixture
def scene():
    return cc.SceneGeometry.empty()


class TestForceParams:
    def test_from_config_copies_person_constants(self, cfg, params):
        assert params.mass == cfg.person_mass
        assert params.radius == cfg.person_radius
        assert params.neighborhood_range == cfg.neighborhood_range

    def test_validation(self):
        with pytest.raises(ValueError):
            ForceParams(relaxation_time=0.0)
        with pytest.raises(ValueError):
            ForceParams(substeps=0)
        with pytest.raises(ValueError):
            ForceParams(repulsion_range=-1.0)

    def test_speed_cap_floored(self, params):
        assert params.max_speed_for(0.0) == pytest.approx(0.6)
        assert params.max_speed_for(1.5) == pytest.approx(3.0)


class TestStep:
    def test_straight_line_progress(self, cfg, params, scene):
        state = make_sim_state([[0.0, 0.0]], [[1.0, 0.0]], [[10.0, 0.0]],
                               [1.0], params)
        state = step(state, scene, params, cfg.step_duration)
        assert state.positions[0, 0] == pytest.approx(cfg.step_duration, rel=1e-6)
        assert state.positions[0, 1] == 0.0

    def test_no_overshoot_near_destination(self, cfg, params, scene):
        state = make_sim_state([[0.0, 0.0]], [[2.0, 0.0]], [[0.5, 0.0]],
                               [2.0], params)
        for _ in range(10):
            state = step(state, scene, params, cfg.step_duration)
            assert state.positions[0, 0] <= 0.5 + params.radius + 1e-9

    def test_arrived_group_is_frozen(self, cfg, params, scene):
        state = make_sim_state([[5.0, 5.0]], [[1.0, 1.0]], [[5.1, 5.0]],
                               [1.0], params)
        assert state.arrived[0]
        before = state.positions.copy()
        state = step(state, scene, params, cfg.step_duration)
        assert np.array_equal(state.positions, before)
        assert np.all(state.velocities[0] == 0.0)

    def test_coincident_pair_separates(self, cfg, params, scene):
        state = make_sim_state([[1.0, 1.0], [1.0, 1.0]],
                               [[0.0, 0.0], [0.0, 0.0]],
                               [[5.0, 1.0], [-3.0, 1.0]],
                               [1.0, 1.0], params)
        state = step(state, scene, params, cfg.step_duration)
        assert np.all(np.isfinite(state.positions))
        assert state.positions[0, 0] != state.positions[1, 0]

    def test_bad_dt_rejected(self, params, scene):
        state = make_sim_state([[0.0, 0.0]], [[0.0, 0.0]], [[1.0, 0.0]],
                               [1.0], params)
        with pytest.raises(ValueError):
            step(state, scene, params, 0.0)

    def test_mismatched_arrays_rejected(self, params):
        with pytest.raises(DataError):
            make_sim_state([[0.0, 0.0]], [[0.0, 0.0]], [[1.0, 0.0]],
                           [1.0, 2.0], params)


class TestPredictGroupTrajectory:
    def test_rotation_equivariance(self, cfg, params):
        scene = cc.parse_scene("seg 2 -4 2 4")
        others = [GroupInit(np.array([6.0, 1.0]), np.array([-2.0, 1.0]), 0.9)]
        base = predict_group_trajectory((0.0, 0.2), (6.0, 0.0), 1.1, scene,
                                        others, 20, params, cfg)
        c, s = np.cos(np.pi / 2), np.sin(np.pi / 2)
        rot = np.array([[c, -s], [s, c]])
        scene_r = cc.SceneGeometry(
            segments=(np.array([[2.0, -4.0], [2.0, 4.0]]) @ rot.T,),
            polygons=(), bounds=np.array([[-20.0, -20.0], [20.0, 20.0]]))
        others_r = [GroupInit(rot @ np.array([6.0, 1.0]),
                              rot @ np.array([-2.0, 1.0]), 0.9)]
        rotated = predict_group_trajectory(rot @ np.array([0.0, 0.2]),
                                           rot @ np.array([6.0, 0.0]), 1.1,
                                           scene_r, others_r, 20, params, cfg)
        assert np.max(np.abs(rotated.positions - base.positions @ rot.T)) < 1e-6

    def test_zero_speed_uses_floor(self, cfg, params, scene):
        traj = predict_group_trajectory((0.0, 0.0), (5.0, 0.0), 0.0, scene,
                                        [], 10, params, cfg)
        assert traj.positions[-1, 0] >= 0.2

    def test_start_frame_controls_grid(self, cfg, params, scene):
        traj = predict_group_trajectory((0.0, 0.0), (5.0, 0.0), 1.0, scene,
                                        [], 5, params, cfg, start_frame=100)
        assert list(traj.frames) == [101, 102, 103, 104, 105]
        assert traj.times[0] == pytest.approx(101 * cfg.step_duration)

    def test_bad_steps_rejected(self, cfg, params, scene):
        with pytest.raises(ValueError):
            predict_group_trajectory((0.0, 0.0), (1.0, 0.0), 1.0, scene, [],
                                     0, params, cfg)

    def test_substep_free_integration_still_arrives(self, cfg, scene):
        coarse = ForceParams.from_config(cfg, substeps=1)
        traj = predict_group_trajectory((0.0, 0.0), (6.0, 0.0), 1.0, scene,
                                        [], 30, coarse, cfg)
        assert np.linalg.norm(traj.positions[-1] - [6.0, 0.0]) <= 0.5


class TestReconstruction:
    def _center(self, n=8):
        frames = np.arange(50, 50 + n)
        pos = np.column_stack([np.linspace(0, 3, n), np.zeros(n)])
        return cc.Trajectory.from_frame_grid("group[a,b]", frames, pos, STEP)

    def test_constant_deviation_hand_case(self):
        group = self._center()
        offsets = {"a": np.zeros(2), "b": np.array([0.0, 0.4])}
        residuals = {"a": np.tile([0.2, 0.0], (4, 1)),
                     "b": np.zeros((4, 2))}
        policy = ReconstructionPolicy("rigid", residuals)
        out = reconstruct_members(group, offsets, 0.5, policy)
        assert np.allclose(out["a"].positions,
                           group.positions + [0.1, 0.0], atol=1e-12)
        assert np.allclose(out["b"].positions,
                           group.positions + [0.0, 0.4], atol=1e-12)

    def test_residual_pattern_tiles(self):
        group = self._center(5)
        pattern = np.array([[0.1, 0.0], [-0.1, 0.0]])
        policy = ReconstructionPolicy("rigid", {"a": pattern})
        out = reconstruct_members(group, {"a": np.zeros(2)}, 0.0 + 0.5, policy)
        dev = out["a"].positions - group.positions
        assert np.allclose(dev[:, 0], [0.05, -0.05, 0.05, -0.05, 0.05])

    def test_emotion_bounds_enforced(self):
        group = self._center()
        policy = ReconstructionPolicy("rigid", {"a": np.zeros((2, 2))})
        for bad in (0.0, -0.2, 1.2):
            with pytest.raises(DataError):
                reconstruct_members(group, {"a": np.zeros(2)}, bad, policy)

    def test_member_mismatch_rejected(self):
        group = self._center()
        policy = ReconstructionPolicy("rigid", {"a": np.zeros((2, 2))})
        with pytest.raises(DataError):
            reconstruct_members(group, {"a": np.zeros(2), "b": np.zeros(2)},
                                0.5, policy)

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            ReconstructionPolicy("wobble", {})

    def test_jitter_mode_seed_determinism(self):
        group = self._center()
        residuals = {"a": np.full((4, 2), 0.2), "b": np.full((4, 2), 0.2)}
        offsets = {"a": np.zeros(2), "b": np.zeros(2)}
        one = reconstruct_members(group, offsets, 0.5,
                                  ReconstructionPolicy("seeded-jitter",
                                                       residuals, seed=3))
        two = reconstruct_members(group, offsets, 0.5,
                                  ReconstructionPolicy("seeded-jitter",
                                                       residuals, seed=3))
        other = reconstruct_members(group, offsets, 0.5,
                                    ReconstructionPolicy("seeded-jitter",
                                                         residuals, seed=4))
        for m in offsets:
            assert np.array_equal(one[m].positions, two[m].positions)
            assert not np.array_equal(one[m].positions, other[m].positions)

    def test_from_known_window_zero_at_anchor(self, cfg):
        a = line_track("a", 0, 10, (0.0, 0.0), (1.0, 0.1))
        b = line_track("b", 0, 10, (0.0, 0.4), (1.0, -0.1))
        center = cc.group_center_trajectory([a, b])
        policy = ReconstructionPolicy.from_known_window([a, b], center)
        for m in ("a", "b"):
            assert np.allclose(policy.residuals[m][-1], [0.0, 0.0], atol=1e-12)


def test_constant_velocity_baseline(cfg):
    tr = line_track("a", 0, 10, (0.0, 0.0), (1.0, 0.5))
    base = constant_velocity_baseline(tr, 5, cfg)
    assert list(base.frames) == [10, 11, 12, 13, 14]
    expected_last = tr.positions[-1] + 5 * np.array([1.0, 0.5]) * cfg.step_duration
    assert np.allclose(base.positions[-1], expected_last, atol=1e-9)

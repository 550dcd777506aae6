"""Destination candidates retrieved from the historical track database.

A query pose (current position plus average movement direction) is matched
against every stored sample; the destinations of the best-matching samples,
one per historical agent, become candidate destinations. A straight-line
continuation of the query track is always appended as the final candidate so
the set never depends entirely on the database.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    Config,
    DatabaseSample,
    Trajectory,
    TrajectoryDatabase,
    average_direction,
    natural_key,
    velocity_at,
)

LINEAR_PROVENANCE = "linear-continuation"

# direction vectors shorter than this are treated as "no direction": the
# directional score term is dropped rather than divided by ~0
_STATIONARY_NORM = 1e-9


@dataclass(frozen=True)
class QueryPose:
    """What the database is searched with: where an agent is and where it
    has been heading on average."""

    agent_id: str
    pos: np.ndarray
    direction: np.ndarray

    @property
    def is_stationary(self) -> bool:
        return float(np.linalg.norm(self.direction)) < _STATIONARY_NORM


@dataclass(frozen=True)
class Candidate:
    """One candidate destination with its provenance.

    ``provenance`` names the historical agent and step the destination came
    from, or ``linear-continuation`` for the appended straight-line guess.
    ``score`` is the match score (lower is better); the linear candidate has
    no score.
    """

    destination: np.ndarray
    provenance: str
    score: float | None


def sample_score(pose: QueryPose, sample: DatabaseSample, cfg: Config) -> float | None:
    """Match score of one database sample against the query pose.

    Distance is normalized by the neighborhood range; the direction term adds
    ``direction_weight * (1 - cos)`` between the average movement directions.
    Samples heading against the query (negative cosine) are rejected and
    score ``None``. A stationary query or sample drops the direction term.
    """
    dist = float(np.linalg.norm(pose.pos - sample.pos))
    score = dist / cfg.neighborhood_range
    qn = float(np.linalg.norm(pose.direction))
    sn = float(np.linalg.norm(sample.direction))
    if qn < _STATIONARY_NORM or sn < _STATIONARY_NORM:
        return score
    cos = float(pose.direction @ sample.direction) / (qn * sn)
    if cos < 0.0:
        return None
    return score + cfg.direction_weight * (1.0 - cos)


def scan_similar(db: TrajectoryDatabase, pose: QueryPose, cfg: Config,
                 k: int | None = None, exclude=()) -> list:
    """Exhaustive reference search: score every sample, keep the best one
    per historical agent, return the ``k`` lowest-scoring agents.

    Ties are broken by agent id (natural order), then by sample step.
    """
    if k is None:
        k = cfg.k_candidates
    drop = set(exclude) | {pose.agent_id}
    best: dict = {}
    for sample in db.iter_samples():
        if sample.agent_id in drop:
            continue
        score = sample_score(pose, sample, cfg)
        if score is None:
            continue
        cur = best.get(sample.agent_id)
        if cur is None or (score, sample.step) < (cur[0], cur[1].step):
            best[sample.agent_id] = (score, sample)
    ranked = sorted(best.items(),
                    key=lambda kv: (kv[1][0], natural_key(kv[0]), kv[1][1].step))
    return [(score, sample) for _, (score, sample) in ranked[:k]]


def query_similar(db: TrajectoryDatabase, pose: QueryPose, cfg: Config,
                  k: int | None = None, exclude=()) -> list:
    """Grid-accelerated search, equivalent to :func:`scan_similar`.

    Cells are visited in rings of increasing Chebyshev radius around the
    query position. Every sample in ring ``r`` lies at least
    ``(r - 1) * cell_size`` away, so its score is at least that distance over
    the neighborhood range; once that lower bound exceeds the current k-th
    best score, no unvisited sample can change the result and the search
    stops.
    """
    if k is None:
        k = cfg.k_candidates
    if len(db) == 0 or k <= 0:
        return []
    drop = set(exclude) | {pose.agent_id}
    best: dict = {}
    for ring in range(db.max_ring(pose.pos) + 1):
        if ring >= 1 and len(best) >= k:
            ranked = sorted((score, natural_key(aid))
                            for aid, (score, _) in best.items())
            kth = ranked[k - 1][0]
            if (ring - 1) * db.cell_size / cfg.neighborhood_range > kth:
                break
        for i in db.ring_indices(pose.pos, ring):
            sample = db.sample(int(i))
            if sample.agent_id in drop:
                continue
            score = sample_score(pose, sample, cfg)
            if score is None:
                continue
            cur = best.get(sample.agent_id)
            if cur is None or (score, sample.step) < (cur[0], cur[1].step):
                best[sample.agent_id] = (score, sample)
    ranked = sorted(best.items(),
                    key=lambda kv: (kv[1][0], natural_key(kv[0]), kv[1][1].step))
    return [(score, sample) for _, (score, sample) in ranked[:k]]


def query_pose(traj: Trajectory) -> QueryPose:
    """Query pose of a track: last position and the average movement
    direction at the final step."""
    direction = (average_direction(traj, len(traj)) if len(traj) >= 2
                 else np.zeros(2))
    return QueryPose(traj.agent_id, traj.positions[-1].copy(), direction)


def linear_continuation(traj: Trajectory, cfg: Config) -> np.ndarray:
    """Destination from continuing the track in a straight line.

    The last position is pushed along the normalized average movement
    direction at the current speed for the whole prediction horizon. A
    stationary track stays where it is.
    """
    last = traj.positions[-1].copy()
    if len(traj) < 2:
        return last
    direction = average_direction(traj, len(traj))
    norm = float(np.linalg.norm(direction))
    speed = float(np.linalg.norm(velocity_at(traj, int(traj.frames[-1]))))
    if norm < _STATIONARY_NORM or speed < _STATIONARY_NORM:
        return last
    horizon = cfg.predict_time_steps * cfg.step_duration
    return last + (direction / norm) * speed * horizon


def candidate_destinations(db: TrajectoryDatabase, traj: Trajectory, cfg: Config,
                           exclude=()) -> list:
    """Candidate destinations for a track: up to ``k_candidates`` retrieved
    from the database plus the straight-line continuation, always last.
    """
    pose = query_pose(traj)
    hits = query_similar(db, pose, cfg, exclude=exclude)
    out = [Candidate(sample.destination.copy(),
                     f"db:{sample.agent_id}@step{sample.step}", score)
           for score, sample in hits]
    out.append(Candidate(linear_continuation(traj, cfg), LINEAR_PROVENANCE, None))
    return out

"""Core domain types, trajectory arithmetic, and the historical-track database.

All positions are 2D world coordinates in meters. Canonical trajectories live
on a shared uniform time grid: frame k corresponds to time k * step_duration
seconds, so frame indices are comparable across agents. Raw (pre-resampling)
trajectories may carry arbitrary timestamps.

Everything here is immutable after construction and safe to share between
workers. The database is build-once, read-many.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

CANONICAL_HEADER = "frame,agent_id,x,y"

# tolerance when deciding whether a timestamp lies exactly on the step grid
_GRID_EPS = 1e-9


class DataError(ValueError):
    """Semantically invalid input data (trajectory, CSV, or scene)."""


class TooFewPointsError(DataError):
    """Operation needs more trajectory points than were given."""


@dataclass(frozen=True)
class TrackPoint:
    """One sample of an agent track: frame index, time in seconds, position."""

    frame: int
    t: float
    pos: np.ndarray  # (2,) meters


@dataclass(frozen=True)
class Config:
    """Pipeline parameters.

    Distances are meters, durations seconds, mass kilograms. The two intimacy
    thresholds follow common proxemics: pairs staying within
    ``intimate_distance`` are very close, within ``personal_distance``
    generally close. ``min_overlap_frames`` is the number of co-present frames
    required before a pair can be considered close at all, which keeps
    momentary passers-by from forming groups.
    """

    known_time_steps: int = 30
    predict_time_steps: int = 30
    k_candidates: int = 5
    person_radius: float = 0.3
    step_duration: float = 0.3999
    neighborhood_range: float = 10.0
    person_mass: float = 60.0
    intimate_distance: float = 0.45
    personal_distance: float = 1.2
    min_overlap_frames: int = 10
    direction_weight: float = 1.0

    def __post_init__(self) -> None:
        if not (0.0 < self.intimate_distance < self.personal_distance):
            raise ValueError("need 0 < intimate_distance < personal_distance")
        if self.k_candidates < 1:
            raise ValueError("k_candidates must be >= 1")
        for name in ("known_time_steps", "predict_time_steps", "person_radius",
                     "step_duration", "neighborhood_range", "person_mass"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.min_overlap_frames < 1:
            raise ValueError("min_overlap_frames must be >= 1")


@dataclass(frozen=True)
class Trajectory:
    """Time-indexed track of one agent or one group center.

    ``frames`` are strictly increasing integers, ``times`` the matching
    timestamps in seconds, ``positions`` an (N, 2) array in meters. Arrays are
    frozen after construction.
    """

    agent_id: str
    frames: np.ndarray
    times: np.ndarray
    positions: np.ndarray

    def __post_init__(self) -> None:
        frames = np.asarray(self.frames, dtype=np.int64)
        times = np.asarray(self.times, dtype=np.float64)
        positions = np.asarray(self.positions, dtype=np.float64)
        if positions.ndim != 2 or positions.shape[1] != 2:
            raise DataError(f"positions must be (N, 2), got {positions.shape}")
        if not (len(frames) == len(times) == len(positions)):
            raise DataError("frames, times, positions must have equal length")
        if len(frames) > 1 and not np.all(np.diff(frames) > 0):
            raise DataError(f"frames of agent {self.agent_id!r} must strictly increase")
        for arr, name in ((frames, "frames"), (times, "times"), (positions, "positions")):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_frame_grid(cls, agent_id: str, frames, positions,
                        step_duration: float) -> "Trajectory":
        """Build a canonical trajectory where time is frame * step_duration."""
        frames = np.asarray(frames, dtype=np.int64)
        return cls(agent_id, frames, frames * step_duration, positions)

    def __len__(self) -> int:
        return len(self.frames)

    def point(self, i: int) -> TrackPoint:
        return TrackPoint(int(self.frames[i]), float(self.times[i]), self.positions[i])

    def index_of_frame(self, frame: int) -> int:
        i = int(np.searchsorted(self.frames, frame))
        if i >= len(self.frames) or self.frames[i] != frame:
            raise DataError(f"frame {frame} not in trajectory of agent {self.agent_id!r}")
        return i

    def has_frame(self, frame: int) -> bool:
        i = int(np.searchsorted(self.frames, frame))
        return i < len(self.frames) and self.frames[i] == frame

    def position_at(self, frame: int) -> np.ndarray:
        return self.positions[self.index_of_frame(frame)]

    def restrict_frames(self, first: int, last: int) -> "Trajectory":
        """Sub-trajectory with frames in the inclusive range [first, last]."""
        mask = (self.frames >= first) & (self.frames <= last)
        return Trajectory(self.agent_id, self.frames[mask], self.times[mask],
                          self.positions[mask])


def velocity_at(traj: Trajectory, frame: int) -> np.ndarray:
    """Velocity in m/s at a frame, from the actual time deltas of the track.

    Uses the backward difference to the previous point so the value never
    depends on the future; the very first point falls back to the forward
    difference.
    """
    if len(traj) < 2:
        raise TooFewPointsError(
            f"agent {traj.agent_id!r} needs >= 2 points for a velocity query")
    i = traj.index_of_frame(frame)
    j0, j1 = (0, 1) if i == 0 else (i - 1, i)
    dt = traj.times[j1] - traj.times[j0]
    return (traj.positions[j1] - traj.positions[j0]) / dt


def average_direction(traj: Trajectory, step: int) -> np.ndarray:
    """Mean displacement from all earlier points to the step-th point.

    ``step`` counts points from 1 at the start of the track. The result is the
    average of (p_step - p_k) over k = 1 .. step-1 and is left un-normalized;
    callers normalize where a unit direction is needed. Implemented
    difference-first so that translating the whole track leaves the result
    unchanged whenever the shifted coordinates are exactly representable.
    """
    if step < 2:
        raise TooFewPointsError("average direction needs at least one prior point")
    if step > len(traj):
        raise DataError(f"step {step} out of range for {len(traj)}-point track")
    i = step - 1
    diffs = traj.positions[i] - traj.positions[:i]
    return diffs.sum(axis=0) / i


def resample_trajectory(traj: Trajectory, step_duration: float) -> Trajectory:
    """Linearly interpolate a track onto the uniform step grid.

    The output contains every grid point k * step_duration inside the track's
    time range, with frame index k. Input samples that already lie on the grid
    are copied bit-for-bit (which makes resampling idempotent); everything
    else is linearly interpolated between its neighbors. A range that does not
    start or end on the grid is trimmed to the interior grid points, so the
    result can have fewer than 2 points.
    """
    if step_duration <= 0:
        raise ValueError("step_duration must be > 0")
    if len(traj) < 2:
        raise TooFewPointsError(
            f"agent {traj.agent_id!r} needs >= 2 points to resample")
    t0 = float(traj.times[0])
    t1 = float(traj.times[-1])
    k0 = math.ceil(t0 / step_duration - _GRID_EPS)
    k1 = math.floor(t1 / step_duration + _GRID_EPS)
    frames = []
    positions = []
    times = traj.times
    for k in range(k0, k1 + 1):
        t = k * step_duration
        j = int(np.searchsorted(times, t))
        snap = None
        for cand in (j, j - 1):
            if 0 <= cand < len(times) and abs(times[cand] - t) <= _GRID_EPS * max(1.0, abs(t)):
                snap = cand
                break
        if snap is not None:
            positions.append(traj.positions[snap])
        elif j == 0:
            positions.append(traj.positions[0])
        elif j >= len(times):
            positions.append(traj.positions[-1])
        else:
            w = (t - times[j - 1]) / (times[j] - times[j - 1])
            positions.append(traj.positions[j - 1] + w * (traj.positions[j] - traj.positions[j - 1]))
        frames.append(k)
    if frames:
        pos_arr = np.vstack(positions)
    else:
        pos_arr = np.empty((0, 2))
    return Trajectory.from_frame_grid(traj.agent_id, np.array(frames, dtype=np.int64),
                                      pos_arr, step_duration)


# ---------------------------------------------------------------------------
# scene geometry

@dataclass(frozen=True)
class SceneGeometry:
    """Static obstacles of a scene: line segments and convex polygons.

    ``bounds`` is the axis-aligned scene rectangle [[xmin, ymin], [xmax, ymax]].
    """

    segments: tuple = ()   # each (2, 2) array: two endpoints
    polygons: tuple = ()   # each (V, 2) array: convex ring, V >= 3
    bounds: np.ndarray = field(default_factory=lambda: np.zeros((2, 2)))

    def __post_init__(self) -> None:
        segs = tuple(np.asarray(s, dtype=np.float64).reshape(2, 2) for s in self.segments)
        polys = []
        for p in self.polygons:
            p = np.asarray(p, dtype=np.float64)
            if p.ndim != 2 or p.shape[0] < 3 or p.shape[1] != 2:
                raise DataError("polygon needs at least 3 vertices of 2 coordinates")
            polys.append(p)
        bounds = np.asarray(self.bounds, dtype=np.float64).reshape(2, 2)
        verts = [s.reshape(-1, 2) for s in segs] + polys
        if verts and np.any(bounds[1] > bounds[0]):
            allv = np.vstack(verts)
            if np.any(allv < bounds[0] - 1e-9) or np.any(allv > bounds[1] + 1e-9):
                raise DataError("obstacle vertices lie outside the scene bounds")
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "polygons", tuple(polys))
        bounds.setflags(write=False)
        object.__setattr__(self, "bounds", bounds)

    @classmethod
    def empty(cls) -> "SceneGeometry":
        return cls()

    @property
    def is_empty(self) -> bool:
        return not self.segments and not self.polygons

    def obstacle_contacts(self, p: np.ndarray) -> list:
        """Nearest boundary point and signed distance for every obstacle.

        Returns (point, signed_distance) pairs; the distance is negative when
        p lies inside a polygon.
        """
        p = np.asarray(p, dtype=np.float64)
        out = []
        for seg in self.segments:
            q = _nearest_on_segment(p, seg[0], seg[1])
            out.append((q, float(np.linalg.norm(p - q))))
        for poly in self.polygons:
            q, d = _nearest_on_ring(p, poly)
            if _inside_convex(p, poly):
                d = -d
            out.append((q, d))
        return out


def _nearest_on_segment(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ab = b - a
    denom = float(ab @ ab)
    if denom < 1e-18:
        return a
    t = float((p - a) @ ab) / denom
    return a + min(1.0, max(0.0, t)) * ab


def _nearest_on_ring(p: np.ndarray, ring: np.ndarray):
    best_q = None
    best_d = math.inf
    for i in range(len(ring)):
        q = _nearest_on_segment(p, ring[i], ring[(i + 1) % len(ring)])
        d = float(np.linalg.norm(p - q))
        if d < best_d:
            best_q, best_d = q, d
    return best_q, best_d


def _inside_convex(p: np.ndarray, ring: np.ndarray) -> bool:
    sign = 0
    for i in range(len(ring)):
        a = ring[i]
        b = ring[(i + 1) % len(ring)]
        cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
        if abs(cross) < 1e-15:
            continue
        s = 1 if cross > 0 else -1
        if sign == 0:
            sign = s
        elif s != sign:
            return False
    return sign != 0


def parse_scene(text: str) -> SceneGeometry:
    """Parse the plain-text scene format.

    One obstacle per line, coordinates in meters:

        seg x1 y1 x2 y2
        poly x1 y1 x2 y2 x3 y3 ...
        bounds xmin ymin xmax ymax

    Blank lines and lines starting with ``#`` are ignored. ``bounds`` is
    optional; when absent the obstacle bounding box (padded by 1 m) is used.
    """
    segments = []
    polygons = []
    bounds = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        kind, vals = parts[0], parts[1:]
        try:
            nums = [float(v) for v in vals]
        except ValueError as exc:
            raise DataError(f"scene line {lineno}: bad number ({exc})") from None
        if kind == "seg":
            if len(nums) != 4:
                raise DataError(f"scene line {lineno}: seg needs 4 numbers")
            segments.append(np.array(nums).reshape(2, 2))
        elif kind == "poly":
            if len(nums) < 6 or len(nums) % 2:
                raise DataError(f"scene line {lineno}: poly needs >= 3 x,y pairs")
            polygons.append(np.array(nums).reshape(-1, 2))
        elif kind == "bounds":
            if len(nums) != 4:
                raise DataError(f"scene line {lineno}: bounds needs 4 numbers")
            bounds = np.array([[nums[0], nums[1]], [nums[2], nums[3]]])
        else:
            raise DataError(f"scene line {lineno}: unknown entry {kind!r}")
    if bounds is None:
        verts = [s for s in segments] + polygons
        if verts:
            allv = np.vstack(verts)
            bounds = np.vstack([allv.min(axis=0) - 1.0, allv.max(axis=0) + 1.0])
        else:
            bounds = np.zeros((2, 2))
    return SceneGeometry(tuple(segments), tuple(polygons), bounds)


# ---------------------------------------------------------------------------
# canonical CSV interchange

def natural_key(agent_id: str):
    """Sort key treating digit runs numerically, so 'a2' sorts before 'a10'."""
    return tuple(int(tok) if tok.isdigit() else tok
                 for tok in re.split(r"(\d+)", agent_id))


def write_canonical_csv(tracks: list) -> bytes:
    """Serialize trajectories as the canonical CSV interchange format.

    UTF-8, header ``frame,agent_id,x,y``, frames as non-negative integers,
    coordinates as shortest round-trip decimals, rows sorted by
    (agent_id, frame).
    """
    lines = [CANONICAL_HEADER]
    for traj in sorted(tracks, key=lambda tr: natural_key(tr.agent_id)):
        for i in range(len(traj)):
            f = int(traj.frames[i])
            if f < 0:
                raise DataError(f"agent {traj.agent_id!r}: negative frame {f}")
            x, y = traj.positions[i]
            lines.append(f"{f},{traj.agent_id},{float(x)!r},{float(y)!r}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def read_canonical_csv(data, step_duration: float) -> list:
    """Parse canonical CSV bytes or text into trajectories on the step grid."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    lines = data.splitlines()
    if not lines or lines[0].strip() != CANONICAL_HEADER:
        raise DataError(f"canonical CSV must start with header {CANONICAL_HEADER!r}")
    per_agent: dict = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise DataError(f"CSV line {lineno}: expected 4 fields, got {len(parts)}")
        try:
            frame = int(parts[0])
            x = float(parts[2])
            y = float(parts[3])
        except ValueError as exc:
            raise DataError(f"CSV line {lineno}: {exc}") from None
        if frame < 0:
            raise DataError(f"CSV line {lineno}: negative frame {frame}")
        per_agent.setdefault(parts[1], []).append((frame, x, y))
    tracks = []
    for agent_id in sorted(per_agent, key=natural_key):
        rows = sorted(per_agent[agent_id])
        frames = np.array([r[0] for r in rows], dtype=np.int64)
        if len(np.unique(frames)) != len(frames):
            raise DataError(f"agent {agent_id!r} has duplicate frames")
        positions = np.array([[r[1], r[2]] for r in rows])
        tracks.append(Trajectory.from_frame_grid(agent_id, frames, positions, step_duration))
    return tracks


# ---------------------------------------------------------------------------
# historical-track database

@dataclass(frozen=True)
class DatabaseSample:
    """One indexed pose of a historical track."""

    agent_id: str
    step: int          # 1-based point index within the source track
    frame: int
    pos: np.ndarray    # (2,)
    direction: np.ndarray  # (2,) un-normalized average movement direction
    destination: np.ndarray  # (2,) final point of the source track


class TrajectoryDatabase:
    """Historical tracks indexed for pose-similarity queries.

    Every track point with at least two earlier points is indexed under its
    (position, average movement direction); the sample's destination is the
    last point of its source track. A uniform grid over positions accelerates
    neighborhood queries. Immutable once built.
    """

    def __init__(self, tracks: list, cfg: Config):
        ids = []
        steps = []
        frames = []
        pos = []
        dirs = []
        dest = []
        self.tracks = tuple(tracks)
        for traj in tracks:
            if len(traj) < 3:
                continue
            final = traj.positions[-1]
            for step in range(3, len(traj) + 1):
                ids.append(traj.agent_id)
                steps.append(step)
                frames.append(int(traj.frames[step - 1]))
                pos.append(traj.positions[step - 1])
                dirs.append(average_direction(traj, step))
                dest.append(final)
        self.agent_ids = tuple(ids)
        self.steps = np.array(steps, dtype=np.int64)
        self.frames = np.array(frames, dtype=np.int64)
        self.positions = np.array(pos) if pos else np.empty((0, 2))
        self.directions = np.array(dirs) if dirs else np.empty((0, 2))
        self.destinations = np.array(dest) if dest else np.empty((0, 2))
        for arr in (self.steps, self.frames, self.positions, self.directions,
                    self.destinations):
            arr.setflags(write=False)
        self.cell_size = cfg.neighborhood_range / 4.0
        cells: dict = {}
        for i in range(len(self.positions)):
            cells.setdefault(self._cell_of(self.positions[i]), []).append(i)
        self._cells = {c: np.array(ix, dtype=np.int64) for c, ix in cells.items()}

    def __len__(self) -> int:
        return len(self.agent_ids)

    def _cell_of(self, p: np.ndarray):
        return (int(math.floor(p[0] / self.cell_size)),
                int(math.floor(p[1] / self.cell_size)))

    def sample(self, i: int) -> DatabaseSample:
        return DatabaseSample(self.agent_ids[i], int(self.steps[i]), int(self.frames[i]),
                              self.positions[i], self.directions[i], self.destinations[i])

    def iter_samples(self):
        for i in range(len(self)):
            yield self.sample(i)

    def ring_indices(self, p: np.ndarray, ring: int) -> np.ndarray:
        """Sample indices in grid cells at Chebyshev ring ``ring`` around p.

        Ring 0 is the cell containing p. Any sample in ring r >= 1 is at least
        (r - 1) * cell_size away from p, which callers use as a search cutoff.
        """
        cx, cy = self._cell_of(p)
        hit = []
        if ring == 0:
            cells = [(cx, cy)]
        else:
            cells = []
            for dx in range(-ring, ring + 1):
                for dy in range(-ring, ring + 1):
                    if max(abs(dx), abs(dy)) == ring:
                        cells.append((cx + dx, cy + dy))
        for c in cells:
            ix = self._cells.get(c)
            if ix is not None:
                hit.append(ix)
        if not hit:
            return np.empty(0, dtype=np.int64)
        return np.concatenate(hit)

    def max_ring(self, p: np.ndarray) -> int:
        """Largest ring that can still contain any indexed cell."""
        if not self._cells:
            return -1
        cx, cy = self._cell_of(p)
        return max(max(abs(c[0] - cx), abs(c[1] - cy)) for c in self._cells)


def build_database(tracks: list, cfg: Config) -> TrajectoryDatabase:
    """Index resampled historical tracks for destination retrieval.

    Tracks must already live on the shared step grid. An empty input yields an
    empty database whose every query misses.
    """
    for traj in tracks:
        if len(traj) > 1 and not np.all(np.diff(traj.frames) == 1):
            raise DataError(
                f"agent {traj.agent_id!r} is not resampled to the step grid")
    return TrajectoryDatabase(tracks, cfg)

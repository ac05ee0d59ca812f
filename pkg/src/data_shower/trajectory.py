import csv
import math
from collections.abc import Iterable
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import numpy.typing as npt
from loguru import logger
from scipy.optimize import brentq

from data_shower.errors import DomainError, TraceLoadError

type FloatArray = npt.NDArray[np.float64]

CROSSING_XTOL_S = 1.0e-6  # well below the 1 ms boundary tolerance
SPAN_RTOL = 1.0e-9


@dataclass(frozen=True)
class ContactWindow:
    t_in: float  # first instant within range, s
    t_out: float  # last instant within range, s

    def __post_init__(self) -> None:
        if self.t_out < self.t_in:
            raise ValueError(f"t_out ({self.t_out}) precedes t_in ({self.t_in})")

    @property
    def duration(self) -> float:
        return self.t_out - self.t_in


def _check_in_span(times: FloatArray, span: tuple[float, float]) -> FloatArray:
    t0, t1 = span
    slack = SPAN_RTOL * max(1.0, abs(t0), abs(t1))
    if np.any(times < t0 - slack) or np.any(times > t1 + slack):
        raise DomainError(f"time outside the trajectory span [{t0:.6g}, {t1:.6g}] s")
    return np.clip(times, t0, t1)


@dataclass(frozen=True)
class StraightLinePath:
    """
    Constant-speed straight pass by the tower.

    The vehicle enters at distance d_entry at t_start, reaches its closest approach d_min and leaves at
    d_entry again, symmetric about the closest approach.
    """

    d_min: float  # closest approach (perpendicular offset), m
    speed: float  # v, m/s
    d_entry: float = 200.0  # distance at the start and end of the span, m
    t_start: float = 0.0  # arrival time, s

    def __post_init__(self) -> None:
        if self.speed <= 0.0:
            raise ValueError(f"speed must be > 0, got {self.speed}")
        if not 0.0 <= self.d_min < self.d_entry:
            raise ValueError(f"need 0 <= d_min < d_entry, got d_min={self.d_min}, d_entry={self.d_entry}")

    @classmethod
    def from_angle(cls, alpha: float, speed: float, d_entry: float = 200.0, t_start: float = 0.0) -> "StraightLinePath":
        """Build a path from the entry angle between the sight line at d_entry and the motion direction."""
        if not 0.0 <= alpha < math.pi / 2.0:
            raise ValueError(f"alpha must be in [0, pi/2), got {alpha}")
        return cls(d_min=d_entry * math.sin(alpha), speed=speed, d_entry=d_entry, t_start=t_start)

    @property
    def alpha(self) -> float:
        return math.asin(self.d_min / self.d_entry)

    @property
    def x0(self) -> float:
        """Along-track distance from the entry point to the closest approach."""
        return math.sqrt(self.d_entry**2 - self.d_min**2)

    @property
    def t_closest(self) -> float:
        return self.t_start + self.x0 / self.speed

    @property
    def span(self) -> tuple[float, float]:
        return self.t_start, self.t_start + 2.0 * self.x0 / self.speed

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return (self.t_closest,)

    @property
    def max_rate(self) -> float:
        """Upper bound on |dd/dt|."""
        return self.speed

    def distances(self, times: npt.ArrayLike) -> FloatArray:
        t = _check_in_span(np.asarray(times, dtype=float), self.span)
        along = self.x0 - self.speed * (t - self.t_start)
        return np.asarray(np.sqrt(self.d_min**2 + along**2))


@dataclass(frozen=True, eq=False)
class TraceTrajectory:
    times: FloatArray  # s, strictly increasing
    distances_m: FloatArray  # m, all > 0

    def __post_init__(self) -> None:
        times = np.array(self.times, dtype=float)
        distances = np.array(self.distances_m, dtype=float)
        if times.ndim != 1 or times.shape != distances.shape:
            raise ValueError("trace needs 1-d time and distance columns of equal length")
        if times.size < 2:
            raise ValueError(f"trace needs at least 2 samples, got {times.size}")
        if np.any(np.diff(times) <= 0.0):
            raise ValueError("trace times must be strictly increasing")
        if np.any(~(distances > 0.0)):
            raise ValueError("trace distances must be > 0")
        times.setflags(write=False)
        distances.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "distances_m", distances)

    @classmethod
    def from_samples(cls, samples: Iterable[tuple[float, float]]) -> "TraceTrajectory":
        pairs = np.asarray(list(samples), dtype=float).reshape(-1, 2)
        return cls(times=pairs[:, 0], distances_m=pairs[:, 1])

    @property
    def span(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])

    @property
    def breakpoints(self) -> tuple[float, ...]:
        return tuple(float(t) for t in self.times[1:-1])

    @property
    def max_rate(self) -> float:
        return float(np.max(np.abs(np.diff(self.distances_m) / np.diff(self.times))))

    def distances(self, times: npt.ArrayLike) -> FloatArray:
        t = _check_in_span(np.asarray(times, dtype=float), self.span)
        return np.asarray(np.interp(t, self.times, self.distances_m))

    def time_scaled(self, factor: float) -> "TraceTrajectory":
        """The same route replayed with every duration multiplied by factor (factor < 1 is faster)."""
        if factor <= 0.0:
            raise ValueError(f"factor must be > 0, got {factor}")
        t0 = self.times[0]
        return TraceTrajectory(times=t0 + (self.times - t0) * factor, distances_m=self.distances_m)


type Trajectory = StraightLinePath | TraceTrajectory


def distance_at(trajectory: Trajectory, t: float) -> float:
    """Antenna separation at time t."""
    return float(trajectory.distances(t))


def crossing_times(trajectory: Trajectory, level: float) -> FloatArray:
    """
    Sorted instants at which d(t) crosses or touches `level`.

    Analytic paths are solved with brentq on their monotone pieces, traces by linear inverse per segment.
    """
    if isinstance(trajectory, StraightLinePath):
        t0, t1 = trajectory.span
        edges = [t0, trajectory.t_closest, t1]
        found: list[float] = []
        for a, b in zip(edges[:-1], edges[1:], strict=True):
            ga = distance_at(trajectory, a) - level
            gb = distance_at(trajectory, b) - level
            if ga == 0.0:
                found.append(a)
            if gb == 0.0:
                found.append(b)
            if ga * gb < 0.0:
                root = brentq(lambda t: distance_at(trajectory, t) - level, a, b, xtol=CROSSING_XTOL_S)
                found.append(float(root))
        return np.unique(np.asarray(found, dtype=float))

    g = trajectory.distances_m - level
    touches = trajectory.times[g == 0.0]
    sign_change = np.flatnonzero(g[:-1] * g[1:] < 0.0)
    t_a = trajectory.times[sign_change]
    t_b = trajectory.times[sign_change + 1]
    g_a = g[sign_change]
    g_b = g[sign_change + 1]
    roots = t_a + (t_b - t_a) * g_a / (g_a - g_b)
    return np.unique(np.concatenate([touches, roots]))


def contact_windows(trajectory: Trajectory, d_max: float) -> list[ContactWindow]:
    """Maximal disjoint intervals, ordered in time, during which d(t) <= d_max."""
    if d_max <= 0.0:
        raise DomainError(f"d_max must be > 0, got {d_max}")
    t0, t1 = trajectory.span
    crossings = crossing_times(trajectory, d_max)
    cuts = np.unique(np.concatenate([[t0, t1], crossings]))

    intervals: list[list[float]] = []
    for a, b in zip(cuts[:-1], cuts[1:], strict=True):
        if distance_at(trajectory, 0.5 * (a + b)) > d_max:
            continue
        if intervals and intervals[-1][1] == a:
            intervals[-1][1] = float(b)
        else:
            intervals.append([float(a), float(b)])

    # isolated instants where the trajectory only touches d_max
    for t in cuts:
        covered = any(lo <= t <= hi for lo, hi in intervals)
        if not covered and distance_at(trajectory, float(t)) <= d_max * (1.0 + SPAN_RTOL):
            intervals.append([float(t), float(t)])

    intervals.sort()
    return [ContactWindow(t_in=lo, t_out=hi) for lo, hi in intervals]


def distances_from_positions(
    x: npt.ArrayLike, y: npt.ArrayLike, tower: tuple[float, float] = (0.0, 0.0)
) -> FloatArray:
    """Planar distance from each (x, y) position to the tower antenna."""
    return np.asarray(np.hypot(np.asarray(x, dtype=float) - tower[0], np.asarray(y, dtype=float) - tower[1]))


def read_trace(path: str | Path, tower: tuple[float, float] = (0.0, 0.0)) -> TraceTrajectory:
    """
    Read a trace CSV with either a `t_s,d_m` or a `t_s,x_m,y_m` header.

    Positions are converted to distances from `tower`. Line numbers in errors count the header as line 1.
    """
    times: list[float] = []
    values: list[tuple[float, ...]] = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        header = set(reader.fieldnames or [])
        if {"t_s", "d_m"} <= header:
            columns = ("d_m",)
        elif {"t_s", "x_m", "y_m"} <= header:
            columns = ("x_m", "y_m")
        else:
            raise TraceLoadError("expected header t_s,d_m or t_s,x_m,y_m", str(path), 1)
        for ix, row in enumerate(reader):
            line = ix + 2
            try:
                t = float(row["t_s"])
                sample = tuple(float(row[c]) for c in columns)
            except (TypeError, ValueError) as e:
                raise TraceLoadError(f"bad trace sample: {e}", str(path), line) from e
            if times and t <= times[-1]:
                raise TraceLoadError(f"time {t} is not after the previous sample {times[-1]}", str(path), line)
            times.append(t)
            values.append(sample)

    samples = np.asarray(values, dtype=float).reshape(len(values), len(columns))
    if len(columns) == 1:
        distances = samples[:, 0]
    else:
        distances = distances_from_positions(samples[:, 0], samples[:, 1], tower)
    bad = np.flatnonzero(~(distances > 0.0))
    if bad.size:
        raise TraceLoadError("distance must be > 0", str(path), int(bad[0]) + 2)
    if len(times) < 2:
        raise TraceLoadError(f"trace needs at least 2 samples, got {len(times)}", str(path))
    logger.debug(f"Read {len(times)} trace samples from {path}")
    return TraceTrajectory(times=np.asarray(times), distances_m=distances)

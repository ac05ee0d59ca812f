"""
Data shower bulk: bits exchanged during a pass, by time integration of C(d(t)) or by the constant-speed
closed form.

Time integrals are split at every crossing of the two switching thresholds and at the trajectory's
breakpoints, so each piece integrates one smooth branch of C(d) with the composite trapezoid rule.
"""

import math
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from loguru import logger
from scipy.integrate import trapezoid

from data_shower.channel import Region, SupportsCapacity
from data_shower.errors import DomainError
from data_shower.trajectory import StraightLinePath, Trajectory, contact_windows, crossing_times

type FloatArray = npt.NDArray[np.float64]

TIME_STEP_DISTANCE_M = 0.1  # max distance change between consecutive time samples
DISTANCE_STEP_M = 0.05  # max step of distance-domain integrals
MIN_DISTANCE_M = 1.0e-3  # head-on passes are evaluated at this distance when d reaches 0


@dataclass(frozen=True)
class OverheadTimes:
    eps_sync_mm: float = 0.0  # mmWave synchronization, s
    eps_sync_thz: float = 0.0  # THz synchronization, s
    eps_switch: float = 0.0  # mmWave -> THz switching, s

    def __post_init__(self) -> None:
        if min(self.eps_sync_mm, self.eps_sync_thz, self.eps_switch) < 0.0:
            raise ValueError("overhead times must be >= 0")

    @property
    def total(self) -> float:
        return self.eps_sync_mm + self.eps_sync_thz + self.eps_switch


@dataclass(frozen=True)
class ClosedFormBulk:
    bits: float  # transferable bits
    usable_time: float  # contact time minus overheads, s (may be negative)
    degenerate: bool  # usable time was <= 0 and bits were clamped to 0


def split_points(trajectory: Trajectory, model: SupportsCapacity) -> FloatArray:
    """Sorted instants where the integrand may be non-smooth: threshold crossings and breakpoints."""
    parts = [
        crossing_times(trajectory, model.d_th_thz),
        crossing_times(trajectory, model.d_th_mm),
        np.asarray(trajectory.breakpoints, dtype=float),
    ]
    return np.unique(np.concatenate(parts))


def _n_segments(rate: float, width: float, step: float) -> int:
    return max(1, math.ceil(rate * width / step))


def _piece_bulk(trajectory: Trajectory, model: SupportsCapacity, t0: float, t1: float, step: float) -> float:
    if t1 <= t0:
        return 0.0
    region = Region(int(model.region_of(trajectory.distances(0.5 * (t0 + t1)))))
    if region is Region.NONE:
        return 0.0
    t = np.linspace(t0, t1, _n_segments(trajectory.max_rate, t1 - t0, step) + 1)
    d = np.maximum(trajectory.distances(t), MIN_DISTANCE_M)
    return float(trapezoid(model.region_capacity(d, region), t))


def integrate_span(
    trajectory: Trajectory,
    model: SupportsCapacity,
    t0: float,
    t1: float,
    step: float = TIME_STEP_DISTANCE_M,
    cuts: FloatArray | None = None,
) -> float:
    """Integral of C(d(t)) over [t0, t1], in bits."""
    if cuts is None:
        cuts = split_points(trajectory, model)
    inner = cuts[(cuts > t0) & (cuts < t1)]
    edges = np.concatenate([[t0], inner, [t1]])
    pieces = zip(edges[:-1], edges[1:], strict=True)
    return sum(_piece_bulk(trajectory, model, float(a), float(b), step) for a, b in pieces)


def bulk_integral(trajectory: Trajectory, model: SupportsCapacity, step: float = TIME_STEP_DISTANCE_M) -> float:
    """
    Bits transferable over every contact window of the trajectory, without protocol overheads.
    """
    windows = contact_windows(trajectory, model.d_th_mm)
    if not windows:
        logger.warning("Trajectory never enters the mmWave range; bulk is 0")
        return 0.0
    cuts = split_points(trajectory, model)
    return sum(integrate_span(trajectory, model, w.t_in, w.t_out, step, cuts) for w in windows)


def interval_bulks(
    trajectory: Trajectory,
    model: SupportsCapacity,
    starts: npt.ArrayLike,
    ends: npt.ArrayLike,
    step: float = TIME_STEP_DISTANCE_M,
) -> FloatArray:
    """
    Integral of C(d(t)) over many short intervals at once (slots, protocol ticks).

    Intervals free of split points are integrated together on a common sample count; the few that
    straddle a split point fall back to piecewise integration.
    """
    t_start = np.atleast_1d(np.asarray(starts, dtype=float))
    t_end = np.atleast_1d(np.asarray(ends, dtype=float))
    result = np.zeros_like(t_start)
    if t_start.size == 0:
        return result
    cuts = split_points(trajectory, model)
    has_cut = np.searchsorted(cuts, t_end, side="left") > np.searchsorted(cuts, t_start, side="right")
    smooth = ~has_cut & (t_end > t_start)

    if np.any(smooth):
        lo = t_start[smooth]
        widths = t_end[smooth] - lo
        n = _n_segments(trajectory.max_rate, float(widths.max()), step)
        t = lo[:, np.newaxis] + widths[:, np.newaxis] * np.linspace(0.0, 1.0, n + 1)
        d = np.maximum(trajectory.distances(t), MIN_DISTANCE_M)
        regions = model.region_of(trajectory.distances(lo + 0.5 * widths))
        values = np.zeros_like(d)
        for region in (Region.THZ, Region.MMWAVE):
            rows = regions == region
            if np.any(rows):
                values[rows] = model.region_capacity(d[rows], region)
        result[smooth] = trapezoid(values, t, axis=1)

    for ix in np.flatnonzero(has_cut):
        result[ix] = integrate_span(trajectory, model, float(t_start[ix]), float(t_end[ix]), step, cuts)
    return result


def average_capacity(model: SupportsCapacity, d_lo: float, d_hi: float, step: float = DISTANCE_STEP_M) -> float:
    """
    Mean of C(eta) over eta in [d_lo, d_hi], composite trapezoid with step <= `step` on each region.

    d_lo may be 0 (head-on pass); the integrand is then evaluated at MIN_DISTANCE_M near the origin.
    """
    if d_lo < 0.0 or d_lo >= d_hi:
        raise DomainError(f"need 0 <= d_lo < d_hi, got d_lo={d_lo}, d_hi={d_hi}")
    edges = [d_lo] + [th for th in (model.d_th_thz, model.d_th_mm) if d_lo < th < d_hi] + [d_hi]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:], strict=True):
        region = Region(int(model.region_of(0.5 * (a + b))))
        if region is Region.NONE:
            continue
        eta = np.linspace(a, b, _n_segments(1.0, b - a, step) + 1)
        total += float(trapezoid(model.region_capacity(np.maximum(eta, MIN_DISTANCE_M), region), eta))
    return total / (d_hi - d_lo)


def bulk_closed_form(
    path: StraightLinePath, model: SupportsCapacity, overheads: OverheadTimes | None = None
) -> ClosedFormBulk:
    """
    Constant-speed approximation: (contact time - overheads) times the distance-averaged capacity.

    The entry angle is measured against the mmWave threshold, cos(alpha) = sqrt(1 - (d_min / d_th^mm)^2).
    """
    overheads = overheads or OverheadTimes()
    if path.d_min > model.d_th_mm:
        return ClosedFormBulk(bits=0.0, usable_time=-overheads.total, degenerate=True)
    cos_alpha = math.sqrt(1.0 - (path.d_min / model.d_th_mm) ** 2)
    usable = 2.0 * model.d_th_mm * cos_alpha / path.speed - overheads.total
    if usable <= 0.0:
        logger.warning(f"Overheads exceed the contact time at v={path.speed:.3g} m/s; bulk clamped to 0")
        return ClosedFormBulk(bits=0.0, usable_time=usable, degenerate=True)
    bits = usable * average_capacity(model, path.d_min, model.d_th_mm)
    return ClosedFormBulk(bits=bits, usable_time=usable, degenerate=False)

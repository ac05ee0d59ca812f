"""
Multi-vehicle slot scheduling at one tower.

A SlotGrid holds, for every slot of a journey, the vehicles that stay in range for the whole slot and
the bits each could exchange there without overhead (n_tilde). Three schedulers fill the grid:
exhaustive search, the greedy heuristic and a uniformly random admissible baseline. All of them are
scored by `evaluate_assignment`, which charges the overhead time on every switched-in slot and caps
each vehicle's counted bits at its remaining demand.
"""

import csv
import math
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import TextIO

import numpy as np
import numpy.typing as npt
from joblib import Parallel, delayed
from loguru import logger

from data_shower.bulk import integrate_span, interval_bulks
from data_shower.channel import SupportsCapacity
from data_shower.errors import BudgetExceededError, DomainError, TraceLoadError
from data_shower.trajectory import TraceTrajectory, Trajectory

type FloatArray = npt.NDArray[np.float64]
type Demands = Mapping[str, VehicleDemand]
type Assignment = Sequence[str | None]

DEFAULT_SLOT_DURATION_S = 0.0865
DEFAULT_BUDGET = 1.0e8
CAPPING_RULE = "min(remaining, slot_bits)"
ENUMERATION_CHUNK = 1 << 16
UNASSIGNED = -1


@dataclass(frozen=True)
class VehicleDemand:
    vehicle_id: str  # vehicle identifier
    demand: float  # D_v, bits for this journey
    overhead: float = 0.0  # T^O_v, s charged on every switched-in slot

    def __post_init__(self) -> None:
        if self.demand < 0.0:
            raise ValueError(f"demand of {self.vehicle_id} must be >= 0, got {self.demand}")
        if self.overhead < 0.0:
            raise ValueError(f"overhead of {self.vehicle_id} must be >= 0, got {self.overhead}")


def _candidate_mask(candidates: Sequence[frozenset[str]], vehicle_ids: Sequence[str]) -> npt.NDArray[np.bool_]:
    mask = [[v in cands for v in vehicle_ids] for cands in candidates]
    return np.array(mask, dtype=bool).reshape(len(candidates), len(vehicle_ids))


@dataclass(frozen=True, eq=False)
class SlotGrid:
    slot_duration: float  # T, s
    slots: tuple[int, ...]  # global slot indices, consecutive
    vehicle_ids: tuple[str, ...]  # column order of n_tilde
    candidates: tuple[frozenset[str], ...]  # V^k per slot
    n_tilde: FloatArray  # (K, V) overhead-free bits, 0 for non-candidates
    t0: float = 0.0  # start time of global slot 0, s
    trajectories: Mapping[str, Trajectory] | None = None  # exact switched-slot integrals when present
    model: SupportsCapacity | None = None

    def __post_init__(self) -> None:
        n_tilde = np.array(self.n_tilde, dtype=float)
        if self.slot_duration <= 0.0:
            raise ValueError(f"slot_duration must be > 0, got {self.slot_duration}")
        if n_tilde.shape != (len(self.slots), len(self.vehicle_ids)):
            expected = (len(self.slots), len(self.vehicle_ids))
            raise ValueError(f"n_tilde shape {n_tilde.shape} does not match (slots, vehicles) = {expected}")
        if len(self.candidates) != len(self.slots):
            raise ValueError("one candidate set per slot is required")
        if any(b - a != 1 for a, b in zip(self.slots[:-1], self.slots[1:], strict=True)):
            raise ValueError("slot indices must be consecutive")
        known = set(self.vehicle_ids)
        for k, cands in zip(self.slots, self.candidates, strict=True):
            if not cands:
                raise ValueError(f"slot {k} has no candidate vehicle")
            if not cands <= known:
                raise ValueError(f"slot {k} lists unknown vehicles {sorted(cands - known)}")
        if np.any(n_tilde < 0.0):
            raise ValueError("n_tilde must be >= 0")
        n_tilde = np.where(_candidate_mask(self.candidates, self.vehicle_ids), n_tilde, 0.0)
        n_tilde.setflags(write=False)
        object.__setattr__(self, "n_tilde", n_tilde)

    @property
    def n_slots(self) -> int:
        return len(self.slots)

    @property
    def n_vehicles(self) -> int:
        return len(self.vehicle_ids)

    @property
    def candidate_mask(self) -> npt.NDArray[np.bool_]:
        return _candidate_mask(self.candidates, self.vehicle_ids)

    def column(self, vehicle_id: str) -> int:
        return self.vehicle_ids.index(vehicle_id)

    def slot_start(self, k: int) -> float:
        """Start time of the k-th slot of this grid (local index)."""
        return self.t0 + self.slots[k] * self.slot_duration

    def fresh_bits(self, k: int, vehicle_id: str, overhead: float) -> float:
        """Bits of slot k when the vehicle is switched in there and loses `overhead` seconds."""
        j = self.column(vehicle_id)
        if overhead <= 0.0:
            return float(self.n_tilde[k, j])
        if overhead >= self.slot_duration:
            return 0.0
        start = self.slot_start(k)
        if self.trajectories is not None and self.model is not None:
            end = start + self.slot_duration
            return integrate_span(self.trajectories[vehicle_id], self.model, start + overhead, end)
        return float(self.n_tilde[k, j]) * (self.slot_duration - overhead) / self.slot_duration

    def switched_bits(self, demands: Demands) -> FloatArray:
        """(K, V) bits of every candidate cell when the vehicle is switched in there (chi = 1)."""
        result = np.zeros_like(self.n_tilde)
        mask = self.candidate_mask
        starts = self.t0 + np.asarray(self.slots, dtype=float) * self.slot_duration
        for j, vehicle_id in enumerate(self.vehicle_ids):
            overhead = _demand_of(demands, vehicle_id).overhead
            rows = mask[:, j]
            if overhead <= 0.0:
                result[rows, j] = self.n_tilde[rows, j]
            elif overhead >= self.slot_duration:
                continue
            elif self.trajectories is not None and self.model is not None:
                trajectory = self.trajectories[vehicle_id]
                ends = starts[rows] + self.slot_duration
                result[rows, j] = interval_bulks(trajectory, self.model, starts[rows] + overhead, ends)
            else:
                result[rows, j] = self.n_tilde[rows, j] * (self.slot_duration - overhead) / self.slot_duration
        return result


@dataclass(frozen=True, eq=False)
class Schedule:
    grid: SlotGrid  # the problem this schedule solves
    algorithm: str  # optimal | greedy | random | custom
    assignment: tuple[str | None, ...]  # vehicle per slot, None when unassigned
    bits: FloatArray  # counted bits per slot
    switched: tuple[bool, ...]  # chi per slot
    delivered: dict[str, float]  # N_v
    operations: int = 0  # elementary selections performed by the scheduler
    metadata: dict[str, str] = field(default_factory=lambda: {"capping": CAPPING_RULE})

    @property
    def total(self) -> float:
        return float(sum(self.delivered.values()))

    @property
    def phi(self) -> npt.NDArray[np.int_]:
        """Binary (K, V) assignment matrix."""
        matrix = np.zeros((self.grid.n_slots, self.grid.n_vehicles), dtype=int)
        for k, vehicle_id in enumerate(self.assignment):
            if vehicle_id is not None:
                matrix[k, self.grid.column(vehicle_id)] = 1
        return matrix

    @property
    def switch_count(self) -> int:
        """Number of changes of the served vehicle between consecutive assigned slots."""
        served = [v for v in self.assignment if v is not None]
        return sum(1 for a, b in zip(served[:-1], served[1:], strict=True) if a != b)


def _demand_of(demands: Demands, vehicle_id: str) -> VehicleDemand:
    try:
        return demands[vehicle_id]
    except KeyError as e:
        raise DomainError(f"no demand given for vehicle {vehicle_id}") from e


def _max_distance(trajectory: Trajectory, starts: FloatArray, ends: FloatArray) -> FloatArray:
    """Maximum distance over each [start, end]; trajectories are convex or piecewise linear between breakpoints."""
    d_max = np.maximum(trajectory.distances(starts), trajectory.distances(ends))
    if isinstance(trajectory, TraceTrajectory):
        lo = np.searchsorted(trajectory.times, starts, side="right")
        hi = np.searchsorted(trajectory.times, ends, side="left")
        for ix in np.flatnonzero(hi > lo):
            d_max[ix] = max(d_max[ix], float(trajectory.distances_m[lo[ix] : hi[ix]].max()))
    return d_max


def _vehicle_cells(
    trajectory: Trajectory, model: SupportsCapacity, t0: float, slot_duration: float, n_total: int
) -> tuple[npt.NDArray[np.int_], FloatArray]:
    """Global indices of the slots a vehicle covers entirely in range, with their n_tilde."""
    span_lo, span_hi = trajectory.span
    tol = 1.0e-9 * max(1.0, abs(span_hi))
    k_lo = max(0, math.ceil((span_lo - t0) / slot_duration - 1.0e-9))
    k_hi = min(n_total, math.floor((span_hi - t0) / slot_duration + 1.0e-9))
    ks = np.arange(k_lo, k_hi)
    starts = t0 + ks * slot_duration
    ends = starts + slot_duration
    inside = (starts >= span_lo - tol) & (ends <= span_hi + tol)
    ks, starts, ends = ks[inside], np.clip(starts[inside], span_lo, span_hi), np.clip(ends[inside], span_lo, span_hi)
    if ks.size == 0:
        return ks, np.zeros(0)
    member = _max_distance(trajectory, starts, ends) <= model.d_th_mm
    ks, starts, ends = ks[member], starts[member], ends[member]
    return ks, interval_bulks(trajectory, model, starts, ends)


def build_slot_grid(
    trajectories: Mapping[str, Trajectory],
    model: SupportsCapacity,
    slot_duration: float = DEFAULT_SLOT_DURATION_S,
    t0: float | None = None,
    n_jobs: int = 1,
) -> list[SlotGrid]:
    """
    Slot the common horizon of all trajectories and compute n_tilde for every (slot, vehicle) cell.

    A vehicle is a candidate of a slot only if its distance stays within d_th^mm for the whole slot.
    Empty slots separate journeys; each run of non-empty slots is returned as its own SlotGrid.
    """
    if not trajectories:
        raise DomainError("at least one vehicle is required")
    if slot_duration <= 0.0:
        raise DomainError(f"slot_duration must be > 0, got {slot_duration}")
    vehicle_ids = tuple(trajectories)
    origin = min(tr.span[0] for tr in trajectories.values()) if t0 is None else t0
    horizon = max(tr.span[1] for tr in trajectories.values())
    n_total = max(0, math.floor((horizon - origin) / slot_duration + 1.0e-9))

    cells = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_vehicle_cells)(trajectories[v], model, origin, slot_duration, n_total) for v in vehicle_ids
    )
    n_tilde = np.zeros((n_total, len(vehicle_ids)))
    mask = np.zeros((n_total, len(vehicle_ids)), dtype=bool)
    for j, (ks, bits) in enumerate(cells):
        n_tilde[ks, j] = bits
        mask[ks, j] = True

    occupied = mask.any(axis=1)
    grids = []
    k = 0
    while k < n_total:
        if not occupied[k]:
            k += 1
            continue
        end = k
        while end < n_total and occupied[end]:
            end += 1
        candidates = tuple(
            frozenset(v for j, v in enumerate(vehicle_ids) if mask[row, j]) for row in range(k, end)
        )
        grids.append(
            SlotGrid(
                slot_duration=slot_duration,
                slots=tuple(range(k, end)),
                vehicle_ids=vehicle_ids,
                candidates=candidates,
                n_tilde=n_tilde[k:end],
                t0=origin,
                trajectories=dict(trajectories),
                model=model,
            )
        )
        k = end
    if not grids:
        logger.warning("No vehicle stays in range for a whole slot; the grid is empty")
    else:
        logger.debug(f"Built {len(grids)} slot grid(s) over {n_total} slots for {len(vehicle_ids)} vehicles")
    return grids


def slot_bits(grid: SlotGrid, demands: Demands, assignment: Assignment, k: int, vehicle_id: str) -> float:
    """
    Bits n_v^k exchanged by `vehicle_id` in slot k given the assignment of the earlier slots.

    The overhead is charged when the vehicle was not served in slot k - 1 (chi = 1).
    """
    if vehicle_id not in grid.candidates[k]:
        raise DomainError(f"vehicle {vehicle_id} is not a candidate of slot {grid.slots[k]}")
    switched = k == 0 or assignment[k - 1] != vehicle_id
    if not switched:
        return float(grid.n_tilde[k, grid.column(vehicle_id)])
    return grid.fresh_bits(k, vehicle_id, _demand_of(demands, vehicle_id).overhead)


def evaluate_assignment(
    grid: SlotGrid,
    demands: Demands,
    assignment: Assignment,
    algorithm: str = "custom",
    switched_bits: FloatArray | None = None,
    operations: int = 0,
) -> Schedule:
    """
    Score an assignment: counted bits per slot, chi flags and N_v.

    Each slot counts min(remaining demand, slot bits). A slot given to a vehicle whose demand is already
    met is left unassigned, so the next vehicle served after it is switched in.
    """
    if len(assignment) != grid.n_slots:
        raise DomainError(f"assignment covers {len(assignment)} slots, grid has {grid.n_slots}")
    fresh = grid.switched_bits(demands) if switched_bits is None else switched_bits
    remaining = {v: _demand_of(demands, v).demand for v in grid.vehicle_ids}
    delivered = dict.fromkeys(grid.vehicle_ids, 0.0)
    final: list[str | None] = []
    bits = np.zeros(grid.n_slots)
    chi: list[bool] = []
    previous: str | None = None
    for k, vehicle_id in enumerate(assignment):
        if vehicle_id is None or remaining[vehicle_id] <= 0.0:
            final.append(None)
            chi.append(False)
            previous = None
            continue
        if vehicle_id not in grid.candidates[k]:
            raise DomainError(f"vehicle {vehicle_id} is not a candidate of slot {grid.slots[k]}")
        j = grid.column(vehicle_id)
        switched = vehicle_id != previous
        available = fresh[k, j] if switched else grid.n_tilde[k, j]
        counted = min(remaining[vehicle_id], float(available))
        remaining[vehicle_id] -= counted
        delivered[vehicle_id] += counted
        bits[k] = counted
        final.append(vehicle_id)
        chi.append(switched)
        previous = vehicle_id
    return Schedule(
        grid=grid,
        algorithm=algorithm,
        assignment=tuple(final),
        bits=bits,
        switched=tuple(chi),
        delivered=delivered,
        operations=operations,
    )


def _pick(indices: npt.NDArray[np.int_], rng: np.random.Generator | None) -> int:
    if indices.size == 1 or rng is None:
        return int(indices[0])
    return int(rng.choice(indices))


def schedule_greedy(
    grid: SlotGrid,
    demands: Demands,
    rng: np.random.Generator | None = None,
    switched_bits: FloatArray | None = None,
) -> Schedule:
    """
    Greedy scheduling.

    Singleton slots are served first in time order, slots left without candidates are dropped, then the
    remaining (slot, vehicle) cell with the largest overhead-free n_tilde is taken repeatedly. When several
    slots share the maximum, the slot whose other candidates offer the least is preferred; residual ties
    are broken uniformly at random with `rng` (first index when rng is None).
    """
    n_slots, n_vehicles = grid.n_tilde.shape
    budget = np.array([_demand_of(demands, v).demand for v in grid.vehicle_ids], dtype=float)
    active = grid.candidate_mask & (budget > 0.0)[np.newaxis, :]
    open_slots = np.ones(n_slots, dtype=bool)
    chosen = np.full(n_slots, UNASSIGNED, dtype=int)
    operations = 0

    def assign(k: int, j: int) -> None:
        chosen[k] = j
        open_slots[k] = False
        budget[j] -= grid.n_tilde[k, j]
        if budget[j] <= 0.0:
            active[:, j] = False

    # singleton slots, in time order
    for k in range(n_slots):
        operations += n_vehicles
        row = np.flatnonzero(active[k])
        if open_slots[k] and row.size == 1:
            assign(k, int(row[0]))

    values = np.where(active, grid.n_tilde, -np.inf)
    while True:
        open_slots &= active.any(axis=1)
        rows = np.flatnonzero(open_slots)
        if rows.size == 0:
            break
        operations += rows.size * n_vehicles
        vals = np.where(active[rows], values[rows], -np.inf)
        row_max = vals.max(axis=1)
        tied = np.flatnonzero(row_max == row_max.max())
        if tied.size == 1:
            i = int(tied[0])
        else:
            # slot whose other candidates have the least to offer
            others = np.where(active[rows[tied]], values[rows[tied]], 0.0).sum(axis=1) - row_max[tied]
            i = _pick(tied[others == others.min()], rng)
        k = int(rows[i])
        j = _pick(np.flatnonzero(vals[i] == row_max[i]), rng)
        assign(k, j)

    assignment = [grid.vehicle_ids[j] if j != UNASSIGNED else None for j in chosen]
    logger.debug(f"Greedy scheduled {n_slots} slots x {n_vehicles} vehicles in {operations} operations")
    return evaluate_assignment(grid, demands, assignment, "greedy", switched_bits=switched_bits, operations=operations)


def schedule_random(
    grid: SlotGrid, demands: Demands, rng: np.random.Generator, switched_bits: FloatArray | None = None
) -> Schedule:
    """Serve each slot, in time order, with a uniformly drawn candidate whose demand is not yet met."""
    fresh = grid.switched_bits(demands) if switched_bits is None else switched_bits
    remaining = {v: _demand_of(demands, v).demand for v in grid.vehicle_ids}
    assignment: list[str | None] = []
    previous: str | None = None
    for k in range(grid.n_slots):
        eligible = [v for v in grid.vehicle_ids if v in grid.candidates[k] and remaining[v] > 0.0]
        if not eligible:
            assignment.append(None)
            previous = None
            continue
        vehicle_id = eligible[int(rng.integers(len(eligible)))]
        j = grid.column(vehicle_id)
        available = grid.n_tilde[k, j] if vehicle_id == previous else fresh[k, j]
        remaining[vehicle_id] -= min(remaining[vehicle_id], float(available))
        assignment.append(vehicle_id)
        previous = vehicle_id
    return evaluate_assignment(grid, demands, assignment, "random", switched_bits=fresh, operations=grid.n_slots)


def count_assignments(grid: SlotGrid) -> float:
    return float(math.prod(len(c) for c in grid.candidates))


def schedule_optimal(
    grid: SlotGrid, demands: Demands, budget: float = DEFAULT_BUDGET, switched_bits: FloatArray | None = None
) -> Schedule:
    """
    Exhaustive search over every assignment with one candidate per slot.

    Assignments are enumerated in lexicographic order of the candidates' column indices, slot by slot,
    and the first one reaching the maximum N is returned.
    """
    n_assignments = count_assignments(grid)
    if n_assignments > budget:
        raise BudgetExceededError(n_assignments, budget)
    fresh = grid.switched_bits(demands) if switched_bits is None else switched_bits
    mask = grid.candidate_mask
    choices = [np.flatnonzero(mask[k]) for k in range(grid.n_slots)]
    radices = np.array([c.size for c in choices], dtype=np.int64)
    demand0 = np.array([_demand_of(demands, v).demand for v in grid.vehicle_ids], dtype=float)
    total_count = int(n_assignments)

    best_total = -np.inf
    best_index = 0
    for first in range(0, total_count, ENUMERATION_CHUNK):
        index = np.arange(first, min(first + ENUMERATION_CHUNK, total_count), dtype=np.int64)
        # mixed-radix digits, the last slot varying fastest
        digits = np.empty((index.size, grid.n_slots), dtype=np.int64)
        rest = index.copy()
        for k in range(grid.n_slots - 1, -1, -1):
            rest, digits[:, k] = np.divmod(rest, radices[k])
        totals = _evaluate_batch(grid, fresh, demand0, choices, digits)
        i = int(np.argmax(totals))
        if totals[i] > best_total:
            best_total = float(totals[i])
            best_index = int(index[i])

    digits_best = []
    rest_best = best_index
    for k in range(grid.n_slots - 1, -1, -1):
        rest_best, digit = divmod(rest_best, int(radices[k]))
        digits_best.append(digit)
    digits_best.reverse()
    assignment = [grid.vehicle_ids[int(choices[k][d])] for k, d in enumerate(digits_best)]
    logger.debug(f"Exhaustive search evaluated {total_count} assignments; best N = {best_total:.6g}")
    return evaluate_assignment(grid, demands, assignment, "optimal", switched_bits=fresh, operations=total_count)


def _evaluate_batch(
    grid: SlotGrid,
    fresh: FloatArray,
    demand0: FloatArray,
    choices: list[npt.NDArray[np.intp]],
    digits: npt.NDArray[np.int64],
) -> FloatArray:
    """Vectorized N of a batch of assignments, with the same rules as evaluate_assignment."""
    batch = digits.shape[0]
    rows = np.arange(batch)
    remaining = np.tile(demand0, (batch, 1))
    previous = np.full(batch, UNASSIGNED, dtype=np.int64)
    total = np.zeros(batch)
    for k in range(grid.n_slots):
        column = choices[k][digits[:, k]]
        left = remaining[rows, column]
        live = left > 0.0
        available = np.where(previous == column, grid.n_tilde[k, column], fresh[k, column])
        counted = np.where(live, np.minimum(left, available), 0.0)
        remaining[rows, column] = left - counted
        total += counted
        previous = np.where(live, column, UNASSIGNED)
    return total


def _write_provenance(f: TextIO, provenance: str | None) -> None:
    if provenance is not None:
        f.write(f"# {provenance}\n")


def _data_rows(f: TextIO) -> Iterator[tuple[int, list[str]]]:
    """CSV rows with their 1-based line numbers, skipping blank and `#` comment lines."""
    for line_no, row in enumerate(csv.reader(f), start=1):
        if row and not row[0].startswith("#"):
            yield line_no, row


def write_schedule(schedules: Schedule | Sequence[Schedule], path: str | Path, provenance: str | None = None) -> None:
    """Write `slot_index,t_start_s,vehicle_id,bits,switched` rows, one per slot of every schedule."""
    if isinstance(schedules, Schedule):
        schedules = [schedules]
    rows = 0
    with open(path, "w", newline="") as f:
        _write_provenance(f, provenance)
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["slot_index", "t_start_s", "vehicle_id", "bits", "switched"])
        for schedule in schedules:
            grid = schedule.grid
            for k, vehicle_id in enumerate(schedule.assignment):
                writer.writerow(
                    [
                        grid.slots[k],
                        f"{grid.slot_start(k):.10g}",
                        vehicle_id or "",
                        f"{schedule.bits[k]:.10g}",
                        int(schedule.switched[k]),
                    ]
                )
                rows += 1
    logger.info(f"Wrote {rows} rows to {path}")


def write_instance(
    grid: SlotGrid,
    demands: Demands,
    matrix_path: str | Path,
    demands_path: str | Path,
    provenance: str | None = None,
) -> None:
    """
    Export a grid as an n_tilde CSV (`slot_index,t_start_s,<vehicle ids>`, empty cells for non-candidates)
    plus a `vehicle_id,demand_bits,overhead_s` demands CSV.
    """
    with open(matrix_path, "w", newline="") as f:
        _write_provenance(f, provenance)
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["slot_index", "t_start_s", *grid.vehicle_ids])
        for k in range(grid.n_slots):
            cells = [
                repr(float(grid.n_tilde[k, j])) if v in grid.candidates[k] else ""
                for j, v in enumerate(grid.vehicle_ids)
            ]
            writer.writerow([grid.slots[k], repr(grid.slot_start(k)), *cells])
    with open(demands_path, "w", newline="") as f:
        _write_provenance(f, provenance)
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["vehicle_id", "demand_bits", "overhead_s"])
        for v in grid.vehicle_ids:
            demand = _demand_of(demands, v)
            writer.writerow([v, repr(demand.demand), repr(demand.overhead)])


def read_instance(
    matrix_path: str | Path, demands_path: str | Path, slot_duration: float | None = None
) -> tuple[SlotGrid, dict[str, VehicleDemand]]:
    """
    Load an instance written by `write_instance`.

    The slot duration is inferred from consecutive slot start times unless given. Within a slot the
    capacity is taken as constant, so a switched slot keeps (T - T^O) / T of its n_tilde.
    """
    slots: list[int] = []
    starts: list[float] = []
    rows: list[list[float]] = []
    candidates: list[frozenset[str]] = []
    with open(matrix_path, newline="") as f:
        rows_in = _data_rows(f)
        header_line, header = next(rows_in, (1, []))
        if header[:2] != ["slot_index", "t_start_s"] or len(header) < 3:
            raise TraceLoadError("expected header slot_index,t_start_s,<vehicle ids>", str(matrix_path), header_line)
        vehicle_ids = tuple(header[2:])
        for line, row in rows_in:
            if len(row) != len(header):
                raise TraceLoadError(f"expected {len(header)} cells, got {len(row)}", str(matrix_path), line)
            try:
                slots.append(int(row[0]))
                starts.append(float(row[1]))
                rows.append([float(cell) if cell.strip() else 0.0 for cell in row[2:]])
            except ValueError as e:
                raise TraceLoadError(f"bad instance cell: {e}", str(matrix_path), line) from e
            candidates.append(frozenset(v for v, cell in zip(vehicle_ids, row[2:], strict=True) if cell.strip()))

    if slot_duration is None:
        if len(slots) < 2:
            raise TraceLoadError("cannot infer the slot duration from a single slot", str(matrix_path))
        slot_duration = (starts[1] - starts[0]) / (slots[1] - slots[0])
    t0 = starts[0] - slots[0] * slot_duration if starts else 0.0
    try:
        grid = SlotGrid(
            slot_duration=slot_duration,
            slots=tuple(slots),
            vehicle_ids=vehicle_ids,
            candidates=tuple(candidates),
            n_tilde=np.asarray(rows, dtype=float).reshape(len(slots), len(vehicle_ids)),
            t0=t0,
        )
    except ValueError as e:
        raise TraceLoadError(str(e), str(matrix_path)) from e

    demands: dict[str, VehicleDemand] = {}
    with open(demands_path, newline="") as f:
        rows_in = _data_rows(f)
        _, fields = next(rows_in, (1, []))
        for line, cells in rows_in:
            record = dict(zip(fields, cells, strict=False))
            try:
                demand = VehicleDemand(
                    vehicle_id=record["vehicle_id"],
                    demand=float(record["demand_bits"]),
                    overhead=float(record["overhead_s"]),
                )
            except (KeyError, TypeError, ValueError) as e:
                raise TraceLoadError(f"bad demand row: {e}", str(demands_path), line) from e
            demands[demand.vehicle_id] = demand
    logger.debug(f"Read instance with {grid.n_slots} slots and {grid.n_vehicles} vehicles from {matrix_path}")
    return grid, demands

"""
Tick-driven simulation of the chunk / cumulative-ACK access protocol over one vehicle's pass.

Each tick of `chunk_duration` carries one chunk on the best available band: THz data with mmWave ACKs
inside d_th^THz, mmWave data with LTE ACKs up to d_th^mm. The chunk is filled with as many packets as
the tick's integrated capacity allows, retransmissions first. Its cumulative ACK arrives `ack_delay`
after the tick ends; packets it reports lost join the head of the next chunk built after that, and a
lost ACK makes the whole chunk go out again. Every contact window is split into an uplink phase and a
downlink phase separated by a guard time; packets still missing when a phase ends are not delivered.
"""

import csv
import heapq
import itertools
from dataclasses import dataclass, field
from enum import StrEnum
from functools import cached_property
from pathlib import Path

import numpy as np
import numpy.typing as npt
from loguru import logger

from data_shower.bulk import MIN_DISTANCE_M, interval_bulks
from data_shower.channel import SupportsCapacity
from data_shower.errors import DomainError, TraceLoadError
from data_shower.trajectory import Trajectory, contact_windows

type FloatArray = npt.NDArray[np.float64]
type IdArray = npt.NDArray[np.int64]

TIME_EPS_S = 1.0e-9


class ChannelMode(StrEnum):
    THZ_DATA_MMWAVE_ACK = "THzData_mmWaveAck"
    MMWAVE_DATA_LTE_ACK = "mmWaveData_LteAck"
    NO_LINK = "NoLink"


def select_mode(d: float, model: SupportsCapacity) -> ChannelMode:
    """Band used for data at distance d; d_th^THz itself still selects THz."""
    if not d > 0.0:
        raise DomainError(f"distance must be > 0 m, got {d}")
    if d <= model.d_th_thz:
        return ChannelMode.THZ_DATA_MMWAVE_ACK
    if d <= model.d_th_mm:
        return ChannelMode.MMWAVE_DATA_LTE_ACK
    return ChannelMode.NO_LINK


@dataclass(frozen=True, eq=False)
class Chunk:
    chunk_id: int  # 1-based, in sending order
    packet_ids: IdArray  # retransmissions first, strictly increasing
    t_sent: float  # start of the tick carrying the chunk, s
    n_retransmitted: int = 0  # leading ids that are retransmissions


@dataclass(frozen=True, eq=False)
class CumulativeAck:
    chunk_id: int  # chunk being acknowledged
    received_ok: npt.NDArray[np.bool_]  # one flag per packet of the chunk
    t_sent: float  # end of the tick that carried the chunk, s


@dataclass(frozen=True)
class ProtocolConfig:
    chunk_duration: float = 0.01  # s, one chunk per tick
    packet_size: float = 1.0e6  # bits
    thz_loss_prob: float = 0.0  # per-packet loss on THz data
    mmwave_loss_prob: float = 0.0  # per-packet loss on mmWave data
    ack_loss_prob: float = 0.0  # per-ACK loss
    ack_delay: float | None = None  # s after the tick end; None means one chunk duration
    ul_dl_split: float = 0.5  # fraction of each contact window given to the uplink
    phase_switch_guard: float = 0.0  # s idle between the uplink and downlink phases
    outage_bursts: bool = False  # whole-chunk losses from a two-state outage process
    burst_exit_prob: float = 0.5  # per-tick probability of leaving an outage burst
    record_chunks: bool = False  # keep every chunk and ACK in the report

    def __post_init__(self) -> None:
        if self.chunk_duration <= 0.0:
            raise ValueError(f"chunk_duration must be > 0, got {self.chunk_duration}")
        if self.packet_size <= 0.0:
            raise ValueError(f"packet_size must be > 0, got {self.packet_size}")
        for name in ("thz_loss_prob", "mmwave_loss_prob", "ack_loss_prob", "burst_exit_prob", "ul_dl_split"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.ack_delay is not None and self.ack_delay < 0.0:
            raise ValueError(f"ack_delay must be >= 0, got {self.ack_delay}")
        if self.phase_switch_guard < 0.0:
            raise ValueError(f"phase_switch_guard must be >= 0, got {self.phase_switch_guard}")

    @property
    def effective_ack_delay(self) -> float:
        return self.chunk_duration if self.ack_delay is None else self.ack_delay

    def loss_prob(self, mode: ChannelMode) -> float:
        if mode is ChannelMode.THZ_DATA_MMWAVE_ACK:
            return self.thz_loss_prob
        if mode is ChannelMode.MMWAVE_DATA_LTE_ACK:
            return self.mmwave_loss_prob
        return 1.0


@dataclass(frozen=True)
class ScriptedLosses:
    packets: frozenset[tuple[int, int]] = frozenset()  # (chunk_id, packet_id) data losses
    acks: frozenset[int] = frozenset()  # chunk ids whose ACK is lost

    @cached_property
    def _by_chunk(self) -> dict[int, IdArray]:
        grouped: dict[int, list[int]] = {}
        for chunk_id, packet_id in self.packets:
            grouped.setdefault(chunk_id, []).append(packet_id)
        return {c: np.asarray(sorted(ids), dtype=np.int64) for c, ids in grouped.items()}

    def packets_of(self, chunk_id: int) -> IdArray:
        """Packet ids scripted to be lost in the given chunk."""
        return self._by_chunk.get(chunk_id, np.zeros(0, dtype=np.int64))


def read_scripted_losses(path: str | Path) -> ScriptedLosses:
    """
    Read a scripted-loss file: `chunk_id,packet_id` lines drop data packets, `ack,chunk_id` lines drop ACKs.

    Blank lines and lines starting with `#` are ignored.
    """
    packets = set()
    acks = set()
    with open(path, newline="") as f:
        for line_no, row in enumerate(csv.reader(f), start=1):
            if not row or not "".join(row).strip() or row[0].strip().startswith("#"):
                continue
            if len(row) != 2:
                raise TraceLoadError(f"expected 2 fields, got {len(row)}", str(path), line_no)
            first, second = (cell.strip() for cell in row)
            try:
                if first.lower() == "ack":
                    acks.add(int(second))
                else:
                    packets.add((int(first), int(second)))
            except ValueError as e:
                raise TraceLoadError(f"bad scripted loss: {e}", str(path), line_no) from e
    return ScriptedLosses(packets=frozenset(packets), acks=frozenset(acks))


@dataclass(frozen=True, eq=False)
class SessionReport:
    contact_time: float  # summed contact window length, s
    delivered_bits: float  # unique bits received
    offered_bits: float  # bits sent, retransmissions included
    retransmitted_bits: float  # bits sent again
    mode_switches: int  # changes of the data band between consecutive ticks
    new_packets: int  # distinct packet ids offered
    delivered_packets: int  # distinct packet ids received
    latencies: FloatArray  # first send to delivery, per delivered packet, s
    tick_t: FloatArray  # tick start times, s
    tick_mode: tuple[ChannelMode, ...]  # band per tick
    tick_offered: FloatArray  # bits per tick
    tick_delivered: FloatArray  # newly delivered bits per tick
    tick_retx: FloatArray  # retransmitted bits per tick
    chunks: tuple[Chunk, ...] = ()  # filled when record_chunks is set
    acks: tuple[CumulativeAck, ...] = ()  # filled when record_chunks is set
    guard_time: float = 0.0  # idle guard time inside the contact windows, s
    metadata: dict[str, str] = field(default_factory=dict)

    @property
    def goodput(self) -> float:
        """Unique delivered bits per second of contact time."""
        return self.delivered_bits / self.contact_time if self.contact_time > 0.0 else 0.0

    @classmethod
    def empty(cls) -> "SessionReport":
        none = np.zeros(0)
        return cls(
            contact_time=0.0,
            delivered_bits=0.0,
            offered_bits=0.0,
            retransmitted_bits=0.0,
            mode_switches=0,
            new_packets=0,
            delivered_packets=0,
            latencies=none,
            tick_t=none,
            tick_mode=(),
            tick_offered=none,
            tick_delivered=none,
            tick_retx=none,
        )


@dataclass
class _Flow:
    """Mutable state of one session; packet ids are global across phases."""

    capacity: int  # upper bound on packet ids
    next_id: int = 1
    next_chunk: int = 1
    delivered: npt.NDArray[np.bool_] = field(init=False)
    first_sent: FloatArray = field(init=False)
    in_outage: bool = False
    chunks: list[Chunk] = field(default_factory=list)
    acks: list[CumulativeAck] = field(default_factory=list)
    latencies: list[FloatArray] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.delivered = np.zeros(self.capacity + 1, dtype=bool)
        self.first_sent = np.zeros(self.capacity + 1)


def _tick_edges(t_a: float, t_b: float, duration: float) -> tuple[FloatArray, FloatArray]:
    if t_b - t_a <= TIME_EPS_S:
        return np.zeros(0), np.zeros(0)
    n = int(np.ceil((t_b - t_a) / duration - TIME_EPS_S))
    starts = t_a + np.arange(n) * duration
    ends = np.minimum(starts + duration, t_b)
    return starts, ends


def _run_phase(
    trajectory: Trajectory,
    model: SupportsCapacity,
    config: ProtocolConfig,
    rng: np.random.Generator,
    losses: ScriptedLosses,
    flow: _Flow,
    starts: FloatArray,
    ends: FloatArray,
    packets_per_tick: npt.NDArray[np.int64],
    rows: dict[str, list],
) -> None:
    retx_queue: IdArray = np.zeros(0, dtype=np.int64)
    order = itertools.count()
    heap: list[tuple[float, int, int, IdArray]] = []  # (arrival, order, chunk_id, ids to resend)
    mids = np.maximum(trajectory.distances(0.5 * (starts + ends)), MIN_DISTANCE_M)
    outage_entry = model.outage_prob(mids) if config.outage_bursts else None
    ack_delay = config.effective_ack_delay

    for i, (t_a, t_b) in enumerate(zip(starts, ends, strict=True)):
        while heap and heap[0][0] <= t_a + TIME_EPS_S:
            _, _, _, resend = heapq.heappop(heap)
            if resend.size:
                retx_queue = np.sort(np.concatenate([retx_queue, resend]))
        mode = select_mode(float(mids[i]), model)
        n = int(packets_per_tick[i]) if mode is not ChannelMode.NO_LINK else 0
        if outage_entry is not None:
            if flow.in_outage:
                flow.in_outage = rng.random() >= config.burst_exit_prob
            else:
                flow.in_outage = rng.random() < float(outage_entry[i])

        offered = delivered = retx = 0.0
        if n > 0:
            n_retx = min(n, retx_queue.size)
            resent, retx_queue = retx_queue[:n_retx], retx_queue[n_retx:]
            fresh = np.arange(flow.next_id, flow.next_id + n - n_retx, dtype=np.int64)
            flow.next_id += fresh.size
            flow.first_sent[fresh] = t_a
            ids = np.concatenate([resent, fresh])
            chunk = Chunk(chunk_id=flow.next_chunk, packet_ids=ids, t_sent=float(t_a), n_retransmitted=n_retx)
            flow.next_chunk += 1

            lost = rng.random(ids.size) < config.loss_prob(mode)
            if flow.in_outage:
                lost[:] = True
            if losses.packets:
                lost |= np.isin(ids, losses.packets_of(chunk.chunk_id))
            received = ids[~lost]
            newly = received[~flow.delivered[received]]
            flow.delivered[newly] = True
            flow.latencies.append(t_b - flow.first_sent[newly])

            ack_lost = bool(rng.random() < config.ack_loss_prob) or chunk.chunk_id in losses.acks
            resend = ids if ack_lost else ids[lost]
            heapq.heappush(heap, (float(t_b) + ack_delay, next(order), chunk.chunk_id, resend))
            if config.record_chunks:
                flow.chunks.append(chunk)
                flow.acks.append(CumulativeAck(chunk_id=chunk.chunk_id, received_ok=~lost, t_sent=float(t_b)))

            offered = ids.size * config.packet_size
            delivered = newly.size * config.packet_size
            retx = n_retx * config.packet_size

        rows["t"].append(float(t_a))
        rows["mode"].append(mode)
        rows["offered"].append(offered)
        rows["delivered"].append(delivered)
        rows["retx"].append(retx)


def run_session(
    trajectory: Trajectory,
    model: SupportsCapacity,
    config: ProtocolConfig,
    rng: np.random.Generator,
    losses: ScriptedLosses | None = None,
) -> SessionReport:
    """Simulate the protocol over every contact window of the trajectory."""
    losses = losses or ScriptedLosses()
    windows = contact_windows(trajectory, model.d_th_mm)
    if not windows:
        logger.warning("No contact window; the session report is empty")
        return SessionReport.empty()

    phases: list[tuple[float, float]] = []
    guard_time = 0.0
    for window in windows:
        split = window.t_in + config.ul_dl_split * window.duration
        if window.t_in < split < window.t_out:
            guard = min(config.phase_switch_guard, window.t_out - split)
            guard_time += guard
            phases += [(window.t_in, split), (split + guard, window.t_out)]
        else:
            phases.append((window.t_in, window.t_out))

    edges = [_tick_edges(a, b, config.chunk_duration) for a, b in phases]
    tick_bits = [interval_bulks(trajectory, model, s, e) if s.size else np.zeros(0) for s, e in edges]
    packets = [np.floor(bits / config.packet_size).astype(np.int64) for bits in tick_bits]
    flow = _Flow(capacity=int(sum(int(p.sum()) for p in packets)))
    rows: dict[str, list] = {"t": [], "mode": [], "offered": [], "delivered": [], "retx": []}
    for (starts, ends), per_tick in zip(edges, packets, strict=True):
        _run_phase(trajectory, model, config, rng, losses, flow, starts, ends, per_tick, rows)

    modes = tuple(rows["mode"])
    switches = sum(1 for a, b in zip(modes[:-1], modes[1:], strict=True) if a != b)
    latencies = np.concatenate(flow.latencies) if flow.latencies else np.zeros(0)
    report = SessionReport(
        contact_time=sum(w.duration for w in windows),
        delivered_bits=float(np.sum(rows["delivered"])),
        offered_bits=float(np.sum(rows["offered"])),
        retransmitted_bits=float(np.sum(rows["retx"])),
        mode_switches=switches,
        new_packets=flow.next_id - 1,
        delivered_packets=int(flow.delivered.sum()),
        latencies=latencies,
        tick_t=np.asarray(rows["t"], dtype=float),
        tick_mode=modes,
        tick_offered=np.asarray(rows["offered"], dtype=float),
        tick_delivered=np.asarray(rows["delivered"], dtype=float),
        tick_retx=np.asarray(rows["retx"], dtype=float),
        chunks=tuple(flow.chunks),
        acks=tuple(flow.acks),
        guard_time=guard_time,
    )
    logger.debug(
        f"Session: {len(modes)} ticks, {report.new_packets} packets, goodput {report.goodput:.4g} bit/s, "
        f"{report.mode_switches} mode switches"
    )
    return report


def write_session_ticks(report: SessionReport, path: str | Path, provenance: str | None = None) -> None:
    with open(path, "w", newline="") as f:
        if provenance is not None:
            f.write(f"# {provenance}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["t_s", "mode", "offered_bits", "delivered_bits", "retx_bits"])
        for t, mode, offered, delivered, retx in zip(
            report.tick_t, report.tick_mode, report.tick_offered, report.tick_delivered, report.tick_retx, strict=True
        ):
            writer.writerow([f"{t:.10g}", mode.value, f"{offered:.10g}", f"{delivered:.10g}", f"{retx:.10g}"])


def session_summary(report: SessionReport) -> dict[str, float | int]:
    latencies = report.latencies
    return {
        "contact_time_s": report.contact_time,
        "goodput_bps": report.goodput,
        "delivered_bits": report.delivered_bits,
        "offered_bits": report.offered_bits,
        "retransmitted_bits": report.retransmitted_bits,
        "mode_switches": report.mode_switches,
        "new_packets": report.new_packets,
        "delivered_packets": report.delivered_packets,
        "latency_mean_s": float(latencies.mean()) if latencies.size else 0.0,
        "latency_p95_s": float(np.percentile(latencies, 95)) if latencies.size else 0.0,
        "latency_max_s": float(latencies.max()) if latencies.size else 0.0,
    }


def write_session_summary(report: SessionReport, path: str | Path, provenance: str | None = None) -> None:
    """Write the session counters as `key=value` lines, after an optional `# provenance` comment."""
    with open(path, "w", newline="") as f:
        if provenance is not None:
            f.write(f"# {provenance}\n")
        for key, value in session_summary(report).items():
            f.write(f"{key}={value:.10g}\n" if isinstance(value, float) else f"{key}={value}\n")

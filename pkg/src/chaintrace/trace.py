"""Core domain types: telemetry records, columnar streams, and sliding windows.

Streams store their records column-wise in numpy arrays so that window
evaluation over multi-hour traces stays cheap; the record dataclasses are
the per-row view used for construction and inspection.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterator, Sequence

import numpy as np

US_PER_S = 1_000_000


def sec_to_us(seconds: float) -> int:
    return int(round(seconds * US_PER_S))


class Direction(IntEnum):
    UL = 0
    DL = 1

    @property
    def opposite(self) -> "Direction":
        return Direction.DL if self is Direction.UL else Direction.UL


class Side(IntEnum):
    LOCAL = 0
    REMOTE = 1

    @property
    def opposite(self) -> "Side":
        return Side.REMOTE if self is Side.LOCAL else Side.LOCAL


class PacketKind(IntEnum):
    MEDIA = 0
    RTCP = 1


class GccState(IntEnum):
    NORMAL = 0
    OVERUSE = 1
    UNDERUSE = 2


@dataclass(frozen=True)
class RanRecord:
    """One scheduling grant / transmission seen at the radio layer."""

    ts: int
    dir: Direction
    rnti: int
    prb: int
    mcs: int
    tbs_bits: int
    is_own_ue: bool = True
    harq_retx: bool = False
    rlc_retx: bool = False
    proactive_grant: bool = False


@dataclass(frozen=True)
class PacketRecord:
    """One packet with send/receive timestamps on a shared clock."""

    send_ts: int
    recv_ts: int
    dir: Direction
    size_bytes: int
    kind: PacketKind = PacketKind.MEDIA

    @property
    def one_way_delay_us(self) -> int:
        return self.recv_ts - self.send_ts


@dataclass(frozen=True)
class AppRecord:
    """One application-layer statistics sample from one client."""

    ts: int
    side: Side
    in_fps: float
    out_fps: float
    out_res_height: int
    jitter_buffer_ms: float
    target_bitrate_bps: float
    pushback_rate_bps: float
    gcc_state: GccState
    outstanding_bytes: int
    cwnd_bytes: int
    app_send_rate_bps: float


def _stable_order(ts: np.ndarray) -> np.ndarray:
    return np.argsort(ts, kind="stable")


@dataclass(frozen=True, eq=False)
class RanStream:
    ts_us: np.ndarray
    dir: np.ndarray
    rnti: np.ndarray
    prb: np.ndarray
    mcs: np.ndarray
    tbs_bits: np.ndarray
    own: np.ndarray
    harq_retx: np.ndarray
    rlc_retx: np.ndarray
    proactive: np.ndarray

    _FIELDS = ("ts_us", "dir", "rnti", "prb", "mcs", "tbs_bits", "own",
               "harq_retx", "rlc_retx", "proactive")

    @classmethod
    def from_arrays(cls, ts_us, dir, rnti, prb, mcs, tbs_bits, own,
                    harq_retx, rlc_retx, proactive) -> "RanStream":
        return cls(
            np.asarray(ts_us, dtype=np.int64),
            np.asarray(dir, dtype=np.int8),
            np.asarray(rnti, dtype=np.int64),
            np.asarray(prb, dtype=np.int64),
            np.asarray(mcs, dtype=np.int64),
            np.asarray(tbs_bits, dtype=np.int64),
            np.asarray(own, dtype=bool),
            np.asarray(harq_retx, dtype=bool),
            np.asarray(rlc_retx, dtype=bool),
            np.asarray(proactive, dtype=bool),
        )

    @classmethod
    def from_records(cls, records: Sequence[RanRecord]) -> "RanStream":
        return cls.from_arrays(
            [r.ts for r in records], [r.dir for r in records],
            [r.rnti for r in records], [r.prb for r in records],
            [r.mcs for r in records], [r.tbs_bits for r in records],
            [r.is_own_ue for r in records], [r.harq_retx for r in records],
            [r.rlc_retx for r in records], [r.proactive_grant for r in records],
        )

    @classmethod
    def empty(cls) -> "RanStream":
        return cls.from_arrays([], [], [], [], [], [], [], [], [], [])

    def __len__(self) -> int:
        return self.ts_us.size

    def record(self, i: int) -> RanRecord:
        return RanRecord(
            int(self.ts_us[i]), Direction(int(self.dir[i])), int(self.rnti[i]),
            int(self.prb[i]), int(self.mcs[i]), int(self.tbs_bits[i]),
            bool(self.own[i]), bool(self.harq_retx[i]), bool(self.rlc_retx[i]),
            bool(self.proactive[i]),
        )

    def __iter__(self) -> Iterator[RanRecord]:
        return (self.record(i) for i in range(len(self)))

    def __eq__(self, other) -> bool:
        if not isinstance(other, RanStream):
            return NotImplemented
        return all(np.array_equal(getattr(self, f), getattr(other, f)) for f in self._FIELDS)

    def take(self, index: np.ndarray) -> "RanStream":
        return RanStream(*(getattr(self, f)[index] for f in self._FIELDS))

    def slice_range(self, lo: int, hi: int) -> "RanStream":
        return RanStream(*(getattr(self, f)[lo:hi] for f in self._FIELDS))

    def sorted_by_ts(self) -> "RanStream":
        return self.take(_stable_order(self.ts_us))

    def slice_time(self, start_us: int, end_us: int) -> "RanStream":
        lo, hi = np.searchsorted(self.ts_us, (start_us, end_us), side="left")
        return self.slice_range(int(lo), int(hi))


@dataclass(frozen=True, eq=False)
class PacketStream:
    send_us: np.ndarray
    recv_us: np.ndarray
    dir: np.ndarray
    size_bytes: np.ndarray
    kind: np.ndarray

    _FIELDS = ("send_us", "recv_us", "dir", "size_bytes", "kind")

    @classmethod
    def from_arrays(cls, send_us, recv_us, dir, size_bytes, kind) -> "PacketStream":
        return cls(
            np.asarray(send_us, dtype=np.int64),
            np.asarray(recv_us, dtype=np.int64),
            np.asarray(dir, dtype=np.int8),
            np.asarray(size_bytes, dtype=np.int64),
            np.asarray(kind, dtype=np.int8),
        )

    @classmethod
    def from_records(cls, records: Sequence[PacketRecord]) -> "PacketStream":
        return cls.from_arrays(
            [r.send_ts for r in records], [r.recv_ts for r in records],
            [r.dir for r in records], [r.size_bytes for r in records],
            [r.kind for r in records],
        )

    @classmethod
    def empty(cls) -> "PacketStream":
        return cls.from_arrays([], [], [], [], [])

    def __len__(self) -> int:
        return self.send_us.size

    def record(self, i: int) -> PacketRecord:
        return PacketRecord(
            int(self.send_us[i]), int(self.recv_us[i]), Direction(int(self.dir[i])),
            int(self.size_bytes[i]), PacketKind(int(self.kind[i])),
        )

    def __iter__(self) -> Iterator[PacketRecord]:
        return (self.record(i) for i in range(len(self)))

    def __eq__(self, other) -> bool:
        if not isinstance(other, PacketStream):
            return NotImplemented
        return all(np.array_equal(getattr(self, f), getattr(other, f)) for f in self._FIELDS)

    @property
    def delay_ms(self) -> np.ndarray:
        return (self.recv_us - self.send_us) / 1000.0

    def take(self, index: np.ndarray) -> "PacketStream":
        return PacketStream(*(getattr(self, f)[index] for f in self._FIELDS))

    def slice_range(self, lo: int, hi: int) -> "PacketStream":
        return PacketStream(*(getattr(self, f)[lo:hi] for f in self._FIELDS))

    def sorted_by_ts(self) -> "PacketStream":
        return self.take(_stable_order(self.send_us))

    def slice_time(self, start_us: int, end_us: int) -> "PacketStream":
        # Packets belong to the window that contains their send timestamp.
        lo, hi = np.searchsorted(self.send_us, (start_us, end_us), side="left")
        return self.slice_range(int(lo), int(hi))


@dataclass(frozen=True, eq=False)
class AppStream:
    ts_us: np.ndarray
    side: np.ndarray
    in_fps: np.ndarray
    out_fps: np.ndarray
    res_height: np.ndarray
    jb_ms: np.ndarray
    target_bps: np.ndarray
    pushback_bps: np.ndarray
    gcc_state: np.ndarray
    outstanding_bytes: np.ndarray
    cwnd_bytes: np.ndarray
    send_rate_bps: np.ndarray

    _FIELDS = ("ts_us", "side", "in_fps", "out_fps", "res_height", "jb_ms",
               "target_bps", "pushback_bps", "gcc_state", "outstanding_bytes",
               "cwnd_bytes", "send_rate_bps")

    @classmethod
    def from_arrays(cls, ts_us, side, in_fps, out_fps, res_height, jb_ms,
                    target_bps, pushback_bps, gcc_state, outstanding_bytes,
                    cwnd_bytes, send_rate_bps) -> "AppStream":
        return cls(
            np.asarray(ts_us, dtype=np.int64),
            np.asarray(side, dtype=np.int8),
            np.asarray(in_fps, dtype=np.float64),
            np.asarray(out_fps, dtype=np.float64),
            np.asarray(res_height, dtype=np.int64),
            np.asarray(jb_ms, dtype=np.float64),
            np.asarray(target_bps, dtype=np.float64),
            np.asarray(pushback_bps, dtype=np.float64),
            np.asarray(gcc_state, dtype=np.int8),
            np.asarray(outstanding_bytes, dtype=np.int64),
            np.asarray(cwnd_bytes, dtype=np.int64),
            np.asarray(send_rate_bps, dtype=np.float64),
        )

    @classmethod
    def from_records(cls, records: Sequence[AppRecord]) -> "AppStream":
        return cls.from_arrays(
            [r.ts for r in records], [r.side for r in records],
            [r.in_fps for r in records], [r.out_fps for r in records],
            [r.out_res_height for r in records], [r.jitter_buffer_ms for r in records],
            [r.target_bitrate_bps for r in records], [r.pushback_rate_bps for r in records],
            [r.gcc_state for r in records], [r.outstanding_bytes for r in records],
            [r.cwnd_bytes for r in records], [r.app_send_rate_bps for r in records],
        )

    @classmethod
    def empty(cls) -> "AppStream":
        return cls.from_arrays([], [], [], [], [], [], [], [], [], [], [], [])

    def __len__(self) -> int:
        return self.ts_us.size

    def record(self, i: int) -> AppRecord:
        return AppRecord(
            int(self.ts_us[i]), Side(int(self.side[i])), float(self.in_fps[i]),
            float(self.out_fps[i]), int(self.res_height[i]), float(self.jb_ms[i]),
            float(self.target_bps[i]), float(self.pushback_bps[i]),
            GccState(int(self.gcc_state[i])), int(self.outstanding_bytes[i]),
            int(self.cwnd_bytes[i]), float(self.send_rate_bps[i]),
        )

    def __iter__(self) -> Iterator[AppRecord]:
        return (self.record(i) for i in range(len(self)))

    def __eq__(self, other) -> bool:
        if not isinstance(other, AppStream):
            return NotImplemented
        return all(np.array_equal(getattr(self, f), getattr(other, f)) for f in self._FIELDS)

    def take(self, index: np.ndarray) -> "AppStream":
        return AppStream(*(getattr(self, f)[index] for f in self._FIELDS))

    def slice_range(self, lo: int, hi: int) -> "AppStream":
        return AppStream(*(getattr(self, f)[lo:hi] for f in self._FIELDS))

    def sorted_by_ts(self) -> "AppStream":
        return self.take(_stable_order(self.ts_us))

    def slice_time(self, start_us: int, end_us: int) -> "AppStream":
        lo, hi = np.searchsorted(self.ts_us, (start_us, end_us), side="left")
        return self.slice_range(int(lo), int(hi))


@dataclass(frozen=True)
class TraceMeta:
    cell: str = ""
    duplexing: str = ""
    bandwidth_mhz: float = 0.0


@dataclass(frozen=True, eq=False)
class Trace:
    """Time-aligned bundle of the three telemetry streams for one call."""

    ran: RanStream
    packets: PacketStream
    app: AppStream
    meta: TraceMeta = field(default_factory=TraceMeta)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trace):
            return NotImplemented
        return (self.ran == other.ran and self.packets == other.packets
                and self.app == other.app and self.meta == other.meta)

    @classmethod
    def empty(cls) -> "Trace":
        return cls(RanStream.empty(), PacketStream.empty(), AppStream.empty())

    def is_empty(self) -> bool:
        return len(self.ran) == 0 and len(self.packets) == 0 and len(self.app) == 0

    def start_us(self) -> int:
        starts = []
        if len(self.ran):
            starts.append(int(self.ran.ts_us[0]))
        if len(self.packets):
            starts.append(int(self.packets.send_us[0]))
        if len(self.app):
            starts.append(int(self.app.ts_us[0]))
        if not starts:
            raise ValueError("empty trace has no time span")
        return min(starts)

    def end_us(self) -> int:
        ends = []
        if len(self.ran):
            ends.append(int(self.ran.ts_us[-1]))
        if len(self.packets):
            ends.append(int(self.packets.send_us[-1]))
        if len(self.app):
            ends.append(int(self.app.ts_us[-1]))
        if not ends:
            raise ValueError("empty trace has no time span")
        return max(ends)

    def span_us(self) -> int:
        return self.end_us() - self.start_us()


@dataclass(frozen=True)
class Window:
    """Half-open analysis interval [start_us, start_us + length_s)."""

    start_us: int
    length_s: float = 5.0

    def __post_init__(self) -> None:
        if self.length_s <= 0:
            raise ValueError(f"window length must be positive, got {self.length_s}")

    @property
    def length_us(self) -> int:
        return sec_to_us(self.length_s)

    @property
    def end_us(self) -> int:
        return self.start_us + self.length_us

    def contains(self, ts_us: int) -> bool:
        return self.start_us <= ts_us < self.end_us


@dataclass(frozen=True)
class WindowView:
    """Per-stream sub-views of a trace restricted to one window."""

    window: Window
    ran: RanStream
    packets: PacketStream
    app: AppStream

    def is_empty(self) -> bool:
        return len(self.ran) == 0 and len(self.packets) == 0 and len(self.app) == 0


def slice(trace: Trace, window: Window) -> WindowView:  # noqa: A001 - domain term
    """Select exactly the records whose timestamp falls inside the window.

    Packets are keyed on their send timestamp: a packet's delay is
    attributed to the window in which it was sent.
    """
    return WindowView(
        window,
        trace.ran.slice_time(window.start_us, window.end_us),
        trace.packets.slice_time(window.start_us, window.end_us),
        trace.app.slice_time(window.start_us, window.end_us),
    )


def advance(window: Window, step_s: float) -> Window:
    """Move the window forward by ``step_s`` seconds, keeping its length."""
    if step_s <= 0:
        raise ValueError(f"step must be positive, got {step_s}")
    return Window(window.start_us + sec_to_us(step_s), window.length_s)


def bucket_mean(values, ts_us=None, *, count: int | None = None,
                duration_us: int | None = None, origin_us: int | None = None) -> np.ndarray:
    """Average a sample series over fixed-size buckets.

    Count mode (``count=N``): consecutive groups of N samples; a trailing
    partial group is dropped. Duration mode (``duration_us=D``): fixed time
    bins of D microseconds starting at ``origin_us`` (default: first
    timestamp); empty bins are skipped. Exactly one mode must be given.
    """
    values = np.asarray(values, dtype=np.float64)
    if (count is None) == (duration_us is None):
        raise ValueError("specify exactly one of count= or duration_us=")
    if count is not None:
        if count <= 0:
            raise ValueError("bucket count must be positive")
        n = values.size // count
        if n == 0:
            return np.empty(0, dtype=np.float64)
        return values[: n * count].reshape(n, count).mean(axis=1)
    if duration_us <= 0:
        raise ValueError("bucket duration must be positive")
    if ts_us is None:
        raise ValueError("duration mode needs timestamps")
    ts_us = np.asarray(ts_us, dtype=np.int64)
    if ts_us.size != values.size:
        raise ValueError("timestamps and values must have equal length")
    if values.size == 0:
        return np.empty(0, dtype=np.float64)
    if origin_us is None:
        origin_us = int(ts_us[0])
    idx = (ts_us - origin_us) // duration_us
    _, starts = np.unique(idx, return_index=True)
    sums = np.add.reduceat(values, starts)
    counts = np.diff(np.append(starts, values.size))
    return sums / counts


def nearest_rank(values, p: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest value."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ValueError("percentile of empty series")
    k = max(1, int(np.ceil(p / 100.0 * values.size)))
    k = min(k, values.size)
    return float(np.sort(values, kind="stable")[k - 1])

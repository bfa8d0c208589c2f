"""Window event conditions and the 36-dimensional feature vector.

Twenty rule conditions are evaluated per window: ten application-side
conditions instantiated for both clients (local/remote), two packet-path
delay conditions, six radio conditions instantiated for both link
directions, and two structural radio conditions. That yields the fixed
2*10 + 2 + 6*2 + 2 = 36 slot layout.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, fields, replace
from enum import Enum, IntEnum
from pathlib import Path

import numpy as np

from .trace import (AppStream, Direction, GccState, PacketKind, PacketStream,
                    RanStream, Side, Trace, Window, WindowView, advance,
                    bucket_mean, nearest_rank, sec_to_us, slice as slice_window)

log = logging.getLogger(__name__)

DEFAULT_WINDOW_S = 5.0
DEFAULT_STEP_S = 0.5


class Family(Enum):
    """Which telemetry stream a condition reads, fixing its slot expansion."""

    APP = "app"
    PACKETS = "packets"
    RAN = "ran"


class SideRole(Enum):
    """How an app-side condition picks its client when bound to a chain node."""

    SENDER = "sender"
    RECEIVER = "receiver"


class PathLeg(Enum):
    """Whether a packet-path condition watches the media or the feedback leg."""

    FORWARD = "forward"
    REVERSE = "reverse"


class EventId(IntEnum):
    A1_IN_FPS_DROP = 1
    A2_OUT_FPS_DROP = 2
    A3_OUT_RES_DROP = 3
    A4_JB_DRAIN = 4
    A5_TARGET_DROP = 5
    A6_GCC_OVERUSE = 6
    A7_PUSHBACK_DROP = 7
    A8_CWND_FULL = 8
    A9_OUTSTANDING_UP = 9
    A10_PUSHBACK_NEQ_TARGET = 10
    N11_FWD_DELAY_UP = 11
    N12_REV_DELAY_UP = 12
    R13_TBS_DROP = 13
    R14_RATE_GAP = 14
    R15_CROSS_TRAFFIC = 15
    R16_CHANNEL_DEGRADED = 16
    R17_HARQ_RETX = 17
    R18_RLC_RETX = 18
    S19_UL_SCHEDULING = 19
    S20_RRC_CHANGE = 20


@dataclass(frozen=True)
class EventInfo:
    key: str
    family: Family
    role: SideRole | None = None
    leg: PathLeg | None = None


EVENT_INFO: dict[EventId, EventInfo] = {
    EventId.A1_IN_FPS_DROP: EventInfo("in_fps_drop", Family.APP, role=SideRole.RECEIVER),
    EventId.A2_OUT_FPS_DROP: EventInfo("out_fps_drop", Family.APP, role=SideRole.SENDER),
    EventId.A3_OUT_RES_DROP: EventInfo("out_res_drop", Family.APP, role=SideRole.SENDER),
    EventId.A4_JB_DRAIN: EventInfo("jb_drain", Family.APP, role=SideRole.RECEIVER),
    EventId.A5_TARGET_DROP: EventInfo("target_bitrate_drop", Family.APP, role=SideRole.SENDER),
    EventId.A6_GCC_OVERUSE: EventInfo("gcc_overuse", Family.APP, role=SideRole.SENDER),
    EventId.A7_PUSHBACK_DROP: EventInfo("pushback_rate_drop", Family.APP, role=SideRole.SENDER),
    EventId.A8_CWND_FULL: EventInfo("cwnd_full", Family.APP, role=SideRole.SENDER),
    EventId.A9_OUTSTANDING_UP: EventInfo("outstanding_up", Family.APP, role=SideRole.SENDER),
    EventId.A10_PUSHBACK_NEQ_TARGET: EventInfo("pushback_neq_target", Family.APP, role=SideRole.SENDER),
    EventId.N11_FWD_DELAY_UP: EventInfo("fwd_delay_up", Family.PACKETS, leg=PathLeg.FORWARD),
    EventId.N12_REV_DELAY_UP: EventInfo("rev_delay_up", Family.PACKETS, leg=PathLeg.REVERSE),
    EventId.R13_TBS_DROP: EventInfo("tbs_drop", Family.RAN),
    EventId.R14_RATE_GAP: EventInfo("rate_gap", Family.RAN),
    EventId.R15_CROSS_TRAFFIC: EventInfo("cross_traffic", Family.RAN),
    EventId.R16_CHANNEL_DEGRADED: EventInfo("channel_degraded", Family.RAN),
    EventId.R17_HARQ_RETX: EventInfo("harq_retx", Family.RAN),
    EventId.R18_RLC_RETX: EventInfo("rlc_retx", Family.RAN),
    EventId.S19_UL_SCHEDULING: EventInfo("ul_scheduling", Family.RAN),
    EventId.S20_RRC_CHANGE: EventInfo("rrc_change", Family.RAN),
}

KEY_TO_EVENT = {info.key: eid for eid, info in EVENT_INFO.items()}

APP_EVENTS = tuple(e for e in EventId if EVENT_INFO[e].family is Family.APP)
PACKET_EVENTS = (EventId.N11_FWD_DELAY_UP, EventId.N12_REV_DELAY_UP)
DIRECTIONAL_RAN_EVENTS = (EventId.R13_TBS_DROP, EventId.R14_RATE_GAP,
                          EventId.R15_CROSS_TRAFFIC, EventId.R16_CHANNEL_DEGRADED,
                          EventId.R17_HARQ_RETX, EventId.R18_RLC_RETX)
GLOBAL_RAN_EVENTS = (EventId.S19_UL_SCHEDULING, EventId.S20_RRC_CHANGE)


@dataclass(frozen=True)
class Slot:
    """One feature-vector position: a condition plus its side/dir instance."""

    key: str
    sel: Side | Direction | None
    family: Family
    role: SideRole | None = None
    leg: PathLeg | None = None

    @property
    def name(self) -> str:
        if self.sel is None:
            return self.key
        return f"{self.key}[{self.sel.name.lower()}]"


class FeatureLayout:
    """Ordered slot list with (key, selector) -> index lookup."""

    def __init__(self, slots: tuple[Slot, ...]):
        self.slots = slots
        self._index = {(s.key, s.sel): i for i, s in enumerate(slots)}

    def __len__(self) -> int:
        return len(self.slots)

    def index(self, key: str, sel: Side | Direction | None = None) -> int:
        try:
            return self._index[(key, sel)]
        except KeyError:
            if sel is not None and (key, None) in self._index:
                return self._index[(key, None)]
            raise KeyError(f"no feature slot for {key!r} with selector {sel!r}") from None

    def has(self, key: str, sel: Side | Direction | None = None) -> bool:
        return (key, sel) in self._index or (key, None) in self._index

    def names(self) -> list[str]:
        return [s.name for s in self.slots]


def _canonical_slots() -> tuple[Slot, ...]:
    slots: list[Slot] = []
    for eid in APP_EVENTS:
        info = EVENT_INFO[eid]
        for side in (Side.LOCAL, Side.REMOTE):
            slots.append(Slot(info.key, side, Family.APP, role=info.role))
    for eid in PACKET_EVENTS:
        info = EVENT_INFO[eid]
        slots.append(Slot(info.key, None, Family.PACKETS, leg=info.leg))
    for eid in DIRECTIONAL_RAN_EVENTS:
        info = EVENT_INFO[eid]
        for dir in (Direction.UL, Direction.DL):
            slots.append(Slot(info.key, dir, Family.RAN))
    for eid in GLOBAL_RAN_EVENTS:
        info = EVENT_INFO[eid]
        slots.append(Slot(info.key, None, Family.RAN))
    return tuple(slots)


CANONICAL_LAYOUT = FeatureLayout(_canonical_slots())
FEATURE_DIM = len(CANONICAL_LAYOUT)


class FeatureVector:
    """Boolean event indicators for one window, in a fixed slot layout."""

    __slots__ = ("bits", "layout")

    def __init__(self, bits, layout: FeatureLayout = CANONICAL_LAYOUT):
        arr = np.asarray(bits, dtype=bool)
        if arr.shape != (len(layout),):
            raise ValueError(f"expected {len(layout)} bits, got {arr.shape}")
        self.bits = arr
        self.layout = layout

    def __len__(self) -> int:
        return self.bits.size

    def __getitem__(self, i: int) -> bool:
        return bool(self.bits[i])

    def get(self, event: EventId | str, sel: Side | Direction | None = None) -> bool:
        key = EVENT_INFO[event].key if isinstance(event, EventId) else event
        return bool(self.bits[self.layout.index(key, sel)])

    def true_slots(self) -> list[str]:
        return [s.name for s, b in zip(self.layout.slots, self.bits) if b]

    def to_bitstring(self) -> str:
        return "".join("1" if b else "0" for b in self.bits)

    @classmethod
    def from_bitstring(cls, s: str, layout: FeatureLayout = CANONICAL_LAYOUT) -> "FeatureVector":
        return cls([c == "1" for c in s], layout)

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)

    def __repr__(self) -> str:
        return f"FeatureVector({self.to_bitstring()})"


@dataclass(frozen=True)
class DetectorConfig:
    """Thresholds for the window conditions; readable from key=value files."""

    fps_hi: float = 27.0
    fps_lo: float = 25.0
    delay_hi_ms: float = 80.0
    tbs_drop_ratio: float = 0.8
    rate_gap_frac: float = 0.1
    cross_traffic_frac: float = 0.2
    mcs_hi: float = 20.0
    mcs_lo: float = 10.0
    mcs_lo_count: int = 10
    mcs_bucket_ms: float = 50.0
    harq_count: int = 10
    trend_bucket: int = 10

    def __post_init__(self) -> None:
        for f in fields(self):
            if getattr(self, f.name) <= 0:
                raise ValueError(f"threshold {f.name} must be positive")

    @classmethod
    def from_file(cls, path) -> "DetectorConfig":
        cfg = cls()
        overrides = {}
        known = {f.name: f.type for f in fields(cls)}
        for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{line_no}: expected key = value")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in known:
                raise ValueError(f"{path}:{line_no}: unknown threshold {key!r}")
            kind = int if known[key] == "int" else float
            overrides[key] = kind(float(value.strip()))
        return replace(cfg, **overrides)


# Table 5 row 17 as written uses a count of 20; the worked formula uses 10.
# The default config keeps 10; this preset applies the alternative reading.
HARQ_STRICT_PRESET = DetectorConfig(harq_count=20)


def _has_rise(a: np.ndarray) -> bool:
    return a.size >= 2 and bool(np.any(a[1:] > a[:-1]))


def _has_drop(a: np.ndarray) -> bool:
    return a.size >= 2 and bool(np.any(a[1:] < a[:-1]))


def _fps_drop(fps: np.ndarray, cfg: DetectorConfig) -> bool:
    if fps.size == 0:
        return False
    imax = int(np.argmax(fps))
    imin = int(np.argmin(fps))
    return (fps[imax] > cfg.fps_hi and fps[imin] < cfg.fps_lo and imax < imin)


def _delay_up(delay_ms: np.ndarray, cfg: DetectorConfig) -> bool:
    if delay_ms.size == 0:
        return False
    means = bucket_mean(delay_ms, count=cfg.trend_bucket)
    return _has_rise(means) and float(delay_ms.max()) > cfg.delay_hi_ms


def _tbs_drop(tbs: np.ndarray, cfg: DetectorConfig) -> bool:
    if tbs.size == 0:
        return False
    imax = int(np.argmax(tbs))
    imin = int(np.argmin(tbs))
    return (cfg.tbs_drop_ratio * tbs[imax] > tbs[imin] and imax < imin)


def ran_rate_fields(ran: RanStream, app: AppStream, dir: Direction
                    ) -> tuple[np.ndarray, np.ndarray] | None:
    """Per-grant capacity rate and the sender's app rate held to grant times.

    Capacity per grant is tbs_bits over the observed spacing to the next
    own-UE grant (the last grant reuses the previous spacing). The sending
    client's app rate is resampled onto grant timestamps by last-value-hold.
    Returns None when either series is too short to define a rate.
    """
    own = ran.take(np.flatnonzero(ran.own & (ran.dir == dir)))
    if len(own) < 2:
        return None
    sender = Side.LOCAL if dir == Direction.UL else Side.REMOTE
    app_rows = np.flatnonzero(app.side == sender)
    if app_rows.size == 0:
        return None
    spacing = np.diff(own.ts_us).astype(np.float64)
    spacing = np.append(spacing, spacing[-1])
    spacing = np.maximum(spacing, 1.0)
    tbs_rate = own.tbs_bits / (spacing / 1e6)
    app_ts = app.ts_us[app_rows]
    app_rate = app.send_rate_bps[app_rows]
    pos = np.searchsorted(app_ts, own.ts_us, side="right") - 1
    app_at_grant = app_rate[np.maximum(pos, 0)]
    return app_at_grant, tbs_rate


def _rate_gap(view: WindowView, dir: Direction, cfg: DetectorConfig) -> bool:
    rates = ran_rate_fields(view.ran, view.app, dir)
    if rates is None:
        return False
    app_rate, tbs_rate = rates
    return float(np.mean(app_rate - tbs_rate > 0)) > cfg.rate_gap_frac


def _cross_traffic(ran: RanStream, dir: Direction, cfg: DetectorConfig) -> bool:
    in_dir = ran.dir == dir
    other = int(ran.prb[in_dir & ~ran.own].sum())
    own = int(ran.prb[in_dir & ran.own].sum())
    return other > cfg.cross_traffic_frac * own


def _channel_degraded(ran: RanStream, dir: Direction, window: Window,
                      cfg: DetectorConfig) -> bool:
    rows = np.flatnonzero(ran.own & (ran.dir == dir))
    if rows.size == 0:
        return False
    ts = ran.ts_us[rows]
    mcs = ran.mcs[rows].astype(np.float64)
    bucket_us = sec_to_us(cfg.mcs_bucket_ms / 1000.0)
    idx = (ts - window.start_us) // bucket_us
    boundaries = np.flatnonzero(np.diff(idx)) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [rows.size]))
    p90_max = -np.inf
    low_median = 0
    for lo, hi in zip(starts, ends):
        group = mcs[lo:hi]
        p90_max = max(p90_max, nearest_rank(group, 90))
        if nearest_rank(group, 50) < cfg.mcs_lo:
            low_median += 1
    return p90_max < cfg.mcs_hi and low_median > cfg.mcs_lo_count


def _featurize_view(view: WindowView, cfg: DetectorConfig) -> FeatureVector:
    bits = np.zeros(FEATURE_DIM, dtype=bool)
    app = view.app
    for side in (Side.LOCAL, Side.REMOTE):
        rows = np.flatnonzero(app.side == side)
        if rows.size == 0:
            continue
        s = int(side)
        in_fps = app.in_fps[rows]
        out_fps = app.out_fps[rows]
        bits[0 + s] = _fps_drop(in_fps, cfg)
        bits[2 + s] = _fps_drop(out_fps, cfg)
        bits[4 + s] = _has_drop(app.res_height[rows])
        bits[6 + s] = bool(np.any(app.jb_ms[rows] == 0.0))
        bits[8 + s] = _has_drop(app.target_bps[rows])
        bits[10 + s] = bool(np.any(app.gcc_state[rows] == GccState.OVERUSE))
        bits[12 + s] = _has_drop(app.pushback_bps[rows])
        bits[14 + s] = bool(np.any(app.outstanding_bytes[rows] > app.cwnd_bytes[rows]))
        means = bucket_mean(app.outstanding_bytes[rows], count=cfg.trend_bucket)
        bits[16 + s] = _has_rise(means)
        bits[18 + s] = bool(np.any(app.target_bps[rows] != app.pushback_bps[rows]))
    pkts = view.packets
    delay = pkts.delay_ms
    bits[20] = _delay_up(delay[pkts.kind == PacketKind.MEDIA], cfg)
    bits[21] = _delay_up(delay[pkts.kind == PacketKind.RTCP], cfg)
    ran = view.ran
    for dir in (Direction.UL, Direction.DL):
        d = int(dir)
        own_dir = np.flatnonzero(ran.own & (ran.dir == dir))
        bits[22 + d] = _tbs_drop(ran.tbs_bits[own_dir], cfg)
        bits[24 + d] = _rate_gap(view, dir, cfg)
        bits[26 + d] = _cross_traffic(ran, dir, cfg)
        bits[28 + d] = _channel_degraded(ran, dir, view.window, cfg)
        bits[30 + d] = int(np.count_nonzero(ran.harq_retx[own_dir])) > cfg.harq_count
        bits[32 + d] = bool(np.any(ran.rlc_retx[own_dir]))
    own_rows = np.flatnonzero(ran.own)
    bits[34] = bool(np.any(ran.dir[own_rows] == Direction.UL))
    rnti = ran.rnti[own_rows]
    bits[35] = rnti.size >= 2 and bool(np.any(rnti[1:] != rnti[:-1]))
    return FeatureVector(bits)


_APP_SIDE_EVENTS = set(APP_EVENTS)
_RAN_DIR_EVENTS = set(DIRECTIONAL_RAN_EVENTS)


def detect(view: WindowView, event: EventId, sel: Side | Direction | None = None,
           cfg: DetectorConfig | None = None) -> bool:
    """Evaluate one condition on one window; empty relevant streams are False.

    App conditions require a Side selector, directional radio conditions a
    Direction; the packet-path and structural conditions take none.
    """
    cfg = cfg or DetectorConfig()
    if event in _APP_SIDE_EVENTS:
        if not isinstance(sel, Side):
            raise ValueError(f"{event.name} needs a Side selector")
    elif event in _RAN_DIR_EVENTS:
        if not isinstance(sel, Direction):
            raise ValueError(f"{event.name} needs a Direction selector")
    elif sel is not None:
        raise ValueError(f"{event.name} takes no selector")
    fv = _featurize_view(view, cfg)
    return fv.get(event, sel)


def featurize(trace: Trace, window: Window, cfg: DetectorConfig | None = None) -> FeatureVector:
    """Evaluate all 36 condition slots for one window of a trace."""
    cfg = cfg or DetectorConfig()
    return _featurize_view(slice_window(trace, window), cfg)


def plan_windows(trace: Trace, window_s: float = DEFAULT_WINDOW_S,
                 step_s: float = DEFAULT_STEP_S) -> list[Window]:
    """Window grid from trace start to end-W inclusive, stepped by step_s."""
    if trace.is_empty():
        raise ValueError("cannot window an empty trace")
    if window_s <= 0 or step_s <= 0:
        raise ValueError("window and step must be positive")
    start = trace.start_us()
    span = trace.span_us()
    w_us = sec_to_us(window_s)
    if span < w_us:
        log.warning("trace span %.3fs shorter than window %.3fs; using one "
                    "short window", span / 1e6, window_s)
        return [Window(start, max(span, 1) / 1e6)]
    step_us = sec_to_us(step_s)
    n = (span - w_us) // step_us + 1
    return [Window(start + i * step_us, window_s) for i in range(int(n))]


def featurize_all(trace: Trace, window_s: float = DEFAULT_WINDOW_S,
                  step_s: float = DEFAULT_STEP_S,
                  cfg: DetectorConfig | None = None,
                  evaluator=None) -> list[tuple[Window, FeatureVector]]:
    """Slide the window over the whole trace and featurize every position.

    ``evaluator`` defaults to the built-in conditions; a compiled detection
    plan's ``evaluate`` can be passed instead.
    """
    cfg = cfg or DetectorConfig()
    windows = plan_windows(trace, window_s, step_s)
    if evaluator is None:
        evaluator = lambda view: _featurize_view(view, cfg)  # noqa: E731
    out = []
    warned_empty_app = False
    for w in windows:
        view = slice_window(trace, w)
        if not warned_empty_app and len(trace.app) and len(view.app) == 0:
            warned_empty_app = True
        out.append((w, evaluator(view)))
    if len(trace.app) == 0:
        log.warning("app stream empty: application slots are all false")
    return out

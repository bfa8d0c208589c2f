"""Deterministic synthetic trace generator with machine-readable ground truth.

A two-client call is simulated over a slotted radio link: video frame
bursts and audio fill per-direction queues, a request-grant cycle services
them slot by slot, and the sender-side rate controller reacts to delayed
feedback riding the reverse path. Scenario scripts inject radio
impairments with quantified delay effects:

* degraded channel: modulation index and grant size ramp down, capacity
  falls below the send rate, the link queue builds and one-way delay
  climbs until the rate controller backs off;
* cross traffic: competing grants starve the client's share;
* retransmission storms: each retransmission round adds one fixed
  round-trip (10 ms) to the affected transport block's packets;
* link-layer recovery: a block abandoned after the retransmission limit
  is recovered ~105 ms later, and in-order delivery releases everything
  received meanwhile in one simultaneous burst;
* control-plane transitions: all transmission stops for ~300 ms, the
  radio identifier changes, and delay spikes toward 400 ms.

Every run is byte-deterministic for a fixed scenario and seed.
"""

from __future__ import annotations

import heapq
import json
import logging
from array import array
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .gcc import FeedbackSample, GccModel, JitterBuffer
from .trace import (AppStream, Direction, GccState, PacketKind, PacketStream,
                    RanStream, Side, Trace, TraceMeta, sec_to_us)

log = logging.getLogger(__name__)

MS = 1000

EVENT_KINDS = ("poor_channel", "cross_traffic", "harq_storm", "rlc_retx",
               "rrc_transition", "none")
ROUTINGS = ("jb_drain", "target_bitrate_drop", "pushback_rate_drop")

CAUSE_NODE = {"poor_channel": "poor_channel", "cross_traffic": "cross_traffic",
              "harq_storm": "harq_retx", "rlc_retx": "rlc_retx",
              "rrc_transition": "rrc_state"}

OTHER_UE_RNTI = 9001


def bits_per_prb(mcs: int) -> int:
    """Transport bits carried by one resource block in one slot."""
    return 36 * (mcs + 2)


@dataclass(frozen=True)
class CellProfile:
    name: str = "synthcell"
    duplexing: str = "tdd"            # "tdd" or "fdd"
    bandwidth_mhz: float = 20.0
    slot_ms: float = 0.5
    ul_sched_delay_ms: float = 10.0   # request-to-grant gap, within [5, 25]
    dl_sched_delay_ms: float = 1.5
    harq_rtt_ms: float = 10.0
    rlc_penalty_ms: float = 105.0
    rrc_blackout_ms: float = 300.0
    rrc_resume_ms: float = 70.0
    harq_limit: int = 4
    proactive_grants: bool = False
    proactive_period_ms: float = 5.0
    proactive_prb: int = 2
    prb_cap: int = 40
    base_mcs: int = 22
    own_rnti: int = 4601


@dataclass(frozen=True)
class InjectedEvent:
    kind: str
    start_s: float
    duration_s: float
    dir: Direction = Direction.UL     # impaired link direction
    params: dict = field(default_factory=dict)

    def interval_us(self) -> tuple[int, int]:
        return sec_to_us(self.start_s), sec_to_us(self.start_s + self.duration_s)


@dataclass(frozen=True)
class Scenario:
    duration_s: float = 40.0
    seed: int = 1
    base_delay_ms: float = 30.0
    media_bitrate_bps: float = 3.5e6
    packet_bytes: int = 600
    video_fps: float = 30.0
    audio_interval_ms: float = 20.0   # 0 disables the audio stream
    audio_bytes: int = 160
    rtcp_interval_ms: float = 50.0    # 0 disables feedback entirely
    app_tick_ms: float = 50.0
    media_dir: Direction = Direction.UL
    noise_delay_sigma_ms: float = 0.0
    fast_recovery: bool = False
    cell: CellProfile = field(default_factory=CellProfile)
    events: tuple[InjectedEvent, ...] = ()

    def validate(self) -> None:
        if self.duration_s <= 0:
            raise ValueError("scenario duration must be positive")
        for ev in self.events:
            if ev.kind not in EVENT_KINDS:
                raise ValueError(f"unknown event kind {ev.kind!r}")
            if ev.kind == "none":
                continue
            if ev.start_s < 0 or ev.start_s + ev.duration_s > self.duration_s:
                raise ValueError(f"event {ev.kind} at {ev.start_s}s leaves the "
                                 "scenario duration")

    def meta(self) -> TraceMeta:
        return TraceMeta(cell=self.cell.name, duplexing=self.cell.duplexing,
                         bandwidth_mhz=self.cell.bandwidth_mhz)


@dataclass(frozen=True)
class ExpectedChain:
    """One chain the detection pipeline must report for an injected event.

    Every analysis window whose start lies in [probe_lo_us, probe_hi_us]
    is required to contain the match.
    """

    match_dir: Direction
    cause: str
    consequence: str
    reverse_leg: bool
    probe_lo_us: int
    probe_hi_us: int


@dataclass(frozen=True)
class TruthEvent:
    kind: str
    dir: Direction
    start_us: int
    end_us: int
    routing: str
    expected: tuple[ExpectedChain, ...]
    allowed_causes: tuple[str, ...]
    allowed_lo_us: int
    allowed_hi_us: int
    params: dict = field(default_factory=dict)


@dataclass
class GroundTruth:
    scenario_name: str
    events: list[TruthEvent]

    def to_jsonl(self) -> str:
        lines = [json.dumps({"scenario": self.scenario_name,
                             "events": len(self.events)})]
        for ev in self.events:
            lines.append(json.dumps({
                "kind": ev.kind, "dir": ev.dir.name.lower(),
                "start_us": ev.start_us, "end_us": ev.end_us,
                "routing": ev.routing,
                "expected": [{
                    "match_dir": c.match_dir.name.lower(), "cause": c.cause,
                    "consequence": c.consequence, "reverse_leg": c.reverse_leg,
                    "probe_lo_us": c.probe_lo_us, "probe_hi_us": c.probe_hi_us,
                } for c in ev.expected],
                "allowed_causes": list(ev.allowed_causes),
                "allowed_lo_us": ev.allowed_lo_us,
                "allowed_hi_us": ev.allowed_hi_us,
                "params": ev.params}))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "GroundTruth":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        head = json.loads(lines[0])
        events = []
        for ln in lines[1:]:
            d = json.loads(ln)
            expected = tuple(ExpectedChain(
                Direction[c["match_dir"].upper()], c["cause"], c["consequence"],
                c["reverse_leg"], c["probe_lo_us"], c["probe_hi_us"])
                for c in d["expected"])
            events.append(TruthEvent(
                d["kind"], Direction[d["dir"].upper()], d["start_us"],
                d["end_us"], d["routing"], expected,
                tuple(d["allowed_causes"]), d["allowed_lo_us"],
                d["allowed_hi_us"], d.get("params", {})))
        return cls(head["scenario"], events)


class _Pkt:
    __slots__ = ("send_us", "size_bytes", "kind", "frame_id", "frame_pkts",
                 "dst", "report", "remaining_bits")

    def __init__(self, send_us, size_bytes, kind, frame_id, dst, report=None,
                 frame_pkts=0):
        self.send_us = send_us
        self.size_bytes = size_bytes
        self.kind = kind
        self.frame_id = frame_id
        self.frame_pkts = frame_pkts
        self.dst = dst
        self.report = report
        self.remaining_bits = size_bytes * 8


class _RanCols:
    def __init__(self):
        self.ts = array("q")
        self.dir = array("b")
        self.rnti = array("q")
        self.prb = array("q")
        self.mcs = array("q")
        self.tbs = array("q")
        self.own = array("b")
        self.harq = array("b")
        self.rlc = array("b")
        self.pro = array("b")

    def emit(self, ts, dir, rnti, prb, mcs, tbs, own, harq=False, rlc=False,
             proactive=False):
        self.ts.append(ts)
        self.dir.append(dir)
        self.rnti.append(rnti)
        self.prb.append(prb)
        self.mcs.append(mcs)
        self.tbs.append(tbs)
        self.own.append(own)
        self.harq.append(harq)
        self.rlc.append(rlc)
        self.pro.append(proactive)

    def stream(self) -> RanStream:
        return RanStream.from_arrays(self.ts, self.dir, self.rnti, self.prb,
                                     self.mcs, self.tbs, self.own, self.harq,
                                     self.rlc, self.pro).sorted_by_ts()


class _PktCols:
    def __init__(self):
        self.send = array("q")
        self.recv = array("q")
        self.dir = array("b")
        self.size = array("q")
        self.kind = array("b")

    def emit(self, send, recv, dir, size, kind):
        self.send.append(send)
        self.recv.append(recv)
        self.dir.append(dir)
        self.size.append(size)
        self.kind.append(kind)

    def stream(self) -> PacketStream:
        return PacketStream.from_arrays(self.send, self.recv, self.dir,
                                        self.size, self.kind).sorted_by_ts()


class _Link:
    """One radio direction: a FIFO queue served by slot grants."""

    def __init__(self, dir: Direction, scenario: Scenario, rng, ran: _RanCols,
                 pkts: _PktCols, deliveries, rnti_timeline):
        cell = scenario.cell
        self.dir = dir
        self.scenario = scenario
        self.cell = cell
        self.rng = rng
        self.ran = ran
        self.pkts = pkts
        self.deliveries = deliveries
        self.slot_us = sec_to_us(cell.slot_ms / 1000.0)
        base_us = sec_to_us(scenario.base_delay_ms / 1000.0)
        sched_us = sec_to_us(cell.ul_sched_delay_ms / 1000.0)
        if dir == Direction.UL:
            self.sched_delay_us = sched_us
            self.wire_us = max(3 * MS, base_us - sched_us - 1500)
        else:
            self.sched_delay_us = sec_to_us(cell.dl_sched_delay_ms / 1000.0)
            self.wire_us = max(3 * MS, base_us - 4 * MS)
        if cell.duplexing == "fdd":
            self.slot_offsets = tuple(range(10))
        elif dir == Direction.UL:
            self.slot_offsets = (7, 8, 9)
        else:
            self.slot_offsets = tuple(range(7))
        self.queue: deque[_Pkt] = deque()
        self.queue_bits = 0
        self.grant_ready_us: int | None = None
        self.arrivals: list[_Pkt] = []
        self.a_ptr = 0
        self.hol_until_us = 0
        self.held: list[_Pkt] = []
        self.seq = 0
        self.next_proactive_us = 0
        self.proactive_period_us = sec_to_us(cell.proactive_period_ms / 1000.0)
        self.harq_rtt_us = sec_to_us(cell.harq_rtt_ms / 1000.0)
        self.rlc_penalty_us = sec_to_us(cell.rlc_penalty_ms / 1000.0)
        self.noise_us = sec_to_us(scenario.noise_delay_sigma_ms / 1000.0)
        self.rnti_timeline = rnti_timeline
        self._rnti_ptr = 0
        self._compile_events()

    def _compile_events(self) -> None:
        slots_per_s = 1e6 / self.slot_us * len(self.slot_offsets) / 10.0
        self.radio_spans = []     # (t0, t1, ramp_end, mcs_lo, prb_lo)
        self.cross_spans = []     # (t0, t1, other_prb, own_cap)
        self.harq_spans = []      # (t0, t1, fraction, rounds)
        self.rlc_times: list[int] = []
        self.blackouts = []       # (t0, black_end, resume_end, data_end)
        cell = self.cell
        for ev in self.scenario.events:
            t0, t1 = ev.interval_us()
            p = ev.params
            if ev.kind == "rrc_transition":
                black_end = t0 + sec_to_us(cell.rrc_blackout_ms / 1000.0)
                resume_end = black_end + sec_to_us(cell.rrc_resume_ms / 1000.0)
                self.blackouts.append((t0, black_end, resume_end,
                                       resume_end + self.sched_delay_us))
                continue
            if ev.dir != self.dir:
                continue
            if ev.kind == "poor_channel":
                ramp = t0 + sec_to_us(p.get("ramp_s", 3.0))
                cap = p.get("capacity_bps", 2.1e6)
                mcs_lo = p.get("mcs", 6)
                prb_lo = max(1, round(cap / (bits_per_prb(mcs_lo) * slots_per_s)))
                self.radio_spans.append((t0, t1, ramp, mcs_lo, prb_lo))
            elif ev.kind == "cross_traffic":
                cap = p.get("capacity_bps", 2.9e6)
                own_cap = max(1, round(cap / (bits_per_prb(cell.base_mcs)
                                              * slots_per_s)))
                self.cross_spans.append((t0, t1, p.get("other_prb", 30), own_cap))
            elif ev.kind == "harq_storm":
                self.harq_spans.append((t0, t1, p.get("fraction", 0.5),
                                        p.get("rounds", 2)))
                cap = p.get("capacity_bps")
                if cap:
                    own_cap = max(1, round(cap / (bits_per_prb(cell.base_mcs)
                                                  * slots_per_s)))
                    self.cross_spans.append((t0, t1, 0, own_cap))
            elif ev.kind == "rlc_retx":
                burst = p.get("burst_incidents", 4)
                spacing = sec_to_us(p.get("incident_spacing_s", 0.09))
                period = sec_to_us(p.get("burst_period_s", 1.2))
                t = t0
                while t < t1:
                    for j in range(burst):
                        self.rlc_times.append(t + j * spacing)
                    t += period
        self.rlc_times.sort()
        self._rlc_ptr = 0
        self.blackouts.sort()
        self._black_ptr = 0
        self._next_signal_us = 0

    def enqueue(self, pkt: _Pkt) -> None:
        self.arrivals.append(pkt)

    def seal_arrivals(self) -> None:
        """Time-order pending sends; a tick's generators append out of order."""
        if self.a_ptr > 4096:
            del self.arrivals[:self.a_ptr]
            self.a_ptr = 0
        tail = self.arrivals[self.a_ptr:]
        tail.sort(key=lambda p: p.send_us)
        self.arrivals[self.a_ptr:] = tail

    def _ingest(self, until_us: int) -> None:
        while self.a_ptr < len(self.arrivals):
            pkt = self.arrivals[self.a_ptr]
            if pkt.send_us > until_us:
                break
            self.a_ptr += 1
            if not self.queue:
                self.grant_ready_us = pkt.send_us + self.sched_delay_us
            self.queue.append(pkt)
            self.queue_bits += pkt.remaining_bits

    def _rnti_at(self, t: int) -> int:
        tl = self.rnti_timeline
        while self._rnti_ptr + 1 < len(tl) and t >= tl[self._rnti_ptr + 1][0]:
            self._rnti_ptr += 1
        return tl[self._rnti_ptr][1]

    def _radio_at(self, t: int) -> tuple[int, int]:
        mcs, prb = self.cell.base_mcs, self.cell.prb_cap
        for t0, t1, ramp_end, mcs_lo, prb_lo in self.radio_spans:
            if t0 <= t < t1:
                if t >= ramp_end:
                    return mcs_lo, prb_lo
                f = (t - t0) / (ramp_end - t0)
                return (round(mcs + f * (mcs_lo - mcs)),
                        round(prb + f * (prb_lo - prb)))
        for t0, t1, _, own_cap in self.cross_spans:
            if t0 <= t < t1:
                return mcs, own_cap
        return mcs, prb

    def _cross_at(self, t: int) -> int:
        for t0, t1, other_prb, _ in self.cross_spans:
            if t0 <= t < t1:
                return other_prb
        return 0

    def _harq_at(self, t: int):
        for t0, t1, fraction, rounds in self.harq_spans:
            if t0 <= t < t1:
                return fraction, rounds
        return None

    def _blackout_phase(self, t: int):
        bl = self.blackouts
        while (self._black_ptr < len(bl)
               and t >= bl[self._black_ptr][3]):
            self._black_ptr += 1
        if self._black_ptr >= len(bl):
            return None
        t0, black_end, resume_end, data_end = bl[self._black_ptr]
        if t < t0:
            return None
        if t < black_end:
            return "black"
        if t < resume_end:
            return "resume"
        return "wait"

    def _deliver(self, pkt: _Pkt, recv_true_us: int) -> None:
        recv_rec = recv_true_us
        if self.noise_us:
            noise = int(self.rng.normal(0.0, self.noise_us))
            recv_rec = max(pkt.send_us + 100, recv_true_us + noise)
        self.pkts.emit(pkt.send_us, recv_rec, self.dir, pkt.size_bytes, pkt.kind)
        self.seq += 1
        heapq.heappush(self.deliveries, (recv_true_us, self.dir, self.seq, pkt))

    def flush_holds(self, now_us: int) -> None:
        """Release in-order-blocked packets once the recovery completes.

        Everything received at the link layer during the blockage goes up
        in one burst, so the whole batch shares one release instant.
        """
        if not self.held or now_us < self.hol_until_us:
            return
        for i, pkt in enumerate(self.held):
            self._deliver(pkt, self.hol_until_us + self.wire_us + i * 10)
        self.held.clear()

    def service_slot(self, t: int) -> None:
        self.flush_holds(t)
        phase = self._blackout_phase(t)
        if phase == "black":
            return
        rnti = self._rnti_at(t)
        if phase == "resume":
            if t >= self._next_signal_us:
                self.ran.emit(t, self.dir, rnti, 2, self.cell.base_mcs, 0, True)
                self._next_signal_us = t + 10 * MS
            return
        if phase == "wait":
            return
        self._next_signal_us = 0
        mcs, prb_cap = self._radio_at(t)
        other_prb = self._cross_at(t)
        if other_prb:
            self.ran.emit(t, self.dir, OTHER_UE_RNTI, other_prb, 20,
                          other_prb * bits_per_prb(20), False)
        cell = self.cell
        if not self.queue:
            if (cell.proactive_grants and self.dir == Direction.UL
                    and t >= self.next_proactive_us):
                self.ran.emit(t, self.dir, rnti, cell.proactive_prb, mcs, 0,
                              True, proactive=True)
                self.next_proactive_us = t + self.proactive_period_us
            return
        proactive = False
        if self.grant_ready_us is None or t < self.grant_ready_us:
            if not (cell.proactive_grants and self.dir == Direction.UL
                    and t >= self.next_proactive_us):
                return
            # a standing small grant lets the head of a burst go out early
            prb = cell.proactive_prb
            proactive = True
            self.next_proactive_us = t + self.proactive_period_us
        else:
            bpp = bits_per_prb(mcs)
            prb = min(prb_cap, max(1, -(-self.queue_bits // bpp)))
        cap_bits = prb * bits_per_prb(mcs)
        extra_us = 0
        storm = self._harq_at(t)
        if storm is not None and self.rng.random() < storm[0]:
            rounds = storm[1]
            extra_us = rounds * self.harq_rtt_us
            for k in range(1, rounds + 1):
                self.ran.emit(t + k * self.harq_rtt_us, self.dir, rnti, prb,
                              mcs, min(cap_bits, self.queue_bits), True,
                              harq=True)
        failed_release = None
        if self._rlc_ptr < len(self.rlc_times) and t >= self.rlc_times[self._rlc_ptr]:
            self._rlc_ptr += 1
            failed_release = t + self.slot_us + self.rlc_penalty_us
            self.hol_until_us = max(self.hol_until_us, failed_release)
            for k in range(1, cell.harq_limit + 1):
                self.ran.emit(t + k * self.harq_rtt_us, self.dir, rnti, prb,
                              mcs, min(cap_bits, self.queue_bits), True,
                              harq=True)
            self.ran.emit(failed_release - 2 * MS, self.dir, rnti, prb, mcs,
                          min(cap_bits, self.queue_bits), True, rlc=True)
        served = 0
        air_us = t + self.slot_us
        while cap_bits > 0 and self.queue:
            pkt = self.queue[0]
            take = min(pkt.remaining_bits, cap_bits)
            pkt.remaining_bits -= take
            cap_bits -= take
            served += take
            self.queue_bits -= take
            if pkt.remaining_bits:
                break
            self.queue.popleft()
            if failed_release is not None or air_us < self.hol_until_us:
                self.held.append(pkt)
            else:
                self._deliver(pkt, air_us + extra_us + self.wire_us)
        self.ran.emit(t, self.dir, rnti, prb, mcs, served, True,
                      proactive=proactive)
        if not self.queue:
            self.grant_ready_us = None

    def run_until(self, t0: int, t1: int) -> None:
        """Service every active slot with start time in [t0, t1)."""
        slot = self.slot_us
        frame_us = 10 * slot
        frame0 = t0 // frame_us
        frame1 = (t1 - 1) // frame_us
        for f in range(frame0, frame1 + 1):
            base = f * frame_us
            for off in self.slot_offsets:
                t = base + off * slot
                if t < t0 or t >= t1:
                    continue
                self._ingest(t)
                self.service_slot(t)


class _Endpoint:
    """One client: sender (encoder + rate control) and receiver (playout)."""

    def __init__(self, side: Side, scenario: Scenario):
        self.side = side
        self.scenario = scenario
        self.send_dir = Direction.UL if side == Side.LOCAL else Direction.DL
        self.gcc = GccModel(target_bps=scenario.media_bitrate_bps,
                            fast_recovery=scenario.fast_recovery)
        # pre-filled at nominal depth so a call does not open with a freeze
        self.jb = JitterBuffer(frame_ms=1000.0 / scenario.video_fps,
                               catchup_factor=1.1, buffer_ms=150.0,
                               frozen=False)
        self.frame_interval_us = sec_to_us(1.0 / scenario.video_fps)
        self.next_frame_us = 0
        self.next_audio_us = 0
        self.next_rtcp_us = 25 * MS if side == Side.LOCAL else 40 * MS
        self.frame_seq = 0
        self.pending_frames: dict[int, int] = {}
        self.frame_arrivals_ms: list[float] = []
        self.acked_acc: list[tuple[int, int, int]] = []
        self.sent_bytes: deque[tuple[int, int]] = deque()
        self.sent_total = 0
        self.played: deque[tuple[int, float]] = deque()
        self.last_fb_us = 0
        self.feedback_on = scenario.rtcp_interval_ms > 0

    def out_fps(self) -> float:
        return (self.scenario.video_fps
                if self.gcc.pushback_bps >= 0.6e6 else self.scenario.video_fps / 2)

    def res_height(self) -> int:
        pushback = self.gcc.pushback_bps
        if pushback >= 2.2e6:
            return 720
        if pushback >= 1.0e6:
            return 540
        return 360

    def in_fps(self, now_us: int) -> float:
        cutoff = now_us - 1_000_000
        while self.played and self.played[0][0] < cutoff:
            self.played.popleft()
        return sum(n for _, n in self.played)

    def send_rate_bps(self, now_us: int) -> float:
        cutoff = now_us - 1_000_000
        while self.sent_bytes and self.sent_bytes[0][0] < cutoff:
            self.sent_total -= self.sent_bytes.popleft()[1]
        return self.sent_total * 8.0

    def _register_sent(self, t: int, size: int) -> None:
        self.sent_bytes.append((t, size))
        self.sent_total += size
        if self.feedback_on:
            self.gcc.on_send(size)

    def generate(self, t0: int, t1: int, link: _Link) -> None:
        sc = self.scenario
        frame_gap_us = sec_to_us(1.0 / self.out_fps())
        while self.next_frame_us < t1:
            t = self.next_frame_us
            rate = max(self.gcc.pushback_bps, 64e3)
            frame_bytes = int(rate / 8.0 / self.out_fps())
            n_full, rem = divmod(frame_bytes, sc.packet_bytes)
            sizes = [sc.packet_bytes] * n_full + ([rem] if rem >= 100 else [])
            if not sizes:
                sizes = [max(frame_bytes, 100)]
            self.frame_seq += 1
            pace = int(link.rng.integers(0, 40))  # seed-dependent pacing
            for j, size in enumerate(sizes):
                pkt = _Pkt(t + j * (120 + pace), size, PacketKind.MEDIA,
                           self.frame_seq, self.side.opposite,
                           frame_pkts=len(sizes))
                link.enqueue(pkt)
                self._register_sent(t, size)
            self.next_frame_us = t + frame_gap_us
        if sc.audio_interval_ms > 0:
            audio_gap = sec_to_us(sc.audio_interval_ms / 1000.0)
            while self.next_audio_us < t1:
                t = self.next_audio_us
                pkt = _Pkt(t, sc.audio_bytes, PacketKind.MEDIA, None,
                           self.side.opposite)
                link.enqueue(pkt)
                self._register_sent(t, sc.audio_bytes)
                self.next_audio_us = t + audio_gap
        if self.feedback_on:
            rtcp_gap = sec_to_us(sc.rtcp_interval_ms / 1000.0)
            while self.next_rtcp_us < t1:
                t = self.next_rtcp_us
                report = self.acked_acc
                self.acked_acc = []
                pkt = _Pkt(t, 150, PacketKind.RTCP, None, self.side.opposite,
                           report=report)
                link.enqueue(pkt)
                self.next_rtcp_us = t + rtcp_gap

    def on_media(self, pkt: _Pkt, recv_us: int) -> None:
        self.acked_acc.append((pkt.send_us, recv_us, pkt.size_bytes))
        if pkt.frame_id is None:
            return
        left = self.pending_frames.get(pkt.frame_id, pkt.frame_pkts)
        if left <= 1:
            self.pending_frames.pop(pkt.frame_id, None)
            self.frame_arrivals_ms.append(recv_us / 1000.0)
        else:
            self.pending_frames[pkt.frame_id] = left - 1

    def on_rtcp(self, pkt: _Pkt, recv_us: int) -> None:
        samples = [FeedbackSample(s / 1e6, (r - s) / 1000.0, size)
                   for s, r, size in pkt.report]
        dt = min(1.0, max(0.001, (recv_us - self.last_fb_us) / 1e6))
        self.last_fb_us = recv_us
        self.gcc.step(samples, dt)

    def finish_tick(self, t1: int, dt_ms: float) -> None:
        arrivals = sorted(self.frame_arrivals_ms)
        self.frame_arrivals_ms = []
        played = self.jb.step(arrivals, dt_ms)
        self.played.append((t1, played))
        self.gcc.refresh_pushback()


class _AppCols:
    def __init__(self):
        self.ts = array("q")
        self.side = array("b")
        self.in_fps = array("d")
        self.out_fps = array("d")
        self.res = array("q")
        self.jb = array("d")
        self.target = array("d")
        self.pushback = array("d")
        self.gcc = array("b")
        self.outstanding = array("q")
        self.cwnd = array("q")
        self.send_rate = array("d")

    def emit(self, ts, ep: _Endpoint):
        self.ts.append(ts)
        self.side.append(ep.side)
        self.in_fps.append(ep.in_fps(ts))
        self.out_fps.append(ep.out_fps())
        self.res.append(ep.res_height())
        self.jb.append(ep.jb.buffer_ms)
        self.target.append(ep.gcc.target_bps)
        self.pushback.append(ep.gcc.pushback_bps)
        self.gcc.append(ep.gcc.state)
        self.outstanding.append(ep.gcc.outstanding_bytes)
        self.cwnd.append(ep.gcc.cwnd_bytes)
        self.send_rate.append(ep.send_rate_bps(ts))

    def stream(self) -> AppStream:
        return AppStream.from_arrays(self.ts, self.side, self.in_fps,
                                     self.out_fps, self.res, self.jb,
                                     self.target, self.pushback, self.gcc,
                                     self.outstanding, self.cwnd,
                                     self.send_rate).sorted_by_ts()


def generate(scenario: Scenario, name: str = "scenario"
             ) -> tuple[Trace, GroundTruth]:
    """Run the call simulation; returns the trace and its ground truth."""
    scenario.validate()
    rng = np.random.default_rng(scenario.seed)
    ran_cols = _RanCols()
    pkt_cols = _PktCols()
    app_cols = _AppCols()
    deliveries: list = []
    rnti_timeline = [(0, scenario.cell.own_rnti)]
    next_rnti = scenario.cell.own_rnti
    for ev in scenario.events:
        if ev.kind == "rrc_transition":
            next_rnti += 7
            change_at = ev.interval_us()[0] + sec_to_us(
                scenario.cell.rrc_blackout_ms / 1000.0)
            rnti_timeline.append((change_at, next_rnti))
    rnti_timeline.sort()
    links = {
        Direction.UL: _Link(Direction.UL, scenario, rng, ran_cols, pkt_cols,
                            deliveries, rnti_timeline),
        Direction.DL: _Link(Direction.DL, scenario, rng, ran_cols, pkt_cols,
                            deliveries, rnti_timeline),
    }
    endpoints = {Side.LOCAL: _Endpoint(Side.LOCAL, scenario),
                 Side.REMOTE: _Endpoint(Side.REMOTE, scenario)}
    tick_us = sec_to_us(scenario.app_tick_ms / 1000.0)
    duration_us = sec_to_us(scenario.duration_s)
    drain_us = duration_us + sec_to_us(2.0)
    t = 0
    while t < drain_us:
        t1 = t + tick_us
        if t < duration_us:
            for side in (Side.LOCAL, Side.REMOTE):
                ep = endpoints[side]
                ep.generate(t, t1, links[ep.send_dir])
        for link in links.values():
            link.seal_arrivals()
            link.run_until(t, t1)
            link.flush_holds(t1)
        while deliveries and deliveries[0][0] <= t1:
            recv_us, _, _, pkt = heapq.heappop(deliveries)
            ep = endpoints[pkt.dst]
            if pkt.kind == PacketKind.MEDIA:
                ep.on_media(pkt, recv_us)
            else:
                ep.on_rtcp(pkt, recv_us)
        for side in (Side.LOCAL, Side.REMOTE):
            ep = endpoints[side]
            ep.finish_tick(t1, scenario.app_tick_ms)
            if t1 <= duration_us:
                app_cols.emit(t1, ep)
        t = t1
        if t >= duration_us and not any(lk.queue or lk.held
                                        for lk in links.values()):
            break
    trace = Trace(ran_cols.stream(), pkt_cols.stream(), app_cols.stream(),
                  scenario.meta())
    return trace, ground_truth(scenario, name)


_PROBE = {  # window-start probe interval relative to event start, seconds
    "poor_channel": (0.5, 2.5),
    "cross_traffic": (-2.5, -0.5),
    "harq_storm": (-2.5, -0.5),
    "rlc_retx": (-2.5, -0.5),
    "rrc_transition": (-2.5, -0.5),
}
_RECOVERY_TAIL_S = 8.0


def ground_truth(scenario: Scenario, name: str = "scenario") -> GroundTruth:
    """Expected chains and tolerated spans implied by a scenario's events."""
    events = []
    for ev in scenario.events:
        if ev.kind == "none":
            continue
        t0, t1 = ev.interval_us()
        routing = ev.params.get("routing", "target_bitrate_drop")
        cause = CAUSE_NODE[ev.kind]
        reverse = routing == "pushback_rate_drop"
        media_dir = ev.dir.opposite if reverse else ev.dir
        lo_s, hi_s = _PROBE[ev.kind]
        expected: tuple[ExpectedChain, ...] = ()
        if ev.params.get("expect_chains", True):
            expected = (ExpectedChain(
                match_dir=media_dir, cause=cause, consequence=routing,
                reverse_leg=reverse,
                probe_lo_us=t0 + sec_to_us(lo_s),
                probe_hi_us=t0 + sec_to_us(hi_s)),)
        allowed = [cause, "ul_scheduling"]
        if ev.kind == "rlc_retx":
            # recovery follows exhausted retransmissions, so storms co-occur
            allowed.append("harq_retx")
        events.append(TruthEvent(
            kind=ev.kind, dir=ev.dir, start_us=t0, end_us=t1, routing=routing,
            expected=expected,
            allowed_causes=tuple(allowed),
            allowed_lo_us=t0 - sec_to_us(6.0),
            allowed_hi_us=t1 + sec_to_us(_RECOVERY_TAIL_S),
            params=dict(ev.params)))
    return GroundTruth(name, events)


def build_scenario(kind: str, routing: str, seed: int,
                   media_dir: Direction = Direction.UL,
                   noise_delay_sigma_ms: float = 0.0) -> Scenario:
    """One canonical injection scenario: two identical events of one kind.

    ``routing`` picks the consequence the event must provoke; the pushback
    routing impairs the feedback (reverse) link of the media stream.
    """
    if kind not in CAUSE_NODE:
        raise ValueError(f"unknown cause kind {kind!r}")
    if routing not in ROUTINGS:
        raise ValueError(f"unknown routing {routing!r}")
    impair_dir = media_dir.opposite if routing == "pushback_rate_drop" else media_dir
    deep_cut = routing == "jb_drain"
    params: dict = {"routing": routing}
    if kind == "poor_channel":
        duration = 9.0
        params.update(mcs=6, ramp_s=3.0, capacity_bps=2.1e6)
    elif kind == "cross_traffic":
        duration = 6.0
        params.update(other_prb=30,
                      capacity_bps=2.2e6 if deep_cut else 2.7e6)
    elif kind == "harq_storm":
        duration = 6.0
        params.update(fraction=0.5, rounds=2,
                      capacity_bps=2.2e6 if deep_cut else 2.7e6)
    elif kind == "rlc_retx":
        duration = 6.0
        params.update(burst_incidents=4, incident_spacing_s=0.09,
                      burst_period_s=1.2)
    else:
        duration = 2.0
    events = tuple(InjectedEvent(kind, start_s, duration, impair_dir, dict(params))
                   for start_s in (12.0, 26.0))
    # the quick acknowledged-throughput restore keeps the two injections
    # independent; additive-only recovery would span the whole scenario
    return Scenario(duration_s=40.0, seed=seed, media_dir=media_dir,
                    noise_delay_sigma_ms=noise_delay_sigma_ms,
                    fast_recovery=True, events=events)


def standard_scenarios(noise_delay_sigma_ms: float = 0.0
                       ) -> list[tuple[str, Scenario]]:
    """The fixed 5 causes x 3 consequence-routings scenario battery."""
    out = []
    seed = 101
    for kind in ("poor_channel", "cross_traffic", "harq_storm", "rlc_retx",
                 "rrc_transition"):
        for routing in ROUTINGS:
            name = f"{kind}__{routing}"
            out.append((name, build_scenario(kind, routing, seed,
                                             noise_delay_sigma_ms=noise_delay_sigma_ms)))
            seed += 1
    return out


def _parse_value(text: str):
    text = text.strip()
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def parse_scenario_file(path) -> Scenario:
    """Key=value scenario script with [cell] and repeatable [event] sections."""
    top: dict = {}
    cell: dict = {}
    events: list[dict] = []
    target = top
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            section = line.strip("[]").strip().lower()
            if section == "cell":
                target = cell
            elif section == "event":
                events.append({})
                target = events[-1]
            else:
                raise ValueError(f"{path}:{line_no}: unknown section [{section}]")
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{line_no}: expected key = value")
        key, _, value = line.partition("=")
        target[key.strip().lower()] = _parse_value(value)
    cell_kwargs = dict(cell)
    scenario_kwargs = dict(top)
    if "media_dir" in scenario_kwargs:
        scenario_kwargs["media_dir"] = Direction[str(scenario_kwargs["media_dir"]).upper()]
    ev_objs = []
    for ev in events:
        kind = str(ev.pop("kind", "none"))
        start_s = float(ev.pop("start_s", 0.0))
        duration_s = float(ev.pop("duration_s", 1.0))
        dir = Direction[str(ev.pop("dir", "ul")).upper()]
        ev_objs.append(InjectedEvent(kind, start_s, duration_s, dir, ev))
    try:
        profile = CellProfile(**cell_kwargs)
        scenario = Scenario(cell=profile, events=tuple(ev_objs),
                            **scenario_kwargs)
    except TypeError as exc:
        raise ValueError(f"{path}: {exc}") from exc
    scenario.validate()
    return scenario

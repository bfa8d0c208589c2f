"""Independent trace analysis: mechanism magnitudes and truth scoring.

Everything here is computed from the trace records alone, never from the
generator's internal bookkeeping, so these measurements can validate the
generator (and, on real captures, the mechanisms themselves).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import ChainMatch, PathLeg
from .synth import GroundTruth
from .trace import Direction, PacketKind, Trace


def _media_delays(trace: Trace, dir: Direction) -> tuple[np.ndarray, np.ndarray]:
    p = trace.packets
    m = (p.dir == dir) & (p.kind == PacketKind.MEDIA)
    return p.send_us[m], p.delay_ms[m]


def delay_shift_ms(trace: Trace, dir: Direction,
                   intervals_us: list[tuple[int, int]]) -> float:
    """Median delay inside the intervals minus the median outside them."""
    send, delay = _media_delays(trace, dir)
    inside = np.zeros(send.size, dtype=bool)
    for lo, hi in intervals_us:
        inside |= (send >= lo) & (send < hi)
    if not inside.any() or inside.all():
        raise ValueError("intervals cover none or all of the stream")
    return float(np.median(delay[inside]) - np.median(delay[~inside]))


@dataclass(frozen=True)
class ReleaseCluster:
    """A burst of packets received nearly simultaneously (in-order release)."""

    recv_us: int
    size: int
    max_delay_ms: float


def release_clusters(trace: Trace, dir: Direction, min_size: int = 5,
                     span_us: int = 2000) -> list[ReleaseCluster]:
    """Maximal groups of >= min_size media packets received within span_us."""
    p = trace.packets
    m = (p.dir == dir) & (p.kind == PacketKind.MEDIA)
    recv = np.sort(p.recv_us[m])
    delay = p.delay_ms[m][np.argsort(p.recv_us[m], kind="stable")]
    clusters = []
    i = 0
    n = recv.size
    while i < n:
        j = i
        while j + 1 < n and recv[j + 1] - recv[i] <= span_us:
            j += 1
        if j - i + 1 >= min_size:
            clusters.append(ReleaseCluster(int(recv[i]), j - i + 1,
                                           float(delay[i:j + 1].max())))
        i = j + 1
    return clusters


def rlc_delay_inflation_ms(trace: Trace, dir: Direction,
                           interval_us: tuple[int, int]) -> tuple[float, int]:
    """Peak cluster delay above baseline, plus the cluster count.

    The head-of-line release makes the recovered packet the slowest member
    of its cluster; its delay minus the quiet-period median isolates the
    link-layer recovery penalty.
    """
    send, delay = _media_delays(trace, dir)
    outside = (send < interval_us[0]) | (send >= interval_us[1])
    if not outside.any():
        raise ValueError("no baseline traffic outside the interval")
    baseline = float(np.median(delay[outside]))
    clusters = [c for c in release_clusters(trace, dir)
                if interval_us[0] <= c.recv_us < interval_us[1] + 500_000]
    if not clusters:
        return 0.0, 0
    peak = max(c.max_delay_ms for c in clusters)
    return peak - baseline, len(clusters)


def ran_silence_ms(trace: Trace, around_us: tuple[int, int] | None = None) -> float:
    """Longest gap between consecutive own-client radio records."""
    r = trace.ran
    ts = r.ts_us[r.own]
    if around_us is not None:
        ts = ts[(ts >= around_us[0]) & (ts < around_us[1])]
    if ts.size < 2:
        return 0.0
    return float(np.diff(ts).max() / 1000.0)


def peak_delay_ms(trace: Trace, dir: Direction,
                  interval_us: tuple[int, int]) -> float:
    send, delay = _media_delays(trace, dir)
    m = (send >= interval_us[0]) & (send < interval_us[1])
    if not m.any():
        return 0.0
    return float(delay[m].max())


def scheduling_gaps_ms(trace: Trace, burst_gap_ms: float = 15.0
                       ) -> np.ndarray:
    """Per-burst gap between first media send and the first uplink grant.

    A burst starts wherever uplink media sends pause for more than
    burst_gap_ms; the request-grant cycle shows up as the gap to the next
    own-client uplink grant that carries data.
    """
    p = trace.packets
    m = (p.dir == Direction.UL) & (p.kind == PacketKind.MEDIA)
    sends = np.unique(p.send_us[m])
    if sends.size == 0:
        return np.empty(0)
    starts = [int(sends[0])]
    gaps = np.diff(sends)
    starts.extend(int(s) for s in sends[1:][gaps > burst_gap_ms * 1000])
    r = trace.ran
    grant_ts = r.ts_us[r.own & (r.dir == Direction.UL) & (r.tbs_bits > 0)]
    out = []
    for s in starts:
        i = np.searchsorted(grant_ts, s)
        if i < grant_ts.size:
            out.append((int(grant_ts[i]) - s) / 1000.0)
    return np.asarray(out)


@dataclass
class TruthScore:
    expected_total: int
    expected_hit: int
    detections: int
    detections_allowed: int

    @property
    def recall(self) -> float:
        return self.expected_hit / self.expected_total if self.expected_total else 1.0

    @property
    def precision(self) -> float:
        return self.detections_allowed / self.detections if self.detections else 1.0


def score_against_truth(matches: list[ChainMatch], truth: GroundTruth,
                        window_starts_us: list[int]) -> TruthScore:
    """Recall over required probe windows; precision over tolerated spans.

    Recall: for each expected chain, every analysis window starting inside
    its probe interval must contain the match. Precision: a detected
    (window, consequence, cause) instance is a false positive unless some
    injected event tolerates that cause within its allowed span.
    """
    detected = {(m.window_start_us, int(m.stream_dir), m.cause_id,
                 m.consequence_id, m.leg is PathLeg.REVERSE)
                for m in matches}
    expected_total = 0
    expected_hit = 0
    for ev in truth.events:
        for chain in ev.expected:
            for ws in window_starts_us:
                if chain.probe_lo_us <= ws <= chain.probe_hi_us:
                    expected_total += 1
                    key = (ws, int(chain.match_dir), chain.cause,
                           chain.consequence, chain.reverse_leg)
                    expected_hit += key in detected
    instances = {(m.window_start_us, int(m.stream_dir), m.consequence_id,
                  m.cause_id) for m in matches}
    allowed = 0
    for ws, _, _, cause in instances:
        if any(cause in ev.allowed_causes
               and ev.allowed_lo_us <= ws <= ev.allowed_hi_us
               for ev in truth.events):
            allowed += 1
    return TruthScore(expected_total, expected_hit, len(instances), allowed)

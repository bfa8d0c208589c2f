"""Delay-based send-rate controller and adaptive jitter buffer models.

The rate controller mirrors the sender-side loop of a real-time stack: a
trendline over recently acknowledged one-way delays is compared against an
adaptive threshold to classify the network state; overuse triggers a
multiplicative cut, recovery proceeds by cautious additive increase, and
an optional acknowledged-throughput path restores the rate quickly after
short-lived events. A congestion window over outstanding bytes constrains
the final pushback rate.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .trace import GccState


@dataclass
class FeedbackSample:
    """One acknowledged packet as reported back to the sender."""

    send_time_s: float
    delay_ms: float
    size_bytes: int


@dataclass
class GccModel:
    target_bps: float = 2.5e6
    min_rate_bps: float = 250e3
    max_rate_bps: float = 6e6
    beta: float = 0.85
    additive_bps_per_s: float = 25e3
    trend_len: int = 20
    gamma_min: float = 25.0       # delay slope threshold floor, ms/s
    gamma_max: float = 600.0
    gamma_alpha: float = 0.05
    overuse_cooldown_s: float = 0.3
    cwnd_window_s: float = 0.25
    cwnd_min_bytes: int = 12_000
    ack_window_s: float = 0.5
    fast_recovery: bool = False
    fast_hold_feedbacks: int = 6
    fast_gain: float = 1.5
    warmup_feedbacks: int = 10   # pipeline-fill transient is not congestion

    state: GccState = GccState.NORMAL
    outstanding_bytes: int = 0
    pushback_bps: float = field(default=0.0)
    gamma: float = field(default=0.0)
    slope_ms_per_s: float = 0.0
    time_s: float = 0.0
    pre_cut_bps: float | None = None

    def __post_init__(self) -> None:
        self.gamma = self.gamma_min
        self.pushback_bps = self.target_bps
        self._trend: deque[tuple[float, float]] = deque(maxlen=self.trend_len)
        self._acked: deque[tuple[float, int]] = deque()
        self._last_cut_s = -1e9
        self._fast_streak = 0
        self._feedbacks_seen = 0

    @property
    def cwnd_bytes(self) -> int:
        return max(self.cwnd_min_bytes,
                   int(self.target_bps / 8.0 * self.cwnd_window_s))

    def on_send(self, size_bytes: int) -> None:
        self.outstanding_bytes += size_bytes

    def ack_bitrate_bps(self) -> float:
        cutoff = self.time_s - self.ack_window_s
        while self._acked and self._acked[0][0] < cutoff:
            self._acked.popleft()
        total = sum(b for _, b in self._acked)
        return total * 8.0 / self.ack_window_s

    def _update_trend(self, samples) -> None:
        if samples:
            # one trend point per feedback batch; per-packet samples would
            # shrink the regression span to a few milliseconds of send time
            n = len(samples)
            self._trend.append((sum(s.send_time_s for s in samples) / n,
                                sum(s.delay_ms for s in samples) / n))
        if len(self._trend) < 5:
            self.slope_ms_per_s = 0.0
            return
        xs = [t for t, _ in self._trend]
        ys = [d for _, d in self._trend]
        n = len(xs)
        mx = sum(xs) / n
        my = sum(ys) / n
        var = sum((x - mx) ** 2 for x in xs)
        if var <= 0:
            self.slope_ms_per_s = 0.0
            return
        cov = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
        self.slope_ms_per_s = cov / var

    def _classify(self) -> None:
        slope = self.slope_ms_per_s
        if slope > self.gamma:
            self.state = GccState.OVERUSE
        elif slope < -self.gamma:
            self.state = GccState.UNDERUSE
        else:
            self.state = GccState.NORMAL
        # threshold trails the observed slope so persistent moderate noise
        # does not flip the state, but a sharp ramp still crosses it
        self.gamma += self.gamma_alpha * (abs(slope) - self.gamma)
        self.gamma = min(self.gamma_max, max(self.gamma_min, self.gamma))

    def refresh_pushback(self) -> float:
        """Recompute the window-constrained send rate from current state."""
        cwnd = self.cwnd_bytes
        if self.outstanding_bytes <= cwnd:
            self.pushback_bps = self.target_bps
        else:
            self.pushback_bps = self.target_bps * cwnd / self.outstanding_bytes
        return self.pushback_bps

    def step(self, feedback: list[FeedbackSample], dt_s: float
             ) -> tuple[float, float]:
        """Apply one delayed feedback batch; returns (target, pushback)."""
        if dt_s <= 0:
            raise ValueError("dt must be positive")
        self.time_s += dt_s
        acked = sum(s.size_bytes for s in feedback)
        if acked:
            self.outstanding_bytes = max(0, self.outstanding_bytes - acked)
            self._acked.append((self.time_s, acked))
        self._update_trend(feedback)
        self._feedbacks_seen += 1
        if self._feedbacks_seen <= self.warmup_feedbacks:
            self.state = GccState.NORMAL
            self.refresh_pushback()
            return self.target_bps, self.pushback_bps
        self._classify()
        if self.state is GccState.OVERUSE:
            self._fast_streak = 0
            if self.time_s - self._last_cut_s > self.overuse_cooldown_s:
                if self.pre_cut_bps is None:
                    self.pre_cut_bps = self.target_bps
                self.target_bps = max(self.min_rate_bps,
                                      self.beta * self.target_bps)
                self._last_cut_s = self.time_s
        elif self.state is GccState.UNDERUSE:
            self._fast_streak = 0
        else:
            self.target_bps = min(self.max_rate_bps,
                                  self.target_bps + self.additive_bps_per_s * dt_s)
            if self.fast_recovery and self.pre_cut_bps is not None:
                sustained = (self.ack_bitrate_bps() >= 0.9 * self.target_bps
                             and abs(self.slope_ms_per_s) < self.gamma)
                if sustained:
                    self._fast_streak += 1
                else:
                    self._fast_streak = 0
                if self._fast_streak >= self.fast_hold_feedbacks:
                    self.target_bps = min(self.pre_cut_bps,
                                          self.target_bps * self.fast_gain)
        if self.pre_cut_bps is not None and self.target_bps >= self.pre_cut_bps:
            self.pre_cut_bps = None
            self._fast_streak = 0
        self.refresh_pushback()
        return self.target_bps, self.pushback_bps


def gcc_step(model: GccModel, feedback: list[FeedbackSample], dt_s: float
             ) -> tuple[GccModel, float, float]:
    """Advance the rate controller by one feedback interval."""
    target, pushback = model.step(feedback, dt_s)
    return model, target, pushback


@dataclass
class JitterBuffer:
    """Receiver-side playout buffer tracking delay variation.

    The buffer holds media time. Arrivals add one frame duration each;
    playout consumes wall time. A sustained arrival stall beyond the
    buffered depth drains it to exactly zero (a freeze); playback resumes
    once the depth rebuilds to the adaptive target.
    """

    frame_ms: float = 1000.0 / 30.0
    base_depth_ms: float = 150.0
    jitter_mult: float = 4.0
    depth_min_ms: float = 60.0
    depth_max_ms: float = 400.0
    catchup_factor: float = 1.15

    buffer_ms: float = 0.0
    frozen: bool = True
    jitter_ema_ms: float = 2.0
    last_arrival_ms: float | None = None

    @property
    def depth_target_ms(self) -> float:
        depth = self.base_depth_ms + self.jitter_mult * self.jitter_ema_ms
        return min(self.depth_max_ms, max(self.depth_min_ms, depth))

    def step(self, arrival_times_ms: list[float], dt_ms: float) -> float:
        """Fold in frame arrivals and play out dt; returns frames played."""
        for t in arrival_times_ms:
            if self.last_arrival_ms is not None:
                gap = t - self.last_arrival_ms
                jitter = abs(gap - self.frame_ms)
                self.jitter_ema_ms += 0.1 * (jitter - self.jitter_ema_ms)
            self.last_arrival_ms = t
            self.buffer_ms += self.frame_ms
        if self.frozen:
            if self.buffer_ms >= self.depth_target_ms:
                self.frozen = False
            else:
                return 0.0
        # playout-rate regulation keeps the level near the adaptive target
        consume = dt_ms
        if self.buffer_ms > 1.5 * self.depth_target_ms:
            consume = dt_ms * self.catchup_factor
        elif self.buffer_ms < self.depth_target_ms:
            consume = dt_ms / self.catchup_factor
        if self.buffer_ms > consume:
            self.buffer_ms -= consume
            return consume / self.frame_ms
        played = self.buffer_ms / self.frame_ms
        self.buffer_ms = 0.0
        self.frozen = True
        return played


def jitter_buffer_step(buffer: JitterBuffer, arrival_times_ms: list[float],
                       dt_ms: float) -> tuple[JitterBuffer, float, float]:
    """Advance the buffer one tick; returns (buffer, depth_ms, frames_played)."""
    played = buffer.step(arrival_times_ms, dt_ms)
    return buffer, buffer.buffer_ms, played

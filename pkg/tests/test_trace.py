import numpy as np
import pytest
from hypothesis import given, strategies as st

from chaintrace.trace import (Direction, PacketKind, Side, Trace, Window,
                              advance, bucket_mean, nearest_rank, slice)

from conftest import MS, S, app_rec, make_trace, pkt_rec, ran_rec


class TestSlice:
    def test_half_open_boundary(self):
        trace = make_trace(app=[app_rec(0, ts=0), app_rec(0, ts=int(4.9 * S)),
                                app_rec(0, ts=5 * S)])
        view = slice(trace, Window(0, 5.0))
        assert len(view.app) == 2

    def test_empty_trace(self):
        view = slice(Trace.empty(), Window(0, 5.0))
        assert view.is_empty()

    def test_packets_keyed_on_send(self):
        trace = make_trace(pkts=[pkt_rec(int(4.99 * S), 310.0)])
        view = slice(trace, Window(0, 5.0))
        assert len(view.packets) == 1
        assert view.packets.record(0).recv_ts == int(4.99 * S) + 310 * MS

    def test_matches_linear_scan(self, rng):
        ts = np.sort(rng.integers(0, 20 * S, size=400))
        trace = make_trace(pkts=[pkt_rec(int(t), 30.0) for t in ts])
        for start in (0, 3 * S, int(7.25 * S)):
            w = Window(start, 5.0)
            got = slice(trace, w).packets.send_us
            expected = [int(t) for t in ts if w.start_us <= t < w.end_us]
            assert got.tolist() == expected

    def test_order_preserving_and_idempotent(self):
        recs = [ran_rec(i * 7 * MS) for i in range(100)]
        trace = make_trace(ran=recs)
        view = slice(trace, Window(100 * MS, 0.3))
        assert np.all(np.diff(view.ran.ts_us) >= 0)
        again = view.ran.slice_time(view.window.start_us, view.window.end_us)
        assert again == view.ran

    def test_each_record_in_ten_windows_mid_trace(self):
        trace = make_trace(app=[app_rec(0, ts=i * 100 * MS) for i in range(601)])
        windows = [Window(k * (S // 2), 5.0) for k in range(111)]
        target = 30 * S
        hits = sum(1 for w in windows
                   if len(np.flatnonzero(
                       slice(trace, w).app.ts_us == target)))
        assert hits == 10  # ceil(W / step)


class TestAdvance:
    def test_default_step(self):
        w = advance(Window(0, 5.0), 0.5)
        assert (w.start_us, w.length_s) == (S // 2, 5.0)

    def test_disjoint_step(self):
        w = advance(Window(0, 5.0), 5.0)
        assert (w.start_us, w.end_us) == (5 * S, 10 * S)

    def test_repeated_addition(self):
        w = Window(int(1.5 * S), 5.0)
        for _ in range(7):
            w = advance(w, 0.5)
        assert (w.start_us, w.end_us) == (5 * S, 10 * S)

    @pytest.mark.parametrize("step", [0, -0.5])
    def test_rejects_nonpositive_step(self, step):
        with pytest.raises(ValueError):
            advance(Window(0, 5.0), step)


class TestBucketMean:
    def test_constant_series(self):
        assert bucket_mean([7.0] * 20, count=10).tolist() == [7.0, 7.0]

    def test_arithmetic_means(self):
        assert bucket_mean(list(range(20)), count=10).tolist() == [4.5, 14.5]

    def test_partial_bucket_dropped(self):
        assert bucket_mean(list(range(25)), count=10).size == 2

    def test_duration_mode_skips_empty_bins(self):
        ts = [0, 10 * MS, 20 * MS, 60 * MS, 110 * MS]
        out = bucket_mean([1.0, 2.0, 3.0, 4.0, 5.0], ts,
                          duration_us=50 * MS, origin_us=0)
        assert out.tolist() == [2.0, 4.0, 5.0]

    def test_mode_required(self):
        with pytest.raises(ValueError):
            bucket_mean([1.0])

    @given(st.lists(st.floats(-1e6, 1e6), max_size=200),
           st.integers(1, 50))
    def test_count_mode_length(self, values, n):
        assert bucket_mean(values, count=n).size == len(values) // n


class TestNearestRank:
    def test_median_even(self):
        assert nearest_rank([1, 2, 3, 4], 50) == 2.0

    def test_p90_small_group(self):
        assert nearest_rank([5, 9], 90) == 9.0

    def test_single(self):
        assert nearest_rank([3], 90) == 3.0


class TestWindow:
    def test_rejects_nonpositive_length(self):
        with pytest.raises(ValueError):
            Window(0, 0.0)

    def test_contains_half_open(self):
        w = Window(S, 5.0)
        assert w.contains(S) and w.contains(6 * S - 1) and not w.contains(6 * S)


class TestStreams:
    def test_record_round_trip(self):
        rec = ran_rec(123, Direction.DL, prb=7, mcs=3, tbs=99, harq=True)
        trace = make_trace(ran=[rec])
        assert trace.ran.record(0) == rec

    def test_trace_span(self):
        trace = make_trace(app=[app_rec(0, ts=2 * S)],
                           pkts=[pkt_rec(1 * S, 30.0)],
                           ran=[ran_rec(7 * S)])
        assert trace.start_us() == 1 * S
        assert trace.end_us() == 7 * S

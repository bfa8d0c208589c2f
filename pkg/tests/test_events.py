import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chaintrace.events import (CANONICAL_LAYOUT, DetectorConfig, EventId,
                               FeatureVector, detect, featurize, featurize_all,
                               plan_windows)
from chaintrace.trace import Direction, Side, Window

from condition_fixtures import CASES, build_view
from conftest import MS, S, app_rec, make_trace, make_view, pkt_rec, ran_rec


class TestLayout:
    def test_dimension_is_36(self):
        assert len(CANONICAL_LAYOUT) == 36

    def test_decomposition(self):
        names = CANONICAL_LAYOUT.names()
        app = [n for n in names if "[local]" in n or "[remote]" in n]
        ran_dir = [n for n in names if "[ul]" in n or "[dl]" in n]
        single = [n for n in names if "[" not in n]
        assert (len(app), len(ran_dir), len(single)) == (20, 12, 4)

    def test_slot_positions(self):
        idx = CANONICAL_LAYOUT.index
        assert idx("in_fps_drop", Side.LOCAL) == 0
        assert idx("in_fps_drop", Side.REMOTE) == 1
        assert idx("pushback_neq_target", Side.REMOTE) == 19
        assert idx("fwd_delay_up") == 20
        assert idx("rev_delay_up") == 21
        assert idx("tbs_drop", Direction.UL) == 22
        assert idx("rlc_retx", Direction.DL) == 33
        assert idx("ul_scheduling") == 34
        assert idx("rrc_change") == 35


@pytest.mark.parametrize("label,key,sel,expected,kwargs",
                         CASES, ids=[c[0] for c in CASES])
def test_condition_boundaries(label, key, sel, expected, kwargs):
    from chaintrace.events import KEY_TO_EVENT
    view = build_view(kwargs)
    assert detect(view, KEY_TO_EVENT[key], sel) is expected


class TestDetect:
    def test_selector_mismatch_rejected(self):
        view = build_view({})
        with pytest.raises(ValueError):
            detect(view, EventId.A4_JB_DRAIN, Direction.UL)
        with pytest.raises(ValueError):
            detect(view, EventId.R17_HARQ_RETX, Side.LOCAL)
        with pytest.raises(ValueError):
            detect(view, EventId.N11_FWD_DELAY_UP, Side.LOCAL)

    def test_empty_streams_false_everywhere(self):
        fv = featurize(make_trace(app=[app_rec(0)]), Window(0, 5.0))
        assert fv.get(EventId.A4_JB_DRAIN, Side.REMOTE) is False
        assert fv.get(EventId.N11_FWD_DELAY_UP) is False
        assert fv.get(EventId.R18_RLC_RETX, Direction.UL) is False

    def test_determinism(self):
        view = build_view(CASES[0][4])
        a = [detect(view, EventId.A1_IN_FPS_DROP, Side.LOCAL) for _ in range(3)]
        assert a == [True, True, True]

    def test_harq_threshold_monotone(self):
        view = build_view({"ran": [ran_rec(i * 10 * MS, harq=True)
                                   for i in range(15)]})
        low = detect(view, EventId.R17_HARQ_RETX, Direction.UL,
                     DetectorConfig(harq_count=10))
        high = detect(view, EventId.R17_HARQ_RETX, Direction.UL,
                      DetectorConfig(harq_count=20))
        assert (low, high) == (True, False)

    @given(st.lists(st.integers(1, 10_000), min_size=1, max_size=60),
           st.sampled_from([2, 4, 8]))
    @settings(max_examples=40, deadline=None)
    def test_tbs_scale_invariance(self, tbs_values, scale):
        base = make_view(ran=[ran_rec(i * 10 * MS, tbs=t)
                              for i, t in enumerate(tbs_values)])
        scaled = make_view(ran=[ran_rec(i * 10 * MS, tbs=t * scale)
                                for i, t in enumerate(tbs_values)])
        assert (detect(base, EventId.R13_TBS_DROP, Direction.UL)
                == detect(scaled, EventId.R13_TBS_DROP, Direction.UL))

    @given(st.lists(st.floats(0, 300), min_size=1, max_size=80))
    @settings(max_examples=40, deadline=None)
    def test_jb_drain_equals_brute_force(self, jb_values):
        view = make_view(app=[app_rec(i, jb=v) for i, v in enumerate(jb_values)])
        assert detect(view, EventId.A4_JB_DRAIN, Side.LOCAL) == any(
            v == 0.0 for v in jb_values)

    @given(st.lists(st.floats(0.1, 79.9), min_size=2, max_size=60))
    @settings(max_examples=40, deadline=None)
    def test_delay_up_needs_high_max(self, delays):
        view = make_view(pkts=[pkt_rec(i * 10 * MS, d)
                               for i, d in enumerate(delays)])
        assert detect(view, EventId.N11_FWD_DELAY_UP) is False


class TestFeaturize:
    def test_all_bits_from_one_view(self):
        trace = make_trace(
            app=[app_rec(i, jb=(0.0 if i == 3 else 40.0)) for i in range(20)],
            ran=[ran_rec(i * 10 * MS) for i in range(10)],
            pkts=[pkt_rec(i * 20 * MS, 30.0) for i in range(20)])
        fv = featurize(trace, Window(0, 5.0))
        assert len(fv) == 36
        assert fv.get(EventId.A4_JB_DRAIN, Side.LOCAL) is True
        assert fv.get(EventId.S19_UL_SCHEDULING) is True
        assert fv.get(EventId.A4_JB_DRAIN, Side.REMOTE) is False

    def test_bitstring_round_trip(self):
        fv = FeatureVector(np.zeros(36, dtype=bool))
        assert FeatureVector.from_bitstring(fv.to_bitstring()) == fv


class TestFeaturizeAll:
    def test_60s_trace_has_111_windows(self):
        trace = make_trace(app=[app_rec(0, ts=i * 100 * MS) for i in range(601)])
        assert len(plan_windows(trace)) == 111
        out = featurize_all(trace)
        assert len(out) == 111
        assert out[0][0].start_us == 0
        assert out[-1][0].start_us == 55 * S

    def test_exactly_window_length_trace(self):
        trace = make_trace(app=[app_rec(0, ts=0), app_rec(0, ts=5 * S)])
        assert len(plan_windows(trace)) == 1

    def test_short_trace_single_short_window(self):
        trace = make_trace(app=[app_rec(0, ts=0), app_rec(0, ts=4 * S)])
        windows = plan_windows(trace)
        assert len(windows) == 1
        assert windows[0].length_us == 4 * S

    def test_empty_trace_rejected(self):
        from chaintrace.trace import Trace
        with pytest.raises(ValueError):
            plan_windows(Trace.empty())

    def test_windows_ordered_and_deterministic(self):
        trace = make_trace(
            app=[app_rec(i, jb=(0.0 if i % 30 == 7 else 40.0))
                 for i in range(200)])
        a = featurize_all(trace)
        b = featurize_all(trace)
        starts = [w.start_us for w, _ in a]
        assert starts == sorted(starts)
        assert all(x[1] == y[1] for x, y in zip(a, b))


class TestDetectorConfig:
    def test_defaults_positive(self):
        DetectorConfig()

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            DetectorConfig(fps_hi=0)

    def test_from_file(self, tmp_path):
        p = tmp_path / "detector.conf"
        p.write_text("# thresholds\nharq_count = 20\ndelay_hi_ms = 95\n")
        cfg = DetectorConfig.from_file(p)
        assert cfg.harq_count == 20
        assert cfg.delay_hi_ms == 95.0
        assert cfg.fps_hi == 27.0

    def test_from_file_rejects_unknown_key(self, tmp_path):
        p = tmp_path / "detector.conf"
        p.write_text("no_such_threshold = 1\n")
        with pytest.raises(ValueError):
            DetectorConfig.from_file(p)

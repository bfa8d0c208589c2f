import pytest

from chaintrace.ingest import (ClockOffsets, IngestError, assemble, load_app,
                               load_packets, load_ran, load_trace, write_app,
                               write_packets, write_ran)
from chaintrace.trace import Direction, GccState, Side

from conftest import MS, S, app_rec, make_trace, pkt_rec, ran_rec

RAN_LINES = [
    "1000,ul,4601,10,22,20000,1,0,0,0",
    "2000,dl,4601,12,20,24000,1,0,0,0",
    "3000,ul,9001,30,15,0,0,0,0,1",
]
PKT_LINES = [
    "100,35100,ul,900,media",
    "2000,30000,dl,120,rtcp",
]
APP_LINE = "0,local,30.0,30.0,720,45.5,2000000.0,2000000.0,normal,10000,100000,2000000.0"


def _write(tmp_path, name, lines, header=None):
    p = tmp_path / name
    content = ([header] if header else []) + list(lines)
    p.write_text("\n".join(content) + "\n")
    return p


class TestLoadRan:
    def test_three_valid_lines(self, tmp_path):
        stream, stats = load_ran(_write(tmp_path, "ran.csv", RAN_LINES))
        assert (stats.read, stats.kept, stats.dropped) == (3, 3, 0)
        assert stream.record(0).dir == Direction.UL
        assert stream.record(2).proactive_grant is True

    def test_header_detected(self, tmp_path):
        p = _write(tmp_path, "ran.csv", RAN_LINES,
                   header="ts_us,dir,rnti,prb,mcs,tbs_bits,own,harq_retx,rlc_retx,proactive")
        stream, stats = load_ran(p)
        assert stats.read == 3 and len(stream) == 3

    def test_mcs_out_of_range_dropped(self, tmp_path):
        p = _write(tmp_path, "ran.csv",
                   RAN_LINES + ["4000,ul,4601,10,31,20000,1,0,0,0"] * 0
                   + ["4000,ul,4601,10,31,20000,1,0,0,0"]
                   + ["5000,ul,4601,10,22,20000,1,0,0,0"] * 7)
        stream, stats = load_ran(p)
        assert stats.dropped == 1
        assert any("mcs 31" in w for w in stats.warnings)
        assert 31 not in stream.mcs

    def test_offset_applied(self, tmp_path):
        p = _write(tmp_path, "ran.csv", RAN_LINES)
        stream, _ = load_ran(p, ClockOffsets(ran_us=-1000))
        assert stream.ts_us.tolist() == [0, 1000, 2000]

    def test_unreadable_file_fatal(self, tmp_path):
        with pytest.raises(IngestError):
            load_ran(tmp_path / "missing.csv")

    def test_malformed_budget_fatal(self, tmp_path):
        p = _write(tmp_path, "ran.csv", RAN_LINES + ["garbage"] * 2)
        with pytest.raises(IngestError):
            load_ran(p)

    def test_sorted_after_offset(self, tmp_path):
        p = _write(tmp_path, "ran.csv", list(reversed(RAN_LINES)))
        stream, _ = load_ran(p)
        assert stream.ts_us.tolist() == [1000, 2000, 3000]


class TestLoadPackets:
    def test_delay_from_timestamps(self, tmp_path):
        stream, _ = load_packets(_write(tmp_path, "pkt.csv", PKT_LINES))
        assert stream.record(0).one_way_delay_us == 35 * MS

    def test_recv_before_send_dropped(self, tmp_path):
        p = _write(tmp_path, "pkt.csv", PKT_LINES * 5 + ["5000,4000,ul,900,media"])
        stream, stats = load_packets(p)
        assert stats.dropped == 1
        assert len(stream) == 10

    def test_kind_parsed(self, tmp_path):
        stream, _ = load_packets(_write(tmp_path, "pkt.csv", PKT_LINES))
        kinds = {stream.record(i).kind.name for i in range(2)}
        assert kinds == {"MEDIA", "RTCP"}


class TestLoadApp:
    def test_cadence_count(self, tmp_path):
        lines = [f"{i * 50 * MS},local,30.0,30.0,720,45.5,2e6,2e6,normal,1,10,2e6"
                 for i in range(100)]
        stream, stats = load_app(_write(tmp_path, "app.csv", lines))
        assert len(stream) == 100
        assert stream.ts_us[-1] - stream.ts_us[0] == 99 * 50 * MS

    def test_zero_jitter_buffer_accepted(self, tmp_path):
        line = APP_LINE.replace("45.5", "0.0")
        stream, stats = load_app(_write(tmp_path, "app.csv", [line]))
        assert stats.dropped == 0 and stream.jb_ms[0] == 0.0

    def test_unknown_gcc_state_dropped(self, tmp_path):
        bad = APP_LINE.replace("normal", "panicking")
        _, stats = load_app(_write(tmp_path, "app.csv", [APP_LINE] * 9 + [bad]))
        assert stats.dropped == 1
        assert any("panicking" in w or "dropped" in w for w in stats.warnings)

    def test_gcc_state_case_insensitive(self, tmp_path):
        line = APP_LINE.replace("normal", "OVERUSE")
        stream, _ = load_app(_write(tmp_path, "app.csv", [line]))
        assert stream.gcc_state[0] == GccState.OVERUSE

    def test_negative_bitrate_dropped(self, tmp_path):
        bad = APP_LINE.replace("2000000.0,2000000.0,normal", "-5.0,2000000.0,normal")
        _, stats = load_app(_write(tmp_path, "app.csv", [APP_LINE] * 9 + [bad]))
        assert stats.dropped == 1

    def test_per_side_offsets(self, tmp_path):
        remote = APP_LINE.replace("local", "remote")
        stream, _ = load_app(_write(tmp_path, "app.csv", [APP_LINE, remote]),
                             ClockOffsets(app_local_us=100, app_remote_us=200))
        by_side = {int(stream.side[i]): int(stream.ts_us[i]) for i in range(2)}
        assert by_side == {int(Side.LOCAL): 100, int(Side.REMOTE): 200}


class TestAssemble:
    def test_identical_spans_full_overlap(self):
        t = make_trace(app=[app_rec(0, ts=0), app_rec(0, ts=60 * S)],
                       ran=[ran_rec(0), ran_rec(60 * S)],
                       pkts=[pkt_rec(0, 30.0), pkt_rec(60 * S, 30.0)])
        _, report = assemble(t.ran, t.packets, t.app)
        assert report.overlap_fraction == 1.0
        assert not report.warnings

    def test_partial_overlap_warns(self):
        from chaintrace.trace import AppStream, PacketStream, RanStream
        app = AppStream.from_records([app_rec(0, ts=0), app_rec(0, ts=60 * S)])
        ran = RanStream.from_records([ran_rec(30 * S), ran_rec(90 * S)])
        _, report = assemble(ran, PacketStream.empty(), app)
        assert report.overlap_us == 30 * S
        assert any("overlap" in w for w in report.warnings)

    def test_zero_overlap_fatal(self):
        from chaintrace.trace import AppStream, PacketStream, RanStream
        app = AppStream.from_records([app_rec(0, ts=0), app_rec(0, ts=10 * S)])
        ran = RanStream.from_records([ran_rec(30 * S), ran_rec(90 * S)])
        with pytest.raises(IngestError):
            assemble(ran, PacketStream.empty(), app)

    def test_empty_stream_warns_but_valid(self):
        from chaintrace.trace import AppStream, PacketStream, RanStream
        app = AppStream.from_records([app_rec(0, ts=0), app_rec(0, ts=10 * S)])
        trace, report = assemble(RanStream.empty(), PacketStream.empty(), app)
        assert any("empty" in w for w in report.warnings)
        assert len(trace.app) == 2


class TestRoundTrip:
    def _sample_trace(self):
        return make_trace(
            app=[app_rec(i, Side.LOCAL if i % 2 else Side.REMOTE,
                         jb=0.25 * i, target=1e6 + i * 1000.5)
                 for i in range(40)],
            ran=[ran_rec(i * 777, Direction.DL if i % 3 else Direction.UL,
                         prb=i % 7, mcs=i % 29, tbs=i * 117,
                         harq=i % 5 == 0, rlc=i % 11 == 0)
                 for i in range(60)],
            pkts=[pkt_rec(i * 333, 30.0 + (i % 9) * 0.125,
                          Direction.DL if i % 2 else Direction.UL,
                          kind=(i % 4 == 0) and 1 or 0)
                  for i in range(80)])

    def test_write_load_fixed_point(self, tmp_path):
        trace = self._sample_trace()
        write_ran(trace.ran, tmp_path / "ran.csv")
        write_packets(trace.packets, tmp_path / "pkt.csv")
        write_app(trace.app, tmp_path / "app.csv")
        loaded, report = load_trace(tmp_path / "ran.csv", tmp_path / "pkt.csv",
                                    tmp_path / "app.csv")
        assert loaded == trace
        assert report.ran.dropped == 0
        write_ran(loaded.ran, tmp_path / "ran2.csv")
        write_packets(loaded.packets, tmp_path / "pkt2.csv")
        write_app(loaded.app, tmp_path / "app2.csv")
        for a, b in (("ran.csv", "ran2.csv"), ("pkt.csv", "pkt2.csv"),
                     ("app.csv", "app2.csv")):
            assert (tmp_path / a).read_bytes() == (tmp_path / b).read_bytes()

    def test_stable_sort_for_equal_timestamps(self, tmp_path):
        lines = ["5000,ul,1,1,10,111,1,0,0,0",
                 "5000,ul,2,2,10,222,1,0,0,0",
                 "1000,dl,3,3,10,333,1,0,0,0"]
        p = tmp_path / "ran.csv"
        p.write_text("\n".join(lines) + "\n")
        stream, _ = load_ran(p)
        assert stream.rnti.tolist() == [3, 1, 2]

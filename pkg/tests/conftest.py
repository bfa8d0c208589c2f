import numpy as np
import pytest

from chaintrace.trace import (AppRecord, AppStream, Direction, GccState,
                              PacketKind, PacketRecord, PacketStream,
                              RanRecord, RanStream, Side, Trace, Window,
                              WindowView)

MS = 1000
S = 1_000_000


def app_rec(i, side=Side.LOCAL, *, in_fps=30.0, out_fps=30.0, res=720,
            jb=50.0, target=2e6, pushback=2e6, gcc=GccState.NORMAL,
            outstanding=10_000, cwnd=100_000, send_rate=2e6, ts=None):
    """App sample i at a 50 ms cadence unless ts is given."""
    return AppRecord(ts if ts is not None else i * 50 * MS, side, in_fps,
                     out_fps, res, jb, target, pushback, gcc, outstanding,
                     cwnd, send_rate)


def ran_rec(ts, dir=Direction.UL, *, rnti=4601, prb=10, mcs=22, tbs=20_000,
            own=True, harq=False, rlc=False, proactive=False):
    return RanRecord(ts, dir, rnti, prb, mcs, tbs, own, harq, rlc, proactive)


def pkt_rec(send, delay_ms, dir=Direction.UL, *, size=900, kind=PacketKind.MEDIA):
    return PacketRecord(send, send + int(round(delay_ms * MS)), dir, size, kind)


def make_view(app=(), ran=(), pkts=(), start=0, length_s=5.0) -> WindowView:
    return WindowView(
        Window(start, length_s),
        RanStream.from_records(sorted(ran, key=lambda r: r.ts)),
        PacketStream.from_records(sorted(pkts, key=lambda p: p.send_ts)),
        AppStream.from_records(sorted(app, key=lambda a: a.ts)),
    )


def make_trace(app=(), ran=(), pkts=()) -> Trace:
    return Trace(
        RanStream.from_records(sorted(ran, key=lambda r: r.ts)),
        PacketStream.from_records(sorted(pkts, key=lambda p: p.send_ts)),
        AppStream.from_records(sorted(app, key=lambda a: a.ts)),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)

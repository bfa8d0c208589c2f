"""Load, validate, and clock-align the three telemetry files into a Trace.

File format: comma-separated records, one per line, fixed field order per
stream (see README). A header line is optional and detected by a
non-numeric first token. Malformed or invariant-violating lines are
dropped and counted; more than 10% drops in a stream is fatal.
"""

from __future__ import annotations

import logging
from array import array
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .trace import (AppStream, Direction, GccState, PacketKind, PacketStream,
                    RanStream, Side, Trace, TraceMeta)

log = logging.getLogger(__name__)

MAX_MALFORMED_FRACTION = 0.10
LOW_OVERLAP_FRACTION = 0.50

RAN_HEADER = "ts_us,dir,rnti,prb,mcs,tbs_bits,own,harq_retx,rlc_retx,proactive"
PKT_HEADER = "send_ts_us,recv_ts_us,dir,size_bytes,kind"
APP_HEADER = ("ts_us,side,in_fps,out_fps,out_res_height,jitter_buffer_ms,"
              "target_bitrate_bps,pushback_rate_bps,gcc_state,outstanding_bytes,"
              "cwnd_bytes,app_send_rate_bps")

_DIRS = {"ul": Direction.UL, "dl": Direction.DL}
_KINDS = {"media": PacketKind.MEDIA, "rtcp": PacketKind.RTCP}
_SIDES = {"local": Side.LOCAL, "remote": Side.REMOTE}
_GCC = {"normal": GccState.NORMAL, "overuse": GccState.OVERUSE,
        "underuse": GccState.UNDERUSE}
_BOOLS = {"0": 0, "1": 1}


class IngestError(Exception):
    """Fatal problem while loading telemetry files."""


@dataclass(frozen=True)
class ClockOffsets:
    """Additive microsecond corrections applied per stream at load time."""

    ran_us: int = 0
    packets_us: int = 0
    app_local_us: int = 0
    app_remote_us: int = 0


@dataclass
class StreamStats:
    path: str = ""
    read: int = 0
    kept: int = 0
    dropped: int = 0
    first_us: int | None = None
    last_us: int | None = None
    warnings: list[str] = field(default_factory=list)

    def finish(self, ts: np.ndarray) -> None:
        if ts.size:
            self.first_us = int(ts[0])
            self.last_us = int(ts[-1])

    def note_drop(self, line_no: int, reason: str) -> None:
        self.dropped += 1
        if len(self.warnings) < 20:
            self.warnings.append(f"line {line_no}: dropped ({reason})")


@dataclass
class IngestReport:
    ran: StreamStats
    packets: StreamStats
    app: StreamStats
    overlap_us: int = 0
    overlap_fraction: float = 1.0
    warnings: list[str] = field(default_factory=list)

    def all_warnings(self) -> list[str]:
        return (self.ran.warnings + self.packets.warnings + self.app.warnings
                + self.warnings)

    def to_dict(self) -> dict:
        def s(st: StreamStats) -> dict:
            return {"path": st.path, "read": st.read, "kept": st.kept,
                    "dropped": st.dropped, "first_us": st.first_us,
                    "last_us": st.last_us, "warnings": st.warnings}
        return {"ran": s(self.ran), "packets": s(self.packets),
                "app": s(self.app), "overlap_us": self.overlap_us,
                "overlap_fraction": self.overlap_fraction,
                "warnings": self.warnings}


def _open_lines(path) -> list[str]:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise IngestError(f"cannot read {p}: {exc}") from exc
    return text.splitlines()


def _is_header(line: str) -> bool:
    head = line.split(",", 1)[0].strip()
    if not head:
        return False
    try:
        float(head)
        return False
    except ValueError:
        return True


def _check_drop_budget(stats: StreamStats, path) -> None:
    if stats.read and stats.dropped / stats.read > MAX_MALFORMED_FRACTION:
        raise IngestError(
            f"{path}: {stats.dropped}/{stats.read} lines malformed "
            f"(> {MAX_MALFORMED_FRACTION:.0%} budget)")


def load_ran(path, offsets: ClockOffsets = ClockOffsets()) -> tuple[RanStream, StreamStats]:
    """Parse a radio-layer file; records sorted by corrected timestamp."""
    stats = StreamStats(path=str(path))
    cols = [array("q") for _ in range(6)] + [array("b") for _ in range(4)]
    off = offsets.ran_us
    for line_no, line in enumerate(_open_lines(path), start=1):
        if not line.strip():
            continue
        if line_no == 1 and _is_header(line):
            continue
        stats.read += 1
        f = line.split(",")
        try:
            if len(f) != 10:
                raise ValueError("field count")
            ts = int(f[0]) + off
            d = _DIRS[f[1].strip().lower()]
            rnti, prb, mcs, tbs = int(f[2]), int(f[3]), int(f[4]), int(f[5])
            own, harq, rlc, pro = (_BOOLS[f[6].strip()], _BOOLS[f[7].strip()],
                                   _BOOLS[f[8].strip()], _BOOLS[f[9].strip()])
            if ts < 0:
                raise ValueError("negative timestamp")
            if not 0 <= mcs <= 28:
                raise ValueError(f"mcs {mcs} out of [0, 28]")
            if prb < 0 or tbs < 0:
                raise ValueError("negative prb/tbs")
        except (ValueError, KeyError, IndexError) as exc:
            stats.note_drop(line_no, str(exc) or exc.__class__.__name__)
            continue
        for col, v in zip(cols, (ts, rnti, prb, mcs, tbs, d, own, harq, rlc, pro)):
            col.append(v)
        stats.kept += 1
    _check_drop_budget(stats, path)
    ts, rnti, prb, mcs, tbs, d, own, harq, rlc, pro = cols
    stream = RanStream.from_arrays(ts, d, rnti, prb, mcs, tbs, own, harq, rlc, pro)
    stream = stream.sorted_by_ts()
    stats.finish(stream.ts_us)
    return stream, stats


def load_packets(path, offsets: ClockOffsets = ClockOffsets()) -> tuple[PacketStream, StreamStats]:
    """Parse a packet file; additionally drops records with recv < send."""
    stats = StreamStats(path=str(path))
    send = array("q")
    recv = array("q")
    size = array("q")
    d_col = array("b")
    k_col = array("b")
    off = offsets.packets_us
    for line_no, line in enumerate(_open_lines(path), start=1):
        if not line.strip():
            continue
        if line_no == 1 and _is_header(line):
            continue
        stats.read += 1
        f = line.split(",")
        try:
            if len(f) != 5:
                raise ValueError("field count")
            s_ts = int(f[0]) + off
            r_ts = int(f[1]) + off
            d = _DIRS[f[2].strip().lower()]
            sz = int(f[3])
            k = _KINDS[f[4].strip().lower()]
            if s_ts < 0:
                raise ValueError("negative timestamp")
            if r_ts < s_ts:
                raise ValueError("recv before send")
            if sz <= 0:
                raise ValueError("non-positive size")
        except (ValueError, KeyError, IndexError) as exc:
            stats.note_drop(line_no, str(exc) or exc.__class__.__name__)
            continue
        send.append(s_ts)
        recv.append(r_ts)
        d_col.append(d)
        size.append(sz)
        k_col.append(k)
        stats.kept += 1
    _check_drop_budget(stats, path)
    stream = PacketStream.from_arrays(send, recv, d_col, size, k_col).sorted_by_ts()
    stats.finish(stream.send_us)
    return stream, stats


def load_app(path, offsets: ClockOffsets = ClockOffsets()) -> tuple[AppStream, StreamStats]:
    """Parse an application statistics file (both client sides in one file)."""
    stats = StreamStats(path=str(path))
    ts_c = array("q")
    side_c = array("b")
    ints = {name: array("q") for name in ("res", "outstanding", "cwnd")}
    floats = {name: array("d") for name in ("in_fps", "out_fps", "jb", "target",
                                            "pushback", "send_rate")}
    gcc_c = array("b")
    offs = (offsets.app_local_us, offsets.app_remote_us)
    for line_no, line in enumerate(_open_lines(path), start=1):
        if not line.strip():
            continue
        if line_no == 1 and _is_header(line):
            continue
        stats.read += 1
        f = line.split(",")
        try:
            if len(f) != 12:
                raise ValueError("field count")
            side = _SIDES[f[1].strip().lower()]
            ts = int(f[0]) + offs[side]
            in_fps, out_fps = float(f[2]), float(f[3])
            res = int(f[4])
            jb = float(f[5])
            target, pushback = float(f[6]), float(f[7])
            gcc = _GCC[f[8].strip().lower()]
            outstanding, cwnd = int(f[9]), int(f[10])
            send_rate = float(f[11])
            if ts < 0:
                raise ValueError("negative timestamp")
            if jb < 0:
                raise ValueError("negative jitter buffer")
            if target < 0 or pushback < 0 or send_rate < 0:
                raise ValueError("negative rate")
            if outstanding < 0 or cwnd <= 0:
                raise ValueError("bad window bytes")
            for v in (in_fps, out_fps, jb, target, pushback, send_rate):
                if not np.isfinite(v):
                    raise ValueError("non-finite value")
        except (ValueError, KeyError, IndexError) as exc:
            stats.note_drop(line_no, str(exc) or exc.__class__.__name__)
            continue
        ts_c.append(ts)
        side_c.append(side)
        floats["in_fps"].append(in_fps)
        floats["out_fps"].append(out_fps)
        ints["res"].append(res)
        floats["jb"].append(jb)
        floats["target"].append(target)
        floats["pushback"].append(pushback)
        gcc_c.append(gcc)
        ints["outstanding"].append(outstanding)
        ints["cwnd"].append(cwnd)
        floats["send_rate"].append(send_rate)
        stats.kept += 1
    _check_drop_budget(stats, path)
    stream = AppStream.from_arrays(
        ts_c, side_c, floats["in_fps"], floats["out_fps"], ints["res"],
        floats["jb"], floats["target"], floats["pushback"], gcc_c,
        ints["outstanding"], ints["cwnd"], floats["send_rate"],
    ).sorted_by_ts()
    stats.finish(stream.ts_us)
    return stream, stats


def _spans(ran: RanStream, packets: PacketStream, app: AppStream) -> list[tuple[str, int, int]]:
    spans = []
    if len(ran):
        spans.append(("ran", int(ran.ts_us[0]), int(ran.ts_us[-1])))
    if len(packets):
        spans.append(("packets", int(packets.send_us[0]), int(packets.send_us[-1])))
    if len(app):
        spans.append(("app", int(app.ts_us[0]), int(app.ts_us[-1])))
    return spans


def assemble(ran: RanStream, packets: PacketStream, app: AppStream,
             meta: TraceMeta = TraceMeta(),
             stats: tuple[StreamStats, StreamStats, StreamStats] | None = None,
             ) -> tuple[Trace, IngestReport]:
    """Merge loaded streams into one Trace and summarize their time overlap.

    Zero overlap between two non-empty streams is fatal; overlap below 50%
    of the union span is flagged with a warning, as is any empty stream.
    """
    if stats is None:
        stats = (StreamStats(), StreamStats(), StreamStats())
    report = IngestReport(ran=stats[0], packets=stats[1], app=stats[2])
    spans = _spans(ran, packets, app)
    for name, stream in (("ran", ran), ("packets", packets), ("app", app)):
        if len(stream) == 0:
            report.warnings.append(f"{name} stream is empty")
    if len(spans) >= 2:
        for i in range(len(spans)):
            for j in range(i + 1, len(spans)):
                na, a0, a1 = spans[i]
                nb, b0, b1 = spans[j]
                if min(a1, b1) < max(a0, b0):
                    raise IngestError(
                        f"streams {na} and {nb} do not overlap in time")
        inter = min(s[2] for s in spans) - max(s[1] for s in spans)
        union = max(s[2] for s in spans) - min(s[1] for s in spans)
        report.overlap_us = max(0, inter)
        report.overlap_fraction = (inter / union) if union > 0 else 1.0
        if report.overlap_fraction < LOW_OVERLAP_FRACTION:
            report.warnings.append(
                f"streams overlap for only {report.overlap_fraction:.0%} "
                "of the combined span")
    trace = Trace(ran=ran, packets=packets, app=app, meta=meta)
    for w in report.all_warnings():
        log.warning("%s", w)
    return trace, report


def load_trace(ran_path, pkt_path, app_path,
               offsets: ClockOffsets = ClockOffsets(),
               meta: TraceMeta = TraceMeta()) -> tuple[Trace, IngestReport]:
    """Load all three files and assemble them into a Trace."""
    ran, ran_stats = load_ran(ran_path, offsets)
    packets, pkt_stats = load_packets(pkt_path, offsets)
    app, app_stats = load_app(app_path, offsets)
    return assemble(ran, packets, app, meta, (ran_stats, pkt_stats, app_stats))


def write_ran(stream: RanStream, path) -> None:
    dirs = np.where(stream.dir == Direction.UL, "ul", "dl").tolist()
    rows = [RAN_HEADER]
    rows.extend(
        f"{ts},{d},{rnti},{prb},{mcs},{tbs},{own:d},{harq:d},{rlc:d},{pro:d}"
        for ts, d, rnti, prb, mcs, tbs, own, harq, rlc, pro in zip(
            stream.ts_us.tolist(), dirs, stream.rnti.tolist(),
            stream.prb.tolist(), stream.mcs.tolist(), stream.tbs_bits.tolist(),
            stream.own.tolist(), stream.harq_retx.tolist(),
            stream.rlc_retx.tolist(), stream.proactive.tolist()))
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def write_packets(stream: PacketStream, path) -> None:
    dirs = np.where(stream.dir == Direction.UL, "ul", "dl").tolist()
    kinds = np.where(stream.kind == PacketKind.MEDIA, "media", "rtcp").tolist()
    rows = [PKT_HEADER]
    rows.extend(
        f"{s},{r},{d},{sz},{k}"
        for s, r, d, sz, k in zip(stream.send_us.tolist(), stream.recv_us.tolist(),
                                  dirs, stream.size_bytes.tolist(), kinds))
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def write_app(stream: AppStream, path) -> None:
    sides = np.where(stream.side == Side.LOCAL, "local", "remote").tolist()
    gcc_names = {int(g): g.name.lower() for g in GccState}
    gccs = [gcc_names[g] for g in stream.gcc_state.tolist()]
    rows = [APP_HEADER]
    rows.extend(
        f"{ts},{sd},{in_fps!r},{out_fps!r},{res},{jb!r},{tgt!r},{pb!r},{gcc},"
        f"{outs},{cwnd},{sr!r}"
        for ts, sd, in_fps, out_fps, res, jb, tgt, pb, gcc, outs, cwnd, sr in zip(
            stream.ts_us.tolist(), sides, stream.in_fps.tolist(),
            stream.out_fps.tolist(), stream.res_height.tolist(),
            stream.jb_ms.tolist(), stream.target_bps.tolist(),
            stream.pushback_bps.tolist(), gccs,
            stream.outstanding_bytes.tolist(), stream.cwnd_bytes.tolist(),
            stream.send_rate_bps.tolist()))
    Path(path).write_text("\n".join(rows) + "\n", encoding="utf-8")


def write_trace(trace: Trace, out_dir) -> dict[str, Path]:
    """Write all three streams in the canonical file layout of a run."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"ran": out / "ran.csv", "packets": out / "packets.csv",
             "app": out / "app.csv"}
    write_ran(trace.ran, paths["ran"])
    write_packets(trace.packets, paths["packets"])
    write_app(trace.app, paths["app"])
    return paths

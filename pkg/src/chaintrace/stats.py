"""Aggregate window detections into the three report forms.

Reports: per-minute event frequency (debounced over overlapping windows),
conditional probability of each cause given a consequence, and per-chain
ratios with multi-cause deduplication.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .events import CANONICAL_LAYOUT, FeatureLayout, FeatureVector
from .graph import ChainMatch, UNKNOWN
from .trace import Direction

# Ordered rarest/most-disruptive first; decides which cause keeps a
# multi-cause chain instance. Configurable, not a claim about real cells.
DEFAULT_CAUSE_PRIORITY = ("rlc_retx", "rrc_state", "cross_traffic",
                          "poor_channel", "harq_retx", "ul_scheduling")


@dataclass(frozen=True)
class FrequencyEntry:
    slot: str
    runs: int
    window_hits: int
    per_minute: float


@dataclass
class FrequencyReport:
    """Occurrences per minute per feature slot, debounced across windows.

    One occurrence is a maximal run of consecutive windows in which the
    bit stays true; overlapping windows would otherwise multiply counts.
    """

    span_minutes: float
    entries: list[FrequencyEntry]

    kind = "frequency"

    def to_table_text(self) -> str:
        width = max([len(e.slot) for e in self.entries] + [5])
        lines = [f"analyzed span: {self.span_minutes:.3f} min",
                 f"{'event':<{width}}  {'runs':>5}  {'hits':>6}  per_minute"]
        for e in self.entries:
            lines.append(f"{e.slot:<{width}}  {e.runs:>5}  {e.window_hits:>6}  "
                         f"{e.per_minute:.4f}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        rows = ["report,row,col,value"]
        for e in self.entries:
            rows.append(f"frequency,{e.slot},runs,{e.runs}")
            rows.append(f"frequency,{e.slot},window_hits,{e.window_hits}")
            rows.append(f"frequency,{e.slot},per_minute,{e.per_minute!r}")
        return "\n".join(rows) + "\n"

    def to_jsonl(self) -> str:
        lines = [json.dumps({"report": "frequency",
                             "span_minutes": self.span_minutes})]
        for e in self.entries:
            lines.append(json.dumps({
                "slot": e.slot, "runs": e.runs, "window_hits": e.window_hits,
                "per_minute": e.per_minute}))
        return "\n".join(lines) + "\n"


def frequency(fvs: Sequence[FeatureVector], span_minutes: float,
              layout: FeatureLayout | None = None) -> FrequencyReport:
    """Debounced event occurrences per minute over an ordered window list."""
    if span_minutes <= 0:
        raise ValueError("span must be positive")
    if layout is None:
        layout = fvs[0].layout if fvs else CANONICAL_LAYOUT
    entries = []
    for i, slot in enumerate(layout.slots):
        runs = 0
        hits = 0
        prev = False
        for fv in fvs:
            bit = bool(fv.bits[i])
            hits += bit
            if bit and not prev:
                runs += 1
            prev = bit
        entries.append(FrequencyEntry(slot.name, runs, hits, runs / span_minutes))
    return FrequencyReport(span_minutes, entries)


Attribution = Mapping[str, frozenset | str]


@dataclass
class ConditionalTable:
    """P(cause present | consequence detected), in percent, per consequence.

    Rows may sum past 100% because several causes can be attributed to the
    same window; UNKNOWN counts windows where no chain reached the
    consequence and is exclusive of the cause columns.
    """

    causes: list[str]
    rows: dict[str, dict[str, float]]
    occurrences: dict[str, int]

    kind = "conditional"

    def columns(self) -> list[str]:
        return self.causes + [UNKNOWN]

    def to_table_text(self) -> str:
        cols = self.columns()
        width = max([len(r) for r in self.rows] + [11])
        head = f"{'consequence':<{width}}  " + "  ".join(f"{c:>14}" for c in cols) + "  occurrences"
        lines = [head]
        for cons in sorted(self.rows):
            if self.occurrences[cons] == 0:
                cells = "  ".join(f"{'n/a':>14}" for _ in cols)
            else:
                cells = "  ".join(f"{self.rows[cons][c]:>13.2f}%" for c in cols)
            lines.append(f"{cons:<{width}}  {cells}  {self.occurrences[cons]:>11}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        rows = ["report,row,col,value"]
        for cons in sorted(self.rows):
            for c in self.columns():
                value = "n/a" if self.occurrences[cons] == 0 else repr(self.rows[cons][c])
                rows.append(f"conditional,{cons},{c},{value}")
            rows.append(f"conditional,{cons},occurrences,{self.occurrences[cons]}")
        return "\n".join(rows) + "\n"

    def to_jsonl(self) -> str:
        lines = []
        for cons in sorted(self.rows):
            lines.append(json.dumps({
                "consequence": cons, "occurrences": self.occurrences[cons],
                "percent": {c: self.rows[cons][c] for c in self.columns()}}))
        return "\n".join(lines) + "\n"


def conditional(attributions: Iterable[Attribution],
                causes: Sequence[str] | None = None,
                consequences: Sequence[str] | None = None) -> ConditionalTable:
    """Cause-given-consequence percentages from per-window attributions.

    Each element maps consequence id to either a set of cause ids or
    UNKNOWN; every element counts as one consequence occurrence. The
    result depends only on the multiset of attributions, not their order.
    """
    cause_set = set(causes or ())
    cons_set = set(consequences or ())
    occurrences: dict[str, int] = {}
    hits: dict[str, dict[str, int]] = {}
    unknown: dict[str, int] = {}
    for record in attributions:
        for cons, attributed in record.items():
            cons_set.add(cons)
            occurrences[cons] = occurrences.get(cons, 0) + 1
            if attributed == UNKNOWN or not attributed:
                unknown[cons] = unknown.get(cons, 0) + 1
                continue
            for cause in attributed:
                cause_set.add(cause)
                hits.setdefault(cons, {})
                hits[cons][cause] = hits[cons].get(cause, 0) + 1
    cause_list = sorted(cause_set)
    rows = {}
    occ_out = {}
    for cons in sorted(cons_set):
        occ = occurrences.get(cons, 0)
        occ_out[cons] = occ
        row = {}
        for cause in cause_list:
            row[cause] = 100.0 * hits.get(cons, {}).get(cause, 0) / occ if occ else 0.0
        row[UNKNOWN] = 100.0 * unknown.get(cons, 0) / occ if occ else 0.0
        rows[cons] = row
    return ConditionalTable(cause_list, rows, occ_out)


@dataclass
class ChainRatioTable:
    """Share of each (consequence, cause) chain among all detected instances.

    The denominator counts every distinct detected (window, direction,
    consequence, cause) instance; with dedup enabled a multi-cause
    detection is credited to a single cause by priority, so row totals
    fall below 100% whenever multi-cause windows exist.
    """

    causes: list[str]
    rows: dict[str, dict[str, float]]
    counted: dict[str, dict[str, int]]
    total_detected: int
    total_counted: int
    dedup: bool

    kind = "chain_ratios"

    def total_percent(self) -> float:
        return sum(v for row in self.rows.values() for v in row.values())

    def to_table_text(self) -> str:
        width = max([len(r) for r in self.rows] + [11])
        lines = [f"detected chain instances: {self.total_detected} "
                 f"(counted after dedup: {self.total_counted})",
                 f"{'consequence':<{width}}  " + "  ".join(f"{c:>14}" for c in self.causes)]
        for cons in sorted(self.rows):
            cells = "  ".join(f"{self.rows[cons][c]:>13.2f}%" for c in self.causes)
            lines.append(f"{cons:<{width}}  {cells}")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        rows = ["report,row,col,value"]
        for cons in sorted(self.rows):
            for c in self.causes:
                rows.append(f"chain_ratios,{cons},{c},{self.rows[cons][c]!r}")
        rows.append(f"chain_ratios,total,detected,{self.total_detected}")
        rows.append(f"chain_ratios,total,counted,{self.total_counted}")
        return "\n".join(rows) + "\n"

    def to_jsonl(self) -> str:
        lines = [json.dumps({"report": "chain_ratios",
                             "total_detected": self.total_detected,
                             "total_counted": self.total_counted,
                             "dedup": self.dedup})]
        for cons in sorted(self.rows):
            lines.append(json.dumps({
                "consequence": cons,
                "percent": {c: self.rows[cons][c] for c in self.causes},
                "counted": {c: self.counted[cons].get(c, 0) for c in self.causes}}))
        return "\n".join(lines) + "\n"


def chain_ratios(matches: Sequence[ChainMatch], dedup: bool = True,
                 priority: Sequence[str] = DEFAULT_CAUSE_PRIORITY) -> ChainRatioTable:
    """Chain shares over all detected instances, one count per consequence.

    A detected instance is a distinct (window, direction, consequence,
    cause) tuple. With dedup on, each (window, direction, consequence)
    counts once, credited to its highest-priority cause; the remaining
    co-detected causes stay in the denominator only.
    """
    detected: dict[tuple[int, int, str], set[str]] = {}
    for m in matches:
        key = (m.window_start_us, int(m.stream_dir), m.consequence_id)
        detected.setdefault(key, set()).add(m.cause_id)
    rank = {c: i for i, c in enumerate(priority)}
    causes = sorted({c for group in detected.values() for c in group},
                    key=lambda c: (rank.get(c, len(rank)), c))
    consequences = sorted({key[2] for key in detected})
    total_detected = sum(len(group) for group in detected.values())
    counted: dict[str, dict[str, int]] = {cons: {} for cons in consequences}
    for (_, _, cons), group in detected.items():
        chosen = sorted(group, key=lambda c: (rank.get(c, len(rank)), c))
        keep = chosen[:1] if dedup else chosen
        for cause in keep:
            counted[cons][cause] = counted[cons].get(cause, 0) + 1
    total_counted = sum(v for row in counted.values() for v in row.values())
    rows = {}
    for cons in consequences:
        rows[cons] = {
            c: (100.0 * counted[cons].get(c, 0) / total_detected
                if total_detected else 0.0)
            for c in causes}
    return ChainRatioTable(causes, rows, counted, total_detected,
                           total_counted, dedup)


_FORMATS = {"table-text": ("to_table_text", ".txt"),
            "csv": ("to_csv", ".csv"),
            "jsonl": ("to_jsonl", ".jsonl")}


def render(report, format: str) -> str:
    """Render a report to one of: table-text, csv, jsonl."""
    try:
        method, _ = _FORMATS[format]
    except KeyError:
        raise ValueError(f"unknown report format {format!r}; "
                         f"expected one of {sorted(_FORMATS)}") from None
    return getattr(report, method)()


def export(report, format: str, path) -> Path:
    """Write a rendered report to a file; same input gives identical bytes."""
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(render(report, format), encoding="utf-8")
    return out

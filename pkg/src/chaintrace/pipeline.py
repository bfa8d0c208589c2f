"""End-to-end detection: window sweep, chain matching, and report bundle."""

from __future__ import annotations

from dataclasses import dataclass, field

from .events import (DEFAULT_STEP_S, DEFAULT_WINDOW_S, DetectorConfig,
                     FeatureVector, featurize_all)
from .graph import CausalGraph, ChainMatch, attribute, default_graph, match
from .stats import (ChainRatioTable, ConditionalTable, FrequencyReport,
                    chain_ratios, conditional, frequency)
from .trace import Direction, Trace, Window


@dataclass
class DetectionResult:
    window_s: float
    step_s: float
    windows: list[tuple[Window, FeatureVector]]
    matches: list[ChainMatch]
    attributions: list[tuple[int, Direction, dict]]

    def span_minutes(self) -> float:
        if not self.windows:
            return 0.0
        first = self.windows[0][0]
        last = self.windows[-1][0]
        return (last.end_us - first.start_us) / 60e6


def run_detection(trace: Trace, graph: CausalGraph | None = None,
                  cfg: DetectorConfig | None = None,
                  window_s: float = DEFAULT_WINDOW_S,
                  step_s: float = DEFAULT_STEP_S,
                  evaluator=None) -> DetectionResult:
    """Featurize every window and match chains for both media directions."""
    graph = graph or default_graph()
    pairs = featurize_all(trace, window_s, step_s, cfg, evaluator=evaluator)
    matches: list[ChainMatch] = []
    attributions = []
    for window, fv in pairs:
        for dir in (Direction.UL, Direction.DL):
            matches.extend(match(fv, graph, dir, window.start_us))
            attributions.append((window.start_us, dir,
                                 attribute(fv, graph, dir, window.start_us)))
    return DetectionResult(window_s, step_s, pairs, matches, attributions)


@dataclass
class ReportBundle:
    frequency: FrequencyReport
    conditional: ConditionalTable
    ratios: ChainRatioTable


def build_reports(result: DetectionResult, graph: CausalGraph | None = None,
                  dedup: bool = True) -> ReportBundle:
    graph = graph or default_graph()
    fvs = [fv for _, fv in result.windows]
    freq = frequency(fvs, max(result.span_minutes(), 1e-9))
    cond = conditional([att for _, _, att in result.attributions],
                       causes=graph.causes(), consequences=graph.consequences())
    ratios = chain_ratios(result.matches, dedup=dedup)
    return ReportBundle(freq, cond, ratios)

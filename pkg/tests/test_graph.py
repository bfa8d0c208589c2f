import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chaintrace.events import CANONICAL_LAYOUT, EventId, FeatureVector
from chaintrace.graph import (CausalGraph, CausalNode, ChainPath, EventBinding,
                              GraphError, NodeKind, UNKNOWN, attribute,
                              default_graph, enumerate_chains, match, path_leg)
from chaintrace.trace import Direction, Side

UL, DL = Direction.UL, Direction.DL


def fv_with(*slots) -> FeatureVector:
    bits = np.zeros(36, dtype=bool)
    for key, sel in slots:
        bits[CANONICAL_LAYOUT.index(key, sel)] = True
    return FeatureVector(bits)


def node(node_id, kind, event):
    return CausalNode(node_id, kind, EventBinding.for_event(event))


class TestDefaultGraph:
    def test_exactly_24_paths(self):
        assert len(enumerate_chains(default_graph())) == 24

    def test_every_cause_reaches_every_consequence(self):
        g = default_graph()
        reached = {}
        for p in enumerate_chains(g):
            reached.setdefault(p.cause_id, set()).add(p.consequence_id)
        # independent reachability check by brute-force DFS over edges
        adj = {}
        for a, b in g.edges:
            adj.setdefault(a, set()).add(b)

        def reach(a):
            seen, stack = set(), [a]
            while stack:
                x = stack.pop()
                for y in adj.get(x, ()):
                    if y not in seen:
                        seen.add(y)
                        stack.append(y)
            return seen

        for cause in g.causes():
            assert reached[cause] == set(g.consequences())
            assert set(g.consequences()) <= reach(cause)

    def test_acyclic(self):
        default_graph().validate()

    def test_path_split_per_cause(self):
        per_cause = {}
        for p in enumerate_chains(default_graph()):
            per_cause[p.cause_id] = per_cause.get(p.cause_id, 0) + 1
        assert set(per_cause.values()) == {4}

    def test_paths_ordered_lexicographically(self):
        paths = [p.nodes for p in enumerate_chains(default_graph())]
        assert paths == sorted(paths)


class TestEnumerate:
    def test_single_edge(self):
        g = CausalGraph(
            nodes={"a": node("a", NodeKind.CAUSE, EventId.R17_HARQ_RETX),
                   "b": node("b", NodeKind.CONSEQUENCE, EventId.A4_JB_DRAIN)},
            edges=[("a", "b")])
        assert [p.nodes for p in enumerate_chains(g)] == [("a", "b")]

    def test_diamond(self):
        g = CausalGraph(
            nodes={"a": node("a", NodeKind.CAUSE, EventId.R17_HARQ_RETX),
                   "x": node("x", NodeKind.INTERMEDIATE, EventId.N11_FWD_DELAY_UP),
                   "y": node("y", NodeKind.INTERMEDIATE, EventId.N12_REV_DELAY_UP),
                   "b": node("b", NodeKind.CONSEQUENCE, EventId.A4_JB_DRAIN)},
            edges=[("a", "x"), ("a", "y"), ("x", "b"), ("y", "b")])
        assert [p.nodes for p in enumerate_chains(g)] == [
            ("a", "x", "b"), ("a", "y", "b")]

    def test_cycle_fatal(self):
        g = CausalGraph(
            nodes={"a": node("a", NodeKind.CAUSE, EventId.R17_HARQ_RETX),
                   "x": node("x", NodeKind.INTERMEDIATE, EventId.N11_FWD_DELAY_UP),
                   "y": node("y", NodeKind.INTERMEDIATE, EventId.N12_REV_DELAY_UP),
                   "b": node("b", NodeKind.CONSEQUENCE, EventId.A4_JB_DRAIN)},
            edges=[("a", "x"), ("x", "y"), ("y", "x"), ("y", "b")])
        with pytest.raises(GraphError):
            enumerate_chains(g)

    def test_cause_with_incoming_edge_rejected(self):
        g = CausalGraph(
            nodes={"a": node("a", NodeKind.CAUSE, EventId.R17_HARQ_RETX),
                   "b": node("b", NodeKind.CAUSE, EventId.R18_RLC_RETX),
                   "c": node("c", NodeKind.CONSEQUENCE, EventId.A4_JB_DRAIN)},
            edges=[("a", "b"), ("b", "c")])
        with pytest.raises(GraphError):
            g.validate()


class TestMatch:
    def test_all_true_gives_all_24(self):
        fv = FeatureVector(np.ones(36, dtype=bool))
        assert len(match(fv, default_graph(), UL)) == 24

    def test_consequence_only_no_match(self):
        fv = fv_with(("jb_drain", Side.LOCAL), ("jb_drain", Side.REMOTE),
                     ("target_bitrate_drop", Side.LOCAL),
                     ("pushback_rate_drop", Side.LOCAL))
        assert match(fv, default_graph(), UL) == []
        assert match(fv, default_graph(), DL) == []

    def test_cross_traffic_target_chain_dl(self):
        # DL media: sender is the remote client, so GCC events bind remotely.
        fv = fv_with(("cross_traffic", DL), ("tbs_drop", DL), ("rate_gap", DL),
                     ("fwd_delay_up", None), ("gcc_overuse", Side.REMOTE),
                     ("target_bitrate_drop", Side.REMOTE))
        got = match(fv, default_graph(), DL)
        assert len(got) == 1
        assert got[0].path.nodes == ("cross_traffic", "tbs_drop", "rate_gap",
                                     "fwd_delay_up", "gcc_overuse",
                                     "target_bitrate_drop")
        assert match(fv, default_graph(), UL) == []

    def test_reverse_leg_uses_opposite_ran_direction(self):
        # DL media with an impaired UL feedback path.
        fv = fv_with(("harq_retx", UL), ("rev_delay_up", None),
                     ("outstanding_up", Side.REMOTE), ("cwnd_full", Side.REMOTE),
                     ("pushback_rate_drop", Side.REMOTE))
        got = match(fv, default_graph(), DL)
        assert [m.path.nodes for m in got] == [
            ("harq_retx", "rev_delay_up", "outstanding_up", "cwnd_full",
             "pushback_rate_drop")]
        assert match(fv, default_graph(), UL) == []

    def test_match_fields(self):
        fv = FeatureVector(np.ones(36, dtype=bool))
        m = match(fv, default_graph(), UL, window_start_us=7_000_000)[0]
        assert m.window_start_us == 7_000_000
        assert m.stream_dir == UL
        assert m.cause_id == m.path.nodes[0]
        assert m.consequence_id == m.path.nodes[-1]

    @given(st.lists(st.integers(0, 35), max_size=20),
           st.integers(0, 35), st.sampled_from([UL, DL]))
    @settings(max_examples=60, deadline=None)
    def test_monotone_in_bits(self, on_bits, extra, dir):
        bits = np.zeros(36, dtype=bool)
        bits[on_bits] = True
        before = {m.path.nodes for m in match(FeatureVector(bits.copy()),
                                              default_graph(), dir)}
        bits[extra] = True
        after = {m.path.nodes for m in match(FeatureVector(bits),
                                             default_graph(), dir)}
        assert before <= after

    def test_every_match_has_true_cause_and_consequence(self, rng):
        g = default_graph()
        for _ in range(50):
            bits = rng.random(36) < 0.5
            fv = FeatureVector(bits)
            for dir in (UL, DL):
                for m in match(fv, g, dir):
                    reverse = path_leg(g, m.path) == m.leg.REVERSE
                    from chaintrace.graph import _resolve_slot
                    for nid in (m.cause_id, m.consequence_id):
                        idx = _resolve_slot(g.nodes[nid].binding, fv.layout,
                                            dir, reverse)
                        assert fv.bits[idx]


class TestAttribute:
    def test_unknown_when_no_cause(self):
        fv = fv_with(("jb_drain", Side.REMOTE))
        out = attribute(fv, default_graph(), UL)
        assert out == {"jb_drain": UNKNOWN}

    def test_multi_cause_window(self):
        fv = fv_with(("harq_retx", UL), ("rlc_retx", UL), ("fwd_delay_up", None),
                     ("jb_drain", Side.REMOTE))
        out = attribute(fv, default_graph(), UL)
        assert out["jb_drain"] == frozenset({"harq_retx", "rlc_retx"})

    def test_no_consequence_bits_empty(self):
        out = attribute(fv_with(("harq_retx", UL)), default_graph(), UL)
        assert out == {}

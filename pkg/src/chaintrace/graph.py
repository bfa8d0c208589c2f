"""Causal DAG over window events and chain matching against feature vectors.

The built-in graph routes six radio-layer causes through delay
intermediates to three application consequences; enumerating its simple
cause-to-consequence paths yields the 24 built-in chains. Matching is an
exact boolean conjunction of every node's bound feature bit, with side and
direction placeholders resolved against the media direction under analysis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .events import (EVENT_INFO, CANONICAL_LAYOUT, EventId, Family,
                     FeatureLayout, FeatureVector, PathLeg, SideRole)
from .trace import Direction, Side

UNKNOWN = "unknown"


class NodeKind(Enum):
    CAUSE = "cause"
    INTERMEDIATE = "intermediate"
    CONSEQUENCE = "consequence"


@dataclass(frozen=True)
class EventBinding:
    """Ties a graph node to a feature-layout event plus resolution hints."""

    key: str
    family: Family
    role: SideRole | None = None
    leg: PathLeg | None = None
    pinned: Side | Direction | None = None

    @classmethod
    def for_event(cls, event: EventId, pinned: Side | Direction | None = None
                  ) -> "EventBinding":
        info = EVENT_INFO[event]
        return cls(info.key, info.family, role=info.role, leg=info.leg,
                   pinned=pinned)


@dataclass(frozen=True)
class CausalNode:
    id: str
    kind: NodeKind
    binding: EventBinding


@dataclass(frozen=True)
class ChainPath:
    """Node ids along one cause-to-consequence route."""

    nodes: tuple[str, ...]

    @property
    def cause_id(self) -> str:
        return self.nodes[0]

    @property
    def consequence_id(self) -> str:
        return self.nodes[-1]

    def __str__(self) -> str:
        return " -> ".join(self.nodes)


@dataclass(frozen=True)
class ChainMatch:
    """One detected chain instance within one window."""

    window_start_us: int
    path: ChainPath
    stream_dir: Direction
    cause_id: str
    consequence_id: str
    leg: PathLeg


class GraphError(Exception):
    """Structural problem in a causal graph definition."""


@dataclass
class CausalGraph:
    nodes: dict[str, CausalNode]
    edges: list[tuple[str, str]]
    explicit_chains: list[ChainPath] = field(default_factory=list)
    enumerate_all: bool = True
    _paths: list[ChainPath] | None = field(default=None, repr=False)

    def successors(self, node_id: str) -> list[str]:
        return sorted(b for a, b in self.edges if a == node_id)

    def causes(self) -> list[str]:
        return sorted(n.id for n in self.nodes.values() if n.kind is NodeKind.CAUSE)

    def consequences(self) -> list[str]:
        return sorted(n.id for n in self.nodes.values() if n.kind is NodeKind.CONSEQUENCE)

    def validate(self) -> None:
        for a, b in self.edges:
            for end in (a, b):
                if end not in self.nodes:
                    raise GraphError(f"edge references unknown node {end!r}")
        for node in self.nodes.values():
            has_in = any(b == node.id for _, b in self.edges)
            has_out = any(a == node.id for a, _ in self.edges)
            if node.kind is NodeKind.CAUSE and has_in:
                raise GraphError(f"cause node {node.id!r} has incoming edges")
            if node.kind is NodeKind.CONSEQUENCE and has_out:
                raise GraphError(f"consequence node {node.id!r} has outgoing edges")
        self._check_acyclic()

    def _check_acyclic(self) -> None:
        state: dict[str, int] = {}

        def visit(node_id: str, stack: list[str]) -> None:
            state[node_id] = 1
            for nxt in self.successors(node_id):
                if state.get(nxt) == 1:
                    cycle = " -> ".join(stack + [node_id, nxt])
                    raise GraphError(f"cycle detected: {cycle}")
                if state.get(nxt) != 2:
                    visit(nxt, stack + [node_id])
            state[node_id] = 2

        for node_id in sorted(self.nodes):
            if state.get(node_id) != 2:
                visit(node_id, [])


def default_graph() -> CausalGraph:
    """The built-in six-cause, three-consequence degradation graph."""

    def node(node_id: str, kind: NodeKind, event: EventId) -> CausalNode:
        return CausalNode(node_id, kind, EventBinding.for_event(event))

    nodes = [
        node("poor_channel", NodeKind.CAUSE, EventId.R16_CHANNEL_DEGRADED),
        node("cross_traffic", NodeKind.CAUSE, EventId.R15_CROSS_TRAFFIC),
        node("ul_scheduling", NodeKind.CAUSE, EventId.S19_UL_SCHEDULING),
        node("harq_retx", NodeKind.CAUSE, EventId.R17_HARQ_RETX),
        node("rlc_retx", NodeKind.CAUSE, EventId.R18_RLC_RETX),
        node("rrc_state", NodeKind.CAUSE, EventId.S20_RRC_CHANGE),
        node("tbs_drop", NodeKind.INTERMEDIATE, EventId.R13_TBS_DROP),
        node("rate_gap", NodeKind.INTERMEDIATE, EventId.R14_RATE_GAP),
        node("fwd_delay_up", NodeKind.INTERMEDIATE, EventId.N11_FWD_DELAY_UP),
        node("rev_delay_up", NodeKind.INTERMEDIATE, EventId.N12_REV_DELAY_UP),
        node("outstanding_up", NodeKind.INTERMEDIATE, EventId.A9_OUTSTANDING_UP),
        node("cwnd_full", NodeKind.INTERMEDIATE, EventId.A8_CWND_FULL),
        node("gcc_overuse", NodeKind.INTERMEDIATE, EventId.A6_GCC_OVERUSE),
        node("jb_drain", NodeKind.CONSEQUENCE, EventId.A4_JB_DRAIN),
        node("target_bitrate_drop", NodeKind.CONSEQUENCE, EventId.A5_TARGET_DROP),
        node("pushback_rate_drop", NodeKind.CONSEQUENCE, EventId.A7_PUSHBACK_DROP),
    ]
    edges = [
        ("poor_channel", "tbs_drop"),
        ("cross_traffic", "tbs_drop"),
        ("tbs_drop", "rate_gap"),
        ("rate_gap", "fwd_delay_up"),
        ("rate_gap", "rev_delay_up"),
        ("ul_scheduling", "fwd_delay_up"),
        ("ul_scheduling", "rev_delay_up"),
        ("harq_retx", "fwd_delay_up"),
        ("harq_retx", "rev_delay_up"),
        ("rlc_retx", "fwd_delay_up"),
        ("rlc_retx", "rev_delay_up"),
        ("rrc_state", "fwd_delay_up"),
        ("rrc_state", "rev_delay_up"),
        ("fwd_delay_up", "jb_drain"),
        ("fwd_delay_up", "gcc_overuse"),
        ("fwd_delay_up", "outstanding_up"),
        ("gcc_overuse", "target_bitrate_drop"),
        ("rev_delay_up", "outstanding_up"),
        ("outstanding_up", "cwnd_full"),
        ("cwnd_full", "pushback_rate_drop"),
    ]
    g = CausalGraph(nodes={n.id: n for n in nodes}, edges=edges)
    g.validate()
    return g


def enumerate_chains(g: CausalGraph) -> list[ChainPath]:
    """All simple cause-to-consequence paths, ordered lexicographically."""
    if g._paths is not None:
        return g._paths
    g.validate()
    paths: list[ChainPath] = []
    if g.enumerate_all:
        consequences = set(g.consequences())

        def walk(node_id: str, acc: list[str]) -> None:
            acc.append(node_id)
            if node_id in consequences:
                paths.append(ChainPath(tuple(acc)))
            for nxt in g.successors(node_id):
                if nxt not in acc:
                    walk(nxt, acc)
            acc.pop()

        for cause in g.causes():
            walk(cause, [])
    seen = {p.nodes for p in paths}
    for p in g.explicit_chains:
        if p.nodes not in seen:
            paths.append(p)
            seen.add(p.nodes)
    paths.sort(key=lambda p: p.nodes)
    g._paths = paths
    return paths


def sender_side(dir: Direction) -> Side:
    """The client that transmits media in the given link direction."""
    return Side.LOCAL if dir == Direction.UL else Side.REMOTE


def _resolve_slot(binding: EventBinding, layout: FeatureLayout,
                  dir: Direction, route_reverse: bool) -> int:
    if binding.pinned is not None:
        return layout.index(binding.key, binding.pinned)
    if binding.family is Family.RAN:
        ran_dir = dir.opposite if route_reverse else dir
        if layout.has(binding.key, ran_dir):
            return layout.index(binding.key, ran_dir)
        return layout.index(binding.key, None)
    if binding.family is Family.APP:
        side = sender_side(dir)
        if binding.role is SideRole.RECEIVER:
            side = side.opposite
        if layout.has(binding.key, side):
            return layout.index(binding.key, side)
        return layout.index(binding.key, None)
    return layout.index(binding.key, None)


def path_leg(g: CausalGraph, path: ChainPath) -> PathLeg:
    """A path is reverse-legged when it crosses a reverse-path delay node."""
    for node_id in path.nodes:
        if g.nodes[node_id].binding.leg is PathLeg.REVERSE:
            return PathLeg.REVERSE
    return PathLeg.FORWARD


def match(fv: FeatureVector, g: CausalGraph, dir: Direction,
          window_start_us: int = 0) -> list[ChainMatch]:
    """Chains whose every node bit is true in the vector, for one media dir.

    Radio-event nodes resolve to the media direction, or to its opposite
    on reverse-legged paths (the feedback travels the opposite link).
    Receiver-role app events bind to the media receiver's client, others
    to the sender's.
    """
    matches = []
    for path in enumerate_chains(g):
        reverse = path_leg(g, path) is PathLeg.REVERSE
        ok = True
        for node_id in path.nodes:
            idx = _resolve_slot(g.nodes[node_id].binding, fv.layout, dir, reverse)
            if not fv.bits[idx]:
                ok = False
                break
        if ok:
            matches.append(ChainMatch(
                window_start_us=window_start_us, path=path, stream_dir=dir,
                cause_id=path.cause_id, consequence_id=path.consequence_id,
                leg=PathLeg.REVERSE if reverse else PathLeg.FORWARD))
    return matches


def attribute(fv: FeatureVector, g: CausalGraph, dir: Direction,
              window_start_us: int = 0) -> dict[str, frozenset[str] | str]:
    """Per true consequence bit: the set of matched causes, or UNKNOWN."""
    matches = match(fv, g, dir, window_start_us)
    by_consequence: dict[str, set[str]] = {}
    for m in matches:
        by_consequence.setdefault(m.consequence_id, set()).add(m.cause_id)
    out: dict[str, frozenset[str] | str] = {}
    for cons_id in g.consequences():
        binding = g.nodes[cons_id].binding
        idx = _resolve_slot(binding, fv.layout, dir, route_reverse=False)
        if not fv.bits[idx]:
            continue
        causes = by_consequence.get(cons_id)
        out[cons_id] = frozenset(causes) if causes else UNKNOWN
    return out

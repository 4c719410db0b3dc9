"""Deep faults: tracer, flip and recovery circuits.

A tracer register (clock counter, transition counter or LFSR) runs alongside
the circuit. The flip circuit toggles one primary output whenever the
protected pattern (selected state bits followed by the tracer bits) is
present; the recovery circuit toggles it back when the key inputs equal the
current pattern bits. Under the correct key the two toggles cancel.
"""

from __future__ import annotations

import dataclasses
import enum
import itertools
import logging
from collections.abc import Iterable, Sequence

import networkx as nx
import numpy as np

from dfssd.config import DeepFaultConfig, NetlistConfig, ReachConfig
from dfssd.exceptions import (
    DummyInsertionError,
    StateSpaceError,
    TracerConfigError,
    TransformError,
    TriggerNotFoundError,
    UnreachablePatternError,
    WidthMismatchError,
)
from dfssd.modules.netlist import GateKind, Netlist, NetlistBuilder, ff_dependency_graph
from dfssd.modules.reachability import (
    Explorer,
    StateSet,
    bits_of,
    check_equivalence,
    codes_of,
    reachable_bfs,
    transition_graph,
)
from dfssd.modules.simulator import BitVector

logger = logging.getLogger(__name__)

# Maximal-length XNOR feedback taps (1-based stage numbers).
LFSR_TAPS: dict[int, tuple[int, ...]] = {
    2: (2, 1),
    3: (3, 2),
    4: (4, 3),
    5: (5, 3),
    6: (6, 5),
    7: (7, 6),
    8: (8, 6, 5, 4),
    9: (9, 5),
    10: (10, 7),
    11: (11, 9),
    12: (12, 6, 4, 1),
    13: (13, 4, 3, 1),
    14: (14, 5, 3, 1),
    15: (15, 14),
    16: (16, 15, 13, 4),
}

# Above this many free key bits, nonoccur hiding certifies two corner keys only.
_CERTIFY_FREE_BITS = 6


class TracerKind(enum.StrEnum):
    CLOCK = "clock"
    TRANSITION = "transition"
    LFSR = "lfsr"


class DummyMode(enum.StrEnum):
    COVERT = "covert"
    NONOCCUR = "nonoccur"


def lfsr_sequence(width: int, taps: Sequence[int]) -> list[tuple[int, ...]]:
    """States of an XNOR Fibonacci LFSR from the all-zero seed until one repeats.

    Stage 1 (index 0) receives the feedback; the other stages shift by one.
    """
    state = (0,) * width
    seen: dict[tuple[int, ...], int] = {}
    seq = []
    while state not in seen:
        seen[state] = len(seq)
        seq.append(state)
        fb = 1
        for t in taps:
            fb ^= state[t - 1]
        state = (fb, *state[:-1])
    return seq


@dataclasses.dataclass(frozen=True)
class TracerConfig:
    kind: TracerKind = TracerKind.CLOCK
    width: int = 2
    trigger: tuple[BitVector, BitVector] | None = None
    lfsr_taps: tuple[int, ...] | None = None
    pseudo_counter: bool = False

    def __post_init__(self) -> None:
        if self.width < 1:
            raise TracerConfigError(f"Tracer width must be >= 1, got {self.width}")
        if self.pseudo_counter and self.kind is not TracerKind.CLOCK:
            raise TracerConfigError("Pseudo-counter mode applies to the clock counter only")
        if self.trigger is not None and self.trigger[0].width != self.trigger[1].width:
            raise TracerConfigError("Trigger states differ in width")
        if self.kind is TracerKind.LFSR:
            if self.lfsr_taps is None and self.width not in LFSR_TAPS:
                raise TracerConfigError(f"No built-in LFSR taps for width {self.width}")
            taps = self.taps
            if not taps or any(not 1 <= t <= self.width for t in taps):
                raise TracerConfigError(f"LFSR taps {taps} out of range for width {self.width}")
            period = len(lfsr_sequence(self.width, taps))
            if period != (1 << self.width) - 1:
                raise TracerConfigError(
                    f"LFSR taps {taps} give period {period}, not {(1 << self.width) - 1}"
                )

    @classmethod
    def from_config(cls, cfg: DeepFaultConfig) -> TracerConfig:
        trigger = None
        if cfg.trigger is not None:
            trigger = (BitVector.from_str(cfg.trigger[0]), BitVector.from_str(cfg.trigger[1]))
        return cls(
            kind=TracerKind(cfg.tracer),
            width=cfg.width,
            trigger=trigger,
            lfsr_taps=cfg.lfsr_taps,
            pseudo_counter=cfg.pseudo_counter,
        )

    @property
    def taps(self) -> tuple[int, ...]:
        return self.lfsr_taps or LFSR_TAPS.get(self.width, ())

    @property
    def register_width(self) -> int:
        return self.width + 1 if self.kind is TracerKind.TRANSITION else self.width

    @property
    def period(self) -> int:
        """C: events (or cycles) between two visits of one tracer value."""
        if self.kind is TracerKind.LFSR:
            return (1 << self.width) - 1
        return 1 << self.width

    def default_value(self) -> BitVector:
        """Logical tracer part of an automatically chosen pattern."""
        if self.kind is TracerKind.CLOCK:
            return BitVector.ones(self.width)
        if self.kind is TracerKind.TRANSITION:
            return BitVector.from_int(self.period + 1, self.register_width)
        return BitVector(lfsr_sequence(self.width, self.taps)[-1])


@dataclasses.dataclass(frozen=True)
class ProtectedPattern:
    state_bits: tuple[tuple[str, int], ...]
    tracer_bits: tuple[tuple[str, int], ...]

    @property
    def nets(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.state_bits + self.tracer_bits)

    @property
    def key_value(self) -> BitVector:
        return BitVector(tuple(bit for _, bit in self.state_bits + self.tracer_bits))

    def __str__(self) -> str:
        state = "".join(str(b) for _, b in self.state_bits)
        tracer = "".join(str(b) for _, b in self.tracer_bits)
        return f"{state},{tracer}"

    def to_dict(self) -> dict[str, object]:
        return {
            "state_bits": [[name, bit] for name, bit in self.state_bits],
            "tracer_bits": [[name, bit] for name, bit in self.tracer_bits],
            "key": str(self.key_value),
        }


@dataclasses.dataclass(frozen=True)
class DepthBound:
    """Minimum sequence length (in clock cycles) that can expose the deep fault.

    ``bound`` is None when the pattern can never fire.
    """

    kind: TracerKind
    c: int
    bound: int | None
    m: int | None = None
    l: int | None = None  # noqa: E741
    q: int | None = None

    @property
    def infinite(self) -> bool:
        return self.bound is None

    def to_dict(self) -> dict[str, object]:
        return {
            "kind": str(self.kind),
            "C": self.c,
            "M": self.m,
            "L": self.l,
            "Q": self.q,
            "bound": self.bound if self.bound is not None else "infinite",
        }


@dataclasses.dataclass(frozen=True)
class DeepFaultResult:
    netlist: Netlist
    pattern: ProtectedPattern
    key: BitVector
    tracer: TracerConfig
    tracer_nets: tuple[str, ...]
    target_output: int
    bound: DepthBound

    def to_dict(self) -> dict[str, object]:
        return {
            "tracer": {
                "kind": str(self.tracer.kind),
                "width": self.tracer.width,
                "pseudo_counter": self.tracer.pseudo_counter,
                "trigger": (
                    [str(s) for s in self.tracer.trigger] if self.tracer.trigger else None
                ),
                "nets": list(self.tracer_nets),
            },
            "pattern": self.pattern.to_dict(),
            "target_output": self.target_output,
            "bound": self.bound.to_dict(),
        }


@dataclasses.dataclass(frozen=True)
class SccSummary:
    components: tuple[tuple[str, ...], ...]
    tracer: tuple[str, ...] = ()

    @property
    def num_components(self) -> int:
        return len(self.components)

    @property
    def tracer_isolated(self) -> bool:
        """No strongly connected component holds both tracer and circuit flip-flops."""
        tracer = set(self.tracer)
        if not tracer:
            return False
        return not any(
            tracer & set(comp) and set(comp) - tracer for comp in self.components
        )

    @property
    def merged(self) -> bool:
        return len(self.components) == 1

    def to_dict(self) -> dict[str, object]:
        return {
            "components": [list(c) for c in self.components],
            "tracer": list(self.tracer),
            "tracer_isolated": self.tracer_isolated,
        }


# -- tracer construction ---------------------------------------------------


def _counter(
    b: NetlistBuilder,
    base: str,
    width: int,
    enable: int,
    mask: tuple[int, int, int] | None = None,
) -> list[int]:
    """Binary up-counter, most significant bit first.

    With ``mask = (q, d, init)`` the least significant register stores the
    count bit XOR-ed with state net ``q`` (``d`` is that state's next value,
    ``init`` its reset value).
    """
    first = len(b.flipflop_q)
    qs = [b.add_flipflop(b.fresh_name(f"{base}{i}")) for i in reversed(range(width))]
    bits = list(qs)
    if mask is not None:
        bits[-1] = b.add_gate(GateKind.XOR, [qs[-1], mask[0]])
        b.set_flipflop_init(first + width - 1, mask[2])
    carry = enable
    for pos in reversed(range(width)):
        nxt = b.add_gate(GateKind.XOR, [bits[pos], carry])
        if mask is not None and pos == width - 1:
            nxt = b.add_gate(GateKind.XOR, [nxt, mask[1]])
        if pos:
            carry = b.and_all([bits[pos], carry])
        b.set_flipflop_d(first + pos, nxt)
    return qs


def _tautology(b: NetlistBuilder, n: Netlist) -> int:
    """Always-one net derived from an existing circuit net."""
    if n.flipflops:
        src = b.flipflop_q[0]
    elif n.inputs:
        src = b.inputs[0]
    else:
        return b.const(1)
    return b.add_gate(GateKind.OR, [src, b.inv(src)], b.fresh_name("trc_en"))


def _add_tracer(b: NetlistBuilder, t: TracerConfig, n: Netlist) -> list[int]:
    qs = b.flipflop_q[: n.state_width]
    ds = b.flipflop_d[: n.state_width]
    if t.kind is TracerKind.CLOCK:
        mask = (qs[0], ds[0], n.flipflops[0].init) if t.pseudo_counter else None
        return _counter(b, "C", t.width, _tautology(b, n), mask)
    if t.kind is TracerKind.TRANSITION:
        assert t.trigger is not None
        src, dst = t.trigger
        event = b.and_all([b.match(qs, src.bits), b.match(ds, dst.bits)], b.fresh_name("trc_ev"))
        return _counter(b, "T", t.register_width, event)
    first = len(b.flipflop_q)
    stages = [b.add_flipflop(b.fresh_name(f"L{i}")) for i in range(t.width)]
    fb = b.add_gate(GateKind.XNOR, [stages[i - 1] for i in t.taps], b.fresh_name("trc_fb"))
    b.set_flipflop_d(first, fb)
    for i in range(1, t.width):
        b.set_flipflop_d(first + i, stages[i - 1])
    return stages


def _auto_trigger(graph: nx.DiGraph) -> tuple[int, int]:
    """First reachable transition lying on a cycle; proper edges before self-loops."""
    edges = [
        (u, v) for u, v in graph.edges if u == v or nx.has_path(graph, v, u)
    ]
    if not edges:
        raise TriggerNotFoundError("No reachable transition can be taken twice")
    depth = nx.get_node_attributes(graph, "depth")
    return min(edges, key=lambda e: (e[0] == e[1], depth[e[0]], e[0], e[1]))


# -- bounds ----------------------------------------------------------------


def _logical_tracer(t: TracerConfig, p: ProtectedPattern) -> BitVector:
    bits = [bit for _, bit in p.tracer_bits]
    if t.pseudo_counter:
        bits[-1] ^= p.state_bits[0][1]
    return BitVector(tuple(bits))


def compute_bound(
    n: Netlist,
    t: TracerConfig,
    p: ProtectedPattern,
    *,
    key: BitVector | None = None,
    config: ReachConfig | None = None,
    graph: nx.DiGraph | None = None,
) -> DepthBound:
    """Minimum BMC bound for the pattern to fire, from the pre-transform circuit."""
    value = _logical_tracer(t, p)
    if t.kind is TracerKind.CLOCK:
        if value != t.default_value():
            raise TracerConfigError(
                f"Clock-counter pattern must hold the counter at C-1 = {t.default_value()}, "
                f"got {value}"
            )
        return DepthBound(t.kind, t.period, t.period)
    if t.kind is TracerKind.LFSR:
        seq = lfsr_sequence(t.width, t.taps)
        if value.bits not in seq:
            raise UnreachablePatternError(
                f"{value} never occurs in the LFSR sequence", pattern=str(p)
            )
        return DepthBound(t.kind, t.period, seq.index(value.bits) + 1)

    count = value.to_int()
    if count == 0:
        raise TracerConfigError("A transition-counter pattern needs a non-zero count")
    if t.trigger is None:
        raise TracerConfigError("Transition counter needs a trigger")
    graph = graph if graph is not None else transition_graph(n, key, config=config)
    src, dst = (s.to_int() for s in t.trigger)
    init = graph.graph["init"]
    width = n.state_width

    def dist(a: int, b: int) -> int | None:
        try:
            return int(nx.shortest_path_length(graph, a, b))
        except (nx.NetworkXNoPath, nx.NodeNotFound):
            return None

    to_src = dist(init, src)
    m = None if to_src is None else to_src + 1
    back = dist(dst, src)
    l = None if back is None else back + 1  # noqa: E741
    shifts = [width - 1 - i for i in range(len(p.state_bits))]
    targets = [
        s for s in graph.nodes
        if all((s >> sh) & 1 == bit for sh, (_, bit) in zip(shifts, p.state_bits))
    ]
    lengths = dict(nx.single_source_shortest_path_length(graph, dst)) if dst in graph else {}
    reach = [lengths[s] for s in targets if s in lengths]
    q = min(reach) + 1 if reach else None
    if m is None or q is None or (count > 1 and l is None):
        return DepthBound(t.kind, t.period, None, m, l, q)
    return DepthBound(t.kind, t.period, m + (count - 1) * (l or 0) + q, m, l, q)


# -- the transform ---------------------------------------------------------


def _pattern_positions(n: Netlist, names: Sequence[str]) -> list[int]:
    q_index = {n.net_names[ff.q]: i for i, ff in enumerate(n.flipflops)}
    return [q_index[name] for name in names]


def pattern_depth(reach: StateSet, positions: Sequence[int], bits: Sequence[int]) -> int | None:
    """Smallest BFS depth of a reached state carrying ``bits`` at flip-flops ``positions``."""
    codes = reach.codes()
    if not len(codes):
        return None
    matrix = bits_of(codes, reach.width)
    hit = np.ones(len(codes), dtype=bool)
    for pos, bit in zip(positions, bits):
        hit &= matrix[pos] == bool(bit)
    depths = [reach.depth_of(int(c)) for c in codes[hit]]
    return min((d for d in depths if d is not None), default=None)


def apply_df(
    n: Netlist,
    t: TracerConfig,
    pattern: ProtectedPattern | BitVector | None = None,
    *,
    target_output: int = 0,
    state_bits: int | None = None,
    base_key: BitVector | None = None,
    netlist_config: NetlistConfig | None = None,
    reach_config: ReachConfig | None = None,
) -> DeepFaultResult:
    """Insert a deep fault into ``n``.

    ``pattern`` is either a full :class:`ProtectedPattern`, a bit vector of the
    first ``state_bits`` flip-flop values followed by the logical tracer value,
    or None for automatic selection (tracer target value with the deepest
    reachable state that can coincide with it).
    """
    cfg = reach_config or ReachConfig()
    prefix = (netlist_config or NetlistConfig()).key_prefix
    if not 0 <= target_output < len(n.outputs):
        raise TransformError(f"{n.name} has no output #{target_output}")
    if n.key_inputs and base_key is None:
        raise TransformError(f"{n.name} already has key inputs; pass their correct value")
    base_key = base_key or BitVector(())
    key = base_key if n.key_inputs else None
    m = n.state_width if state_bits is None else state_bits
    if not 0 <= m <= n.state_width:
        raise TracerConfigError(f"state_bits must be within 0..{n.state_width}, got {m}")
    if t.pseudo_counter and m == 0:
        raise TracerConfigError("Pseudo-counter mode needs at least one pattern state bit")

    graph = None
    if t.kind is TracerKind.TRANSITION:
        if n.state_width == 0:
            raise TracerConfigError("Transition counter needs a sequential circuit")
        graph = transition_graph(n, key, config=cfg)
        if t.trigger is None:
            src, dst = _auto_trigger(graph)
            width = n.state_width
            t = dataclasses.replace(
                t, trigger=(BitVector.from_int(src, width), BitVector.from_int(dst, width))
            )
        assert t.trigger is not None
        edge = tuple(s.to_int() for s in t.trigger)
        if t.trigger[0].width != n.state_width or not graph.has_edge(*edge):
            raise TriggerNotFoundError(
                f"Transition {t.trigger[0]} -> {t.trigger[1]} is not reachable in {n.name}"
            )

    tb = NetlistBuilder.from_netlist(n)
    tracer_q = _add_tracer(tb, t, n)
    tracer_names = tuple(tb.name_of(q) for q in tracer_q)
    traced = tb.build()
    reach = reachable_bfs(traced, key=key, config=cfg)
    state_names = [n.net_names[ff.q] for ff in n.flipflops[:m]]
    positions = _pattern_positions(traced, [*state_names, *tracer_names])

    if isinstance(pattern, ProtectedPattern):
        chosen = pattern
        if chosen.nets != (*state_names, *tracer_names):
            raise TracerConfigError(f"Pattern nets {chosen.nets} do not fit this tracer")
    elif isinstance(pattern, BitVector):
        expected = m + t.register_width
        if pattern.width != expected:
            raise WidthMismatchError("Pattern", expected=expected, actual=pattern.width)
        chosen = _make_pattern(
            t, state_names, tracer_names, pattern.bits[:m], BitVector(pattern.bits[m:])
        )
    else:
        chosen = _auto_pattern(n, t, key, cfg, reach, positions, state_names, tracer_names)

    if pattern_depth(reach, positions, chosen.key_value.bits) is None:
        raise UnreachablePatternError(
            f"Pattern {chosen} never occurs in {n.name}", pattern=str(chosen)
        )
    bound = compute_bound(n, t, chosen, key=key, config=cfg, graph=graph)

    b = NetlistBuilder.from_netlist(traced)
    b.name = f"{n.name}_df"
    nets = [b.net(name) for name in chosen.nets]
    keys = b.add_key_inputs(prefix, len(nets))
    flip = b.match(nets, chosen.key_value.bits, b.fresh_name("df_flip"))
    agree = [b.add_gate(GateKind.XNOR, [k, net]) for k, net in zip(keys, nets)]
    recover = b.and_all(agree, b.fresh_name("df_recover")) if agree else b.const(1)
    y = b.outputs[target_output]
    flipped = b.add_gate(GateKind.XOR, [y, flip])
    b.set_output(
        target_output,
        b.add_gate(GateKind.XOR, [flipped, recover], b.fresh_name(f"{b.name_of(y)}_df")),
    )
    netlist = b.build()
    logger.info(
        "DF on %s: %s tracer w=%d, pattern %s, bound %s",
        n.name, t.kind, t.width, chosen, bound.bound if bound.bound is not None else "inf",
    )
    return DeepFaultResult(
        netlist=netlist,
        pattern=chosen,
        key=base_key + chosen.key_value,
        tracer=t,
        tracer_nets=tracer_names,
        target_output=target_output,
        bound=bound,
    )


def _make_pattern(
    t: TracerConfig,
    state_names: Sequence[str],
    tracer_names: Sequence[str],
    state: Sequence[int],
    logical: BitVector,
) -> ProtectedPattern:
    """Physical pattern bits for a state part and a logical tracer value."""
    tracer = list(logical.bits)
    if t.pseudo_counter:
        tracer[-1] ^= state[0]
    return ProtectedPattern(tuple(zip(state_names, state)), tuple(zip(tracer_names, tracer)))


def _auto_pattern(
    n: Netlist,
    t: TracerConfig,
    key: BitVector | None,
    cfg: ReachConfig,
    reach: StateSet,
    positions: Sequence[int],
    state_names: Sequence[str],
    tracer_names: Sequence[str],
) -> ProtectedPattern:
    logical = t.default_value()
    states = reachable_bfs(n, key=key, config=cfg)
    width = n.state_width
    m = len(state_names)
    parts: dict[tuple[int, ...], int] = {}
    for code in states.codes().tolist():
        part = BitVector.from_int(code, width).bits[:m] if width else ()
        depth = states.depth_of(code) or 0
        parts[part] = min(parts.get(part, depth), depth)
    for part in sorted(parts, key=lambda p: (-parts[p], p)):
        candidate = _make_pattern(t, state_names, tracer_names, part, logical)
        if pattern_depth(reach, positions, candidate.key_value.bits) is not None:
            return candidate
    raise UnreachablePatternError(
        f"Tracer value {logical} never coincides with a reachable state of {n.name}",
        pattern=str(logical),
    )


def first_fault_cycle(r: DeepFaultResult, *, config: ReachConfig | None = None) -> int | None:
    """Earliest clock cycle (1-based) in which the protected pattern is present."""
    reach = reachable_bfs(r.netlist, key=r.key, config=config)
    depth = pattern_depth(
        reach, _pattern_positions(r.netlist, r.pattern.nets), r.pattern.key_value.bits
    )
    return None if depth is None else depth + 1


def wrong_key_divergence(
    r: DeepFaultResult, key: BitVector, *, config: ReachConfig | None = None
) -> int | None:
    """First cycle at which ``key`` and the correct key produce different outputs."""
    return check_equivalence(r.netlist, r.key, r.netlist, key, config=config).first_divergence


# -- structural hiding -----------------------------------------------------


def scc_report(n: Netlist, tracer: Iterable[str] = ()) -> SccSummary:
    """Strongly connected components of the flip-flop dependency graph."""
    names = [n.net_names[ff.q] for ff in n.flipflops]
    graph = ff_dependency_graph(n)
    comps = sorted(
        (sorted(c) for c in nx.strongly_connected_components(graph)), key=lambda c: c[0]
    )
    return SccSummary(
        tuple(tuple(names[i] for i in comp) for comp in comps),
        tuple(tracer),
    )


def _never_occurring_cube(
    reach: StateSet, tracer: set[int], max_literals: int = 3
) -> list[tuple[int, int]] | None:
    """Smallest flip-flop literal cube absent from every reached state.

    Cubes mixing tracer and circuit flip-flops are preferred within a size.
    """
    matrix = bits_of(reach.codes(), reach.width)
    for size in range(1, max_literals + 1):
        combos = sorted(
            itertools.combinations(range(reach.width), size),
            key=lambda c: (not (set(c) & tracer and set(c) - tracer), c),
        )
        for ffs in combos:
            rows = matrix[list(ffs)]
            for values in itertools.product((0, 1), repeat=size):
                hit = (rows == np.array(values, dtype=bool)[:, None]).all(axis=0)
                if not hit.any():
                    return list(zip(ffs, values))
    return None


def insert_dummy_connections(
    n: Netlist,
    mode: DummyMode | str,
    *,
    key: BitVector | None = None,
    free_keys: Sequence[int] = (),
    tracer: Sequence[str] = (),
    config: ReachConfig | None = None,
) -> Netlist:
    """Tie every flip-flop into one dependency cycle without changing function.

    ``nonoccur`` ORs ``cube AND Q_a`` into the next-state of ``b`` for each
    link ``a -> b`` of the cycle, where ``cube`` is a literal combination the
    reachable-state fixpoint proves never occurs. ``covert`` records the links
    as structural fan-in only.

    ``free_keys`` lists key positions whose every value is a correct key (the
    SSD bits of a combined lock). The cube must be absent under all of them.
    """
    mode = DummyMode(mode)
    width = n.state_width
    if width < 2:
        return n
    b = NetlistBuilder.from_netlist(n)
    qs = b.flipflop_q
    links = [(i, (i + 1) % width) for i in range(width)]

    if mode is DummyMode.COVERT:
        driven = b.gate_outputs()
        for a, dst in links:
            d = b.flipflop_d[dst]
            if d not in driven:
                d = b.add_gate(GateKind.BUF, [d], b.fresh_name(f"{b.name_of(qs[dst])}_dd"))
                b.set_flipflop_d(dst, d)
                driven.add(d)
            b.add_covert_fanin(d, qs[a])
        logger.info("Covert fan-in added on %d link(s) of %s", len(links), n.name)
        return b.build()

    if n.key_inputs and key is None:
        raise TransformError("Non-occurring combinations need the correct key")
    base_key = key if key is not None else BitVector(())
    try:
        reach = reachable_bfs(n, key=key, free_keys=free_keys, config=config)
    except StateSpaceError as exc:
        raise DummyInsertionError(f"Cannot certify signal combinations: {exc}") from exc
    if not reach.complete:
        raise DummyInsertionError("Reachable-state fixpoint not reached")
    tracer_idx = set(_pattern_positions(n, tracer))
    cube = _never_occurring_cube(reach, tracer_idx)
    if cube is None:
        raise DummyInsertionError(f"No non-occurring flip-flop combination in {n.name}")
    cube_net = b.match([qs[i] for i, _ in cube], [v for _, v in cube], b.fresh_name("dmy_cube"))
    for a, dst in links:
        dummy = b.and_all([cube_net, qs[a]])
        b.set_flipflop_d(dst, b.or_all([b.flipflop_d[dst], dummy]))
    hidden = b.build()
    for k in _certified_keys(base_key, free_keys):
        if not check_equivalence(n, k, hidden, k, config=config).equivalent:
            raise DummyInsertionError(
                f"Dummy connections changed the circuit function under key {k}"
            )
    logger.info(
        "Dummy connections on %s via never-occurring cube %s",
        n.name, [(n.net_names[qs[i]], v) for i, v in cube],
    )
    return hidden


def _certified_keys(key: BitVector, free_keys: Sequence[int]) -> list[BitVector]:
    """``key`` under every assignment of the free positions; only the all-zero
    and all-one assignments past ``_CERTIFY_FREE_BITS`` free positions."""
    free = sorted(set(free_keys))
    if len(free) > _CERTIFY_FREE_BITS:
        values = [0, (1 << len(free)) - 1]
    else:
        values = list(range(1 << len(free)))
    keys = []
    for value in values:
        bits = list(key.bits)
        for pos, bit in zip(free, BitVector.from_int(value, len(free)).bits):
            bits[pos] = bit
        keys.append(BitVector(tuple(bits)))
    return keys


def hide_tracer(
    r: DeepFaultResult,
    mode: DummyMode | str,
    *,
    free_keys: Sequence[int] = (),
    config: ReachConfig | None = None,
) -> DeepFaultResult:
    netlist = insert_dummy_connections(
        r.netlist, mode, key=r.key, free_keys=free_keys, tracer=r.tracer_nets, config=config
    )
    return dataclasses.replace(r, netlist=netlist)


def fault_table(
    r: DeepFaultResult, *, config: ReachConfig | None = None
) -> dict[int, set[int]]:
    """Wrong pattern keys observable at each reachable pattern row.

    Rows and keys are integers over the pattern bits. Every reachable state is
    stepped under every input combination with each candidate key; a key is
    listed for a row when some input makes its outputs differ from the
    correct key's.
    """
    cfg = config or ReachConfig()
    n = r.netlist
    reach = reachable_bfs(n, key=r.key, config=cfg)
    positions = _pattern_positions(n, r.pattern.nets)
    codes = reach.codes()
    rows = codes_of(bits_of(codes, reach.width)[positions])
    _, y_ref = Explorer(n, r.key, cfg.max_input_bits).step(codes)
    width = len(positions)
    base = BitVector(r.key.bits[: len(r.key) - width])
    table: dict[int, set[int]] = {int(row): set() for row in rows.tolist()}
    for value in range(1 << width):
        key = base + BitVector.from_int(value, width)
        _, y = Explorer(n, key, cfg.max_input_bits).step(codes)
        bad = (y != y_ref).any(axis=(1, 2))
        for row in rows[bad].tolist():
            table[int(row)].add(value)
    return dict(sorted(table.items()))

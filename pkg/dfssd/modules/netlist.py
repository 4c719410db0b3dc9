"""Gate-level circuit IR, combinational view and a builder used by transforms.

Net ids are dense integers. A netlist produced by :class:`NetlistBuilder` or by
the `.bench` parser is canonical: input and key-input nets come first (in
declaration order), then flip-flop outputs, then gate outputs in gate order.
"""

from __future__ import annotations

import dataclasses
import enum
import functools
import logging
from collections.abc import Iterable, Mapping, Sequence

import networkx as nx

from dfssd.exceptions import (
    ArityError,
    CombinationalCycleError,
    MultiDriverError,
    NetlistError,
    UndefinedNetError,
)

logger = logging.getLogger(__name__)


class GateKind(enum.StrEnum):
    AND = "AND"
    NAND = "NAND"
    OR = "OR"
    NOR = "NOR"
    XOR = "XOR"
    XNOR = "XNOR"
    NOT = "NOT"
    BUF = "BUF"
    MUX2 = "MUX2"
    CONST0 = "CONST0"
    CONST1 = "CONST1"


_UNARY = frozenset({GateKind.NOT, GateKind.BUF})
_CONST = frozenset({GateKind.CONST0, GateKind.CONST1})


def check_arity(kind: GateKind, arity: int) -> bool:
    if kind in _UNARY:
        return arity == 1
    if kind in _CONST:
        return arity == 0
    if kind is GateKind.MUX2:
        return arity == 3
    return arity >= 2


@dataclasses.dataclass(frozen=True)
class Gate:
    kind: GateKind
    inputs: tuple[int, ...]
    output: int

    def __post_init__(self) -> None:
        if not check_arity(self.kind, len(self.inputs)):
            raise ArityError(f"{self.kind} gate cannot take {len(self.inputs)} input(s)")


@dataclasses.dataclass(frozen=True)
class FlipFlop:
    q: int
    d: int
    init: int = 0


@dataclasses.dataclass(frozen=True)
class Netlist:
    """Immutable synchronous circuit.

    ``covert_fanin`` lists (gate output, dummy net) pairs that exist only as
    structural fan-in: they never influence the logic.
    """

    name: str
    net_names: tuple[str, ...]
    inputs: tuple[int, ...]
    outputs: tuple[int, ...]
    key_inputs: tuple[int, ...]
    flipflops: tuple[FlipFlop, ...]
    gates: tuple[Gate, ...]
    covert_fanin: tuple[tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for name in self.net_names:
            if name in seen:
                raise MultiDriverError(f"Net name {name!r} used twice", net=name)
            seen.add(name)
        if set(self.inputs) & set(self.key_inputs):
            raise NetlistError("Key inputs overlap primary inputs")
        drivers: dict[int, str] = {}

        def drive(net: int, what: str) -> None:
            if not 0 <= net < len(self.net_names):
                raise NetlistError(f"Net id {net} out of range")
            if net in drivers:
                name = self.net_names[net]
                raise MultiDriverError(
                    f"Net {name!r} driven by both {drivers[net]} and {what}", net=name
                )
            drivers[net] = what

        for net in self.inputs:
            drive(net, "INPUT")
        for net in self.key_inputs:
            drive(net, "key INPUT")
        for ff in self.flipflops:
            if ff.init not in (0, 1):
                raise NetlistError(f"Flip-flop init must be 0 or 1, got {ff.init}")
            drive(ff.q, "DFF")
        for gate in self.gates:
            drive(gate.output, str(gate.kind))

        def used(net: int, where: str) -> None:
            if net not in drivers:
                name = self.net_names[net] if 0 <= net < len(self.net_names) else str(net)
                raise UndefinedNetError(f"Net {name!r} used by {where} is never driven", net=name)

        for gate in self.gates:
            for net in gate.inputs:
                used(net, f"gate {self.net_names[gate.output]!r}")
        for ff in self.flipflops:
            used(ff.d, f"DFF {self.net_names[ff.q]!r}")
        for net in self.outputs:
            used(net, "OUTPUT")
        for dst, dummy in self.covert_fanin:
            used(dst, "covert fan-in")
            used(dummy, "covert fan-in")
        _ = self.topo_order

    # -- lookups -----------------------------------------------------------

    @functools.cached_property
    def _ids(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.net_names)}

    @functools.cached_property
    def driver(self) -> dict[int, Gate]:
        """Gate driving each gate-output net."""
        return {g.output: g for g in self.gates}

    @functools.cached_property
    def topo_order(self) -> tuple[int, ...]:
        """Gate indices in a deterministic topological order."""
        graph = nx.DiGraph()
        graph.add_nodes_from(range(len(self.gates)))
        index_of = {g.output: i for i, g in enumerate(self.gates)}
        for i, gate in enumerate(self.gates):
            for net in gate.inputs:
                j = index_of.get(net)
                if j is not None:
                    graph.add_edge(j, i)
        try:
            return tuple(nx.lexicographical_topological_sort(graph))
        except nx.NetworkXUnfeasible:
            cycle = nx.find_cycle(graph)
            names = [self.net_names[self.gates[u].output] for u, _ in cycle]
            raise CombinationalCycleError(
                f"Combinational cycle through {' -> '.join(names)}", nets=names
            ) from None

    def net_id(self, name: str) -> int:
        try:
            return self._ids[name]
        except KeyError:
            raise UndefinedNetError(f"Unknown net {name!r}", net=name) from None

    def net_name(self, net: int) -> str:
        return self.net_names[net]

    @property
    def num_nets(self) -> int:
        return len(self.net_names)

    @property
    def state_width(self) -> int:
        return len(self.flipflops)

    @property
    def init_state(self) -> tuple[int, ...]:
        return tuple(ff.init for ff in self.flipflops)

    def with_init(self, ff_init: Mapping[str, int]) -> Netlist:
        """Return a copy with flip-flop initial values overridden by Q-net name."""
        by_q = {self.net_names[ff.q]: i for i, ff in enumerate(self.flipflops)}
        ffs = list(self.flipflops)
        for name, bit in ff_init.items():
            if name not in by_q:
                raise NetlistError(f"ff_init names {name!r}, which is not a flip-flop output")
            ffs[by_q[name]] = dataclasses.replace(ffs[by_q[name]], init=int(bit))
        return dataclasses.replace(self, flipflops=tuple(ffs))

    def summary(self) -> dict[str, object]:
        return {
            "name": self.name,
            "inputs": len(self.inputs),
            "outputs": len(self.outputs),
            "key_inputs": len(self.key_inputs),
            "flipflops": len(self.flipflops),
            "gates": len(self.gates),
            "nets": self.num_nets,
        }


@dataclasses.dataclass(frozen=True)
class CombView:
    """A netlist with flip-flops severed: Q nets become pseudo primary inputs
    and D nets pseudo primary outputs."""

    netlist: Netlist
    order: tuple[int, ...]

    @property
    def pseudo_inputs(self) -> tuple[int, ...]:
        return tuple(ff.q for ff in self.netlist.flipflops)

    @property
    def pseudo_outputs(self) -> tuple[int, ...]:
        return tuple(ff.d for ff in self.netlist.flipflops)

    @property
    def sources(self) -> tuple[int, ...]:
        n = self.netlist
        return n.inputs + n.key_inputs + self.pseudo_inputs

    def ordered_gates(self) -> Iterable[Gate]:
        gates = self.netlist.gates
        return (gates[i] for i in self.order)


def comb_view(n: Netlist) -> CombView:
    return CombView(n, n.topo_order)


def ff_dependency_graph(n: Netlist) -> nx.DiGraph:
    """Directed graph over flip-flop indices: ``a -> b`` when Q of ``a`` lies in
    the combinational fan-in cone of D of ``b`` (covert fan-in included)."""
    q_index = {ff.q: i for i, ff in enumerate(n.flipflops)}
    extra: dict[int, list[int]] = {}
    for dst, dummy in n.covert_fanin:
        extra.setdefault(dst, []).append(dummy)
    support: dict[int, frozenset[int]] = {}

    def cone(net: int) -> frozenset[int]:
        if net in support:
            return support[net]
        stack = [net]
        found: set[int] = set()
        visited: set[int] = set()
        while stack:
            cur = stack.pop()
            if cur in visited:
                continue
            visited.add(cur)
            if cur in q_index:
                found.add(q_index[cur])
            gate = n.driver.get(cur)
            if gate is not None:
                stack.extend(gate.inputs)
            stack.extend(extra.get(cur, ()))
        support[net] = frozenset(found)
        return support[net]

    graph = nx.DiGraph()
    graph.add_nodes_from(range(len(n.flipflops)))
    for b, ff in enumerate(n.flipflops):
        for a in cone(ff.d):
            graph.add_edge(a, b)
    return graph


class NetlistBuilder:
    """Mutable staging area for building or rewriting a :class:`Netlist`."""

    def __init__(self, name: str) -> None:
        self.name = name
        self._names: list[str] = []
        self._ids: dict[str, int] = {}
        self._inputs: list[int] = []
        self._keys: list[int] = []
        self._outputs: list[int] = []
        self._ffs: list[list[int]] = []
        self._gates: list[tuple[GateKind, list[int], int]] = []
        self._covert: list[tuple[int, int]] = []
        self._inv: dict[int, int] = {}
        self._const: dict[int, int] = {}

    @classmethod
    def from_netlist(cls, n: Netlist) -> NetlistBuilder:
        b = cls(n.name)
        b._names = list(n.net_names)
        b._ids = {name: i for i, name in enumerate(b._names)}
        b._inputs = list(n.inputs)
        b._keys = list(n.key_inputs)
        b._outputs = list(n.outputs)
        b._ffs = [[ff.q, ff.d, ff.init] for ff in n.flipflops]
        b._gates = [(g.kind, list(g.inputs), g.output) for g in n.gates]
        b._covert = list(n.covert_fanin)
        return b

    # -- nets --------------------------------------------------------------

    def has_net(self, name: str) -> bool:
        return name in self._ids

    def net(self, name: str) -> int:
        return self._ids[name]

    def name_of(self, net: int) -> str:
        return self._names[net]

    def add_net(self, name: str) -> int:
        if name in self._ids:
            raise MultiDriverError(f"Net {name!r} already exists", net=name)
        self._ids[name] = len(self._names)
        self._names.append(name)
        return self._ids[name]

    def fresh(self, base: str) -> int:
        name, i = base, 1
        while name in self._ids:
            name = f"{base}_{i}"
            i += 1
        return self.add_net(name)

    def fresh_name(self, base: str) -> str:
        name, i = base, 1
        while name in self._ids:
            name = f"{base}_{i}"
            i += 1
        return name

    # -- ports -------------------------------------------------------------

    @property
    def inputs(self) -> list[int]:
        return list(self._inputs)

    @property
    def key_inputs(self) -> list[int]:
        return list(self._keys)

    @property
    def outputs(self) -> list[int]:
        return list(self._outputs)

    @property
    def flipflop_q(self) -> list[int]:
        return [ff[0] for ff in self._ffs]

    @property
    def flipflop_d(self) -> list[int]:
        return [ff[1] for ff in self._ffs]

    def add_input(self, name: str) -> int:
        net = self.add_net(name)
        self._inputs.append(net)
        return net

    def add_key_input(self, name: str) -> int:
        net = self.add_net(name)
        self._keys.append(net)
        return net

    def add_key_inputs(self, prefix: str, count: int) -> list[int]:
        """Append ``count`` key inputs numbered after the highest existing ``prefix<N>``."""
        start = 0
        for net in self._keys:
            suffix = self._names[net][len(prefix) :]
            if self._names[net].startswith(prefix) and suffix.isdigit():
                start = max(start, int(suffix) + 1)
        nets = []
        for i in range(start, start + count):
            name = f"{prefix}{i}"
            if name in self._ids:
                name = self.fresh_name(name)
            nets.append(self.add_key_input(name))
        return nets

    def gate_outputs(self) -> set[int]:
        return {out for _, _, out in self._gates}

    def add_output(self, net: int) -> None:
        self._outputs.append(net)

    def set_output(self, index: int, net: int) -> None:
        self._outputs[index] = net

    def add_flipflop(self, q_name: str, d: int | None = None, init: int = 0) -> int:
        q = self.add_net(q_name)
        self._ffs.append([q, q if d is None else d, init])
        return q

    def set_flipflop_d(self, index: int, d: int) -> None:
        self._ffs[index][1] = d

    def set_flipflop_init(self, index: int, init: int) -> None:
        self._ffs[index][2] = init

    def add_covert_fanin(self, gate_output: int, dummy: int) -> None:
        self._covert.append((gate_output, dummy))

    # -- gates -------------------------------------------------------------

    def add_gate(self, kind: GateKind, inputs: Sequence[int], out: str | int | None = None) -> int:
        if not check_arity(kind, len(inputs)):
            raise ArityError(f"{kind} gate cannot take {len(inputs)} input(s)")
        if out is None:
            net = self.fresh(f"_{kind.lower()}")
        elif isinstance(out, str):
            net = self.add_net(out)
        else:
            net = out
        self._gates.append((kind, list(inputs), net))
        return net

    def const(self, value: int) -> int:
        if value not in self._const:
            kind = GateKind.CONST1 if value else GateKind.CONST0
            self._const[value] = self.add_gate(kind, [], self.fresh(f"_const{value}"))
        return self._const[value]

    def inv(self, net: int) -> int:
        if net not in self._inv:
            self._inv[net] = self.add_gate(
                GateKind.NOT, [net], self.fresh(f"{self._names[net]}_n")
            )
        return self._inv[net]

    def literal(self, net: int, value: int) -> int:
        """Net that is 1 exactly when ``net`` carries ``value``."""
        return net if value else self.inv(net)

    def and_all(self, nets: Sequence[int], out: str | None = None) -> int:
        if not nets:
            return self.const(1)
        if len(nets) == 1 and out is None:
            return nets[0]
        if len(nets) == 1:
            return self.add_gate(GateKind.BUF, list(nets), out)
        return self.add_gate(GateKind.AND, list(nets), out)

    def or_all(self, nets: Sequence[int], out: str | None = None) -> int:
        if not nets:
            return self.const(0)
        if len(nets) == 1 and out is None:
            return nets[0]
        if len(nets) == 1:
            return self.add_gate(GateKind.BUF, list(nets), out)
        return self.add_gate(GateKind.OR, list(nets), out)

    def match(self, nets: Sequence[int], bits: Sequence[int], out: str | None = None) -> int:
        """Net that is 1 exactly when ``nets`` carry ``bits``."""
        return self.and_all([self.literal(n, b) for n, b in zip(nets, bits)], out)

    def replace_readers(
        self, old: int, new: int, *, skip_gate_outputs: Iterable[int] = ()
    ) -> None:
        """Redirect every gate input, flip-flop D and primary output reading ``old``."""
        skip = set(skip_gate_outputs)
        for kind, ins, out in self._gates:
            if out in skip:
                continue
            for i, net in enumerate(ins):
                if net == old:
                    ins[i] = new
        for ff in self._ffs:
            if ff[1] == old:
                ff[1] = new
        self._outputs = [new if net == old else net for net in self._outputs]

    # -- build -------------------------------------------------------------

    def build(self) -> Netlist:
        """Freeze into a canonical :class:`Netlist` (nets renumbered)."""
        ports = sorted(self._inputs + self._keys)
        order = ports + [ff[0] for ff in self._ffs] + [g[2] for g in self._gates]
        placed = set(order)
        if len(placed) != len(order):
            raise NetlistError("Builder holds a net that is driven twice")
        dangling = [i for i in range(len(self._names)) if i not in placed]
        if dangling:
            undriven = [self._names[i] for i in dangling]
            used_nets = {net for _, ins, _ in self._gates for net in ins}
            used_nets |= {ff[1] for ff in self._ffs} | set(self._outputs)
            bad = [self._names[i] for i in dangling if i in used_nets]
            if bad:
                raise UndefinedNetError(f"Net {bad[0]!r} is never driven", net=bad[0])
            logger.debug("Dropping %d unused net(s): %s", len(undriven), undriven[:5])
        remap = {old: new for new, old in enumerate(order)}
        return Netlist(
            name=self.name,
            net_names=tuple(self._names[old] for old in order),
            inputs=tuple(remap[i] for i in self._inputs),
            outputs=tuple(remap[i] for i in self._outputs),
            key_inputs=tuple(remap[i] for i in self._keys),
            flipflops=tuple(FlipFlop(remap[q], remap[d], init) for q, d, init in self._ffs),
            gates=tuple(
                Gate(kind, tuple(remap[i] for i in ins), remap[out])
                for kind, ins, out in self._gates
            ),
            covert_fanin=tuple((remap[a], remap[b]) for a, b in self._covert),
        )

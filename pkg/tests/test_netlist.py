"""Tests for the netlist IR, combinational view and builder."""

import pytest

from dfssd.exceptions import (
    ArityError,
    CombinationalCycleError,
    MultiDriverError,
    NetlistError,
    UndefinedNetError,
)
from dfssd.modules.netlist import (
    FlipFlop,
    Gate,
    GateKind,
    Netlist,
    NetlistBuilder,
    comb_view,
    ff_dependency_graph,
)


def _tiny(**overrides):
    fields = dict(
        name="t",
        net_names=("a", "b", "y"),
        inputs=(0, 1),
        outputs=(2,),
        key_inputs=(),
        flipflops=(),
        gates=(Gate(GateKind.AND, (0, 1), 2),),
    )
    fields.update(overrides)
    return Netlist(**fields)


class TestGate:
    @pytest.mark.parametrize(
        "kind, arity, ok",
        [
            (GateKind.NOT, 1, True),
            (GateKind.NOT, 2, False),
            (GateKind.AND, 1, False),
            (GateKind.AND, 3, True),
            (GateKind.MUX2, 3, True),
            (GateKind.MUX2, 2, False),
            (GateKind.CONST1, 0, True),
        ],
    )
    def test_arity(self, kind, arity, ok):
        inputs = tuple(range(arity))
        if ok:
            Gate(kind, inputs, 99)
        else:
            with pytest.raises(ArityError):
                Gate(kind, inputs, 99)


class TestNetlist:
    def test_valid(self):
        n = _tiny()
        assert n.summary() == {
            "name": "t", "inputs": 2, "outputs": 1, "key_inputs": 0,
            "flipflops": 0, "gates": 1, "nets": 3,
        }

    def test_multi_driver(self):
        with pytest.raises(MultiDriverError):
            _tiny(gates=(Gate(GateKind.AND, (0, 1), 2), Gate(GateKind.OR, (0, 1), 2)))

    def test_gate_drives_input(self):
        with pytest.raises(MultiDriverError):
            _tiny(gates=(Gate(GateKind.NOT, (1,), 0), Gate(GateKind.AND, (0, 1), 2)))

    def test_undriven_net(self):
        with pytest.raises(UndefinedNetError) as exc_info:
            _tiny(inputs=(0,), gates=(Gate(GateKind.AND, (0, 1), 2),))
        assert exc_info.value.net == "b"

    def test_combinational_cycle(self):
        with pytest.raises(CombinationalCycleError):
            Netlist(
                name="loop",
                net_names=("a", "p", "q"),
                inputs=(0,),
                outputs=(2,),
                key_inputs=(),
                flipflops=(),
                gates=(Gate(GateKind.AND, (0, 2), 1), Gate(GateKind.NOT, (1,), 2)),
            )

    def test_cycle_through_flipflop_is_legal(self):
        n = Netlist(
            name="toggle",
            net_names=("q", "d"),
            inputs=(),
            outputs=(0,),
            key_inputs=(),
            flipflops=(FlipFlop(0, 1),),
            gates=(Gate(GateKind.NOT, (0,), 1),),
        )
        assert n.state_width == 1
        assert n.init_state == (0,)

    def test_keys_overlap_inputs(self):
        with pytest.raises(NetlistError):
            _tiny(key_inputs=(0,))

    def test_net_lookup(self, detector):
        assert detector.net_name(detector.net_id("S0")) == "S0"
        with pytest.raises(UndefinedNetError):
            detector.net_id("nope")

    def test_with_init(self, detector):
        n = detector.with_init({"S0": 1})
        assert n.init_state == (0, 1)
        with pytest.raises(NetlistError):
            detector.with_init({"x": 1})

    def test_topo_order_respects_dependencies(self, s27):
        position = {s27.gates[i].output: k for k, i in enumerate(s27.topo_order)}
        for gate in s27.gates:
            for net in gate.inputs:
                if net in position:
                    assert position[net] < position[gate.output]


class TestCombView:
    def test_pseudo_ports(self, detector):
        view = comb_view(detector)
        assert len(view.pseudo_inputs) == len(view.pseudo_outputs) == 2
        assert view.sources[: len(detector.inputs)] == detector.inputs
        assert len(list(view.ordered_gates())) == len(detector.gates)


class TestFfDependencyGraph:
    def test_detector(self, detector):
        graph = ff_dependency_graph(detector)
        s1, s0 = 0, 1
        # S1_d = AND(S0, x); S0_d = NOT(x)
        assert set(graph.edges) == {(s0, s1)}

    def test_covert_fanin_adds_edges(self, detector):
        b = NetlistBuilder.from_netlist(detector)
        d0 = b.flipflop_d[1]
        b.add_covert_fanin(d0, b.flipflop_q[0])
        graph = ff_dependency_graph(b.build())
        assert (0, 1) in graph.edges


class TestNetlistBuilder:
    def test_build_from_scratch(self):
        b = NetlistBuilder("maj")
        a, c, d = (b.add_input(x) for x in "acd")
        ab = b.and_all([a, c])
        ad = b.and_all([a, d])
        cd = b.and_all([c, d])
        b.add_output(b.or_all([ab, ad, cd], out="y"))
        n = b.build()
        assert n.net_names[:3] == ("a", "c", "d")
        assert n.net_name(n.outputs[0]) == "y"
        assert len(n.gates) == 4

    def test_single_net_passthrough(self):
        b = NetlistBuilder("t")
        a = b.add_input("a")
        assert b.and_all([a]) == a
        assert b.or_all([a]) == a

    def test_inverter_cached(self):
        b = NetlistBuilder("t")
        a = b.add_input("a")
        assert b.inv(a) == b.inv(a)
        assert b.literal(a, 1) == a

    def test_fresh_names_unique(self):
        b = NetlistBuilder("t")
        b.add_input("n")
        assert b.fresh_name("n") == "n_1"
        b.fresh("n")
        assert b.fresh_name("n") == "n_2"

    def test_duplicate_name(self):
        b = NetlistBuilder("t")
        b.add_input("a")
        with pytest.raises(MultiDriverError):
            b.add_input("a")

    def test_add_key_inputs_continues_numbering(self):
        b = NetlistBuilder("t")
        b.add_key_input("keyinput0")
        b.add_key_input("keyinput1")
        nets = b.add_key_inputs("keyinput", 2)
        assert [b.name_of(k) for k in nets] == ["keyinput2", "keyinput3"]

    def test_replace_readers(self, detector):
        b = NetlistBuilder.from_netlist(detector)
        s0 = b.net("S0")
        buf = b.add_gate(GateKind.BUF, [s0], "S0_buf")
        b.replace_readers(s0, buf, skip_gate_outputs={buf})
        n = b.build()
        readers = [g for g in n.gates if n.net_id("S0") in g.inputs]
        assert [n.net_name(g.output) for g in readers] == ["S0_buf"]

    def test_undriven_net_rejected(self):
        b = NetlistBuilder("t")
        dangling = b.add_net("floating")
        b.add_output(dangling)
        with pytest.raises(UndefinedNetError):
            b.build()

    def test_unused_nets_dropped(self):
        b = NetlistBuilder("t")
        a = b.add_input("a")
        b.add_net("unused")
        b.add_output(a)
        assert "unused" not in b.build().net_names

    def test_from_netlist_round_trip(self, s27):
        assert NetlistBuilder.from_netlist(s27).build() == s27

"""Tests for `.bench` parsing, serialization and netlist file loading."""

import json

import pytest

from dfssd.config import NetlistConfig
from dfssd.exceptions import (
    ArityError,
    BenchSyntaxError,
    ConfigError,
    MultiDriverError,
    UndefinedNetError,
)
from dfssd.modules.bench import (
    load_netlist,
    parse_bench,
    serialize_bench,
    sidecar_path_for,
    write_netlist,
)
from dfssd.modules.netlist import GateKind, NetlistBuilder

LOCKED = """\
INPUT(a)
INPUT(keyinput0)
INPUT(b)
OUTPUT(y)
q = DFF(n1)
n1 = XOR(a, keyinput0)
y = NAND(q, b)
"""


class TestParseBench:
    def test_s27(self, s27):
        assert s27.summary() == {
            "name": "s27", "inputs": 4, "outputs": 1, "key_inputs": 0,
            "flipflops": 3, "gates": 10, "nets": 17,
        }

    def test_canonical_net_order(self, s27):
        assert s27.net_names[:7] == ("G0", "G1", "G2", "G3", "G5", "G6", "G7")

    def test_key_inputs_tagged(self):
        n = parse_bench(LOCKED)
        assert [n.net_name(i) for i in n.inputs] == ["a", "b"]
        assert [n.net_name(k) for k in n.key_inputs] == ["keyinput0"]

    def test_custom_key_prefix(self):
        n = parse_bench(LOCKED.replace("keyinput0", "lock_0"), key_prefix="lock_")
        assert [n.net_name(k) for k in n.key_inputs] == ["lock_0"]

    def test_gate_aliases(self):
        n = parse_bench("INPUT(a)\nOUTPUT(y)\nb = BUFF(a)\ny = INV(b)\n")
        assert [g.kind for g in n.gates] == [GateKind.BUF, GateKind.NOT]

    def test_empty_file(self):
        n = parse_bench("# nothing\n\n")
        assert n.summary()["nets"] == 0

    def test_syntax_error_position(self):
        with pytest.raises(BenchSyntaxError) as exc_info:
            parse_bench("INPUT(a)\ny = AND(a,, a)\n")
        assert exc_info.value.line == 2
        assert exc_info.value.column == 11

    def test_unknown_gate(self):
        with pytest.raises(BenchSyntaxError, match="Unknown gate type"):
            parse_bench("INPUT(a)\nOUTPUT(y)\ny = FOO(a)\n")

    def test_arity(self):
        with pytest.raises(ArityError) as exc_info:
            parse_bench("INPUT(a)\nOUTPUT(y)\ny = NOT(a, a)\n")
        assert exc_info.value.line == 3

    def test_undefined_net(self):
        with pytest.raises(UndefinedNetError, match="ghost"):
            parse_bench("INPUT(a)\nOUTPUT(y)\ny = AND(a, ghost)\n")

    def test_multi_driver(self):
        with pytest.raises(MultiDriverError):
            parse_bench("INPUT(a)\nOUTPUT(y)\ny = NOT(a)\ny = BUFF(a)\n")


class TestSerializeBench:
    @pytest.mark.parametrize("name", ["detector011.bench", "s27.bench"])
    def test_round_trip(self, circuits_dir, name):
        n = load_netlist(circuits_dir / name)
        assert parse_bench(serialize_bench(n), name=n.name) == n

    def test_round_trip_locked(self):
        n = parse_bench(LOCKED, name="locked")
        assert parse_bench(serialize_bench(n), name="locked") == n

    def test_mux_kept(self):
        b = NetlistBuilder("m")
        s, d0, d1 = (b.add_input(x) for x in ("s", "d0", "d1"))
        b.add_output(b.add_gate(GateKind.MUX2, [s, d0, d1], "y"))
        n = b.build()
        text = serialize_bench(n, keep_mux=True)
        assert "y = MUX(s, d0, d1)" in text
        assert parse_bench(text, name="m") == n

    def test_mux_expanded(self):
        b = NetlistBuilder("m")
        s, d0, d1 = (b.add_input(x) for x in ("s", "d0", "d1"))
        b.add_output(b.add_gate(GateKind.MUX2, [s, d0, d1], "y"))
        reparsed = parse_bench(serialize_bench(b.build()), name="m")
        assert GateKind.MUX2 not in {g.kind for g in reparsed.gates}
        assert {g.kind for g in reparsed.gates} == {GateKind.NOT, GateKind.AND, GateKind.OR}

    def test_covert_fanin_preserved(self, detector):
        b = NetlistBuilder.from_netlist(detector)
        b.add_covert_fanin(b.net("S1_d"), b.net("S1"))
        n = b.build()
        text = serialize_bench(n)
        assert "#@covert S1_d <- S1" in text
        assert parse_bench(text, name=n.name) == n


class TestLoadNetlist:
    def test_kiss_dispatch(self, circuits_dir):
        n = load_netlist(circuits_dir / "fsm5.kiss")
        assert n.state_width == 3
        assert len(n.outputs) == 5

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="Cannot read"):
            load_netlist(tmp_path / "nope.bench")

    def test_sidecar_picked_up(self, tmp_path):
        path = tmp_path / "c.bench"
        path.write_text(LOCKED.replace("keyinput0", "k0"))
        sidecar_path_for(path).write_text(json.dumps({"key_prefix": "k", "ff_init": {"q": 1}}))
        n = load_netlist(path)
        assert [n.net_name(k) for k in n.key_inputs] == ["k0"]
        assert n.init_state == (1,)

    def test_explicit_sidecar_missing(self, tmp_path):
        path = tmp_path / "c.bench"
        path.write_text(LOCKED)
        with pytest.raises(ConfigError, match="Sidecar not found"):
            load_netlist(path, sidecar=tmp_path / "other.json")

    def test_invalid_sidecar(self, tmp_path):
        path = tmp_path / "c.bench"
        path.write_text(LOCKED)
        sidecar_path_for(path).write_text("{not json")
        with pytest.raises(ConfigError, match="Invalid sidecar"):
            load_netlist(path)

    def test_config_prefix(self, tmp_path):
        path = tmp_path / "c.bench"
        path.write_text(LOCKED.replace("keyinput0", "lk0"))
        n = load_netlist(path, NetlistConfig(key_prefix="lk"))
        assert len(n.key_inputs) == 1


class TestWriteNetlist:
    def test_writes_sidecar_for_init(self, tmp_path, detector):
        n = detector.with_init({"S0": 1})
        written = write_netlist(n, tmp_path / "out" / "detector011.bench")
        assert [p.name for p in written] == ["detector011.bench", "detector011.sidecar.json"]
        assert load_netlist(written[0]) == n

    def test_no_sidecar_for_zero_init(self, tmp_path, detector):
        written = write_netlist(detector, tmp_path / "d.bench")
        assert len(written) == 1

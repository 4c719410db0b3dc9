"""Tests for Tseitin encoding, unrolling and the incremental SAT context."""

import itertools

import pytest

from dfssd.config import SolverConfig
from dfssd.exceptions import ModelError, WidthMismatchError
from dfssd.modules.bench import parse_bench
from dfssd.modules.cnf import (
    CnfFormula,
    SatContext,
    VarOrigin,
    add_difference_assertion,
    add_io_constraint,
    add_io_copy,
    differ_literal,
    match_literals,
    solve,
    tseitin,
    unroll,
    unroll_free,
)
from dfssd.modules.netlist import GateKind, NetlistBuilder, comb_view
from dfssd.modules.simulator import BitVector, FrameSequence, OracleHandle, simulate
from dfssd.modules.solver import SatStatus

LOCKED = """\
INPUT(a)
INPUT(b)
INPUT(keyinput0)
OUTPUT(y)
q = DFF(n1)
n1 = XOR(a, keyinput0)
y = NAND(q, b)
"""


@pytest.fixture
def locked():
    return parse_bench(LOCKED, name="locked")


def _single_gate(kind, arity):
    b = NetlistBuilder(str(kind))
    ins = [b.add_input(f"i{j}") for j in range(arity)]
    b.add_output(b.add_gate(kind, ins, "y"))
    return b.build()


class TestCnfFormula:
    def test_add_clause_checks(self):
        f = CnfFormula()
        v = f.new_var()
        with pytest.raises(ModelError):
            f.add_clause([])
        with pytest.raises(ModelError):
            f.add_clause([v + 1])
        f.add_clause([-v])
        assert f.clauses == [[-1]]

    def test_provenance(self):
        f = CnfFormula()
        v = f.new_var(VarOrigin(3, 1, "k1"))
        assert f.var_of(3, 1, "k1") == v
        assert f.provenance[v].instance == "k1"
        with pytest.raises(ModelError):
            f.var_of(3, 2, "k1")

    def test_evaluate(self):
        f = CnfFormula()
        a, b = f.new_var(), f.new_var()
        f.add_clause([a, b])
        f.add_clause([-a])
        assert f.evaluate([False, False, True])
        assert f.evaluate({b: True})
        assert not f.evaluate({a: True, b: True})

    def test_dimacs(self, tmp_path):
        f = CnfFormula()
        a, b = f.new_var(), f.new_var()
        f.add_clause([a, -b])
        f.add_clause([b])
        assert f.to_dimacs() == "p cnf 2 2\n1 -2 0\n2 0\n"
        path = f.write_dimacs(tmp_path / "m.cnf")
        assert path.read_text().startswith("p cnf 2 2")

    def test_assert_unsat(self):
        f = CnfFormula()
        f.new_var()
        f.assert_unsat()
        assert solve(f).is_unsat


class TestTseitin:
    @pytest.mark.parametrize(
        "kind, arity",
        [
            (GateKind.AND, 3), (GateKind.NAND, 2), (GateKind.OR, 3), (GateKind.NOR, 2),
            (GateKind.XOR, 3), (GateKind.XNOR, 3), (GateKind.NOT, 1), (GateKind.BUF, 1),
            (GateKind.MUX2, 3),
        ],
    )
    def test_gate_truth_table(self, kind, arity):
        n = _single_gate(kind, arity)
        f = tseitin(comb_view(n))
        xs = [f.var_of(x) for x in n.inputs]
        y = f.var_of(n.outputs[0])
        for bits in itertools.product((0, 1), repeat=arity):
            expected = simulate(n, BitVector(()), FrameSequence.from_strings(
                ["".join(map(str, bits))]
            ))[0][0]
            assert solve(f, match_literals(xs, bits) + [y if expected else -y]).is_sat
            assert solve(f, match_literals(xs, bits) + [-y if expected else y]).is_unsat

    def test_constants(self):
        b = NetlistBuilder("c")
        b.add_output(b.const(1))
        b.add_output(b.const(0))
        n = b.build()
        f = tseitin(comb_view(n))
        outcome = solve(f)
        assert outcome.value(f.var_of(n.outputs[0]))
        assert not outcome.value(f.var_of(n.outputs[1]))

    def test_sources_first(self, locked):
        f = tseitin(comb_view(locked))
        view = comb_view(locked)
        assert [f.var_of(s) for s in view.sources] == [1, 2, 3, 4]


class TestAddIoCopy:
    def test_pins_key(self, locked):
        seq = FrameSequence.from_strings(["11", "11"])
        for key in ("0", "1"):
            f = CnfFormula()
            k = f.new_var()
            out = simulate(locked, BitVector.from_str(key), seq)
            add_io_copy(f, locked, [k], seq, out, instance="d0")
            outcome = solve(f)
            assert outcome.is_sat
            assert outcome.value(k) == (key == "1")

    def test_constant_mismatch_is_unsat(self, detector):
        f = CnfFormula()
        f.new_var()
        add_io_copy(
            f, detector, [], FrameSequence.from_strings(["0"]),
            FrameSequence.from_strings(["1"]), instance="d0",
        )
        assert solve(f).is_unsat

    def test_widths(self, locked):
        f = CnfFormula()
        with pytest.raises(WidthMismatchError):
            add_io_copy(
                f, locked, [], FrameSequence.from_strings(["1"]),
                FrameSequence.from_strings(["1"]), instance="d0",
            )
        with pytest.raises(WidthMismatchError):
            add_io_copy(
                f, locked, [], FrameSequence.from_strings(["11"]),
                FrameSequence.from_strings(["1", "1"]), instance="d0",
            )


class TestUnrolledModel:
    def test_finds_distinguishing_sequence(self, locked):
        m = unroll(locked, 2)
        act = add_difference_assertion(m)
        outcome = solve(m.formula, [act])
        assert outcome.is_sat
        seq = m.read_inputs(outcome)
        k1, k2 = m.read_key(outcome, "k1"), m.read_key(outcome, "k2")
        assert k1 != k2
        assert simulate(locked, k1, seq) != simulate(locked, k2, seq)
        assert m.read_outputs(outcome, "k1") == simulate(locked, k1, seq)

    def test_single_frame_cannot_distinguish(self, locked):
        m = unroll(locked, 1)
        assert solve(m.formula, [m.add_difference_assertion()]).is_unsat

    def test_io_constraint_removes_wrong_key(self, locked):
        m = unroll(locked, 2)
        oracle = OracleHandle(locked, BitVector.from_str("0"))
        seq = FrameSequence.from_strings(["11", "11"])
        add_io_constraint(m, seq, oracle.query(seq))
        assert m.dis_copies == 1
        act = m.add_difference_assertion()
        assert solve(m.formula, [act]).is_unsat
        outcome = solve(m.formula)
        assert str(m.read_key(outcome, "k1")) == "0"

    def test_extend_retires_assertion(self, locked):
        m = unroll(locked, 1)
        old = m.add_difference_assertion()
        m.extend(3)
        assert m.frames == 3
        assert m.difference_literal is None
        assert solve(m.formula, [old]).is_unsat
        new = m.add_difference_assertion()
        assert solve(m.formula, [new]).is_sat

    def test_assertion_once_per_bound(self, locked):
        m = unroll(locked, 2)
        m.add_difference_assertion()
        with pytest.raises(ModelError, match="already added"):
            m.add_difference_assertion()

    def test_extend_smaller_is_noop(self, locked):
        m = unroll(locked, 3)
        m.extend(2)
        assert m.frames == 3
        with pytest.raises(ModelError):
            m.extend(0)

    def test_instance_checks(self, locked):
        from dfssd.modules.cnf import UnrolledModel

        with pytest.raises(ModelError):
            UnrolledModel(locked, instances=0)
        with pytest.raises(ModelError):
            UnrolledModel(locked, instances=2).add_difference_assertion()
        m = unroll(locked, 1, instances=3)
        with pytest.raises(ModelError):
            m.add_difference_assertion()

    def test_initial_state_pinned(self, detector):
        started = detector.with_init({"S1": 1})
        m = unroll(started, 1, instances=1)
        outcome = solve(m.formula, match_literals(m.inputs[0], [1]))
        assert str(m.read_outputs(outcome, "k1")) == "1"


class TestFreeUnrolling:
    def test_shared_inputs(self, detector):
        f = CnfFormula()
        view = comb_view(detector)
        a = unroll_free(f, view, 2, [], instance="a")
        b = unroll_free(f, view, 2, [], instance="b", inputs=a.inputs)
        assert a.inputs == b.inputs
        assert len(a.states) == 3
        # from state 11 with x=1 the output is 1 in the first frame
        outcome = solve(f, match_literals(a.states[0], [1, 1]) + match_literals(a.inputs[0], [1]))
        assert outcome.lit(a.outputs[0][0])


class TestDifferLiteral:
    def test_empty(self):
        assert differ_literal(CnfFormula(), [], []) is None

    def test_identical_vectors(self):
        f = CnfFormula()
        v = f.new_var()
        lit = differ_literal(f, [v], [v])
        assert solve(f, [lit]).is_unsat

    def test_differs(self):
        f = CnfFormula()
        a = [f.new_var(), f.new_var()]
        b = [f.new_var(), f.new_var()]
        lit = differ_literal(f, a, b)
        assert solve(f, [lit] + match_literals(a, [1, 0]) + match_literals(b, [1, 0])).is_unsat
        assert solve(f, [lit] + match_literals(a, [1, 0]) + match_literals(b, [1, 1])).is_sat


class TestSatContext:
    def test_incremental_sync(self):
        f = CnfFormula()
        a = f.new_var()
        ctx = SatContext(f)
        assert ctx.solve([a]).is_sat
        f.add_clause([-a])
        assert ctx.solve([a]).is_unsat

    def test_empty_clause(self):
        f = CnfFormula()
        f.new_var()
        ctx = SatContext(f)
        f.assert_unsat()
        assert ctx.solve().is_unsat

    def test_zero_time_budget(self):
        f = CnfFormula()
        f.new_var()
        assert SatContext(f).solve(time_budget=0).status is SatStatus.UNKNOWN

    def test_verify_models(self, s27):
        f = tseitin(comb_view(s27))
        outcome = SatContext(f, config=SolverConfig(verify_models=True)).solve()
        assert outcome.is_sat
        assert f.evaluate(outcome.model)

    def test_rejects_bad_model(self, mocker):
        f = CnfFormula()
        a = f.new_var()
        f.add_clause([a])
        backend = mocker.Mock()
        from dfssd.modules.solver import SatOutcome

        backend.solve.return_value = SatOutcome(SatStatus.SAT, (False, False))
        ctx = SatContext(f, backend, config=SolverConfig(verify_models=True))
        with pytest.raises(ModelError, match="violates"):
            ctx.solve()

"""Tseitin encoding, time-frame unrolling and miter construction.

Signals inside an encoding are DIMACS literals (``int``) or Python ``bool``
constants. Strict encoding gives every net its own variable; folded encoding
propagates constants through gates, which keeps the per-DIS copies small.
"""

from __future__ import annotations

import dataclasses
import logging
from collections.abc import Mapping, Sequence
from pathlib import Path

from dfssd.config import SolverConfig
from dfssd.exceptions import ModelError, WidthMismatchError
from dfssd.modules.netlist import CombView, GateKind, Netlist, comb_view
from dfssd.modules.simulator import BitVector, FrameSequence
from dfssd.modules.solver import SatBackend, SatOutcome, SatStatus, make_backend

logger = logging.getLogger(__name__)

Signal = int | bool


@dataclasses.dataclass(frozen=True)
class VarOrigin:
    """Where a variable comes from: a net at a time frame of an instance."""

    net: int
    frame: int
    instance: str


class CnfFormula:
    """Growing clause database with variable provenance."""

    def __init__(self) -> None:
        self.num_vars = 0
        self.clauses: list[list[int]] = []
        self.provenance: dict[int, VarOrigin] = {}
        self._index: dict[VarOrigin, int] = {}

    def new_var(self, origin: VarOrigin | None = None) -> int:
        self.num_vars += 1
        if origin is not None:
            self.provenance[self.num_vars] = origin
            self._index.setdefault(origin, self.num_vars)
        return self.num_vars

    def var_of(self, net: int, frame: int = 0, instance: str = "c") -> int:
        try:
            return self._index[VarOrigin(net, frame, instance)]
        except KeyError:
            raise ModelError(
                f"No variable for net {net} frame {frame} instance {instance!r}"
            ) from None

    def add_clause(self, lits: Sequence[int]) -> None:
        if not lits:
            raise ModelError("Empty clause; use assert_unsat() to add one deliberately")
        for lit in lits:
            if lit == 0 or abs(lit) > self.num_vars:
                raise ModelError(f"Literal {lit} outside 1..{self.num_vars}")
        self.clauses.append(list(lits))

    def assert_unsat(self) -> None:
        self.clauses.append([])

    def evaluate(self, assignment: Sequence[bool] | Mapping[int, bool]) -> bool:
        """True iff every clause has a true literal under ``assignment``."""

        def value(lit: int) -> bool:
            v = abs(lit)
            if isinstance(assignment, Mapping):
                bit = bool(assignment.get(v, False))
            else:
                bit = v < len(assignment) and bool(assignment[v])
            return bit == (lit > 0)

        return all(any(value(lit) for lit in clause) for clause in self.clauses)

    def to_dimacs(self) -> str:
        lines = [f"p cnf {self.num_vars} {len(self.clauses)}"]
        lines.extend(" ".join(map(str, clause + [0])) for clause in self.clauses)
        return "\n".join(lines) + "\n"

    def write_dimacs(self, path: str | Path) -> Path:
        out = Path(path).expanduser()
        out.write_text(self.to_dimacs())
        return out


def _neg(s: Signal) -> Signal:
    return (not s) if isinstance(s, bool) else -s


def _xor2(f: CnfFormula, out: int, a: int, b: int) -> None:
    f.add_clause([-a, -b, -out])
    f.add_clause([a, b, -out])
    f.add_clause([a, -b, out])
    f.add_clause([-a, b, out])


def _and_clauses(f: CnfFormula, out: int, ins: Sequence[int]) -> None:
    for a in ins:
        f.add_clause([-out, a])
    f.add_clause([out, *(-a for a in ins)])


def _strict_gate(f: CnfFormula, kind: GateKind, out: int, ins: Sequence[int]) -> None:
    if kind is GateKind.AND:
        _and_clauses(f, out, ins)
    elif kind is GateKind.NAND:
        _and_clauses(f, -out, ins)
    elif kind is GateKind.OR:
        _and_clauses(f, -out, [-a for a in ins])
    elif kind is GateKind.NOR:
        _and_clauses(f, out, [-a for a in ins])
    elif kind is GateKind.XOR or kind is GateKind.XNOR:
        acc = ins[0]
        for a in ins[1:-1]:
            t = f.new_var()
            _xor2(f, t, acc, a)
            acc = t
        _xor2(f, out if kind is GateKind.XOR else -out, acc, ins[-1])
    elif kind is GateKind.NOT:
        f.add_clause([out, ins[0]])
        f.add_clause([-out, -ins[0]])
    elif kind is GateKind.BUF:
        f.add_clause([out, -ins[0]])
        f.add_clause([-out, ins[0]])
    elif kind is GateKind.MUX2:
        s, d0, d1 = ins
        f.add_clause([-s, -d1, out])
        f.add_clause([-s, d1, -out])
        f.add_clause([s, -d0, out])
        f.add_clause([s, d0, -out])
    elif kind is GateKind.CONST0:
        f.add_clause([-out])
    else:
        f.add_clause([out])


class _Folder:
    """Constant-propagating gate encoder."""

    def __init__(self, f: CnfFormula) -> None:
        self.f = f

    def and_(self, sigs: Sequence[Signal], origin: VarOrigin) -> Signal:
        lits: list[int] = []
        seen: set[int] = set()
        for s in sigs:
            if isinstance(s, bool):
                if not s:
                    return False
                continue
            if -s in seen:
                return False
            if s not in seen:
                seen.add(s)
                lits.append(s)
        if not lits:
            return True
        if len(lits) == 1:
            return lits[0]
        out = self.f.new_var(origin)
        _and_clauses(self.f, out, lits)
        return out

    def xor(self, sigs: Sequence[Signal], origin: VarOrigin) -> Signal:
        parity = False
        lits: list[int] = []
        for s in sigs:
            if isinstance(s, bool):
                parity ^= s
            else:
                lits.append(s)
        if not lits:
            return parity
        acc = lits[0]
        for a in lits[1:]:
            t = self.f.new_var(origin)
            _xor2(self.f, t, acc, a)
            acc = t
        return -acc if parity else acc

    def gate(self, kind: GateKind, ins: Sequence[Signal], origin: VarOrigin) -> Signal:
        if kind is GateKind.AND:
            return self.and_(ins, origin)
        if kind is GateKind.NAND:
            return _neg(self.and_(ins, origin))
        if kind is GateKind.OR:
            return _neg(self.and_([_neg(s) for s in ins], origin))
        if kind is GateKind.NOR:
            return self.and_([_neg(s) for s in ins], origin)
        if kind is GateKind.XOR:
            return self.xor(ins, origin)
        if kind is GateKind.XNOR:
            return _neg(self.xor(ins, origin))
        if kind is GateKind.NOT:
            return _neg(ins[0])
        if kind is GateKind.BUF:
            return ins[0]
        if kind is GateKind.MUX2:
            s, d0, d1 = ins
            if isinstance(s, bool):
                return d1 if s else d0
            if d0 == d1 and type(d0) is type(d1):
                return d0
            if isinstance(d0, bool) or isinstance(d1, bool):
                return _neg(
                    self.and_(
                        [_neg(self.and_([-s, d0], origin)), _neg(self.and_([s, d1], origin))],
                        origin,
                    )
                )
            out = self.f.new_var(origin)
            _strict_gate(self.f, GateKind.MUX2, out, [s, d0, d1])
            return out
        return kind is GateKind.CONST1


def encode_frame(
    f: CnfFormula,
    view: CombView,
    inputs: Sequence[Signal],
    keys: Sequence[Signal],
    state: Sequence[Signal],
    *,
    fold: bool = False,
    frame: int = 0,
    instance: str = "c",
) -> tuple[list[Signal], list[Signal], dict[int, Signal]]:
    """Encode one combinational frame.

    Returns (outputs, next_state, all net signals). In strict mode every
    source must be a variable and every gate output gets a fresh variable.
    """
    n = view.netlist
    values: dict[int, Signal] = {}
    values.update(zip(n.inputs, inputs))
    values.update(zip(n.key_inputs, keys))
    values.update(zip(view.pseudo_inputs, state))
    folder = _Folder(f) if fold else None
    for gate in view.ordered_gates():
        ins = [values[i] for i in gate.inputs]
        origin = VarOrigin(gate.output, frame, instance)
        if folder is not None:
            values[gate.output] = folder.gate(gate.kind, ins, origin)
        else:
            out = f.new_var(origin)
            _strict_gate(f, gate.kind, out, ins)  # type: ignore[arg-type]
            values[gate.output] = out
    return (
        [values[o] for o in n.outputs],
        [values[d] for d in view.pseudo_outputs],
        values,
    )


def tseitin(
    view: CombView, formula: CnfFormula | None = None, *, instance: str = "c"
) -> CnfFormula:
    """Strict Tseitin encoding of one frame; sources get variables first."""
    f = formula or CnfFormula()
    n = view.netlist
    xs = [f.new_var(VarOrigin(x, 0, instance)) for x in n.inputs]
    ks = [f.new_var(VarOrigin(k, 0, instance)) for k in n.key_inputs]
    ss = [f.new_var(VarOrigin(q, 0, instance)) for q in view.pseudo_inputs]
    encode_frame(f, view, xs, ks, ss, frame=0, instance=instance)
    return f


def add_io_copy(
    f: CnfFormula,
    n: Netlist,
    keys: Sequence[Signal],
    seq: FrameSequence,
    out: FrameSequence,
    *,
    instance: str,
    view: CombView | None = None,
) -> None:
    """Constrain ``keys`` so that ``n`` maps ``seq`` to ``out`` from the reset state.

    The copy is folded: inputs and the initial state are constants.
    """
    if seq.width != len(n.inputs):
        raise WidthMismatchError("DIS input frame", expected=len(n.inputs), actual=seq.width)
    if out.width != len(n.outputs):
        raise WidthMismatchError("DIS output frame", expected=len(n.outputs), actual=out.width)
    if len(out) != len(seq):
        raise WidthMismatchError("DIS length", expected=len(seq), actual=len(out))
    view = view or comb_view(n)
    state: list[Signal] = [bool(b) for b in n.init_state]
    for t, (frame_in, frame_out) in enumerate(zip(seq, out)):
        ys, state, _ = encode_frame(
            f, view, [bool(b) for b in frame_in], keys, state,
            fold=True, frame=t, instance=instance,
        )
        for sig, bit in zip(ys, frame_out):
            if isinstance(sig, bool):
                if sig != bool(bit):
                    f.assert_unsat()
            else:
                f.add_clause([sig if bit else -sig])


class UnrolledModel:
    """A netlist unrolled over b frames for one or more keyed instances.

    All instances share the per-frame input variables and each has its own key
    variables. Frame t's next-state signals are frame t+1's state signals.
    """

    def __init__(self, n: Netlist, instances: int = 2, formula: CnfFormula | None = None) -> None:
        if instances < 1:
            raise ModelError("An unrolled model needs at least one instance")
        self.base = n
        self.view = comb_view(n)
        self.formula = formula or CnfFormula()
        self.instances = tuple(f"k{i + 1}" for i in range(instances))
        f = self.formula
        self.keys: dict[str, list[int]] = {
            tag: [f.new_var(VarOrigin(k, 0, tag)) for k in n.key_inputs] for tag in self.instances
        }
        self.inputs: list[list[int]] = []
        self.states: dict[str, list[list[int]]] = {tag: [] for tag in self.instances}
        self.outputs: dict[str, list[list[int]]] = {tag: [] for tag in self.instances}
        self.dis_copies = 0
        self._frame_flags: list[int | None] = []
        self._diff_literal: int | None = None
        self._diff_bound: int | None = None

    @property
    def frames(self) -> int:
        return len(self.inputs)

    @property
    def difference_literal(self) -> int | None:
        """Activation literal of the live difference assertion, if any."""
        return self._diff_literal

    def _add_frame(self) -> None:
        f = self.formula
        n = self.base
        t = self.frames
        xs = [f.new_var(VarOrigin(x, t, "x")) for x in n.inputs]
        self.inputs.append(xs)
        for tag in self.instances:
            if t == 0:
                init = []
                for ff in n.flipflops:
                    v = f.new_var(VarOrigin(ff.q, 0, tag))
                    f.add_clause([v if ff.init else -v])
                    init.append(v)
                self.states[tag].append(init)
            ys, ds, _ = encode_frame(
                f, self.view, xs, self.keys[tag], self.states[tag][t], frame=t, instance=tag
            )
            self.outputs[tag].append(ys)  # type: ignore[arg-type]
            self.states[tag].append(ds)  # type: ignore[arg-type]

    def extend(self, b: int) -> None:
        """Grow to ``b`` frames; a live difference assertion for a smaller bound is retired."""
        if b < 1:
            raise ModelError(f"Bound must be >= 1, got {b}")
        if b <= self.frames:
            return
        while self.frames < b:
            self._add_frame()
        if self._diff_literal is not None:
            self.formula.add_clause([-self._diff_literal])
            logger.debug("Retired difference assertion for bound %s", self._diff_bound)
            self._diff_literal = None
            self._diff_bound = None

    def _frame_differs(self, t: int) -> int | None:
        while len(self._frame_flags) <= t:
            self._frame_flags.append(self._build_flag(len(self._frame_flags)))
        return self._frame_flags[t]

    def _build_flag(self, t: int) -> int | None:
        f = self.formula
        a, b = self.instances[:2]
        miters = []
        for j, (y1, y2) in enumerate(zip(self.outputs[a][t], self.outputs[b][t])):
            x = f.new_var(VarOrigin(self.base.outputs[j], t, "miter"))
            _xor2(f, x, y1, y2)
            miters.append(x)
        if not miters:
            return None
        if len(miters) == 1:
            return miters[0]
        flag = f.new_var()
        _and_clauses(f, -flag, [-m for m in miters])
        return flag

    def add_difference_assertion(self) -> int:
        """Assert Y1 != Y2 at some frame < b, guarded by a fresh activation literal."""
        if len(self.instances) != 2:
            raise ModelError("Difference assertion needs exactly two instances")
        if not self.frames:
            raise ModelError("Unroll at least one frame before asserting a difference")
        if self._diff_bound == self.frames:
            raise ModelError(f"Difference assertion already added at bound {self.frames}")
        flags = [flag for t in range(self.frames) if (flag := self._frame_differs(t)) is not None]
        act = self.formula.new_var()
        self.formula.add_clause([-act, *flags])
        self._diff_literal = act
        self._diff_bound = self.frames
        return act

    def add_io_constraint(self, seq: FrameSequence, out: FrameSequence) -> None:
        """Pin every instance's behavior on ``seq`` to ``out`` via fresh folded copies."""
        if seq.width != len(self.base.inputs):
            raise WidthMismatchError(
                "DIS input frame", expected=len(self.base.inputs), actual=seq.width
            )
        if out.width != len(self.base.outputs):
            raise WidthMismatchError(
                "DIS output frame", expected=len(self.base.outputs), actual=out.width
            )
        if not len(seq):
            return
        for tag in self.instances:
            add_io_copy(
                self.formula, self.base, self.keys[tag], seq, out,
                instance=f"{tag}.dis{self.dis_copies}", view=self.view,
            )
        self.dis_copies += 1

    # -- model readers -----------------------------------------------------

    def read_inputs(self, outcome: SatOutcome, length: int | None = None) -> FrameSequence:
        frames = self.inputs[: self.frames if length is None else length]
        return FrameSequence(
            len(self.base.inputs),
            tuple(BitVector.from_bits(outcome.lit(v) for v in xs) for xs in frames),
        )

    def read_key(self, outcome: SatOutcome, instance: str = "k1") -> BitVector:
        return BitVector.from_bits(outcome.lit(v) for v in self.keys[instance])

    def read_outputs(self, outcome: SatOutcome, instance: str) -> FrameSequence:
        return FrameSequence(
            len(self.base.outputs),
            tuple(
                BitVector.from_bits(outcome.lit(v) for v in ys) for ys in self.outputs[instance]
            ),
        )


@dataclasses.dataclass
class FreeUnrolling:
    """Frames encoded from an unconstrained start state."""

    inputs: list[list[int]]
    states: list[list[int]]
    outputs: list[list[int]]


def unroll_free(
    f: CnfFormula,
    view: CombView,
    frames: int,
    keys: Sequence[int],
    *,
    instance: str,
    inputs: Sequence[Sequence[int]] | None = None,
) -> FreeUnrolling:
    """Strictly encode ``frames`` frames starting from fresh state variables.

    ``inputs`` lets two unrollings share their per-frame input variables.
    """
    n = view.netlist
    state = [f.new_var(VarOrigin(q, 0, instance)) for q in view.pseudo_inputs]
    result = FreeUnrolling([], [state], [])
    for t in range(frames):
        if inputs is not None:
            xs = list(inputs[t])
        else:
            xs = [f.new_var(VarOrigin(x, t, f"{instance}.x")) for x in n.inputs]
        ys, ds, _ = encode_frame(f, view, xs, keys, result.states[-1], frame=t, instance=instance)
        result.inputs.append(xs)
        result.outputs.append(ys)  # type: ignore[arg-type]
        result.states.append(ds)  # type: ignore[arg-type]
    return result


def differ_literal(f: CnfFormula, a: Sequence[int], b: Sequence[int]) -> int | None:
    """Variable equivalent to "vectors ``a`` and ``b`` differ"; None for empty vectors."""
    xors = []
    for x, y in zip(a, b):
        if x == y:
            continue
        v = f.new_var()
        _xor2(f, v, x, y)
        xors.append(v)
    if not xors:
        if len(a):
            false = f.new_var()
            f.add_clause([-false])
            return false
        return None
    if len(xors) == 1:
        return xors[0]
    flag = f.new_var()
    _and_clauses(f, -flag, [-x for x in xors])
    return flag


def match_literals(variables: Sequence[int], bits: Sequence[int]) -> list[int]:
    """Literals asserting ``variables`` carry ``bits``."""
    return [v if b else -v for v, b in zip(variables, bits)]


def unroll(n: Netlist, b: int, instances: int = 2) -> UnrolledModel:
    model = UnrolledModel(n, instances)
    model.extend(b)
    return model


def add_difference_assertion(m: UnrolledModel) -> int:
    return m.add_difference_assertion()


def add_io_constraint(m: UnrolledModel, seq: FrameSequence, out: FrameSequence) -> None:
    m.add_io_constraint(seq, out)


class SatContext:
    """Streams a growing :class:`CnfFormula` into one incremental backend."""

    def __init__(
        self,
        formula: CnfFormula,
        backend: SatBackend | None = None,
        *,
        config: SolverConfig | None = None,
    ) -> None:
        config = config or SolverConfig()
        self.formula = formula
        self.backend = backend if backend is not None else make_backend(config)
        self.verify_models = config.verify_models
        self.conflict_budget = config.conflict_budget
        self._sent = 0
        self._has_empty = False

    def sync(self) -> None:
        self.backend.reserve(self.formula.num_vars)
        for clause in self.formula.clauses[self._sent :]:
            if clause:
                self.backend.add_clause(clause)
            else:
                self._has_empty = True
        self._sent = len(self.formula.clauses)

    def solve(
        self,
        assumptions: Sequence[int] = (),
        *,
        conflict_budget: int | None = None,
        time_budget: float | None = None,
    ) -> SatOutcome:
        self.sync()
        if self._has_empty:
            return SatOutcome(SatStatus.UNSAT)
        if time_budget is not None and time_budget <= 0:
            return SatOutcome(SatStatus.UNKNOWN)
        outcome = self.backend.solve(
            assumptions,
            conflict_budget=(
                conflict_budget if conflict_budget is not None else self.conflict_budget
            ),
            time_budget=time_budget,
        )
        if outcome.is_sat and self.verify_models:
            assert outcome.model is not None
            if not self.formula.evaluate(outcome.model) or not all(
                outcome.lit(a) for a in assumptions
            ):
                raise ModelError("Backend returned an assignment that violates the formula")
        return outcome


def solve(
    f: CnfFormula, assumptions: Sequence[int] = (), *, config: SolverConfig | None = None
) -> SatOutcome:
    """One-shot solve of ``f`` under ``assumptions``."""
    return SatContext(f, config=config).solve(assumptions)

"""KISS2 state-table front-end: FSM tables synthesized to sum-of-products netlists."""

from __future__ import annotations

import dataclasses
import logging
import math
import re

from dfssd.exceptions import BenchSyntaxError, NetlistError
from dfssd.modules.netlist import GateKind, Netlist, NetlistBuilder

logger = logging.getLogger(__name__)

_CUBE_RE = re.compile(r"^[01-]*$")
_CODE_RE = re.compile(r"^[01]+$")


@dataclasses.dataclass(frozen=True)
class FsmRow:
    inputs: str
    current: str
    next: str
    outputs: str


@dataclasses.dataclass(frozen=True)
class FsmTable:
    """A Mealy/Moore machine given as rows ``input-cube current next outputs``.

    State names that are equal-width binary strings are used as their own
    encodings; otherwise states get binary codes in order of first appearance
    with the reset state at code zero.
    """

    name: str
    num_inputs: int
    num_outputs: int
    rows: tuple[FsmRow, ...]
    reset: str

    def __post_init__(self) -> None:
        for row in self.rows:
            if len(row.inputs) != self.num_inputs or not _CUBE_RE.match(row.inputs):
                raise NetlistError(f"Bad input cube {row.inputs!r} for {self.num_inputs} input(s)")
            if len(row.outputs) != self.num_outputs or not _CUBE_RE.match(row.outputs):
                raise NetlistError(f"Bad output cube {row.outputs!r}")
        used = {r.current for r in self.rows} | {r.next for r in self.rows}
        if self.rows and self.reset not in used:
            raise NetlistError(f"Reset state {self.reset!r} does not appear in the table")

    @property
    def states(self) -> list[str]:
        seen: dict[str, None] = {self.reset: None}
        for row in self.rows:
            seen.setdefault(row.current)
            seen.setdefault(row.next)
        return list(seen)

    def encoding(self) -> dict[str, str]:
        states = self.states
        widths = {len(s) for s in states}
        if all(_CODE_RE.match(s) for s in states) and len(widths) == 1:
            return {s: s for s in states}
        width = max(1, math.ceil(math.log2(len(states))))
        return {s: format(i, f"0{width}b") for i, s in enumerate(states)}

    def to_netlist(self) -> Netlist:
        codes = self.encoding()
        width = len(next(iter(codes.values())))
        b = NetlistBuilder(self.name)
        xs = [b.add_input(f"x{i}") for i in range(self.num_inputs)]
        reset = codes[self.reset]
        qs = [
            b.add_flipflop(f"S{width - 1 - j}", init=int(reset[j]))
            for j in range(width)
        ]
        terms: dict[tuple[str, str], int] = {}

        def term(row: FsmRow) -> int:
            key = (row.inputs, codes[row.current])
            if key not in terms:
                lits = [b.literal(x, int(c)) for x, c in zip(xs, row.inputs) if c != "-"]
                lits += [b.literal(q, int(c)) for q, c in zip(qs, codes[row.current])]
                terms[key] = b.and_all(lits)
            return terms[key]

        for j in range(width):
            ones = [term(r) for r in self.rows if codes[r.next][j] == "1"]
            d = b.or_all(sorted(set(ones)), out=f"S{width - 1 - j}_d") if ones else b.add_gate(
                GateKind.CONST0, [], f"S{width - 1 - j}_d"
            )
            b.set_flipflop_d(j, d)
        for k in range(self.num_outputs):
            ones = sorted({term(r) for r in self.rows if r.outputs[k] == "1"})
            if ones:
                b.add_output(b.or_all(ones, out=f"y{k}"))
            else:
                b.add_output(b.add_gate(GateKind.CONST0, [], f"y{k}"))
        netlist = b.build()
        logger.debug(
            "Synthesized FSM %s: %d states, %d FFs, %d gates",
            self.name, len(codes), width, len(netlist.gates),
        )
        return netlist


def parse_kiss(text: str, *, name: str = "fsm") -> FsmTable:
    """Parse KISS2 text (``.i .o .s .p .r`` headers, ``.e`` terminator)."""
    num_inputs = num_outputs = -1
    reset: str | None = None
    rows: list[FsmRow] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if fields[0].startswith("."):
            directive = fields[0]
            if directive == ".e" or directive == ".end":
                break
            if len(fields) != 2:
                raise BenchSyntaxError(
                    f"Directive {directive} needs one argument", line=lineno, column=1
                )
            if directive == ".i":
                num_inputs = int(fields[1])
            elif directive == ".o":
                num_outputs = int(fields[1])
            elif directive == ".r":
                reset = fields[1]
            elif directive not in (".s", ".p"):
                raise BenchSyntaxError(f"Unknown directive {directive}", line=lineno, column=1)
            continue
        if num_inputs == 0 and len(fields) == 3:
            fields = ["", *fields]
        if len(fields) != 4:
            raise BenchSyntaxError(
                "Expected 'inputs current next outputs'", line=lineno, column=1
            )
        rows.append(FsmRow(*fields))
    if num_inputs < 0 or num_outputs < 0:
        raise BenchSyntaxError("Missing .i or .o header", line=1, column=1)
    if not rows:
        raise NetlistError("KISS2 table has no rows")
    return FsmTable(
        name=name,
        num_inputs=num_inputs,
        num_outputs=num_outputs,
        rows=tuple(rows),
        reset=reset if reset is not None else rows[0].current,
    )

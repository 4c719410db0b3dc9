"""ISCAS'89 `.bench` reader/writer and netlist file loading."""

from __future__ import annotations

import dataclasses
import json
import logging
import re
from pathlib import Path

from dfssd.config import NetlistConfig, NetlistSidecar
from dfssd.exceptions import (
    ArityError,
    BenchSyntaxError,
    ConfigError,
    MultiDriverError,
    UndefinedNetError,
)
from dfssd.modules.netlist import FlipFlop, Gate, GateKind, Netlist, check_arity

logger = logging.getLogger(__name__)

_TOKEN_RE = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<name>[^\s(),=#]+)|(?P<lpar>\()|(?P<rpar>\))"
    r"|(?P<comma>,)|(?P<eq>=)"
)
_COVERT_RE = re.compile(r"^#@covert\s+(\S+)\s*<-\s*(\S+)\s*$")

_KINDS: dict[str, GateKind] = {
    "AND": GateKind.AND,
    "NAND": GateKind.NAND,
    "OR": GateKind.OR,
    "NOR": GateKind.NOR,
    "XOR": GateKind.XOR,
    "XNOR": GateKind.XNOR,
    "NOT": GateKind.NOT,
    "INV": GateKind.NOT,
    "BUF": GateKind.BUF,
    "BUFF": GateKind.BUF,
    "MUX": GateKind.MUX2,
    "MUX2": GateKind.MUX2,
    "CONST0": GateKind.CONST0,
    "CONST1": GateKind.CONST1,
    "GND": GateKind.CONST0,
    "VDD": GateKind.CONST1,
}

_WRITE_NAMES: dict[GateKind, str] = {
    GateKind.BUF: "BUFF",
    GateKind.MUX2: "MUX",
}


@dataclasses.dataclass
class _Token:
    kind: str
    text: str
    column: int


def _tokenize(line: str, lineno: int) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    while pos < len(line):
        if line[pos] == "#":
            break
        m = _TOKEN_RE.match(line, pos)
        if m is None:
            raise BenchSyntaxError(
                f"Unexpected character {line[pos]!r}", line=lineno, column=pos + 1
            )
        kind = m.lastgroup or ""
        if kind != "ws":
            tokens.append(_Token(kind, m.group(), pos + 1))
        pos = m.end()
    return tokens


class _LineParser:
    """Recursive-descent parser for one statement."""

    def __init__(self, tokens: list[_Token], lineno: int, line: str) -> None:
        self._tokens = tokens
        self._pos = 0
        self._lineno = lineno
        self._end = len(line.split("#", 1)[0].rstrip()) + 1

    def _peek(self) -> _Token | None:
        return self._tokens[self._pos] if self._pos < len(self._tokens) else None

    def _expect(self, kind: str, what: str) -> _Token:
        tok = self._peek()
        if tok is None or tok.kind != kind:
            column = tok.column if tok else self._end
            found = repr(tok.text) if tok else "end of line"
            raise BenchSyntaxError(
                f"Expected {what}, found {found}", line=self._lineno, column=column
            )
        self._pos += 1
        return tok

    def _done(self) -> None:
        tok = self._peek()
        if tok is not None:
            raise BenchSyntaxError(
                f"Unexpected {tok.text!r} after statement", line=self._lineno, column=tok.column
            )

    def statement(self) -> tuple[str, str, list[str], int]:
        """Return (kind, target, args, kind_column)."""
        head = self._expect("name", "a net name or INPUT/OUTPUT")
        nxt = self._peek()
        if head.text.upper() in ("INPUT", "OUTPUT") and nxt is not None and nxt.kind == "lpar":
            self._expect("lpar", "'('")
            net = self._expect("name", "a net name")
            self._expect("rpar", "')'")
            self._done()
            return head.text.upper(), net.text, [], head.column
        self._expect("eq", "'='")
        kind = self._expect("name", "a gate type")
        self._expect("lpar", "'('")
        args: list[str] = []
        tok = self._peek()
        if tok is not None and tok.kind == "name":
            args.append(self._expect("name", "a net name").text)
            while (tok := self._peek()) is not None and tok.kind == "comma":
                self._pos += 1
                args.append(self._expect("name", "a net name").text)
        self._expect("rpar", "')' or ','")
        self._done()
        return kind.text.upper(), head.text, args, kind.column


def parse_bench(text: str, *, key_prefix: str = "keyinput", name: str = "circuit") -> Netlist:
    """Parse `.bench` text into a canonical :class:`Netlist`."""
    inputs: list[str] = []
    outputs: list[tuple[str, int]] = []
    dffs: list[tuple[str, str, int]] = []
    gates: list[tuple[GateKind, str, list[str], int]] = []
    covert: list[tuple[str, str, int]] = []
    defined: dict[str, int] = {}

    def define(net: str, lineno: int) -> None:
        if net in defined:
            raise MultiDriverError(
                f"Net {net!r} defined on line {defined[net]} and again on line {lineno}",
                net=net,
            )
        defined[net] = lineno

    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if m := _COVERT_RE.match(stripped):
            covert.append((m.group(1), m.group(2), lineno))
            continue
        tokens = _tokenize(raw, lineno)
        if not tokens:
            continue
        kind, target, args, column = _LineParser(tokens, lineno, raw).statement()
        if kind == "INPUT":
            define(target, lineno)
            inputs.append(target)
        elif kind == "OUTPUT":
            outputs.append((target, lineno))
        elif kind == "DFF":
            if len(args) != 1:
                raise ArityError(f"DFF takes exactly one input, got {len(args)}", line=lineno)
            define(target, lineno)
            dffs.append((target, args[0], lineno))
        else:
            gate_kind = _KINDS.get(kind)
            if gate_kind is None:
                raise BenchSyntaxError(f"Unknown gate type {kind!r}", line=lineno, column=column)
            if not check_arity(gate_kind, len(args)):
                raise ArityError(
                    f"{gate_kind} gate {target!r} cannot take {len(args)} input(s)", line=lineno
                )
            define(target, lineno)
            gates.append((gate_kind, target, args, lineno))

    order = inputs + [q for q, _, _ in dffs] + [out for _, out, _, _ in gates]
    ids = {net: i for i, net in enumerate(order)}

    def ref(net: str, lineno: int) -> int:
        if net not in ids:
            raise UndefinedNetError(f"Net {net!r} on line {lineno} is never defined", net=net)
        return ids[net]

    key_set = {net for net in inputs if net.startswith(key_prefix)}
    netlist = Netlist(
        name=name,
        net_names=tuple(order),
        inputs=tuple(ids[n] for n in inputs if n not in key_set),
        outputs=tuple(ref(n, ln) for n, ln in outputs),
        key_inputs=tuple(ids[n] for n in inputs if n in key_set),
        flipflops=tuple(FlipFlop(ids[q], ref(d, ln)) for q, d, ln in dffs),
        gates=tuple(
            Gate(kind, tuple(ref(a, ln) for a in args), ids[out])
            for kind, out, args, ln in gates
        ),
        covert_fanin=tuple((ref(a, ln), ref(b, ln)) for a, b, ln in covert),
    )
    logger.debug(
        "Parsed %s: %d inputs, %d keys, %d outputs, %d FFs, %d gates",
        name, len(netlist.inputs), len(netlist.key_inputs), len(netlist.outputs),
        len(netlist.flipflops), len(netlist.gates),
    )
    return netlist


def serialize_bench(n: Netlist, *, keep_mux: bool = False) -> str:
    """Render ``n`` as `.bench` text.

    MUX2 gates are written as ``MUX(s, d0, d1)`` when ``keep_mux`` is set and
    expanded into NOT/AND/OR otherwise.
    """
    names = n.net_names
    taken = set(names)
    lines = [f"# {n.name}"]
    lines.append(
        f"# {len(n.inputs)} inputs, {len(n.key_inputs)} key inputs, {len(n.outputs)} outputs"
    )
    lines.append(f"# {len(n.flipflops)} D-type flipflops, {len(n.gates)} gates")
    lines.append("")
    for net in sorted(n.inputs + n.key_inputs):
        lines.append(f"INPUT({names[net]})")
    lines.append("")
    for net in n.outputs:
        lines.append(f"OUTPUT({names[net]})")
    lines.append("")
    for ff in n.flipflops:
        lines.append(f"{names[ff.q]} = DFF({names[ff.d]})")
    lines.append("")

    def fresh(base: str) -> str:
        name, i = base, 1
        while name in taken:
            name = f"{base}_{i}"
            i += 1
        taken.add(name)
        return name

    for gate in n.gates:
        out = names[gate.output]
        args = [names[i] for i in gate.inputs]
        if gate.kind is GateKind.MUX2 and not keep_mux:
            sel, d0, d1 = args
            ns, m0, m1 = fresh(f"{out}__ns"), fresh(f"{out}__m0"), fresh(f"{out}__m1")
            lines.append(f"{ns} = NOT({sel})")
            lines.append(f"{m0} = AND({ns}, {d0})")
            lines.append(f"{m1} = AND({sel}, {d1})")
            lines.append(f"{out} = OR({m0}, {m1})")
            continue
        kind = _WRITE_NAMES.get(gate.kind, str(gate.kind))
        lines.append(f"{out} = {kind}({', '.join(args)})")
    if n.covert_fanin:
        lines.append("")
        for dst, dummy in n.covert_fanin:
            lines.append(f"#@covert {names[dst]} <- {names[dummy]}")
    return "\n".join(lines) + "\n"


def sidecar_path_for(path: Path) -> Path:
    return path.with_suffix(".sidecar.json")


def load_sidecar(path: Path) -> NetlistSidecar:
    try:
        return NetlistSidecar.model_validate(json.loads(path.read_text()))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"Invalid sidecar {path}: {exc}") from exc


def load_netlist(
    path: str | Path,
    config: NetlistConfig | None = None,
    *,
    sidecar: str | Path | None = None,
) -> Netlist:
    """Load a `.bench` or KISS2 file, applying a sidecar when one exists."""
    config = config or NetlistConfig()
    file_path = Path(path).expanduser()
    try:
        text = file_path.read_text()
    except OSError as exc:
        raise ConfigError(f"Cannot read {file_path}: {exc}") from exc

    side_path = Path(sidecar).expanduser() if sidecar else sidecar_path_for(file_path)
    side = load_sidecar(side_path) if side_path.exists() else NetlistSidecar()
    if sidecar and not side_path.exists():
        raise ConfigError(f"Sidecar not found: {side_path}")

    if file_path.suffix.lower() in (".kiss", ".kiss2"):
        from dfssd.modules.kiss import parse_kiss

        netlist = parse_kiss(text, name=file_path.stem).to_netlist()
    else:
        netlist = parse_bench(
            text, key_prefix=side.key_prefix or config.key_prefix, name=file_path.stem
        )
    if side.ff_init:
        netlist = netlist.with_init(side.ff_init)
    return netlist


def write_netlist(n: Netlist, path: str | Path, *, keep_mux: bool = False) -> list[Path]:
    """Write ``n`` as `.bench`; non-zero flip-flop inits go to a sidecar."""
    out = Path(path).expanduser()
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(serialize_bench(n, keep_mux=keep_mux))
    written = [out]
    ff_init = {n.net_names[ff.q]: ff.init for ff in n.flipflops if ff.init}
    if ff_init:
        side = sidecar_path_for(out)
        side.write_text(json.dumps({"ff_init": ff_init}, indent=2) + "\n")
        written.append(side)
    return written

"""Cycle-accurate two-valued simulation and the black-box oracle.

Frame t's outputs are sampled combinationally from (state_t, input_t) and
state_{t+1} = D(state_t, input_t). Evaluation is word-parallel over a batch
axis with numpy, so many (key, stimulus) pairs run in one pass.
"""

from __future__ import annotations

import dataclasses
import logging
from collections.abc import Iterable, Iterator, Sequence

import numpy as np

from dfssd.exceptions import WidthMismatchError
from dfssd.modules.netlist import CombView, GateKind, Netlist, comb_view

logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class BitVector:
    """Fixed-width boolean vector; the first bit is the most significant."""

    bits: tuple[int, ...]

    def __post_init__(self) -> None:
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError(f"BitVector bits must be 0/1: {self.bits}")

    @classmethod
    def from_str(cls, text: str) -> BitVector:
        text = text.strip()
        if any(c not in "01" for c in text):
            raise ValueError(f"Not a bit string: {text!r}")
        return cls(tuple(int(c) for c in text))

    @classmethod
    def from_int(cls, value: int, width: int) -> BitVector:
        if value < 0 or value >= (1 << width) and width > 0 or (width == 0 and value):
            raise ValueError(f"{value} does not fit in {width} bit(s)")
        return cls(tuple((value >> (width - 1 - i)) & 1 for i in range(width)))

    @classmethod
    def from_bits(cls, bits: Iterable[int | bool | np.bool_]) -> BitVector:
        return cls(tuple(int(bool(b)) for b in bits))

    @classmethod
    def zeros(cls, width: int) -> BitVector:
        return cls((0,) * width)

    @classmethod
    def ones(cls, width: int) -> BitVector:
        return cls((1,) * width)

    @property
    def width(self) -> int:
        return len(self.bits)

    def __len__(self) -> int:
        return len(self.bits)

    def __getitem__(self, index: int) -> int:
        if not -self.width <= index < self.width:
            raise IndexError(f"Bit {index} out of range for width {self.width}")
        return self.bits[index]

    def __iter__(self) -> Iterator[int]:
        return iter(self.bits)

    def __add__(self, other: BitVector) -> BitVector:
        return BitVector(self.bits + other.bits)

    def __str__(self) -> str:
        return "".join(str(b) for b in self.bits)

    def to_int(self) -> int:
        value = 0
        for b in self.bits:
            value = (value << 1) | b
        return value

    def hamming(self, other: BitVector) -> int:
        if other.width != self.width:
            raise WidthMismatchError("Hamming distance", expected=self.width, actual=other.width)
        return sum(a != b for a, b in zip(self.bits, other.bits))


@dataclasses.dataclass(frozen=True)
class FrameSequence:
    """Ordered frames of equal width (an input or an output sequence)."""

    width: int
    frames: tuple[BitVector, ...] = ()

    def __post_init__(self) -> None:
        for frame in self.frames:
            if frame.width != self.width:
                raise WidthMismatchError("Frame width", expected=self.width, actual=frame.width)

    @classmethod
    def from_strings(cls, lines: Sequence[str], width: int | None = None) -> FrameSequence:
        frames = tuple(BitVector.from_str(line) for line in lines)
        if width is None:
            width = frames[0].width if frames else 0
        return cls(width, frames)

    @classmethod
    def from_array(cls, array: np.ndarray) -> FrameSequence:
        arr = np.asarray(array, dtype=bool)
        return cls(arr.shape[1], tuple(BitVector.from_bits(row) for row in arr))

    def to_array(self) -> np.ndarray:
        if not self.frames:
            return np.zeros((0, self.width), dtype=bool)
        return np.array([f.bits for f in self.frames], dtype=bool).reshape(len(self), self.width)

    def prefix(self, length: int) -> FrameSequence:
        return FrameSequence(self.width, self.frames[:length])

    def __len__(self) -> int:
        return len(self.frames)

    def __getitem__(self, index: int) -> BitVector:
        return self.frames[index]

    def __iter__(self) -> Iterator[BitVector]:
        return iter(self.frames)

    def __str__(self) -> str:
        return "\n".join(str(f) for f in self.frames)


InputSequence = FrameSequence
OutputSequence = FrameSequence


def read_stimulus(text: str, width: int) -> FrameSequence:
    """Parse one frame of 0/1 characters per line; ``#`` starts a comment."""
    lines = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].replace(" ", "").strip()
        if width == 0 and line == "-":
            lines.append("")
        elif line:
            lines.append(line)
    return FrameSequence.from_strings(lines, width=width)


def random_sequence(rng: np.random.Generator, width: int, length: int) -> FrameSequence:
    return FrameSequence.from_array(rng.integers(0, 2, size=(length, width)).astype(bool))


class CombEvaluator:
    """Evaluates a :class:`CombView` over a batch of source assignments."""

    def __init__(self, view: CombView) -> None:
        self.view = view
        n = view.netlist
        self.num_nets = n.num_nets
        self.sources = np.array(view.sources, dtype=np.intp)
        self._ops = [
            (gate.kind, gate.output, np.array(gate.inputs, dtype=np.intp))
            for gate in view.ordered_gates()
        ]

    def evaluate(self, sources: np.ndarray) -> np.ndarray:
        """``sources`` has shape (len(view.sources), B); returns all nets (num_nets, B)."""
        batch = sources.shape[1]
        values = np.zeros((self.num_nets, batch), dtype=bool)
        if len(self.sources):
            values[self.sources] = sources
        for kind, out, ins in self._ops:
            if kind is GateKind.AND or kind is GateKind.NAND:
                r = np.logical_and.reduce(values[ins], axis=0)
            elif kind is GateKind.OR or kind is GateKind.NOR:
                r = np.logical_or.reduce(values[ins], axis=0)
            elif kind is GateKind.XOR or kind is GateKind.XNOR:
                r = np.logical_xor.reduce(values[ins], axis=0)
            elif kind is GateKind.NOT:
                values[out] = ~values[ins[0]]
                continue
            elif kind is GateKind.BUF:
                values[out] = values[ins[0]]
                continue
            elif kind is GateKind.MUX2:
                values[out] = np.where(values[ins[0]], values[ins[2]], values[ins[1]])
                continue
            else:
                values[out] = kind is GateKind.CONST1
                continue
            if kind in (GateKind.NAND, GateKind.NOR, GateKind.XNOR):
                r = ~r
            values[out] = r
        return values


class Machine:
    """Batched one-clock step function of a netlist."""

    def __init__(self, n: Netlist) -> None:
        self.netlist = n
        self.evaluator = CombEvaluator(comb_view(n))
        self.outputs = np.array(n.outputs, dtype=np.intp)
        self.next_state = np.array([ff.d for ff in n.flipflops], dtype=np.intp)
        self.init = np.array(n.init_state, dtype=bool)

    @property
    def num_inputs(self) -> int:
        return len(self.netlist.inputs)

    @property
    def num_keys(self) -> int:
        return len(self.netlist.key_inputs)

    @property
    def num_state(self) -> int:
        return len(self.netlist.flipflops)

    def step(
        self, state: np.ndarray, inputs: np.ndarray, keys: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """Arrays are (width, B). Returns (outputs, next_state)."""
        values = self.evaluator.evaluate(np.concatenate([inputs, keys, state], axis=0))
        return values[self.outputs], values[self.next_state]

    def initial(self, batch: int) -> np.ndarray:
        return np.repeat(self.init[:, None], batch, axis=1)


def simulate_batch(
    n: Netlist | Machine,
    keys: np.ndarray,
    stimuli: np.ndarray,
    *,
    init: np.ndarray | None = None,
) -> np.ndarray:
    """Simulate B runs at once.

    Args:
        keys: (B, |K|) bool.
        stimuli: (B, T, |X|) bool.
        init: optional (B, |FF|) start states; defaults to the reset state.

    Returns:
        (B, T, |Y|) bool outputs.
    """
    machine = n if isinstance(n, Machine) else Machine(n)
    stimuli = np.asarray(stimuli, dtype=bool)
    keys = np.asarray(keys, dtype=bool)
    batch, length = stimuli.shape[0], stimuli.shape[1]
    if stimuli.shape[2] != machine.num_inputs:
        raise WidthMismatchError(
            "Input frame", expected=machine.num_inputs, actual=stimuli.shape[2]
        )
    if keys.shape != (batch, machine.num_keys):
        raise WidthMismatchError(
            "Key", expected=machine.num_keys, actual=keys.shape[1] if keys.ndim == 2 else 0
        )
    state = machine.initial(batch) if init is None else np.asarray(init, dtype=bool).T.copy()
    out = np.zeros((batch, length, len(machine.outputs)), dtype=bool)
    key_t = keys.T
    for t in range(length):
        y, state = machine.step(state, stimuli[:, t, :].T, key_t)
        out[:, t, :] = y.T
    return out


def simulate(n: Netlist, key: BitVector, seq: FrameSequence) -> FrameSequence:
    """Simulate one input sequence from the reset state."""
    if key.width != len(n.key_inputs):
        raise WidthMismatchError("Key", expected=len(n.key_inputs), actual=key.width)
    if seq.width != len(n.inputs):
        raise WidthMismatchError("Input frame", expected=len(n.inputs), actual=seq.width)
    if not len(seq):
        return FrameSequence(len(n.outputs))
    out = simulate_batch(
        n, np.array([key.bits], dtype=bool).reshape(1, key.width), seq.to_array()[None, :, :]
    )
    return FrameSequence.from_array(out[0])


class OracleHandle:
    """Black-box access to an activated circuit.

    Only :meth:`query` and :meth:`reset` are meant for attack code; the key is
    held in a name-mangled attribute and has no accessor.
    """

    def __init__(self, netlist: Netlist, key: BitVector) -> None:
        if key.width != len(netlist.key_inputs):
            raise WidthMismatchError(
                "Oracle key", expected=len(netlist.key_inputs), actual=key.width
            )
        self.__machine = Machine(netlist)
        self.__key = np.array(key.bits, dtype=bool).reshape(1, key.width)
        self.__state = self.__machine.initial(1)
        self.input_width = len(netlist.inputs)
        self.output_width = len(netlist.outputs)
        self.queries = 0

    @property
    def current_state(self) -> BitVector:
        return BitVector.from_bits(self.__state[:, 0])

    def reset(self) -> None:
        self.__state = self.__machine.initial(1)

    def query(self, seq: FrameSequence) -> FrameSequence:
        """Apply ``seq`` from the reset state and return the observed outputs."""
        if seq.width != self.input_width:
            raise WidthMismatchError("Oracle query", expected=self.input_width, actual=seq.width)
        self.reset()
        self.queries += 1
        outputs = []
        key_t = self.__key.T
        for frame in seq:
            y, self.__state = self.__machine.step(
                self.__state, np.array(frame.bits, dtype=bool).reshape(-1, 1), key_t
            )
            outputs.append(BitVector.from_bits(y[:, 0]))
        return FrameSequence(self.output_width, tuple(outputs))


def oracle_query(h: OracleHandle, seq: FrameSequence) -> FrameSequence:
    return h.query(seq)

"""Tests for bit vectors, frame sequences, simulation and the oracle."""

import numpy as np
import pytest

from dfssd.exceptions import WidthMismatchError
from dfssd.modules.bench import parse_bench
from dfssd.modules.simulator import (
    BitVector,
    FrameSequence,
    Machine,
    OracleHandle,
    oracle_query,
    random_sequence,
    read_stimulus,
    simulate,
    simulate_batch,
)

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


class TestBitVector:
    def test_msb_first(self):
        v = BitVector.from_str("1011")
        assert v.to_int() == 11
        assert BitVector.from_int(11, 4) == v
        assert str(v) == "1011"
        assert v[0] == 1 and v[-1] == 1

    def test_invalid(self):
        with pytest.raises(ValueError):
            BitVector.from_str("10x")
        with pytest.raises(ValueError):
            BitVector.from_int(4, 2)
        with pytest.raises(ValueError):
            BitVector((2,))

    def test_empty(self):
        assert BitVector.from_int(0, 0).width == 0
        assert BitVector.from_str("").to_int() == 0

    def test_concat_and_hamming(self):
        v = BitVector.from_str("10") + BitVector.from_str("01")
        assert str(v) == "1001"
        assert v.hamming(BitVector.ones(4)) == 2
        with pytest.raises(WidthMismatchError):
            v.hamming(BitVector.zeros(3))

    def test_index_out_of_range(self):
        with pytest.raises(IndexError):
            BitVector.zeros(2)[2]


class TestFrameSequence:
    def test_from_strings(self):
        seq = FrameSequence.from_strings(["01", "11"])
        assert seq.width == 2
        assert len(seq) == 2
        assert str(seq.prefix(1)) == "01"

    def test_width_mismatch(self):
        with pytest.raises(WidthMismatchError):
            FrameSequence.from_strings(["01", "1"])

    def test_array_shape(self):
        seq = FrameSequence.from_strings(["01", "11", "00"])
        arr = seq.to_array()
        assert arr.shape == (3, 2)
        assert FrameSequence.from_array(arr) == seq
        assert FrameSequence(4).to_array().shape == (0, 4)

    def test_read_stimulus(self):
        seq = read_stimulus("# header\n0 1\n11  # second\n\n", 2)
        assert [str(f) for f in seq] == ["01", "11"]

    def test_read_stimulus_zero_width(self):
        assert len(read_stimulus("-\n-\n", 0)) == 2

    def test_random_sequence(self):
        seq = random_sequence(np.random.default_rng(0), 3, 5)
        assert seq.width == 3 and len(seq) == 5


class TestSimulate:
    def test_detector(self, detector):
        out = simulate(detector, BitVector(()), FrameSequence.from_strings(["0", "1", "1"]))
        assert str(out) == "0\n0\n1"

    def test_detector_needs_leading_zero(self, detector):
        out = simulate(detector, BitVector(()), FrameSequence.from_strings(["1", "1", "1"]))
        assert str(out) == "0\n0\n0"

    def test_locked_key_matters(self, locked):
        seq = FrameSequence.from_strings(["11", "11"])
        assert str(simulate(locked, BitVector.from_str("0"), seq)) == "1\n0"
        assert str(simulate(locked, BitVector.from_str("1"), seq)) == "1\n1"

    def test_empty_sequence(self, detector):
        out = simulate(detector, BitVector(()), FrameSequence(1))
        assert out.width == 1 and len(out) == 0

    def test_width_errors(self, locked):
        with pytest.raises(WidthMismatchError):
            simulate(locked, BitVector.from_str("01"), FrameSequence.from_strings(["11"]))
        with pytest.raises(WidthMismatchError):
            simulate(locked, BitVector.from_str("0"), FrameSequence.from_strings(["1"]))

    def test_initial_state_honoured(self, detector):
        started = detector.with_init({"S0": 1})
        out = simulate(started, BitVector(()), FrameSequence.from_strings(["1", "1"]))
        assert str(out) == "0\n1"


class TestSimulateBatch:
    def test_matches_single_runs(self, s27):
        rng = np.random.default_rng(7)
        stimuli = rng.integers(0, 2, size=(8, 12, 4)).astype(bool)
        batch = simulate_batch(s27, np.zeros((8, 0), dtype=bool), stimuli)
        assert batch.shape == (8, 12, 1)
        for b in range(8):
            single = simulate(s27, BitVector(()), FrameSequence.from_array(stimuli[b]))
            assert np.array_equal(single.to_array(), batch[b])

    def test_per_run_keys(self, locked):
        stimuli = np.ones((2, 2, 2), dtype=bool)
        keys = np.array([[False], [True]])
        out = simulate_batch(Machine(locked), keys, stimuli)
        assert out[:, 1, 0].tolist() == [False, True]

    def test_explicit_init(self, detector):
        stimuli = np.ones((2, 1, 1), dtype=bool)
        init = np.array([[0, 0], [1, 0]], dtype=bool)
        out = simulate_batch(detector, np.zeros((2, 0), dtype=bool), stimuli, init=init)
        assert out[:, 0, 0].tolist() == [False, True]

    def test_key_shape_checked(self, locked):
        with pytest.raises(WidthMismatchError):
            simulate_batch(locked, np.zeros((1, 2), dtype=bool), np.ones((1, 1, 2), dtype=bool))


class TestOracleHandle:
    def test_query_resets(self, locked):
        oracle = OracleHandle(locked, BitVector.from_str("0"))
        seq = FrameSequence.from_strings(["11", "11"])
        first = oracle.query(seq)
        second = oracle_query(oracle, seq)
        assert first == second
        assert oracle.queries == 2

    def test_state_after_query(self, detector):
        oracle = OracleHandle(detector, BitVector(()))
        oracle.query(FrameSequence.from_strings(["0", "1"]))
        assert str(oracle.current_state) == "10"
        oracle.reset()
        assert str(oracle.current_state) == "00"

    def test_key_hidden(self, locked):
        oracle = OracleHandle(locked, BitVector.from_str("1"))
        assert not any("key" in name for name in vars(oracle) if not name.startswith("_"))

    def test_widths(self, locked):
        with pytest.raises(WidthMismatchError):
            OracleHandle(locked, BitVector(()))
        oracle = OracleHandle(locked, BitVector.from_str("1"))
        assert (oracle.input_width, oracle.output_width) == (2, 1)
        with pytest.raises(WidthMismatchError):
            oracle.query(FrameSequence.from_strings(["1"]))

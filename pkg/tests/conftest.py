"""Shared test fixtures."""

import random
from pathlib import Path

import pytest

from dfssd.config import AppConfig, AttackConfig
from dfssd.modules.bench import load_netlist, parse_bench
from dfssd.modules.kiss import FsmRow, FsmTable
from dfssd.services.store import ResultStore

CIRCUITS = Path(__file__).resolve().parent.parent / "circuits"


@pytest.fixture
def circuits_dir():
    return CIRCUITS


@pytest.fixture
def detector():
    """The "011" sequence detector: two flip-flops, states 00/01/10 reachable."""
    return load_netlist(CIRCUITS / "detector011.bench")


@pytest.fixture
def fsm5():
    """Five reachable states out of eight encodings (011, 101, 111 unused)."""
    return load_netlist(CIRCUITS / "fsm5.kiss")


@pytest.fixture
def traffic():
    return load_netlist(CIRCUITS / "traffic.kiss")


@pytest.fixture
def s27():
    return load_netlist(CIRCUITS / "s27.bench")


@pytest.fixture
def key_free_lock():
    """Combinational circuit whose key input has no effect on the output."""
    return parse_bench(
        "INPUT(a)\nINPUT(keyinput0)\nOUTPUT(y)\n"
        "kn = NOT(keyinput0)\nz = AND(keyinput0, kn)\ny = OR(a, z)\n",
        name="keyfree",
    )


@pytest.fixture
def random_fsm():
    """Factory for random single-input FSMs with at least one unused encoding."""

    def make(seed, num_states=5, num_outputs=1):
        rng = random.Random(seed)
        width = max(1, (num_states - 1).bit_length()) + 1
        names = [format(i, f"0{width}b") for i in range(num_states)]
        rows = []
        for state in names:
            for bit in "01":
                outputs = "".join(rng.choice("01") for _ in range(num_outputs))
                rows.append(FsmRow(bit, state, rng.choice(names), outputs))
        table = FsmTable(f"rand{seed}", 1, num_outputs, tuple(rows), names[0])
        return table.to_netlist()

    return make


@pytest.fixture
def sample_config(tmp_path):
    """AppConfig with temporary bench paths."""
    return AppConfig.model_validate({
        "bench": {
            "output_dir": str(tmp_path / "bench"),
            "db_path": str(tmp_path / "bench.db"),
            "lock_path": str(tmp_path / "bench.lock"),
        },
        "attack": {"boundary_step": 1, "time_budget_sec": 120},
    })


@pytest.fixture
def fast_attack():
    """Attack settings that grow the unrolling one frame at a time."""
    return AttackConfig(initial_boundary=1, boundary_step=1, time_budget_sec=120)


@pytest.fixture
def memory_store():
    """In-memory SQLite ResultStore."""
    store = ResultStore.from_path(":memory:")
    yield store
    store.close()

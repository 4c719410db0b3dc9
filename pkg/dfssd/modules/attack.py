"""Oracle-guided sequential SAT attack with an unbounded termination ladder.

The outer loop unrolls the locked netlist to boundary ``b`` for two key
instances sharing their inputs and drains every discriminating input
sequence (DIS) visible within ``b`` frames, pinning both instances to the
oracle's answer each time. When none is left, the key uniqueness (UC),
combinational equivalence (CE) and unbounded model checking (UMC) checks
run in that order; if none terminates, ``b`` grows by ``boundary_step``.
"""

from __future__ import annotations

import dataclasses
import enum
import logging
import time
from collections import defaultdict

import numpy as np

from dfssd.config import AttackConfig, ReachConfig, SolverConfig
from dfssd.exceptions import AttackError, StateSpaceError
from dfssd.hooks import BoundaryEvent, DisEvent, HookRunner, LoggingHook, TerminationEvent
from dfssd.modules.cnf import (
    SatContext,
    UnrolledModel,
    differ_literal,
    encode_frame,
    match_literals,
    unroll_free,
)
from dfssd.modules.netlist import Netlist
from dfssd.modules.reachability import bits_of, check_equivalence
from dfssd.modules.simulator import (
    BitVector,
    FrameSequence,
    Machine,
    OracleHandle,
    simulate,
    simulate_batch,
)
from dfssd.modules.solver import SatOutcome, SatStatus

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class Termination(enum.StrEnum):
    UC = "UC"
    CE = "CE"
    UMC = "UMC"
    TIMEOUT = "Timeout"
    INCONCLUSIVE = "Inconclusive"

    @property
    def success(self) -> bool:
        return self in (Termination.UC, Termination.CE, Termination.UMC)


class CheckStatus(enum.StrEnum):
    TERMINATE = "terminate"
    FAIL = "fail"
    UNKNOWN = "unknown"


@dataclasses.dataclass(frozen=True)
class DisTrace:
    seq: FrameSequence
    oracle_out: FrameSequence
    found_at_boundary: int
    iteration: int

    @property
    def length(self) -> int:
        return len(self.seq)

    def to_dict(self) -> dict[str, object]:
        return {
            "iteration": self.iteration,
            "boundary": self.found_at_boundary,
            "length": self.length,
            "inputs": [str(f) for f in self.seq],
            "outputs": [str(f) for f in self.oracle_out],
        }


@dataclasses.dataclass(frozen=True)
class KeyClass:
    """Keys consistent with every recorded DIS.

    ``members`` holds all of them when ``complete``; otherwise a prefix.
    ``count`` is None when the class was not fully counted.
    """

    members: tuple[BitVector, ...]
    count: int | None
    complete: bool

    def to_dict(self, sample: int = 16) -> dict[str, object]:
        return {
            "count": self.count,
            "complete": self.complete,
            "sample": [str(k) for k in self.members[:sample]],
        }


@dataclasses.dataclass(frozen=True)
class CheckOutcome:
    check: str
    status: CheckStatus
    key: BitVector | None = None
    witnesses: tuple[BitVector, BitVector] | None = None
    key_class: KeyClass | None = None
    detail: str = ""

    @property
    def terminated(self) -> bool:
        return self.status is CheckStatus.TERMINATE


UcOutcome = CheckOutcome
CeOutcome = CheckOutcome
UmcOutcome = CheckOutcome


@dataclasses.dataclass(frozen=True)
class AttackReport:
    circuit: str
    termination: Termination
    dis_log: tuple[DisTrace, ...]
    key_class: KeyClass | None
    timing: dict[str, float]
    final_boundary: int

    @property
    def iterations(self) -> int:
        return len(self.dis_log)

    @property
    def key(self) -> BitVector | None:
        """The recovered key when exactly one remains."""
        if self.key_class is not None and self.key_class.count == 1:
            return self.key_class.members[0]
        return None

    @property
    def last_dis(self) -> DisTrace | None:
        return self.dis_log[-1] if self.dis_log else None

    @property
    def max_dis_length(self) -> int:
        return max((d.length for d in self.dis_log), default=0)

    def to_dict(self) -> dict[str, object]:
        last = self.last_dis
        return {
            "schema": SCHEMA_VERSION,
            "circuit": self.circuit,
            "termination": str(self.termination),
            "final_boundary": self.final_boundary,
            "iterations": self.iterations,
            "last_dis": {"D": last.iteration, "S": last.length} if last else None,
            "key": str(self.key) if self.key is not None else None,
            "key_class": self.key_class.to_dict() if self.key_class else None,
            "timing": {k: round(v, 6) for k, v in self.timing.items()},
            "dis_log": [d.to_dict() for d in self.dis_log],
        }


class AttackSession:
    """One attack run over a single incremental solver context."""

    def __init__(
        self,
        locked: Netlist,
        oracle: OracleHandle,
        config: AttackConfig | None = None,
        *,
        solver: SolverConfig | None = None,
        reach: ReachConfig | None = None,
        hooks: HookRunner | None = None,
    ) -> None:
        if oracle.input_width != len(locked.inputs):
            raise AttackError(
                f"Oracle takes {oracle.input_width} input(s), "
                f"{locked.name} has {len(locked.inputs)}"
            )
        if oracle.output_width != len(locked.outputs):
            raise AttackError(
                f"Oracle gives {oracle.output_width} output(s), "
                f"{locked.name} has {len(locked.outputs)}"
            )
        self.locked = locked
        self.oracle = oracle
        self.config = config or AttackConfig()
        solver = solver or SolverConfig()
        if self.config.conflict_budget is not None:
            solver = solver.model_copy(update={"conflict_budget": self.config.conflict_budget})
        self.reach = reach or ReachConfig()
        self.hooks = hooks if hooks is not None else HookRunner([LoggingHook()])
        self.model = UnrolledModel(locked, instances=2)
        self.ctx = SatContext(self.model.formula, config=solver)
        self.dis_log: list[DisTrace] = []
        self.timing: dict[str, float] = defaultdict(float)
        self.boundary = self.config.initial_boundary
        self._machine = Machine(locked)
        self._uc_act: int | None = None
        self._ce_act: int | None = None
        self._start = time.monotonic()
        self._deadline = self._start + self.config.time_budget_sec

    # -- helpers -----------------------------------------------------------

    @property
    def elapsed(self) -> float:
        return time.monotonic() - self._start

    def _remaining(self) -> float:
        return self._deadline - time.monotonic()

    def _solve(self, assumptions: list[int], phase: str) -> SatOutcome:
        t0 = time.monotonic()
        outcome = self.ctx.solve(assumptions, time_budget=self._remaining())
        self.timing[phase] += time.monotonic() - t0
        return outcome

    @property
    def _keys1(self) -> list[int]:
        return self.model.keys["k1"]

    @property
    def _keys2(self) -> list[int]:
        return self.model.keys["k2"]

    def is_consistent(self, key: BitVector) -> bool:
        """Whether ``key`` reproduces the oracle on every recorded DIS."""
        return all(
            simulate(self.locked, key, dis.seq).frames == dis.oracle_out.frames
            for dis in self.dis_log
        )

    # -- DIS loop ----------------------------------------------------------

    def _record_dis(self, outcome: SatOutcome) -> DisTrace:
        m = self.model
        length = m.frames
        for t in range(m.frames):
            y1 = [outcome.lit(v) for v in m.outputs["k1"][t]]
            y2 = [outcome.lit(v) for v in m.outputs["k2"][t]]
            if y1 != y2:
                length = t + 1
                break
        seq = m.read_inputs(outcome, length)
        t0 = time.monotonic()
        out = self.oracle.query(seq)
        self.timing["oracle"] += time.monotonic() - t0
        m.add_io_constraint(seq, out)
        dis = DisTrace(seq, out, self.boundary, len(self.dis_log) + 1)
        self.dis_log.append(dis)
        self.hooks.fire_dis(DisEvent(dis.iteration, self.boundary, dis.length, self.elapsed))
        return dis

    def drain_boundary(self) -> bool:
        """Record DISes at the current boundary until none is left.

        Returns False when the solver gave up (budget).
        """
        self.model.extend(self.boundary)
        act = self.model.add_difference_assertion()
        while True:
            outcome = self._solve([act], "bmc")
            if outcome.is_unsat:
                break
            if outcome.status is SatStatus.UNKNOWN:
                return False
            self._record_dis(outcome)
        self.model.formula.add_clause([-act])
        self.hooks.fire_boundary(
            BoundaryEvent(self.boundary, len(self.dis_log), self.elapsed)
        )
        return True

    # -- key classes -------------------------------------------------------

    def consistent_keys(self, limit: int | None = None) -> KeyClass:
        """Keys consistent with all recorded DISes, up to ``limit`` members."""
        limit = limit or self.config.max_key_class
        width = len(self.locked.key_inputs)
        if width <= self.config.explicit_key_bits:
            return self._keys_by_simulation(width, limit)
        return self._keys_by_sat(limit)

    def _keys_by_simulation(self, width: int, limit: int) -> KeyClass:
        candidates = bits_of(np.arange(1 << width, dtype=np.int64), width).T
        alive = np.ones(len(candidates), dtype=bool)
        for dis in self.dis_log:
            idx = np.flatnonzero(alive)
            if not idx.size:
                break
            shape = (idx.size, dis.length, dis.seq.width)
            stimuli = np.broadcast_to(dis.seq.to_array()[None], shape)
            out = simulate_batch(self._machine, candidates[idx], stimuli)
            ok = (out == dis.oracle_out.to_array()[None]).all(axis=(1, 2))
            alive[idx[~ok]] = False
        codes = np.flatnonzero(alive)
        members = tuple(BitVector.from_int(int(c), width) for c in codes[:limit])
        return KeyClass(members, int(codes.size), codes.size <= limit)

    def _keys_by_sat(self, limit: int) -> KeyClass:
        f = self.model.formula
        act = f.new_var()
        found: list[BitVector] = []
        complete = False
        while len(found) <= limit:
            outcome = self._solve([act], "enum")
            if outcome.is_unsat:
                complete = True
                break
            if not outcome.is_sat:
                break
            key = self.model.read_key(outcome, "k1")
            found.append(key)
            f.add_clause([-act, *(-lit for lit in match_literals(self._keys1, key.bits))])
        f.add_clause([-act])
        return KeyClass(tuple(found[:limit]), len(found) if complete else None, complete)

    # -- termination ladder ------------------------------------------------

    def check_uc(self) -> UcOutcome:
        """Is the consistent key unique?"""
        if self._uc_act is None:
            differ = differ_literal(self.model.formula, self._keys1, self._keys2)
            if differ is None:
                empty = BitVector(())
                return CheckOutcome(
                    "UC", CheckStatus.TERMINATE, empty, key_class=KeyClass((empty,), 1, True)
                )
            self._uc_act = self.model.formula.new_var()
            self.model.formula.add_clause([-self._uc_act, differ])
        outcome = self._solve([self._uc_act], "uc")
        if outcome.is_sat:
            pair = (self.model.read_key(outcome, "k1"), self.model.read_key(outcome, "k2"))
            return CheckOutcome("UC", CheckStatus.FAIL, witnesses=pair)
        if not outcome.is_unsat:
            return CheckOutcome("UC", CheckStatus.UNKNOWN, detail="budget")
        model = self._solve([], "uc")
        if not model.is_sat:
            return CheckOutcome("UC", CheckStatus.UNKNOWN, detail="no consistent key")
        key = self.model.read_key(model, "k1")
        return CheckOutcome("UC", CheckStatus.TERMINATE, key, key_class=KeyClass((key,), 1, True))

    def check_ce(self) -> CeOutcome:
        """Do all consistent keys agree on outputs and next state from any state?"""
        if self._ce_act is None:
            f = self.model.formula
            view = self.model.view
            n = self.locked
            xs = [f.new_var() for _ in n.inputs]
            ss = [f.new_var() for _ in n.flipflops]
            y1, d1, _ = encode_frame(f, view, xs, self._keys1, ss, instance="ce1")
            y2, d2, _ = encode_frame(f, view, xs, self._keys2, ss, instance="ce2")
            differ = differ_literal(f, [*y1, *d1], [*y2, *d2])  # type: ignore[list-item]
            self._ce_act = f.new_var()
            f.add_clause([-self._ce_act, differ] if differ is not None else [-self._ce_act])
        outcome = self._solve([self._ce_act], "ce")
        if outcome.is_sat:
            pair = (self.model.read_key(outcome, "k1"), self.model.read_key(outcome, "k2"))
            return CheckOutcome("CE", CheckStatus.FAIL, witnesses=pair)
        if not outcome.is_unsat:
            return CheckOutcome("CE", CheckStatus.UNKNOWN, detail="budget")
        return CheckOutcome("CE", CheckStatus.TERMINATE, key_class=self.consistent_keys())

    def umc_mode(self) -> str:
        mode = self.config.umc_mode
        if mode == "auto":
            wide = 2 * self.locked.state_width > self.reach.explicit_ff_limit
            return "induction" if wide else "explicit"
        return mode

    def check_umc(self, mode: str | None = None) -> UmcOutcome:
        """Can any pair of consistent keys ever be told apart?"""
        mode = mode or self.umc_mode()
        t0 = time.monotonic()
        try:
            if mode == "off":
                return CheckOutcome("UMC", CheckStatus.UNKNOWN, detail="disabled")
            if mode == "explicit":
                return self._umc_explicit()
            return self._umc_induction()
        finally:
            self.timing["umc"] += time.monotonic() - t0

    def _umc_explicit(self) -> UmcOutcome:
        keys = self.consistent_keys()
        if not keys.complete or not keys.members:
            return CheckOutcome("UMC", CheckStatus.UNKNOWN, detail="key class not enumerable")
        rep = keys.members[0]
        for other in keys.members[1:]:
            if self._remaining() <= 0:
                return CheckOutcome("UMC", CheckStatus.UNKNOWN, detail="time budget")
            try:
                result = check_equivalence(self.locked, rep, self.locked, other, config=self.reach)
            except StateSpaceError as exc:
                return CheckOutcome("UMC", CheckStatus.UNKNOWN, detail=str(exc))
            if not result.equivalent:
                return CheckOutcome(
                    "UMC", CheckStatus.FAIL, witnesses=(rep, other),
                    detail=f"keys diverge at cycle {result.first_divergence}",
                )
        return CheckOutcome("UMC", CheckStatus.TERMINATE, key_class=keys)

    def _umc_induction(self) -> UmcOutcome:
        """k-induction on "outputs equal" over the product machine, k = boundary.

        The base case is the drained BMC at the same boundary.
        """
        f = self.model.formula
        k = self.boundary
        view = self.model.view
        a = unroll_free(f, view, k + 1, self._keys1, instance=f"umc{k}.a")
        b = unroll_free(f, view, k + 1, self._keys2, instance=f"umc{k}.b", inputs=a.inputs)
        act = f.new_var()
        for t in range(k + 1):
            d = differ_literal(f, a.outputs[t], b.outputs[t])
            if d is None:
                f.add_clause([-act])
                break
            f.add_clause([-act, d] if t == k else [-act, -d])
        for i in range(k + 1):
            for j in range(i + 1, k + 1):
                d = differ_literal(f, a.states[i] + b.states[i], a.states[j] + b.states[j])
                if d is not None:
                    f.add_clause([-act, d])
        outcome = self._solve([act], "umc")
        f.add_clause([-act])
        if outcome.is_unsat:
            return CheckOutcome("UMC", CheckStatus.TERMINATE, key_class=self.consistent_keys())
        if outcome.is_sat:
            return CheckOutcome("UMC", CheckStatus.FAIL, detail=f"{k}-induction step fails")
        return CheckOutcome("UMC", CheckStatus.UNKNOWN, detail="budget")

    # -- outer loop --------------------------------------------------------

    def _report(self, termination: Termination, key_class: KeyClass | None) -> AttackReport:
        self.timing["total"] = self.elapsed
        report = AttackReport(
            circuit=self.locked.name,
            termination=termination,
            dis_log=tuple(self.dis_log),
            key_class=key_class,
            timing=dict(self.timing),
            final_boundary=self.boundary,
        )
        self.hooks.fire_termination(
            TerminationEvent(
                str(termination), self.boundary, report.iterations, self.elapsed,
                key_class.count if key_class else None,
            )
        )
        return report

    def _out_of_budget(self) -> AttackReport:
        if self._remaining() <= 0:
            return self._report(Termination.TIMEOUT, None)
        return self._report(Termination.INCONCLUSIVE, None)

    def run(self) -> AttackReport:
        if not self.locked.key_inputs:
            empty = BitVector(())
            return self._report(Termination.UC, KeyClass((empty,), 1, True))
        cfg = self.config
        while True:
            if cfg.max_boundary is not None and self.boundary > cfg.max_boundary:
                self.boundary -= cfg.boundary_step
                return self._report(Termination.INCONCLUSIVE, None)
            if not self.drain_boundary():
                return self._out_of_budget()
            for check in (self.check_uc, self.check_ce, self.check_umc):
                outcome = check()
                logger.debug("%s at boundary %d: %s", outcome.check, self.boundary, outcome.status)
                if outcome.terminated:
                    return self._report(Termination(outcome.check), outcome.key_class)
                if self._remaining() <= 0:
                    return self._report(Termination.TIMEOUT, None)
            self.boundary += cfg.boundary_step


def run_attack(
    locked: Netlist,
    oracle: OracleHandle,
    cfg: AttackConfig | None = None,
    *,
    solver: SolverConfig | None = None,
    reach: ReachConfig | None = None,
    hooks: HookRunner | None = None,
) -> AttackReport:
    session = AttackSession(locked, oracle, cfg, solver=solver, reach=reach, hooks=hooks)
    return session.run()


def check_uc(session: AttackSession) -> UcOutcome:
    return session.check_uc()


def check_ce(session: AttackSession) -> CeOutcome:
    return session.check_ce()


def check_umc(session: AttackSession, mode: str | None = None) -> UmcOutcome:
    return session.check_umc(mode)

"""Incremental SAT backends.

:class:`CdclSolver` is a self-contained conflict-driven clause-learning solver
(two watched literals, VSIDS with phase saving, first-UIP learning with local
minimization, Luby restarts, activity-based learned clause reduction and
assumptions). :class:`PysatBackend` wraps python-sat behind the same
:class:`SatBackend` protocol.
"""

from __future__ import annotations

import dataclasses
import enum
import heapq
import logging
import threading
import time
from collections.abc import Sequence
from typing import Protocol

from dfssd.config import SolverConfig
from dfssd.exceptions import ConfigError

logger = logging.getLogger(__name__)


class SatStatus(enum.StrEnum):
    SAT = "SAT"
    UNSAT = "UNSAT"
    UNKNOWN = "UNKNOWN"


@dataclasses.dataclass(frozen=True)
class SolverStats:
    conflicts: int = 0
    decisions: int = 0
    propagations: int = 0
    restarts: int = 0
    learned: int = 0
    wall_time: float = 0.0


@dataclasses.dataclass(frozen=True)
class SatOutcome:
    """Result of one solve call.

    ``model`` is indexed by variable (index 0 unused) and present iff SAT.
    """

    status: SatStatus
    model: tuple[bool, ...] | None = None
    stats: SolverStats = SolverStats()

    @property
    def is_sat(self) -> bool:
        return self.status is SatStatus.SAT

    @property
    def is_unsat(self) -> bool:
        return self.status is SatStatus.UNSAT

    def value(self, var: int) -> bool:
        if self.model is None:
            raise ValueError(f"No model: status is {self.status}")
        return var < len(self.model) and self.model[var]

    def lit(self, lit: int) -> bool:
        return self.value(abs(lit)) == (lit > 0)


class SatBackend(Protocol):
    def reserve(self, num_vars: int) -> None: ...

    def add_clause(self, clause: Sequence[int]) -> None: ...

    def solve(
        self,
        assumptions: Sequence[int] = (),
        *,
        conflict_budget: int | None = None,
        time_budget: float | None = None,
    ) -> SatOutcome: ...


def luby(y: float, x: int) -> float:
    """x-th element (0-based) of the Luby sequence scaled by powers of ``y``."""
    size, seq = 1, 0
    while size < x + 1:
        seq += 1
        size = 2 * size + 1
    while size - 1 != x:
        size = (size - 1) >> 1
        seq -= 1
        x = x % size
    return y**seq


class _Clause:
    __slots__ = ("lits", "learnt", "activity", "deleted")

    def __init__(self, lits: list[int], learnt: bool) -> None:
        self.lits = lits
        self.learnt = learnt
        self.activity = 0.0
        self.deleted = False


def _idx(lit: int) -> int:
    return (abs(lit) << 1) | (lit < 0)


class CdclSolver:
    """Incremental CDCL solver over DIMACS-style integer literals.

    Internally literal ``v`` is ``2v`` and ``-v`` is ``2v+1``. Clauses may be
    added between :meth:`solve` calls; learned clauses are kept.
    """

    def __init__(
        self,
        *,
        restart_base: int = 100,
        var_decay: float = 0.95,
        clause_decay: float = 0.999,
    ) -> None:
        self.restart_base = restart_base
        self.var_decay = var_decay
        self.clause_decay = clause_decay
        self._nvars = 0
        self._val: list[int] = [0, 0]
        self._level: list[int] = [0]
        self._reason: list[_Clause | None] = [None]
        self._phase: list[int] = [1]
        self._activity: list[float] = [0.0]
        self._seen: list[bool] = [False]
        self._watches: list[list[_Clause]] = [[], []]
        self._clauses: list[_Clause] = []
        self._learnts: list[_Clause] = []
        self._trail: list[int] = []
        self._trail_lim: list[int] = []
        self._qhead = 0
        self._heap: list[tuple[float, int]] = []
        self._var_inc = 1.0
        self._cla_inc = 1.0
        self._ok = True
        self._conflicts = 0
        self._decisions = 0
        self._propagations = 0
        self._restarts = 0
        self._learned = 0

    @property
    def num_vars(self) -> int:
        return self._nvars

    @property
    def num_clauses(self) -> int:
        return len(self._clauses)

    def reserve(self, num_vars: int) -> None:
        while self._nvars < num_vars:
            self._nvars += 1
            v = self._nvars
            self._val += [0, 0]
            self._level.append(0)
            self._reason.append(None)
            self._phase.append(2 * v + 1)
            self._activity.append(0.0)
            self._seen.append(False)
            self._watches += [[], []]
            heapq.heappush(self._heap, (-0.0, v))

    # -- clause database ---------------------------------------------------

    def add_clause(self, clause: Sequence[int]) -> None:
        if not self._ok:
            return
        if self._trail_lim:
            self._cancel_until(0)
        chosen: set[int] = set()
        lits: list[int] = []
        for lit in clause:
            if lit == 0:
                raise ValueError("Literal 0 is not allowed")
            self.reserve(abs(lit))
            p = _idx(lit)
            if p ^ 1 in chosen or self._val[p] == 1:
                return
            if p in chosen or self._val[p] == -1:
                continue
            chosen.add(p)
            lits.append(p)
        if not lits:
            self._ok = False
            return
        if len(lits) == 1:
            self._assign(lits[0], None)
            if self._propagate() is not None:
                self._ok = False
            return
        c = _Clause(lits, learnt=False)
        self._watches[lits[0]].append(c)
        self._watches[lits[1]].append(c)
        self._clauses.append(c)

    # -- core --------------------------------------------------------------

    def _assign(self, lit: int, reason: _Clause | None) -> None:
        v = lit >> 1
        self._val[lit] = 1
        self._val[lit ^ 1] = -1
        self._level[v] = len(self._trail_lim)
        self._reason[v] = reason
        self._trail.append(lit)

    def _propagate(self) -> _Clause | None:
        val = self._val
        watches = self._watches
        trail = self._trail
        while self._qhead < len(trail):
            false_lit = trail[self._qhead] ^ 1
            self._qhead += 1
            self._propagations += 1
            ws = watches[false_lit]
            i = j = 0
            n = len(ws)
            while i < n:
                c = ws[i]
                i += 1
                if c.deleted:
                    continue
                lits = c.lits
                if lits[0] == false_lit:
                    lits[0], lits[1] = lits[1], false_lit
                first = lits[0]
                if val[first] == 1:
                    ws[j] = c
                    j += 1
                    continue
                for k in range(2, len(lits)):
                    if val[lits[k]] != -1:
                        lits[1], lits[k] = lits[k], false_lit
                        watches[lits[1]].append(c)
                        break
                else:
                    ws[j] = c
                    j += 1
                    if val[first] == -1:
                        while i < n:
                            ws[j] = ws[i]
                            j += 1
                            i += 1
                        del ws[j:]
                        self._qhead = len(trail)
                        return c
                    self._assign(first, c)
            del ws[j:]
        return None

    def _analyze(self, confl: _Clause) -> tuple[list[int], int]:
        seen = self._seen
        level = self._level
        trail = self._trail
        current = len(self._trail_lim)
        learnt = [0]
        path = 0
        p = -1
        index = len(trail) - 1
        c: _Clause | None = confl
        while True:
            assert c is not None
            if c.learnt:
                self._bump_clause(c)
            for q in c.lits if p == -1 else c.lits[1:]:
                v = q >> 1
                if not seen[v] and level[v] > 0:
                    self._bump_var(v)
                    seen[v] = True
                    if level[v] >= current:
                        path += 1
                    else:
                        learnt.append(q)
            while not seen[trail[index] >> 1]:
                index -= 1
            p = trail[index]
            index -= 1
            c = self._reason[p >> 1]
            seen[p >> 1] = False
            path -= 1
            if path <= 0:
                break
        learnt[0] = p ^ 1

        kept = [learnt[0]]
        for q in learnt[1:]:
            r = self._reason[q >> 1]
            if r is None or any(not seen[x >> 1] and level[x >> 1] > 0 for x in r.lits[1:]):
                kept.append(q)
        for q in learnt[1:]:
            seen[q >> 1] = False

        if len(kept) == 1:
            return kept, 0
        best = max(range(1, len(kept)), key=lambda i: level[kept[i] >> 1])
        kept[1], kept[best] = kept[best], kept[1]
        return kept, level[kept[1] >> 1]

    def _learn(self, lits: list[int]) -> None:
        self._learned += 1
        if len(lits) == 1:
            self._assign(lits[0], None)
            return
        c = _Clause(lits, learnt=True)
        self._bump_clause(c)
        self._watches[lits[0]].append(c)
        self._watches[lits[1]].append(c)
        self._learnts.append(c)
        self._assign(lits[0], c)

    def _cancel_until(self, lvl: int) -> None:
        if len(self._trail_lim) <= lvl:
            return
        start = self._trail_lim[lvl]
        val = self._val
        for i in range(len(self._trail) - 1, start - 1, -1):
            lit = self._trail[i]
            v = lit >> 1
            val[lit] = 0
            val[lit ^ 1] = 0
            self._reason[v] = None
            self._phase[v] = lit
            heapq.heappush(self._heap, (-self._activity[v], v))
        del self._trail[start:]
        del self._trail_lim[lvl:]
        self._qhead = start

    def _bump_var(self, v: int) -> None:
        self._activity[v] += self._var_inc
        if self._activity[v] > 1e100:
            self._activity = [a * 1e-100 for a in self._activity]
            self._var_inc *= 1e-100
            self._rebuild_heap()
        elif self._val[2 * v] == 0:
            heapq.heappush(self._heap, (-self._activity[v], v))

    def _bump_clause(self, c: _Clause) -> None:
        c.activity += self._cla_inc
        if c.activity > 1e20:
            for other in self._learnts:
                other.activity *= 1e-20
            self._cla_inc *= 1e-20

    def _rebuild_heap(self) -> None:
        self._heap = [
            (-self._activity[v], v) for v in range(1, self._nvars + 1) if self._val[2 * v] == 0
        ]
        heapq.heapify(self._heap)

    def _pick_branch(self) -> int:
        if len(self._heap) > 10 * self._nvars + 1000:
            self._rebuild_heap()
        heap = self._heap
        while heap:
            neg, v = heapq.heappop(heap)
            if self._val[2 * v] == 0 and -neg == self._activity[v]:
                return v
        return 0

    def _reduce_db(self) -> None:
        self._learnts.sort(key=lambda c: c.activity)
        half = len(self._learnts) // 2
        kept: list[_Clause] = []
        for i, c in enumerate(self._learnts):
            first = c.lits[0]
            locked = self._reason[first >> 1] is c and self._val[first] == 1
            if i < half and len(c.lits) > 2 and not locked:
                c.deleted = True
            else:
                kept.append(c)
        logger.debug("Reduced learned clauses %d -> %d", len(self._learnts), len(kept))
        self._learnts = kept

    def _search(
        self, assumps: list[int], conflict_budget: int | None, deadline: float | None
    ) -> SatStatus:
        conflicts = 0
        since_restart = 0
        restart_no = 0
        limit = luby(2, restart_no) * self.restart_base
        max_learnts = max(len(self._clauses) / 3, 2000.0)
        while True:
            confl = self._propagate()
            if confl is not None:
                self._conflicts += 1
                conflicts += 1
                since_restart += 1
                if not self._trail_lim:
                    self._ok = False
                    return SatStatus.UNSAT
                learnt, backtrack = self._analyze(confl)
                self._cancel_until(backtrack)
                self._learn(learnt)
                self._var_inc /= self.var_decay
                self._cla_inc /= self.clause_decay
                if conflict_budget is not None and conflicts >= conflict_budget:
                    return SatStatus.UNKNOWN
                if deadline is not None and time.monotonic() > deadline:
                    return SatStatus.UNKNOWN
                continue
            if since_restart >= limit:
                restart_no += 1
                self._restarts += 1
                since_restart = 0
                limit = luby(2, restart_no) * self.restart_base
                self._cancel_until(0)
                continue
            if len(self._learnts) - len(self._trail) >= max_learnts:
                self._reduce_db()
                max_learnts *= 1.1

            decision = 0
            while len(self._trail_lim) < len(assumps):
                p = assumps[len(self._trail_lim)]
                if self._val[p] == 1:
                    self._trail_lim.append(len(self._trail))
                elif self._val[p] == -1:
                    return SatStatus.UNSAT
                else:
                    decision = p
                    break
            if decision == 0:
                v = self._pick_branch()
                if v == 0:
                    return SatStatus.SAT
                decision = self._phase[v]
                self._decisions += 1
                if deadline is not None and self._decisions % 1024 == 0:
                    if time.monotonic() > deadline:
                        return SatStatus.UNKNOWN
            self._trail_lim.append(len(self._trail))
            self._assign(decision, None)

    def solve(
        self,
        assumptions: Sequence[int] = (),
        *,
        conflict_budget: int | None = None,
        time_budget: float | None = None,
    ) -> SatOutcome:
        start = time.monotonic()
        before = (
            self._conflicts, self._decisions, self._propagations, self._restarts, self._learned
        )
        status = SatStatus.UNSAT
        model: tuple[bool, ...] | None = None
        if self._ok:
            for lit in assumptions:
                self.reserve(abs(lit))
            deadline = start + time_budget if time_budget is not None else None
            status = self._search([_idx(lit) for lit in assumptions], conflict_budget, deadline)
            if status is SatStatus.SAT:
                model = (False,) + tuple(
                    self._val[2 * v] == 1 for v in range(1, self._nvars + 1)
                )
            self._cancel_until(0)
        stats = SolverStats(
            conflicts=self._conflicts - before[0],
            decisions=self._decisions - before[1],
            propagations=self._propagations - before[2],
            restarts=self._restarts - before[3],
            learned=self._learned - before[4],
            wall_time=time.monotonic() - start,
        )
        logger.debug(
            "cdcl %s: %d vars, %d clauses, %d conflicts, %d decisions, %.3fs",
            status, self._nvars, len(self._clauses), stats.conflicts, stats.decisions,
            stats.wall_time,
        )
        return SatOutcome(status, model, stats)


class PysatBackend:
    """python-sat solver (default MiniSat 2.2) behind :class:`SatBackend`."""

    def __init__(self, name: str = "m22") -> None:
        try:
            from pysat.solvers import Solver
        except ImportError as exc:
            raise ConfigError(
                "solver.backend=pysat requires python-sat (pip install 'dfssd-toolkit[pysat]')"
            ) from exc
        self.name = name
        self._solver = Solver(name=name)
        self._nvars = 0

    def reserve(self, num_vars: int) -> None:
        self._nvars = max(self._nvars, num_vars)

    def add_clause(self, clause: Sequence[int]) -> None:
        for lit in clause:
            self._nvars = max(self._nvars, abs(lit))
        self._solver.add_clause(list(clause))

    def solve(
        self,
        assumptions: Sequence[int] = (),
        *,
        conflict_budget: int | None = None,
        time_budget: float | None = None,
    ) -> SatOutcome:
        start = time.monotonic()
        timer: threading.Timer | None = None
        if conflict_budget is not None:
            self._solver.conf_budget(conflict_budget)
        if time_budget is not None:
            timer = threading.Timer(time_budget, self._solver.interrupt)
            timer.start()
        try:
            if conflict_budget is None and time_budget is None:
                result = self._solver.solve(assumptions=list(assumptions))
            else:
                result = self._solver.solve_limited(
                    assumptions=list(assumptions), expect_interrupt=time_budget is not None
                )
        finally:
            if timer is not None:
                timer.cancel()
                self._solver.clear_interrupt()
        accum = self._solver.accum_stats() or {}
        stats = SolverStats(
            conflicts=int(accum.get("conflicts", 0)),
            decisions=int(accum.get("decisions", 0)),
            propagations=int(accum.get("propagations", 0)),
            restarts=int(accum.get("restarts", 0)),
            wall_time=time.monotonic() - start,
        )
        if result is None:
            return SatOutcome(SatStatus.UNKNOWN, None, stats)
        if not result:
            return SatOutcome(SatStatus.UNSAT, None, stats)
        values = [False] * (self._nvars + 1)
        for lit in self._solver.get_model() or ():
            if abs(lit) <= self._nvars:
                values[abs(lit)] = lit > 0
        return SatOutcome(SatStatus.SAT, tuple(values), stats)

    def close(self) -> None:
        self._solver.delete()


def make_backend(config: SolverConfig | None = None) -> SatBackend:
    config = config or SolverConfig()
    if config.backend == "pysat":
        return PysatBackend(config.pysat_name)
    return CdclSolver(restart_base=config.restart_base)

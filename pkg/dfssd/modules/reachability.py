"""Reachable-state analysis, minimum-distance unreachable states and
unreachability certificates.

States are integer codes with flip-flop 0 as the most significant bit. The
explicit engine steps whole frontiers at once through the numpy simulator;
beyond ``explicit_ff_limit`` the SAT engine (BMC plus k-induction) takes over.
"""

from __future__ import annotations

import dataclasses
import enum
import itertools
import logging
from collections.abc import Iterable, Sequence

import networkx as nx
import numpy as np

from dfssd.config import ReachConfig, SolverConfig
from dfssd.exceptions import StateSpaceError, WidthMismatchError
from dfssd.modules.cnf import (
    CnfFormula,
    SatContext,
    UnrolledModel,
    differ_literal,
    match_literals,
    unroll_free,
)
from dfssd.modules.netlist import Netlist, comb_view
from dfssd.modules.simulator import BitVector, FrameSequence, Machine
from dfssd.modules.solver import SatOutcome

logger = logging.getLogger(__name__)

_CHUNK = 1 << 16


def state_code(bits: Iterable[int]) -> int:
    code = 0
    for b in bits:
        code = (code << 1) | int(b)
    return code


def bits_of(codes: np.ndarray, width: int) -> np.ndarray:
    """(width, B) bool matrix of the codes, most significant bit first."""
    shifts = np.arange(width - 1, -1, -1, dtype=np.int64)
    return ((np.asarray(codes, dtype=np.int64)[None, :] >> shifts[:, None]) & 1).astype(bool)


def codes_of(bits: np.ndarray) -> np.ndarray:
    width = bits.shape[0]
    weights = (np.int64(1) << np.arange(width - 1, -1, -1, dtype=np.int64))[:, None]
    return (bits.astype(np.int64) * weights).sum(axis=0)


class Explorer:
    """Steps sets of states under every input combination at once.

    Key inputs not fixed by ``key`` are enumerated alongside the primary
    inputs; combination ``c`` encodes inputs then free key bits, MSB first.
    With a key, ``free_keys`` lists key positions that are still enumerated.
    """

    def __init__(
        self,
        n: Netlist,
        key: BitVector | None,
        max_input_bits: int,
        *,
        free_keys: Sequence[int] = (),
    ) -> None:
        if key is not None and key.width != len(n.key_inputs):
            raise WidthMismatchError("Key", expected=len(n.key_inputs), actual=key.width)
        self.netlist = n
        self.machine = Machine(n)
        self.width = n.state_width
        self.num_x = len(n.inputs)
        num_keys = len(n.key_inputs)
        free = list(range(num_keys)) if key is None else sorted(set(free_keys))
        if free and not 0 <= free[0] <= free[-1] < num_keys:
            raise WidthMismatchError("Free key position", expected=num_keys, actual=free[-1] + 1)
        self.num_free = len(free)
        bits = self.num_x + self.num_free
        if bits > max_input_bits:
            raise StateSpaceError(
                f"{n.name}: {bits} input bit(s) per step exceed max_input_bits={max_input_bits}"
            )
        self.num_combos = 1 << bits
        combos = bits_of(np.arange(self.num_combos), bits)
        self._x = combos[: self.num_x]
        fixed = key.bits if key is not None else (0,) * num_keys
        self._k = np.repeat(np.array(fixed, dtype=bool).reshape(-1, 1), self.num_combos, axis=1)
        self._k[free] = combos[self.num_x :]

    def step(self, codes: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return next-state codes (F, C) and outputs (F, C, |Y|) for frontier ``codes``."""
        codes = np.asarray(codes, dtype=np.int64)
        combos = self.num_combos
        per_chunk = max(1, _CHUNK // combos)
        nexts, outs = [], []
        for lo in range(0, len(codes), per_chunk):
            chunk = codes[lo : lo + per_chunk]
            f = len(chunk)
            state = bits_of(np.repeat(chunk, combos), self.width)
            y, d = self.machine.step(state, np.tile(self._x, f), np.tile(self._k, f))
            nexts.append(codes_of(d).reshape(f, combos))
            outs.append(y.T.reshape(f, combos, y.shape[0]))
        if not nexts:
            return (
                np.zeros((0, combos), dtype=np.int64),
                np.zeros((0, combos, len(self.netlist.outputs)), dtype=bool),
            )
        return np.concatenate(nexts), np.concatenate(outs)

    def combo_input(self, combo: int) -> BitVector:
        return BitVector.from_bits(self._x[:, combo])

    def combo_key(self, combo: int) -> BitVector:
        return BitVector.from_bits(self._k[:, combo])


class StateSet:
    """Reached states with BFS depth and parent pointers.

    Membership is a dense depth array when the width allows it and a dict
    otherwise.
    """

    def __init__(self, width: int, *, dense: bool | None = None) -> None:
        self.width = width
        self.dense = width <= 24 if dense is None else dense
        self._depth = np.full(1 << width, -1, dtype=np.int32) if self.dense else None
        self._map: dict[int, int] = {}
        self._parent: dict[int, tuple[int, int]] = {}
        self.layers: list[np.ndarray] = []
        self.complete = False

    def add(self, code: int, depth: int, parent: int | None = None, combo: int = 0) -> None:
        if self._depth is not None:
            self._depth[code] = depth
        self._map[code] = depth
        if parent is not None:
            self._parent[code] = (parent, combo)

    def __len__(self) -> int:
        return len(self._map)

    def __contains__(self, state: object) -> bool:
        code = state.to_int() if isinstance(state, BitVector) else state
        return code in self._map

    def contains_many(self, codes: np.ndarray) -> np.ndarray:
        if self._depth is not None:
            return self._depth[codes] >= 0
        return np.fromiter((int(c) in self._map for c in codes), dtype=bool, count=len(codes))

    def mask(self) -> np.ndarray:
        """Dense boolean membership over all 2^width codes."""
        if self._depth is not None:
            return self._depth >= 0
        out = np.zeros(1 << self.width, dtype=bool)
        out[list(self._map)] = True
        return out

    def depth_of(self, state: int | BitVector) -> int | None:
        code = state.to_int() if isinstance(state, BitVector) else state
        return self._map.get(code)

    @property
    def max_depth(self) -> int:
        return max(self._map.values(), default=0)

    def codes(self) -> np.ndarray:
        return np.array(sorted(self._map), dtype=np.int64)

    def states(self) -> list[BitVector]:
        return [BitVector.from_int(c, self.width) for c in sorted(self._map)]

    def path_to(self, state: int | BitVector) -> tuple[list[int], list[int]]:
        """States from the initial state to ``state`` and the input combos between them."""
        code = state.to_int() if isinstance(state, BitVector) else state
        if code not in self._map:
            raise KeyError(code)
        codes, combos = [code], []
        while code in self._parent:
            code, combo = self._parent[code]
            codes.append(code)
            combos.append(combo)
        return codes[::-1], combos[::-1]


def reachable_bfs(
    n: Netlist,
    depth_limit: int | None = None,
    *,
    key: BitVector | None = None,
    free_keys: Sequence[int] = (),
    config: ReachConfig | None = None,
    explorer: Explorer | None = None,
) -> StateSet:
    """States reachable from the initial state within ``depth_limit`` steps.

    With ``key=None`` the key inputs are free, giving the union over all keys;
    ``free_keys`` frees only the listed positions of ``key``. Free key bits
    may change from one step to the next, so the result over-approximates
    the union of the per-key reachable sets.
    ``complete`` is set when no further state is reachable.
    """
    cfg = config or ReachConfig()
    width = n.state_width
    if depth_limit is None and width > cfg.explicit_ff_limit:
        raise StateSpaceError(
            f"{n.name}: {width} flip-flops exceed explicit_ff_limit={cfg.explicit_ff_limit}; "
            "give a depth limit"
        )
    ex = explorer or Explorer(n, key, cfg.max_input_bits, free_keys=free_keys)
    states = StateSet(width)
    init = state_code(n.init_state)
    states.add(init, 0)
    states.layers.append(np.array([init], dtype=np.int64))
    frontier = states.layers[0]
    depth = 0
    while frontier.size:
        nxt, _ = ex.step(frontier)
        flat = nxt.ravel()
        fresh = ~states.contains_many(flat)
        if depth_limit is not None and depth >= depth_limit:
            states.complete = not bool(fresh.any())
            break
        positions = np.flatnonzero(fresh)
        uniq, first = np.unique(flat[positions], return_index=True)
        picked = positions[first]
        parents = frontier[picked // ex.num_combos]
        combos = picked % ex.num_combos
        depth += 1
        for code, parent, combo in zip(uniq.tolist(), parents.tolist(), combos.tolist()):
            states.add(code, depth, parent, combo)
        if len(states) > cfg.max_states:
            raise StateSpaceError(f"{n.name}: more than max_states={cfg.max_states} states")
        if uniq.size:
            states.layers.append(uniq)
            logger.debug("BFS depth %d: %d new state(s), %d total", depth, uniq.size, len(states))
        frontier = uniq
    else:
        states.complete = True
    return states


def path_inputs(states: StateSet, explorer: Explorer, target: int) -> FrameSequence:
    """Input frames driving the initial state to ``target`` along BFS parents."""
    _, combos = states.path_to(target)
    return FrameSequence(explorer.num_x, tuple(explorer.combo_input(c) for c in combos))


def transition_graph(
    n: Netlist, key: BitVector | None = None, *, config: ReachConfig | None = None
) -> nx.DiGraph:
    """Reachable state-transition graph; edges carry the enabling input combos."""
    cfg = config or ReachConfig()
    ex = Explorer(n, key, cfg.max_input_bits)
    reach = reachable_bfs(n, key=key, config=cfg, explorer=ex)
    codes = reach.codes()
    nxt, _ = ex.step(codes)
    graph = nx.DiGraph()
    for code in codes.tolist():
        graph.add_node(code, depth=reach.depth_of(code))
    for i, src in enumerate(codes.tolist()):
        for combo, dst in enumerate(nxt[i].tolist()):
            if graph.has_edge(src, dst):
                graph[src][dst]["inputs"].append(combo)
            else:
                graph.add_edge(src, dst, inputs=[combo])
    graph.graph.update(width=n.state_width, init=state_code(n.init_state))
    return graph


def exact_step_images(
    n: Netlist,
    limit: int,
    *,
    key: BitVector | None = None,
    config: ReachConfig | None = None,
    explorer: Explorer | None = None,
) -> list[np.ndarray]:
    """States reachable in exactly i steps for i = 0, 1, ... until a set repeats
    or ``limit`` steps are taken."""
    cfg = config or ReachConfig()
    ex = explorer or Explorer(n, key, cfg.max_input_bits)
    images = [np.array([state_code(n.init_state)], dtype=np.int64)]
    seen = {images[0].tobytes()}
    while len(images) - 1 < limit:
        nxt, _ = ex.step(images[-1])
        image = np.unique(nxt)
        tag = image.tobytes()
        if tag in seen:
            break
        seen.add(tag)
        images.append(image)
    return images


def masks_with_popcount(width: int, hd: int) -> np.ndarray:
    return np.array(
        [sum(1 << b for b in bits) for bits in itertools.combinations(range(width), hd)],
        dtype=np.int64,
    )


class CertificateKind(enum.StrEnum):
    FIXPOINT = "fixpoint"
    INDUCTION = "induction"
    BMC = "bmc"
    NONE = "none"


class Verdict(enum.StrEnum):
    PROVEN_UNREACHABLE = "PROVEN-UNREACHABLE"
    REACHABLE = "REACHABLE"
    UNKNOWN = "UNKNOWN"


@dataclasses.dataclass(frozen=True)
class Certificate:
    verdict: Verdict
    kind: CertificateKind
    path: tuple[BitVector, ...] = ()
    inputs: FrameSequence | None = None

    def to_dict(self) -> dict[str, object]:
        return {
            "verdict": str(self.verdict),
            "kind": str(self.kind),
            "path": [str(s) for s in self.path],
            "inputs": [str(f) for f in self.inputs] if self.inputs is not None else None,
        }


@dataclasses.dataclass(frozen=True)
class UrsWitness:
    s_prev: BitVector
    s_reach: BitVector
    s_urs: BitVector
    hd: int
    depth: int
    certificate: CertificateKind = CertificateKind.FIXPOINT

    def to_dict(self) -> dict[str, object]:
        return {
            "s_prev": str(self.s_prev),
            "s_reach": str(self.s_reach),
            "s_urs": str(self.s_urs),
            "hd": self.hd,
            "depth": self.depth,
            "certificate": str(self.certificate),
        }


@dataclasses.dataclass(frozen=True)
class NoUrs:
    """No unreachable state could be produced."""

    width: int
    reachable: int | None
    reason: str

    def to_dict(self) -> dict[str, object]:
        return {
            "no_urs": True,
            "width": self.width,
            "reachable": self.reachable,
            "reason": self.reason,
        }


def rank_unreachable(reach: StateSet) -> list[tuple[int, int]]:
    """Every unreachable code with its distance to the nearest reachable state,
    sorted by (distance, code)."""
    width = reach.width
    reachable = reach.mask()
    dist = np.where(reachable, 0, -1).astype(np.int64)
    codes = np.flatnonzero(reachable).astype(np.int64)
    for hd in range(1, width + 1):
        if (dist >= 0).all():
            break
        for mask in masks_with_popcount(width, hd):
            near = codes ^ mask
            hit = near[dist[near] < 0]
            dist[hit] = hd
    urs = np.flatnonzero(~reachable)
    return sorted((int(dist[c]), int(c)) for c in urs)


def find_urs_min_hd(
    n: Netlist,
    limit: int | None = None,
    *,
    key: BitVector | None = None,
    config: ReachConfig | None = None,
    solver: SolverConfig | None = None,
) -> UrsWitness | NoUrs:
    """Unreachable state at minimum Hamming distance from a reachable state.

    Distances are searched upward; for each distance, depths i = 0, 1, ...
    over the states reachable in exactly i steps. Ties go to the smallest
    unreachable code, then the smallest reachable code and predecessor.
    A depth-0 witness has no predecessor and reports the initial state as
    ``s_prev``.
    """
    cfg = config or ReachConfig()
    width = n.state_width
    if width == 0:
        return NoUrs(0, 1, "circuit has no flip-flops")
    if width > cfg.explicit_ff_limit:
        return _find_urs_sat(n, limit, key=key, config=cfg, solver=solver)
    ex = Explorer(n, key, cfg.max_input_bits)
    reach = reachable_bfs(n, key=key, config=cfg, explorer=ex)
    if len(reach) == 1 << width:
        return NoUrs(width, len(reach), "all states are reachable")
    limit = limit or cfg.urs_limit or (1 << width)
    images = exact_step_images(n, limit, key=key, config=cfg, explorer=ex)
    unreachable = ~reach.mask()
    for hd in range(1, width + 1):
        masks = masks_with_popcount(width, hd)
        for i in range(len(images)):
            s_reach = images[i]
            cand = s_reach[:, None] ^ masks[None, :]
            hit = unreachable[cand]
            if not hit.any():
                continue
            rows, cols = np.nonzero(hit)
            urs_vals = cand[rows, cols]
            reach_vals = s_reach[rows]
            pick = np.lexsort((reach_vals, urs_vals))[0]
            s_urs, s_r = int(urs_vals[pick]), int(reach_vals[pick])
            if i == 0:
                s_prev = s_r
            else:
                prev = images[i - 1]
                nxt, _ = ex.step(prev)
                s_prev = int(prev[(nxt == s_r).any(axis=1)].min())
            witness = UrsWitness(
                s_prev=BitVector.from_int(s_prev, width),
                s_reach=BitVector.from_int(s_r, width),
                s_urs=BitVector.from_int(s_urs, width),
                hd=hd,
                depth=i,
            )
            logger.info(
                "URS %s at hd=%d from %s (depth %d)", witness.s_urs, hd, witness.s_reach, i
            )
            return witness
    return NoUrs(width, len(reach), "no unreachable state within the step limit")


class _BmcReach:
    """Single-instance unrolling for bounded reachability queries."""

    def __init__(self, n: Netlist, key: BitVector | None, solver: SolverConfig | None) -> None:
        self.netlist = n
        self.model = UnrolledModel(n, instances=1)
        if key is not None:
            for v, bit in zip(self.model.keys["k1"], key):
                self.model.formula.add_clause([v if bit else -v])
        self.ctx = SatContext(self.model.formula, config=solver)

    def states_at(self, t: int) -> list[int]:
        self.model.extend(max(t, 1))
        return self.model.states["k1"][t]

    def query(self, t: int, code: int) -> SatOutcome:
        bits = BitVector.from_int(code, self.netlist.state_width)
        return self.ctx.solve(match_literals(self.states_at(t), bits.bits))

    def read_path(
        self, outcome: SatOutcome, t: int
    ) -> tuple[tuple[BitVector, ...], FrameSequence]:
        states = tuple(
            BitVector.from_bits(outcome.lit(v) for v in self.model.states["k1"][i])
            for i in range(t + 1)
        )
        return states, self.model.read_inputs(outcome, t)


def _certify_induction(
    n: Netlist, code: int, k: int, key: BitVector | None, solver: SolverConfig | None
) -> bool | None:
    """k-induction step for "state != code" with simple-path constraints.

    True when proven, False when the step case is satisfiable, None on budget.
    """
    f = CnfFormula()
    view = comb_view(n)
    keys = [f.new_var() for _ in n.key_inputs]
    if key is not None:
        for v, bit in zip(keys, key):
            f.add_clause([v if bit else -v])
    run = unroll_free(f, view, k, keys, instance="step")
    bits = BitVector.from_int(code, n.state_width).bits
    for t in range(k):
        f.add_clause([-lit for lit in match_literals(run.states[t], bits)])
    for lit in match_literals(run.states[k], bits):
        f.add_clause([lit])
    for a in range(k + 1):
        for b in range(a + 1, k + 1):
            d = differ_literal(f, run.states[a], run.states[b])
            if d is not None:
                f.add_clause([d])
    outcome = SatContext(f, config=solver).solve()
    if outcome.is_unsat:
        return True
    if outcome.is_sat:
        return False
    return None


def certify_unreachable(
    n: Netlist,
    s: BitVector,
    *,
    key: BitVector | None = None,
    config: ReachConfig | None = None,
    solver: SolverConfig | None = None,
) -> Certificate:
    """Prove ``s`` unreachable, find a path to it, or give up with UNKNOWN."""
    cfg = config or ReachConfig()
    if s.width != n.state_width:
        raise WidthMismatchError("State", expected=n.state_width, actual=s.width)
    code = s.to_int()
    if n.state_width <= cfg.explicit_ff_limit:
        try:
            ex = Explorer(n, key, cfg.max_input_bits)
            reach = reachable_bfs(n, key=key, config=cfg, explorer=ex)
        except StateSpaceError as exc:
            logger.info("Explicit engine unavailable (%s); using SAT", exc)
        else:
            if code not in reach:
                return Certificate(Verdict.PROVEN_UNREACHABLE, CertificateKind.FIXPOINT)
            path, _ = reach.path_to(code)
            return Certificate(
                Verdict.REACHABLE,
                CertificateKind.FIXPOINT,
                tuple(BitVector.from_int(c, n.state_width) for c in path),
                path_inputs(reach, ex, code),
            )
    bmc = _BmcReach(n, key, solver)
    budget_hit = False
    for t in range(cfg.bmc_depth + 1):
        outcome = bmc.query(t, code)
        if outcome.is_sat:
            path, inputs = bmc.read_path(outcome, t)
            return Certificate(Verdict.REACHABLE, CertificateKind.BMC, path, inputs)
        budget_hit |= not outcome.is_unsat
    if budget_hit:
        return Certificate(Verdict.UNKNOWN, CertificateKind.BMC)
    for k in range(1, min(cfg.induction_depth, cfg.bmc_depth) + 1):
        proven = _certify_induction(n, code, k, key, solver)
        if proven:
            logger.debug("State %s unreachable by %d-induction", s, k)
            return Certificate(Verdict.PROVEN_UNREACHABLE, CertificateKind.INDUCTION)
        if proven is None:
            break
    return Certificate(Verdict.UNKNOWN, CertificateKind.NONE)


def _enumerate_states_at(bmc: _BmcReach, t: int, cap: int) -> list[int] | None:
    """All states occupied at frame ``t`` of some run; None when over ``cap``."""
    f = bmc.model.formula
    variables = bmc.states_at(t)
    act = f.new_var()
    found: list[int] = []
    while True:
        outcome = bmc.ctx.solve([act])
        if not outcome.is_sat:
            break
        bits = [int(outcome.lit(v)) for v in variables]
        found.append(state_code(bits))
        if len(found) > cap:
            f.add_clause([-act])
            return None
        f.add_clause([-act, *(-lit for lit in match_literals(variables, bits))])
    f.add_clause([-act])
    return sorted(found)


def _find_urs_sat(
    n: Netlist,
    limit: int | None,
    *,
    key: BitVector | None,
    config: ReachConfig,
    solver: SolverConfig | None,
) -> UrsWitness | NoUrs:
    width = n.state_width
    depth = min(limit or config.bmc_depth, config.bmc_depth)
    bmc = _BmcReach(n, key, solver)
    images: list[list[int]] = [[state_code(n.init_state)]]
    for t in range(1, depth + 1):
        states = _enumerate_states_at(bmc, t, config.max_states)
        if states is None:
            break
        images.append(states)
    known = set(itertools.chain.from_iterable(images))
    budget = config.max_states
    for hd in range(1, width + 1):
        masks = masks_with_popcount(width, hd).tolist()
        for i in range(len(images)):
            cands = sorted(
                {(s ^ m, s) for s in images[i] for m in masks if (s ^ m) not in known}
            )
            for urs, s_r in cands:
                budget -= 1
                if budget < 0:
                    return NoUrs(width, None, "certification budget exhausted")
                cert = certify_unreachable(
                    n, BitVector.from_int(urs, width), key=key, config=config.model_copy(
                        update={"explicit_ff_limit": 0}
                    ), solver=solver,
                )
                if cert.verdict is Verdict.REACHABLE:
                    known.add(urs)
                    continue
                if cert.verdict is not Verdict.PROVEN_UNREACHABLE:
                    continue
                if i == 0:
                    prev = s_r
                else:
                    prev = next(
                        p for p in images[i - 1] if _has_step(n, p, s_r, key, solver)
                    )
                return UrsWitness(
                    s_prev=BitVector.from_int(prev, width),
                    s_reach=BitVector.from_int(s_r, width),
                    s_urs=BitVector.from_int(urs, width),
                    hd=hd,
                    depth=i,
                    certificate=cert.kind,
                )
    return NoUrs(width, len(known), "no certified unreachable state found")


def _has_step(
    n: Netlist, src: int, dst: int, key: BitVector | None, solver: SolverConfig | None
) -> bool:
    """Whether one transition leads from ``src`` to ``dst`` under some input (and key)."""
    f = CnfFormula()
    keys = [f.new_var() for _ in n.key_inputs]
    if key is not None:
        for v, bit in zip(keys, key):
            f.add_clause([v if bit else -v])
    run = unroll_free(f, comb_view(n), 1, keys, instance="hop")
    width = n.state_width
    lits = match_literals(run.states[0], BitVector.from_int(src, width).bits)
    lits += match_literals(run.states[1], BitVector.from_int(dst, width).bits)
    return SatContext(f, config=solver).solve(lits).is_sat


@dataclasses.dataclass(frozen=True)
class EquivalenceResult:
    equivalent: bool
    counterexample: FrameSequence | None = None
    explored: int = 0

    @property
    def first_divergence(self) -> int | None:
        """1-based clock cycle at which the outputs first differ."""
        return None if self.counterexample is None else len(self.counterexample)


def check_equivalence(
    n_a: Netlist,
    key_a: BitVector,
    n_b: Netlist,
    key_b: BitVector,
    *,
    config: ReachConfig | None = None,
) -> EquivalenceResult:
    """Explicit product-machine sequential equivalence from the reset states.

    The counterexample, if any, is a shortest input sequence whose last frame
    produces different outputs.
    """
    cfg = config or ReachConfig()
    if len(n_a.inputs) != len(n_b.inputs):
        raise WidthMismatchError("Inputs", expected=len(n_a.inputs), actual=len(n_b.inputs))
    if len(n_a.outputs) != len(n_b.outputs):
        raise WidthMismatchError("Outputs", expected=len(n_a.outputs), actual=len(n_b.outputs))
    wa, wb = n_a.state_width, n_b.state_width
    if wa + wb > 62:
        raise StateSpaceError(f"Product of {wa}+{wb} flip-flops is too wide for explicit search")
    ex_a = Explorer(n_a, key_a, cfg.max_input_bits)
    ex_b = Explorer(n_b, key_b, cfg.max_input_bits)
    low = (1 << wb) - 1
    start = (state_code(n_a.init_state) << wb) | state_code(n_b.init_state)
    parent: dict[int, tuple[int, int] | None] = {start: None}
    frontier = np.array([start], dtype=np.int64)

    def inputs_to(code: int, last: int | None) -> FrameSequence:
        combos = [] if last is None else [last]
        while (link := parent[code]) is not None:
            code, combo = link
            combos.append(combo)
        return FrameSequence(ex_a.num_x, tuple(ex_a.combo_input(c) for c in reversed(combos)))

    while frontier.size:
        na, ya = ex_a.step(frontier >> wb)
        nb, yb = ex_b.step(frontier & low)
        diff = (ya != yb).any(axis=2)
        if diff.any():
            row, combo = (int(v) for v in np.argwhere(diff)[0])
            seq = inputs_to(int(frontier[row]), combo)
            logger.debug("Outputs diverge at cycle %d", len(seq))
            return EquivalenceResult(False, seq, len(parent))
        flat = ((na << wb) | nb).ravel()
        uniq, first = np.unique(flat, return_index=True)
        fresh = []
        for code, pos in zip(uniq.tolist(), first.tolist()):
            if code not in parent:
                parent[code] = (int(frontier[pos // ex_a.num_combos]), pos % ex_a.num_combos)
                fresh.append(code)
        if len(parent) > cfg.max_states:
            raise StateSpaceError(f"Product machine exceeds max_states={cfg.max_states}")
        frontier = np.array(fresh, dtype=np.int64)
    return EquivalenceResult(True, None, len(parent))

"""Shallow state duality: key-steered duplicates of reachable states.

Each duplicated original state gets an unreachable encoding. Transitions into
the original are steered to the duplicate by a key bit, and a canonicalizing
layer in front of every reader of the state register makes the duplicate
behave exactly like its original. Under the reference key the duplicates are
live; in the default mode every key is functionally correct.

The reference key is all ones, not all zeros: a set steering bit routes into
the duplicate, so the emitted key exercises the duplicated encodings. Key
counting tries every value and does not depend on this choice.
"""

from __future__ import annotations

import dataclasses
import logging

import numpy as np

from dfssd.config import NetlistConfig, ReachConfig, SsdConfig
from dfssd.exceptions import InsufficientUrsError, StateSpaceError, TransformError
from dfssd.modules.netlist import GateKind, Netlist, NetlistBuilder
from dfssd.modules.reachability import (
    CertificateKind,
    StateSet,
    check_equivalence,
    rank_unreachable,
    reachable_bfs,
    state_code,
    transition_graph,
)
from dfssd.modules.simulator import BitVector, simulate_batch

logger = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class SsdPair:
    original: BitVector
    duplicate: BitVector
    key_bits: tuple[int, ...]
    hd: int
    certificate: CertificateKind = CertificateKind.FIXPOINT

    @property
    def key_bit_index(self) -> int:
        return self.key_bits[0]


@dataclasses.dataclass(frozen=True)
class SsdEdge:
    """A reachable transition into a duplicated original, with its steering key bit."""

    source: BitVector
    target: BitVector
    key_bit: int


@dataclasses.dataclass(frozen=True)
class SsdPlan:
    pairs: tuple[SsdPair, ...]
    key_width: int
    granularity: str = "pair"
    strict: bool = False
    edges: tuple[SsdEdge, ...] = ()
    key_offset: int = 0

    def to_dict(self) -> dict[str, object]:
        return {
            "granularity": self.granularity,
            "strict": self.strict,
            "key_width": self.key_width,
            "key_offset": self.key_offset,
            "pairs": [
                {
                    "original": str(p.original),
                    "duplicate": str(p.duplicate),
                    "key_bits": list(p.key_bits),
                    "hd": p.hd,
                    "certificate": str(p.certificate),
                }
                for p in self.pairs
            ],
            "edges": [
                {"source": str(e.source), "target": str(e.target), "key_bit": e.key_bit}
                for e in self.edges
            ],
        }


@dataclasses.dataclass(frozen=True)
class SsdResult:
    netlist: Netlist
    plan: SsdPlan
    correct_key_count: int
    reference_key: BitVector


@dataclasses.dataclass(frozen=True)
class KeyCount:
    count: int
    total: int
    method: str  # "exact" or "sampled"


def _popcount(x: int) -> int:
    return bin(x).count("1")


def plan_pairs(reach: StateSet, init: int, k: int) -> list[tuple[int, int, int]]:
    """Pick ``k`` (original, duplicate, hd) triples.

    Unreachable codes are taken in (distance, code) order; each is paired with
    the nearest unused reachable non-initial state, preferring the deepest
    and then the smallest code.
    """
    ranking = rank_unreachable(reach)
    originals = [int(c) for c in reach.codes() if c != init]
    available = min(len(ranking), len(originals))
    if available < k:
        raise InsufficientUrsError(
            f"Only {available} state(s) can be duplicated, {k} requested",
            available=available,
            requested=k,
        )
    used: set[int] = set()
    pairs = []
    for _, dup in ranking[:k]:
        orig = min(
            (r for r in originals if r not in used),
            key=lambda r: (_popcount(r ^ dup), -(reach.depth_of(r) or 0), r),
        )
        used.add(orig)
        pairs.append((orig, dup, _popcount(orig ^ dup)))
    return pairs


def apply_ssd(
    n: Netlist,
    k: int,
    *,
    config: SsdConfig | None = None,
    reach_config: ReachConfig | None = None,
    netlist_config: NetlistConfig | None = None,
    base_key: BitVector | None = None,
) -> SsdResult:
    """Duplicate ``k`` reachable states into unreachable encodings.

    ``base_key`` is the correct value of key inputs ``n`` already has; it
    prefixes the reference key of the result.
    """
    cfg = config or SsdConfig()
    prefix = (netlist_config or NetlistConfig()).key_prefix
    if k < 0:
        raise TransformError(f"Number of duplicated states must be >= 0, got {k}")
    if n.key_inputs and base_key is None:
        raise TransformError(f"{n.name} already has key inputs; pass their correct value")
    base_key = base_key or BitVector(())
    if k == 0:
        logger.warning("SSD with k=0 leaves %s unchanged", n.name)
        return SsdResult(n, SsdPlan((), 0, cfg.key_granularity, cfg.strict), 1, base_key)
    if cfg.strict and cfg.key_granularity != "pair":
        raise TransformError("Strict SSD supports pair key granularity only")
    if n.state_width == 0:
        raise InsufficientUrsError("Circuit has no state to duplicate", available=0, requested=k)

    width = n.state_width
    key = base_key if n.key_inputs else None
    reach = reachable_bfs(n, key=key, config=reach_config)
    init = state_code(n.init_state)
    triples = plan_pairs(reach, init, k)

    edges: list[tuple[int, int, int]] = []
    pair_bits: list[tuple[int, ...]] = []
    if cfg.key_granularity == "edge":
        graph = transition_graph(n, key, config=reach_config)
        for orig, _, _ in triples:
            bits = []
            for src in sorted(graph.predecessors(orig)):
                bits.append(len(edges))
                edges.append((src, orig, len(edges)))
            pair_bits.append(tuple(bits))
        key_width = len(edges)
    else:
        pair_bits = [(j,) for j in range(k)]
        key_width = k

    def vec(code: int) -> BitVector:
        return BitVector.from_int(code, width)

    plan = SsdPlan(
        pairs=tuple(
            SsdPair(vec(o), vec(d), bits, hd) for (o, d, hd), bits in zip(triples, pair_bits)
        ),
        key_width=key_width,
        granularity=cfg.key_granularity,
        strict=cfg.strict,
        edges=tuple(SsdEdge(vec(s), vec(t), bit) for s, t, bit in edges),
        key_offset=len(n.key_inputs),
    )
    netlist = _encode(n, plan, prefix)
    count = 1 if cfg.strict else 1 << key_width
    reference = base_key + BitVector.ones(key_width)
    for pair in plan.pairs:
        logger.info(
            "SSD: %s duplicated as %s (hd=%d, key bits %s)",
            pair.original, pair.duplicate, pair.hd, list(pair.key_bits),
        )
    return SsdResult(netlist, plan, count, reference)


def _encode(n: Netlist, plan: SsdPlan, prefix: str) -> Netlist:
    b = NetlistBuilder.from_netlist(n)
    b.name = f"{n.name}_ssd"
    qs = b.flipflop_q
    width = len(qs)
    keys = b.add_key_inputs(prefix, plan.key_width)
    origs = [p.original.bits for p in plan.pairs]
    dups = [p.duplicate.bits for p in plan.pairs]

    before = b.gate_outputs()
    at_dup = [b.match(qs, bits) for bits in dups]
    traps: list[int] = []
    if plan.strict:
        live = [b.and_all([m, keys[p.key_bit_index]]) for m, p in zip(at_dup, plan.pairs)]
        traps = [
            b.and_all([m, b.inv(keys[p.key_bit_index])]) for m, p in zip(at_dup, plan.pairs)
        ]
    else:
        live = at_dup
    canonical = []
    for i, q in enumerate(qs):
        terms = [live[j] for j in range(len(dups)) if origs[j][i] != dups[j][i]]
        if terms:
            canonical.append(
                b.add_gate(GateKind.XOR, [q, b.or_all(terms)], b.fresh_name(f"{b.name_of(q)}_c"))
            )
        else:
            canonical.append(q)
    created = b.gate_outputs() - before
    for q, qc in zip(qs, canonical):
        if qc != q:
            b.replace_readers(q, qc, skip_gate_outputs=created)

    nexts = b.flipflop_d
    steer = []
    for j, pair in enumerate(plan.pairs):
        into = b.match(nexts, origs[j])
        if plan.strict:
            steer.append(into)
        elif plan.granularity == "edge":
            terms = [
                b.and_all([into, b.match(canonical, e.source.bits), keys[e.key_bit]])
                for e in plan.edges
                if e.target == pair.original
            ]
            steer.append(b.or_all(terms))
        else:
            steer.append(b.and_all([into, keys[pair.key_bit_index]]))
    any_trap = b.or_all(traps) if traps else None
    for i in range(width):
        terms = [steer[j] for j in range(len(dups)) if origs[j][i] != dups[j][i]]
        d = nexts[i]
        if terms:
            d = b.add_gate(GateKind.XOR, [d, b.or_all(terms)])
        if any_trap is not None:
            hold = [traps[j] for j in range(len(dups)) if dups[j][i]]
            d = b.or_all([b.and_all([d, b.inv(any_trap)]), *hold])
        b.set_flipflop_d(i, d)
    if any_trap is not None and b.outputs:
        b.set_output(0, b.add_gate(GateKind.XOR, [b.outputs[0], any_trap]))
    return b.build()


def count_correct_keys(
    r: SsdResult,
    exhaustive_limit: int = 20,
    *,
    config: ReachConfig | None = None,
    samples: int = 256,
    frames: int = 64,
    seed: int = 0,
) -> KeyCount:
    """Count SSD keys behaving like the reference key.

    The reference is the all-ones key, not all zeros. In the default mode the
    all-zeros key is itself correct, so either choice gives the same count.

    Exact product-machine equivalence over all 2^key_width keys when feasible;
    otherwise random keys are compared by random simulation and the count is
    scaled up (method "sampled").
    """
    width = r.plan.key_width
    total = 1 << width
    base = r.reference_key.bits[: r.plan.key_offset]
    if width <= exhaustive_limit:
        try:
            count = 0
            for value in range(total):
                key = BitVector(base) + BitVector.from_int(value, width)
                result = check_equivalence(
                    r.netlist, r.reference_key, r.netlist, key, config=config
                )
                if result.equivalent:
                    count += 1
            return KeyCount(count, total, "exact")
        except StateSpaceError as exc:
            logger.info("Exact key count infeasible (%s); sampling", exc)
    rng = np.random.default_rng(seed)
    n = r.netlist
    keys = np.concatenate(
        [
            np.tile(np.array(base, dtype=bool), (samples, 1)),
            rng.integers(0, 2, (samples, width)).astype(bool),
        ],
        axis=1,
    )
    stimuli = rng.integers(0, 2, (samples, frames, len(n.inputs))).astype(bool)
    ref = np.tile(np.array(r.reference_key.bits, dtype=bool), (samples, 1))
    same = (simulate_batch(n, keys, stimuli) == simulate_batch(n, ref, stimuli)).all(axis=(1, 2))
    return KeyCount(int(round(same.mean() * total)), total, "sampled")

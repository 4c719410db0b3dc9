"""Obfuscation composition and the benchmark harness."""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional

from dfssd._logging import cell_context
from dfssd.config import AppConfig, BenchManifest, SchemeSpec
from dfssd.exceptions import DfssdError, TransformError
from dfssd.hooks import CellEvent, HookRunner
from dfssd.modules.attack import AttackReport, Termination, run_attack
from dfssd.modules.bench import load_netlist, write_netlist
from dfssd.modules.deepfault import (
    DeepFaultResult,
    DepthBound,
    DummyMode,
    ProtectedPattern,
    TracerConfig,
    apply_df,
    hide_tracer,
)
from dfssd.modules.netlist import Netlist
from dfssd.modules.simulator import BitVector, OracleHandle
from dfssd.modules.ssd import SsdResult, apply_ssd
from dfssd.services.store import ResultStore

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("circuit", "scheme", "iterations", "last_dis_len", "time_s", "termination")


@dataclasses.dataclass(frozen=True)
class ObfuscationResult:
    netlist: Netlist
    key: BitVector
    ssd: Optional[SsdResult] = None
    df: Optional[DeepFaultResult] = None

    @property
    def bound(self) -> Optional[DepthBound]:
        return self.df.bound if self.df else None

    def plan(self) -> dict[str, object]:
        return {
            "schema": 1,
            "circuit": self.netlist.name,
            "key": str(self.key),
            "ssd": self.ssd.plan.to_dict() if self.ssd else None,
            "ssd_correct_keys": self.ssd.correct_key_count if self.ssd else None,
            "deepfault": self.df.to_dict() if self.df else None,
        }

    def write(self, out: str | Path, *, keep_mux: bool = False) -> list[Path]:
        """Write `<out>.bench`, `<out>.key`, `<out>.plan.json` and a sidecar if needed."""
        base = Path(out).expanduser()
        if base.suffix == ".bench":
            base = base.with_suffix("")
        written = write_netlist(self.netlist, base.with_suffix(".bench"), keep_mux=keep_mux)
        key_path = base.with_suffix(".key")
        key_path.write_text(f"{self.key}\n")
        plan_path = base.with_suffix(".plan.json")
        plan_path.write_text(json.dumps(self.plan(), indent=2) + "\n")
        return [*written, key_path, plan_path]


def obfuscate(
    n: Netlist,
    *,
    ssd: int = 0,
    df: int = 0,
    config: AppConfig | None = None,
    tracer: TracerConfig | None = None,
    pattern: ProtectedPattern | BitVector | None = None,
    hide: DummyMode | str | None = None,
    order: str | None = None,
) -> ObfuscationResult:
    """Apply SSD and/or a deep fault to ``n``.

    With both enabled the default order is SSD first, so the deep-fault
    pattern may land on a duplicate state.
    """
    config = config or AppConfig()
    if ssd < 0 or df < 0:
        raise TransformError("ssd and df must be >= 0")
    order = order or config.deepfault.order
    hide = hide if hide is not None else config.deepfault.hide
    if df:
        tracer = tracer or TracerConfig.from_config(config.deepfault)
        if tracer.width != df:
            tracer = dataclasses.replace(tracer, width=df)

    current, key = n, BitVector(())
    ssd_result: SsdResult | None = None
    df_result: DeepFaultResult | None = None

    def do_ssd() -> None:
        nonlocal current, key, ssd_result
        ssd_result = apply_ssd(
            current, ssd,
            config=config.ssd, reach_config=config.reach,
            netlist_config=config.netlist, base_key=key,
        )
        current, key = ssd_result.netlist, ssd_result.reference_key

    def do_df() -> None:
        nonlocal current, key, df_result
        assert tracer is not None
        df_result = apply_df(
            current, tracer, pattern,
            target_output=config.deepfault.target_output,
            state_bits=config.deepfault.state_bits,
            base_key=key,
            netlist_config=config.netlist, reach_config=config.reach,
        )
        if hide:
            df_result = hide_tracer(
                df_result, hide, free_keys=_ssd_key_positions(ssd_result), config=config.reach
            )
        current, key = df_result.netlist, df_result.key

    steps = []
    if ssd:
        steps.append(do_ssd)
    if df:
        steps.insert(0 if order == "df-first" else len(steps), do_df)
    if not steps:
        logger.warning("No obfuscation requested; %s is unchanged", n.name)
    for step in steps:
        step()
    return ObfuscationResult(current, key, ssd_result, df_result)


def _ssd_key_positions(r: SsdResult | None) -> range:
    """Key positions where every value is correct: the SSD bits of a non-strict lock."""
    if r is None or r.plan.strict:
        return range(0)
    return range(r.plan.key_offset, r.plan.key_offset + r.plan.key_width)


@dataclasses.dataclass(frozen=True)
class BenchRow:
    circuit: str
    scheme: str
    seed: int
    termination: Optional[str] = None
    iterations: int = 0
    last_dis_len: int = 0
    time_s: float = 0.0
    key: Optional[str] = None
    key_recovered: Optional[bool] = None
    error: Optional[str] = None

    @property
    def timed_out(self) -> bool:
        return self.termination == Termination.TIMEOUT

    @property
    def ds(self) -> str:
        return f"{self.iterations}/{self.last_dis_len}"

    @classmethod
    def from_store(cls, row: dict) -> BenchRow:
        return cls(
            circuit=row["circuit"],
            scheme=row["scheme"],
            seed=row["seed"],
            termination=row["termination"],
            iterations=row["iterations"] or 0,
            last_dis_len=row["last_dis_len"] or 0,
            time_s=row["time_s"] or 0.0,
            key=row["key"],
            error=row["error_message"],
        )


@dataclasses.dataclass(frozen=True)
class BenchReport:
    rows: tuple[BenchRow, ...]

    @property
    def failures(self) -> tuple[BenchRow, ...]:
        return tuple(r for r in self.rows if r.error)

    @property
    def any_timeout(self) -> bool:
        return any(r.timed_out for r in self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            writer.writerow(
                [r.circuit, r.scheme, r.iterations, r.last_dis_len,
                 f"{r.time_s:.3f}", r.termination or "ERROR"]
            )
        return buf.getvalue()

    def format_table(self) -> str:
        header = ("Circuit", "Scheme", "D/S", "Time", "Term")
        body = []
        for r in self.rows:
            if r.error:
                body.append((r.circuit, r.scheme, "-", "-", "ERROR"))
            elif r.timed_out:
                body.append((r.circuit, r.scheme, r.ds, "TO", "TO"))
            else:
                body.append((r.circuit, r.scheme, r.ds, f"{r.time_s:.2f}", r.termination or "-"))
        widths = [max(len(str(row[i])) for row in (header, *body)) for i in range(len(header))]
        lines = ["  ".join(str(c).ljust(w) for c, w in zip(row, widths)).rstrip()
                 for row in (header, *body)]
        return "\n".join(lines)


class BenchPipeline:
    """Runs obfuscate + attack for every circuit x scheme cell of a manifest."""

    def __init__(
        self,
        config: AppConfig,
        *,
        hooks: HookRunner | None = None,
        store: ResultStore | None = None,
        output_dir: Path | None = None,
        resume: bool = True,
        cancel_event: threading.Event | None = None,
    ) -> None:
        self._config = config
        self._hooks = hooks or HookRunner()
        self._store = store
        self._output_dir = output_dir
        self._resume = resume
        self._cancel = cancel_event
        self._store_lock = threading.Lock()

    def run(self, manifest: BenchManifest) -> BenchReport:
        cells = [(c, s) for c in manifest.circuits for s in manifest.schemes]
        logger.info("Bench: %d cell(s), seed %d", len(cells), manifest.seed)
        if not cells:
            return BenchReport(())
        workers = self._config.bench.workers
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                rows = list(pool.map(lambda cell: self._cell(*cell, manifest), cells))
        else:
            rows = [self._cell(c, s, manifest) for c, s in cells]
        return BenchReport(tuple(r for r in rows if r is not None))

    def _cell(self, circuit: str, scheme: SchemeSpec, manifest: BenchManifest) -> BenchRow | None:
        name = Path(circuit).stem
        label = scheme.label
        if self._cancel is not None and self._cancel.is_set():
            logger.info("Bench cancelled before %s/%s", name, label)
            return None
        if self._resume and self._store is not None:
            with self._store_lock:
                done = self._store.results.is_done(name, label, manifest.seed)
                stored = self._store.results.get_result(name, label, manifest.seed)
            if done and stored is not None:
                logger.info("Skipping finished cell %s/%s", name, label)
                return BenchRow.from_store(stored)
        try:
            with cell_context(name, label):
                row, report = self.run_cell(circuit, scheme, manifest)
        except DfssdError as exc:
            logger.error("Cell %s/%s failed: %s", name, label, exc)
            row, report = BenchRow(name, label, manifest.seed, error=str(exc)), None
        except Exception as exc:
            logger.exception("Unexpected failure in cell %s/%s", name, label)
            row, report = BenchRow(name, label, manifest.seed, error=repr(exc)), None
        self._persist(row, report)
        self._hooks.fire_cell(CellEvent(name, label, row.termination, row.error))
        return row

    def run_cell(
        self, circuit: str, scheme: SchemeSpec, manifest: BenchManifest
    ) -> tuple[BenchRow, AttackReport]:
        cfg = self._config
        name = Path(circuit).stem
        original = load_netlist(circuit, cfg.netlist)
        deepfault = cfg.deepfault.model_copy(
            update={"width": scheme.df or cfg.deepfault.width, "tracer": scheme.tracer}
        )
        cell_cfg = cfg.model_copy(update={"deepfault": deepfault})
        ob = obfuscate(original, ssd=scheme.ssd, df=scheme.df, config=cell_cfg)
        attack_cfg = cfg.attack
        if manifest.time_budget_sec is not None:
            attack_cfg = attack_cfg.model_copy(
                update={"time_budget_sec": manifest.time_budget_sec}
            )
        report = run_attack(
            ob.netlist, OracleHandle(ob.netlist, ob.key), attack_cfg,
            solver=cfg.solver, reach=cfg.reach, hooks=self._hooks,
        )
        recovered = None
        if report.key_class is not None and report.key_class.complete:
            recovered = ob.key in report.key_class.members
        last = report.last_dis
        row = BenchRow(
            circuit=name,
            scheme=scheme.label,
            seed=manifest.seed,
            termination=str(report.termination),
            iterations=report.iterations,
            last_dis_len=last.length if last else 0,
            time_s=report.timing.get("total", 0.0),
            key=str(ob.key),
            key_recovered=recovered,
        )
        if self._output_dir is not None:
            self._write_artifacts(ob, report, name, scheme.label)
        return row, report

    def _write_artifacts(
        self, ob: ObfuscationResult, report: AttackReport, name: str, label: str
    ) -> None:
        assert self._output_dir is not None
        base = self._output_dir / name / label.replace("+", "_")
        base.parent.mkdir(parents=True, exist_ok=True)
        ob.write(base)
        report_path = base.with_suffix(".report.json")
        report_path.write_text(json.dumps(report.to_dict(), indent=2) + "\n")

    def _persist(self, row: BenchRow, report: AttackReport | None) -> None:
        if self._store is None:
            return
        with self._store_lock:
            result_id = self._store.results.upsert_result(
                row.circuit, row.scheme, row.seed,
                termination=row.termination,
                iterations=row.iterations,
                last_dis_len=row.last_dis_len,
                time_s=row.time_s,
                key=row.key,
                error_message=row.error,
                report=report.to_dict() if report is not None else None,
            )
            if self._output_dir is not None and row.error is None:
                base = self._output_dir / row.circuit / row.scheme.replace("+", "_")
                for kind, suffix in (("netlist", ".bench"), ("key", ".key"),
                                     ("report", ".report.json")):
                    self._store.artifacts.add(result_id, kind, str(base.with_suffix(suffix)))

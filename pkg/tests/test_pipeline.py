"""Tests for obfuscation composition and the bench harness."""

import csv
import io
import json
import threading

import pytest

from dfssd import pipeline
from dfssd.config import BenchManifest, SchemeSpec
from dfssd.exceptions import DummyInsertionError, InsufficientUrsError, TransformError
from dfssd.hooks import HookRunner
from dfssd.modules.bench import load_netlist
from dfssd.modules.deepfault import scc_report
from dfssd.modules.reachability import check_equivalence
from dfssd.modules.simulator import BitVector, OracleHandle, simulate
from dfssd.pipeline import CSV_COLUMNS, BenchPipeline, BenchReport, BenchRow, obfuscate


def _equivalent(original, result):
    return check_equivalence(original, BitVector(()), result.netlist, result.key).equivalent


class TestObfuscate:
    def test_ssd_only(self, fsm5):
        result = obfuscate(fsm5, ssd=1)
        assert result.ssd is not None and result.df is None
        assert result.bound is None
        assert len(result.key) == len(result.netlist.key_inputs)
        assert _equivalent(fsm5, result)

    def test_df_only(self, detector):
        result = obfuscate(detector, df=2)
        assert result.df is not None and result.ssd is None
        assert result.df.tracer.width == 2
        assert result.bound is not None
        assert _equivalent(detector, result)

    @pytest.mark.parametrize("order", ["ssd-first", "df-first"])
    def test_both_orders_stay_equivalent(self, fsm5, order):
        result = obfuscate(fsm5, ssd=1, df=2, order=order)
        assert result.ssd is not None and result.df is not None
        assert len(result.key) == len(result.netlist.key_inputs)
        assert _equivalent(fsm5, result)

    @pytest.mark.parametrize("hide", ["covert", "nonoccur"])
    def test_hidden_tracer_stays_equivalent(self, detector, hide):
        result = obfuscate(detector, df=2, hide=hide)
        assert _equivalent(detector, result)

    def test_nonoccur_after_ssd_keeps_every_ssd_key(self, fsm5):
        result = obfuscate(fsm5, ssd=1, df=2, hide="nonoccur")
        keys = _accepted_keys(result)
        assert len(keys) == 2
        for key in keys:
            assert check_equivalence(fsm5, BitVector(()), result.netlist, key).equivalent

    def test_nonoccur_refused_when_duplicates_fill_the_code_space(self, detector):
        with pytest.raises(DummyInsertionError):
            obfuscate(detector, ssd=1, df=2, hide="nonoccur")

    def test_nothing_requested(self, detector, caplog):
        result = obfuscate(detector)
        assert result.netlist is detector
        assert len(result.key) == 0
        assert "No obfuscation requested" in caplog.text

    def test_negative_rejected(self, detector):
        with pytest.raises(TransformError):
            obfuscate(detector, ssd=-1)

    def test_deterministic(self, fsm5):
        a = obfuscate(fsm5, ssd=1, df=2)
        b = obfuscate(fsm5, ssd=1, df=2)
        assert a.key == b.key
        assert a.plan() == b.plan()

    def test_write(self, fsm5, tmp_path):
        result = obfuscate(fsm5, ssd=1, df=2)
        paths = result.write(tmp_path / "fsm5_locked.bench")
        names = {p.name for p in paths}
        assert {"fsm5_locked.bench", "fsm5_locked.key", "fsm5_locked.plan.json"} <= names
        assert (tmp_path / "fsm5_locked.key").read_text().strip() == str(result.key)
        plan = json.loads((tmp_path / "fsm5_locked.plan.json").read_text())
        assert plan["schema"] == 1
        assert plan["key"] == str(result.key)
        assert plan["ssd"] is not None and plan["deepfault"] is not None
        reloaded = load_netlist(tmp_path / "fsm5_locked.bench")
        assert check_equivalence(fsm5, BitVector(()), reloaded, result.key).equivalent


def _row(**kwargs):
    base = dict(circuit="c", scheme="DF2", seed=0, termination="UC", iterations=3,
                last_dis_len=4, time_s=0.25, key="1011")
    return BenchRow(**(base | kwargs))


class TestBenchReport:
    def test_csv_columns(self):
        report = BenchReport((_row(), _row(scheme="SSD", termination=None, error="boom")))
        rows = list(csv.reader(io.StringIO(report.to_csv())))
        assert tuple(rows[0]) == CSV_COLUMNS
        assert rows[1] == ["c", "DF2", "3", "4", "0.250", "UC"]
        assert rows[2][-1] == "ERROR"

    def test_table_markers(self):
        report = BenchReport((
            _row(),
            _row(scheme="SSD", termination="Timeout"),
            _row(scheme="SSD+DF2", termination=None, error="boom"),
        ))
        lines = report.format_table().splitlines()
        assert lines[0].split() == ["Circuit", "Scheme", "D/S", "Time", "Term"]
        assert lines[1].split() == ["c", "DF2", "3/4", "0.25", "UC"]
        assert lines[2].split()[-2:] == ["TO", "TO"]
        assert lines[3].split()[-1] == "ERROR"
        assert report.any_timeout
        assert len(report.failures) == 1


@pytest.fixture
def manifest(circuits_dir):
    return BenchManifest(
        circuits=[str(circuits_dir / "detector011.bench")],
        schemes=[SchemeSpec(df=2), SchemeSpec(ssd=1)],
        seed=7,
    )


class TestBenchPipeline:
    def test_run(self, sample_config, manifest, memory_store):
        report = BenchPipeline(sample_config, store=memory_store).run(manifest)
        assert [(r.circuit, r.scheme) for r in report.rows] == [
            ("detector011", "DF2"), ("detector011", "SSD"),
        ]
        assert not report.failures
        assert all(r.termination in ("UC", "CE", "UMC") for r in report.rows)
        assert all(r.key_recovered is not False for r in report.rows)
        stored = memory_store.results.get_results(seed=7)
        assert len(stored) == 2
        assert all(memory_store.results.is_done(r["circuit"], r["scheme"], 7) for r in stored)

    def test_resume_skips_finished(self, sample_config, manifest, memory_store, mocker):
        BenchPipeline(sample_config, store=memory_store).run(manifest)
        spy = mocker.spy(BenchPipeline, "run_cell")
        report = BenchPipeline(sample_config, store=memory_store).run(manifest)
        assert spy.call_count == 0
        assert len(report.rows) == 2

    def test_no_resume_reruns(self, sample_config, manifest, memory_store, mocker):
        BenchPipeline(sample_config, store=memory_store).run(manifest)
        spy = mocker.spy(BenchPipeline, "run_cell")
        BenchPipeline(sample_config, store=memory_store, resume=False).run(manifest)
        assert spy.call_count == 2

    def test_failure_isolated(self, sample_config, circuits_dir, tmp_path, memory_store, mocker):
        bad = tmp_path / "bad.bench"
        bad.write_text("INPUT(a)\nOUTPUT(y)\ny = FROB(a)\n")
        manifest = BenchManifest(
            circuits=[str(bad), str(circuits_dir / "detector011.bench")],
            schemes=[SchemeSpec(df=2)],
        )
        hook = mocker.Mock()
        report = BenchPipeline(
            sample_config, store=memory_store, hooks=HookRunner([hook])
        ).run(manifest)
        assert len(report.rows) == 2
        assert report.rows[0].error is not None
        assert report.rows[1].error is None
        assert len(memory_store.results.get_failed()) == 1
        events = [c.args[0] for c in hook.on_cell.call_args_list]
        assert [(e.circuit, e.error is None) for e in events] == [
            ("bad", False), ("detector011", True),
        ]

    def test_unexpected_error_isolated(self, sample_config, manifest, mocker):
        mocker.patch("dfssd.pipeline.run_attack", side_effect=RuntimeError("solver exploded"))
        report = BenchPipeline(sample_config).run(manifest)
        assert len(report.failures) == 2
        assert "solver exploded" in report.failures[0].error

    def test_empty_manifest(self, sample_config):
        assert BenchPipeline(sample_config).run(BenchManifest()).rows == ()

    def test_cancel(self, sample_config, manifest):
        cancel = threading.Event()
        cancel.set()
        report = BenchPipeline(sample_config, cancel_event=cancel).run(manifest)
        assert report.rows == ()

    def test_time_budget_override(self, sample_config, manifest, mocker):
        spy = mocker.spy(pipeline, "run_attack")
        budgeted = manifest.model_copy(update={"time_budget_sec": 60.0})
        BenchPipeline(sample_config).run(budgeted)
        assert all(c.args[2].time_budget_sec == 60.0 for c in spy.call_args_list)

    def test_artifacts(self, sample_config, manifest, memory_store, tmp_path):
        out = tmp_path / "artifacts"
        BenchPipeline(sample_config, store=memory_store, output_dir=out).run(manifest)
        assert (out / "detector011" / "DF2.bench").exists()
        assert (out / "detector011" / "DF2.key").exists()
        report = json.loads((out / "detector011" / "SSD.report.json").read_text())
        assert report["circuit"] == "detector011"
        row = memory_store.results.get_result("detector011", "DF2", 7)
        artifacts = memory_store.artifacts.get_for_result(row["id"])
        assert set(artifacts) == {"netlist", "key", "report"}

    def test_parallel_workers(self, sample_config, manifest):
        bench = sample_config.bench.model_copy(update={"workers": 2})
        config = sample_config.model_copy(update={"bench": bench})
        report = BenchPipeline(config).run(manifest)
        assert {r.scheme for r in report.rows} == {"DF2", "SSD"}
        assert not report.failures


@pytest.mark.slow
class TestSchemeSweep:
    def test_terminations_and_ordering(self, sample_config, circuits_dir, memory_store):
        names = ["s27", "mod5", "johnson4"]
        manifest = BenchManifest(
            circuits=[str(circuits_dir / f"{name}.bench") for name in names],
            schemes=[
                SchemeSpec(ssd=1), SchemeSpec(df=3), SchemeSpec(df=4), SchemeSpec(ssd=1, df=3),
            ],
            time_budget_sec=600,
        )
        report = BenchPipeline(sample_config, store=memory_store).run(manifest)
        assert not report.failures
        cells = {(r.circuit, r.scheme): r for r in report.rows}
        assert len(cells) == 12
        for name in names:
            assert cells[name, "SSD"].termination == "UMC"
            assert cells[name, "SSD"].iterations == 0
            assert cells[name, "DF3"].termination == "UC"
            assert cells[name, "DF4"].termination == "UC"
            assert cells[name, "DF4"].last_dis_len >= cells[name, "DF3"].last_dis_len
            dfssd = cells[name, "SSD+DF3"]
            assert dfssd.termination in ("UMC", "Timeout")
            if dfssd.termination == "UMC":
                assert dfssd.time_s > cells[name, "DF3"].time_s


SCHEMES = [
    dict(ssd=1),
    dict(df=2),
    dict(ssd=1, df=2),
    dict(ssd=1, df=2, order="df-first"),
    dict(df=2, hide="covert"),
    dict(df=2, hide="nonoccur"),
    dict(ssd=1, df=2, hide="covert"),
    dict(ssd=1, df=2, hide="nonoccur"),
]


def _scheme_id(scheme):
    return "-".join(f"{k}={v}" for k, v in scheme.items())


def _accepted_keys(result):
    """The emitted key under every value of its SSD bits (all correct unless strict)."""
    if result.ssd is None or result.ssd.plan.strict:
        return [result.key]
    plan = result.ssd.plan
    keys = []
    for value in range(1 << plan.key_width):
        bits = list(result.key.bits)
        bits[plan.key_offset : plan.key_offset + plan.key_width] = BitVector.from_int(
            value, plan.key_width
        ).bits
        keys.append(BitVector(tuple(bits)))
    return keys


def _locked(original, scheme):
    try:
        return obfuscate(original, **scheme)
    except (InsufficientUrsError, DummyInsertionError) as exc:
        pytest.skip(f"transform refused: {exc}")


class TestSoundness:
    @pytest.mark.parametrize("seed", range(25))
    @pytest.mark.parametrize("scheme", SCHEMES, ids=_scheme_id)
    def test_every_accepted_key_preserves_function(self, random_fsm, seed, scheme):
        original = random_fsm(seed, num_states=3 + seed % 5)
        result = _locked(original, scheme)
        for key in _accepted_keys(result):
            assert check_equivalence(original, BitVector(()), result.netlist, key).equivalent
        if "hide" in scheme:
            summary = scc_report(result.netlist, result.df.tracer_nets)
            assert summary.merged
            assert not summary.tracer_isolated

    @pytest.mark.slow
    @pytest.mark.parametrize("seed", range(5))
    @pytest.mark.parametrize("scheme", SCHEMES, ids=_scheme_id)
    def test_attack_key_class_reproduces_oracle(self, random_fsm, fast_attack, seed, scheme):
        original = random_fsm(seed)
        result = _locked(original, scheme)
        report = pipeline.run_attack(
            result.netlist, OracleHandle(result.netlist, result.key), fast_attack
        )
        for dis in report.dis_log:
            out = simulate(result.netlist, result.key, dis.seq)
            assert out.frames == dis.oracle_out.frames
        key_class = report.key_class
        if not report.termination.success or key_class is None or not key_class.complete:
            return
        assert result.key in key_class.members
        for member in key_class.members[:8]:
            assert check_equivalence(
                result.netlist, result.key, result.netlist, member
            ).equivalent

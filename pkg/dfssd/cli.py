"""Command-line interface for dfssd-toolkit."""

from __future__ import annotations

import contextlib
import json
import re
from collections.abc import Iterator
from pathlib import Path
from typing import TYPE_CHECKING

import click

from dfssd._logging import setup_logging
from dfssd.config import AppConfig, load_config
from dfssd.exceptions import (
    AttackError,
    ConfigError,
    LockError,
    NetlistError,
    StateSpaceError,
    TransformError,
    WidthMismatchError,
)

if TYPE_CHECKING:
    from dfssd.modules.simulator import BitVector

EXIT_INPUT_ERROR = 2
EXIT_BUDGET = 3

_BITS_RE = re.compile(r"^[01]*$")

_config_option = click.option(
    "-c", "--config", "config_path", type=click.Path(exists=True), default=None,
    help="Path to config YAML file.",
)
_verbose_option = click.option(
    "-v", "--verbose", count=True, help="Increase verbosity (-v INFO, -vv DEBUG)."
)


@click.group()
@click.version_option(package_name="dfssd-toolkit")
def cli() -> None:
    """Shallow State Duality / Deep Fault obfuscation and sequential SAT attack."""


@contextlib.contextmanager
def _input_errors() -> Iterator[None]:
    """Map toolkit errors to exit code 2."""
    try:
        yield
    except (
        NetlistError, TransformError, ConfigError, WidthMismatchError,
        AttackError, StateSpaceError, LockError, OSError,
    ) as exc:
        click.echo(f"Error: {exc}", err=True)
        raise SystemExit(EXIT_INPUT_ERROR) from exc


def _bits(value: str | None, what: str) -> BitVector:
    """A bit string, or the first line of a file holding one (e.g. a `.key` file)."""
    from dfssd.modules.simulator import BitVector

    if value is None:
        return BitVector(())
    text = value.strip()
    if not _BITS_RE.match(text):
        path = Path(text).expanduser()
        if not path.exists():
            raise click.BadParameter(f"{what} must be a 0/1 string or a file: {value}")
        lines = path.read_text().split()
        text = lines[0] if lines else ""
        if not _BITS_RE.match(text):
            raise ConfigError(f"{path} does not hold a 0/1 string")
    return BitVector.from_str(text)


@cli.command()
@click.argument("netlist", type=click.Path(exists=True))
@click.option("--sidecar", type=click.Path(exists=True), default=None,
              help="Sidecar JSON (key prefix, flip-flop init values).")
@click.option("-o", "--output", type=click.Path(), default=None,
              help="Write the parsed netlist back as .bench.")
@click.option("--keep-mux", is_flag=True, help="Write MUX gates as-is instead of expanding.")
@_config_option
@_verbose_option
def parse(
    netlist: str, sidecar: str | None, output: str | None, keep_mux: bool,
    config_path: str | None, verbose: int,
) -> None:
    """Parse a .bench or KISS2 file and print its summary."""
    setup_logging(verbose)
    with _input_errors():
        config = _load(config_path)
        from dfssd.modules.bench import load_netlist, write_netlist

        n = load_netlist(netlist, config.netlist, sidecar=sidecar)
        click.echo(json.dumps(n.summary(), indent=2))
        if output:
            for path in write_netlist(n, output, keep_mux=keep_mux or config.netlist.keep_mux):
                click.echo(f"Wrote {path}", err=True)


@cli.command()
@click.argument("netlist", type=click.Path(exists=True))
@click.option("--key", "key_bits", default=None, help="Key bits (or a .key file).")
@click.option("--stimulus", type=click.Path(exists=True), required=True,
              help="Stimulus file: one frame of 0/1 per line.")
@_config_option
@_verbose_option
def simulate(
    netlist: str, key_bits: str | None, stimulus: str, config_path: str | None, verbose: int
) -> None:
    """Simulate a netlist from reset and print one output frame per line."""
    setup_logging(verbose)
    with _input_errors():
        config = _load(config_path)
        from dfssd.modules.bench import load_netlist
        from dfssd.modules.simulator import read_stimulus
        from dfssd.modules.simulator import simulate as run_sim

        n = load_netlist(netlist, config.netlist)
        seq = read_stimulus(Path(stimulus).read_text(), len(n.inputs))
        out = run_sim(n, _bits(key_bits, "--key"), seq)
        for frame in out:
            click.echo(str(frame))


@cli.command()
@click.argument("netlist", type=click.Path(exists=True))
@click.option("--key", "key_bits", default=None, help="Fix key inputs to these bits.")
@_config_option
@_verbose_option
def reach(netlist: str, key_bits: str | None, config_path: str | None, verbose: int) -> None:
    """Report reachable states and the minimum-distance unreachable state as JSON."""
    setup_logging(verbose)
    with _input_errors():
        config = _load(config_path)
        from dfssd.modules.bench import load_netlist
        from dfssd.modules.reachability import find_urs_min_hd, reachable_bfs

        n = load_netlist(netlist, config.netlist)
        key = _bits(key_bits, "--key") if key_bits is not None else None
        data: dict[str, object] = {"circuit": n.name, "flipflops": n.state_width}
        if n.state_width <= config.reach.explicit_ff_limit:
            states = reachable_bfs(n, key=key, config=config.reach)
            data["reachable"] = len(states)
            data["urs_count"] = (1 << n.state_width) - len(states)
            data["max_depth"] = states.max_depth
        witness = find_urs_min_hd(n, key=key, config=config.reach, solver=config.solver)
        data["min_hd"] = witness.to_dict()
        click.echo(json.dumps(data, indent=2))


@cli.command()
@click.argument("netlist", type=click.Path(exists=True))
@click.option("-o", "--output", type=click.Path(), default=None,
              help="Output base path (default: <input>_locked).")
@click.option("--ssd", "ssd_k", type=int, default=0, help="Number of duplicated states.")
@click.option("--df", "df_width", type=int, default=0, help="Deep-fault tracer width.")
@click.option("--tracer", type=click.Choice(["clock", "transition", "lfsr"]), default=None)
@click.option("--trigger", nargs=2, default=None, help="Transition trigger: FROM TO.")
@click.option("--pattern", default=None, help="Protected pattern bits (state + tracer).")
@click.option("--pseudo-counter", is_flag=True, default=None)
@click.option("--hide", type=click.Choice(["covert", "nonoccur"]), default=None)
@click.option("--order", type=click.Choice(["ssd-first", "df-first"]), default=None)
@click.option("--strict", is_flag=True, default=None, help="Strict SSD: one correct key.")
@click.option("--granularity", type=click.Choice(["pair", "edge"]), default=None)
@click.option("--keep-mux", is_flag=True)
@_config_option
@_verbose_option
def obfuscate(
    netlist: str, output: str | None, ssd_k: int, df_width: int, tracer: str | None,
    trigger: tuple[str, str] | None, pattern: str | None, pseudo_counter: bool | None,
    hide: str | None, order: str | None, strict: bool | None, granularity: str | None,
    keep_mux: bool, config_path: str | None, verbose: int,
) -> None:
    """Lock a circuit with SSD and/or a deep fault."""
    setup_logging(verbose)
    with _input_errors():
        config = _load(config_path)
        df_updates: dict[str, object] = {}
        if df_width:
            df_updates["width"] = df_width
        for field, value in (("tracer", tracer), ("trigger", trigger),
                             ("pseudo_counter", pseudo_counter), ("hide", hide),
                             ("order", order)):
            if value:
                df_updates[field] = value
        ssd_updates = {k: v for k, v in (("strict", strict), ("key_granularity", granularity))
                       if v}
        try:
            config = AppConfig.model_validate(
                config.model_dump()
                | {"deepfault": config.deepfault.model_dump() | df_updates,
                   "ssd": config.ssd.model_dump() | ssd_updates}
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

        from dfssd.modules.bench import load_netlist
        from dfssd.pipeline import obfuscate as run_obfuscate

        n = load_netlist(netlist, config.netlist)
        result = run_obfuscate(
            n, ssd=ssd_k, df=df_width, config=config,
            pattern=_bits(pattern, "--pattern") if pattern else None,
        )
        out = output or str(Path(netlist).with_suffix("")) + "_locked"
        for path in result.write(out, keep_mux=keep_mux or config.netlist.keep_mux):
            click.echo(f"Wrote {path}", err=True)
        click.echo(f"Key:   {result.key}")
        if result.ssd is not None:
            click.echo(f"SSD:   {len(result.ssd.plan.pairs)} pair(s), "
                       f"{result.ssd.correct_key_count} correct key(s)")
        if result.bound is not None:
            bound = "inf" if result.bound.infinite else result.bound.bound
            click.echo(f"Bound: {bound}")


@cli.command()
@click.argument("locked", type=click.Path(exists=True))
@click.option("--oracle-key", required=True, help="Correct key bits (or a .key file).")
@click.option("--b0", type=int, default=None, help="Initial unrolling boundary.")
@click.option("--step", type=int, default=None, help="Boundary increment.")
@click.option("--budget", type=float, default=None, envvar="DFSSD_TIME_BUDGET",
              help="Time budget in seconds [env: DFSSD_TIME_BUDGET].")
@click.option("--max-boundary", type=int, default=None)
@click.option("--umc", type=click.Choice(["auto", "explicit", "induction", "off"]), default=None)
@click.option("--report", "report_path", type=click.Path(), default=None,
              help="Write the attack report JSON here.")
@click.option("--trace", "trace_path", type=click.Path(), default=None,
              help="Write the per-DIS CSV trace here.")
@click.option("--dump-cnf", type=click.Path(), default=None,
              help="Write the final attack formula as DIMACS.")
@_config_option
@_verbose_option
def attack(
    locked: str, oracle_key: str, b0: int | None, step: int | None, budget: float | None,
    max_boundary: int | None, umc: str | None, report_path: str | None,
    trace_path: str | None, dump_cnf: str | None, config_path: str | None, verbose: int,
) -> None:
    """Run the sequential SAT attack against a locked netlist."""
    setup_logging(verbose)
    with _input_errors():
        config = _load(config_path)
        updates = {k: v for k, v in (
            ("initial_boundary", b0), ("boundary_step", step), ("time_budget_sec", budget),
            ("max_boundary", max_boundary), ("umc_mode", umc),
        ) if v is not None}
        try:
            attack_cfg = type(config.attack).model_validate(
                config.attack.model_dump() | updates
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

        from dfssd.hooks import CsvTraceHook, HookRunner, LoggingHook
        from dfssd.modules.attack import AttackSession, Termination
        from dfssd.modules.bench import load_netlist
        from dfssd.modules.simulator import OracleHandle

        n = load_netlist(locked, config.netlist)
        hooks = HookRunner([LoggingHook()])
        if trace_path:
            hooks.add(CsvTraceHook(trace_path))
        session = AttackSession(
            n, OracleHandle(n, _bits(oracle_key, "--oracle-key")), attack_cfg,
            solver=config.solver, reach=config.reach, hooks=hooks,
        )
        report = session.run()
        if dump_cnf:
            session.model.formula.write_dimacs(dump_cnf)
        data = report.to_dict()
        if report_path:
            Path(report_path).expanduser().write_text(json.dumps(data, indent=2) + "\n")

    last = report.last_dis
    click.echo(f"Termination: {report.termination}")
    click.echo(f"Boundary:    {report.final_boundary}")
    click.echo(f"DISes:       {report.iterations}"
               + (f" (last length {last.length})" if last else ""))
    if report.key is not None:
        click.echo(f"Key:         {report.key}")
    elif report.key_class is not None:
        count = report.key_class.count if report.key_class.count is not None else "?"
        click.echo(f"Key class:   {count} key(s)")
    click.echo(f"Time:        {report.timing.get('total', 0.0):.3f}s")
    if report.termination is Termination.TIMEOUT:
        raise SystemExit(EXIT_BUDGET)


@cli.command()
@click.argument("netlist_a", type=click.Path(exists=True))
@click.argument("netlist_b", type=click.Path(exists=True))
@click.option("--key-a", default=None, help="Key bits for the first netlist.")
@click.option("--key-b", default=None, help="Key bits for the second netlist.")
@click.option("--json", "as_json", is_flag=True, help="Output as JSON.")
@_config_option
@_verbose_option
def verify(
    netlist_a: str, netlist_b: str, key_a: str | None, key_b: str | None, as_json: bool,
    config_path: str | None, verbose: int,
) -> None:
    """Check sequential equivalence of two netlists under the given keys."""
    setup_logging(verbose)
    with _input_errors():
        config = _load(config_path)
        from dfssd.modules.bench import load_netlist
        from dfssd.modules.reachability import check_equivalence

        a = load_netlist(netlist_a, config.netlist)
        b = load_netlist(netlist_b, config.netlist)
        result = check_equivalence(
            a, _bits(key_a, "--key-a"), b, _bits(key_b, "--key-b"), config=config.reach
        )
    cex = result.counterexample
    if as_json:
        click.echo(json.dumps({
            "equivalent": result.equivalent,
            "explored": result.explored,
            "counterexample": [str(f) for f in cex] if cex is not None else None,
        }, indent=2))
    elif result.equivalent:
        click.echo(f"Equivalent ({result.explored} product states explored)")
    else:
        click.echo(f"NOT equivalent: outputs differ at cycle {result.first_divergence}")
        for frame in cex or ():
            click.echo(f"  {frame}")


@cli.command()
@click.argument("manifest", type=click.Path(exists=True))
@click.option("--csv", "csv_path", type=click.Path(), default=None,
              help="Write the result CSV here (default: <output_dir>/bench.csv).")
@click.option("--workers", type=int, default=None, help="Parallel cells.")
@click.option("--no-resume", is_flag=True, help="Re-run cells already stored as finished.")
@_config_option
@_verbose_option
def bench(
    manifest: str, csv_path: str | None, workers: int | None, no_resume: bool,
    config_path: str | None, verbose: int,
) -> None:
    """Run obfuscate + attack over a manifest of circuits x schemes."""
    setup_logging(verbose)
    with _input_errors():
        config = _load(config_path)
        if workers is not None:
            try:
                bench_cfg = type(config.bench).model_validate(
                    config.bench.model_dump() | {"workers": workers}
                )
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
            config = config.model_copy(update={"bench": bench_cfg})

        from dfssd.config import load_manifest
        from dfssd.hooks import HookRunner, LoggingHook
        from dfssd.pipeline import BenchPipeline
        from dfssd.services.lock import FileLock
        from dfssd.services.store import ResultStore

        spec = load_manifest(manifest)
        output_dir = config.bench.resolve_output_dir()
        with FileLock(config.bench.resolve_lock_path()):
            store = ResultStore.from_path(config.bench.resolve_db_path())
            try:
                pipeline = BenchPipeline(
                    config, hooks=HookRunner([LoggingHook()]), store=store,
                    output_dir=output_dir, resume=not no_resume,
                )
                report = pipeline.run(spec)
            finally:
                store.close()
        target = Path(csv_path).expanduser() if csv_path else output_dir / "bench.csv"
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(report.to_csv())

    if report.rows:
        click.echo(report.format_table())
    else:
        click.echo("No bench cells.")
    for row in report.failures:
        click.echo(f"Cell {row.circuit}/{row.scheme} failed: {row.error}", err=True)
    if report.any_timeout:
        raise SystemExit(EXIT_BUDGET)


@cli.command()
@_config_option
@click.option("--validate", is_flag=True, help="Validate only, do not print.")
def config(config_path: str | None, validate: bool) -> None:
    """Show or validate the resolved configuration."""
    try:
        cfg = _load(config_path)
    except ConfigError as exc:
        click.echo(f"Configuration error: {exc}", err=True)
        raise SystemExit(EXIT_INPUT_ERROR)

    if validate:
        click.echo("Configuration is valid.")
    else:
        click.echo(cfg.model_dump_json(indent=2))


def _load(config_path: str | None) -> AppConfig:
    """Load config from explicit path or default locations."""
    if config_path:
        return load_config(config_path)
    for candidate in ["config/settings.yaml", "config/settings.example.yaml"]:
        p = Path(candidate)
        if p.exists():
            return load_config(p)
    return AppConfig()

"""
The `pdtour` command line: generate instances, solve them with the learned policy or a baseline, train and checkpoint
a policy, benchmark methods against each other, and run the self-checks.

Exit codes are 0 on success, 1 when a self-check or a feasibility audit fails, and 2 for usage errors.
"""

import json
import logging
import pathlib
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import click
import numpy as np

from pdtour.baselines import SearchConfig, Selection, baseline_policy, local_search
from pdtour.errors import NotAPermutation, PdtourError, PrecedenceViolated
from pdtour.exact import brute_force
from pdtour.instance import generate_random, load_instance, save_instance
from pdtour.learn import TrainConfig, train
from pdtour.network import init_network, load_checkpoint, save_checkpoint
from pdtour.operators import Move, OperatorKind
from pdtour.options import config_default_map, get_option, is_audit_mode, read_config_file
from pdtour.report import METHODS, RunRecord, RunStatus, log_records, records_csv, write_records_csv
from pdtour.tour import DEFAULT_ENUMERATION_CAP, Tour, from_sequence, render_tour
from pdtour.verify import run_verification

COMMANDS = ("generate", "solve", "train", "bench", "verify")

_SELECTIONS = {
    "greedy": Selection.GREEDY_BEST,
    "random": Selection.RANDOM,
    "naive": Selection.NAIVE,
    "insertion": Selection.INSERTION,
}

_AUDIT_ERRORS = (NotAPermutation, PrecedenceViolated)


class AuditFailure(click.ClickException):
    """Exits with status 1: a self-check or a feasibility audit failed."""

    exit_code = 1


@dataclass(frozen=True)
class SolveSettings:
    """The flags shared by `solve`, `train`, and `bench`, gathered so a bench cell can be shipped to a worker."""

    seed: int = 0
    episodes: int = 2000
    steps: int | None = None
    width: int = 256
    history: int = 4
    candidates: int = 32
    restarts: int = 1
    eps_conv: float = 1e-9
    cap: int = DEFAULT_ENUMERATION_CAP
    workers: int = 1
    init: pathlib.Path | None = None
    audit: bool = False

    def train_config(self, **overrides) -> TrainConfig:
        config = TrainConfig(
            episodes=self.episodes,
            steps=self.steps,
            eps_conv=self.eps_conv,
            k_candidates=self.candidates,
            history=self.history,
            width=self.width,
            seed=self.seed,
            audit=self.audit,
        )
        return replace(config, **overrides).validate()

    def search_config(self) -> SearchConfig:
        return SearchConfig(
            steps=self.steps,
            restarts=self.restarts,
            k_candidates=self.candidates,
            seed=self.seed,
            audit=self.audit,
        ).validate()


@dataclass
class Solution:
    tour: Tour
    cost: float
    initial: Tour
    trace: list[Move]
    extra: dict


def _starting_network(settings: SolveSettings):
    if settings.init is None:
        return None, {}
    net = load_checkpoint(settings.init)
    return net, {"width": net.width, "history": net.history}


def solve_instance(instance, method: str, settings: SolveSettings) -> Solution:
    """
    Solve `instance` with `method`, one of `METHODS`.

    Returns: a `Solution` carrying the best tour, its cost, where the search started, and the moves in between.
    """
    match method:
        case "exact":
            result = brute_force(instance, cap=settings.cap, prune=True, workers=settings.workers)
            extra = {"examined": result.tours_examined}
            return Solution(result.optimal_tour, result.optimal_cost, result.optimal_tour, [], extra)
        case "l2t":
            net, overrides = _starting_network(settings)
            report = train(instance, settings.train_config(**overrides), net)
            extra = {"episodes": report.episodes_run, "converged": report.converged}
            return Solution(report.best_tour, report.best_cost, report.initial_tour, report.best_trace, extra)
    if method in _SELECTIONS:
        policy = baseline_policy((), _SELECTIONS[method])
    else:
        policy = baseline_policy((OperatorKind(method.upper()),), Selection.SINGLE)
    result = local_search(instance, policy, settings.search_config())
    extra = {"steps": result.steps, "rejections": result.rejections}
    return Solution(result.best_tour, result.best_cost, result.initial_tour, result.trace, extra)


def _audited(tour: Tour) -> Tour:
    try:
        return from_sequence(tour.seq, tour.n)
    except _AUDIT_ERRORS as error:
        logging.critical(f"Refusing to emit {render_tour(tour)}: {error}")
        raise AuditFailure(f"internal error: an emitted tour is infeasible: {error}") from error


def _record(
    instance_id: str, n: int, method: str, settings: SolveSettings, timing: bool, solve
) -> tuple[RunRecord, Solution]:
    start = time.perf_counter()
    solution = solve()
    seconds = time.perf_counter() - start if timing else 0.0
    tour = _audited(solution.tour)
    extra = dict(solution.extra, tour=render_tour(tour))
    return RunRecord(method, instance_id, n, solution.cost, seconds, settings.seed, extra), solution


def bench_cell(path: pathlib.Path, method: str, settings: SolveSettings, timing: bool) -> RunRecord:
    """One (instance, method) cell of a benchmark.  A library error becomes a failed row instead of an exception."""
    instance = load_instance(path)
    try:
        record, _ = _record(
            path.name, instance.n, method, settings, timing, lambda: solve_instance(instance, method, settings)
        )
    except PdtourError as error:
        logging.warning(f"{method} on {path.name} failed: {error}")
        extra = {"status": RunStatus.FAILED.value, "error": str(error)}
        return RunRecord(method, path.name, instance.n, None, 0.0, settings.seed, extra)
    return record


def _write_trace(path: pathlib.Path, solution: Solution):
    lines = [render_tour(solution.initial)] + [str(move) for move in solution.trace]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_methods(ctx, param, value: str) -> tuple[str, ...]:
    methods = tuple(method.strip() for method in value.split(",") if method.strip())
    unknown = [method for method in methods if method not in METHODS]
    if unknown:
        raise click.BadParameter(f"unknown method(s) {', '.join(unknown)}; choose from {', '.join(METHODS)}")
    return methods


def _settings(ctx: click.Context, **values) -> SolveSettings:
    return SolveSettings(audit=is_audit_mode(ctx), **values)


_input_path = click.Path(exists=True, file_okay=True, dir_okay=False, readable=True, path_type=pathlib.Path)
_output_path = click.Path(exists=False, file_okay=True, dir_okay=False, writable=True, path_type=pathlib.Path)


def search_options(function):
    """The flags every solving command takes."""
    options = [
        click.option("--seed", type=click.IntRange(min=0), default=0, help="Seed for every random choice"),
        click.option("--episodes", type=click.IntRange(min=1), default=2000, help="Training episodes (l2t)"),
        click.option("--steps", type=click.IntRange(min=0), default=None, help="Steps per episode or restart (50n)"),
        click.option("--width", type=click.IntRange(min=1), default=256, help="Hidden width of the policy network"),
        click.option("--history", type=click.IntRange(min=1), default=4, help="Operator records the policy sees"),
        click.option("--candidates", type=click.IntRange(min=1), default=32, help="Moves sampled per step"),
        click.option("--restarts", type=click.IntRange(min=1), default=1, help="Restarts (baselines)"),
        click.option("--eps-conv", type=float, default=1e-9, help="Convergence tolerance on the best cost"),
        click.option("--cap", type=click.IntRange(min=1), default=DEFAULT_ENUMERATION_CAP, help="Largest n for exact"),
        click.option("--workers", type=click.IntRange(min=1), default=1, help="Worker processes"),
        click.option("--init", type=_input_path, default=None, help="Checkpoint to start training from"),
    ]
    for option in reversed(options):
        function = option(function)
    return function


@click.group()
@click.option("--debug/--no-debug", default=False, help="Log at DEBUG and audit every visited tour")
@click.option("--verbose/--quiet", default=False)
@click.option("--log", type=_output_path, help="Where to write the log (defaults to stderr)")
@click.option(
    "--config",
    type=_input_path,
    help="A key=value file of defaults for the sub-commands; flags given on the command line win",
)
@click.pass_context
def cli(ctx: click.Context, debug: bool, verbose: bool, log: pathlib.Path, config: pathlib.Path):
    """Solve pickup-and-delivery traveling salesman problems."""
    ctx.obj = {"DEBUG": debug, "VERBOSE": verbose, "AUDIT": debug}
    log_level = logging.DEBUG if debug else logging.WARNING
    if log is None:
        logging.basicConfig(format="%(asctime)s:%(levelname)s:%(message)s", level=log_level)
    else:
        logging.basicConfig(filename=log, format="%(asctime)s:%(levelname)s:%(message)s", level=log_level)
    if config is not None:
        try:
            ctx.default_map = config_default_map(read_config_file(config), COMMANDS)
        except PdtourError as error:
            raise click.UsageError(str(error)) from error
    logging.info(ctx.obj)


@cli.command()
@click.option("-n", "pairs", type=int, required=True, help="Number of pickup-delivery pairs")
@click.option("--seed", type=click.IntRange(min=0), default=0)
@click.option("-o", "--out", type=_output_path, required=True, help="Where to write the instance")
@click.option("--force/--no-force", default=False, help="Overwrite an existing file")
def generate(pairs, seed, out, force):
    """generate -n N [--seed S] -o FILE"""
    logging.info("generate starting")
    if out.exists() and not force:
        raise click.UsageError(f"{out} exists; use --force to overwrite it")
    try:
        instance = generate_random(pairs, seed)
    except PdtourError as error:
        raise click.UsageError(f"{type(error).__name__}: {error}") from error
    save_instance(out, instance)
    logging.info("generate finished")


@cli.command()
@click.argument("instance_path", type=_input_path)
@click.option("--method", type=click.Choice(METHODS), default="l2t", help="Solver to run")
@search_options
@click.option("--out", type=_output_path, help="Where to write the best tour")
@click.option("--trace", type=_output_path, help="Where to write the starting tour and the moves to the best one")
@click.option("--timing/--no-timing", default=True, help="Measure wall time (0.0 when off)")
@click.pass_context
def solve(ctx, instance_path, method, out, trace, timing, **values):
    """solve INSTANCE [--method M]"""
    logging.info(f"solve {instance_path} with {method} starting")
    settings = _settings(ctx, **values)
    try:
        instance = load_instance(instance_path)
        record, solution = _record(
            instance_path.name, instance.n, method, settings, timing, lambda: solve_instance(instance, method, settings)
        )
    except _AUDIT_ERRORS as error:
        raise AuditFailure(f"feasibility audit failed: {error}") from error
    except PdtourError as error:
        raise click.UsageError(f"{type(error).__name__}: {error}") from error
    if out is not None:
        out.write_text(render_tour(solution.tour) + "\n", encoding="utf-8")
    if trace is not None:
        _write_trace(trace, solution)
    click.echo(json.dumps(record.to_json(), sort_keys=True))
    logging.info("solve finished")


@cli.command(name="train")
@click.argument("instance_path", type=_input_path)
@search_options
@click.option("--lr", type=float, default=3e-4, help="Step size")
@click.option("--optimizer", type=click.Choice(["sgd", "adam"]), default="sgd")
@click.option("--checkpoint", type=_output_path, help="Where to save the trained network")
@click.option("--report", type=_output_path, help="Where to write the training report (JSON)")
@click.option("--curve", type=_output_path, help="Where to write the best cost per episode (CSV)")
@click.pass_context
def train_command(ctx, instance_path, lr, optimizer, checkpoint, report, curve, **values):
    """train INSTANCE [--checkpoint FILE] [--report FILE] [--curve FILE]"""
    logging.info(f"train on {instance_path} starting")
    settings = _settings(ctx, **values)
    try:
        instance = load_instance(instance_path)
        net, overrides = _starting_network(settings)
        config = settings.train_config(lr=lr, optimizer=optimizer, **overrides)
        if net is None:
            net = init_network(config.width, config.history, np.random.default_rng(config.seed))
        result = train(instance, config, net)
        _audited(result.best_tour)
    except _AUDIT_ERRORS as error:
        raise AuditFailure(f"feasibility audit failed: {error}") from error
    except PdtourError as error:
        raise click.UsageError(f"{type(error).__name__}: {error}") from error
    if checkpoint is not None:
        save_checkpoint(checkpoint, net)
    if report is not None:
        report.write_text(result.dumps() + "\n", encoding="utf-8")
    if curve is not None:
        curve.write_text(result.curve_csv(), encoding="utf-8")
    summary = {
        "best_cost": result.best_cost,
        "best_tour": render_tour(result.best_tour),
        "converged": result.converged,
        "episodes_run": result.episodes_run,
    }
    click.echo(json.dumps(summary, sort_keys=True))
    logging.info("train finished")


@cli.command()
@click.argument("instances", nargs=-1, type=_input_path)
@click.option(
    "--methods", callback=_parse_methods, default="greedy,exact", help=f"Comma-separated, from {', '.join(METHODS)}"
)
@search_options
@click.option("--out", type=_output_path, help="Where to write the CSV (defaults to stdout)")
@click.option("--timing/--no-timing", default=True, help="Measure wall time (0.0 when off, for byte-stable output)")
@click.pass_context
def bench(ctx, instances, methods, out, timing, **values):
    """bench [INSTANCE...] [--methods M1,M2,...]"""
    logging.info("bench starting")
    settings = _settings(ctx, **values)
    try:
        for path in instances:
            load_instance(path)
    except PdtourError as error:
        raise click.UsageError(f"{type(error).__name__}: {error}") from error

    cells = [(path, method) for path in instances for method in methods]
    if settings.workers > 1 and len(cells) > 1:
        cell_settings = replace(settings, workers=1)
        with ProcessPoolExecutor(max_workers=settings.workers) as pool:
            records = list(
                pool.map(
                    bench_cell,
                    [path for path, _ in cells],
                    [method for _, method in cells],
                    [cell_settings] * len(cells),
                    [timing] * len(cells),
                )
            )
    else:
        records = [bench_cell(path, method, settings, timing) for path, method in cells]

    log_records(records, description=f"bench of {len(instances)} instance(s)")
    failures = [record for record in records if record.status is RunStatus.FAILED]
    if failures and get_option("VERBOSE"):
        for record in failures:
            click.echo(f"{record.method} on {record.instance} failed: {record.extra['error']}", err=True)
    if out is None:
        click.echo(records_csv(records), nl=False)
    else:
        write_records_csv(out, records)
    logging.info("bench finished")


@cli.command()
@click.argument("level", type=click.Choice(["quick", "full"]), default="quick")
@click.option("--seed", type=click.IntRange(min=0), default=0)
@click.option("--applications", type=click.IntRange(min=1), default=200, help="Random applications per suite (full)")
def verify(level, seed, applications):
    """verify [quick|full]"""
    logging.info(f"verify {level} starting")
    report = run_verification(level, seed, applications)
    for line in report.lines():
        click.echo(line)
    logging.info("verify finished")
    if not report.ok:
        raise AuditFailure("verification failed")

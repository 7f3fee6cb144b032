import csv
import io
import json
import math

import pytest
from click.testing import CliRunner

from pdtour import operators
from pdtour.cli import cli
from pdtour.exact import brute_force
from pdtour.instance import load_instance
from pdtour.operators import apply_move, parse_move
from pdtour.report import CSV_COLUMNS
from pdtour.tour import from_sequence, parse_tour


def _invoke(*args):
    runner = CliRunner()
    return runner.invoke(cli, [str(arg) for arg in args])


@pytest.fixture()
def instance_file(tmp_path):
    path = tmp_path / "three.pdtsp"
    result = _invoke("generate", "-n", 3, "--seed", 4, "-o", path)
    assert result.exit_code == 0, result.output
    return path


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_generate_is_deterministic(tmp_path):
    first, second = tmp_path / "a.pdtsp", tmp_path / "b.pdtsp"
    _invoke("generate", "-n", 4, "--seed", 11, "-o", first)
    _invoke("generate", "-n", 4, "--seed", 11, "-o", second)

    assert first.read_bytes() == second.read_bytes()
    assert load_instance(first).n == 4


def test_generate_rejects_an_empty_instance(tmp_path):
    result = _invoke("generate", "-n", 0, "-o", tmp_path / "empty.pdtsp")

    assert result.exit_code == 2
    assert "InvalidSize" in result.output


def test_generate_does_not_overwrite(instance_file):
    result = _invoke("generate", "-n", 2, "-o", instance_file)

    assert result.exit_code == 2
    assert _invoke("generate", "-n", 2, "-o", instance_file, "--force").exit_code == 0
    assert load_instance(instance_file).n == 2


def test_solve_exact(instance_file):
    result = _invoke("solve", instance_file, "--method", "exact")
    record = json.loads(result.output)

    assert result.exit_code == 0
    assert math.isclose(record["cost"], brute_force(load_instance(instance_file)).optimal_cost)
    assert record["extra"]["examined"] > 0


def test_solve_greedy_is_deterministic(instance_file):
    first = _invoke("solve", instance_file, "--method", "greedy", "--seed", 2, "--no-timing")
    second = _invoke("solve", instance_file, "--method", "greedy", "--seed", 2, "--no-timing")

    assert first.exit_code == 0
    assert first.output == second.output
    assert json.loads(first.output)["seconds"] == 0.0


def test_solve_l2t_emits_a_feasible_tour(instance_file):
    result = _invoke("solve", instance_file, "--episodes", 3, "--width", 16)
    record = json.loads(result.output)
    seq = [int(node) for node in record["extra"]["tour"].split()[1:-1]]

    assert result.exit_code == 0
    assert from_sequence(seq, 3).seq == tuple(seq)
    assert record["extra"]["episodes"] <= 3


def test_trace_replays_to_the_written_tour(instance_file, tmp_path):
    out, trace = tmp_path / "best.tour", tmp_path / "best.trace"
    result = _invoke("solve", instance_file, "--method", "random", "--steps", 40, "--out", out, "--trace", trace)
    instance = load_instance(instance_file)
    lines = trace.read_text().splitlines()
    tour = parse_tour(lines[0], instance.n)
    for line in lines[1:]:
        tour, _ = apply_move(tour, parse_move(line), instance)

    assert result.exit_code == 0
    assert tour == parse_tour(out.read_text().strip(), instance.n)


def test_solve_rejects_unknown_methods(instance_file):
    assert _invoke("solve", instance_file, "--method", "gurobi").exit_code == 2


def test_train_writes_its_outputs(instance_file, tmp_path):
    checkpoint, report, curve = tmp_path / "net.ck", tmp_path / "report.json", tmp_path / "curve.csv"
    result = _invoke(
        "train", instance_file, "--episodes", 4, "--width", 16,
        "--checkpoint", checkpoint, "--report", report, "--curve", curve,
    )
    summary = json.loads(result.output)

    assert result.exit_code == 0
    assert checkpoint.exists()
    assert json.loads(report.read_text())["episodes_run"] == summary["episodes_run"]
    assert curve.read_text().splitlines()[0] == "episode,best_cost"

    resumed = _invoke("solve", instance_file, "--episodes", 2, "--init", checkpoint)
    assert resumed.exit_code == 0, resumed.output


def test_bench_without_instances_is_just_a_header():
    result = _invoke("bench")

    assert result.exit_code == 0
    assert result.output == ",".join(CSV_COLUMNS) + "\n"


def test_bench_greedy_never_beats_exact(instance_file):
    result = _invoke("bench", instance_file, "--methods", "greedy,exact", "--restarts", 3)
    rows = _rows(result.output)

    assert result.exit_code == 0
    assert [row["method"] for row in rows] == ["exact", "greedy"]
    exact, greedy = (float(row["cost"]) for row in rows)
    assert greedy >= exact - 1e-12


def test_bench_records_failed_cells(instance_file, tmp_path):
    out = tmp_path / "bench.csv"
    result = _invoke("bench", instance_file, "--methods", "exact,n2", "--cap", 1, "--no-timing", "--out", out)
    rows = _rows(out.read_text())

    assert result.exit_code == 0
    assert rows[0]["method"] == "exact"
    assert rows[0]["cost"] == ""
    assert json.loads(rows[0]["extra"])["status"] == "failed"
    assert rows[1]["cost"] != ""


def test_bench_workers_match_serial(instance_file, tmp_path):
    other = tmp_path / "two.pdtsp"
    _invoke("generate", "-n", 2, "--seed", 8, "-o", other)
    args = ["bench", instance_file, other, "--methods", "greedy,n1,exact", "--no-timing"]

    serial = _invoke(*args)
    parallel = _invoke(*args, "--workers", 2)

    assert serial.exit_code == parallel.exit_code == 0
    assert serial.output == parallel.output


def test_bench_rejects_unknown_methods(instance_file):
    assert _invoke("bench", instance_file, "--methods", "greedy,simplex").exit_code == 2


def test_config_file_defaults_yield_to_flags(instance_file, tmp_path):
    config = tmp_path / "pdtour.cfg"
    config.write_text("# shared settings\nseed = 3\nmethod = greedy\n")

    from_file = json.loads(_invoke("--config", config, "solve", instance_file, "--no-timing").output)
    from_flag = json.loads(_invoke("--config", config, "solve", instance_file, "--no-timing", "--seed", 5).output)

    assert (from_file["seed"], from_file["method"]) == (3, "greedy")
    assert from_flag["seed"] == 5


def test_bad_config_file_is_a_usage_error(instance_file, tmp_path):
    config = tmp_path / "pdtour.cfg"
    config.write_text("seed 3\n")

    assert _invoke("--config", config, "solve", instance_file).exit_code == 2


def test_verify_quick():
    result = _invoke("verify", "quick")

    assert result.exit_code == 0
    line = next(line for line in result.output.splitlines() if line.startswith("counting n=2"))
    assert "passed=6" in line and "failed=0" in line


def test_verify_catches_a_broken_operator(monkeypatch):
    monkeypatch.setattr(operators, "n2_swappable", lambda tour, a, b: False)
    result = _invoke("verify")

    assert result.exit_code == 1
    assert "FAIL" in result.output


@pytest.mark.slow
def test_learned_policy_is_at_least_as_good_as_a_single_operator(tmp_path):
    wins = 0
    for seed in range(20):
        path = tmp_path / f"{seed}.pdtsp"
        _invoke("generate", "-n", 3, "--seed", seed, "-o", path)
        rows = _rows(_invoke("bench", path, "--methods", "l2t,n1", "--seed", seed, "--no-timing").output)
        costs = {row["method"]: float(row["cost"]) for row in rows}
        wins += costs["l2t"] <= costs["n1"] + 1e-9

    assert wins >= 18

import json
import logging

import pytest

from pdtour.errors import InvalidConfig
from pdtour.report import (
    CSV_COLUMNS,
    RunRecord,
    RunStatus,
    extract_records,
    log_records,
    records_csv,
    write_records_csv,
)


@pytest.fixture()
def records():
    return [
        RunRecord("greedy", "b.pdtsp", 3, 2.5, 0.25, 0, {"steps": 150}),
        RunRecord("exact", "b.pdtsp", 3, 2.25, 1.5, 0, {"examined": 90}),
        RunRecord("exact", "a.pdtsp", 7, None, 0.0, 0, {"status": "failed", "error": "n=7 is above the cap"}),
    ]


def test_record_validation():
    with pytest.raises(InvalidConfig):
        RunRecord("gurobi", "a", 2, 1.0, 0.0, 0)
    with pytest.raises(InvalidConfig):
        RunRecord("exact", "a", 2, -1.0, 0.0, 0)


def test_status(records):
    assert records[0].status is RunStatus.OK
    assert records[2].status is RunStatus.FAILED


def test_canonical_order(records):
    ordered = extract_records(records)

    assert [(record.instance, record.method) for record in ordered] == [
        ("a.pdtsp", "exact"),
        ("b.pdtsp", "exact"),
        ("b.pdtsp", "greedy"),
    ]
    assert extract_records(records, {RunStatus.FAILED}) == [records[2]]


def test_csv(records):
    lines = records_csv(records).splitlines()

    assert lines[0] == ",".join(CSV_COLUMNS)
    assert lines[1].startswith("exact,a.pdtsp,7,,0.0,0,")
    assert lines[2] == 'exact,b.pdtsp,3,2.25,1.5,0,"{""examined"":90}"'
    assert len(lines) == 4


def test_csv_does_not_depend_on_input_order(records):
    assert records_csv(records) == records_csv(list(reversed(records)))


def test_empty_csv_is_just_the_header(tmp_path):
    path = tmp_path / "out.csv"
    write_records_csv(path, [])

    assert path.read_text() == ",".join(CSV_COLUMNS) + "\n"


def test_log_records(records, caplog):
    with caplog.at_level(logging.INFO):
        log_records(records, description="bench")

    messages = [record.getMessage() for record in caplog.records]
    assert messages[0] == "---BEGIN RECORDS: bench---"
    assert messages[-1] == "---END RECORDS---"
    assert json.loads(messages[1])["instance"] == "a.pdtsp"


def test_log_records_with_a_key(records, caplog):
    with caplog.at_level(logging.DEBUG):
        log_records(records, log_level=logging.DEBUG, key=lambda record: record.method, statuses={RunStatus.OK})

    assert [record.getMessage() for record in caplog.records] == [
        "---BEGIN RECORDS---",
        "exact",
        "greedy",
        "---END RECORDS---",
    ]

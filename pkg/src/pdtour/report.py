"""
This module provides run records: one row per (instance, method) pair of a solve or a benchmark.

Records are always emitted in a canonical order, sorted by instance and then by method, so a benchmark's CSV depends
only on its inputs and never on the order the cells finished in.  A cell that failed is still a row; its `extra`
holds `"status": "failed"` and the error, and its cost is empty.

Exported types:
    RunRecord:  a single result row
    RunStatus:  an Enum, whether the cell produced a result

Exported functions:
    extract_records
    log_records
    records_csv
    write_records_csv
"""

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from pdtour.errors import InvalidConfig

METHODS = ("l2t", "greedy", "random", "naive", "n1", "n2", "n3", "b1", "b2", "insertion", "exact")
CSV_COLUMNS = ("method", "instance", "n", "cost", "seconds", "seed", "extra")


class RunStatus(Enum):
    OK = "ok"
    FAILED = "failed"


@dataclass(frozen=True)
class RunRecord:
    """
    One result row.

    Attributes:
        method:     one of `METHODS`
        instance:   an identifier for the instance, usually its file name
        n:          pair count of the instance
        cost:       best tour cost found, `None` when the run failed
        seconds:    wall time of the solve call alone
        seed:       the seed the run used
        extra:      method-specific counters (rejections, episodes, tours examined, ...) and the status
    """

    method: str
    instance: str
    n: int
    cost: float | None
    seconds: float
    seed: int
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidConfig(f"unknown method {self.method!r}; expected one of {', '.join(METHODS)}")
        if self.cost is not None and self.cost < 0:
            raise InvalidConfig(f"a tour cost cannot be negative, got {self.cost}")

    @property
    def status(self) -> RunStatus:
        return RunStatus(self.extra.get("status", RunStatus.OK.value))

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "instance": self.instance,
            "n": self.n,
            "cost": self.cost,
            "seconds": self.seconds,
            "seed": self.seed,
            "extra": self.extra,
        }


def extract_records(records, statuses: set[RunStatus] | None = None) -> list[RunRecord]:
    """
    Sort `records` into canonical order (instance, then method), keeping only those whose status is in `statuses`.

    Returns: an ordered list of `RunRecord`s; every record when `statuses` is `None`.
    """
    return [
        record
        for record in sorted(records, key=lambda record: (record.instance, record.method))
        if statuses is None or record.status in statuses
    ]


def _row(record: RunRecord) -> list[str]:
    return [
        record.method,
        record.instance,
        str(record.n),
        "" if record.cost is None else repr(record.cost),
        repr(record.seconds),
        str(record.seed),
        json.dumps(record.extra, sort_keys=True, separators=(",", ":")),
    ]


def records_csv(records) -> str:
    """The records as CSV text with the `method,instance,n,cost,seconds,seed,extra` header, in canonical order."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for record in extract_records(records):
        writer.writerow(_row(record))
    return buffer.getvalue()


def write_records_csv(path: Path, records):
    Path(path).write_text(records_csv(records), encoding="utf-8")


def log_records(
    records,
    *,
    description: str | None = None,
    log_level=logging.INFO,
    key=None,
    statuses: set[RunStatus] | None = None,
):
    """
    Log records in canonical order between BEGIN/END markers.

    Takes one positional argument:
        records:        the `RunRecord`s to (extract from and then) log

    Takes up to four keyword-only arguments:
        description:    a string to be printed before the records
        log_level:      the level at which to log; if logging is not set to show this level, nothing is logged
        key:            a function to build what you want to print for each individual `RunRecord`
        statuses:       which statuses to include; all of them when `None`
    """
    logger = logging.getLogger()
    if key is None:
        key = lambda record: json.dumps(record.to_json(), sort_keys=True)  # noqa: E731
    if description is None:
        logger.log(log_level, "---BEGIN RECORDS---")
    else:
        logger.log(log_level, f"---BEGIN RECORDS: {description}---")
    for record in extract_records(records, statuses):
        logger.log(log_level, key(record))
    logger.log(log_level, "---END RECORDS---")

"""CSV writers for traces, run metrics and campaign tables.

Floats are written with ``repr`` (shortest round-trip decimal) and missing
values as empty cells, so re-exporting the same data gives the same bytes.
"""

from __future__ import annotations

import csv
import dataclasses
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

from .campaign import AGGREGATE_COLUMNS, RUN_COLUMNS, CampaignResult
from .sim import TRACE_COLUMNS, RunMetrics


def fmt(x: Any) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return repr(x)
    return str(x)


def _write(path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([fmt(x) for x in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def export_trace(trace: Sequence[tuple], path) -> Path:
    return _write(path, TRACE_COLUMNS, trace)


def export_metrics(metrics: RunMetrics, path) -> Path:
    return _write(path, ("metric", "key", "value"), metrics.as_rows())


def export_aggregate(result: CampaignResult, path) -> Path:
    return _write(path, AGGREGATE_COLUMNS,
                  (dataclasses.astuple(s) for s in result.summary))


def export_runs(result: CampaignResult, path) -> Path:
    return _write(path, RUN_COLUMNS, (dataclasses.astuple(r) for r in result.records))


def export_csv(obj, path) -> Path:
    """Write a trace (list of rows), ``RunMetrics`` or ``CampaignResult`` aggregate."""
    if isinstance(obj, RunMetrics):
        return export_metrics(obj, path)
    if isinstance(obj, CampaignResult):
        return export_aggregate(obj, path)
    return export_trace(obj, path)

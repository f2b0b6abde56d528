"""Report and trace writers: JSON reports, verdict CSVs, JSON-lines logs, plot data."""

import json
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, List, Sequence

import pandas as pd

from ..schemas import ExperimentReport

PLOT_COLUMNS = ["axis", "value", "accuracy", "macro_f1", "baseline"]


def write_json_atomic(payload: str, path: Path) -> Path:
    """Write text next to `path` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def write_report(report: ExperimentReport, path: Path) -> Path:
    return write_json_atomic(report.model_dump_json(indent=2), path)


def write_jsonl(records: Iterable[Dict[str, Any]], path: Path) -> Path:
    lines = "".join(json.dumps(record, sort_keys=True) + "\n" for record in records)
    return write_json_atomic(lines, path)


def write_verdicts(verdicts: Sequence, ground_truth: Sequence[int], path: Path) -> Path:
    """One row per target: target_index, predicted, truth, score."""
    frame = pd.DataFrame(
        [{**v.to_record(), "truth": int(t)} for v, t in zip(verdicts, ground_truth)],
        columns=["target_index", "predicted", "truth", "score"],
    )
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path


def plot_rows(reports: Sequence[ExperimentReport]) -> List[Dict[str, Any]]:
    rows = []
    for report in reports:
        axis = report.sweep.axis if report.sweep else "scenario"
        value = report.sweep.value if report.sweep else report.scenario.get("name")
        rows.append({
            "axis": axis,
            "value": json.dumps(value),
            "accuracy": report.metrics.accuracy,
            "macro_f1": report.metrics.macro_f1,
            "baseline": report.metrics.baseline,
        })
    return rows


def emit_plotdata(reports: Sequence[ExperimentReport], out_dir: Path, stem: str = "plotdata") -> List[Path]:
    """One CSV per swept axis; an empty report list gives a header-only CSV."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = plot_rows(reports)
    if not rows:
        path = out_dir / f"{stem}.csv"
        pd.DataFrame(columns=PLOT_COLUMNS).to_csv(path, index=False)
        return [path]

    paths = []
    for axis in dict.fromkeys(row["axis"] for row in rows):
        path = out_dir / f"{stem}_{axis.replace('.', '_')}.csv"
        pd.DataFrame([r for r in rows if r["axis"] == axis], columns=PLOT_COLUMNS).to_csv(path, index=False)
        paths.append(path)
    return paths

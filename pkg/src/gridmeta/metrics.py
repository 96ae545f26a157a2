"""Training telemetry records and their CSV form.

The CSV schema is fixed and documented in the README:

    meta_iteration,meta_loss,avg_reward,success_rate,level,mean_intrinsic

Floats are written with repr() so single-worker reruns of the same config
produce byte-identical files. Wall time is telemetry-only: it lives on
the in-memory record and in the timing sidecar, never in the metrics CSV.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

CSV_COLUMNS = (
    "meta_iteration",
    "meta_loss",
    "avg_reward",
    "success_rate",
    "level",
    "mean_intrinsic",
)


class MetricsFormatError(ValueError):
    """Malformed metrics file; carries the offending line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class MetricsRecord:
    meta_iteration: int
    meta_loss: float
    avg_reward: float
    success_rate: float
    level: int
    mean_intrinsic: float
    wall_time: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.success_rate <= 1.0:
            raise ValueError("success_rate must be in [0, 1]")


def format_row(rec: MetricsRecord) -> str:
    return (
        f"{rec.meta_iteration},{rec.meta_loss!r},{rec.avg_reward!r},"
        f"{rec.success_rate!r},{rec.level},{rec.mean_intrinsic!r}"
    )


def write_metrics_csv(path, records) -> None:
    lines = [",".join(CSV_COLUMNS)]
    lines.extend(format_row(r) for r in records)
    Path(path).write_text("\n".join(lines) + "\n")


def read_metrics_csv(path) -> list[MetricsRecord]:
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines()]
    if not lines:
        raise MetricsFormatError(0, "empty metrics file")
    if lines[0] != ",".join(CSV_COLUMNS):
        raise MetricsFormatError(1, f"unexpected header {lines[0]!r}")
    records = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != len(CSV_COLUMNS):
            raise MetricsFormatError(i, f"expected {len(CSV_COLUMNS)} fields, "
                                        f"got {len(fields)}")
        try:
            records.append(
                MetricsRecord(
                    meta_iteration=int(fields[0]),
                    meta_loss=float(fields[1]),
                    avg_reward=float(fields[2]),
                    success_rate=float(fields[3]),
                    level=int(fields[4]),
                    mean_intrinsic=float(fields[5]),
                )
            )
        except ValueError as exc:
            raise MetricsFormatError(i, str(exc)) from exc
    return records


def write_timing_csv(path, records) -> None:
    lines = ["meta_iteration,wall_time"]
    lines.extend(f"{r.meta_iteration},{r.wall_time!r}" for r in records)
    Path(path).write_text("\n".join(lines) + "\n")

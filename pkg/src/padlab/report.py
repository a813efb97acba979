"""Run reports: per-epoch training curves plus final split metrics.

Reports serialize to CSV (one row per epoch) and a JSON summary. Both are
byte-deterministic for a fixed run; wall time is the single non-scientific
field and lives only in the summary's ``wall_time_s``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InputError

CSV_COLUMNS = ["epoch", "phase", "train_loss", "acc_clean_subset", "acc_noisy_subset", "test_acc"]

FIGURE_METRICS = ["train_loss", "acc_clean_subset", "acc_noisy_subset", "test_acc"]


@dataclass
class EpochRow:
    epoch: int
    phase: str
    train_loss: float
    acc_clean_subset: float
    acc_noisy_subset: float
    test_acc: float


@dataclass
class RunReport:
    header: dict = field(default_factory=dict)
    rows: list[EpochRow] = field(default_factory=list)
    final: dict = field(default_factory=dict)

    def append(self, row: EpochRow) -> None:
        if self.rows and row.epoch != self.rows[-1].epoch + 1:
            raise InputError(
                f"epoch indices must be consecutive: {self.rows[-1].epoch} -> {row.epoch}"
            )
        self.rows.append(row)

    @property
    def epochs(self) -> list[int]:
        return [r.epoch for r in self.rows]

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            writer.writerow(
                [r.epoch, r.phase, repr(r.train_loss), repr(r.acc_clean_subset),
                 repr(r.acc_noisy_subset), repr(r.test_acc)]
            )
        return buf.getvalue()

    def save_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv_text())

    def summary_dict(self) -> dict:
        return {
            "header": self.header,
            "epochs_logged": len(self.rows),
            "final": self.final,
        }


def load_report_csv(path: str | Path) -> RunReport:
    report = RunReport()
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            report.rows.append(
                EpochRow(
                    epoch=int(rec["epoch"]),
                    phase=rec["phase"],
                    train_loss=float(rec["train_loss"]),
                    acc_clean_subset=float(rec["acc_clean_subset"]),
                    acc_noisy_subset=float(rec["acc_noisy_subset"]),
                    test_acc=float(rec["test_acc"]),
                )
            )
    return report


def write_json(path: str | Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _first_crossing(a: list[float], b: list[float]) -> int | None:
    """First epoch index where the sign of (a - b) strictly flips."""
    prev = 0.0
    for i, (av, bv) in enumerate(zip(a, b)):
        d = av - bv
        if prev > 0 and d < 0 or prev < 0 and d > 0:
            return i
        if d != 0:
            prev = d
    return None


def emit_figure_data(reports: dict[str, RunReport]) -> tuple[str, dict]:
    """Reshape several reports into one long-format CSV plus crossing records.

    Returns (csv_text, crossings) where crossings maps
    "seriesA|seriesB|metric" to the first crossing epoch (or None) for the
    clean- and noisy-subset accuracy curves.
    """
    if len(reports) < 1:
        raise InputError("need at least one report")
    names = sorted(reports)
    axis = reports[names[0]].epochs
    for name in names[1:]:
        if reports[name].epochs != axis:
            raise InputError(f"epoch axis of {name!r} does not match {names[0]!r}")

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epoch", "series", "metric", "value"])
    for name in names:
        for r in reports[name].rows:
            for metric in FIGURE_METRICS:
                writer.writerow([r.epoch, name, metric, repr(getattr(r, metric))])

    crossings: dict[str, int | None] = {}
    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            for metric in ("acc_clean_subset", "acc_noisy_subset"):
                series_a = [getattr(r, metric) for r in reports[a].rows]
                series_b = [getattr(r, metric) for r in reports[b].rows]
                cross = _first_crossing(series_a, series_b)
                epoch = axis[cross] if cross is not None else None
                crossings[f"{a}|{b}|{metric}"] = epoch
    return buf.getvalue(), crossings

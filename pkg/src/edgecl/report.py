"""Run reports: structured results plus lossless JSON/CSV serialisation.

The JSON writer is canonical (sorted keys, fixed separators, shortest-repr
floats), so identical runs produce byte-identical files and a report survives
a write -> read -> write cycle unchanged.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class RequestRecord:
    """One served inference request."""

    time: float
    scenario: int
    accuracy: float
    batches_needed: float


@dataclass
class RoundSummary:
    """One executed fine-tuning round."""

    round_id: int
    trigger_time: float
    finish_time: float
    scenario: int
    batches: int
    iterations: int
    flops: int
    cka_flops: int
    val_accuracy: float
    batches_needed_after: float
    overhead_time: float
    compute_time: float
    overhead_energy: float
    compute_energy: float


@dataclass
class RunReport:
    """Everything a run produced, ready for serialisation and comparison."""

    policy: str
    seed: int
    avg_inference_accuracy: float
    total_time: float
    total_energy: float
    overhead_time: float
    overhead_energy: float
    round_count: int
    total_flops: int
    total_cka_flops: int
    peak_activation_mem_units: int
    requests: list[RequestRecord] = field(default_factory=list)
    rounds: list[RoundSummary] = field(default_factory=list)
    batches_needed_timeline: list[tuple[float, float]] = field(default_factory=list)
    frozen_timeline: list[tuple[float, int, str]] = field(default_factory=list)
    detected_changes: list[float] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "policy": self.policy,
            "seed": self.seed,
            "avg_inference_accuracy": self.avg_inference_accuracy,
            "total_time": self.total_time,
            "total_energy": self.total_energy,
            "overhead_time": self.overhead_time,
            "overhead_energy": self.overhead_energy,
            "round_count": self.round_count,
            "total_flops": self.total_flops,
            "total_cka_flops": self.total_cka_flops,
            "peak_activation_mem_units": self.peak_activation_mem_units,
            "requests": [
                [r.time, r.scenario, r.accuracy, r.batches_needed] for r in self.requests
            ],
            "rounds": [
                [
                    r.round_id, r.trigger_time, r.finish_time, r.scenario, r.batches,
                    r.iterations, r.flops, r.cka_flops, r.val_accuracy,
                    r.batches_needed_after, r.overhead_time, r.compute_time,
                    r.overhead_energy, r.compute_energy,
                ]
                for r in self.rounds
            ],
            "batches_needed_timeline": [list(p) for p in self.batches_needed_timeline],
            "frozen_timeline": [list(p) for p in self.frozen_timeline],
            "detected_changes": list(self.detected_changes),
            "config": self.config,
        }

    @staticmethod
    def from_dict(doc: dict) -> "RunReport":
        return RunReport(
            policy=doc["policy"],
            seed=doc["seed"],
            avg_inference_accuracy=doc["avg_inference_accuracy"],
            total_time=doc["total_time"],
            total_energy=doc["total_energy"],
            overhead_time=doc["overhead_time"],
            overhead_energy=doc["overhead_energy"],
            round_count=doc["round_count"],
            total_flops=doc["total_flops"],
            total_cka_flops=doc["total_cka_flops"],
            peak_activation_mem_units=doc["peak_activation_mem_units"],
            requests=[RequestRecord(*row) for row in doc["requests"]],
            rounds=[RoundSummary(*row) for row in doc["rounds"]],
            batches_needed_timeline=[tuple(p) for p in doc["batches_needed_timeline"]],
            frozen_timeline=[(p[0], p[1], p[2]) for p in doc["frozen_timeline"]],
            detected_changes=list(doc["detected_changes"]),
            config=doc["config"],
        )


def dumps_report(report: RunReport) -> str:
    return json.dumps(report.to_dict(), sort_keys=True, separators=(",", ":")) + "\n"


def write_report(report: RunReport, path: str | Path) -> None:
    Path(path).write_text(dumps_report(report))


def read_report(path: str | Path) -> RunReport:
    return RunReport.from_dict(json.loads(Path(path).read_text()))


def write_request_csv(report: RunReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "scenario", "accuracy", "batches_needed"])
        for r in report.requests:
            writer.writerow([repr(r.time), r.scenario, repr(r.accuracy), repr(r.batches_needed)])


def write_round_csv(report: RunReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "round_id", "trigger_time", "finish_time", "scenario", "batches",
                "iterations", "flops", "cka_flops", "val_accuracy",
                "batches_needed_after", "overhead_time", "compute_time",
                "overhead_energy", "compute_energy",
            ]
        )
        for r in report.rounds:
            writer.writerow(
                [
                    r.round_id, repr(r.trigger_time), repr(r.finish_time), r.scenario,
                    r.batches, r.iterations, r.flops, r.cka_flops, repr(r.val_accuracy),
                    repr(r.batches_needed_after), repr(r.overhead_time),
                    repr(r.compute_time), repr(r.overhead_energy), repr(r.compute_energy),
                ]
            )

"""Analytic time/energy ledger for fine-tuning rounds.

Every round costs a fixed overhead (system initialisation, model load, model
save) plus compute proportional to the FLOPs it executed. Merging rounds
therefore saves exactly one overhead quantum per merged round, which is the
effect the scheduling policies trade against accuracy. CKA probe work can be
charged as extra compute FLOPs or excluded via ``cka_overhead_charged``.

``calibrate_defaults`` picks per-round overheads so that, for a reference
workload of one-batch rounds on the default network, overheads account for
58% of total time and 38% of total energy, with model computation making up
the rest. Only these shares are calibrated; the per-GFLOP scales are free
parameters (defaults 1.0), so absolute totals are in model units and every
policy comparison is relative.

The ledger tracks training compute only: validation and inference-serving
forward passes are identical across policies and are not charged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import InputError
from .network import train_iteration_flops

# overhead split between initialisation and load/save (the combined share is
# what is calibrated; the internal split is a modelling choice)
_INIT_FRACTION = 0.5
_LOAD_FRACTION = 0.25
_SAVE_FRACTION = 0.25

OVERHEAD_TIME_SHARE = 0.58
OVERHEAD_ENERGY_SHARE = 0.38

REFERENCE_LAYER_DIMS = [64, 128, 128]
REFERENCE_CLASS_COUNT = 10
REFERENCE_BATCH_SIZE = 16

GFLOP = 1e9


@dataclass
class CostParams:
    """Per-round fixed overheads and per-GFLOP compute rates (all >= 0)."""

    t_init: float
    t_load: float
    t_save: float
    e_init: float
    e_load: float
    e_save: float
    t_per_gflop: float
    e_per_gflop: float
    cka_overhead_charged: bool = True

    def __post_init__(self) -> None:
        for name in ("t_init", "t_load", "t_save", "e_init", "e_load", "e_save",
                     "t_per_gflop", "e_per_gflop"):
            if getattr(self, name) < 0:
                raise InputError(f"{name} must be >= 0")

    @property
    def overhead_time(self) -> float:
        return self.t_init + self.t_load + self.t_save

    @property
    def overhead_energy(self) -> float:
        return self.e_init + self.e_load + self.e_save


@dataclass
class RoundRecord:
    """Costs of one charged fine-tuning round."""

    round_id: int
    overhead_time: float
    compute_time: float
    overhead_energy: float
    compute_energy: float
    flops: int
    cka_flops: int

    @property
    def total_time(self) -> float:
        return self.overhead_time + self.compute_time

    @property
    def total_energy(self) -> float:
        return self.overhead_energy + self.compute_energy


@dataclass
class CostLedger:
    """Accumulated per-round records; totals are exact sums of the records."""

    records: list[RoundRecord] = field(default_factory=list)
    peak_activation_mem_units: int = 0

    @property
    def round_count(self) -> int:
        return len(self.records)

    @property
    def total_time(self) -> float:
        return sum(r.total_time for r in self.records)

    @property
    def total_energy(self) -> float:
        return sum(r.total_energy for r in self.records)

    @property
    def total_overhead_time(self) -> float:
        return sum(r.overhead_time for r in self.records)

    @property
    def total_overhead_energy(self) -> float:
        return sum(r.overhead_energy for r in self.records)

    @property
    def total_compute_time(self) -> float:
        return sum(r.compute_time for r in self.records)

    @property
    def total_compute_energy(self) -> float:
        return sum(r.compute_energy for r in self.records)

    @property
    def total_flops(self) -> int:
        return sum(r.flops for r in self.records)

    @property
    def total_cka_flops(self) -> int:
        return sum(r.cka_flops for r in self.records)

    def note_activation_mem(self, units: int) -> None:
        self.peak_activation_mem_units = max(self.peak_activation_mem_units, units)


def charge_round(
    ledger: CostLedger, params: CostParams, flops: int, cka_flops: int = 0
) -> RoundRecord:
    """Add one round: fixed overhead plus FLOP-proportional compute."""
    if flops < 0 or cka_flops < 0:
        raise InputError("FLOP counts must be >= 0")
    charged = flops + (cka_flops if params.cka_overhead_charged else 0)
    record = RoundRecord(
        round_id=len(ledger.records),
        overhead_time=params.overhead_time,
        compute_time=charged / GFLOP * params.t_per_gflop,
        overhead_energy=params.overhead_energy,
        compute_energy=charged / GFLOP * params.e_per_gflop,
        flops=flops,
        cka_flops=cka_flops,
    )
    ledger.records.append(record)
    return record


def calibrate_defaults(
    layer_dims: list[int] | None = None,
    class_count: int = REFERENCE_CLASS_COUNT,
    batch_size: int = REFERENCE_BATCH_SIZE,
    t_per_gflop: float = 1.0,
    e_per_gflop: float = 1.0,
    cka_overhead_charged: bool = True,
    iterations_per_round: int = 1,
) -> CostParams:
    """Overheads calibrated so one-batch rounds split 58/42 time and 38/62 energy.

    With F the FLOPs of one reference round (``iterations_per_round``
    all-active training iterations), compute time per round is
    ``F * t_per_gflop / 1e9``, and the overhead is chosen as
    ``compute * share / (1 - share)`` so that overhead / (overhead + compute)
    equals the target share exactly. Same closed form for energy.
    """
    dims = list(layer_dims) if layer_dims is not None else list(REFERENCE_LAYER_DIMS)
    flops = train_iteration_flops(dims, class_count, batch_size) * iterations_per_round
    compute_time = flops / GFLOP * t_per_gflop
    compute_energy = flops / GFLOP * e_per_gflop
    overhead_time = compute_time * OVERHEAD_TIME_SHARE / (1.0 - OVERHEAD_TIME_SHARE)
    overhead_energy = compute_energy * OVERHEAD_ENERGY_SHARE / (1.0 - OVERHEAD_ENERGY_SHARE)
    return CostParams(
        t_init=overhead_time * _INIT_FRACTION,
        t_load=overhead_time * _LOAD_FRACTION,
        t_save=overhead_time * _SAVE_FRACTION,
        e_init=overhead_energy * _INIT_FRACTION,
        e_load=overhead_energy * _LOAD_FRACTION,
        e_save=overhead_energy * _SAVE_FRACTION,
        t_per_gflop=t_per_gflop,
        e_per_gflop=e_per_gflop,
        cka_overhead_charged=cka_overhead_charged,
    )

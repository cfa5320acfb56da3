"""Synthetic multi-scenario classification streams.

Datasets are isotropic Gaussian clusters, one per class. A run is a sequence
of scenarios: ``new_class`` scenarios add clusters, ``new_pattern`` scenarios
move the existing clusters through an affine transform (a rotation in one
coordinate plane plus a shift), and ``mixed`` scenarios do both. Every
scenario carries its own train / validation / test pools drawn from the
post-transform distributions over the cumulative class set.

Events are timestamped arrivals: training batches, inference requests (each
bundling a batch of test samples), and scenario boundaries. Inter-arrival
times come from a configurable process (Poisson / uniform / truncated normal
/ CSV trace). Generation is deterministic given the seed, and the stream is
totally ordered by (time, kind, sequence number) with training batches
sorting before inference requests before boundaries on exact ties.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, InputError, TraceParseError

SCENARIO_KINDS = ("new_class", "new_pattern", "mixed")
ARRIVAL_KINDS = ("poisson", "uniform", "normal", "trace")

DEFAULT_BATCH_SIZE = 16
DEFAULT_TOTAL_INFERENCES = 500
VALIDATION_FRACTION = 0.05

# event kinds in tie-break order
TRAIN_BATCH = "train_batch"
INFERENCE_REQUEST = "inference_request"
SCENARIO_BOUNDARY = "scenario_boundary"
_KIND_RANK = {TRAIN_BATCH: 0, INFERENCE_REQUEST: 1, SCENARIO_BOUNDARY: 2}

_MIN_INTERARRIVAL = 1e-6  # positive floor for truncated-normal gaps


@dataclass
class AffineTransform:
    """Rotation by ``rotation_degrees`` in coordinate plane ``plane`` plus a shift."""

    rotation_degrees: float = 0.0
    shift: np.ndarray | None = None
    plane: tuple[int, int] = (0, 1)

    def is_identity(self) -> bool:
        no_shift = self.shift is None or not np.any(self.shift)
        return self.rotation_degrees == 0.0 and no_shift

    def apply(self, points: np.ndarray) -> np.ndarray:
        out = np.array(points, dtype=np.float64, copy=True)
        if self.rotation_degrees != 0.0:
            i, j = self.plane
            theta = np.deg2rad(self.rotation_degrees)
            ci, cj = out[..., i].copy(), out[..., j].copy()
            out[..., i] = np.cos(theta) * ci - np.sin(theta) * cj
            out[..., j] = np.sin(theta) * ci + np.cos(theta) * cj
        if self.shift is not None:
            out += np.asarray(self.shift, dtype=np.float64)
        return out

    def to_dict(self) -> dict:
        return {
            "rotation_degrees": self.rotation_degrees,
            "shift": None if self.shift is None else np.asarray(self.shift).tolist(),
            "plane": list(self.plane),
        }


@dataclass
class ScenarioSpec:
    """One scenario: its cumulative class set, drift transform, and stream sizing."""

    kind: str
    classes: list[int]
    transform: AffineTransform = field(default_factory=AffineTransform)
    train_batches: int = 200
    inference_share: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in SCENARIO_KINDS:
            raise InputError(f"scenario kind must be one of {SCENARIO_KINDS}")
        if not self.classes:
            raise InputError("a scenario needs at least one class")
        if self.train_batches < 1:
            raise InputError("train_batches must be >= 1")
        if self.inference_share < 0:
            raise InputError("inference_share must be >= 0")


@dataclass
class ArrivalProcess:
    """Inter-arrival time source. ``trace`` reads absolute times from CSV."""

    kind: str = "poisson"
    rate: float | None = 1.0
    low: float | None = None
    high: float | None = None
    mean: float | None = None
    std: float | None = None
    path: str | None = None
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in ARRIVAL_KINDS:
            raise InputError(f"arrival kind must be one of {ARRIVAL_KINDS}")
        if self.kind == "poisson" and (self.rate is None or self.rate <= 0):
            raise InputError("poisson arrivals need a positive rate")
        if self.kind == "uniform":
            if self.low is None or self.high is None or self.low <= 0 or self.high < self.low:
                raise InputError("uniform arrivals need 0 < low <= high")
        if self.kind == "normal":
            if self.mean is None or self.std is None or self.mean <= 0 or self.std < 0:
                raise InputError("normal arrivals need mean > 0 and std >= 0")
        if self.kind == "trace" and not self.path:
            raise InputError("trace arrivals need a file path")

    def gaps(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` positive inter-arrival times."""
        if self.kind == "poisson":
            return rng.exponential(1.0 / self.rate, size=n)
        if self.kind == "uniform":
            return rng.uniform(self.low, self.high, size=n)
        if self.kind == "normal":
            return np.maximum(rng.normal(self.mean, self.std, size=n), _MIN_INTERARRIVAL)
        raise InputError("trace processes provide absolute times, not gaps")


@dataclass
class Event:
    """One timestamped arrival in the merged stream."""

    time: float
    kind: str
    scenario: int
    seq: int
    batch: np.ndarray | None = None
    labels: np.ndarray | None = None

    def sort_key(self) -> tuple[float, int, int]:
        return (self.time, _KIND_RANK[self.kind], self.seq)


@dataclass
class ScenarioData:
    """Generated pools for one scenario. Sample ids are globally unique."""

    index: int
    kind: str
    classes: list[int]
    transform: AffineTransform
    means: dict[int, np.ndarray]
    sigma: float
    train_x: np.ndarray
    train_y: np.ndarray
    train_ids: np.ndarray
    val_x: np.ndarray
    val_y: np.ndarray
    val_ids: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    test_ids: np.ndarray


@dataclass
class Dataset:
    """All scenario pools plus generation metadata."""

    scenarios: list[ScenarioData]
    feature_dim: int
    sigma: float
    seed: int
    batch_size: int
    warnings: list[str] = field(default_factory=list)


def _sample_pool(
    rng: np.random.Generator,
    means: dict[int, np.ndarray],
    classes: list[int],
    sigma: float,
    count: int,
    dims: int,
    id_start: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    labels = rng.choice(np.asarray(classes, dtype=np.int64), size=count)
    centers = np.stack([means[int(c)] for c in labels])
    x = centers + rng.normal(0.0, sigma, size=(count, dims))
    ids = np.arange(id_start, id_start + count, dtype=np.int64)
    return x, labels, ids, id_start + count


def generate_dataset(
    specs: list[ScenarioSpec],
    dims: int,
    seed: int,
    sigma: float = 1.0,
    mean_spread: float = 0.5,
    batch_size: int = DEFAULT_BATCH_SIZE,
    test_pool_size: int = 512,
    validation_fraction: float = VALIDATION_FRACTION,
) -> Dataset:
    """Generate per-scenario train/validation/test pools.

    Class means are drawn once (spherical normal with scale ``mean_spread``)
    when a class first appears; ``new_pattern`` transforms then move the
    existing means scenario by scenario. The train pool holds exactly
    ``train_batches * batch_size`` samples; the validation pool is an i.i.d.
    draw of ``round(validation_fraction * train_pool_size)`` samples held out
    for accuracy tracking; the test pool serves inference requests. Pools are
    disjoint by construction (globally unique sample ids). Class means closer
    than one sigma are recorded as warnings, not errors.
    """
    if dims < 2:
        raise InputError("feature dimension must be >= 2")
    all_classes = sorted({c for s in specs for c in s.classes})
    if len(all_classes) > 64:
        raise InputError("at most 64 classes are supported")
    if not specs[0].transform.is_identity():
        raise InputError("the first scenario's transform must be the identity")

    seq = np.random.SeedSequence(seed)
    mean_rng, pool_rng = [np.random.default_rng(s) for s in seq.spawn(2)]

    means: dict[int, np.ndarray] = {}
    warnings: list[str] = []
    scenarios: list[ScenarioData] = []
    next_id = 0
    for idx, spec in enumerate(specs):
        if idx > 0 and not spec.transform.is_identity():
            for c in means:
                means[c] = spec.transform.apply(means[c])
        for c in spec.classes:
            if c not in means:
                means[c] = mean_rng.normal(0.0, mean_spread, size=dims)
        for i, a in enumerate(spec.classes):
            for b in spec.classes[i + 1 :]:
                dist = float(np.linalg.norm(means[a] - means[b]))
                if dist < sigma:
                    warnings.append(
                        f"scenario {idx}: classes {a} and {b} are {dist:.3f} apart (< 1 sigma)"
                    )

        train_count = spec.train_batches * batch_size
        val_count = int(round(validation_fraction * train_count))
        train_x, train_y, train_ids, next_id = _sample_pool(
            pool_rng, means, spec.classes, sigma, train_count, dims, next_id
        )
        val_x, val_y, val_ids, next_id = _sample_pool(
            pool_rng, means, spec.classes, sigma, val_count, dims, next_id
        )
        test_x, test_y, test_ids, next_id = _sample_pool(
            pool_rng, means, spec.classes, sigma, test_pool_size, dims, next_id
        )
        scenarios.append(
            ScenarioData(
                index=idx,
                kind=spec.kind,
                classes=list(spec.classes),
                transform=spec.transform,
                means={c: means[c].copy() for c in spec.classes},
                sigma=sigma,
                train_x=train_x,
                train_y=train_y,
                train_ids=train_ids,
                val_x=val_x,
                val_y=val_y,
                val_ids=val_ids,
                test_x=test_x,
                test_y=test_y,
                test_ids=test_ids,
            )
        )
    return Dataset(scenarios, dims, sigma, seed, batch_size, warnings)


def read_trace(path: str | Path) -> list[tuple[float, str]]:
    """Parse a ``time_seconds,kind`` CSV trace; kind is ``train`` or ``infer``."""
    rows: list[tuple[float, str]] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["time_seconds", "kind"]:
            raise TraceParseError(1, "expected header 'time_seconds,kind'")
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2:
                raise TraceParseError(lineno, f"expected 2 fields, got {len(row)}")
            try:
                t = float(row[0])
            except ValueError:
                raise TraceParseError(lineno, f"bad timestamp {row[0]!r}") from None
            kind = row[1].strip()
            if kind not in ("train", "infer"):
                raise TraceParseError(lineno, f"kind must be 'train' or 'infer', got {kind!r}")
            if t < 0 or not np.isfinite(t):
                raise TraceParseError(lineno, f"timestamp must be finite and >= 0, got {t}")
            rows.append((t, kind))
    return rows


def _train_times_and_boundaries(
    proc: ArrivalProcess,
    batch_counts: list[int],
    rng: np.random.Generator,
) -> tuple[list[np.ndarray], list[float]]:
    """Per-scenario train arrival times plus boundary times between scenarios.

    For generative processes the boundary sits exactly at the previous
    scenario's last arrival, strictly before the next scenario's first batch.
    For traces it sits midway between the neighbouring arrivals.
    """
    if proc.kind == "trace":
        all_times = [t for t, kind in read_trace(proc.path) if kind == "train"]
        if sum(batch_counts) > len(all_times):
            raise InputError(
                f"trace supplies {len(all_times)} train arrivals, "
                f"need {sum(batch_counts)}"
            )
        all_times = sorted(all_times)[: sum(batch_counts)]
        per_scenario: list[np.ndarray] = []
        offset = 0
        for count in batch_counts:
            per_scenario.append(np.asarray(all_times[offset : offset + count]))
            offset += count
        boundaries = [
            (per_scenario[i - 1][-1] + per_scenario[i][0]) / 2.0
            for i in range(1, len(per_scenario))
        ]
        return per_scenario, boundaries

    per_scenario = []
    boundaries = []
    cursor = 0.0
    for i, count in enumerate(batch_counts):
        if i > 0:
            boundaries.append(cursor)
        times = cursor + np.cumsum(proc.gaps(count, rng))
        per_scenario.append(times)
        cursor = float(times[-1])
    return per_scenario, boundaries


def _inference_times(
    proc: ArrivalProcess, total: int, rng: np.random.Generator
) -> np.ndarray:
    if proc.kind == "trace":
        return np.asarray(sorted(t for t, kind in read_trace(proc.path) if kind == "infer"))
    return np.cumsum(proc.gaps(total, rng))


def generate_events(
    proc_train: ArrivalProcess,
    proc_inf: ArrivalProcess,
    dataset: Dataset,
    total_inferences: int = DEFAULT_TOTAL_INFERENCES,
    seed: int = 0,
    streamed_scenarios: list[int] | None = None,
) -> list[Event]:
    """Build the merged, time-ordered event stream.

    ``streamed_scenarios`` selects which dataset scenarios appear in the
    stream (default: all but scenario 0, which is reserved for pre-training).
    A boundary event precedes every streamed scenario except the first.
    Training batches slice each scenario's train pool in order; every
    inference request carries ``batch_size`` samples drawn from the test pool
    of the scenario active at its timestamp. With a trace-based inference
    process the trace row count overrides ``total_inferences``.
    """
    if streamed_scenarios is None:
        streamed_scenarios = list(range(1, len(dataset.scenarios)))
    if not streamed_scenarios:
        raise InputError("need at least one streamed scenario")
    scen = [dataset.scenarios[i] for i in streamed_scenarios]

    seq = np.random.SeedSequence(seed)
    train_seed, inf_seed, request_seed = seq.spawn(3)
    train_rng = np.random.default_rng(
        proc_train.seed if proc_train.seed is not None else train_seed
    )
    inf_rng = np.random.default_rng(
        proc_inf.seed if proc_inf.seed is not None else inf_seed
    )
    request_rng = np.random.default_rng(request_seed)

    batch_counts = [len(s.train_y) // dataset.batch_size for s in scen]
    train_times, boundary_times = _train_times_and_boundaries(
        proc_train, batch_counts, train_rng
    )

    events: list[Event] = []
    seq_no = 0
    for s, times in zip(scen, train_times):
        for b, t in enumerate(times):
            lo = b * dataset.batch_size
            hi = lo + dataset.batch_size
            events.append(
                Event(
                    time=float(t),
                    kind=TRAIN_BATCH,
                    scenario=s.index,
                    seq=seq_no,
                    batch=s.train_x[lo:hi],
                    labels=s.train_y[lo:hi],
                )
            )
            seq_no += 1

    for new_scenario, t in zip(scen[1:], boundary_times):
        events.append(
            Event(time=float(t), kind=SCENARIO_BOUNDARY, scenario=new_scenario.index, seq=seq_no)
        )
        seq_no += 1

    def scenario_at(t: float) -> ScenarioData:
        pos = int(np.searchsorted(np.asarray(boundary_times), t, side="right"))
        return scen[pos]

    for t in _inference_times(proc_inf, total_inferences, inf_rng):
        s = scenario_at(float(t))
        picks = request_rng.choice(len(s.test_y), size=dataset.batch_size, replace=False)
        events.append(
            Event(
                time=float(t),
                kind=INFERENCE_REQUEST,
                scenario=s.index,
                seq=seq_no,
                batch=s.test_x[picks],
                labels=s.test_y[picks],
            )
        )
        seq_no += 1

    events.sort(key=Event.sort_key)
    return events


def nc_scenarios(
    scenario_count: int = 9,
    initial_classes: int = 2,
    new_classes_per_scenario: int = 1,
    train_batches: int = 200,
    drift_kind: str = "new_class",
    rotation_degrees: float = 30.0,
    shift_magnitude: float = 0.0,
    dims: int = 64,
    seed: int = 0,
) -> list[ScenarioSpec]:
    """Benchmark scaffold: scenario 0 pre-trains, later scenarios drift.

    ``new_class`` adds classes each scenario; ``new_pattern`` keeps the class
    set and rotates/shifts the existing clusters; ``mixed`` alternates.
    """
    if scenario_count < 2:
        raise ConfigError("need at least 2 scenarios (pre-training plus one streamed)")
    if drift_kind not in SCENARIO_KINDS:
        raise ConfigError(f"drift_kind must be one of {SCENARIO_KINDS}")
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x5C)))
    specs: list[ScenarioSpec] = []
    classes = list(range(initial_classes))
    for idx in range(scenario_count):
        if idx == 0:
            specs.append(ScenarioSpec("new_class", list(classes), AffineTransform(), train_batches))
            continue
        add_classes = drift_kind == "new_class" or (drift_kind == "mixed" and idx % 2 == 1)
        transform = AffineTransform()
        kind = "new_class"
        if not add_classes:
            kind = "new_pattern"
            shift = None
            if shift_magnitude > 0:
                direction = rng.normal(size=dims)
                shift = shift_magnitude * direction / np.linalg.norm(direction)
            transform = AffineTransform(rotation_degrees=rotation_degrees, shift=shift)
        else:
            start = max(classes) + 1
            classes = classes + list(range(start, start + new_classes_per_scenario))
        specs.append(ScenarioSpec(kind, list(classes), transform, train_batches))
    return specs


def export_dataset_json(dataset: Dataset, path: str | Path) -> None:
    """Write generation metadata (means, transforms, sizes, seed) as JSON."""
    doc = {
        "feature_dim": dataset.feature_dim,
        "sigma": dataset.sigma,
        "seed": dataset.seed,
        "batch_size": dataset.batch_size,
        "warnings": dataset.warnings,
        "scenarios": [
            {
                "index": s.index,
                "kind": s.kind,
                "classes": s.classes,
                "transform": s.transform.to_dict(),
                "means": {str(c): m.tolist() for c, m in sorted(s.means.items())},
                "train_size": int(len(s.train_y)),
                "val_size": int(len(s.val_y)),
                "test_size": int(len(s.test_y)),
            }
            for s in dataset.scenarios
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")

"""edgecl: an edge continual-learning scheduling simulator.

The library reproduces two scheduling mechanisms over a small trainable
network with an explicit time/energy cost model:

* lazy fine-tuning-round triggering — an adaptive batch threshold driven by
  a fitted validation-accuracy curve, inference arrivals, and scenario
  changes (``edgecl.lazytune``);
* similarity-guided layer freezing — CKA against a reference snapshot
  freezes converged layers and selectively thaws them on scenario changes
  (``edgecl.simfreeze``, ``edgecl.cka``).

Supporting pieces: a dense network with freeze-aware backprop and FLOP
accounting (``edgecl.network``), energy-score drift detection
(``edgecl.drift``), synthetic drifting workloads (``edgecl.workload``), the
cost ledger (``edgecl.costmodel``), and a discrete-event harness plus CLI
(``edgecl.harness``, ``edgecl.cli``).
"""

from .cka import CkaTrack, cka, variation_rate
from .config import (
    RunConfig,
    default_run_config,
    from_dict,
    load_config,
    parse_policy,
    to_dict,
)
from .costmodel import CostLedger, CostParams, calibrate_defaults, charge_round
from .drift import DriftDetector, energy_score
from .errors import (
    ConfigError,
    DegenerateInputError,
    EdgeclError,
    InputError,
    NumericError,
    ShapeError,
    StateError,
    TraceParseError,
)
from .harness import build_dataset, build_events, compare, run
from .lazytune import (
    CurveFit,
    TunerState,
    estimate_batches_needed,
    fit_error_curve,
    on_inference,
    record_round,
    should_trigger,
)
from .network import (
    CwrBank,
    DenseLayer,
    FlopReport,
    Network,
    backward,
    cwr_end_round,
    cwr_start_round,
    evaluate,
    forward,
    init_network,
    predict_logits,
    sgd_step,
    train_step,
)
from .report import RunReport, read_report, write_report
from .simfreeze import FreezeController, make_controller, maybe_freeze
from .workload import (
    AffineTransform,
    ArrivalProcess,
    Dataset,
    Event,
    ScenarioSpec,
    export_dataset_json,
    generate_dataset,
    generate_events,
    nc_scenarios,
)

__version__ = "0.1.0"

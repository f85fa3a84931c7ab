"""dslsim: deterministic distributed swarm learning over a simulated wireless edge.

Workers blend particle-swarm velocity terms with local SGD gradients, report
fair-value scores under communication censoring, and the lowest-loss workers
share their best models through noisy over-the-air aggregation, with optional
Byzantine attacks, screening, and node/link failures.
"""

from .channel import (
    AggregationError,
    ChannelModel,
    ChannelRealization,
    align_transmissions,
    ota_aggregate,
    power_control,
    sample_gains,
)
from .config import DataConfig, ExperimentConfig, ObjectiveConfig, from_dict, load_config
from .core import (
    ConfigError,
    HyperSchedule,
    NumericError,
    ParamVector,
    RngStream,
    RoundParams,
    draw_pso_coeffs,
    eval_schedule,
)
from .data import (
    Dataset,
    GlobalDataset,
    PartitionSpec,
    gen_synthetic,
    load_csv,
    merge_global_train,
    partition_noniid,
    weight_divergence,
)
from .harness import RoundMetrics, Task, build_task, run, sweep
from .models import ModelSpec, accuracy, fd_grad, grad, gradient_check, loss
from .optimizer import (
    SwarmState,
    WorkerState,
    dsl_step,
    fl_round,
    init_worker,
    pso_round,
    update_local_best,
)
from .robustness import (
    AttackSpec,
    FailureSpec,
    ScreeningPolicy,
    apply_attack,
    attacker_ids,
    inject_failures,
    permanent_failures,
    screen_aggregate,
)
from .selection import CensorPolicy, ScoreReport, censor_report, next_best, select_workers

__version__ = "0.1.0"

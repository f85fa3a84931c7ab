"""Fair-value score reporting with communication censoring, and worker selection.

Workers upload a single scalar (their best fair-value loss) per round, and
only when it moved enough since their last upload; the server ranks the
reported values and picks the s_t lowest to transmit their models.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import ConfigError, NumericError
from .optimizer import WorkerState


@dataclass(frozen=True)
class ScoreReport:
    worker_id: int
    reported_f: float
    fresh: bool  # transmitted this round (False: server reuses the stale value)


@dataclass(frozen=True)
class CensorPolicy:
    enabled: bool = False
    threshold_init: float = 0.0
    decay: float = 1.0

    def validate(self, prefix: str = "censoring"):
        if self.threshold_init < 0:
            raise ConfigError(
                f"{prefix}.threshold_init must be >= 0, got {self.threshold_init}"
            )
        if not 0.0 < self.decay <= 1.0:
            raise ConfigError(f"{prefix}.decay must be in (0, 1], got {self.decay}")

    def threshold_at(self, t: int) -> float:
        if not self.enabled:
            return 0.0
        return float(self.threshold_init) * float(self.decay) ** t


def censor_report(
    worker: WorkerState, f_current: float, threshold_t: float
) -> tuple[ScoreReport, WorkerState]:
    """Transmit the score only if it moved more than the threshold.

    A worker that has never reported always transmits, and a zero threshold
    means censoring is off (every round is fresh, the U*T baseline). Otherwise
    the server keeps using the last transmitted value as an approximation, at
    zero uplink cost.
    """
    if not np.isfinite(f_current):
        raise NumericError(f"worker {worker.id}: non-finite score {f_current}")
    never_reported = worker.last_reported_f is None
    if (
        never_reported
        or threshold_t == 0.0
        or abs(f_current - worker.last_reported_f) > threshold_t
    ):
        report = ScoreReport(worker.id, float(f_current), fresh=True)
        return report, replace(worker, last_reported_f=float(f_current))
    return ScoreReport(worker.id, float(worker.last_reported_f), fresh=False), worker


def select_workers(reports: list[ScoreReport], s_t: int) -> list[int]:
    """Ids of the min(s_t, #reports) lowest-scoring workers.

    Ties break toward the lower worker id; the result is ordered by
    (reported_f, id).
    """
    if not reports:
        raise ValueError("cannot select from an empty report list")
    if s_t < 1:
        raise ValueError(f"s_t must be >= 1, got {s_t}")
    ranked = sorted(reports, key=lambda r: (r.reported_f, r.worker_id))
    return [r.worker_id for r in ranked[:s_t]]


def next_best(reports: list[ScoreReport], excluded, k: int) -> list[int]:
    """The k lowest-scoring workers not in `excluded` (all remaining if fewer)."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    excluded = set(excluded)
    ranked = sorted(
        (r for r in reports if r.worker_id not in excluded),
        key=lambda r: (r.reported_f, r.worker_id),
    )
    return [r.worker_id for r in ranked[:k]]

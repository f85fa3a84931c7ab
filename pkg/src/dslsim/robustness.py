"""Byzantine attack injection, aggregate screening, and node/link failure models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConfigError, ParamVector, RngStream
from .optimizer import WorkerState

ATTACK_KINDS = ("none", "sign_flip", "gaussian_noise", "score_lying")


@dataclass(frozen=True)
class AttackSpec:
    kind: str = "none"
    num_attackers: int = 0
    magnitude: float = 1.0
    randomize_ids: bool = False  # default: lowest ids attack, for reproducibility

    def validate(self, num_workers: int, prefix: str = "attacks"):
        if self.kind not in ATTACK_KINDS:
            raise ConfigError(f"{prefix}.kind must be one of {ATTACK_KINDS}, got {self.kind!r}")
        if self.num_attackers < 0:
            raise ConfigError(f"{prefix}.num_attackers must be >= 0, got {self.num_attackers}")
        if self.num_attackers > num_workers:
            raise ConfigError(
                f"{prefix}.num_attackers must be <= num_workers ({num_workers}), "
                f"got {self.num_attackers}"
            )
        if not self.magnitude > 0:
            raise ConfigError(f"{prefix}.magnitude must be > 0, got {self.magnitude}")

    @property
    def active(self) -> bool:
        return self.kind != "none" and self.num_attackers > 0


def attacker_ids(spec: AttackSpec, num_workers: int, rng: RngStream | None = None) -> frozenset:
    """Which workers are Byzantine for the whole run."""
    if not spec.active:
        return frozenset()
    if spec.randomize_ids:
        if rng is None:
            raise ValueError("randomize_ids requires an RngStream")
        ids = rng.generator().choice(num_workers, size=spec.num_attackers, replace=False)
        return frozenset(int(i) for i in ids)
    return frozenset(range(spec.num_attackers))


def apply_attack(
    spec: AttackSpec,
    worker: WorkerState,
    true_w: ParamVector,
    true_f: float,
    rng: RngStream,
) -> tuple[ParamVector, float]:
    """What a Byzantine worker actually transmits: (model vector, reported score).

    sign_flip sends the negated, magnitude-scaled model but scores honestly;
    gaussian_noise perturbs the model; score_lying perturbs the model and
    reports a zero loss, which is minimal for cross-entropy and therefore
    guarantees selection.
    """
    if spec.kind == "none" or not worker.is_byzantine:
        return true_w, true_f
    if spec.kind == "sign_flip":
        return -spec.magnitude * true_w, true_f
    noise = rng.generator().standard_normal(len(true_w)) * spec.magnitude
    if spec.kind == "gaussian_noise":
        return true_w + noise, true_f
    if spec.kind == "score_lying":
        return true_w + noise, 0.0
    raise ValueError(f"unknown attack kind {spec.kind!r}")


@dataclass(frozen=True)
class ScreeningPolicy:
    enabled: bool = False
    tolerance: float | None = None  # None: calibrate from an attack-free pilot
    max_retries: int = 2

    def validate(self, prefix: str = "screening"):
        if self.tolerance is not None and not self.tolerance > 0:
            raise ConfigError(f"{prefix}.tolerance must be > 0 or null, got {self.tolerance}")
        if self.max_retries < 0:
            raise ConfigError(f"{prefix}.max_retries must be >= 0, got {self.max_retries}")


def screen_aggregate(
    w_candidate: ParamVector,
    selected_reports: list[float],
    score_fn,
    tolerance: float,
) -> tuple[bool, float]:
    """Accept the aggregate iff its fair-value score sits near the reported scores.

    Returns (accept, gap) with gap = |score_fn(w_candidate) - mean(reports)|.
    A tolerance of zero rejects almost always for a nonlinear loss, because
    the score of a mean of models exceeds the mean of their scores (Jensen
    gap); calibrate the tolerance above the honest gap.
    """
    if not selected_reports:
        raise ValueError("screen_aggregate needs at least one reported score")
    f_agg = float(score_fn(w_candidate))
    gap = abs(f_agg - float(np.mean(selected_reports)))
    return gap <= tolerance, gap


@dataclass(frozen=True)
class FailureSpec:
    link_drop_prob: float = 0.0  # per selected worker per round
    node_fail_prob: float = 0.0  # per worker per run, permanent

    def validate(self, prefix: str = "failures"):
        for key in ("link_drop_prob", "node_fail_prob"):
            v = getattr(self, key)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{prefix}.{key} must be in [0, 1], got {v}")

    @property
    def active(self) -> bool:
        return self.link_drop_prob > 0 or self.node_fail_prob > 0


def permanent_failures(spec: FailureSpec, num_workers: int, rng: RngStream) -> frozenset:
    """Nodes that are dead for the whole run, decided before round 0."""
    if spec.node_fail_prob <= 0:
        return frozenset()
    g = rng.generator()
    draws = g.random(num_workers)
    return frozenset(int(i) for i in np.nonzero(draws < spec.node_fail_prob)[0])


def inject_failures(
    selected,
    spec: FailureSpec,
    rng: RngStream,
    t: int,
    permanent_failed=frozenset(),
) -> list[int]:
    """Selected workers that still reach the server this round.

    Link fate is keyed per (worker, round), so re-selecting a worker within
    the same round cannot change its outcome.
    """
    surviving = []
    for worker_id in sorted(selected):
        if worker_id in permanent_failed:
            continue
        if spec.link_drop_prob > 0:
            u = rng.child(worker_id, t).generator().random()
            if u < spec.link_drop_prob:
                continue
        surviving.append(worker_id)
    return surviving

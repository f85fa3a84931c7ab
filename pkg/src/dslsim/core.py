"""Shared domain types: parameter vectors, hyperparameter schedules, RNG streams."""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

# Model parameters, velocities, and gradients are all flat float64 vectors of
# a fixed dimension d for the lifetime of a run.
ParamVector = np.ndarray

_MASK64 = 0xFFFFFFFFFFFFFFFF


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


class NumericError(RuntimeError):
    """A non-finite value appeared during simulation."""


def as_param_vector(values) -> ParamVector:
    """Coerce to a contiguous float64 vector."""
    vec = np.ascontiguousarray(values, dtype=np.float64)
    if vec.ndim != 1:
        raise ValueError(f"expected a flat vector, got shape {vec.shape}")
    return vec


def ensure_finite(vec, context: str = "") -> ParamVector:
    """Raise NumericError unless every entry of `vec` is finite."""
    if not np.all(np.isfinite(vec)):
        where = f" in {context}" if context else ""
        raise NumericError(f"non-finite values{where}")
    return vec


def require_same_dim(a, b, context: str = ""):
    if len(a) != len(b):
        where = f" in {context}" if context else ""
        raise ValueError(f"dimension mismatch{where}: {len(a)} vs {len(b)}")


@dataclass(frozen=True)
class RngStream:
    """A named, replayable randomness source.

    Generators are derived from the key (master_seed, label, indices), so
    distinct keys give statistically independent streams and the order in
    which streams are consumed can never change any draw. Typical usage keys
    a stream per (label, worker, round):

        RngStream(seed, "pso_coeffs").child(worker_id, t).generator()
    """

    master_seed: int
    label: str
    indices: tuple = ()

    def child(self, *indices) -> "RngStream":
        return RngStream(
            self.master_seed,
            self.label,
            self.indices + tuple(int(i) for i in indices),
        )

    def generator(self) -> np.random.Generator:
        key = [self.master_seed & _MASK64, zlib.crc32(self.label.encode("utf8"))]
        key.extend(int(i) & _MASK64 for i in self.indices)
        return np.random.default_rng(np.random.SeedSequence(key))


@dataclass(frozen=True)
class HyperSchedule:
    """Endpoints for the per-round hyperparameters of a run.

    lambda (swarm/gradient tradeoff) and c0 (velocity inertia) decay linearly
    from init to final over the run; the number of selected workers s grows
    linearly from s_init to s_final. c1/c2 are the caps of the per-worker
    uniform draws for the individual and social pull coefficients. alpha is
    the SGD step size and mu the weight of the proximal pull toward the last
    global model.
    """

    lambda_init: float = 0.8
    lambda_final: float = 0.2
    c0_init: float = 1.0
    c0_final: float = 0.4
    c1_max: float = 1.0
    c2_max: float = 1.0
    alpha: float = 0.1
    mu: float = 0.0
    s_init: int = 1
    s_final: int = 1
    rounds_total: int = 1

    def validate(self, num_workers: int, prefix: str = "schedules"):
        for key in ("lambda_init", "lambda_final"):
            v = getattr(self, key)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{prefix}.{key} must be in [0, 1], got {v}")
        for key in ("c0_init", "c0_final", "c1_max", "c2_max", "alpha"):
            v = getattr(self, key)
            if not v > 0.0:
                raise ConfigError(f"{prefix}.{key} must be > 0, got {v}")
        if self.mu < 0.0:
            raise ConfigError(f"{prefix}.mu must be >= 0, got {self.mu}")
        if not 1 <= self.s_init <= self.s_final:
            raise ConfigError(
                f"{prefix}.s_init must satisfy 1 <= s_init <= s_final, "
                f"got s_init={self.s_init}, s_final={self.s_final}"
            )
        if self.s_final > num_workers:
            raise ConfigError(
                f"{prefix}.s_final must be <= num_workers ({num_workers}), got {self.s_final}"
            )
        if self.rounds_total < 1:
            raise ConfigError(f"{prefix}.rounds_total must be >= 1, got {self.rounds_total}")


@dataclass(frozen=True)
class RoundParams:
    """Hyperparameters resolved for one specific round."""

    lambda_t: float
    c0_t: float
    s_t: int
    censor_threshold_t: float = 0.0


def _lerp(a: float, b: float, t: int, total: int) -> float:
    # endpoints must reproduce exactly, so never interpolate at the edges
    if total <= 1 or t == 0:
        return float(a)
    if t == total - 1:
        return float(b)
    return float(a + (b - a) * (t / (total - 1)))


def eval_schedule(schedule: HyperSchedule, t: int, censor=None) -> RoundParams:
    """Resolve the schedule at round t (pure; endpoints are reproduced exactly).

    `censor` is an optional selection.CensorPolicy; when given and enabled,
    the report-censoring threshold decays geometrically as
    threshold_init * decay**t.
    """
    total = schedule.rounds_total
    if not 0 <= t < total:
        raise ValueError(f"round index {t} out of range [0, {total})")
    lam = _lerp(schedule.lambda_init, schedule.lambda_final, t, total)
    lam = min(1.0, max(0.0, lam))
    c0 = _lerp(schedule.c0_init, schedule.c0_final, t, total)
    s_raw = _lerp(float(schedule.s_init), float(schedule.s_final), t, total)
    s_t = int(np.floor(s_raw + 0.5))
    s_t = min(schedule.s_final, max(schedule.s_init, s_t))
    threshold = 0.0
    if censor is not None and getattr(censor, "enabled", False):
        threshold = float(censor.threshold_init) * float(censor.decay) ** t
    return RoundParams(lambda_t=lam, c0_t=c0, s_t=s_t, censor_threshold_t=threshold)


def draw_pso_coeffs(rng: RngStream, c1_max: float, c2_max: float, dim: int | None = None):
    """Draw the stochastic pull coefficients c1 ~ U(0, c1_max], c2 ~ U(0, c2_max].

    One draw per worker per round; key the stream accordingly. By default the
    coefficients are scalars multiplying whole difference vectors; pass `dim`
    to draw one coefficient per coordinate instead (richer exploration, the
    usual choice for pure swarm search).
    """
    if c1_max <= 0 or c2_max <= 0:
        raise ValueError("c1_max and c2_max must be > 0")
    g = rng.generator()
    # 1 - u maps [0, 1) onto (0, 1], keeping the coefficients strictly positive
    if dim is None:
        u = g.random(2)
        return float(c1_max * (1.0 - u[0])), float(c2_max * (1.0 - u[1]))
    c1 = c1_max * (1.0 - g.random(dim))
    c2 = c2_max * (1.0 - g.random(dim))
    return c1, c2

"""Simulated wireless uplink: block fading, power control, over-the-air aggregation.

Selected workers transmit their model vectors simultaneously; the receiver
sees the power- and gain-scaled superposition plus additive Gaussian noise
and divides by (eta * S_eff), where eta is the common alignment product that
per-round power control achieves. One aggregation costs one channel use no
matter how many workers transmit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConfigError, ParamVector, RngStream, ensure_finite


class AggregationError(RuntimeError):
    """No worker survived truncation; nothing was transmitted."""


@dataclass(frozen=True)
class ChannelModel:
    kind: str = "ideal"  # ideal | rayleigh
    noise_var: float = 0.0
    p_max: float = 10.0
    h_min: float = 0.0
    policy: str = "inversion"  # inversion | bev_max
    per_coordinate: bool = False

    def validate(self, prefix: str = "channel"):
        if self.kind not in ("ideal", "rayleigh"):
            raise ConfigError(f"{prefix}.kind must be ideal or rayleigh, got {self.kind!r}")
        if self.noise_var < 0:
            raise ConfigError(f"{prefix}.noise_var must be >= 0, got {self.noise_var}")
        if not self.p_max > 0:
            raise ConfigError(f"{prefix}.p_max must be > 0, got {self.p_max}")
        if self.h_min < 0:
            raise ConfigError(f"{prefix}.h_min must be >= 0, got {self.h_min}")
        if self.policy not in ("inversion", "bev_max"):
            raise ConfigError(f"{prefix}.policy must be inversion or bev_max")


@dataclass(frozen=True)
class ChannelRealization:
    """One worker's channel draw and transmit decision for one round."""

    worker_id: int
    gain: object  # scalar, or (d,) array in per-coordinate mode
    power: object
    included: bool


def rayleigh_gain(g: np.random.Generator, size=None):
    """Fading magnitude with unit mean square: sqrt(x^2 + y^2) / sqrt(2)."""
    x = g.standard_normal(size)
    y = g.standard_normal(size)
    return np.sqrt(x * x + y * y) / np.sqrt(2.0)


def sample_gains(model: ChannelModel, selected, rng: RngStream, dim: int = 1) -> dict:
    """Block-fading gain per selected worker, keyed by worker id.

    Each worker's gain comes from its own child stream, so the draw depends
    only on (seed, label, round, worker) and not on who else was selected.
    """
    gains = {}
    for worker_id in sorted(selected):
        if model.kind == "ideal":
            gains[worker_id] = np.ones(dim) if model.per_coordinate else 1.0
        else:
            g = rng.child(worker_id).generator()
            if model.per_coordinate:
                gains[worker_id] = rayleigh_gain(g, dim)
            else:
                gains[worker_id] = float(rayleigh_gain(g))
    return gains


def _summary_gain(gain) -> float:
    """Scalar gain magnitude used for the truncation test (rms over coordinates)."""
    arr = np.asarray(gain, dtype=np.float64)
    return float(np.sqrt(np.mean(arr * arr)))


def power_control(policy: str, gain, p_max: float, h_min: float):
    """Per-worker transmit power before common alignment.

    inversion: invert the channel, capped at p_max; workers in deep fade
    (gain below h_min) are weeded out. bev_max: always transmit at full
    power (best-effort voting), subject to the same truncation.
    """
    summary = _summary_gain(gain)
    if summary < h_min or summary <= 0.0:
        return (np.zeros_like(gain) if np.ndim(gain) else 0.0), False
    if policy == "inversion":
        if np.ndim(gain):
            return np.minimum(1.0 / np.asarray(gain, dtype=np.float64), p_max), True
        return min(1.0 / gain, p_max), True
    if policy == "bev_max":
        if np.ndim(gain):
            return np.full(np.shape(gain), p_max), True
        return p_max, True
    raise ValueError(f"unknown power policy {policy!r}")


def align_transmissions(
    gains: dict, model: ChannelModel
) -> tuple[list[ChannelRealization], float]:
    """Resolve per-worker powers with a common alignment product eta.

    Under inversion, all included workers rescale so that p*h equals the same
    eta = min(1, min_i p_max*h_i); the receiver later divides by eta*S_eff,
    which keeps the aggregate an unbiased mean even when the power cap binds.
    Under bev_max, everyone transmits at p_max and eta is p_max itself, so an
    ideal channel still averages exactly while fading turns the aggregate
    into a gain-weighted vote.
    """
    realizations = []
    if model.policy == "inversion":
        included_ids = [
            i for i, h in gains.items() if _summary_gain(h) >= model.h_min and _summary_gain(h) > 0
        ]
        if included_ids:
            eta = min(
                1.0,
                min(float(np.min(model.p_max * np.asarray(gains[i]))) for i in included_ids),
            )
        else:
            eta = 0.0
        for i in sorted(gains):
            if i in included_ids:
                power = eta / np.asarray(gains[i]) if np.ndim(gains[i]) else eta / gains[i]
                realizations.append(ChannelRealization(i, gains[i], power, True))
            else:
                realizations.append(ChannelRealization(i, gains[i], 0.0, False))
        return realizations, eta

    eta = model.p_max
    for i in sorted(gains):
        power, included = power_control("bev_max", gains[i], model.p_max, model.h_min)
        realizations.append(ChannelRealization(i, gains[i], power if included else 0.0, included))
    return realizations, eta


def ota_aggregate(
    contributions, noise_var: float, rng: RngStream, receiver_scale: float = 1.0
) -> tuple[ParamVector, int]:
    """Over-the-air aggregate of the included contributions.

    `contributions` is a list of (vector, gain, power, included). The result
    is (sum_i p_i*h_i*w_i + noise) / (receiver_scale * S_eff) with noise drawn
    i.i.d. N(0, noise_var) per coordinate, i.e. the receiver scales channel
    noise by the same factor as the signal. Excluded entries contribute
    nothing at all.
    """
    included = [(w, h, p) for (w, h, p, ok) in contributions if ok]
    s_eff = len(included)
    if s_eff == 0:
        raise AggregationError("no included contributions to aggregate")
    dim = len(included[0][0])
    acc = np.zeros(dim)
    for w, h, p in included:
        acc += np.asarray(p) * np.asarray(h) * w
    if noise_var > 0.0:
        acc += rng.generator().standard_normal(dim) * np.sqrt(noise_var)
    if receiver_scale <= 0.0:
        raise AggregationError(f"invalid receiver scale {receiver_scale}")
    out = acc / (receiver_scale * s_eff)
    ensure_finite(out, "over-the-air aggregate")
    return out, s_eff

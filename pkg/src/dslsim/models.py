"""Differentiable classifiers: softmax regression and a one-hidden-layer tanh MLP.

Loss and gradient work on flat parameter vectors so the optimizer never needs
to know a model's internal layout. The cross-entropy may carry a quadratic
proximal penalty (mu/2)*||w - anchor||^2 pulling toward the previous global
model, which is how local updates are kept from drifting apart on skewed data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ConfigError, NumericError, ParamVector, RngStream
from .data import Dataset


@dataclass(frozen=True)
class ModelSpec:
    kind: str  # linear | mlp
    d_in: int
    num_classes: int
    hidden: int = 0

    def validate(self, prefix: str = "model"):
        if self.kind not in ("linear", "mlp"):
            raise ConfigError(f"{prefix}.kind must be linear or mlp, got {self.kind!r}")
        if self.d_in < 1:
            raise ConfigError(f"{prefix}.d_in must be >= 1, got {self.d_in}")
        if self.num_classes < 1:
            raise ConfigError(f"{prefix}.classes must be >= 1, got {self.num_classes}")
        if self.kind == "mlp" and self.hidden < 1:
            raise ConfigError(f"{prefix}.hidden must be >= 1 for mlp, got {self.hidden}")

    @property
    def param_dim(self) -> int:
        d, c, h = self.d_in, self.num_classes, self.hidden
        if self.kind == "linear":
            return d * c + c
        return d * h + h + h * c + c


def unpack(spec: ModelSpec, w: ParamVector):
    """Split a flat parameter vector into weight/bias views (no copies)."""
    d, c, h = spec.d_in, spec.num_classes, spec.hidden
    if len(w) != spec.param_dim:
        raise ValueError(f"expected {spec.param_dim} parameters, got {len(w)}")
    if spec.kind == "linear":
        return w[: d * c].reshape(d, c), w[d * c :]
    o = 0
    w1 = w[o : o + d * h].reshape(d, h)
    o += d * h
    b1 = w[o : o + h]
    o += h
    w2 = w[o : o + h * c].reshape(h, c)
    o += h * c
    b2 = w[o:]
    return w1, b1, w2, b2


def _forward(spec: ModelSpec, w: ParamVector, x: np.ndarray):
    if spec.kind == "linear":
        weights, bias = unpack(spec, w)
        return x @ weights + bias, None
    w1, b1, w2, b2 = unpack(spec, w)
    hidden = np.tanh(x @ w1 + b1)
    return hidden @ w2 + b2, hidden


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def loss(
    spec: ModelSpec,
    w: ParamVector,
    data: Dataset,
    mu: float = 0.0,
    anchor: ParamVector | None = None,
) -> float:
    """Mean cross-entropy on `data`, plus the proximal penalty when `anchor` is given."""
    if len(data) == 0:
        raise ValueError("loss requires a non-empty dataset")
    logits, _ = _forward(spec, w, data.features)
    logp = _log_softmax(logits)
    value = float(-logp[np.arange(len(data)), data.labels].mean())
    if mu != 0.0 and anchor is not None:
        diff = w - anchor
        value += 0.5 * mu * float(diff @ diff)
    if not np.isfinite(value):
        raise NumericError(f"non-finite loss (|w| max {np.abs(w).max():.3g})")
    return value


def grad(
    spec: ModelSpec,
    w: ParamVector,
    data: Dataset,
    mu: float = 0.0,
    anchor: ParamVector | None = None,
) -> ParamVector:
    """Analytic gradient of `loss` with respect to the flat parameter vector."""
    if len(data) == 0:
        raise ValueError("grad requires a non-empty dataset")
    x, y = data.features, data.labels
    n = len(data)
    logits, hidden = _forward(spec, w, x)
    probs = np.exp(_log_softmax(logits))
    probs[np.arange(n), y] -= 1.0
    probs /= n  # dL/dlogits

    out = np.empty_like(w)
    if spec.kind == "linear":
        d, c = spec.d_in, spec.num_classes
        out[: d * c] = (x.T @ probs).ravel()
        out[d * c :] = probs.sum(axis=0)
    else:
        d, c, h = spec.d_in, spec.num_classes, spec.hidden
        _, _, w2, _ = unpack(spec, w)
        d_hidden = (probs @ w2.T) * (1.0 - hidden**2)
        o = 0
        out[o : o + d * h] = (x.T @ d_hidden).ravel()
        o += d * h
        out[o : o + h] = d_hidden.sum(axis=0)
        o += h
        out[o : o + h * c] = (hidden.T @ probs).ravel()
        o += h * c
        out[o:] = probs.sum(axis=0)
    if mu != 0.0 and anchor is not None:
        out += mu * (w - anchor)
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite gradient")
    return out


def accuracy(spec: ModelSpec, w: ParamVector, data: Dataset) -> float:
    """Fraction of argmax-correct predictions; ties go to the lowest class index."""
    if len(data) == 0:
        raise ValueError("accuracy requires a non-empty dataset")
    logits, _ = _forward(spec, w, data.features)
    return float((logits.argmax(axis=1) == data.labels).mean())


def init_params(spec: ModelSpec, rng: RngStream, scale: float = 0.05) -> ParamVector:
    """Uniform(-scale, scale) initial parameters."""
    g = rng.generator()
    return g.uniform(-scale, scale, spec.param_dim)


def fd_grad(
    spec: ModelSpec,
    w: ParamVector,
    data: Dataset,
    coords,
    mu: float = 0.0,
    anchor: ParamVector | None = None,
    step: float = 1e-5,
) -> np.ndarray:
    """Central finite differences of `loss` at the given coordinates (test oracle)."""
    out = np.empty(len(coords))
    for k, j in enumerate(coords):
        wp = w.copy()
        wp[j] += step
        wm = w.copy()
        wm[j] -= step
        out[k] = (loss(spec, wp, data, mu, anchor) - loss(spec, wm, data, mu, anchor)) / (
            2.0 * step
        )
    return out


def gradient_check(
    spec: ModelSpec,
    rng: RngStream,
    n_probes: int = 20,
    n_samples: int = 40,
    step: float = 1e-5,
    mu: float = 0.3,
) -> float:
    """Max relative error between analytic and finite-difference gradients.

    Probes `n_probes` random coordinates of a random parameter vector on a
    random batch, including the proximal term.
    """
    g = rng.generator()
    x = g.standard_normal((n_samples, spec.d_in))
    y = g.integers(0, spec.num_classes, n_samples)
    data = Dataset(x, y)
    w = g.uniform(-0.5, 0.5, spec.param_dim)
    anchor = g.uniform(-0.5, 0.5, spec.param_dim)
    coords = g.choice(spec.param_dim, size=min(n_probes, spec.param_dim), replace=False)
    exact = grad(spec, w, data, mu, anchor)[coords]
    approx = fd_grad(spec, w, data, coords, mu, anchor, step)
    scale = np.maximum(np.abs(exact), np.abs(approx))
    scale[scale < 1e-8] = 1.0
    return float(np.max(np.abs(exact - approx) / scale))

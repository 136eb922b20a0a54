"""Feed-forward networks with hand-written backprop and Adam.

Every model in the package (encoders, decoders, classifiers, policies) is a
plain rectifier MLP stored as a :class:`ParamBundle`.  Parameters are kept as a
flat list ``[W0, b0, W1, b1, ...]`` with ``W`` of shape ``(out, in)`` so that
gradients, Adam moments and serialized snapshots all share one ordering.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from .errors import ConfigurationError, NumericalError, ShapeError

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class ParamBundle:
    """Weights of one MLP plus its Adam state."""

    params: List[np.ndarray]
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)
    step: int = 0

    def __post_init__(self):
        if len(self.params) % 2:
            raise ShapeError("params must alternate weight, bias")
        if not self.m:
            self.m = [np.zeros_like(p) for p in self.params]
        if not self.v:
            self.v = [np.zeros_like(p) for p in self.params]
        for k in range(0, len(self.params) - 2, 2):
            if self.params[k].shape[0] != self.params[k + 2].shape[1]:
                raise ShapeError(f"layer {k // 2} output does not feed layer {k // 2 + 1}")

    @property
    def layers(self):
        return [(self.params[k], self.params[k + 1]) for k in range(0, len(self.params), 2)]

    @property
    def in_dim(self) -> int:
        return self.params[0].shape[1]

    @property
    def out_dim(self) -> int:
        return self.params[-1].shape[0]

    @property
    def hidden(self) -> List[int]:
        return [W.shape[0] for W, _ in self.layers[:-1]]

    def n_params(self) -> int:
        return int(sum(p.size for p in self.params))

    def copy(self) -> "ParamBundle":
        return ParamBundle(
            [p.copy() for p in self.params],
            [a.copy() for a in self.m],
            [a.copy() for a in self.v],
            self.step,
        )

    def zeros_like(self) -> List[np.ndarray]:
        return [np.zeros_like(p) for p in self.params]


def xavier_bound(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def xavier_uniform(shape, rng: np.random.Generator) -> np.ndarray:
    fan_out, fan_in = shape
    b = xavier_bound(fan_in, fan_out)
    return rng.uniform(-b, b, size=shape)


def mlp_init(arch: Sequence[int], in_dim: int, out_dim: int, seed) -> ParamBundle:
    """Glorot-uniform weights, zero biases.

    ``arch`` lists hidden widths; an empty list gives a single affine layer
    (used for logistic models).  ``seed`` may be an int or a Generator.
    """
    dims = [in_dim, *arch, out_dim]
    if any(int(d) < 1 for d in dims):
        raise ConfigurationError(f"all layer widths must be >= 1, got {dims}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    params = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        params.append(xavier_uniform((fan_out, fan_in), rng))
        params.append(np.zeros(fan_out))
    return ParamBundle(params)


def mlp_forward(bundle: ParamBundle, x: np.ndarray):
    """Forward pass that also returns the cache needed by :func:`mlp_backward`."""
    x = np.asarray(x, dtype=float)
    squeeze = x.ndim == 1
    h = x[None, :] if squeeze else x
    if h.shape[-1] != bundle.in_dim:
        raise ShapeError(f"expected input width {bundle.in_dim}, got {h.shape[-1]}")
    acts = [h]
    layers = bundle.layers
    for i, (W, b) in enumerate(layers):
        h = h @ W.T + b
        if i < len(layers) - 1:
            h = np.maximum(h, 0.0)
        acts.append(h)
    out = h[0] if squeeze else h
    return out, (acts, squeeze)


def mlp_apply(bundle: ParamBundle, x: np.ndarray) -> np.ndarray:
    """Evaluate the network on one input vector or a batch of rows."""
    return mlp_forward(bundle, x)[0]


def mlp_backward(bundle: ParamBundle, cache, dout: np.ndarray):
    """Pull ``dout`` (gradient w.r.t. the output) back to parameters and input.

    Returns ``(grads, dinput)`` where ``grads`` follows the bundle's parameter
    ordering.  Gradients are summed over batch rows; callers scale for means.
    """
    acts, squeeze = cache
    g = np.asarray(dout, dtype=float)
    if squeeze:
        g = g[None, :]
    layers = bundle.layers
    grads = [None] * len(bundle.params)
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        a_in = acts[i]
        grads[2 * i] = g.T @ a_in
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ W
        if i > 0:
            g = g * (acts[i] > 0)
    return grads, (g[0] if squeeze else g)


def adam_step(bundle: ParamBundle, grads: Sequence[np.ndarray], lr: float) -> ParamBundle:
    """One bias-corrected Adam update; returns a new bundle."""
    if len(grads) != len(bundle.params):
        raise ShapeError("gradient list does not match parameter list")
    for g, p in zip(grads, bundle.params):
        if g.shape != p.shape:
            raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NumericalError(
                f"non-finite gradient (max finite |g| = {np.abs(g[np.isfinite(g)]).max(initial=0.0)}, "
                f"nan count = {int(np.isnan(g).sum())})"
            )
    t = bundle.step + 1
    c1 = 1.0 - ADAM_BETA1**t
    c2 = 1.0 - ADAM_BETA2**t
    params, ms, vs = [], [], []
    for p, g, m, v in zip(bundle.params, grads, bundle.m, bundle.v):
        m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * g
        v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * g * g
        params.append(p - lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS))
        ms.append(m)
        vs.append(v)
    return ParamBundle(params, ms, vs, t)


def flatten(arrays: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.ravel(a) for a in arrays]) if arrays else np.zeros(0)


def unflatten(vector: np.ndarray, like: Sequence[np.ndarray]) -> List[np.ndarray]:
    out, k = [], 0
    for a in like:
        out.append(np.asarray(vector[k:k + a.size], dtype=float).reshape(a.shape))
        k += a.size
    return out


# -- snapshots ---------------------------------------------------------------

def bundle_to_dict(bundle: ParamBundle) -> dict:
    """Flat, language-neutral layout: per layer shape plus row-major values."""
    return {
        "adam_step": bundle.step,
        "layers": [
            {"shape": list(W.shape), "weight": W.ravel(order="C").tolist(), "bias": b.tolist()}
            for W, b in bundle.layers
        ],
    }


def bundle_from_dict(data: dict) -> ParamBundle:
    params = []
    for layer in data["layers"]:
        out_dim, in_dim = layer["shape"]
        W = np.asarray(layer["weight"], dtype=float).reshape(out_dim, in_dim)
        b = np.asarray(layer["bias"], dtype=float)
        if b.shape != (out_dim,):
            raise ShapeError("bias length does not match layer shape")
        params += [W, b]
    bundle = ParamBundle(params)
    bundle.step = int(data.get("adam_step", 0))
    return bundle


def save_bundles(path, bundles: dict, meta: dict | None = None) -> None:
    payload = {"meta": meta or {}, "bundles": {k: bundle_to_dict(b) for k, b in bundles.items() if b is not None}}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_bundles(path):
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    return {k: bundle_from_dict(v) for k, v in payload["bundles"].items()}, payload.get("meta", {})


# -- small numeric helpers used by the loss modules ---------------------------

def sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def log_sigmoid(x):
    x = np.asarray(x, dtype=float)
    return -np.logaddexp(0.0, -x)


def fit_logistic(X, y, steps=500, lr=0.05, seed=0, weights=None):
    """Logistic regression as a single affine layer trained with full-batch Adam.

    Returns ``(bundle, losses)``; ``losses`` is the log-loss trace.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.ones(len(y)) if weights is None else np.asarray(weights, dtype=float)
    bundle = mlp_init([], X.shape[1], 1, seed)
    losses = []
    n = w.sum()
    for _ in range(steps):
        logit, cache = mlp_forward(bundle, X)
        logit = logit[:, 0]
        loss = -np.sum(w * (y * log_sigmoid(logit) + (1 - y) * log_sigmoid(-logit))) / n
        losses.append(loss)
        dlogit = w * (sigmoid(logit) - y) / n
        grads, _ = mlp_backward(bundle, cache, dlogit[:, None])
        bundle = adam_step(bundle, grads, lr)
    return bundle, np.asarray(losses)

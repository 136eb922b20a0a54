"""Conditional VAE for fair representations under selective labels.

Three networks make up a :class:`FairVae`:

* encoder  ``(x, s[, u]) -> (mu, log_var)`` of a diagonal Gaussian over ``z``;
* decoder  ``(z, s) -> `` per-feature likelihood parameters for ``x`` and, in
  the semi-supervised model, one Bernoulli logit for the binary utility ``u``;
* classifier ``(x, s) -> logit`` of ``q(u=1 | x, s, d=1)``.

``u`` is the observed utility of an accepted candidate recoded to {0, 1}.
The unsupervised (pre-training) model has no ``u`` input, no ``u`` head and
no classifier.

Every loss function returns ``(value, grads)`` where ``grads`` maps a bundle
name to a list of arrays shaped like that bundle's parameters.  ELBO terms
return the gradient of the (maximized) value; losses return the gradient of
the (minimized) value.  All values are batch means.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .approximator import (
    ParamBundle,
    adam_step,
    log_sigmoid,
    mlp_backward,
    mlp_forward,
    mlp_init,
    sigmoid,
    xavier_bound,
)
from .dataset import PROPENSITY_CLAMP, FeatureSchema
from .errors import ConfigurationError, ContractError, DomainError, NumericalError, ShapeError

LOG_2PI = float(np.log(2.0 * np.pi))
N_Z_UNLABELED = 50
N_KL_SAMPLES = 100

Grads = Dict[str, List[np.ndarray]]


@dataclass
class FairVae:
    heads: tuple
    latent_dim: int
    encoder: ParamBundle
    decoder: ParamBundle
    classifier: Optional[ParamBundle] = None
    beta: float = 1.0
    alpha: float = 1.0
    cost: float = 0.5
    with_utility: bool = True
    hidden: tuple = field(default=())

    @property
    def x_width(self) -> int:
        return sum(w for _, _, w in self.heads)

    def bundles(self) -> Dict[str, ParamBundle]:
        out = {"encoder": self.encoder, "decoder": self.decoder}
        if self.classifier is not None:
            out["classifier"] = self.classifier
        return out

    def n_params(self) -> int:
        return sum(b.n_params() for b in self.bundles().values())

    def zero_grads(self) -> Grads:
        return {k: b.zeros_like() for k, b in self.bundles().items()}

    def apply_grads(self, grads: Grads, lr: float) -> "FairVae":
        new = {k: adam_step(b, grads[k], lr) for k, b in self.bundles().items()}
        return replace(self, **new)


def _heads_of(schema_or_heads) -> tuple:
    if isinstance(schema_or_heads, FeatureSchema):
        return tuple(schema_or_heads.heads)
    return tuple(tuple(h) for h in schema_or_heads)


def _seed_seq(seed) -> np.random.SeedSequence:
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


def make_vae(schema, hidden: Sequence[int], latent_dim: int, seed, *, with_utility: bool = False,
             clf_hidden: Sequence[int] = (32, 32, 32), beta: float = 1.0, alpha: float = 1.0,
             cost: float = 0.5) -> FairVae:
    """Freshly initialized model.  ``with_utility=False`` gives the pre-training VAE."""
    heads = _heads_of(schema)
    if latent_dim < 1:
        raise ConfigurationError("latent_dim must be >= 1")
    s_enc, s_dec, s_clf = _seed_seq(seed).spawn(3)
    dx = sum(w for _, _, w in heads)
    extra = 1 if with_utility else 0
    enc = mlp_init(hidden, dx + 1 + extra, 2 * latent_dim, np.random.default_rng(s_enc))
    dec = mlp_init(list(reversed(hidden)), latent_dim + 1, dx + extra, np.random.default_rng(s_dec))
    clf = mlp_init(clf_hidden, dx + 1, 1, np.random.default_rng(s_clf)) if with_utility else None
    return FairVae(heads, latent_dim, enc, dec, clf, beta, alpha, cost, with_utility, tuple(hidden))


def transfer_params(phase1: FairVae, seed, *, clf_hidden: Sequence[int] = (32, 32, 32),
                    beta: Optional[float] = None, alpha: float = 1.0, cost: Optional[float] = None) -> FairVae:
    """Initialize the semi-supervised model from a trained pre-training VAE.

    The encoder gains one input column for ``u`` (into every first-layer unit)
    and the decoder one output row for the ``u`` logit.  New connections are
    Glorot-uniform from ``seed``; the classifier is fresh; Adam state is reset.
    """
    if phase1.with_utility:
        raise ConfigurationError("transfer expects a pre-training model without utility pathways")
    dx = phase1.x_width
    if phase1.encoder.in_dim != dx + 1 or phase1.decoder.out_dim != dx:
        raise ConfigurationError("pre-training model does not match its feature layout")
    if phase1.encoder.out_dim != 2 * phase1.latent_dim or phase1.decoder.in_dim != phase1.latent_dim + 1:
        raise ConfigurationError("pre-training model does not match its latent dimension")
    rng_enc, rng_dec, rng_clf = (np.random.default_rng(s) for s in _seed_seq(seed).spawn(3))

    enc = [p.copy() for p in phase1.encoder.params]
    W0 = enc[0]
    b = xavier_bound(W0.shape[1] + 1, W0.shape[0])
    enc[0] = np.hstack([W0, rng_enc.uniform(-b, b, size=(W0.shape[0], 1))])

    dec = [p.copy() for p in phase1.decoder.params]
    WL = dec[-2]
    b = xavier_bound(WL.shape[1], WL.shape[0] + 1)
    dec[-2] = np.vstack([WL, rng_dec.uniform(-b, b, size=(1, WL.shape[1]))])
    dec[-1] = np.concatenate([dec[-1], [0.0]])

    clf = mlp_init(clf_hidden, dx + 1, 1, rng_clf)
    return FairVae(
        phase1.heads, phase1.latent_dim, ParamBundle(enc), ParamBundle(dec), clf,
        phase1.beta if beta is None else beta, alpha, phase1.cost if cost is None else cost,
        True, phase1.hidden,
    )


# -- forward helpers -----------------------------------------------------------

def _col(s):
    return np.asarray(s, dtype=float).reshape(-1, 1)


def _enc_input(model: FairVae, x, s, u=None):
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.x_width:
        raise ShapeError(f"expected x of shape (n, {model.x_width}), got {x.shape}")
    cols = [x, _col(s)]
    if model.with_utility:
        if u is None:
            raise ContractError("the semi-supervised encoder needs a utility input")
        cols.append(_col(u))
    return np.hstack(cols)


def encode(model: FairVae, x, s, u=None):
    out, cache = mlp_forward(model.encoder, _enc_input(model, x, s, u))
    L = model.latent_dim
    return out[:, :L], out[:, L:], cache


def classifier_logit(model: FairVae, x, s):
    if model.classifier is None:
        raise ContractError("model has no classifier")
    out, cache = mlp_forward(model.classifier, np.hstack([np.asarray(x, float), _col(s)]))
    return out[:, 0], cache


def decode(model: FairVae, z, s):
    return mlp_forward(model.decoder, np.hstack([np.asarray(z, float), _col(s)]))


def x_loglik(heads, out, x):
    """Per-row log-likelihood of encoded ``x`` and its gradient w.r.t. ``out``.

    Real and count features use unit-variance Normal means, binary features a
    Bernoulli logit, categorical features a softmax over their logits.
    """
    ll = np.zeros(out.shape[0])
    grad = np.zeros_like(out)
    for kind, start, width in heads:
        sl = slice(start, start + width)
        o, v = out[:, sl], x[:, sl]
        if kind in ("real", "count"):
            r = v - o
            ll += (-0.5 * r * r - 0.5 * LOG_2PI)[:, 0]
            grad[:, sl] = r
        elif kind == "binary":
            ll += (v * log_sigmoid(o) + (1 - v) * log_sigmoid(-o))[:, 0]
            grad[:, sl] = v - sigmoid(o)
        else:
            mx = o.max(axis=1, keepdims=True)
            lse = mx + np.log(np.exp(o - mx).sum(axis=1, keepdims=True))
            ll += (v * (o - lse)).sum(axis=1)
            grad[:, sl] = v - np.exp(o - lse)
    return ll, grad


def bernoulli_loglik(u, logit):
    u = np.asarray(u, dtype=float)
    return u * log_sigmoid(logit) + (1 - u) * log_sigmoid(-logit), u - sigmoid(logit)


def gaussian_kl(mu, log_var):
    """KL(N(mu, diag exp(log_var)) || N(0, I)) per row."""
    return 0.5 * np.sum(mu * mu + np.exp(log_var) - 1.0 - log_var, axis=-1)


def heads_apply(model: FairVae, role: str, *inputs):
    """Distribution parameters produced by one of the three networks.

    encoder: ``(x, s[, u]) -> (mu, sigma)``; classifier: ``(x, s) -> q(u=1)``;
    decoder: ``(z, s) -> dict`` with one entry per feature (mean, probability
    or probability vector) and ``"u"`` for the utility head.
    """
    if role == "encoder":
        mu, lv, _ = encode(model, *inputs)
        return mu, np.exp(0.5 * lv)
    if role == "classifier":
        return sigmoid(classifier_logit(model, *inputs)[0])
    if role == "decoder":
        out, _ = decode(model, *inputs)
        params = []
        for kind, start, width in model.heads:
            o = out[:, start:start + width]
            if kind in ("real", "count"):
                params.append(o[:, 0])
            elif kind == "binary":
                params.append(sigmoid(o[:, 0]))
            else:
                e = np.exp(o - o.max(axis=1, keepdims=True))
                params.append(e / e.sum(axis=1, keepdims=True))
        result = {"x": params}
        if model.with_utility:
            result["u"] = sigmoid(out[:, -1])
        return result
    raise ContractError(f"unknown role {role!r}")


# -- single-sample ELBO core shared by pre-training and labeled terms ----------

def _elbo_terms(model: FairVae, x, s, u, eps, use_u_head: bool):
    """Per-row reparameterized ELBO and a closure pulling row weights back."""
    mu, lv, ecache = encode(model, x, s, u)
    sig = np.exp(0.5 * lv)
    z = mu + sig * eps
    dout_raw, dcache = decode(model, z, s)
    ll, dll = x_loglik(model.heads, dout_raw[:, :model.x_width], x)
    per = ll.copy()
    if use_u_head:
        llu, dllu = bernoulli_loglik(u, dout_raw[:, -1])
        per += llu
    kl = gaussian_kl(mu, lv)
    per -= model.beta * kl
    if not np.all(np.isfinite(per)):
        raise NumericalError("non-finite ELBO term")

    def backward(w):
        """Gradient of sum_i w_i * per_i."""
        wcol = w[:, None]
        d_out = np.zeros_like(dout_raw)
        d_out[:, :model.x_width] = wcol * dll
        if use_u_head:
            d_out[:, -1] = w * dllu
        g_dec, d_in = mlp_backward(model.decoder, dcache, d_out)
        dz = d_in[:, :model.latent_dim]
        dmu = dz - model.beta * wcol * mu
        dlv = dz * eps * 0.5 * sig - model.beta * wcol * 0.5 * (sig * sig - 1.0)
        g_enc, _ = mlp_backward(model.encoder, ecache, np.hstack([dmu, dlv]))
        grads = model.zero_grads()
        grads["encoder"] = g_enc
        grads["decoder"] = g_dec
        return grads

    return per, backward


def _neg(grads: Grads) -> Grads:
    return {k: [-g for g in v] for k, v in grads.items()}


def _add(a: Grads, b: Grads, scale: float = 1.0) -> Grads:
    return {k: [x + scale * y for x, y in zip(a[k], b[k])] for k in a}


def phase1_loss(model: FairVae, x, s, rng: np.random.Generator):
    """Negative beta-ELBO of the pre-training VAE, one reparameterized sample."""
    if model.with_utility:
        raise ContractError("phase1_loss expects the pre-training model")
    n = len(x)
    eps = rng.standard_normal((n, model.latent_dim))
    per, backward = _elbo_terms(model, x, s, None, eps, use_u_head=False)
    return -per.mean(), _neg(backward(np.full(n, 1.0 / n)))


def labeled_elbo(model: FairVae, x, s, u, rng: np.random.Generator, weights=None):
    """Mean (optionally weighted) ELBO of accepted candidates.

    ``u`` is the binary utility; ``weights`` (e.g. inverse propensities) scale
    each row's ELBO before averaging.
    """
    if not model.with_utility:
        raise ContractError("labeled_elbo expects the semi-supervised model")
    u = np.asarray(u, dtype=float)
    if np.any(np.isnan(u)) or not np.all(np.isin(u, (0.0, 1.0))):
        raise ContractError("labeled_elbo needs a revealed binary utility for every row")
    n = len(x)
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    eps = rng.standard_normal((n, model.latent_dim))
    per, backward = _elbo_terms(model, x, s, u, eps, use_u_head=True)
    return float(np.mean(w * per)), backward(w / n)


# -- mixture KL ------------------------------------------------------------------

def _mixture_kl(mu, lv, q1, eta):
    """MC estimate of KL(q0 N0 + q1 N1 || N(0, I)) per row, with gradients.

    ``mu``/``lv`` have shape (2, n, L) indexed by component; ``q1`` (n,);
    ``eta`` standard-normal draws of shape (2, n, K, L).  Samples for
    component u are reparameterized as ``mu_u + sigma_u * eta_u``.
    Returns ``(kl, dkl_dmu, dkl_dlv, dkl_dq1, f)`` with ``f`` the per-sample
    log-ratio of shape (2, n, K).
    """
    K = eta.shape[2]
    sig = np.exp(0.5 * lv)
    z = mu[:, :, None, :] + sig[:, :, None, :] * eta
    diff = z[:, None] - mu[None, :, :, None, :]          # (u, v, n, K, L)
    inv_var = np.exp(-lv)[None, :, :, None, :]
    logN = -0.5 * np.sum(diff * diff * inv_var + lv[None, :, :, None, :] + LOG_2PI, axis=-1)
    q = np.stack([1.0 - q1, q1])                          # (v, n)
    with np.errstate(divide="ignore"):
        logq = np.log(q)
    a = logq[None, :, :, None] + logN                     # (u, v, n, K)
    logm = np.logaddexp(a[:, 0], a[:, 1])                 # (u, n, K)
    logp = -0.5 * np.sum(z * z + LOG_2PI, axis=-1)
    f = logm - logp
    fbar = f.mean(axis=-1)                                # (u, n)
    kl = np.sum(q * fbar, axis=0)

    r = np.exp(a - logm[:, None])                         # responsibilities (u, v, n, K)
    scaled = diff * inv_var
    dfdz = -np.sum(r[..., None] * scaled, axis=1) + z     # (u, n, K, L)
    w = (q / K)[:, :, None, None]
    dmu = np.sum(w * dfdz, axis=2)
    dlv = np.sum(w * dfdz * 0.5 * sig[:, :, None, :] * eta, axis=2)
    wv = w[:, None]
    dmu = dmu + np.sum(wv * r[..., None] * scaled, axis=(0, 3))
    dlv = dlv + np.sum(wv * r[..., None] * (0.5 * diff * scaled - 0.5), axis=(0, 3))
    ratio = np.exp(logN - logm[:, None])                  # N_v / m
    dq1 = fbar[1] - fbar[0] + np.sum(q[:, :, None] * (ratio[:, 1] - ratio[:, 0]), axis=0).mean(axis=-1)
    return kl, dmu, dlv, dq1, f


def mc_kl_mixture(comp0, comp1, weights, n_samples: int = N_KL_SAMPLES, seed=0, return_stderr: bool = False):
    """Monte-Carlo KL between a two-component Gaussian mixture and N(0, I).

    ``comp0``/``comp1`` are ``(mu, sigma)`` pairs (scalars or vectors),
    ``weights`` is ``(q0, q1)``.  Each component contributes ``n_samples``
    draws weighted by its mixture weight; the mixture density is evaluated
    with log-sum-exp.
    """
    (mu0, s0), (mu1, s1) = comp0, comp1
    q0, q1 = (float(w) for w in weights)
    if min(q0, q1) < 0 or abs(q0 + q1 - 1.0) > 1e-9:
        raise DomainError("mixture weights must be non-negative and sum to 1")
    mu = np.stack([np.atleast_1d(np.asarray(mu0, float)), np.atleast_1d(np.asarray(mu1, float))])
    sig = np.stack([np.atleast_1d(np.asarray(s0, float)), np.atleast_1d(np.asarray(s1, float))])
    if np.any(sig <= 0):
        raise DomainError("component standard deviations must be positive")
    L = mu.shape[1]
    eta = np.random.default_rng(seed).standard_normal((2, 1, n_samples, L))
    kl, _, _, _, f = _mixture_kl(mu[:, None, :], 2 * np.log(sig)[:, None, :], np.array([q1]), eta)
    value = float(kl[0])
    if not return_stderr:
        return value
    var = sum(w * w * f[u, 0].var(ddof=1) / n_samples for u, w in enumerate((q0, q1)) if w > 0)
    return value, float(np.sqrt(var))


# -- unlabeled ELBO ----------------------------------------------------------------

def unlabeled_elbo(model: FairVae, x, s, rng: np.random.Generator, n_z: int = N_Z_UNLABELED,
                   n_kl: int = N_KL_SAMPLES):
    """Mean ELBO of rejected candidates, marginalizing the binary utility.

    The utility likelihood of a rejected candidate is identically one, so only
    the feature reconstruction enters; the KL term is the mixture KL of the
    two utility-conditional posteriors weighted by the classifier.
    """
    if not model.with_utility:
        raise ContractError("unlabeled_elbo expects the semi-supervised model")
    x = np.asarray(x, dtype=float)
    n, L = len(x), model.latent_dim
    logit, ccache = classifier_logit(model, x, s)
    q1 = sigmoid(logit)
    q = np.stack([1.0 - q1, q1])

    xx = np.vstack([x, x])
    ss = np.concatenate([np.asarray(s, float)] * 2)
    uu = np.concatenate([np.zeros(n), np.ones(n)])
    mu_f, lv_f, ecache = encode(model, xx, ss, uu)
    mu, lv = mu_f.reshape(2, n, L), lv_f.reshape(2, n, L)
    sig = np.exp(0.5 * lv)

    eps = rng.standard_normal((2, n, n_z, L))
    z = (mu[:, :, None, :] + sig[:, :, None, :] * eps).reshape(-1, L)
    s_rep = np.broadcast_to(np.asarray(s, float)[None, :, None], (2, n, n_z)).reshape(-1)
    x_rep = np.broadcast_to(x[None, :, None, :], (2, n, n_z, x.shape[1])).reshape(-1, x.shape[1])
    dout_raw, dcache = decode(model, z, s_rep)
    ll, dll = x_loglik(model.heads, dout_raw[:, :model.x_width], x_rep)
    rec = ll.reshape(2, n, n_z).mean(axis=-1)

    eta = rng.standard_normal((2, n, n_kl, L))
    kl, dkl_mu, dkl_lv, dkl_q1, _ = _mixture_kl(mu, lv, q1, eta)
    per = np.sum(q * rec, axis=0) - model.beta * kl
    if not np.all(np.isfinite(per)):
        raise NumericalError("non-finite unlabeled ELBO")

    g = 1.0 / n
    row_w = (g * q / n_z)[:, :, None] * np.ones((1, 1, n_z))
    d_out = np.zeros_like(dout_raw)
    d_out[:, :model.x_width] = row_w.reshape(-1, 1) * dll
    g_dec, d_in = mlp_backward(model.decoder, dcache, d_out)
    dz = d_in[:, :L].reshape(2, n, n_z, L)
    dmu = dz.sum(axis=2) - model.beta * g * dkl_mu
    dlv = (dz * eps).sum(axis=2) * 0.5 * sig - model.beta * g * dkl_lv
    g_enc, _ = mlp_backward(model.encoder, ecache, np.hstack([dmu.reshape(-1, L), dlv.reshape(-1, L)]))
    dq1 = g * (rec[1] - rec[0] - model.beta * dkl_q1)
    g_clf, _ = mlp_backward(model.classifier, ccache, (dq1 * q1 * (1.0 - q1))[:, None])
    return float(per.mean()), {"encoder": g_enc, "decoder": g_dec, "classifier": g_clf}


# -- classification loss -------------------------------------------------------------

def clamp_propensity(p):
    return np.clip(np.asarray(p, dtype=float), PROPENSITY_CLAMP, 1.0 - PROPENSITY_CLAMP)


def cost_sensitive_ce(logit, u, c, weights=None):
    """Mean of ``-w [c (1-u) log(1-q) + (1-c) u log q]`` and its logit gradient."""
    u = np.asarray(u, dtype=float)
    n = len(u)
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    per = -(c * (1 - u) * log_sigmoid(-logit) + (1 - c) * u * log_sigmoid(logit))
    q = sigmoid(logit)
    dlogit = (c * (1 - u) * q - (1 - c) * u * (1 - q)) * w / n
    return float(np.mean(w * per)), dlogit


def ips_classification_loss(model: FairVae, x, s, u, propensity, c: Optional[float] = None):
    """Inverse-propensity weighted cost-sensitive cross-entropy of the classifier."""
    u = np.asarray(u, dtype=float)
    if np.any(np.isnan(u)):
        raise ContractError("classification loss needs revealed labels")
    c = model.cost if c is None else c
    logit, cache = classifier_logit(model, x, s)
    value, dlogit = cost_sensitive_ce(logit, u, c, 1.0 / clamp_propensity(propensity))
    if not np.isfinite(value):
        raise NumericalError("non-finite classification loss")
    grads = model.zero_grads()
    grads["classifier"], _ = mlp_backward(model.classifier, cache, dlogit[:, None])
    return value, grads


# -- full objectives -----------------------------------------------------------------

def phase2_objective(model: FairVae, labeled, unlabeled, rng: np.random.Generator,
                     n_z: int = N_Z_UNLABELED, n_kl: int = N_KL_SAMPLES):
    """``alpha * mean R - mean L - mean U`` with its gradient.

    ``labeled`` is ``(x, s, u, propensity)``, ``unlabeled`` is ``(x, s)``;
    either may be ``None`` or empty.
    """
    n_l = 0 if labeled is None else len(labeled[0])
    n_u = 0 if unlabeled is None else len(unlabeled[0])
    if n_l == 0 and n_u == 0:
        raise ContractError("phase2_objective needs at least one record")
    value, grads = 0.0, model.zero_grads()
    if n_l:
        x, s, u, prop = labeled
        r, gr = ips_classification_loss(model, x, s, u, prop)
        lval, gl = labeled_elbo(model, x, s, u, rng)
        value += model.alpha * r - lval
        grads = _add(_add(grads, gr, model.alpha), gl, -1.0)
    if n_u:
        x, s = unlabeled
        uval, gu = unlabeled_elbo(model, x, s, rng, n_z=n_z, n_kl=n_kl)
        value -= uval
        grads = _add(grads, gu, -1.0)
    return value, grads


def labeled_only_objective(model: FairVae, labeled, rng: np.random.Generator):
    """Inverse-propensity weighted labeled ELBO plus the weighted classifier loss."""
    x, s, u, prop = labeled
    if len(x) == 0:
        raise ContractError("labeled-only objective needs labeled records")
    r, gr = ips_classification_loss(model, x, s, u, prop)
    lval, gl = labeled_elbo(model, x, s, u, rng, weights=1.0 / clamp_propensity(prop))
    return model.alpha * r - lval, _add(_add(model.zero_grads(), gr, model.alpha), gl, -1.0)


# -- sampling ---------------------------------------------------------------------

def sample_utility(model: FairVae, x, s, rng: np.random.Generator, n_samples: int = 1):
    """Binary utilities drawn from the classifier, shape (n_samples, n)."""
    q = sigmoid(classifier_logit(model, x, s)[0])
    return (rng.random((n_samples, len(q))) < q).astype(float)


def sample_latent(model: FairVae, x, s, rng: np.random.Generator, n_samples: int = 1, u=None):
    """Latent codes of shape (n_samples, n, L).

    Where ``u`` is NaN or not given, the utility fed to the encoder is first
    sampled from the classifier.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    if model.with_utility:
        uu = sample_utility(model, x, s, rng, n_samples)
        if u is not None:
            u = np.asarray(u, dtype=float)
            known = ~np.isnan(u)
            uu[:, known] = u[known]
        xx = np.tile(x, (n_samples, 1))
        ss = np.tile(np.asarray(s, float), n_samples)
        mu, lv, _ = encode(model, xx, ss, uu.reshape(-1))
    else:
        mu, lv, _ = encode(model, x, s)
        mu, lv = np.tile(mu, (n_samples, 1)), np.tile(lv, (n_samples, 1))
    z = mu + np.exp(0.5 * lv) * rng.standard_normal(mu.shape)
    return z.reshape(n_samples, n, model.latent_dim)


def decoder_utility_prob(model: FairVae, z, s):
    out, _ = decode(model, z, s)
    return sigmoid(out[:, -1])


def vae_to_dict(model: FairVae) -> dict:
    from .approximator import bundle_to_dict

    return {
        "heads": [list(h) for h in model.heads],
        "latent_dim": model.latent_dim,
        "beta": model.beta,
        "alpha": model.alpha,
        "cost": model.cost,
        "with_utility": model.with_utility,
        "hidden": list(model.hidden),
        "bundles": {k: bundle_to_dict(b) for k, b in model.bundles().items()},
    }


def vae_from_dict(data: dict) -> FairVae:
    from .approximator import bundle_from_dict

    b = {k: bundle_from_dict(v) for k, v in data["bundles"].items()}
    return FairVae(
        tuple(tuple(h) for h in data["heads"]), int(data["latent_dim"]), b["encoder"], b["decoder"],
        b.get("classifier"), float(data["beta"]), float(data["alpha"]), float(data["cost"]),
        bool(data["with_utility"]), tuple(data.get("hidden", ())),
    )

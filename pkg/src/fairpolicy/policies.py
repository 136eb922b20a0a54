"""Decision policies: biased initial policies, latent-space policies and baselines.

Every policy maps candidates to an acceptance probability clamped to
``[1e-4, 1 - 1e-4]``.  The probability a policy returns at decision time is
exactly the propensity stored on the decided records.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .approximator import (
    ParamBundle,
    adam_step,
    bundle_from_dict,
    bundle_to_dict,
    mlp_backward,
    mlp_forward,
    mlp_init,
    sigmoid,
)
from .dataset import PROPENSITY_CLAMP, CandidateBatch, RecordSet
from .errors import ConfigurationError, ContractError
from .fairvae import (
    FairVae,
    clamp_propensity,
    cost_sensitive_ce,
    decoder_utility_prob,
    labeled_only_objective,
    sample_latent,
)

log = logging.getLogger(__name__)

LATENT_EVAL_SAMPLES = 10

# (p(d=1 | S=+1), p(d=1 | S=-1)) of the biased initial labeling policies.
INITIAL_RATES = {
    "synthetic": {"HARSH": (0.1581, 0.0979), "LENI": (0.7642, 0.3297)},
    "compas": {"HARSH": (0.1519, 0.0705), "LENI": (0.7664, 0.3274)},
    "credit": {"HARSH": (0.2123, 0.1091), "LENI": (0.5846, 0.2909)},
    "meps": {"HARSH": (0.1925, 0.0617), "LENI": (0.7826, 0.2724)},
}


def _clamp(p):
    return np.clip(p, PROPENSITY_CLAMP, 1.0 - PROPENSITY_CLAMP)


def _as_records(data):
    if isinstance(data, RecordSet):
        return data
    if hasattr(data, "to_records"):
        return data.to_records()
    raise ContractError(f"cannot read candidates from {type(data).__name__}")


@dataclass
class Policy:
    """Base class; subclasses implement :meth:`_raw_probs`."""

    kind: str

    def probs(self, data, model: Optional[FairVae] = None, rng=None) -> np.ndarray:
        return _clamp(self._raw_probs(data, model, rng))

    def _raw_probs(self, data, model, rng):
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"kind": self.kind}


@dataclass
class GroupRatePolicy(Policy):
    """Bernoulli acceptance at a fixed rate per sensitive group."""

    rate_pos: float = 0.5
    rate_neg: float = 0.5

    def _raw_probs(self, data, model, rng):
        s = np.asarray(_as_records(data).s)
        return np.where(s == 1, self.rate_pos, self.rate_neg)

    def to_dict(self):
        return {"kind": self.kind, "rate_pos": self.rate_pos, "rate_neg": self.rate_neg}


@dataclass
class FeaturePolicy(Policy):
    """Logistic MLP on ``(x, s)`` used by the UnfairLog and FairLog baselines."""

    bundle: ParamBundle = None
    lam: float = 0.0

    def logits(self, records: RecordSet):
        return mlp_forward(self.bundle, np.hstack([records.x, records.s[:, None]]))

    def _raw_probs(self, data, model, rng):
        return sigmoid(self.logits(_as_records(data))[0][:, 0])

    def to_dict(self):
        return {"kind": self.kind, "lam": self.lam, "bundle": bundle_to_dict(self.bundle)}


@dataclass
class LatentPolicy(Policy):
    """MLP on the latent code only; its input width equals the latent dimension.

    ``model`` is the representation the policy reads; it may be overridden per
    call.  Probabilities are averaged over ``n_samples`` latent draws.
    """

    bundle: ParamBundle = None
    model: Optional[FairVae] = None
    n_samples: int = LATENT_EVAL_SAMPLES

    def __post_init__(self):
        if self.model is not None and self.bundle.in_dim != self.model.latent_dim:
            raise ConfigurationError("latent policy width does not match the model's latent dimension")

    def probs_of_latent(self, z):
        return sigmoid(mlp_forward(self.bundle, z)[0][..., 0])

    def _raw_probs(self, data, model, rng):
        model = model if model is not None else self.model
        if model is None:
            raise ContractError("a latent policy needs a representation model")
        if self.bundle.in_dim != model.latent_dim:
            raise ConfigurationError("latent policy width does not match the model's latent dimension")
        rng = np.random.default_rng(0) if rng is None else rng
        rec = _as_records(data)
        z = sample_latent(model, rec.x, rec.s, rng, self.n_samples)
        return self.probs_of_latent(z.reshape(-1, model.latent_dim)).reshape(self.n_samples, -1).mean(axis=0)

    def to_dict(self):
        return {"kind": self.kind, "n_samples": self.n_samples, "bundle": bundle_to_dict(self.bundle)}


@dataclass
class OptimalPolicy(Policy):
    """Reference policy of the synthetic SCM, fitted on standardized features.

    ``features`` is ``"unfair"`` (LSAT, GPA, S) or ``"fair"`` (hidden K); it
    only reads :class:`~fairpolicy.scm.ScmDraws`.  With ``hard`` the fitted
    probability is thresholded at 0.5.
    """

    bundle: ParamBundle = None
    features: str = "fair"
    mean: np.ndarray = field(default_factory=lambda: np.zeros(1))
    std: np.ndarray = field(default_factory=lambda: np.ones(1))
    hard: bool = True

    def _raw_probs(self, data, model, rng):
        from .scm import FEATURES, ScmDraws

        if not isinstance(data, ScmDraws):
            raise ContractError("optimal reference policies read SCM draws (they need the hidden factor)")
        X = (FEATURES[self.features](data) - self.mean) / self.std
        p = sigmoid(mlp_forward(self.bundle, X)[0][:, 0])
        return (p > 0.5).astype(float) if self.hard else p

    def to_dict(self):
        return {"kind": self.kind, "features": self.features, "mean": list(self.mean),
                "std": list(self.std), "hard": self.hard, "bundle": bundle_to_dict(self.bundle)}


def policy_from_dict(data: dict) -> Policy:
    kind = data["kind"]
    if "rate_pos" in data:
        return GroupRatePolicy(kind, data["rate_pos"], data["rate_neg"])
    bundle = bundle_from_dict(data["bundle"])
    if "features" in data:
        return OptimalPolicy(kind, bundle, data["features"], np.array(data["mean"]), np.array(data["std"]), data["hard"])
    if "lam" in data:
        return FeaturePolicy(kind, bundle, data["lam"])
    return LatentPolicy(kind, bundle, n_samples=data["n_samples"])


# -- construction ------------------------------------------------------------------

def make_initial_policy(kind: str, dataset: str) -> GroupRatePolicy:
    """Group-conditional Bernoulli policy with tabulated HARSH/LENI rates."""
    rates = INITIAL_RATES.get(str(dataset).lower())
    if rates is None:
        raise ConfigurationError(f"unknown dataset {dataset!r}; expected one of {sorted(INITIAL_RATES)}")
    if kind.upper() not in rates:
        raise ConfigurationError(f"unknown initial policy {kind!r}; expected HARSH or LENI")
    pos, neg = rates[kind.upper()]
    return GroupRatePolicy("initial", pos, neg)


def make_feature_policy(kind: str, in_dim: int, arch, seed, lam: float = 0.0) -> FeaturePolicy:
    if kind not in ("unfairlog", "fairlog"):
        raise ConfigurationError(f"feature policies are unfairlog or fairlog, got {kind!r}")
    return FeaturePolicy(kind, mlp_init(arch, in_dim + 1, 1, seed), lam)


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def decide_batch(policy: Policy, batch: CandidateBatch, model: Optional[FairVae] = None, seed=0) -> CandidateBatch:
    """Sample decisions, record the propensities used and reveal accepted labels."""
    if isinstance(policy, LatentPolicy) and model is None and policy.model is None:
        raise ContractError("a latent policy needs a representation model to decide")
    rng = _rng(seed)
    p = policy.probs(batch.records, model, rng)
    d = (rng.random(len(p)) < p).astype(float)
    return replace(batch, records=batch.records.with_decisions(d, p))


# -- training ---------------------------------------------------------------------

def _minibatches(n: int, n_batches: int, rng):
    perm = rng.permutation(n)
    size = max(1, int(np.ceil(n / n_batches)))
    return [perm[i:i + size] for i in range(0, n, size)]


def train_policy_from_latent(model: FairVae, records: RecordSet, variant: str = "dec", steps: int = 1,
                             lr: float = 1e-2, seed=0, policy: Optional[LatentPolicy] = None,
                             c: Optional[float] = None, n_batches: int = 3, kind: str = "latent") -> LatentPolicy:
    """Fit a latent policy ``z -> P(accept)`` to utility targets.

    Each record gets one latent draw (the utility input is observed where the
    record is labeled and sampled from the classifier elsewhere).  Targets are
    sampled from the decoder utility head (``dec``), from the classifier
    (``clf``), or are the observed utilities of labeled records weighted by
    inverse propensity (``label``).  ``steps`` counts epochs of ``n_batches``
    mini-batches.  Passing ``policy`` warm-starts from its parameters.
    """
    if variant not in ("dec", "clf", "label"):
        raise ConfigurationError(f"unknown latent-policy variant {variant!r}")
    c = model.cost if c is None else c
    rng = _rng(seed)
    if variant == "label":
        mask = records.labeled
        if not mask.any():
            raise ContractError("the label variant needs at least one labeled record")
        records = records.subset(np.flatnonzero(mask))
    u_obs = np.where(records.labeled, records.y_tilde, np.nan)
    z = sample_latent(model, records.x, records.s, rng, 1, u=u_obs)[0]
    if variant == "dec":
        target = (rng.random(len(z)) < decoder_utility_prob(model, z, records.s)).astype(float)
        weights = None
    elif variant == "clf":
        from .fairvae import classifier_logit

        target = (rng.random(len(z)) < sigmoid(classifier_logit(model, records.x, records.s)[0])).astype(float)
        weights = None
    else:
        target = records.y_tilde
        weights = 1.0 / clamp_propensity(records.propensity)

    if policy is None:
        arch = model.classifier.hidden if model.classifier is not None else list(model.hidden)
        policy = LatentPolicy(kind, mlp_init(arch, model.latent_dim, 1, rng))
    bundle = policy.bundle
    for _ in range(steps):
        for idx in _minibatches(len(z), n_batches, rng):
            logit, cache = mlp_forward(bundle, z[idx])
            w = None if weights is None else weights[idx]
            _, dlogit = cost_sensitive_ce(logit[:, 0], target[idx], c, w)
            grads, _ = mlp_backward(bundle, cache, dlogit[:, None])
            bundle = adam_step(bundle, grads, lr)
    return replace(policy, bundle=bundle, model=model)


def _feature_policy_grads(policy: FeaturePolicy, labeled: RecordSet, full: Optional[RecordSet], c: float):
    grads = policy.bundle.zeros_like()
    value = 0.0
    if len(labeled):
        logit, cache = policy.logits(labeled)
        value, dlogit = cost_sensitive_ce(logit[:, 0], labeled.y_tilde, c,
                                          1.0 / clamp_propensity(labeled.propensity))
        grads, _ = mlp_backward(policy.bundle, cache, dlogit[:, None])
    if policy.kind == "fairlog" and policy.lam != 0.0 and full is not None and len(full):
        pos, neg = full.s == 1, full.s == -1
        if not pos.any() or not neg.any():
            log.warning("fairness penalty skipped: batch contains a single sensitive group")
        else:
            logit, cache = policy.logits(full)
            p = sigmoid(logit[:, 0])
            gap = p[pos].mean() - p[neg].mean()
            value += policy.lam * abs(gap)
            coef = np.where(pos, 1.0 / pos.sum(), -1.0 / neg.sum()) * policy.lam * np.sign(gap)
            g2, _ = mlp_backward(policy.bundle, cache, (coef * p * (1 - p))[:, None])
            grads = [a + b for a, b in zip(grads, g2)]
    return value, grads


def baseline_update(policy: Policy, labeled: RecordSet, c: float, lr: float, full: Optional[RecordSet] = None,
                    rng=None) -> Policy:
    """One Adam step of a baseline.

    ``unfairlog`` minimizes the inverse-propensity weighted cost-sensitive
    cross-entropy of its labeled records; ``fairlog`` adds ``lam`` times the
    absolute acceptance gap between groups on ``full``; ``fairlab`` steps its
    representation model on the weighted labeled-only objective (its latent
    policy is refit separately with the ``label`` variant).
    """
    if policy.kind in ("unfairlog", "fairlog"):
        _, grads = _feature_policy_grads(policy, labeled, full, c)
        return replace(policy, bundle=adam_step(policy.bundle, grads, lr))
    if policy.kind == "fairlab":
        if not isinstance(policy, LatentPolicy) or policy.model is None:
            raise ContractError("fairlab needs a latent policy carrying its representation model")
        if not len(labeled):
            return policy
        model = policy.model
        u = labeled.y_tilde
        _, grads = labeled_only_objective(model, (labeled.x, labeled.s, u, labeled.propensity), _rng(rng))
        return replace(policy, model=model.apply_grads(grads, lr))
    raise ConfigurationError(f"baseline_update does not handle policy kind {policy.kind!r}")


def feature_policy_loss(policy: FeaturePolicy, labeled: RecordSet, c: float, full: Optional[RecordSet] = None):
    """Objective minimized by :func:`baseline_update` and its gradient."""
    return _feature_policy_grads(policy, labeled, full, c)

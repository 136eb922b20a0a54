"""Utility and fairness metrics of decision policies.

Policy-level metrics (utility, DPU, CFU) are expectations of the acceptance
probability over a fixed test population.  Temporal statistics summarize a
metric over a window of training steps; effective statistics measure what the
decisions taken during training actually realized.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .approximator import fit_logistic, mlp_apply, sigmoid
from .dataset import CandidateBatch, RecordSet
from .errors import ContractError, RangeError

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("ut_proxy", "ut_gt", "dpu", "cfu", "eff_ut", "eff_dpu")


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def _probs(policy, data, model, seed):
    """Acceptance probabilities; a fixed seed keeps latent sampling reproducible."""
    if isinstance(policy, np.ndarray):
        return policy
    return policy.probs(data, model, _rng(seed))


# -- population metrics from probabilities -------------------------------------------

def utility(p, label, c: float) -> float:
    """Mean of ``p * (label - c)``."""
    return float(np.mean(np.asarray(p) * (np.asarray(label, dtype=float) - c)))


def dpu(p, s) -> float:
    """Absolute gap in mean acceptance probability between the two groups."""
    p, s = np.asarray(p), np.asarray(s)
    pos, neg = s == 1, s == -1
    if not pos.any() or not neg.any():
        raise ContractError("DPU needs both sensitive groups")
    return float(abs(p[pos].mean() - p[neg].mean()))


def cfu(p_factual, p_counterfactual) -> float:
    """Mean absolute change in acceptance probability under the counterfactual flip."""
    a, b = np.asarray(p_factual), np.asarray(p_counterfactual)
    if a.shape != b.shape:
        raise ContractError("factual and counterfactual populations must pair up")
    return float(np.mean(np.abs(a - b)))


# -- policy wrappers -------------------------------------------------------------------

def _labels(data, which: str):
    if which == "proxy":
        return data.label
    if which in ("ground_truth", "gt"):
        m = getattr(data, "m", None)
        if m is None:
            raise ContractError("ground-truth utility needs the hidden label (synthetic data only)")
        return m
    raise ContractError(f"unknown label {which!r}; use proxy or ground_truth")


def utility_of_policy(policy, data, label: str = "proxy", c: float = 0.5, model=None, seed=0) -> float:
    """Expected utility ``E[pi(D=1 | .) (label - c)]`` over ``data``."""
    y = _labels(data, label)
    return utility(_probs(policy, data, model, seed), y, c)


def dpu_of_policy(policy, data, model=None, seed=0) -> float:
    return dpu(_probs(policy, data, model, seed), data.s)


def cfu_of_policy(policy, factual, counterfactual, model=None, seed=0) -> float:
    """CFU over paired populations; both sides use the same sampling seed."""
    if len(factual) != len(counterfactual):
        raise ContractError("factual and counterfactual populations must have equal length")
    return cfu(_probs(policy, factual, model, seed), _probs(policy, counterfactual, model, seed))


# -- temporal and effective statistics ---------------------------------------------------

def temporal_stats(series: Sequence[float], t1: int, t2: int):
    """``(TV, mean)`` of ``series`` over steps ``t1..t2`` inclusive.

    ``series[0]`` is step 1.  TV is the population standard deviation over the
    window (divisor = number of terms).
    """
    values = np.asarray(series, dtype=float)
    if not (1 <= t1 < t2 <= len(values)):
        raise RangeError(f"window [{t1}, {t2}] outside steps 1..{len(values)}")
    w = values[t1 - 1:t2]
    mu = float(w.mean())
    return float(np.sqrt(np.mean((w - mu) ** 2))), mu


def _records(b):
    return b.records if isinstance(b, CandidateBatch) else b


def step_gap(records: RecordSet) -> float:
    """Absolute acceptance-rate gap between groups in one decided batch (0 if a group is absent)."""
    pos, neg = records.s == 1, records.s == -1
    if not pos.any() or not neg.any():
        log.warning("step with a single sensitive group contributes a zero acceptance gap")
        return 0.0
    d = records.d
    return float(abs(d[pos].mean() - d[neg].mean()))


def effective_stats(history: Sequence, t: int, c: float):
    """``(effective proxy utility, effective DPU)`` after steps ``1..t``.

    ``history[k]`` holds the decided batch of step ``k + 1``.  Utility sums
    ``y~ - c`` over accepted candidates and divides by all candidates seen.
    """
    if not 1 <= t <= len(history):
        raise RangeError(f"t={t} outside the recorded history of {len(history)} steps")
    total, seen, gaps = 0.0, 0, 0.0
    for b in history[:t]:
        r = _records(b)
        if np.any(np.isnan(r.d)):
            raise ContractError("effective statistics need decided batches")
        acc = r.d == 1
        total += float(np.sum(r.y_tilde[acc] - c))
        seen += len(r)
        gaps += step_gap(r)
    return total / seen, gaps / t


class EffectiveTracker:
    """Running version of :func:`effective_stats` for long simulations."""

    def __init__(self, c: float):
        self.c = c
        self.total = 0.0
        self.seen = 0
        self.gaps = 0.0
        self.t = 0

    def update(self, batch) -> tuple:
        r = _records(batch)
        acc = r.d == 1
        self.total += float(np.sum(r.y_tilde[acc] - self.c))
        self.seen += len(r)
        self.gaps += step_gap(r)
        self.t += 1
        return self.value()

    def value(self):
        if self.t == 0:
            return 0.0, 0.0
        return self.total / self.seen, self.gaps / self.t


# -- latent independence probe ---------------------------------------------------------------

def latent_sensitive_probe(model, records: RecordSet, seed=0, steps: int = 300) -> float:
    """Balanced accuracy of a logistic probe predicting ``s`` from latent codes.

    ``model`` is a :class:`~fairpolicy.fairvae.FairVae` (one latent draw per
    record) or an array of latent codes.  The probe trains on a random half and
    is scored on the other; 0.5 means the latent carries no linear trace of ``s``.
    """
    rng = _rng(seed)
    s = np.asarray(records.s)
    if not (np.any(s == 1) and np.any(s == -1)):
        raise ContractError("the probe needs both sensitive groups")
    if isinstance(model, np.ndarray):
        z = model.reshape(len(s), -1)
    else:
        from .fairvae import sample_latent

        u = np.where(records.labeled, records.y_tilde, np.nan)
        z = sample_latent(model, records.x, s, rng, 1, u=u)[0]
    perm = rng.permutation(len(s))
    tr, te = perm[: len(s) // 2], perm[len(s) // 2:]
    mean, std = z[tr].mean(axis=0), z[tr].std(axis=0)
    std = np.where(std > 0, std, 1.0)
    y = (s == 1).astype(float)
    bundle, _ = fit_logistic((z[tr] - mean) / std, y[tr], steps=steps, seed=rng)
    pred = sigmoid(mlp_apply(bundle, (z[te] - mean) / std)[:, 0]) > 0.5
    yt = y[te] == 1
    recalls = [np.mean(pred[yt]) if yt.any() else 0.5, np.mean(~pred[~yt]) if (~yt).any() else 0.5]
    return float(np.mean(recalls))


# -- per-step series ------------------------------------------------------------------------

@dataclass
class MetricSeries:
    """Per-step metric values of one (method, seed) run; steps start at 1."""

    method: str
    seed: int
    t: List[int] = field(default_factory=list)
    values: Dict[str, List[float]] = field(default_factory=lambda: {k: [] for k in METRIC_COLUMNS})

    def append(self, t: int, **row):
        if self.t and t <= self.t[-1]:
            raise ContractError("metric steps must increase")
        self.t.append(t)
        for k in METRIC_COLUMNS:
            self.values[k].append(float(row.get(k, np.nan)))

    def __len__(self):
        return len(self.t)

    def column(self, name: str) -> np.ndarray:
        return np.asarray(self.values[name])

    def rows(self):
        for i, t in enumerate(self.t):
            yield [self.method, self.seed, t] + [self.values[k][i] for k in METRIC_COLUMNS]


def format_mean_std(values: Sequence[float]) -> str:
    """``"m.m (s.s)"`` of values scaled by 100; std over seeds with divisor n."""
    v = np.asarray(values, dtype=float) * 100.0
    return f"{v.mean():.1f} ({v.std():.1f})"

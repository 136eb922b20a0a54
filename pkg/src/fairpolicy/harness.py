"""Experiment orchestration: configuration, per-seed runs and summaries.

A run streams candidates from a pool, lets the current policy decide on each
batch, updates the method's models on what was revealed and evaluates the
policy on a fixed test population after every step.

Random streams are isolated per seed: the data, the candidate stream, Phase-I
training, initialization, decisions, model training and evaluation each get
their own child of ``SeedSequence(seed)``.  Data streams do not depend on the
method, so all methods see the same candidates for a given seed.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import traceback
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import yaml

from . import scm
from .approximator import mlp_init
from .dataset import (
    CandidateBatch,
    FeatureSchema,
    RecordSet,
    StreamSampler,
    load_dataset,
    load_schema,
    split_indices,
    standardize_fit_apply,
)
from .errors import ConfigurationError, FairPolicyError, ParseError, RangeError
from .fairvae import FairVae, make_vae, phase1_loss, phase2_objective, transfer_params, vae_to_dict
from .metrics import METRIC_COLUMNS, EffectiveTracker, MetricSeries, cfu, dpu, format_mean_std, temporal_stats, utility
from .policies import (
    LatentPolicy,
    Policy,
    baseline_update,
    decide_batch,
    make_feature_policy,
    make_initial_policy,
    train_policy_from_latent,
)

log = logging.getLogger(__name__)

METHODS = ("FairAll_I_II", "FairAll_II", "FairLab_I_II", "FairLog", "UnfairLog")
DATA_DIR = Path(__file__).parent / "data"
METRICS_HEADER = ["method", "seed", "t", *METRIC_COLUMNS]

# Best hyperparameters per dataset; architectures are hidden-layer widths.
DEFAULTS = {
    "synthetic": dict(
        phase1_batch=64, phase1_lr=5e-3, phase1_arch=[64, 64], latent_dim=2, phase1_beta=0.8,
        p2_lr=1e-2, p2_clf_arch=[32, 32, 32], p2_alpha=5.0, p2_beta=0.7,
        ii_lr=1e-2, ii_vae_arch=[64, 64], ii_clf_arch=[64, 64], ii_latent=2, ii_alpha=5.0, ii_beta=0.85,
        unfairlog_lr=1e-2, unfairlog_arch=[64, 64, 64],
        fairlog_lr=1e-2, fairlog_arch=[64, 64, 64], fairlog_lambda=3.0,
        fairlab_lr=1e-3, fairlab_alpha=1.0, fairlab_beta=0.7,
    ),
    "compas": dict(
        phase1_batch=256, phase1_lr=5e-3, phase1_arch=[32, 32], latent_dim=3, phase1_beta=0.8,
        p2_lr=1e-3, p2_clf_arch=[32, 32, 32], p2_alpha=1.0, p2_beta=0.7,
        ii_lr=1e-2, ii_vae_arch=[64, 64, 64], ii_clf_arch=[64, 64, 64], ii_latent=2, ii_alpha=10.0, ii_beta=1.0,
        unfairlog_lr=1e-2, unfairlog_arch=[32, 32, 32],
        fairlog_lr=1e-2, fairlog_arch=[32, 32, 32], fairlog_lambda=4.0,
        fairlab_lr=1e-3, fairlab_alpha=1.0, fairlab_beta=0.85,
    ),
    "credit": dict(
        phase1_batch=128, phase1_lr=1e-3, phase1_arch=[64, 64], latent_dim=12, phase1_beta=0.8,
        p2_lr=1e-2, p2_clf_arch=[32, 32, 32], p2_alpha=5.0, p2_beta=0.85,
        ii_lr=1e-2, ii_vae_arch=[64, 64], ii_clf_arch=[32, 32], ii_latent=12, ii_alpha=1.0, ii_beta=0.7,
        unfairlog_lr=1e-3, unfairlog_arch=[64, 64],
        fairlog_lr=1e-2, fairlog_arch=[32, 32, 32], fairlog_lambda=2.0,
        fairlab_lr=1e-3, fairlab_alpha=1.0, fairlab_beta=0.7,
    ),
    "meps": dict(
        phase1_batch=256, phase1_lr=1e-3, phase1_arch=[64, 64], latent_dim=20, phase1_beta=0.7,
        p2_lr=1e-3, p2_clf_arch=[100, 1000], p2_alpha=1.0, p2_beta=0.7,
        ii_lr=1e-2, ii_vae_arch=[100, 100], ii_clf_arch=[100, 100], ii_latent=25, ii_alpha=1.0, ii_beta=0.7,
        unfairlog_lr=5e-3, unfairlog_arch=[64, 64],
        fairlog_lr=1e-2, fairlog_arch=[64, 64], fairlog_lambda=2.0,
        fairlab_lr=1e-3, fairlab_alpha=1.0, fairlab_beta=0.7,
    ),
}
# Train / validation / test fractions of the real datasets.
SPLITS = {"compas": (0.6, 0.2, 0.2), "credit": (0.7, 0.15, 0.15), "meps": (0.6, 0.2, 0.2)}
PHASE1_FRACTION = 0.7
SEED_STREAMS = ("data", "stream", "phase1", "init", "warmup", "decide", "train", "eval")


def parse_arch(value) -> List[int]:
    """``"64x64"``, ``[64, 64]`` or ``64`` to a list of widths."""
    if isinstance(value, str):
        try:
            out = [int(v) for v in value.lower().split("x") if v.strip()]
        except ValueError as err:
            raise ConfigurationError(f"bad architecture {value!r}") from err
    elif isinstance(value, int):
        out = [value]
    else:
        out = [int(v) for v in value]
    if not out or min(out) < 1:
        raise ConfigurationError(f"bad architecture {value!r}")
    return out


@dataclass
class ExperimentConfig:
    method: List[str] = field(default_factory=lambda: ["FairAll_I_II"])
    dataset: str = "synthetic"
    data_csv: Optional[str] = None
    data_schema: Optional[str] = None
    initial_policy: str = "HARSH"
    cost: float = 0.5
    steps: int = 200
    batch_size: int = 64
    warmup_samples: int = 128
    warmup_steps: int = 50
    phase1_epochs: int = 2000
    n_batches: int = 3
    seeds: List[int] = field(default_factory=lambda: [0])
    out_dir: str = "runs/experiment"
    eval_every: int = 1
    policy_variant: str = "dec"
    n_z: int = 50
    n_kl: int = 100
    n_phase1: int = 5000
    n_test: int = 5000
    snapshots: bool = True
    # method hyperparameters; None means the dataset's tabulated value
    phase1_batch: Optional[int] = None
    phase1_lr: Optional[float] = None
    phase1_arch: Optional[List[int]] = None
    latent_dim: Optional[int] = None
    phase1_beta: Optional[float] = None
    p2_lr: Optional[float] = None
    p2_clf_arch: Optional[List[int]] = None
    p2_alpha: Optional[float] = None
    p2_beta: Optional[float] = None
    ii_lr: Optional[float] = None
    ii_vae_arch: Optional[List[int]] = None
    ii_clf_arch: Optional[List[int]] = None
    ii_latent: Optional[int] = None
    ii_alpha: Optional[float] = None
    ii_beta: Optional[float] = None
    unfairlog_lr: Optional[float] = None
    unfairlog_arch: Optional[List[int]] = None
    fairlog_lr: Optional[float] = None
    fairlog_arch: Optional[List[int]] = None
    fairlog_lambda: Optional[float] = None
    fairlab_lr: Optional[float] = None
    fairlab_alpha: Optional[float] = None
    fairlab_beta: Optional[float] = None

    def __post_init__(self):
        if isinstance(self.method, str):
            self.method = [self.method]
        self.method = list(self.method)
        if isinstance(self.seeds, int):
            self.seeds = [self.seeds]
        self.seeds = [int(s) for s in self.seeds]
        self.dataset = str(self.dataset).lower()
        for m in self.method:
            if m not in METHODS:
                raise ConfigurationError(f"unknown method {m!r}; expected one of {METHODS}")
        if not self.method:
            raise ConfigurationError("at least one method is required")
        if not 0.0 < self.cost < 1.0:
            raise ConfigurationError("cost must lie in (0, 1)")
        if self.steps < 1 or self.batch_size < 1 or self.warmup_samples < 1 or self.n_batches < 1:
            raise ConfigurationError("steps, batch_size, warmup_samples and n_batches must be >= 1")
        if self.warmup_steps < 0 or self.phase1_epochs < 0 or self.eval_every < 1:
            raise ConfigurationError("warmup_steps and phase1_epochs must be >= 0, eval_every >= 1")
        if not self.seeds:
            raise ConfigurationError("seeds must be nonempty")
        if self.initial_policy.upper() not in ("HARSH", "LENI"):
            raise ConfigurationError("initial_policy must be HARSH or LENI")
        self.initial_policy = self.initial_policy.upper()
        if self.policy_variant not in ("dec", "clf"):
            raise ConfigurationError("policy_variant must be dec or clf")
        if self.dataset not in DEFAULTS:
            raise ConfigurationError(f"unknown dataset {self.dataset!r}; expected one of {sorted(DEFAULTS)}")
        if self.dataset in ("credit", "meps") and not (self.data_csv and self.data_schema):
            raise ConfigurationError(f"dataset {self.dataset!r} needs data_csv and data_schema")
        for k, v in DEFAULTS[self.dataset].items():
            if getattr(self, k) is None:
                setattr(self, k, v)
            elif k.endswith("_arch"):
                setattr(self, k, parse_arch(getattr(self, k)))

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


def load_config(path) -> ExperimentConfig:
    """Read a flat YAML (or JSON) key-value document."""
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: config must be a key-value mapping")
    return ExperimentConfig.from_dict(data)


# -- data ---------------------------------------------------------------------------

@dataclass
class PreparedData:
    schema: FeatureSchema
    phase1_pool: RecordSet
    stream_pool: RecordSet
    test: RecordSet
    test_cf: Optional[RecordSet] = None

    @property
    def has_ground_truth(self) -> bool:
        return self.test.m is not None


def prepare_data(cfg: ExperimentConfig, seed_seq: np.random.SeedSequence) -> PreparedData:
    """Pools and test set of one seed, standardized on the training split."""
    if cfg.dataset == "synthetic":
        s_pool, s_test, s_stream = seed_seq.spawn(3)
        pool = scm.sample_population(cfg.n_phase1, s_pool).to_records()
        test_draws = scm.sample_population(cfg.n_test, s_test)
        stream = scm.sample_population(cfg.warmup_samples + cfg.steps * cfg.batch_size, s_stream).to_records()
        test, test_cf = test_draws.to_records(), scm.flip(test_draws).to_records()
        _, (pool, stream, test, test_cf) = standardize_fit_apply(pool, stream, test, test_cf, schema=scm.SCHEMA)
        return PreparedData(scm.SCHEMA, pool, stream, test, test_cf)

    csv_path = cfg.data_csv or DATA_DIR / f"{cfg.dataset}.csv"
    schema_path = cfg.data_schema or DATA_DIR / f"{cfg.dataset}.json"
    schema = load_schema(schema_path)
    data = load_dataset(csv_path, schema)
    train_f, _, test_f = SPLITS[cfg.dataset]
    split_ss, pool_ss = seed_seq.spawn(2)
    tr, _, te = split_indices(len(data), (train_f, 1.0 - train_f - test_f, test_f), split_ss)
    p1, st = split_indices(len(tr), (PHASE1_FRACTION, 1.0 - PHASE1_FRACTION), pool_ss)
    train, pool, stream, test = data.subset(tr), data.subset(tr[p1]), data.subset(tr[st]), data.subset(te)
    _, (train, pool, stream, test) = standardize_fit_apply(train, pool, stream, test, schema=schema)
    return PreparedData(schema, pool, stream, test)


# -- training helpers ----------------------------------------------------------------

def minibatch_indices(n: int, n_batches: int, rng) -> List[np.ndarray]:
    """Shuffled split into mini-batches of ``ceil(n / n_batches)`` rows."""
    perm = rng.permutation(n)
    size = max(1, math.ceil(n / n_batches))
    return [perm[i:i + size] for i in range(0, n, size)]


def train_phase1(cfg: ExperimentConfig, schema, pool: RecordSet, seed_seq, epochs: Optional[int] = None) -> FairVae:
    init_ss, train_ss = seed_seq.spawn(2)
    model = make_vae(schema, cfg.phase1_arch, cfg.latent_dim, init_ss, beta=cfg.phase1_beta, cost=cfg.cost)
    rng = np.random.default_rng(train_ss)
    epochs = cfg.phase1_epochs if epochs is None else epochs
    n, b = len(pool), cfg.phase1_batch
    for _ in range(epochs):
        perm = rng.permutation(n)
        for i in range(0, n, b):
            idx = perm[i:i + b]
            _, grads = phase1_loss(model, pool.x[idx], pool.s[idx], rng)
            model = model.apply_grads(grads, cfg.phase1_lr)
    return model


def vae_epoch(model: FairVae, records: RecordSet, rng, lr: float, n_batches: int, n_z: int, n_kl: int) -> FairVae:
    """One epoch of the semi-supervised objective over the decided ``records``."""
    for idx in minibatch_indices(len(records), n_batches, rng):
        r = records.subset(idx)
        lab = r.labeled
        labeled = (r.x[lab], r.s[lab], r.y_tilde[lab], r.propensity[lab]) if lab.any() else None
        unlabeled = (r.x[~lab], r.s[~lab]) if (~lab).any() else None
        _, grads = phase2_objective(model, labeled, unlabeled, rng, n_z=n_z, n_kl=n_kl)
        model = model.apply_grads(grads, lr)
    return model


def baseline_epoch(policy: Policy, records: RecordSet, rng, lr: float, c: float, n_batches: int) -> Policy:
    for idx in minibatch_indices(len(records), n_batches, rng):
        r = records.subset(idx)
        policy = baseline_update(policy, r.subset(np.flatnonzero(r.labeled)), c, lr, full=r, rng=rng)
    return policy


# -- one method on one seed -----------------------------------------------------------

class MethodRunner:
    """State and update rule of one method during the online phase."""

    def __init__(self, cfg: ExperimentConfig, method: str, data: PreparedData, streams, phase1: Optional[FairVae]):
        self.cfg, self.method, self.data = cfg, method, data
        self.train_rng = np.random.default_rng(streams["train"])
        init = streams["init"]
        self.model: Optional[FairVae] = None
        self.policy: Policy = make_initial_policy(cfg.initial_policy, cfg.dataset)
        dx = data.schema.encoded_width
        if method == "FairAll_I_II":
            self.model = transfer_params(phase1, init, clf_hidden=cfg.p2_clf_arch, beta=cfg.p2_beta,
                                         alpha=cfg.p2_alpha, cost=cfg.cost)
            self.lr = cfg.p2_lr
        elif method == "FairAll_II":
            self.model = make_vae(data.schema, cfg.ii_vae_arch, cfg.ii_latent, init, with_utility=True,
                                  clf_hidden=cfg.ii_clf_arch, beta=cfg.ii_beta, alpha=cfg.ii_alpha, cost=cfg.cost)
            self.lr = cfg.ii_lr
        elif method == "FairLab_I_II":
            self.model = transfer_params(phase1, init, clf_hidden=cfg.p2_clf_arch, beta=cfg.fairlab_beta,
                                         alpha=cfg.fairlab_alpha, cost=cfg.cost)
            self.lr = cfg.fairlab_lr
            # carries the model through baseline_update; its weights are never used to decide
            self.holder_bundle = mlp_init([1], self.model.latent_dim, 1, 0)
        elif method == "UnfairLog":
            self.learner = make_feature_policy("unfairlog", dx, cfg.unfairlog_arch, np.random.default_rng(init))
            self.lr = cfg.unfairlog_lr
        else:
            self.learner = make_feature_policy("fairlog", dx, cfg.fairlog_arch, np.random.default_rng(init),
                                               lam=cfg.fairlog_lambda)
            self.lr = cfg.fairlog_lr

    @property
    def decision_model(self):
        return self.model if self.method != "FairLab_I_II" else None

    def update(self, records: RecordSet, epochs: int, warm_start: bool):
        cfg, rng = self.cfg, self.train_rng
        if self.method in ("FairAll_I_II", "FairAll_II"):
            for _ in range(epochs):
                self.model = vae_epoch(self.model, records, rng, self.lr, cfg.n_batches, cfg.n_z, cfg.n_kl)
            prior = self.policy if warm_start and isinstance(self.policy, LatentPolicy) else None
            self.policy = train_policy_from_latent(self.model, records, cfg.policy_variant, epochs, self.lr, rng,
                                                   policy=prior, c=cfg.cost, n_batches=cfg.n_batches)
        elif self.method == "FairLab_I_II":
            holder = LatentPolicy("fairlab", self.holder_bundle, self.model)
            for _ in range(epochs):
                holder = baseline_epoch(holder, records, rng, self.lr, cfg.cost, cfg.n_batches)
            self.model = holder.model
            if records.labeled.any():
                prior = self.policy if isinstance(self.policy, LatentPolicy) else None
                self.policy = train_policy_from_latent(self.model, records, "label", epochs, self.lr, rng,
                                                       policy=prior, c=cfg.cost, n_batches=cfg.n_batches,
                                                       kind="fairlab")
            elif isinstance(self.policy, LatentPolicy):
                self.policy = replace(self.policy, model=self.model)
        else:
            for _ in range(epochs):
                self.learner = baseline_epoch(self.learner, records, rng, self.lr, cfg.cost, cfg.n_batches)
            self.policy = self.learner

    def snapshot(self) -> dict:
        return {
            "model": None if self.model is None else vae_to_dict(self.model),
            "policy": self.policy.to_dict(),
        }


def evaluate(policy: Policy, model, data: PreparedData, c: float, seed) -> Dict[str, float]:
    """Test-set metrics; factual and counterfactual sides share the sampling seed."""
    p = policy.probs(data.test, model, np.random.default_rng(seed))
    out = {"ut_proxy": utility(p, data.test.label, c), "dpu": dpu(p, data.test.s)}
    if data.has_ground_truth:
        out["ut_gt"] = utility(p, data.test.m, c)
    if data.test_cf is not None:
        out["cfu"] = cfu(p, policy.probs(data.test_cf, model, np.random.default_rng(seed)))
    return out


def run_seed(cfg: ExperimentConfig, method: str, seed: int, phase1_cache: Optional[dict] = None,
             data: Optional[PreparedData] = None):
    """Run one method on one seed; returns ``(MetricSeries, snapshot dict, history)``."""
    streams = dict(zip(SEED_STREAMS, np.random.SeedSequence(seed).spawn(len(SEED_STREAMS))))
    # method-specific streams are re-derived so that methods differ in their own randomness only
    for name in ("init", "decide", "train", "eval"):
        streams[name] = np.random.SeedSequence([seed, METHODS.index(method), SEED_STREAMS.index(name)])
    data = prepare_data(cfg, streams["data"]) if data is None else data

    phase1 = None
    if method in ("FairAll_I_II", "FairLab_I_II"):
        key = (seed, cfg.phase1_epochs)
        if phase1_cache is not None and key in phase1_cache:
            phase1 = phase1_cache[key]
        else:
            phase1 = train_phase1(cfg, data.schema, data.phase1_pool, streams["phase1"])
            if phase1_cache is not None:
                phase1_cache[key] = phase1

    runner = MethodRunner(cfg, method, data, streams, phase1)
    sampler = StreamSampler(data.stream_pool, streams["stream"], name="stream")
    decide_rng = np.random.default_rng(streams["decide"])
    eval_entropy = streams["eval"].entropy

    warm = decide_batch(runner.policy, CandidateBatch(0, sampler.take(cfg.warmup_samples), "warmup"),
                        runner.decision_model, decide_rng)
    if cfg.warmup_steps:
        runner.update(warm.records, cfg.warmup_steps, warm_start=False)

    series = MetricSeries(method, seed)
    tracker = EffectiveTracker(cfg.cost)
    history = []
    for t in range(1, cfg.steps + 1):
        batch = decide_batch(runner.policy, CandidateBatch(t, sampler.take(cfg.batch_size), "stream"),
                             runner.decision_model, decide_rng)
        history.append(batch)
        eff_ut, eff_dpu = tracker.update(batch)
        runner.update(batch.records, 1, warm_start=True)
        if t % cfg.eval_every == 0 or t == cfg.steps:
            row = evaluate(runner.policy, runner.decision_model, data, cfg.cost, [eval_entropy, t])
            series.append(t, eff_ut=eff_ut, eff_dpu=eff_dpu, **row)
    snap = {"method": method, "seed": seed, "t": cfg.steps, **runner.snapshot()}
    if phase1 is not None:
        snap["phase1"] = vae_to_dict(phase1)
    return series, snap, history


def _fmt(v: float) -> str:
    return "" if np.isnan(v) else repr(float(v))


def write_metrics(path, series_list: Sequence[MetricSeries]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for series in series_list:
            for row in series.rows():
                w.writerow(row[:3] + [_fmt(v) for v in row[3:]])


def read_metrics(path) -> List[MetricSeries]:
    out: Dict[tuple, MetricSeries] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != METRICS_HEADER:
            raise ParseError(f"{path}: unexpected header {reader.fieldnames}", row=1)
        for i, row in enumerate(reader, start=2):
            try:
                key = (row["method"], int(row["seed"]))
                vals = {k: float(row[k]) if row[k] != "" else np.nan for k in METRIC_COLUMNS}
                out.setdefault(key, MetricSeries(*key)).append(int(row["t"]), **vals)
            except (ValueError, KeyError) as err:
                raise ParseError(f"{path}: {err}", row=i) from err
    return list(out.values())


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run every (method, seed) of ``cfg``; a failing seed is recorded and skipped.

    Writes ``metrics.csv``, ``config.yaml``, ``errors.json`` (when a seed
    failed) and, if enabled, one JSON snapshot per run under ``snapshots/``.
    Returns ``{"series": [...], "errors": [...], "out_dir": Path}``.
    """
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.yaml", "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=True)
    series_all, errors = [], []
    for seed in cfg.seeds:
        cache: dict = {}
        data = None
        for method in cfg.method:
            try:
                if data is None:
                    data = prepare_data(cfg, np.random.SeedSequence(seed).spawn(len(SEED_STREAMS))[0])
                series, snap, _ = run_seed(cfg, method, seed, cache, data)
            except (FairPolicyError, ArithmeticError, ValueError) as err:
                log.error("%s seed %d failed: %s", method, seed, err)
                errors.append({"method": method, "seed": seed, "error": type(err).__name__,
                               "message": str(err), "traceback": traceback.format_exc()})
                continue
            series_all.append(series)
            if cfg.snapshots:
                (out / "snapshots").mkdir(exist_ok=True)
                with open(out / "snapshots" / f"{method}_seed{seed}.json", "w") as fh:
                    json.dump(snap, fh)
    write_metrics(out / "metrics.csv", series_all)
    if errors:
        with open(out / "errors.json", "w") as fh:
            json.dump(errors, fh, indent=1)
    return {"series": series_all, "errors": errors, "out_dir": out}


# -- summaries ---------------------------------------------------------------------

SUMMARY_HEADER = ["method", "n_seeds", "t_final", "eff_ut", "eff_dpu",
                  "ut_proxy_mu", "ut_proxy_tv", "ut_gt_mu", "ut_gt_tv", "dpu_mu", "dpu_tv", "cfu_mu", "cfu_tv"]


def collect_runs(run_dirs: Sequence) -> tuple:
    """All metric series under ``run_dirs`` plus a list of missing (method, seed) runs."""
    series, missing = [], []
    for d in map(Path, run_dirs):
        path = d / "metrics.csv"
        if not path.exists():
            missing.append(f"{d}: metrics.csv not found")
            continue
        found = read_metrics(path)
        series += found
        cfg_path = d / "config.yaml"
        if cfg_path.exists():
            with open(cfg_path) as fh:
                cfg = yaml.safe_load(fh)
            have = {(s.method, s.seed) for s in found}
            for m in cfg.get("method", []):
                for s in cfg.get("seeds", []):
                    if (m, s) not in have:
                        missing.append(f"{d}: {m} seed {s}")
    return series, missing


def summarize_series(series: Sequence[MetricSeries], window=(125, 200)) -> List[dict]:
    """Across-seed summary per method: final effective metrics and windowed (TV, mean)."""
    by_method: Dict[str, List[MetricSeries]] = {}
    for s in series:
        by_method.setdefault(s.method, []).append(s)
    rows = []
    for method in sorted(by_method, key=lambda m: METHODS.index(m) if m in METHODS else len(METHODS)):
        group = by_method[method]
        row = {"method": method, "n_seeds": len(group), "t_final": min(s.t[-1] for s in group)}
        for k in ("eff_ut", "eff_dpu"):
            row[k] = format_mean_std([s.column(k)[-1] for s in group])
        for k in ("ut_proxy", "ut_gt", "dpu", "cfu"):
            vals = [s.column(k) for s in group]
            if any(np.all(np.isnan(v)) for v in vals):
                row[f"{k}_mu"] = row[f"{k}_tv"] = ""
                continue
            stats = [_window_stats(s, v, window) for s, v in zip(group, vals)]
            row[f"{k}_tv"] = format_mean_std([tv for tv, _ in stats])
            row[f"{k}_mu"] = format_mean_std([mu for _, mu in stats])
        rows.append(row)
    return rows


def _window_stats(s: MetricSeries, values, window):
    t = np.asarray(s.t)
    t1, t2 = window
    if t2 > t[-1]:
        log.warning("window end %d beyond the last step %d; clipped", t2, t[-1])
        t2 = int(t[-1])
    sel = (t >= t1) & (t <= t2)
    if sel.sum() < 2:
        raise RangeError(f"window [{t1}, {t2}] holds fewer than two evaluated steps")
    return temporal_stats(values[sel], 1, int(sel.sum()))


def summarize_runs(run_dirs: Sequence, window=(125, 200), out_path=None, figures: bool = True) -> dict:
    """Summary table over run directories; writes ``summary.csv`` (and figures) when ``out_path`` is set."""
    series, missing = collect_runs(run_dirs)
    for m in missing:
        log.warning("missing run: %s", m)
    rows = summarize_series(series, window) if series else []
    if out_path is not None:
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with open(out_path, "w", newline="") as fh:
            w = csv.DictWriter(fh, SUMMARY_HEADER, lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
        if figures and series:
            from .report import plot_series

            plot_series(series, out_path.parent)
    return {"rows": rows, "missing": missing, "series": series}

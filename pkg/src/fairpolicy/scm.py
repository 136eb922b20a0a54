"""Law-school structural causal model with exact counterfactuals.

    Y    = 2 m - 1,               m ~ Bernoulli(0.5)
    K    ~ Normal(Y, 0.5)
    LSAT ~ Normal(4 K + 3.5 S, 0.1)
    GPA  ~ Normal(0.75 K + S, 0.01)
    Y~   = 1[FYA > 0],            FYA ~ Normal(1.3 K + S, 0.05)

The second Normal argument is a standard deviation.  Every exogenous noise
term is stored, so counterfactuals are computed by abduction (keep the noise),
action (set S) and prediction (replay the equations).
"""
from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from .approximator import fit_logistic
from .dataset import FeatureSchema, FeatureSpec, RecordSet, save_schema, write_dataset
from .errors import ConfigurationError, ContractError, NumericalError

K_SD = 0.5
LSAT_SD = 0.1
GPA_SD = 0.01
FYA_SD = 0.05

SCHEMA = FeatureSchema(
    features=(FeatureSpec("lsat", "real"), FeatureSpec("gpa", "real")),
    sensitive="gender",
    sensitive_values=("-1", "1"),
    proxy="pass_first_year",
)


@dataclass(frozen=True)
class ScmDraws:
    """A population of SCM draws; every field is an array of equal length."""

    y_sign: np.ndarray
    m: np.ndarray
    k: np.ndarray
    s: np.ndarray
    eps_k: np.ndarray
    eps_lsat: np.ndarray
    eps_gpa: np.ndarray
    eps_fya: np.ndarray
    lsat: np.ndarray
    gpa: np.ndarray
    fya: np.ndarray
    y_tilde: np.ndarray

    def __len__(self):
        return len(self.s)

    def __getitem__(self, idx) -> "ScmDraws":
        return ScmDraws(**{f.name: np.atleast_1d(getattr(self, f.name)[idx]) for f in fields(self)})

    @property
    def label(self) -> np.ndarray:
        return self.y_tilde

    @property
    def x(self) -> np.ndarray:
        return np.column_stack([self.lsat, self.gpa])

    def to_records(self) -> RecordSet:
        return RecordSet(x=self.x, s=self.s, label=self.y_tilde, m=self.m)


def structural(k, s, eps_lsat, eps_gpa, eps_fya):
    lsat = 4.0 * k + 3.5 * s + eps_lsat
    gpa = 0.75 * k + s + eps_gpa
    fya = 1.3 * k + s + eps_fya
    return lsat, gpa, fya, (fya > 0).astype(float)


def from_noise(m, s, eps_k, eps_lsat, eps_gpa, eps_fya) -> ScmDraws:
    m = np.asarray(m, dtype=float)
    y_sign = 2.0 * m - 1.0
    k = y_sign + eps_k
    s = np.asarray(s, dtype=float)
    lsat, gpa, fya, y_tilde = structural(k, s, eps_lsat, eps_gpa, eps_fya)
    return ScmDraws(y_sign, m, k, s, np.asarray(eps_k, float), np.asarray(eps_lsat, float),
                    np.asarray(eps_gpa, float), np.asarray(eps_fya, float), lsat, gpa, fya, y_tilde)


def sample_population(n: int, seed) -> ScmDraws:
    if n < 1:
        raise ConfigurationError("population size must be >= 1")
    rng = np.random.default_rng(seed)
    m = rng.integers(0, 2, n).astype(float)
    s = rng.choice([-1.0, 1.0], n)
    return from_noise(
        m, s,
        K_SD * rng.standard_normal(n),
        LSAT_SD * rng.standard_normal(n),
        GPA_SD * rng.standard_normal(n),
        FYA_SD * rng.standard_normal(n),
    )


def counterfactual_of(draws: ScmDraws, s_prime) -> ScmDraws:
    """Same individuals had their sensitive attribute been ``s_prime``."""
    for name in ("eps_k", "eps_lsat", "eps_gpa", "eps_fya"):
        if getattr(draws, name, None) is None:
            raise ContractError(f"draw lacks exogenous noise {name!r}; cannot abduct")
    s_prime = np.broadcast_to(np.asarray(s_prime, dtype=float), draws.s.shape).copy()
    if not np.all(np.isin(s_prime, (-1.0, 1.0))):
        raise ContractError("s_prime must be -1 or +1")
    lsat, gpa, fya, y_tilde = structural(draws.k, s_prime, draws.eps_lsat, draws.eps_gpa, draws.eps_fya)
    return replace(draws, s=s_prime, lsat=lsat, gpa=gpa, fya=fya, y_tilde=y_tilde)


def flip(draws: ScmDraws) -> ScmDraws:
    return counterfactual_of(draws, -draws.s)


def write_population_csv(draws: ScmDraws, csv_path, schema_path=None) -> None:
    """Emit draws in the dataset loader's CSV format (plus schema sidecar)."""
    write_dataset(csv_path, SCHEMA, {
        "lsat": draws.lsat, "gpa": draws.gpa,
        "gender": [str(int(v)) for v in draws.s],
        "pass_first_year": [str(int(v)) for v in draws.y_tilde],
    })
    if schema_path is not None:
        save_schema(SCHEMA, schema_path)


# -- reference policies ----------------------------------------------------------

def unfair_features(draws: ScmDraws) -> np.ndarray:
    return np.column_stack([draws.lsat, draws.gpa, draws.s])


def fair_features(draws: ScmDraws) -> np.ndarray:
    return draws.k[:, None]


FEATURES = {"unfair": unfair_features, "fair": fair_features}


def fit_optimal_policies(n_train: int = 5000, seed=0, steps: int = 500, lr: float = 0.05):
    """Logistic approximations of the optimal fair and unfair policies.

    Returns ``(opt_fair, opt_unfair)``.

    OPT-UNFAIR regresses Y~ on (LSAT, GPA, S); OPT-FAIR regresses Y~ on the
    hidden K.  Both decide by thresholding their fitted probability at 0.5.
    """
    from .policies import OptimalPolicy

    ss = np.random.SeedSequence(seed if not isinstance(seed, np.random.SeedSequence) else seed.entropy)
    data_seed, fit_seed = ss.spawn(2)
    draws = sample_population(n_train, data_seed)
    out = []
    for kind in ("unfair", "fair"):
        X = FEATURES[kind](draws)
        mean, std = X.mean(axis=0), X.std(axis=0)
        std = np.where(std == 0, 1.0, std)
        bundle, losses = fit_logistic((X - mean) / std, draws.y_tilde, steps=steps, lr=lr, seed=fit_seed)
        if not losses[-1] < losses[0]:
            raise NumericalError(f"OPT-{kind.upper()} fit did not decrease its loss ({losses[0]:.4f} -> {losses[-1]:.4f})")
        out.append(OptimalPolicy(kind=f"optimal_{kind}", bundle=bundle, features=kind, mean=mean, std=std))
    return out[1], out[0]

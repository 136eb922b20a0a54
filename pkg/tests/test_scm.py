import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import norm

from fairpolicy import scm
from fairpolicy.dataset import load_dataset, load_schema
from fairpolicy.errors import ConfigurationError, ContractError
from fairpolicy.metrics import cfu_of_policy, dpu_of_policy, utility_of_policy


def _one(m, k, s, noise=0.0):
    return scm.from_noise([m], [s], [k - (2 * m - 1)], [noise], [noise], [noise])


def test_zero_noise_substitution():
    d = _one(1, 1.0, 1)
    assert (d.lsat[0], d.gpa[0], d.fya[0], d.y_tilde[0]) == pytest.approx((7.5, 1.75, 2.3, 1.0))


def test_reconstruction_identities_exact():
    d = scm.sample_population(20_000, 3)
    assert np.array_equal(d.lsat, 4.0 * d.k + 3.5 * d.s + d.eps_lsat)
    assert np.array_equal(d.gpa, 0.75 * d.k + d.s + d.eps_gpa)
    assert np.array_equal(d.fya, 1.3 * d.k + d.s + d.eps_fya)
    assert np.array_equal(d.y_tilde, (d.fya > 0).astype(float))
    assert np.allclose(d.k - d.y_sign, d.eps_k, rtol=0, atol=1e-15)
    assert np.array_equal(d.m, (d.y_sign + 1) / 2)


def test_noise_scales_are_standard_deviations():
    d = scm.sample_population(200_000, 0)
    assert d.eps_k.std() == pytest.approx(0.5, rel=0.01)
    assert d.eps_lsat.std() == pytest.approx(0.1, rel=0.01)
    assert d.eps_fya.std() == pytest.approx(0.05, rel=0.01)


def test_sampling_deterministic_and_validates_n():
    a, b = scm.sample_population(50, 9), scm.sample_population(50, 9)
    assert np.array_equal(a.lsat, b.lsat)
    with pytest.raises(ConfigurationError):
        scm.sample_population(0, 0)


def test_proxy_marginal_is_half():
    d = scm.sample_population(1_000_000, 1)
    assert d.y_tilde.mean() == pytest.approx(0.5, abs=0.002)


# Oracle, frozen before the build: P(y~=1 | s) = sum_y 0.5 * Phi((1.3 y + s) / sqrt(1.69 * 0.25 + 0.05^2)).
P_PROXY_GIVEN_PRIVILEGED = 0.6612422743295165


def test_proxy_rate_given_privileged_group():
    sd = np.sqrt(1.69 * 0.25 + 0.05**2)
    exact = 0.5 * norm.cdf((1.3 + 1) / sd) + 0.5 * norm.cdf((-1.3 + 1) / sd)
    assert exact == pytest.approx(P_PROXY_GIVEN_PRIVILEGED, abs=1e-12)
    d = scm.sample_population(1_000_000, 2)
    est = d.y_tilde[d.s == 1].mean()
    se = np.sqrt(exact * (1 - exact) / (d.s == 1).sum())
    assert abs(est - P_PROXY_GIVEN_PRIVILEGED) < 4 * se


def test_counterfactual_zero_noise():
    cf = scm.counterfactual_of(_one(1, 1.0, 1), -1)
    assert (cf.lsat[0], cf.gpa[0]) == pytest.approx((0.5, -0.25))


def test_counterfactual_null_intervention_is_identity():
    d = scm.sample_population(1000, 4)
    same = scm.counterfactual_of(d, d.s)
    for f in ("lsat", "gpa", "fya", "y_tilde", "k", "m", "s"):
        assert np.array_equal(getattr(same, f), getattr(d, f))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(1, 200))
def test_counterfactual_involution_and_lsat_shift(seed, n):
    d = scm.sample_population(n, seed)
    cf = scm.flip(d)
    back = scm.counterfactual_of(cf, d.s)
    for f in ("lsat", "gpa", "fya", "y_tilde", "s"):
        assert np.array_equal(getattr(back, f), getattr(d, f))
    assert np.allclose(d.lsat - cf.lsat, 3.5 * (d.s - cf.s), atol=1e-12)
    assert np.all(np.abs(np.abs(d.lsat - cf.lsat) - 7.0) < 1e-12)
    assert np.array_equal(cf.k, d.k) and np.array_equal(cf.eps_lsat, d.eps_lsat)


def test_counterfactual_needs_noise():
    d = scm.sample_population(5, 0)
    broken = scm.ScmDraws(**{**d.__dict__, "eps_lsat": None})
    with pytest.raises(ContractError):
        scm.counterfactual_of(broken, -d.s)
    with pytest.raises(ContractError):
        scm.counterfactual_of(d, 0)


def test_written_population_loads_back(tmp_path):
    d = scm.sample_population(25, 5)
    scm.write_population_csv(d, tmp_path / "pop.csv", tmp_path / "pop.json")
    recs = load_dataset(tmp_path / "pop.csv", load_schema(tmp_path / "pop.json"))
    assert len(recs) == 25
    assert np.allclose(recs.x, d.x) and np.array_equal(recs.s, d.s) and np.array_equal(recs.label, d.y_tilde)


@pytest.fixture(scope="module")
def optimal():
    return scm.fit_optimal_policies(n_train=5000, seed=0)


def test_opt_fair_coefficient_on_k_positive(optimal):
    opt_fair, _ = optimal
    assert opt_fair.features == "fair"
    assert opt_fair.bundle.params[0][0, 0] > 0
    # brute-force grid oracle: best single-threshold rule on K has a positive orientation
    d = scm.sample_population(100_000, 11)
    grid = np.linspace(-2, 2, 401)
    acc_up = [np.mean((d.k > g) == (d.y_tilde == 1)) for g in grid]
    acc_down = [np.mean((d.k < g) == (d.y_tilde == 1)) for g in grid]
    assert max(acc_up) > max(acc_down)


def test_opt_fair_has_zero_cfu(optimal):
    opt_fair, _ = optimal
    test = scm.sample_population(5000, 99)
    assert cfu_of_policy(opt_fair, test, scm.flip(test)) == 0.0


def test_opt_policies_reference_values(optimal):
    opt_fair, opt_unfair = optimal
    test = scm.sample_population(20_000, 123)
    assert utility_of_policy(opt_unfair, test, "proxy", 0.5) == pytest.approx(0.24, abs=0.02)
    assert dpu_of_policy(opt_unfair, test) == pytest.approx(0.31, abs=0.03)
    assert utility_of_policy(opt_fair, test, "proxy", 0.5) == pytest.approx(0.17, abs=0.02)
    assert dpu_of_policy(opt_fair, test) < 0.02


def test_opt_policies_reject_records(optimal):
    opt_fair, _ = optimal
    with pytest.raises(ContractError):
        opt_fair.probs(scm.sample_population(10, 0).to_records())

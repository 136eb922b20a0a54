import numpy as np
import pytest

from fairpolicy.fairvae import make_vae, transfer_params

TOY_HEADS = (("real", 0, 1), ("count", 1, 1), ("binary", 2, 1), ("categorical", 3, 3))


def toy_batch(n, seed=0):
    rng = np.random.default_rng(seed)
    x = np.hstack([
        rng.normal(size=(n, 1)),
        rng.poisson(2.0, size=(n, 1)).astype(float),
        rng.integers(0, 2, (n, 1)).astype(float),
        np.eye(3)[rng.integers(0, 3, n)],
    ])
    s = rng.choice([-1.0, 1.0], n)
    u = rng.integers(0, 2, n).astype(float)
    p = rng.uniform(0.1, 0.9, n)
    return x, s, u, p


def jitter_biases(model, seed=1, scale=0.3):
    """Nonzero biases keep hidden pre-activations away from the rectifier kink."""
    rng = np.random.default_rng(seed)
    for b in model.bundles().values():
        for P in b.params[1::2]:
            P += rng.normal(0.0, scale, P.shape)
    return model


@pytest.fixture
def phase1_toy():
    return jitter_biases(make_vae(TOY_HEADS, [6, 5], 2, 3, beta=0.8))


@pytest.fixture
def phase2_toy():
    p1 = make_vae(TOY_HEADS, [6, 5], 2, 3, beta=0.8)
    return jitter_biases(transfer_params(p1, 4, clf_hidden=[4], beta=0.7, alpha=2.0, cost=0.3), seed=2)


def fd_relative_errors(model, fn, h=1e-3):
    """Per-parameter-array relative error between analytic and central-difference gradients.

    ``fn(model)`` must return ``(value, grads)`` and be deterministic (fixed RNG seeds).
    """
    _, grads = fn(model)
    errs = {}
    for name, bundle in model.bundles().items():
        for i, P in enumerate(bundle.params):
            fd = np.zeros_like(P)
            for idx in np.ndindex(P.shape):
                old = P[idx]
                P[idx] = old + h
                vp = fn(model)[0]
                P[idx] = old - h
                vm = fn(model)[0]
                P[idx] = old
                fd[idx] = (vp - vm) / (2 * h)
            an = grads[name][i]
            denom = max(np.linalg.norm(fd) + np.linalg.norm(an), 1e-8)
            errs[(name, i)] = float(np.linalg.norm(fd - an) / denom)
    return errs


# One line per acceptance criterion, printed at the end of the session.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

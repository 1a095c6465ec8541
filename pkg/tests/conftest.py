import itertools

import numpy as np
import pytest

from tetherbm.rbm import RbmParams


def all_states(n):
    """Every binary vector of length n, in lexicographic order (independent of the library)."""
    return np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.float64)


def brute_energy(v, h, p):
    total = 0.0
    for i in range(p.n_visible):
        for a in range(p.n_hidden):
            total -= v[i] * p.w[i, a] * h[a]
    for i in range(p.n_visible):
        total -= p.b[i] * v[i]
    for a in range(p.n_hidden):
        total -= p.c[a] * h[a]
    return total


def joint_table(p):
    """(states_v, states_h, probabilities) of the full joint law, by double enumeration."""
    Vs, Hs = all_states(p.n_visible), all_states(p.n_hidden)
    E = np.array([[brute_energy(v, h, p) for h in Hs] for v in Vs])
    w = np.exp(-(E - E.min()))
    return Vs, Hs, w / w.sum()


def multinomial_z(counts, probs):
    n = counts.sum()
    sd = np.sqrt(n * probs * (1 - probs))
    return np.abs(counts - n * probs) / np.where(sd > 0, sd, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_params(rng):
    return RbmParams.random(4, 3, rng, scale=0.7)


def uniform_basis(n):
    """Single direction u = 1/sqrt(n) with raw range [0, 1], so m(v) is the fraction of ones."""
    from tetherbm.pca import PcaBasis
    return PcaBasis(np.ones((1, n)) / np.sqrt(n), [1.0], [0.0], [1.0])


def two_mode_params(n, lo=0.2, hi=0.8, log_ratio=0.0):
    """One hidden unit: visible law = mixture of Bernoulli(lo)^n and Bernoulli(hi)^n.

    ``log_ratio`` is log(weight_hi / weight_lo).
    """
    logit = lambda x: np.log(x) - np.log1p(-x)  # noqa: E731
    b = np.full(n, logit(lo))
    w = np.full((n, 1), logit(hi) - logit(lo))
    c = log_ratio + n * (np.log1p(np.exp(b[0])) - np.log1p(np.exp(b[0] + w[0, 0])))
    return RbmParams(w, b, np.array([c]))


def two_mode_fraction_law(n, lo=0.2, hi=0.8, log_ratio=0.0):
    from math import comb
    k = np.arange(n + 1)
    binom = lambda p: np.array([comb(n, int(j)) for j in k], float) * p ** k * (1 - p) ** (n - k)  # noqa: E731
    w_hi = 1 / (1 + np.exp(-log_ratio))
    return k / n, (1 - w_hi) * binom(lo) + w_hi * binom(hi)


# acceptance-criterion verdicts, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

import numpy as np
import pytest

from tetherbm import rbm, train as tr
from tetherbm.pca import compute_pca
from tetherbm.rbm import RbmParams
from tetherbm.tmc import TetherGrid

from conftest import all_states, uniform_basis


def _flat(p):
    return np.concatenate([p.w.ravel(), p.b, p.c])


def _unflat(x, nv, nh):
    return RbmParams(x[:nv * nh].reshape(nv, nh), x[nv * nh:nv * nh + nv], x[nv * nh + nv:])


def central_difference(f, params, step=1e-5):
    x = _flat(params)
    g = np.zeros_like(x)
    for j in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[j] += step
        xm[j] -= step
        g[j] = (f(_unflat(xp, params.n_visible, params.n_hidden))
                - f(_unflat(xm, params.n_visible, params.n_hidden))) / (2 * step)
    return g


def exact_gradient(data, p):
    pos = tr.positive_gradient(data, p)
    neg = rbm.exact_moments(p)
    neg = (neg[2], neg[0], neg[1])
    return np.concatenate([(a - b).ravel() for a, b in zip(pos, neg)])


def _smc_state(p, n_chains, seed=0):
    cfg = tr.TrainConfig(sampler="smc", n_chains=n_chains, n_hidden=p.n_hidden, master_seed=seed)
    return tr.init_state(cfg, np.zeros((1, p.n_visible)), p.copy())


# ---------------------------------------------------------------- positive phase

def test_positive_gradient_zero_sample():
    gw, gb, gc = tr.positive_gradient(np.zeros((1, 3)), RbmParams.zeros(3, 2))
    assert np.all(gw == 0) and np.all(gb == 0) and np.all(gc == 0.5)


def test_positive_gradient_duplicated_batch(rng):
    p = RbmParams.random(5, 3, rng)
    X = rng.integers(0, 2, (7, 5))
    a = tr.positive_gradient(X, p)
    b = tr.positive_gradient(np.concatenate([X, X]), p)
    assert all(np.allclose(x, y, atol=1e-15) for x, y in zip(a, b))


def test_positive_gradient_is_derivative_of_data_term(rng):
    p = RbmParams.random(5, 3, rng, scale=0.5)
    X = rng.integers(0, 2, (9, 5))
    fd = central_difference(lambda q: np.mean(-rbm.visible_free_energy(X, q)), p)
    an = np.concatenate([g.ravel() for g in tr.positive_gradient(X, p)])
    assert np.abs(fd - an).max() / np.abs(an).max() < 1e-6


# ---------------------------------------------------------------- full gradient

def test_full_gradient_matches_finite_differences(rng):
    for trial in range(3):
        p = RbmParams.random(6, 3, rng, scale=0.5)
        X = rng.integers(0, 2, (10, 6))
        fd = central_difference(lambda q: rbm.exact_log_likelihood(X, q), p)
        an = exact_gradient(X, p)
        assert np.abs(fd - an).max() / np.abs(an).max() < 1e-6


def test_exact_gradient_vanishes_at_moment_matching(rng):
    p = RbmParams(np.zeros((4, 3)), np.zeros(4), rng.normal(size=3))
    X = all_states(4)
    assert np.abs(exact_gradient(X, p)).max() < 1e-10


# ---------------------------------------------------------------- negative phase, Glauber

def test_smc_k_zero_keeps_chains(rng):
    p = RbmParams.random(5, 2, rng)
    st = _smc_state(p, 10)
    before = st.smc_v.copy()
    m0 = tr.negative_gradient_smc(st, 0)
    assert np.array_equal(st.smc_v, before)
    m1 = tr.negative_gradient_smc(st, 0)
    assert all(np.array_equal(a, b) for a, b in zip(m0, m1))


def test_smc_zero_weight_means(rng):
    b = rng.normal(size=6)
    p = RbmParams(np.zeros((6, 2)), b, np.zeros(2))
    st = _smc_state(p, 2000)
    _, mv, mh = tr.negative_gradient_smc(st, 10)
    s = 1 / (1 + np.exp(-b))
    assert np.all(np.abs(mv - s) < 3 * np.sqrt(s * (1 - s) / 2000))
    assert np.allclose(mh, 0.5)


def test_smc_matches_exact_moments(rng):
    p = RbmParams.random(6, 3, rng, scale=0.5)
    st = _smc_state(p, 4000, seed=1)
    tr.negative_gradient_smc(st, 50)
    gw, gv, gh = tr.negative_gradient_smc(st, 10)
    ev, eh, evh = rbm.exact_moments(p)
    se_v = np.sqrt(ev * (1 - ev) / 4000)
    assert np.all(np.abs(gv - ev) < 3 * se_v + 1e-3)
    assert np.abs(gw - evh).max() < 0.02


# ---------------------------------------------------------------- negative phase, tethered

def _tmc_state(p, grid, M, seed=0):
    cfg = tr.TrainConfig(sampler="tmc", n_hidden=p.n_hidden, grid=grid, tmc_chains_per_node=M,
                         master_seed=seed)
    return cfg, tr.init_state(cfg, np.zeros((1, p.n_visible)), p.copy())


def test_tmc_negative_phase_zero_model():
    p = RbmParams.zeros(12, 2)
    grid = TetherGrid.regular((0,), 1e3, n_points=60)
    cfg, st = _tmc_state(p, grid, 4)
    tr.negative_gradient_tmc(st, cfg, uniform_basis(12))
    cfg = tr.TrainConfig(sampler="tmc", n_hidden=2, grid=grid, k_sweeps=400, tmc_chains_per_node=4)
    gw, gv, gh = tr.negative_gradient_tmc(st, cfg, uniform_basis(12))
    assert np.all(np.abs(gv - 0.5) < 0.02) and np.allclose(gh, 0.5)
    assert np.dot(st.last_potential.prob, grid.cell_volumes()) == pytest.approx(1.0, abs=1e-9)


def test_tmc_negative_phase_matches_exact(rng):
    p = RbmParams.random(8, 3, rng, scale=0.5)
    basis = compute_pca(rng.integers(0, 2, (30, 8)), 1)
    grid = TetherGrid.regular((0,), 100.0, border=0.5, n_points=100)
    cfg = tr.TrainConfig(sampler="tmc", n_hidden=3, grid=grid, k_sweeps=2000, tmc_chains_per_node=4)
    st = tr.init_state(cfg, np.zeros((1, 8)), p.copy())
    gw, gv, gh = tr.negative_gradient_tmc(st, cfg, basis)
    ev, eh, evh = rbm.exact_moments(p)
    assert np.abs(gv - ev).max() < 0.01
    assert np.abs(gh - eh).max() < 0.01
    assert np.abs(gw - evh).max() < 0.01


def test_tmc_and_smc_agree_on_unimodal_model(rng):
    p = RbmParams.random(8, 3, rng, scale=0.3)
    basis = compute_pca(rng.integers(0, 2, (30, 8)), 1)
    grid = TetherGrid.regular((0,), 100.0, border=0.5, n_points=100)
    cfg = tr.TrainConfig(sampler="tmc", n_hidden=3, grid=grid, k_sweeps=1000, tmc_chains_per_node=4)
    st = tr.init_state(cfg, np.zeros((1, 8)), p.copy())
    _, tv, _ = tr.negative_gradient_tmc(st, cfg, basis)
    sm = _smc_state(p, 4000, seed=5)
    tr.negative_gradient_smc(sm, 50)
    _, sv, _ = tr.negative_gradient_smc(sm, 10)
    se = np.sqrt(sv * (1 - sv) / 4000)
    assert np.all(np.abs(tv - sv) < 3 * se + 0.005)


def test_tmc_requires_grid():
    with pytest.raises(ValueError):
        tr.TrainConfig(sampler="tmc", grid=None)


# ---------------------------------------------------------------- update rule

def test_sgd_update_cases(rng):
    p = RbmParams.random(4, 2, rng)
    pos = tuple(rng.normal(size=s) for s in ((4, 2), 4, 2))
    neg = tuple(rng.normal(size=s) for s in ((4, 2), 4, 2))
    assert tr.sgd_update(p, pos, neg, 0.0) == p
    assert tr.sgd_update(p, pos, pos, 0.3) == p
    q = tr.sgd_update(p, pos, neg, 0.1)
    assert np.allclose(q.w, p.w + 0.1 * (pos[0] - neg[0]))


def test_exact_step_increases_likelihood(rng):
    p = RbmParams.random(6, 3, rng, scale=0.5)
    X = rng.integers(0, 2, (12, 6))
    pos = tr.positive_gradient(X, p)
    ev, eh, evh = rbm.exact_moments(p)
    q = tr.sgd_update(p, pos, (evh, ev, eh), 1e-2)
    assert rbm.exact_log_likelihood(X, q) > rbm.exact_log_likelihood(X, p)


# ---------------------------------------------------------------- training loop

def _dataset(rng, n=10, rows=60):
    return (rng.random((rows, n)) < np.where(rng.random((rows, 1)) < 0.5, 0.2, 0.8)).astype(np.uint8)


def test_zero_updates_returns_initialization(rng):
    X = _dataset(rng)
    basis = compute_pca(X, 1)
    cfg = tr.TrainConfig(sampler="smc", n_updates=0, n_hidden=3)
    st, rows = tr.train(cfg, X, basis)
    init = tr.init_params(X, 3, tr.derive_rng(0, "init"))
    assert st.params == init and rows == [] and st.t_age == 0


def test_init_params_conventions(rng):
    X = _dataset(rng)
    p = tr.init_params(X, 5, np.random.default_rng(0))
    assert np.all(p.c == 0) and abs(p.w.std() - 0.01) < 0.005
    mu = X.mean(axis=0)
    assert np.allclose(1 / (1 + np.exp(-p.b)), mu)


@pytest.mark.parametrize("sampler", ["smc", "tmc"])
def test_training_is_deterministic(rng, sampler, tmp_path):
    X = _dataset(rng)
    basis = compute_pca(X, 1)
    grid = TetherGrid.regular((0,), 1e3, n_points=20)
    cfg = tr.TrainConfig(sampler=sampler, n_updates=15, n_hidden=3, n_chains=20, grid=grid,
                         minibatch_size=16, learning_rate=0.05, master_seed=3)
    a, ra = tr.train(cfg, X, basis)
    b, rb = tr.train(cfg, X, basis, checkpoint_dir=str(tmp_path))
    assert a.params == b.params
    assert [r["grad_norm_w"] for r in ra] == [r["grad_norm_w"] for r in rb]
    cfg2 = tr.TrainConfig(**{**cfg.__dict__, "threads": 3, "checkpoint_every": 5})
    c, _ = tr.train(cfg2, X, basis, checkpoint_dir=str(tmp_path))
    assert c.params == a.params and np.array_equal(c.smc_v, a.smc_v)
    assert (tmp_path / "model_000010.rbm").exists() and (tmp_path / "chains_000015.bin").exists()


def test_logging_rows(rng, tmp_path):
    X = _dataset(rng, n=8)
    basis = compute_pca(X, 1)
    cfg = tr.TrainConfig(sampler="smc", n_updates=6, n_hidden=3, loglik_every=2, learning_rate=0.1)
    st, rows = tr.train(cfg, X, basis)
    assert [r["t_age"] for r in rows] == list(range(1, 7))
    assert rows[0]["log_likelihood"] is None and rows[1]["log_likelihood"] is not None
    assert len(st.eigenvalue_log) == 6 and len(rows[0]["singular_values"]) == 3
    path = tmp_path / "log.csv"
    tr.write_train_log(rows, path)
    lines = path.read_text().splitlines()
    assert lines[0].split(",") == tr.LOG_COLUMNS and len(lines) == 7


def test_chain_sidecar_roundtrip(rng, tmp_path):
    X = _dataset(rng)
    basis = compute_pca(X, 1)
    grid = TetherGrid.regular((0,), 1e3, n_points=10)
    cfg = tr.TrainConfig(sampler="tmc", n_updates=3, n_hidden=4, n_chains=7, grid=grid,
                         tmc_chains_per_node=2)
    st, _ = tr.train(cfg, X, basis)
    path = tmp_path / "chains.bin"
    tr.save_chains(st, path)
    back = tr.load_chains(path)
    assert back["t_age"] == 3
    assert np.array_equal(back["smc_v"], st.smc_v) and np.array_equal(back["smc_h"], st.smc_h)
    assert np.array_equal(back["tmc_targets"], st.tmc_store.targets)
    assert np.array_equal(back["tmc_v"], st.tmc_store.V) and np.array_equal(back["tmc_h"], st.tmc_store.H)


def test_divergence_raises_numerical_error(rng, monkeypatch):
    X = _dataset(rng)
    real = tr.positive_gradient

    def poisoned(batch, params):
        gw, gb, gc = real(batch, params)
        gw = gw.copy()
        gw[0, 0] = np.inf
        return gw, gb, gc

    monkeypatch.setattr(tr, "positive_gradient", poisoned)
    cfg = tr.TrainConfig(sampler="smc", n_updates=5, n_hidden=2)
    with pytest.raises(tr.NumericalError, match="update 1"):
        tr.train(cfg, X, compute_pca(X, 1))


def test_config_validation():
    with pytest.raises(ValueError):
        tr.TrainConfig(sampler="cd")
    with pytest.raises(ValueError):
        tr.TrainConfig(sampler="smc", k_sweeps=0)
    with pytest.raises(ValueError):
        tr.TrainConfig(sampler="smc", k_sweeps=5, time_avg_window=6)

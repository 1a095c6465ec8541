"""Log-likelihood gradient ascent with persistent negative-phase chains.

The positive phase is computed analytically from the minibatch. The negative
phase comes either from persistent Glauber chains (``sampler="smc"``) or from
persistent tethered chains at every node of a grid (``sampler="tmc"``), whose
per-node averages are recombined into canonical moments through the
reconstructed density of the tethered magnetization.
"""
import csv
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .analyze import singular_values
from .rbm import (MAX_ENUM_VISIBLE, RbmParams, exact_log_likelihood, hidden_conditional, save_params,
                  smc_run)
from .seeding import derive_rng, derive_rngs
from .tmc import TetheredChainStore, TetherGrid, potential_from_gradient

SAMPLERS = ("smc", "tmc")
CHAINS_MAGIC = b"RBC1"
N_LOGGED_SV = 10


class NumericalError(RuntimeError):
    """Raised when the parameters stop being finite during training."""


@dataclass
class TrainConfig:
    sampler: str = "tmc"
    learning_rate: float = 1e-2
    k_sweeps: int = 10
    minibatch_size: int = 100
    n_updates: int = 481
    n_hidden: int = 20
    n_chains: int = 100
    tmc_chains_per_node: int = 1
    grid: TetherGrid | None = None
    time_avg_window: int | None = None
    master_seed: int = 0
    threads: int = 1
    init_weight_std: float = 0.01
    checkpoint_every: int = 0
    loglik_every: int = 0

    def __post_init__(self):
        if self.sampler not in SAMPLERS:
            raise ValueError(f"sampler must be one of {SAMPLERS}")
        if self.sampler == "tmc" and self.grid is None:
            raise ValueError("the tmc sampler needs a TetherGrid")
        for name in ("k_sweeps", "minibatch_size", "n_hidden", "n_chains", "tmc_chains_per_node"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.n_updates < 0 or self.learning_rate < 0:
            raise ValueError("n_updates and learning_rate must be non-negative")
        if self.time_avg_window is None:
            self.time_avg_window = self.k_sweeps
        if not 1 <= self.time_avg_window <= self.k_sweeps:
            raise ValueError("time_avg_window must lie in [1, k_sweeps]")


@dataclass
class TrainerState:
    params: RbmParams
    smc_v: np.ndarray
    smc_h: np.ndarray
    smc_rngs: list
    tmc_store: TetheredChainStore | None = None
    t_age: int = 0
    eigenvalue_log: list = field(default_factory=list)
    last_potential: object = None


# ---------------------------------------------------------------- gradients

def positive_gradient(minibatch, params):
    """Data moments <v h>_D, <v>_D, <h>_D with p(h|v) taken analytically."""
    V = np.asarray(minibatch, dtype=np.float64)
    if V.ndim == 1:
        V = V[None, :]
    ph = hidden_conditional(V, params)
    n = V.shape[0]
    return V.T @ ph / n, V.mean(axis=0), ph.mean(axis=0)


def _chain_moments(V, params):
    ph = hidden_conditional(V, params)
    n = V.shape[0]
    return V.T @ ph / n, V.mean(axis=0), ph.mean(axis=0)


def negative_gradient_smc(state, k_sweeps):
    """Advance the persistent Glauber chains and return their moments.

    Hidden moments use p(h|v) of the final visible states.
    """
    if k_sweeps:
        smc_run(state.smc_v, state.smc_h, state.params, state.smc_rngs, k_sweeps)
    return _chain_moments(state.smc_v, state.params)


def negative_gradient_tmc(state, config, basis):
    """Canonical moments recombined from persistent tethered chains.

    Every node's chains run ``k_sweeps`` sweeps; the last ``time_avg_window``
    of them are averaged. The resulting :class:`PotentialEstimate` is kept on
    ``state.last_potential``.
    """
    if config.grid is None or state.tmc_store is None:
        raise ValueError("tethered negative phase needs a grid and a chain store")
    store, grid, params = state.tmc_store, config.grid, state.params
    skip = config.k_sweeps - config.time_avg_window
    if skip:
        store.advance(params, basis, grid, skip, threads=config.threads)
    stats = store.advance(params, basis, grid, config.time_avg_window, accumulate=True,
                          threads=config.threads)
    mean_m = store.node_average(stats.mean_m)
    est = potential_from_gradient(grid, store.node_targets - mean_m, store.node_stderr(stats),
                                  mean_m=mean_m, mean_v=store.node_average(stats.mean_v),
                                  mean_h=store.node_average(stats.mean_h),
                                  mean_vh=store.node_average(stats.mean_vh))
    state.last_potential = est
    return est.canonical(est.mean_vh), est.canonical(est.mean_v), est.canonical(est.mean_h)


def sgd_update(params, pos_grad, neg_grad, learning_rate):
    """theta <- theta + learning_rate * (positive - negative)."""
    gw, gb, gc = (p - n for p, n in zip(pos_grad, neg_grad))
    return RbmParams(params.w + learning_rate * gw, params.b + learning_rate * gb,
                     params.c + learning_rate * gc)


# ---------------------------------------------------------------- training loop

def init_params(dataset, n_hidden, rng, weight_std=0.01):
    """Small Gaussian weights, visible fields at the logit of the column means, zero hidden fields."""
    X = np.asarray(dataset, dtype=np.float64)
    mean = np.clip(X.mean(axis=0), 1e-12, 1 - 1e-12)
    b = np.clip(np.log(mean) - np.log1p(-mean), -4.0, 4.0)
    return RbmParams(rng.normal(0.0, weight_std, (X.shape[1], n_hidden)), b, np.zeros(n_hidden))


def init_state(config, dataset, params=None):
    rng = derive_rng(config.master_seed, "init")
    if params is None:
        params = init_params(dataset, config.n_hidden, rng, config.init_weight_std)
    rngs = derive_rngs(config.master_seed, "smc", config.n_chains)
    V = np.empty((config.n_chains, params.n_visible))
    for j, r in enumerate(rngs):
        V[j] = r.random(params.n_visible) < 0.5
    store = None
    if config.sampler == "tmc":
        store = TetheredChainStore.for_grid(config.grid, config.tmc_chains_per_node, params.n_visible,
                                            params.n_hidden, config.master_seed, tag="tmc-train")
    return TrainerState(params, V, np.zeros((config.n_chains, params.n_hidden)), rngs, store)


class MinibatchSampler:
    """Minibatches drawn without replacement, reshuffled at the start of every epoch."""

    def __init__(self, n_rows, batch_size, rng):
        self.n_rows, self.batch_size, self.rng = n_rows, min(batch_size, n_rows), rng
        self._order = rng.permutation(n_rows)
        self._pos = 0

    def next(self):
        if self._pos + self.batch_size > self.n_rows:
            self._order = self.rng.permutation(self.n_rows)
            self._pos = 0
        idx = self._order[self._pos:self._pos + self.batch_size]
        self._pos += self.batch_size
        return idx


def _norm(x):
    return float(np.sqrt(np.sum(np.square(x))))


def train(config, dataset, basis, params=None, on_update=None, checkpoint_dir=None):
    """Run ``config.n_updates`` parameter updates; return ``(state, log_rows)``.

    ``on_update(state, row)`` is called after every update. When
    ``checkpoint_every`` and ``checkpoint_dir`` are both set, an RBM1 model and
    a chain-store sidecar are written at that interval.
    """
    data = np.asarray(dataset, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise ValueError("dataset must be a non-empty 2-D array")
    if basis.n_visible != data.shape[1]:
        raise ValueError("basis was computed for a different number of visible units")
    state = init_state(config, data, params)
    batches = MinibatchSampler(data.shape[0], config.minibatch_size,
                               derive_rng(config.master_seed, "minibatch"))
    exact_ok = state.params.n_visible <= MAX_ENUM_VISIBLE
    rows = []
    for _ in range(config.n_updates):
        batch = data[batches.next()]
        pos = positive_gradient(batch, state.params)
        if config.sampler == "smc":
            neg = negative_gradient_smc(state, config.k_sweeps)
        else:
            neg = negative_gradient_tmc(state, config, basis)
        new = sgd_update(state.params, pos, neg, config.learning_rate)
        if not new.is_finite():
            raise NumericalError(f"non-finite parameters after update {state.t_age + 1}")
        state.params = new
        state.t_age += 1
        sv = singular_values(state.params)
        state.eigenvalue_log.append(sv)
        row = {"t_age": state.t_age, "log_likelihood": None,
               "grad_norm_w": _norm(pos[0] - neg[0]), "grad_norm_b": _norm(pos[1] - neg[1]),
               "grad_norm_c": _norm(pos[2] - neg[2]), "singular_values": sv[:N_LOGGED_SV]}
        if exact_ok and config.loglik_every and state.t_age % config.loglik_every == 0:
            row["log_likelihood"] = exact_log_likelihood(data, state.params)
        rows.append(row)
        if on_update is not None:
            on_update(state, row)
        if checkpoint_dir and config.checkpoint_every and state.t_age % config.checkpoint_every == 0:
            write_checkpoint(state, checkpoint_dir, f"{state.t_age:06d}")
    return state, rows


# ---------------------------------------------------------------- persistence

def write_checkpoint(state, directory, label):
    os.makedirs(directory, exist_ok=True)
    save_params(state.params, os.path.join(directory, f"model_{label}.rbm"))
    save_chains(state, os.path.join(directory, f"chains_{label}.bin"))


def save_chains(state, path):
    """Chain-store sidecar: little-endian header of u64 counts, then u8 spins and f8 targets.

    Layout: ``RBC1``, t_age, n_smc, n_tmc, n_visible, n_hidden, dims, then SMC v,
    SMC h, TMC targets, TMC v, TMC h (all row-major).
    """
    nv, nh = state.params.n_visible, state.params.n_hidden
    store = state.tmc_store
    n_tmc = 0 if store is None else store.n_chains
    dims = 0 if store is None else store.targets.shape[1]
    with open(path, "wb") as fh:
        fh.write(CHAINS_MAGIC)
        fh.write(struct.pack("<6Q", state.t_age, state.smc_v.shape[0], n_tmc, nv, nh, dims))
        fh.write(state.smc_v.astype("u1").tobytes())
        fh.write(state.smc_h.astype("u1").tobytes())
        if store is not None:
            fh.write(np.ascontiguousarray(store.targets, dtype="<f8").tobytes())
            fh.write(store.V.astype("u1").tobytes())
            fh.write(store.H.astype("u1").tobytes())


def load_chains(path):
    """Return a dict with t_age, smc_v, smc_h, tmc_targets, tmc_v, tmc_h (float arrays)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHAINS_MAGIC:
        raise ValueError(f"{path}: not a chain-store file")
    t_age, n_smc, n_tmc, nv, nh, dims = struct.unpack_from("<6Q", blob, 4)
    pos = 4 + 48

    def take(n, dtype, shape):
        nonlocal pos
        size = int(np.prod(shape)) * np.dtype(dtype).itemsize
        arr = np.frombuffer(blob, dtype=dtype, count=int(np.prod(shape)), offset=pos).reshape(shape)
        pos += size
        return arr.astype(np.float64)

    out = {"t_age": t_age, "smc_v": take(n_smc, "u1", (n_smc, nv)), "smc_h": take(n_smc, "u1", (n_smc, nh))}
    out["tmc_targets"] = take(n_tmc, "<f8", (n_tmc, dims))
    out["tmc_v"] = take(n_tmc, "u1", (n_tmc, nv))
    out["tmc_h"] = take(n_tmc, "u1", (n_tmc, nh))
    if pos != len(blob):
        raise ValueError(f"{path}: unexpected trailing bytes")
    return out


LOG_COLUMNS = ["t_age", "log_likelihood", "grad_norm_w", "grad_norm_b", "grad_norm_c"] + [
    f"sv_{i}" for i in range(N_LOGGED_SV)]


def write_train_log(rows, path):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(LOG_COLUMNS)
        for r in rows:
            sv = list(r["singular_values"]) + [float("nan")] * (N_LOGGED_SV - len(r["singular_values"]))
            ll = "" if r["log_likelihood"] is None else format(r["log_likelihood"], ".17g")
            out.writerow([r["t_age"], ll] + [format(r[k], ".17g") for k in LOG_COLUMNS[2:5]]
                         + [format(x, ".17g") for x in sv[:N_LOGGED_SV]])

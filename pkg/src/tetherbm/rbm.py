"""Binary-binary restricted Boltzmann machine: energy, conditionals, Glauber sampling.

Conventions: ``w`` has shape ``(n_visible, n_hidden)``; spins live in {0, 1};
energies are ``E(v, h) = -v.w.h - b.v - c.h``. The exact routines enumerate
the visible layer and sum the hidden one analytically, so they are limited to
``n_visible <= MAX_ENUM_VISIBLE``.
"""
import struct
from dataclasses import dataclass

import numpy as np

from .seeding import draw_uniforms

MAX_ENUM_VISIBLE = 25
CHECKPOINT_MAGIC = b"RBM1"
_ENUM_CHUNK = 1 << 15
_UNIFORM_CHUNK_DOUBLES = 1 << 22


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def softplus(x):
    return np.logaddexp(0.0, x)


@dataclass
class RbmParams:
    w: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        self.w = np.ascontiguousarray(self.w, dtype=np.float64)
        self.b = np.ascontiguousarray(self.b, dtype=np.float64).reshape(-1)
        self.c = np.ascontiguousarray(self.c, dtype=np.float64).reshape(-1)
        if self.w.ndim != 2:
            raise ValueError(f"w must be a matrix, got shape {self.w.shape}")
        if self.w.shape != (self.b.size, self.c.size):
            raise ValueError(
                f"inconsistent shapes: w {self.w.shape}, b ({self.b.size},), c ({self.c.size},)")
        if self.b.size == 0 or self.c.size == 0:
            raise ValueError("n_visible and n_hidden must be positive")

    @property
    def n_visible(self):
        return self.b.size

    @property
    def n_hidden(self):
        return self.c.size

    @classmethod
    def zeros(cls, n_visible, n_hidden):
        return cls(np.zeros((n_visible, n_hidden)), np.zeros(n_visible), np.zeros(n_hidden))

    @classmethod
    def random(cls, n_visible, n_hidden, rng, scale=1.0):
        return cls(rng.normal(0.0, scale, (n_visible, n_hidden)),
                   rng.normal(0.0, scale, n_visible),
                   rng.normal(0.0, scale, n_hidden))

    def copy(self):
        return RbmParams(self.w.copy(), self.b.copy(), self.c.copy())

    def is_finite(self):
        return bool(np.isfinite(self.w).all() and np.isfinite(self.b).all()
                    and np.isfinite(self.c).all())

    def __eq__(self, other):
        if not isinstance(other, RbmParams):
            return NotImplemented
        return (np.array_equal(self.w, other.w) and np.array_equal(self.b, other.b)
                and np.array_equal(self.c, other.c))


@dataclass
class SpinState:
    v: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        self.v = _as_binary(self.v, "v")
        self.h = _as_binary(self.h, "h")

    def check(self, params):
        if self.v.shape != (params.n_visible,) or self.h.shape != (params.n_hidden,):
            raise ValueError(
                f"state shapes v{self.v.shape}, h{self.h.shape} do not match "
                f"RBM ({params.n_visible}, {params.n_hidden})")

    @classmethod
    def random(cls, params, rng):
        v = (rng.random(params.n_visible) < 0.5).astype(np.uint8)
        h = np.zeros(params.n_hidden, dtype=np.uint8)
        return cls(v, h)

    def copy(self):
        return SpinState(self.v.copy(), self.h.copy())


def _as_binary(x, name):
    arr = np.asarray(x)
    if arr.dtype != np.uint8:
        if not np.isin(arr, (0, 1)).all():
            raise ValueError(f"{name} must contain only 0 and 1")
        arr = arr.astype(np.uint8)
    elif arr.size and arr.max() > 1:
        raise ValueError(f"{name} must contain only 0 and 1")
    return arr


def _check_visible(v, params):
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != params.n_visible:
        raise ValueError(f"visible vector length {v.shape[-1]} != n_visible {params.n_visible}")
    return v


def _check_hidden(h, params):
    h = np.asarray(h, dtype=np.float64)
    if h.shape[-1] != params.n_hidden:
        raise ValueError(f"hidden vector length {h.shape[-1]} != n_hidden {params.n_hidden}")
    return h


def energy(state, params):
    """Energy of one configuration (or of row-aligned batches when v, h are 2-D)."""
    v = _check_visible(state.v, params)
    h = _check_hidden(state.h, params)
    return -np.einsum("...i,ia,...a->...", v, params.w, h) - v @ params.b - h @ params.c


def hidden_conditional(v, params):
    """p(h_a = 1 | v) for every hidden unit; accepts a single vector or a batch."""
    v = _check_visible(v, params)
    return sigmoid(params.c + v @ params.w)


def visible_conditional(h, params):
    """p(v_i = 1 | h) for every visible unit; accepts a single vector or a batch."""
    h = _check_hidden(h, params)
    return sigmoid(params.b + h @ params.w.T)


def smc_sweep(state, params, rng):
    """One alternating Gibbs sweep (hidden block, then visible block).

    Consumes ``n_hidden + n_visible`` uniforms from ``rng``; updates ``state``
    in place and returns it.
    """
    state.check(params)
    u = rng.random(params.n_hidden + params.n_visible)
    state.h = (u[:params.n_hidden] < hidden_conditional(state.v, params)).astype(np.uint8)
    state.v = (u[params.n_hidden:] < visible_conditional(state.h, params)).astype(np.uint8)
    return state


def smc_run(V, H, params, rngs, n_sweeps, observe=None):
    """Advance a batch of chains by ``n_sweeps`` alternating Gibbs sweeps.

    ``V`` and ``H`` are float arrays of shape ``(n_chains, n)`` updated in place;
    chain ``j`` consumes uniforms only from ``rngs[j]``, in exactly the order
    :func:`smc_sweep` would. ``observe(t, V, H)`` is called after every sweep.
    """
    n_chains = V.shape[0]
    if len(rngs) != n_chains or H.shape[0] != n_chains:
        raise ValueError("one random stream and one hidden row per chain required")
    nh, nv = params.n_hidden, params.n_visible
    width = nh + nv
    chunk = max(1, min(n_sweeps, _UNIFORM_CHUNK_DOUBLES // max(1, n_chains * width)))
    wt = params.w.T
    done = 0
    while done < n_sweeps:
        m = min(chunk, n_sweeps - done)
        U = draw_uniforms(rngs, m, width)
        for t in range(m):
            H[:] = U[:, t, :nh] < sigmoid(params.c + V @ params.w)
            V[:] = U[:, t, nh:] < sigmoid(params.b + H @ wt)
            if observe is not None:
                observe(done + t, V, H)
        done += m
    return V, H


# ---------------------------------------------------------------- exact oracles

def _guard(params):
    if params.n_visible > MAX_ENUM_VISIBLE:
        raise ValueError(
            f"exact enumeration limited to n_visible <= {MAX_ENUM_VISIBLE}, got {params.n_visible}")


def binary_configs(n, start=0, stop=None):
    """Rows ``start..stop`` of the 2**n binary configurations (bit i of the index -> unit i)."""
    stop = (1 << n) if stop is None else stop
    idx = np.arange(start, stop, dtype=np.int64)
    return ((idx[:, None] >> np.arange(n, dtype=np.int64)) & 1).astype(np.float64)


def _visible_chunks(n):
    total = 1 << n
    for start in range(0, total, _ENUM_CHUNK):
        yield binary_configs(n, start, min(total, start + _ENUM_CHUNK))


def visible_free_energy(v, params):
    """-log sum_h exp(-E(v, h)); vectorised over leading axes of ``v``."""
    v = _check_visible(v, params)
    return -(v @ params.b) - softplus(params.c + v @ params.w).sum(axis=-1)


def exact_log_partition(params):
    _guard(params)
    acc = -np.inf
    for V in _visible_chunks(params.n_visible):
        x = -visible_free_energy(V, params)
        top = x.max()
        acc = np.logaddexp(acc, top + np.log(np.exp(x - top).sum()))
    return float(acc)


def exact_visible_distribution(params):
    """All visible configurations with their exact marginal probabilities."""
    _guard(params)
    V = binary_configs(params.n_visible)
    logp = -visible_free_energy(V, params)
    logp -= logp.max()
    p = np.exp(logp)
    return V, p / p.sum()


def exact_moments(params):
    """Exact Boltzmann averages <v_i>, <h_a>, <v_i h_a>."""
    V, p = exact_visible_distribution(params)
    ph = hidden_conditional(V, params)
    return p @ V, p @ ph, np.einsum("m,mi,ma->ia", p, V, ph)


def exact_log_likelihood(dataset, params):
    _guard(params)
    data = _check_visible(dataset, params)
    if data.ndim == 1:
        data = data[None, :]
    return float(np.mean(-visible_free_energy(data, params)) - exact_log_partition(params))


# ---------------------------------------------------------------- checkpoints

def save_params(params, path):
    """Write the little-endian RBM1 checkpoint (header, then w row-major, b, c)."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<QQ", params.n_visible, params.n_hidden))
        for arr in (params.w, params.b, params.c):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_params(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not an RBM1 checkpoint")
    nv, nh = struct.unpack_from("<QQ", blob, 4)
    body = np.frombuffer(blob, dtype="<f8", offset=20)
    if body.size != nv * nh + nv + nh:
        raise ValueError(f"{path}: truncated or oversized checkpoint")
    w = body[:nv * nh].reshape(nv, nh)
    return RbmParams(w.astype(np.float64), body[nv * nh:nv * nh + nv].astype(np.float64),
                     body[nv * nh + nv:].astype(np.float64))

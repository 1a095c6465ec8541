"""Tethered Monte Carlo along one or two normalized PCA magnetizations.

A tethered chain pinned at ``m_hat`` samples

    omega(v, h, m_hat) = exp(-E(v, h) - alpha/2 * sum_l (m_hat_l - m_l(v))**2)

and the mean of ``m_hat - m(v)`` under that weight is the gradient of the
effective potential ``Omega``. Integrating it over a uniform grid of targets
gives ``Omega`` up to a constant, ``exp(-alpha * Omega)`` gives the density of
``m_hat``, and integrating the per-node (tethered) averages against that
density gives canonical Boltzmann averages.

Chains at different nodes never interact; each one draws only from its own
random stream, so results do not depend on how chains are batched or threaded.
"""
import csv
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .pca import magnetizations
from .rbm import SpinState, energy, exact_visible_distribution, hidden_conditional, sigmoid
from .seeding import derive_rng, derive_rngs, draw_uniforms

DEFAULT_ALPHA = 1e4
DEFAULT_BORDER = 0.1
DEFAULT_POINTS_1D = 250
DEFAULT_POINTS_2D = 64
DEFAULT_SWEEPS_PER_SAMPLE = 30
_UNIFORM_CHUNK_DOUBLES = 1 << 22
_N_BLOCKS = 10


def _tuple(x, n, cast=float):
    if np.ndim(x) == 0:
        return (cast(x),) * n
    out = tuple(cast(v) for v in x)
    if len(out) != n:
        raise ValueError(f"expected {n} values, got {len(out)}")
    return out


@dataclass(frozen=True)
class TetherGrid:
    """Uniform grid of tether targets in normalized magnetization units.

    ``alpha_strength == 0`` is accepted so that the unconstrained limit can be
    exercised; every physical use has ``alpha_strength > 0``.
    """
    component_indices: tuple = (0,)
    alpha_strength: float = DEFAULT_ALPHA
    m_min: tuple = (-DEFAULT_BORDER,)
    m_max: tuple = (1 + DEFAULT_BORDER,)
    n_points: tuple = (DEFAULT_POINTS_1D,)
    border: tuple = (DEFAULT_BORDER,)

    def __post_init__(self):
        k = len(tuple(np.atleast_1d(self.component_indices)))
        if k not in (1, 2):
            raise ValueError("only 1 or 2 tethered directions are supported")
        object.__setattr__(self, "component_indices", _tuple(self.component_indices, k, int))
        for name in ("m_min", "m_max", "border"):
            object.__setattr__(self, name, _tuple(getattr(self, name), k))
        object.__setattr__(self, "n_points", _tuple(self.n_points, k, int))
        object.__setattr__(self, "alpha_strength", float(self.alpha_strength))
        if not self.alpha_strength >= 0:
            raise ValueError("alpha_strength must be non-negative")
        if any(lo >= hi for lo, hi in zip(self.m_min, self.m_max)):
            raise ValueError("m_min must be below m_max in every direction")
        if any(n < 2 for n in self.n_points):
            raise ValueError("need at least 2 grid points per direction")

    @classmethod
    def regular(cls, component_indices=(0,), alpha_strength=DEFAULT_ALPHA, border=DEFAULT_BORDER,
                n_points=None):
        """Grid over ``[-border, 1 + border]`` in each tethered direction."""
        idx = tuple(np.atleast_1d(component_indices).tolist())
        k = len(idx)
        if n_points is None:
            n_points = DEFAULT_POINTS_1D if k == 1 else DEFAULT_POINTS_2D
        b = _tuple(border, k)
        return cls(idx, alpha_strength, tuple(-x for x in b), tuple(1 + x for x in b),
                   _tuple(n_points, k, int), b)

    @property
    def dims(self):
        return len(self.component_indices)

    @property
    def shape(self):
        return self.n_points

    @property
    def n_nodes(self):
        return int(np.prod(self.n_points))

    @property
    def axes(self):
        return [np.linspace(lo, hi, n) for lo, hi, n in zip(self.m_min, self.m_max, self.n_points)]

    @property
    def spacing(self):
        return tuple((hi - lo) / (n - 1) for lo, hi, n in zip(self.m_min, self.m_max, self.n_points))

    def nodes(self):
        """Node coordinates, shape (n_nodes, dims), last direction varying fastest."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def cell_volumes(self):
        """Trapezoid quadrature weights per node (half cells on the boundary)."""
        w = np.ones(self.n_points)
        for d, (n, h) in enumerate(zip(self.n_points, self.spacing)):
            wd = np.full(n, h)
            wd[[0, -1]] = h / 2
            shape = [1] * self.dims
            shape[d] = n
            w = w * wd.reshape(shape)
        return w.ravel()


@dataclass
class TetheredChain:
    state: SpinState
    target: np.ndarray
    rng: np.random.Generator

    def __post_init__(self):
        self.target = np.atleast_1d(np.asarray(self.target, dtype=np.float64))


def tethered_log_weight(state, target, params, basis, grid):
    """``-E(v, h) - alpha/2 * |m_hat - m(v)|**2`` with normalized magnetizations."""
    target = np.atleast_1d(np.asarray(target, dtype=np.float64))
    if target.size != grid.dims:
        raise ValueError(f"target has {target.size} entries, grid has {grid.dims} directions")
    m = magnetizations(state.v[None, :], basis, grid.component_indices)[0]
    return float(-energy(state, params) - 0.5 * grid.alpha_strength * np.sum((target - m) ** 2))


def _kernel_args(params, basis, grid):
    A, offset = basis.tether_coefficients(grid.component_indices)
    if A.shape[1] != params.n_visible:
        raise ValueError("basis dimension does not match n_visible")
    return A, np.ascontiguousarray(offset)


def tmc_sweep(chain, params, basis, grid):
    """One tethered sweep: hidden block redraw, then sequential visible heat-bath.

    Updates ``chain`` in place and returns it.
    """
    chain.state.check(params)
    A, offset = _kernel_args(params, basis, grid)
    V = chain.state.v[None, :].astype(np.float64)
    H = chain.state.h[None, :].astype(np.float64)
    PH = np.ascontiguousarray(hidden_conditional(V, params))
    S = np.ascontiguousarray(V @ A.T)
    targets = chain.target[None, :].copy()
    U = chain.rng.random((1, 1, params.n_hidden + params.n_visible))
    trace = np.empty((1, 1, grid.dims))
    kernels.tmc_sweeps(V, H, PH, S, targets, params.w, params.b, params.c, A, offset,
                       grid.alpha_strength, U, trace)
    chain.state = SpinState(V[0].astype(np.uint8), H[0].astype(np.uint8))
    return chain


@dataclass
class ChainStats:
    """Per-chain time averages over the accumulated sweeps."""
    n_sweeps: int
    mean_m: np.ndarray              # (n_chains, k)
    block_m: np.ndarray             # (n_chains, n_blocks, k): means of consecutive blocks
    mean_v: np.ndarray | None = None
    mean_h: np.ndarray | None = None
    mean_vh: np.ndarray | None = None


class TetheredChainStore:
    """A batch of tethered chains, ``chains_per_node`` of them at every grid node.

    Chain ``node * chains_per_node + r`` is pinned at ``targets[node]`` and owns
    stream ``derive_rng(seed, tag, chain_index)``. The store persists between
    calls, which is what persistent (PCD-style) tethered training relies on.
    """

    def __init__(self, targets, chains_per_node, n_visible, n_hidden, seed=0, tag="tmc"):
        targets = np.atleast_2d(np.asarray(targets, dtype=np.float64))
        self.node_targets = targets
        self.chains_per_node = int(chains_per_node)
        if self.chains_per_node < 1:
            raise ValueError("chains_per_node must be >= 1")
        self.targets = np.ascontiguousarray(np.repeat(targets, self.chains_per_node, axis=0))
        n = self.targets.shape[0]
        self.rngs = derive_rngs(seed, tag, n)
        self.V = np.empty((n, n_visible))
        for j, rng in enumerate(self.rngs):
            self.V[j] = rng.random(n_visible) < 0.5
        self.H = np.zeros((n, n_hidden))
        self.sweeps_done = 0

    @classmethod
    def for_grid(cls, grid, chains_per_node, n_visible, n_hidden, seed=0, tag="tmc"):
        return cls(grid.nodes(), chains_per_node, n_visible, n_hidden, seed, tag)

    @property
    def n_chains(self):
        return self.targets.shape[0]

    @property
    def n_nodes(self):
        return self.node_targets.shape[0]

    def states(self):
        return [SpinState(v.astype(np.uint8), h.astype(np.uint8)) for v, h in zip(self.V, self.H)]

    def advance(self, params, basis, grid, n_sweeps, accumulate=False, threads=1):
        """Run ``n_sweeps`` sweeps on every chain and return their :class:`ChainStats`."""
        if self.V.shape[1] != params.n_visible or self.H.shape[1] != params.n_hidden:
            raise ValueError("chain store does not match the RBM dimensions")
        if self.targets.shape[1] != grid.dims:
            raise ValueError("chain targets do not match the grid dimensionality")
        A, offset = _kernel_args(params, basis, grid)
        nc, k = self.n_chains, grid.dims
        nv, nh = params.n_visible, params.n_hidden
        PH = np.ascontiguousarray(sigmoid(params.c + self.V @ params.w))
        S = np.ascontiguousarray(self.V @ A.T)
        sum_m = np.zeros((nc, k))
        n_blocks = max(1, min(_N_BLOCKS, n_sweeps))
        block_sum = np.zeros((nc, n_blocks, k))
        block_len = np.zeros(n_blocks)
        acc = (np.zeros((nc, nv)), np.zeros((nc, nh)), np.zeros((nc, nv, nh))) if accumulate else (None,) * 3
        chunk = max(1, min(n_sweeps, _UNIFORM_CHUNK_DOUBLES // max(1, nc * (nh + nv))))
        done = 0
        while done < n_sweeps:
            m = min(chunk, n_sweeps - done)
            U = draw_uniforms(self.rngs, m, nh + nv)
            trace = np.empty((nc, m, k))
            kernels.tmc_sweeps(self.V, self.H, PH, S, self.targets, params.w, params.b, params.c,
                               A, offset, grid.alpha_strength, U, trace, *acc, n_threads=threads)
            sum_m += trace.sum(axis=1)
            blk = (np.arange(done, done + m) * n_blocks) // max(1, n_sweeps)
            for bidx in np.unique(blk):
                sel = blk == bidx
                block_sum[:, bidx] += trace[:, sel].sum(axis=1)
                block_len[bidx] += sel.sum()
            done += m
        self.sweeps_done += n_sweeps
        T = max(1, n_sweeps)
        stats = ChainStats(n_sweeps, sum_m / T, block_sum / np.maximum(block_len, 1)[None, :, None])
        if accumulate:
            stats.mean_v, stats.mean_h, stats.mean_vh = (a / T for a in acc)
        return stats

    def node_average(self, per_chain):
        """Average a per-chain array over the replicas of each node."""
        shape = (self.n_nodes, self.chains_per_node) + per_chain.shape[1:]
        return per_chain.reshape(shape).mean(axis=1)

    def node_stderr(self, stats):
        """Standard error of the per-node mean magnetization.

        Uses the spread of per-chain means when a node has several replicas,
        and block means of the single chain otherwise.
        """
        M = self.chains_per_node
        if M >= 2:
            per = stats.mean_m.reshape(self.n_nodes, M, -1)
            return per.std(axis=1, ddof=1) / np.sqrt(M)
        blocks = stats.block_m.reshape(self.n_nodes, stats.block_m.shape[1], -1)
        nb = blocks.shape[1]
        if nb < 2:
            return np.full((self.n_nodes, blocks.shape[2]), np.nan)
        return blocks.std(axis=1, ddof=1) / np.sqrt(nb)


@dataclass
class OmegaPrimeEstimate:
    grad: np.ndarray
    stderr: np.ndarray
    mean_m: np.ndarray
    mean_v: np.ndarray
    mean_h: np.ndarray
    mean_vh: np.ndarray


def estimate_omega_prime(target, params, basis, grid, n_chains=4, n_sweeps=1000, burn_in=100,
                         seed=0, threads=1):
    """Replica-and-time average of ``m_hat - m(v)`` at a single target."""
    if n_chains < 1 or n_sweeps < 1:
        raise ValueError("n_chains and n_sweeps must be >= 1")
    target = np.atleast_1d(np.asarray(target, dtype=np.float64))
    store = TetheredChainStore(target[None, :], n_chains, params.n_visible, params.n_hidden, seed)
    if burn_in:
        store.advance(params, basis, grid, burn_in, threads=threads)
    stats = store.advance(params, basis, grid, n_sweeps, accumulate=True, threads=threads)
    mean_m = store.node_average(stats.mean_m)[0]
    return OmegaPrimeEstimate(target - mean_m, store.node_stderr(stats)[0], mean_m,
                              store.node_average(stats.mean_v)[0],
                              store.node_average(stats.mean_h)[0],
                              store.node_average(stats.mean_vh)[0])


# ---------------------------------------------------------------- integration

def _cumtrapz(y, h, axis=0):
    y = np.moveaxis(np.asarray(y, dtype=np.float64), axis, 0)
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * h * (y[1:] + y[:-1]), axis=0)
    return np.moveaxis(out, 0, axis)


def integrate_potential_1d(omega_prime, spacing):
    """Cumulative trapezoid integral of ``Omega'`` on a uniform grid, ``Omega[0] = 0``."""
    return _cumtrapz(np.asarray(omega_prime, dtype=np.float64).reshape(-1), spacing)


def integrate_potential_2d(grad_1, grad_2, spacing):
    """Integrate a 2-D gradient field along the two axis-ordered paths from the corner.

    Path A runs along direction 1 at the lowest direction-2 value and then along
    direction 2; path B does the reverse. Returns ``((A + B) / 2, |A - B|)``,
    both shaped like the grid.
    """
    g1 = np.asarray(grad_1, dtype=np.float64)
    g2 = np.asarray(grad_2, dtype=np.float64)
    h1, h2 = spacing
    path_a = _cumtrapz(g1[:, 0], h1)[:, None] + _cumtrapz(g2, h2, axis=1)
    path_b = _cumtrapz(g2[0, :], h2)[None, :] + _cumtrapz(g1, h1, axis=0)
    return 0.5 * (path_a + path_b), np.abs(path_a - path_b)


def reconstruct_probability(omega, alpha_strength, cell_volumes):
    """``exp(-alpha * (Omega - min Omega))`` normalized against the quadrature weights."""
    omega = np.asarray(omega, dtype=np.float64).reshape(-1)
    logp = -alpha_strength * (omega - omega.min())
    p = np.exp(logp)
    return p / np.dot(p, cell_volumes)


def canonical_average(node_means, prob, cell_volumes):
    """Quadrature of per-node tethered averages against the density of ``m_hat``."""
    weights = np.asarray(prob, dtype=np.float64).reshape(-1) * cell_volumes
    return np.tensordot(weights, np.asarray(node_means, dtype=np.float64), axes=(0, 0))


# ---------------------------------------------------------------- scans

@dataclass(frozen=True)
class ScanConfig:
    n_chains: int = 4
    n_sweeps: int = 1000
    burn_in: int = 100
    seed: int = 0
    threads: int = 1


@dataclass
class PotentialEstimate:
    grid: object
    omega_prime: np.ndarray                 # (n_nodes, dims)
    omega_prime_stderr: np.ndarray          # (n_nodes, dims)
    omega: np.ndarray                       # (n_nodes,)
    prob: np.ndarray                        # (n_nodes,)
    mean_m: np.ndarray | None = None        # (n_nodes, dims)
    mean_v: np.ndarray | None = None
    mean_h: np.ndarray | None = None
    mean_vh: np.ndarray | None = None
    path_discrepancy: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def cell_volumes(self):
        return self.grid.cell_volumes()

    def canonical(self, node_means):
        return canonical_average(node_means, self.prob, self.cell_volumes)

    def node_masses(self):
        return self.prob * self.cell_volumes

    def omega_stderr(self):
        """Propagated standard error of ``Omega`` (1-D: independent-node trapezoid sum)."""
        if self.grid.dims != 1:
            raise NotImplementedError("omega_stderr is only defined for 1-D grids")
        h = self.grid.spacing[0]
        s = self.omega_prime_stderr[:, 0]
        var = np.zeros_like(s)
        for i in range(1, s.size):
            w_i = np.full(i + 1, h)
            w_i[[0, -1]] = h / 2
            var[i] = np.sum((w_i * s[:i + 1]) ** 2)
        return np.sqrt(var)


def potential_from_gradient(grid, omega_prime, stderr=None, **moments):
    """Integrate per-node gradient estimates into a :class:`PotentialEstimate`."""
    omega_prime = np.asarray(omega_prime, dtype=np.float64).reshape(grid.n_nodes, grid.dims)
    stderr = np.zeros_like(omega_prime) if stderr is None else np.asarray(stderr).reshape(omega_prime.shape)
    discrepancy = None
    if grid.dims == 1:
        omega = integrate_potential_1d(omega_prime[:, 0], grid.spacing[0])
    else:
        g1 = omega_prime[:, 0].reshape(grid.shape)
        g2 = omega_prime[:, 1].reshape(grid.shape)
        omega, discrepancy = integrate_potential_2d(g1, g2, grid.spacing)
        omega, discrepancy = omega.ravel(), discrepancy.ravel()
    prob = reconstruct_probability(omega, grid.alpha_strength, grid.cell_volumes())
    return PotentialEstimate(grid, omega_prime, stderr, omega, prob, path_discrepancy=discrepancy,
                             **moments)


def run_potential_scan(params, basis, grid, config=ScanConfig(), store=None):
    """Estimate ``Omega'`` at every node and reconstruct ``Omega`` and ``p(m_hat)``.

    A supplied ``store`` (one built with :meth:`TetheredChainStore.for_grid`) is
    advanced in place instead of starting fresh chains.
    """
    if store is None:
        store = TetheredChainStore.for_grid(grid, config.n_chains, params.n_visible,
                                            params.n_hidden, config.seed)
    elif store.n_nodes != grid.n_nodes:
        raise ValueError("chain store was built for a different grid")
    if config.burn_in:
        store.advance(params, basis, grid, config.burn_in, threads=config.threads)
    stats = store.advance(params, basis, grid, config.n_sweeps, accumulate=True,
                          threads=config.threads)
    mean_m = store.node_average(stats.mean_m)
    return potential_from_gradient(
        grid, store.node_average(store.targets) - mean_m, store.node_stderr(stats),
        mean_m=mean_m, mean_v=store.node_average(stats.mean_v),
        mean_h=store.node_average(stats.mean_h), mean_vh=store.node_average(stats.mean_vh))


def tmc_generate_samples(params, basis, estimate, n_samples, sweeps_per_sample=DEFAULT_SWEEPS_PER_SAMPLE,
                         seed=0, threads=1):
    """Draw targets from ``p(m_hat)`` and return the visible states of short tethered runs.

    Targets are grid nodes drawn with their quadrature mass, jittered uniformly
    within the cell; each chain starts from independent fair coin flips.
    Returns ``(samples, targets)`` with ``samples`` of dtype uint8.
    """
    grid = estimate.grid
    if n_samples == 0:
        return np.zeros((0, params.n_visible), dtype=np.uint8), np.zeros((0, grid.dims))
    rng = derive_rng(seed, "tmc-targets")
    mass = estimate.node_masses()
    node = rng.choice(grid.n_nodes, size=n_samples, p=mass / mass.sum())
    targets = grid.nodes()[node]
    h = np.asarray(grid.spacing)
    targets = targets + rng.uniform(-0.5, 0.5, size=targets.shape) * h
    targets = np.clip(targets, grid.m_min, grid.m_max)
    store = TetheredChainStore(targets, 1, params.n_visible, params.n_hidden, seed, tag="tmc-sample")
    store.advance(params, basis, grid, sweeps_per_sample, threads=threads)
    return store.V.astype(np.uint8), targets


# ---------------------------------------------------------------- exact oracle

def exact_tethered_averages(params, basis, grid):
    """Enumerate every visible state and integrate out h to obtain exact node averages.

    Returns a :class:`PotentialEstimate` built from the exact ``Omega'`` (so its
    reconstruction still carries the grid's quadrature error) together with
    the exact tethered ``<v>``, ``<h>``, ``<v h>`` and ``<m>`` per node.
    """
    V, p = exact_visible_distribution(params)
    m = magnetizations(V, basis, grid.component_indices)
    ph = hidden_conditional(V, params)
    nodes = grid.nodes()
    logp = np.log(np.maximum(p, 1e-300))
    out_m, out_v, out_h, out_vh = [], [], [], []
    for target in nodes:
        lw = logp - 0.5 * grid.alpha_strength * np.sum((target - m) ** 2, axis=1)
        w = np.exp(lw - lw.max())
        w /= w.sum()
        out_m.append(w @ m)
        out_v.append(w @ V)
        out_h.append(w @ ph)
        out_vh.append(np.einsum("n,ni,na->ia", w, V, ph))
    mean_m = np.array(out_m)
    return potential_from_gradient(grid, nodes - mean_m, mean_m=mean_m, mean_v=np.array(out_v),
                                   mean_h=np.array(out_h), mean_vh=np.array(out_vh))


def exact_magnetization_distribution(params, basis, component_indices):
    """Exact law of the normalized magnetizations: (values (2**n_v, k), probabilities)."""
    V, p = exact_visible_distribution(params)
    return magnetizations(V, basis, component_indices), p


# ---------------------------------------------------------------- files

def save_potential_csv(estimate, path):
    g = estimate.grid
    nodes = g.nodes()
    fmt = lambda x: format(float(x), ".17g")  # noqa: E731
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        if g.dims == 1:
            out.writerow(["m_hat", "omega_prime", "omega_prime_stderr", "omega", "prob", "mean_m"])
            mean_m = estimate.mean_m if estimate.mean_m is not None else np.full((g.n_nodes, 1), np.nan)
            for i in range(g.n_nodes):
                out.writerow([fmt(x) for x in (nodes[i, 0], estimate.omega_prime[i, 0],
                                               estimate.omega_prime_stderr[i, 0], estimate.omega[i],
                                               estimate.prob[i], mean_m[i, 0])])
        else:
            out.writerow(["m_hat_1", "m_hat_2", "grad_1", "grad_2", "omega", "prob", "path_discrepancy"])
            for i in range(g.n_nodes):
                out.writerow([fmt(x) for x in (nodes[i, 0], nodes[i, 1], estimate.omega_prime[i, 0],
                                               estimate.omega_prime[i, 1], estimate.omega[i],
                                               estimate.prob[i], estimate.path_discrepancy[i])])


def load_potential_csv(path, alpha_strength=DEFAULT_ALPHA, component_indices=None):
    """Read a potential CSV back; the grid is rebuilt from the node coordinates."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = np.array([[float(x) for x in r] for r in reader])
    if header[0] == "m_hat":
        axis = rows[:, 0]
        grid = TetherGrid(component_indices or (0,), alpha_strength, (axis[0],), (axis[-1],),
                          (axis.size,), (0.0,))
        return PotentialEstimate(grid, rows[:, 1:2], rows[:, 2:3], rows[:, 3], rows[:, 4],
                                 mean_m=rows[:, 5:6])
    if header[:2] == ["m_hat_1", "m_hat_2"]:
        ax1, ax2 = np.unique(rows[:, 0]), np.unique(rows[:, 1])
        grid = TetherGrid(component_indices or (0, 1), alpha_strength, (ax1[0], ax2[0]),
                          (ax1[-1], ax2[-1]), (ax1.size, ax2.size), (0.0, 0.0))
        return PotentialEstimate(grid, rows[:, 2:4], np.zeros((rows.shape[0], 2)), rows[:, 4],
                                 rows[:, 5], path_discrepancy=rows[:, 6])
    raise ValueError(f"{path}: unrecognised potential CSV header")

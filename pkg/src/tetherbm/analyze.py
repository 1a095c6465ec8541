"""Diagnostics: autocorrelation times, projection histograms, spectra, distances."""
import csv
from dataclasses import dataclass

import numpy as np

from .pca import normalize_projection, project

WINDOW_FACTOR = 6


@dataclass
class TimeSeries:
    values: np.ndarray
    dt: float = 1.0


@dataclass
class AutocorrResult:
    tau_int: float
    window: int
    reliable: bool


def integrated_autocorr_time(series, dt=None):
    """Integrated autocorrelation time with self-consistent truncation.

    ``tau(W) = 1/2 + sum_{t=1..W} rho(t)`` where ``W`` is the first lag with
    ``W >= 6 * tau(W)``. The estimate is flagged unreliable when the window
    exceeds a tenth of the series or the series has no variance (``tau_int``
    is then NaN).
    """
    if isinstance(series, TimeSeries):
        values, step = series.values, series.dt
    else:
        values, step = series, 1.0
    if dt is not None:
        step = dt
    x = np.asarray(values, dtype=np.float64).reshape(-1)
    n = x.size
    if n < 2:
        return AutocorrResult(float("nan"), 0, False)
    x = x - x.mean()
    var = x @ x / n
    if not var > 0:
        return AutocorrResult(float("nan"), 0, False)
    tau = 0.5
    window = 0
    for t in range(1, n):
        tau += (x[:-t] @ x[t:]) / (n * var)
        if t >= WINDOW_FACTOR * tau:
            window = t
            break
    else:
        return AutocorrResult(tau * step, n - 1, False)
    return AutocorrResult(tau * step, window, window <= n / 10)


@dataclass
class Histogram:
    edges: np.ndarray
    density: np.ndarray

    @property
    def widths(self):
        return np.diff(self.edges)

    @property
    def masses(self):
        return self.density * self.widths


def histogram_from_masses(values, masses, edges):
    """Bin weighted points into a density histogram on ``edges`` (renormalized to 1)."""
    edges = np.asarray(edges, dtype=np.float64)
    counts, _ = np.histogram(np.asarray(values, dtype=np.float64), bins=edges,
                             weights=np.asarray(masses, dtype=np.float64))
    total = counts.sum()
    if total > 0:
        counts = counts / total
    return Histogram(edges, counts / np.diff(edges))


def projection_histogram(samples, basis, alpha, n_bins, range=None, normalized=False):
    """Density histogram of the magnetizations of ``samples`` along ``alpha``.

    Samples falling outside ``range`` are dropped before normalization.
    ``normalized=True`` bins the rescaled magnetization instead of the raw one.
    """
    m = project(samples, basis, alpha)
    if normalized:
        m = normalize_projection(m, basis, alpha)
    if range is None:
        lo, hi = float(m.min()), float(m.max())
        if lo == hi:
            lo, hi = lo - 0.5, hi + 0.5
        range = (lo, hi)
    edges = np.linspace(range[0], range[1], n_bins + 1)
    return histogram_from_masses(m, np.ones_like(m), edges)


def singular_values(params):
    return np.linalg.svd(params.w, compute_uv=False)


def distribution_distance(h1, h2):
    """(total variation, Kolmogorov-Smirnov) distance of two histograms on shared bins."""
    if h1.edges.shape != h2.edges.shape or not np.allclose(h1.edges, h2.edges):
        raise ValueError("histograms must share the same bins")
    p1, p2 = h1.masses, h2.masses
    tv = 0.5 * np.abs(p1 - p2).sum()
    ks = np.abs(np.cumsum(p1) - np.cumsum(p2)).max() if p1.size else 0.0
    return float(tv), float(ks)


def split_masses(values, masses, cuts):
    """Total mass falling in each interval delimited by the sorted ``cuts``."""
    idx = np.searchsorted(np.asarray(cuts, dtype=np.float64), np.asarray(values), side="right")
    return np.bincount(idx, weights=np.asarray(masses, dtype=np.float64), minlength=len(cuts) + 1)


def nearest_mode(values, centers):
    """Index of the closest center for every value (last axis = coordinates)."""
    v = np.asarray(values, dtype=np.float64)
    c = np.asarray(centers, dtype=np.float64)
    if v.ndim == 1 or c.ndim == 1:
        return np.abs(v[..., None] - c.reshape(-1)).argmin(axis=-1)
    return np.linalg.norm(v[..., None, :] - c, axis=-1).argmin(axis=-1)


def visited_modes(trajectories, centers, tolerance=None):
    """Number of distinct modes visited by each chain of ``trajectories`` (n_chains, T).

    A time point counts as a visit to its nearest center only when it lies
    within ``tolerance`` of it; points in between modes are ignored.
    """
    traj = np.asarray(trajectories, dtype=np.float64)
    c = np.asarray(centers, dtype=np.float64).reshape(-1)
    d = np.abs(traj[..., None] - c)
    near = d.argmin(axis=-1)
    if tolerance is not None:
        near = np.where(d.min(axis=-1) <= tolerance, near, -1)
    return np.array([np.unique(row[row >= 0]).size for row in near])


def save_histogram_csv(hist, path):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["bin_left", "bin_right", "density"])
        for lo, hi, d in zip(hist.edges[:-1], hist.edges[1:], hist.density):
            out.writerow([format(lo, ".17g"), format(hi, ".17g"), format(d, ".17g")])


def save_tau_csv(results, path):
    """``results``: iterable of ``(series_id, AutocorrResult)``."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["series_id", "tau_int", "window", "reliable"])
        for sid, r in results:
            out.writerow([sid, format(r.tau_int, ".17g"), r.window, int(r.reliable)])

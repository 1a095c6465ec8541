"""Principal directions of a binary dataset and the magnetizations built on them.

The basis is extracted from the centered data, but magnetizations are taken on
the raw configuration, ``m_alpha(v) = v . omega_alpha / sqrt(n_visible)``.
``normalize_projection`` rescales a raw magnetization so the training-set
extrema map to 0 and 1.
"""
import csv
from dataclasses import dataclass

import numpy as np

ORTHONORMAL_TOL = 1e-8


@dataclass(frozen=True)
class PcaBasis:
    components: np.ndarray   # (n_components, n_visible), rows orthonormal
    eigenvalues: np.ndarray  # descending
    proj_min: np.ndarray     # raw projection extrema over the training set
    proj_max: np.ndarray
    mean: np.ndarray | None = None

    def __post_init__(self):
        comps = np.atleast_2d(np.asarray(self.components, dtype=np.float64))
        object.__setattr__(self, "components", comps)
        for name in ("eigenvalues", "proj_min", "proj_max"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64).reshape(-1))
        k = comps.shape[0]
        if not (self.eigenvalues.size == self.proj_min.size == self.proj_max.size == k):
            raise ValueError("one eigenvalue and one projection range per component required")
        if np.any(self.proj_max <= self.proj_min):
            raise ValueError("proj_max must exceed proj_min for every component")
        gram = comps @ comps.T
        if np.abs(gram - np.eye(k)).max() > ORTHONORMAL_TOL:
            raise ValueError("components are not orthonormal")

    @property
    def n_components(self):
        return self.components.shape[0]

    @property
    def n_visible(self):
        return self.components.shape[1]

    def scale(self, alpha):
        return self.proj_max[alpha] - self.proj_min[alpha]

    def tether_coefficients(self, indices):
        """Affine form of the normalized magnetizations: ``m(v) = A @ v - offset``."""
        idx = list(indices)
        span = self.proj_max[idx] - self.proj_min[idx]
        A = self.components[idx] / (np.sqrt(self.n_visible) * span[:, None])
        return np.ascontiguousarray(A), self.proj_min[idx] / span


def compute_pca(dataset, n_components):
    """Leading eigenpairs of the covariance of the centered dataset.

    Each direction is oriented so its largest-magnitude entry is positive.
    Raises ``ValueError`` when fewer than ``n_components`` directions carry
    variance (this includes datasets made of identical rows).
    """
    X = np.asarray(dataset, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("need a 2-D dataset with at least two rows")
    M, n = X.shape
    if not 1 <= n_components <= min(M, n):
        raise ValueError(f"n_components must lie in [1, {min(M, n)}], got {n_components}")
    mean = X.mean(axis=0)
    Xc = X - mean
    cov = Xc.T @ Xc / (M - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    tol = 1e-12 * max(1.0, float(np.trace(cov)))
    rank = int(np.sum(evals > tol))
    if n_components > rank:
        const = np.flatnonzero(Xc.std(axis=0) == 0)
        raise ValueError(
            f"dataset has only {rank} direction(s) with nonzero variance, {n_components} requested"
            f"; constant columns: {const.tolist()}")
    comps = evecs[:, :n_components].T.copy()
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    raw = X @ comps.T / np.sqrt(n)
    return PcaBasis(comps, evals[:n_components], raw.min(axis=0), raw.max(axis=0), mean)


def project(v, basis, alpha):
    """Raw magnetization ``v . omega_alpha / sqrt(n_visible)``; ``v`` may be a batch."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != basis.n_visible:
        raise ValueError(f"vector length {v.shape[-1]} != basis dimension {basis.n_visible}")
    return v @ basis.components[alpha] / np.sqrt(basis.n_visible)


def normalize_projection(m, basis, alpha):
    return (np.asarray(m, dtype=np.float64) - basis.proj_min[alpha]) / basis.scale(alpha)


def denormalize_projection(x, basis, alpha):
    return np.asarray(x, dtype=np.float64) * basis.scale(alpha) + basis.proj_min[alpha]


def magnetizations(V, basis, indices):
    """Normalized magnetizations of every row of ``V`` along ``indices``, shape (n, k)."""
    A, offset = basis.tether_coefficients(indices)
    return np.asarray(V, dtype=np.float64) @ A.T - offset


def save_basis_csv(basis, path):
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["alpha", "eigenvalue", "proj_min", "proj_max"]
                     + [f"w{i}" for i in range(basis.n_visible)])
        for a in range(basis.n_components):
            out.writerow([a] + [format(x, ".17g") for x in
                                (basis.eigenvalues[a], basis.proj_min[a], basis.proj_max[a],
                                 *basis.components[a])])


def load_basis_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:4] != ["alpha", "eigenvalue", "proj_min", "proj_max"]:
        raise ValueError(f"{path}: not a basis CSV")
    body = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
    return PcaBasis(body[:, 3:], body[:, 0], body[:, 1], body[:, 2])

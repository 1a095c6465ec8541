"""Synthetic clustered binary datasets and strict 0/1 CSV I/O.

Cluster geometry: the visible units are split into ``subspace_dim`` disjoint
index blocks (all units for 1-D, two halves for 2-D). A cluster center gives,
per block, the fraction of units that are on. With ``subspace_dim == 1`` this
fraction is exactly the magnetization along ``u = 1/sqrt(n_visible)``.
"""
import re
from dataclasses import dataclass

import numpy as np

PROTOTYPE_MODES = ("random", "fixed")


@dataclass(frozen=True)
class ClusterSpec:
    """Parameters of a clustered dataset.

    ``prototype="random"`` places each sample's on-units at fresh random
    positions inside every block, so cluster means lie exactly on the span of
    the block directions. ``prototype="fixed"`` draws one prototype vector per
    cluster and derives every sample from it.
    """
    n_visible: int
    centers: tuple
    spread: object = 0.02
    samples_per_cluster: object = 500
    subspace_dim: int = 1
    seed: int = 0
    prototype: str = "random"

    def __post_init__(self):
        if self.n_visible < 1:
            raise ValueError("n_visible must be positive")
        if self.subspace_dim not in (1, 2):
            raise ValueError("subspace_dim must be 1 or 2")
        if self.subspace_dim == 2 and self.n_visible < 2:
            raise ValueError("a 2-D subspace needs at least 2 visible units")
        if self.prototype not in PROTOTYPE_MODES:
            raise ValueError(f"prototype must be one of {PROTOTYPE_MODES}")
        centers = np.asarray(self.centers, dtype=np.float64).reshape(-1, self.subspace_dim)
        object.__setattr__(self, "centers", tuple(map(tuple, centers.tolist())))
        if len(set(self.centers)) != len(self.centers):
            raise ValueError("cluster centers must be distinct")
        for s in self.spreads:
            if not 0 <= s < 0.5:
                raise ValueError(f"spread must lie in [0, 0.5), got {s}")
        if any(n < 1 for n in self.counts):
            raise ValueError("samples_per_cluster must be positive")

    @property
    def n_clusters(self):
        return len(self.centers)

    @property
    def spreads(self):
        return np.broadcast_to(np.asarray(self.spread, dtype=np.float64), (self.n_clusters,))

    @property
    def counts(self):
        return np.broadcast_to(np.asarray(self.samples_per_cluster, dtype=np.int64), (self.n_clusters,))

    def blocks(self):
        idx = np.arange(self.n_visible)
        return [idx] if self.subspace_dim == 1 else [idx[: self.n_visible // 2], idx[self.n_visible // 2:]]

    def directions(self):
        """Unit vectors spanning the cluster subspace (block indicators)."""
        out = []
        for blk in self.blocks():
            d = np.zeros(self.n_visible)
            d[blk] = 1.0 / np.sqrt(blk.size)
            out.append(d)
        return np.array(out)

    def on_counts(self):
        """Number of on-units per block for every cluster, validating reachability."""
        sizes = np.array([blk.size for blk in self.blocks()])
        counts = []
        for center in self.centers:
            c = np.asarray(center)
            if np.any(c < 0) or np.any(c > 1):
                raise ValueError(f"cluster center {tuple(c.tolist())} is unreachable: fractions must lie in [0, 1]")
            counts.append(np.rint(c * sizes).astype(np.int64))
        return np.array(counts)


def gen_clusters(spec):
    """Return ``(data, labels)``: uint8 rows and the cluster index of each row."""
    rng = np.random.default_rng(spec.seed)
    ons = spec.on_counts()
    blocks = spec.blocks()
    rows, labels = [], []
    for c in range(spec.n_clusters):
        n = int(spec.counts[c])
        if spec.prototype == "fixed":
            proto = np.zeros(spec.n_visible, dtype=np.uint8)
            for blk, k in zip(blocks, ons[c]):
                proto[rng.choice(blk, size=k, replace=False)] = 1
            X = np.tile(proto, (n, 1))
        else:
            X = np.zeros((n, spec.n_visible), dtype=np.uint8)
            for blk, k in zip(blocks, ons[c]):
                # k smallest of iid keys = uniformly random k-subset, row by row
                keys = rng.random((n, blk.size))
                pick = np.argsort(keys, axis=1, kind="stable")[:, :k]
                X[np.arange(n)[:, None], blk[pick]] = 1
        flips = rng.random(X.shape) < spec.spreads[c]
        rows.append(X ^ flips.astype(np.uint8))
        labels.append(np.full(n, c, dtype=np.int64))
    data, labels = np.concatenate(rows), np.concatenate(labels)
    order = rng.permutation(data.shape[0])
    return data[order], labels[order]


_SPLIT = re.compile(r"[,\s]+")


def load_binary_csv(path):
    """Parse comma- or whitespace-separated 0/1 tokens; any other token is an error."""
    rows = []
    with open(path) as fh:
        for r, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            toks = _SPLIT.split(line)
            for col, tok in enumerate(toks, start=1):
                if tok not in ("0", "1"):
                    raise ValueError(f"{path}: row {r}, column {col}: invalid token {tok!r}")
            if rows and len(toks) != len(rows[0]):
                raise ValueError(f"{path}: row {r} has {len(toks)} columns, expected {len(rows[0])}")
            rows.append(toks)
    if not rows:
        return np.zeros((0, 0), dtype=np.uint8)
    return (np.array(rows) == "1").astype(np.uint8)


def save_binary_csv(matrix, path):
    X = np.asarray(matrix)
    if X.size and not np.isin(X, (0, 1)).all():
        raise ValueError("matrix must contain only 0 and 1")
    with open(path, "w") as fh:
        for row in X.astype(np.uint8):
            fh.write(",".join("1" if x else "0" for x in row))
            fh.write("\n")


def save_labels(labels, path):
    with open(path, "w") as fh:
        for x in np.asarray(labels, dtype=np.int64):
            fh.write(f"{x}\n")


def load_labels(path):
    with open(path) as fh:
        return np.array([int(line) for line in fh if line.strip()], dtype=np.int64)


def binarize(matrix, threshold=0.5):
    X = np.asarray(matrix)
    if X.size == 0 or np.isin(X, (0, 1)).all():
        return X.astype(np.uint8)
    return (X >= threshold).astype(np.uint8)


def filter_by_label(matrix, labels, keep):
    """Rows whose label is in ``keep``; real-valued input is thresholded at 0.5."""
    X = np.asarray(matrix)
    labels = np.asarray(labels)
    if labels.shape[0] != X.shape[0]:
        raise ValueError("one label per row required")
    mask = np.isin(labels, list(keep))
    return binarize(X)[mask]

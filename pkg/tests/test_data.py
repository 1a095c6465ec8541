import numpy as np
import pytest

from tetherbm import data as dt
from tetherbm.pca import compute_pca, magnetizations


def test_zero_spread_fixed_prototype_rows_identical():
    X, lab = dt.gen_clusters(dt.ClusterSpec(30, (0.4,), 0.0, 20, prototype="fixed", seed=3))
    assert X.shape == (20, 30) and np.all(X == X[0]) and X[0].sum() == 12


def test_zero_spread_projection_is_center():
    spec = dt.ClusterSpec(50, (0.1, 0.62), 0.0, 15, seed=1)
    X, lab = dt.gen_clusters(spec)
    for k, c in enumerate(spec.centers):
        frac = X[lab == k].mean(axis=1)
        assert np.all(np.abs(frac - c[0]) <= 1 / np.sqrt(50))


def test_two_clusters_align_with_uniform_direction():
    X, lab = dt.gen_clusters(dt.ClusterSpec(100, (0.2, 0.8), 0.02, 300, seed=0))
    basis = compute_pca(X, 1)
    u = np.ones(100) / 10
    assert abs(basis.components[0] @ u) > 0.99
    m = magnetizations(X, basis, (0,))[:, 0]
    hist, _ = np.histogram(m, bins=10, range=(0, 1))
    assert hist[0] + hist[1] > 250 and hist[-1] + hist[-2] > 250 and hist[4] + hist[5] == 0


def test_five_aligned_clusters_separate_at_n1000():
    spec = dt.ClusterSpec(1000, (0.1, 0.3, 0.5, 0.7, 0.9), 0.02, 100, seed=2)
    X, lab = dt.gen_clusters(spec)
    m = magnetizations(X, compute_pca(X, 1), (0,))[:, 0]
    hist, _ = np.histogram(m, bins=40, range=(0, 1))
    occupied = np.flatnonzero(hist)
    runs = np.split(occupied, np.flatnonzero(np.diff(occupied) > 1) + 1)
    assert len(runs) == 5


def test_two_dimensional_blocks():
    spec = dt.ClusterSpec(40, ((0.2, 0.8), (0.8, 0.8), (0.5, 0.2)), 0.0, 10, subspace_dim=2, seed=4)
    X, lab = dt.gen_clusters(spec)
    for k, (c1, c2) in enumerate(spec.centers):
        rows = X[lab == k]
        assert np.allclose(rows[:, :20].mean(axis=1), c1) and np.allclose(rows[:, 20:].mean(axis=1), c2)
    D = spec.directions()
    assert np.allclose(D @ D.T, np.eye(2))


def test_spec_validation():
    with pytest.raises(ValueError):
        dt.ClusterSpec(10, (0.2, 0.2))
    with pytest.raises(ValueError):
        dt.ClusterSpec(10, (0.2,), spread=0.5)
    with pytest.raises(ValueError, match="unreachable"):
        dt.gen_clusters(dt.ClusterSpec(10, (1.3,)))


def test_same_seed_same_dataset():
    spec = dt.ClusterSpec(20, (0.3, 0.7), 0.05, 50, seed=11)
    a, la = dt.gen_clusters(spec)
    b, lb = dt.gen_clusters(spec)
    assert np.array_equal(a, b) and np.array_equal(la, lb)
    assert set(np.unique(a)) <= {0, 1}


def test_csv_parse_and_errors(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("0,1,1\n1,0,0\n")
    X = dt.load_binary_csv(p)
    assert X.shape == (2, 3) and X.tolist() == [[0, 1, 1], [1, 0, 0]]
    p.write_text("0 1 1\n1 0 0\n")
    assert dt.load_binary_csv(p).tolist() == [[0, 1, 1], [1, 0, 0]]
    p.write_text("0,1,1\n1,2,0\n")
    with pytest.raises(ValueError, match="row 2, column 2"):
        dt.load_binary_csv(p)
    p.write_text("0,1\n1,0,0\n")
    with pytest.raises(ValueError):
        dt.load_binary_csv(p)


def test_csv_roundtrip(tmp_path, rng):
    X = rng.integers(0, 2, (13, 9)).astype(np.uint8)
    p = tmp_path / "r.csv"
    dt.save_binary_csv(X, p)
    assert np.array_equal(dt.load_binary_csv(p), X)
    with pytest.raises(ValueError):
        dt.save_binary_csv(np.array([[0, 3]]), p)


def test_labels_roundtrip(tmp_path):
    lab = np.array([0, 3, 1, 1])
    dt.save_labels(lab, tmp_path / "l.csv")
    assert np.array_equal(dt.load_labels(tmp_path / "l.csv"), lab)


def test_filter_by_label(rng):
    X = rng.integers(0, 2, (12, 4))
    lab = np.array([0, 1, 2] * 4)
    assert np.array_equal(dt.filter_by_label(X, lab, {0, 1, 2}), X)
    assert dt.filter_by_label(X, lab, set()).shape == (0, 4)
    assert dt.filter_by_label(X, lab, {0, 2}).shape[0] == 8
    gray = np.array([[0.2, 0.7], [0.5, 0.49]])
    assert dt.filter_by_label(gray, [5, 6], {5, 6}).tolist() == [[0, 1], [1, 0]]

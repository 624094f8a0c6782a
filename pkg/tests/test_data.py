
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vatlab.autodiff import Rng
from vatlab.data import (
    IMAGES_MAGIC,
    LABELS_MAGIC,
    DataError,
    Dataset,
    gen_two_clusters,
    load_dataset,
    load_idx,
    load_mnist,
    save_dataset,
    split,
    split_indices,
    write_csv,
    write_idx,
)


def test_two_clusters_defaults():
    lab, unl, truth = gen_two_clusters(Rng(0))
    assert (len(lab), len(unl), len(truth)) == (8, 1000, 1000)
    assert np.bincount(lab.labels).tolist() == [4, 4]
    assert unl.labels is None
    assert np.bincount(truth).tolist() == [500, 500]


def test_two_clusters_edge_cases_and_determinism():
    lab, unl, _ = gen_two_clusters(Rng(0), 8, 0)
    assert len(lab) == 8 and len(unl) == 0
    a = gen_two_clusters(Rng(3))
    b = gen_two_clusters(Rng(3))
    assert np.array_equal(a[0].inputs, b[0].inputs) and np.array_equal(a[1].inputs, b[1].inputs)
    with pytest.raises(ValueError):
        gen_two_clusters(Rng(0), 7)


def test_two_clusters_truth_matches_geometry():
    _, unl, truth = gen_two_clusters(Rng(1), noise=0.0)
    # upper moon points lie on the unit circle, lower moon on the shifted one
    upper = np.abs(np.linalg.norm(unl.inputs, axis=1) - 1) < 1e-9
    lower = np.abs(np.linalg.norm(unl.inputs - [1.0, 0.5], axis=1) - 1) < 1e-9
    assert np.all(upper[truth == 0]) and np.all(lower[truth == 1])


def _write_pair(tmp_path, images, labels, gz=False):
    suffix = ".gz" if gz else ""
    ip, lp = tmp_path / f"i{suffix}", tmp_path / f"l{suffix}"
    write_idx(ip, lp, images, labels)
    return ip, lp


@pytest.mark.parametrize("gz", [False, True])
def test_idx_round_trip(tmp_path, gz):
    images = np.zeros((3, 28, 28), dtype=np.uint8)
    images[1, 0, 0] = 255
    images[2, 27, 27] = 51
    ip, lp = _write_pair(tmp_path, images, [7, 0, 3], gz)
    ds = load_idx(ip, lp)
    assert ds.inputs.shape == (3, 784)
    assert not np.any(ds.inputs[0])
    assert ds.inputs[1, 0] == 1.0 and ds.inputs[2, 783] == 0.2
    assert ds.labels.tolist() == [7, 0, 3]


def test_idx_magic_constants(tmp_path):
    assert (IMAGES_MAGIC, LABELS_MAGIC) == (0x00000803, 0x00000801)
    ip, lp = _write_pair(tmp_path, np.zeros((1, 28, 28)), [1])
    assert ip.read_bytes()[:4] == b"\x00\x00\x08\x03"
    assert lp.read_bytes()[:4] == b"\x00\x00\x08\x01"


def test_idx_errors(tmp_path):
    ip, lp = _write_pair(tmp_path, np.zeros((2, 28, 28)), [1, 2])
    with pytest.raises(DataError, match="magic"):
        load_idx(lp, lp)
    short = tmp_path / "short"
    short.write_bytes(ip.read_bytes()[:-10])
    with pytest.raises(DataError, match="truncated"):
        load_idx(short, lp)
    (tmp_path / "hdr").write_bytes(b"\x00\x00")
    with pytest.raises(DataError, match="truncated"):
        load_idx(tmp_path / "hdr", lp)
    other = tmp_path / "three"
    other.mkdir()
    ip3, _ = _write_pair(other, np.zeros((3, 28, 28)), [1, 2, 3])
    with pytest.raises(DataError, match="count mismatch"):
        load_idx(ip3, lp)


def test_load_mnist_from_env(tmp_path, monkeypatch):
    d = tmp_path / "mnist10k"
    d.mkdir()
    write_idx(d / "images-idx3-ubyte.gz", d / "labels-idx1-ubyte.gz", np.ones((4, 28, 28)), [0, 1, 2, 3])
    monkeypatch.setenv("VATLAB_DATA_DIR", str(tmp_path))
    assert len(load_mnist()) == 4
    with pytest.raises(DataError):
        load_mnist(tmp_path / "nowhere")


def test_bundled_mnist_subset():
    ds = load_mnist("data")
    assert ds.inputs.shape == (10_000, 784)
    assert ds.inputs.min() == 0.0 and ds.inputs.max() == 1.0
    assert np.all(np.bincount(ds.labels) > 800)


def _synthetic_labeled(n, c=10, seed=0):
    labels = np.arange(n) % c
    return Dataset(np.zeros((n, 1)), labels[np.random.default_rng(seed).permutation(n)])


def test_split_arithmetic():
    lab, unl, val = split(_synthetic_labeled(60_000), Rng(0), 100, 1_000)
    assert (len(lab), len(unl), len(val)) == (100, 58_900, 1_000)
    assert np.bincount(lab.labels).tolist() == [10] * 10
    assert unl.labels is None


def test_split_everything_labeled():
    ds = _synthetic_labeled(50)
    lab, unl, val = split(ds, Rng(0), 50, 0)
    assert (len(lab), len(unl), len(val)) == (50, 0, 0)


def test_split_errors():
    with pytest.raises(DataError):
        split(_synthetic_labeled(20), Rng(0), 15, 10)
    skewed = Dataset(np.zeros((12, 1)), [0] * 11 + [1])
    with pytest.raises(DataError, match="class 1"):
        split(skewed, Rng(0), 4, 0)
    with pytest.raises(DataError):
        split(Dataset(np.zeros((3, 1))), Rng(0), 1, 0)


@pytest.mark.invariant
@settings(max_examples=1000, deadline=None)
@given(
    n=st.integers(30, 300),
    c=st.integers(2, 6),
    frac_l=st.floats(0, 0.5),
    frac_v=st.floats(0, 0.4),
    seed=st.integers(0, 2**31),
)
def test_split_partition_properties(n, c, frac_l, frac_v, seed):
    ds = _synthetic_labeled(n, c, seed)
    n_l, n_v = int(frac_l * n), int(frac_v * n)
    li, ui, vi = split_indices(ds, Rng(seed), n_l, n_v)
    assert len(li) + len(ui) + len(vi) == n
    assert len(np.union1d(np.union1d(li, ui), vi)) == n
    assert (len(li), len(vi)) == (n_l, n_v)
    counts = np.bincount(ds.labels[li], minlength=c)
    assert counts.max() - counts.min() <= 1
    again = split_indices(ds, Rng(seed), n_l, n_v)
    assert all(np.array_equal(a, b) for a, b in zip((li, ui, vi), again))


@pytest.mark.parametrize("labels", [None, [3, 1, 0]])
def test_dataset_cache_round_trip(tmp_path, labels):
    ds = Dataset(np.random.default_rng(0).normal(size=(3, 4)), labels, "cache-test")
    save_dataset(tmp_path / "d.vatd", ds)
    back = load_dataset(tmp_path / "d.vatd")
    assert back.inputs.tobytes() == ds.inputs.tobytes()
    assert back.name == "cache-test"
    assert (back.labels is None) == (labels is None)
    if labels is not None:
        assert back.labels.tolist() == labels
    raw = (tmp_path / "d.vatd").read_bytes()
    (tmp_path / "bad").write_bytes(b"NOPE" + raw[4:])
    (tmp_path / "short").write_bytes(raw[:-1])
    for name in ("bad", "short"):
        with pytest.raises(DataError):
            load_dataset(tmp_path / name)


def test_csv_export(tmp_path):
    lab, _, _ = gen_two_clusters(Rng(0), 4, 0)
    write_csv(tmp_path / "l.csv", lab)
    lines = (tmp_path / "l.csv").read_text().splitlines()
    assert lines[0] == "x0,x1,label" and len(lines) == 5
    write_csv(tmp_path / "u.csv", Dataset(np.ones((2, 2))))
    assert (tmp_path / "u.csv").read_text().splitlines()[0] == "x0,x1"


def test_dataset_validation():
    with pytest.raises(DataError):
        Dataset(np.zeros(3))
    with pytest.raises(DataError):
        Dataset(np.zeros((3, 1)), [0, 1])
    with pytest.raises(DataError):
        Dataset(np.zeros((1, 1)), [-1])

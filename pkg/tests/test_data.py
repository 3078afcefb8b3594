"""Data pipeline: IDX parsing, synthetic corpus, splits, encodings, sampling."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import ssgan.autodiff as ad
from ssgan.data import (
    AttributeSpec,
    AttributeVector,
    Dataset,
    IdxCountError,
    IdxMagicError,
    IdxTruncatedError,
    NoiseSpec,
    SplitError,
    decode_one_hot,
    load_dataset,
    load_idx,
    make_semi_split,
    one_hot,
    sample_attributes,
    sample_noise,
    save_dataset,
    synth_mixture,
    write_idx_images,
    write_idx_labels,
)
from ssgan.rng import stream


# ---------------------------------------------------------------------------
# IDX format

def test_load_idx_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    pix = rng.integers(0, 256, (7, 5, 5), dtype=np.uint8)
    lab = rng.integers(0, 10, 7, dtype=np.uint8)
    write_idx_images(tmp_path / "im.idx", pix)
    write_idx_labels(tmp_path / "lb.idx", lab)
    images, labels = load_idx(tmp_path / "im.idx", tmp_path / "lb.idx")
    assert images.shape == (7, 1, 5, 5)
    np.testing.assert_array_equal(labels, lab)
    np.testing.assert_allclose(images, pix[:, None].astype(np.float32) / 127.5 - 1.0)


def test_load_idx_full_mnist_sized_file(tmp_path):
    # standard train-file shape: 60000 x 28 x 28
    pix = np.zeros((60000, 28, 28), dtype=np.uint8)
    write_idx_images(tmp_path / "im.idx", pix)
    images, _ = load_idx(tmp_path / "im.idx")
    assert images.shape == (60000, 1, 28, 28)


def test_load_idx_pixel_endpoints(tmp_path):
    pix = np.array([[[0, 255], [128, 64]]], dtype=np.uint8)
    write_idx_images(tmp_path / "im.idx", pix)
    images, _ = load_idx(tmp_path / "im.idx")
    assert images[0, 0, 0, 0] == -1.0
    assert images[0, 0, 0, 1] == 1.0


def test_load_idx_bad_magic(tmp_path):
    (tmp_path / "im.idx").write_bytes(b"\x00\x00\x08\x99" + b"\x00" * 12)
    with pytest.raises(IdxMagicError):
        load_idx(tmp_path / "im.idx")


def test_load_idx_truncated(tmp_path):
    rng = np.random.default_rng(1)
    pix = rng.integers(0, 256, (4, 3, 3), dtype=np.uint8)
    write_idx_images(tmp_path / "im.idx", pix)
    data = (tmp_path / "im.idx").read_bytes()
    (tmp_path / "im.idx").write_bytes(data[:-5])
    with pytest.raises(IdxTruncatedError):
        load_idx(tmp_path / "im.idx")


def test_load_idx_count_mismatch(tmp_path):
    rng = np.random.default_rng(2)
    write_idx_images(tmp_path / "im.idx", rng.integers(0, 256, (4, 3, 3), dtype=np.uint8))
    write_idx_labels(tmp_path / "lb.idx", rng.integers(0, 10, 5, dtype=np.uint8))
    with pytest.raises(IdxCountError):
        load_idx(tmp_path / "im.idx", tmp_path / "lb.idx")


# ---------------------------------------------------------------------------
# synthetic corpus

def test_synth_mixture_counts_and_determinism():
    spec = AttributeSpec(d=1, K=4)
    ds1 = synth_mixture(spec, per_class=100, image_side=8, seed=3)
    ds2 = synth_mixture(spec, per_class=100, image_side=8, seed=3)
    assert len(ds1) == 400
    for c in range(4):
        assert (ds1.labels[:, 0] == c).sum() == 100
    assert ds1.images.tobytes() == ds2.images.tobytes()
    assert ds1.labels.tobytes() == ds2.labels.tobytes()


def test_synth_mixture_too_many_combos_rejected():
    with pytest.raises(ValueError):
        synth_mixture(AttributeSpec(d=18, K=2), per_class=1, image_side=8, seed=0)


def test_synth_mixture_linear_probe_under_5_percent():
    # train a linear softmax probe on raw pixels; the plain-style prototypes
    # must be separable with < 5% error
    spec = AttributeSpec(d=1, K=4)
    ds = synth_mixture(spec, per_class=100, image_side=8, seed=4)
    x = ds.images.reshape(len(ds), -1)
    y = ds.labels[:, 0]
    tr = np.arange(0, len(ds), 2)
    te = np.arange(1, len(ds), 2)
    ps = ad.ParamSet()
    w = ad.gaussian_param(ps, "w", (64, 4), seed=0)
    b = ad.zeros_param(ps, "b", (4,))
    xt = ad.Tensor(x[tr])
    for _ in range(300):
        ps.zero_grads()
        with ad.Tape() as tape:
            logits = ad.add(ad.matmul(xt, w), b)
            loss = ad.neg(ad.softmax_cross_entropy(logits, y[tr]))
        ad.backward(loss, tape)
        ad.adam_step(ps, lr=5e-2)
    pred = (x[te] @ w.data + b.data).argmax(axis=1)
    err = float(np.mean(pred != y[te]))
    assert err < 0.05, f"linear probe error {err}"


def test_dataset_serialization_round_trip(tmp_path):
    spec = AttributeSpec(d=2, K=2)
    ds = synth_mixture(spec, per_class=5, image_side=8, seed=5)
    save_dataset(ds, tmp_path / "corpus")
    back = load_dataset(tmp_path / "corpus")
    assert back.images.tobytes() == ds.images.tobytes()
    np.testing.assert_array_equal(back.labels, ds.labels)
    assert back.spec == spec


# ---------------------------------------------------------------------------
# splits

def _toy_dataset(n_total=200, k=10, seed=6):
    spec = AttributeSpec(d=1, K=k)
    rng = np.random.default_rng(seed)
    images = rng.uniform(-1, 1, (n_total, 1, 4, 4)).astype(np.float32)
    labels = np.tile(np.arange(k), n_total // k)
    return Dataset(images, labels, spec)


def test_make_semi_split_balance_n20():
    ds = _toy_dataset()
    split = make_semi_split(ds, n=20, m=100, seed=7)
    counts = np.bincount(split.labeled_labels()[:, 0], minlength=10)
    assert (counts == 2).all()  # exactly two labeled examples per digit


def test_make_semi_split_balance_n10():
    ds = _toy_dataset()
    split = make_semi_split(ds, n=10, m=100, seed=7)
    counts = np.bincount(split.labeled_labels()[:, 0], minlength=10)
    assert (counts == 1).all()


def test_make_semi_split_uneven_balance_within_one():
    ds = _toy_dataset()
    split = make_semi_split(ds, n=23, m=50, seed=8)
    counts = np.bincount(split.labeled_labels()[:, 0], minlength=10)
    assert counts.max() - counts.min() <= 1
    assert counts.sum() == 23


def test_make_semi_split_degenerate_fully_supervised():
    ds = _toy_dataset()
    split = make_semi_split(ds, n=len(ds), m=0, seed=9)
    assert split.n == len(ds) and split.m == 0


def test_make_semi_split_errors():
    ds = _toy_dataset()
    with pytest.raises(SplitError):
        make_semi_split(ds, n=150, m=100, seed=0)
    # class 0 has only 2 members: balancing 40 across 10 classes must fail
    spec = AttributeSpec(d=1, K=10)
    rng = np.random.default_rng(19)
    labels = np.concatenate([[0, 0], np.tile(np.arange(1, 10), 22)])
    images = rng.uniform(-1, 1, (len(labels), 1, 4, 4)).astype(np.float32)
    skewed = Dataset(images, labels, spec)
    with pytest.raises(SplitError):
        make_semi_split(skewed, n=40, m=0, seed=0)


def test_split_determinism_and_disjointness():
    ds = _toy_dataset()
    a = make_semi_split(ds, n=20, m=150, seed=11)
    b = make_semi_split(ds, n=20, m=150, seed=11)
    assert a.split_hash() == b.split_hash()
    np.testing.assert_array_equal(a.labeled_idx, b.labeled_idx)
    assert np.intersect1d(a.labeled_idx, a.unlabeled_idx).size == 0
    c = make_semi_split(ds, n=20, m=150, seed=12)
    assert c.split_hash() != a.split_hash()


def test_split_counters_track_pools():
    ds = _toy_dataset()
    split = make_semi_split(ds, n=20, m=100, seed=13)
    split.take_labeled(np.array([0, 1, 2]), "attr_real")
    split.take_pool(np.array([0, 25, 50]), "adv_real")
    assert split.counters["attr_real"] == {"labeled": 3, "unlabeled": 0}
    assert split.counters["adv_real"] == {"labeled": 1, "unlabeled": 2}
    assert split.unlabeled_reads("attr_real") == 0
    assert split.unlabeled_reads() == 2


# ---------------------------------------------------------------------------
# one-hot encoding

def test_one_hot_examples():
    spec = AttributeSpec(d=1, K=10)
    np.testing.assert_array_equal(one_hot(np.array([3]), spec),
                                  [0, 0, 0, 1, 0, 0, 0, 0, 0, 0])
    spec2 = AttributeSpec(d=2, K=2)
    np.testing.assert_array_equal(one_hot(np.array([1, 0]), spec2), [0, 1, 1, 0])
    enc = one_hot(AttributeVector((1, 0)), spec2)
    np.testing.assert_array_equal(enc, [0, 1, 1, 0])


def test_one_hot_out_of_range():
    with pytest.raises(ValueError):
        one_hot(np.array([5]), AttributeSpec(d=1, K=4))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(2, 6), st.data())
def test_one_hot_round_trip_and_sum(d, k, data):
    spec = AttributeSpec(d=d, K=k)
    y = np.array([data.draw(st.integers(0, k - 1)) for _ in range(d)])
    enc = one_hot(y, spec)
    assert enc.sum() == d
    np.testing.assert_array_equal(decode_one_hot(enc, spec), y)


# ---------------------------------------------------------------------------
# noise and attribute sampling

def test_sample_noise_uniform_support_and_determinism():
    spec = NoiseSpec(dim=16, distribution="uniform")
    a = sample_noise(64, spec, stream(1, "noise"))
    b = sample_noise(64, spec, stream(1, "noise"))
    assert a.min() >= -1.0 and a.max() <= 1.0
    assert a.tobytes() == b.tobytes()


def test_sample_noise_normal_mean():
    spec = NoiseSpec(dim=1, distribution="normal")
    draws = sample_noise(100_000, spec, stream(2, "noise"))
    assert abs(float(draws.mean())) < 0.02


def test_sample_attributes_uniform_frequencies():
    ds = _toy_dataset()
    split = make_semi_split(ds, n=20, m=100, seed=14)
    draws = sample_attributes(100_000, split, stream(3, "attr"))
    freq = np.bincount(draws[:, 0], minlength=10) / len(draws)
    assert np.abs(freq - 0.1).max() < 0.01


def test_sample_attributes_marginals_d2():
    # labeled set with attribute-0 marginal 0.25 on dimension 0
    spec = AttributeSpec(d=2, K=2)
    rng = np.random.default_rng(15)
    images = rng.uniform(-1, 1, (80, 1, 4, 4)).astype(np.float32)
    labels = np.stack([np.repeat([0, 1], [20, 60]), np.tile([0, 1], 40)], axis=1)
    ds = Dataset(images, labels, spec)
    split = make_semi_split(ds, n=80, m=0, seed=16)
    draws = sample_attributes(100_000, split, stream(4, "attr"))
    f0 = float((draws[:, 0] == 0).mean())
    assert abs(f0 - 0.25) < 0.02


def test_sample_attributes_empty_batch_and_empty_labeled():
    ds = _toy_dataset()
    split = make_semi_split(ds, n=20, m=100, seed=17)
    assert sample_attributes(0, split, stream(5, "attr")).shape == (0, 1)
    empty = make_semi_split(ds, n=0, m=100, seed=18)
    with pytest.raises(SplitError):
        sample_attributes(4, empty, stream(6, "attr"))

"""Architecture contracts: forwards, conditioning paths, checkpoints."""

import time

import numpy as np
import pytest

import ssgan.autodiff as ad
from ssgan.autodiff import Tape, Tensor, adam_step, backward
from ssgan.data import AttributeSpec, NoiseSpec, sample_noise
from ssgan.models import (
    ArchConfig,
    CheckpointError,
    GanVariant,
    build_model,
    disc_acgan_forward,
    disc_cond_forward,
    disc_unsup_forward,
    generator_forward,
    load_checkpoint,
    save_checkpoint,
)
from ssgan.rng import stream

SPEC = AttributeSpec(d=1, K=10)
NOISE = NoiseSpec(dim=16)
SMALL = ArchConfig(image_side=28, gen_base=16, gen_mid=8, disc_c1=8, disc_c2=16,
                   feat_width=32, head_hidden=16)


def _model(variant="ss", seed=0, arch=SMALL, spec=SPEC):
    return build_model(variant, spec, NOISE, arch, seed)


def _zy(model, batch=4, seed=1):
    z = Tensor(sample_noise(batch, model.noise, stream(seed, "noise")))
    y = stream(seed, "attr").integers(0, model.spec.K, (batch, 1))
    return z, y


def test_generator_output_range_and_shape():
    model = _model()
    z, y = _zy(model, batch=6)
    out = generator_forward(model, z, y, train=True)
    assert out.shape == (6, 1, 28, 28)
    assert out.data.min() >= -1.0 and out.data.max() <= 1.0


def test_generator_eval_mode_deterministic():
    model = _model()
    z, y = _zy(model)
    a = generator_forward(model, z, y, train=False).data
    b = generator_forward(model, z, y, train=False).data
    assert a.tobytes() == b.tobytes()


def test_generator_requires_y_and_matching_batch():
    model = _model()
    z, y = _zy(model)
    with pytest.raises(ValueError):
        generator_forward(model, z, None)
    with pytest.raises(ad.ShapeError):
        generator_forward(model, z, y[:2])


def test_generator_attribute_sensitivity_after_training():
    model = _model(seed=3)
    z, _ = _zy(model, batch=8, seed=2)
    y = np.zeros((8, 1), dtype=np.int64)
    # a couple of generator updates constitute nonzero training
    for _ in range(2):
        model.gen.zero_grads()
        with Tape() as tape:
            out = generator_forward(model, z, y, train=True)
            loss = ad.mean_all(ad.square(out))
        backward(loss, tape)
        adam_step(model.gen)
    a = generator_forward(model, z, y, train=False).data
    b = generator_forward(model, z, y + 3, train=False).data
    assert float(np.sum((a - b) ** 2)) > 0.0


def test_disc_unsup_near_half_at_init():
    model = _model(seed=5)
    rng = np.random.default_rng(0)
    x = Tensor(rng.uniform(-1, 1, (64, 1, 28, 28)).astype(np.float32))
    p, h = disc_unsup_forward(model, x, train=True)
    assert abs(float(p.data.mean()) - 0.5) < 0.2
    assert h.shape == (64, SMALL.feat_width)


def test_disc_unsup_finite_on_extreme_images():
    model = _model()
    x = Tensor(np.ones((4, 1, 28, 28), np.float32))
    p, _ = disc_unsup_forward(model, x, train=True)
    assert np.all(np.isfinite(p.data)) and np.all((p.data > 0) & (p.data < 1))
    p2, _ = disc_unsup_forward(model, Tensor(-np.ones((4, 1, 28, 28), np.float32)), train=True)
    assert np.all(np.isfinite(p2.data))


def test_joint_disc_takes_images_and_rejects_features():
    model = _model("c")
    rng = np.random.default_rng(1)
    x = Tensor(rng.uniform(-1, 1, (4, 1, 28, 28)).astype(np.float32))
    y = np.zeros((4, 1), dtype=np.int64)
    p = disc_cond_forward(model, x, y, train=True)
    assert np.all((p.data > 0) & (p.data < 1))
    with pytest.raises(ValueError):
        disc_cond_forward(model, Tensor(np.zeros((4, 32), np.float32)), y)
    with pytest.raises(ValueError):
        disc_unsup_forward(model, x)


def test_stacked_head_width_and_bounds():
    model = _model("ss")
    assert model._d_head1.w.shape == (SMALL.feat_width + SPEC.onehot_width, SMALL.head_hidden)
    rng = np.random.default_rng(2)
    h = Tensor(rng.uniform(-1, 1, (4, SMALL.feat_width)).astype(np.float32))
    y = np.zeros((4, 1), dtype=np.int64)
    p = disc_cond_forward(model, h, y, train=True)
    assert np.all((p.data > 0) & (p.data < 1))
    with pytest.raises(ValueError):
        disc_cond_forward(model, Tensor(np.zeros((4, 1, 28, 28), np.float32)), y)


def test_acgan_heads():
    model = _model("ac")
    rng = np.random.default_rng(3)
    x = Tensor(rng.uniform(-1, 1, (5, 1, 28, 28)).astype(np.float32))
    p, logits = disc_acgan_forward(model, x, train=True)
    assert logits.shape == (5, SPEC.onehot_width)
    sm = np.exp(logits.data - logits.data.max(axis=1, keepdims=True))
    sm /= sm.sum(axis=1, keepdims=True)
    np.testing.assert_allclose(sm.sum(axis=1), 1.0, atol=1e-6)
    with pytest.raises(ValueError):
        disc_acgan_forward(_model("ss"), x)


def test_architecture_sharing_bit_identical_init():
    for a, b in (("c", "sc"), ("ac", "sa")):
        ma, mb = _model(a, seed=7), _model(b, seed=7)
        for (pa, ta), (pb, tb) in zip(ma.gen.items(), mb.gen.items()):
            assert pa == pb and ta.data.tobytes() == tb.data.tobytes()
        for (pa, ta), (pb, tb) in zip(ma.disc.items(), mb.disc.items()):
            assert pa == pb and ta.data.tobytes() == tb.data.tobytes()


def test_ss_and_u_share_trunk_init():
    mss, mu = _model("ss", seed=9), _model("u", seed=9)
    for path, t in mu.disc.items():
        assert mss.disc[path].data.tobytes() == t.data.tobytes()
    for path, t in mu.gen.items():
        assert mss.gen[path].data.tobytes() == t.data.tobytes()


def test_supervised_head_sees_pixels_only_through_h():
    # cutting the graph at h(x) must kill the pixel gradient entirely
    model = _model("ss")
    rng = np.random.default_rng(4)
    xd = rng.uniform(-1, 1, (4, 1, 28, 28)).astype(np.float32)
    y = np.zeros((4, 1), dtype=np.int64)

    def head_grad_on_x(cut: bool):
        x = Tensor(xd.copy(), requires_grad=True)
        with Tape() as tape:
            _, h = disc_unsup_forward(model, x, train=True)
            hin = ad.stop_gradient(h) if cut else h
            p = disc_cond_forward(model, hin, y, train=True)
            loss = ad.mean_all(p)
        backward(loss, tape)
        return x.grad

    assert head_grad_on_x(cut=False) is not None
    assert head_grad_on_x(cut=True) is None


def test_forward_pass_under_100ms_at_desk_scale():
    model = build_model("ss", SPEC, NoiseSpec(dim=64), ArchConfig(), seed=0)
    rng = np.random.default_rng(5)
    x = Tensor(rng.uniform(-1, 1, (64, 1, 28, 28)).astype(np.float32))
    disc_unsup_forward(model, x, train=True)  # warm-up
    t0 = time.perf_counter()
    disc_unsup_forward(model, x, train=True)
    dt_disc = time.perf_counter() - t0
    z = Tensor(sample_noise(64, model.noise, stream(0, "noise")))
    y = np.zeros((64, 1), dtype=np.int64)
    generator_forward(model, z, y, train=True)
    t0 = time.perf_counter()
    generator_forward(model, z, y, train=True)
    dt_gen = time.perf_counter() - t0
    assert dt_disc < 0.1 and dt_gen < 0.1, (dt_disc, dt_gen)


def test_checkpoint_round_trip(tmp_path):
    model = _model("ss", seed=11)
    # give optimizer state and buffers non-trivial values
    for _, p in model.gen.items():
        p.grad = np.ones_like(p.data)
    adam_step(model.gen)
    model.bn_states["disc.bn1"].mean[:] = 0.25
    save_checkpoint(model, tmp_path / "ck", step=17, extra={"note": 1})
    back, step, extra = load_checkpoint(tmp_path / "ck")
    assert step == 17 and extra == {"note": 1}
    assert back.variant is GanVariant.SS_GAN
    for path, p in model.gen.items():
        assert back.gen[path].data.tobytes() == p.data.tobytes()
        assert back.gen.state(path).t == model.gen.state(path).t
        assert back.gen.state(path).m.tobytes() == model.gen.state(path).m.tobytes()
    assert back.bn_states["disc.bn1"].mean[0] == np.float32(0.25)


def test_checkpoint_rejects_garbage(tmp_path):
    (tmp_path / "bad.json").write_text("{}")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "bad")
    model = _model("ss")
    save_checkpoint(model, tmp_path / "ok", step=0)
    raw = (tmp_path / "ok.bin").read_bytes()
    (tmp_path / "ok.bin").write_bytes(raw[:-8])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "ok")

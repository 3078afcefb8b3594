"""Finite-difference verification suite over every differentiable operation.

Each entry builds a small graph with float64 parameters (model state is
float32 in training; the checker promotes to float64 so central differences
resolve the gradients) and compares backward gradients against central
differences. The composite entry runs a full generator + stacked-discriminator
micro-network end to end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParamSet, Tensor, finite_diff_check
from .data import AttributeSpec, NoiseSpec
from .models import GanVariant, ArchConfig, build_model, disc_cond_forward, disc_unsup_forward, generator_forward

SMOOTH_TOL = 1e-4
GENERAL_TOL = 1e-3


@dataclass
class CheckResult:
    name: str
    max_rel_err: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.threshold


def _p(ps, path, arr):
    return ps.add(path, Tensor(np.asarray(arr, dtype=np.float64)))


def _rng(name):
    from .rng import stream
    return stream(0, "gradsuite/" + name)


def _check_matmul():
    rng = np.random.default_rng(101)
    ps = ParamSet()
    a = _p(ps, "a", rng.uniform(-1, 1, (4, 5)))
    b = _p(ps, "b", rng.uniform(-1, 1, (5, 3)))
    return finite_diff_check(lambda: ad.mean_all(ad.square(ad.matmul(a, b))), ps)


def _check_conv_down():
    rng = np.random.default_rng(102)
    ps = ParamSet()
    x = _p(ps, "x", rng.uniform(-1, 1, (2, 2, 6, 6)))
    k = _p(ps, "k", rng.uniform(-1, 1, (3, 2, 4, 4)))
    return finite_diff_check(lambda: ad.mean_all(ad.square(ad.conv2d_down(x, k))), ps)


def _check_conv_up():
    rng = np.random.default_rng(103)
    ps = ParamSet()
    x = _p(ps, "x", rng.uniform(-1, 1, (2, 2, 3, 3)))
    k = _p(ps, "k", rng.uniform(-1, 1, (2, 3, 4, 4)))
    return finite_diff_check(lambda: ad.mean_all(ad.square(ad.conv2d_up(x, k))), ps)


def _check_activation(kind):
    def run():
        rng = _rng(kind)
        vals = rng.uniform(-1, 1, 48)
        vals = vals[np.abs(vals) > 5e-3]  # keep clear of the relu kink
        ps = ParamSet()
        x = _p(ps, "x", vals)
        return finite_diff_check(lambda: ad.mean_all(ad.square(ad.activation(x, kind))), ps)
    return run


def _check_sigmoid_chain():
    rng = np.random.default_rng(104)
    ps = ParamSet()
    w = _p(ps, "w", rng.uniform(-1, 1, (6, 6)))
    x = Tensor(rng.uniform(-1, 1, (4, 6)).astype(np.float64))
    return finite_diff_check(
        lambda: ad.mean_all(ad.sigmoid(ad.matmul(ad.sigmoid(ad.matmul(x, w)), w))), ps)


def _check_batch_norm():
    rng = np.random.default_rng(105)
    ps = ParamSet()
    x = _p(ps, "x", rng.uniform(-1, 1, (6, 3, 2, 2)))
    g = _p(ps, "g", 1.0 + 0.1 * rng.uniform(-1, 1, 3))
    b = _p(ps, "b", 0.1 * rng.uniform(-1, 1, 3))
    st = ad.BatchNormState(3, dtype=np.float64)
    return finite_diff_check(
        lambda: ad.mean_all(ad.square(ad.batch_norm(x, g, b, st, train=True))), ps)


def _check_concat():
    rng = np.random.default_rng(106)
    ps = ParamSet()
    a = _p(ps, "a", rng.uniform(-1, 1, (3, 2)))
    b = _p(ps, "b", rng.uniform(-1, 1, (3, 4)))
    return finite_diff_check(lambda: ad.mean_all(ad.square(ad.concat(a, b, axis=1))), ps)


def _check_broadcast_channels():
    rng = np.random.default_rng(107)
    ps = ParamSet()
    v = _p(ps, "v", rng.uniform(-1, 1, (2, 3)))
    return finite_diff_check(lambda: ad.mean_all(ad.square(ad.broadcast_channels(v, 4, 4))), ps)


def _check_bce(target):
    def run():
        rng = _rng("bce" + target)
        ps = ParamSet()
        # keep p off the ends: the h=1e-3 quotient's own truncation error on
        # log grows as 1/p^3 and would swamp the smooth-op tolerance
        p = _p(ps, "p", rng.uniform(0.15, 0.85, 24))
        return finite_diff_check(lambda: ad.bce_terms(p, target), ps)
    return run


def _check_softmax_ce():
    rng = np.random.default_rng(108)
    ps = ParamSet()
    logits = _p(ps, "l", rng.uniform(-1, 1, (5, 7)))
    labels = rng.integers(0, 7, 5)
    return finite_diff_check(lambda: ad.softmax_cross_entropy(logits, labels), ps)


def _check_blocks_ll():
    rng = np.random.default_rng(109)
    ps = ParamSet()
    logits = _p(ps, "l", rng.uniform(-1, 1, (4, 6)))
    labels = rng.integers(0, 3, (4, 2))
    return finite_diff_check(lambda: ad.blocks_log_likelihood(logits, labels, k=3), ps)


def _check_arith():
    rng = np.random.default_rng(110)
    ps = ParamSet()
    a = _p(ps, "a", rng.uniform(-1, 1, (3, 4)))
    b = _p(ps, "b", rng.uniform(-1, 1, (3, 4)))

    def build():
        s = ad.add(ad.mul(a, b), ad.scale(ad.sub(a, b), 0.5))
        return ad.mean_all(ad.square(s))

    return finite_diff_check(build, ps)


def micro_model(seed: int = 0, weight_scale: float = 25.0):
    """Tiny stacked-discriminator model promoted to float64 for checking.

    Weights are scaled up from the training init so pre-normalization
    activations are O(1): batch norm divides perturbations by the activation
    scale, and at the 0.02 training init that amplification pushes units
    across relu kinks during the h=1e-3 difference evaluations. The check
    must probe a generic point of the function, not a kink.
    """
    spec = AttributeSpec(d=1, K=2)
    arch = ArchConfig(image_side=8, channels=1, gen_base=4, gen_mid=3,
                      disc_c1=3, disc_c2=4, feat_width=8, head_hidden=4)
    model = build_model(GanVariant.SS_GAN, spec, NoiseSpec(dim=3), arch, seed=seed)
    for ps in (model.gen, model.disc):
        for path, p in ps.items():
            p.data = p.data.astype(np.float64)
            if path.endswith(".k") or path.endswith(".w"):
                p.data *= weight_scale
    for st in model.bn_states.values():
        st.mean = st.mean.astype(np.float64)
        st.var = st.var.astype(np.float64)
    return model


def _check_composite():
    model = micro_model()
    rng = np.random.default_rng(111)
    z = Tensor(rng.uniform(-1, 1, (3, 3)).astype(np.float64))
    y = rng.integers(0, 2, (3, 1))
    real = Tensor(rng.uniform(-1, 1, (3, 1, 8, 8)).astype(np.float64))
    joint = ParamSet()
    for prefix, ps in (("gen", model.gen), ("disc", model.disc)):
        for path, p in ps.items():
            joint._params[f"{prefix}/{path}"] = p
            joint._state[f"{prefix}/{path}"] = ps.state(path)

    def build():
        fake = generator_forward(model, z, y, train=True)
        p_fake, h_fake = disc_unsup_forward(model, fake, train=True)
        p_real, h_real = disc_unsup_forward(model, real, train=True)
        p_joint = disc_cond_forward(model, h_fake, y, train=True)
        terms = ad.add(ad.bce_terms(p_real, "real"), ad.bce_terms(p_fake, "fake"))
        return ad.add(terms, ad.bce_terms(p_joint, "real"))

    return finite_diff_check(build, joint)


def run_suite() -> list[CheckResult]:
    """All per-op checks plus the composed micro-network check."""
    entries = [
        ("matmul", _check_matmul, GENERAL_TOL),
        ("conv2d_down", _check_conv_down, GENERAL_TOL),
        ("conv2d_up", _check_conv_up, GENERAL_TOL),
        ("relu", _check_activation("relu"), SMOOTH_TOL),
        ("leaky_relu", _check_activation("leaky_relu"), SMOOTH_TOL),
        ("sigmoid", _check_activation("sigmoid"), SMOOTH_TOL),
        ("tanh", _check_activation("tanh"), SMOOTH_TOL),
        ("sigmoid_chain", _check_sigmoid_chain, SMOOTH_TOL),
        ("batch_norm", _check_batch_norm, GENERAL_TOL),
        ("concat", _check_concat, GENERAL_TOL),
        ("broadcast_channels", _check_broadcast_channels, GENERAL_TOL),
        ("bce_real", _check_bce("real"), SMOOTH_TOL),
        ("bce_fake", _check_bce("fake"), SMOOTH_TOL),
        ("softmax_cross_entropy", _check_softmax_ce, GENERAL_TOL),
        ("blocks_log_likelihood", _check_blocks_ll, GENERAL_TOL),
        ("arithmetic", _check_arith, GENERAL_TOL),
        ("composite_gan_micro_network", _check_composite, GENERAL_TOL),
    ]
    return [CheckResult(name, float(fn()), tol) for name, fn, tol in entries]

"""Generator and discriminator architectures for the five GAN variants.

All variants share one conditional generator shape (noise concatenated with
the one-hot attribute encoding). Discriminators come in three shapes:

* joint conv discriminator over (image, broadcast one-hot channels) - used by
  the conditional variants 'c' and 'sc';
* trunk + real/fake head + attribute-classification head - 'ac' and 'sa';
* trunk + real/fake head + stacked conditional head fed by the trunk's
  penultimate activation h(x) concatenated with the one-hot attributes -
  'ss' (and 'u', the unsupervised baseline, which builds the trunk and
  real/fake head only).

Because every parameter is initialized from its own (seed, path) stream,
variants sharing shapes construct bit-identical initial parameters for a
shared seed.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import ParamSet, Tensor
from .data import AttributeSpec, NoiseSpec, one_hot
from .ioutil import atomic_write_bytes, atomic_write_text


class GanVariant(str, Enum):
    C_GAN = "c"     # joint conditional GAN, fully supervised reference
    AC_GAN = "ac"   # auxiliary-classifier GAN, fully supervised reference
    SC_GAN = "sc"   # joint conditional GAN on the labeled subset only
    SA_GAN = "sa"   # auxiliary-classifier GAN, semi-supervised
    SS_GAN = "ss"   # stacked-discriminator semi-supervised GAN
    U_GAN = "u"     # unsupervised objective on the shared architecture (baseline)

    @classmethod
    def parse(cls, s) -> "GanVariant":
        if isinstance(s, cls):
            return s
        try:
            return cls(str(s).lower())
        except ValueError:
            raise ValueError(f"unknown variant {s!r}; choose from "
                             f"{[v.value for v in cls]}") from None


JOINT_VARIANTS = (GanVariant.C_GAN, GanVariant.SC_GAN)
ATTR_VARIANTS = (GanVariant.AC_GAN, GanVariant.SA_GAN)
STACKED_VARIANTS = (GanVariant.SS_GAN, GanVariant.U_GAN)


@dataclass(frozen=True)
class ArchConfig:
    image_side: int = 28
    channels: int = 1
    gen_base: int = 64    # feature maps at the 1/4-resolution grid
    gen_mid: int = 32
    disc_c1: int = 32
    disc_c2: int = 64
    feat_width: int = 128  # width of h(x)
    head_hidden: int = 64  # stacked conditional head hidden width

    def __post_init__(self):
        if self.image_side % 4:
            raise ValueError(f"image side must be divisible by 4, got {self.image_side}")

    @property
    def quarter(self) -> int:
        return self.image_side // 4


class _Dense:
    def __init__(self, ps: ParamSet, path: str, fan_in: int, fan_out: int, seed: int,
                 bias: bool = True):
        self.w = ad.gaussian_param(ps, path + ".w", (fan_in, fan_out), seed)
        self.b = ad.zeros_param(ps, path + ".b", (fan_out,)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = ad.matmul(x, self.w)
        return ad.add(out, self.b) if self.b is not None else out


class _ConvDown:
    def __init__(self, ps: ParamSet, path: str, c_in: int, c_out: int, seed: int,
                 bias: bool = False):
        self.k = ad.gaussian_param(ps, path + ".k", (c_out, c_in, 4, 4), seed)
        self.b = ad.zeros_param(ps, path + ".b", (c_out,)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = ad.conv2d_down(x, self.k)
        if self.b is not None:
            out = ad.add(out, ad.reshape(self.b, (1, -1, 1, 1)))
        return out


class _ConvUp:
    def __init__(self, ps: ParamSet, path: str, c_in: int, c_out: int, seed: int,
                 bias: bool = False):
        self.k = ad.gaussian_param(ps, path + ".k", (c_in, c_out, 4, 4), seed)
        self.b = ad.zeros_param(ps, path + ".b", (c_out,)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        out = ad.conv2d_up(x, self.k)
        if self.b is not None:
            out = ad.add(out, ad.reshape(self.b, (1, -1, 1, 1)))
        return out


class _BN:
    def __init__(self, ps: ParamSet, states: dict, path: str, channels: int):
        self.gamma = ad.ones_param(ps, path + ".g", (channels,))
        self.beta = ad.zeros_param(ps, path + ".b", (channels,))
        self.state = states.setdefault(path, ad.BatchNormState(channels))

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        return ad.batch_norm(x, self.gamma, self.beta, self.state, train)


class GanModel:
    """One variant's generator/discriminator parameter collections."""

    def __init__(self, variant: GanVariant, spec: AttributeSpec | None,
                 noise: NoiseSpec, arch: ArchConfig, seed: int):
        self.variant = GanVariant.parse(variant)
        self.spec = spec
        self.noise = noise
        self.arch = arch
        self.seed = seed
        self.gen = ParamSet()
        self.disc = ParamSet()
        self.bn_states: dict[str, ad.BatchNormState] = {}
        cond_width = spec.onehot_width if spec is not None else 0

        a = arch
        # generator: dense(z||y -> base * (side/4)^2) -> up(base->mid) -> up(mid->channels, tanh)
        self._g_fc = _Dense(self.gen, "gen.fc", noise.dim + cond_width,
                            a.gen_base * a.quarter * a.quarter, seed, bias=False)
        self._g_bn0 = _BN(self.gen, self.bn_states, "gen.bn0", a.gen_base)
        self._g_up1 = _ConvUp(self.gen, "gen.up1", a.gen_base, a.gen_mid, seed)
        self._g_bn1 = _BN(self.gen, self.bn_states, "gen.bn1", a.gen_mid)
        self._g_up2 = _ConvUp(self.gen, "gen.up2", a.gen_mid, a.channels, seed, bias=True)

        # discriminator trunk; the joint variants take extra one-hot channels
        in_ch = a.channels + (cond_width if self.variant in JOINT_VARIANTS else 0)
        self._d_c1 = _ConvDown(self.disc, "disc.c1", in_ch, a.disc_c1, seed)
        self._d_bn1 = _BN(self.disc, self.bn_states, "disc.bn1", a.disc_c1)
        self._d_c2 = _ConvDown(self.disc, "disc.c2", a.disc_c1, a.disc_c2, seed)
        self._d_bn2 = _BN(self.disc, self.bn_states, "disc.bn2", a.disc_c2)
        flat = a.disc_c2 * a.quarter * a.quarter
        self._d_fc = _Dense(self.disc, "disc.fc", flat, a.feat_width, seed)
        self._d_out = _Dense(self.disc, "disc.rf", a.feat_width, 1, seed)

        if self.variant in ATTR_VARIANTS:
            self._d_attr = _Dense(self.disc, "disc.attr", a.feat_width, cond_width, seed)
        if self.variant is GanVariant.SS_GAN:
            self._d_head1 = _Dense(self.disc, "disc.head.fc1", a.feat_width + cond_width,
                                   a.head_hidden, seed)
            self._d_head2 = _Dense(self.disc, "disc.head.fc2", a.head_hidden, 1, seed)

    @property
    def is_conditional(self) -> bool:
        return self.spec is not None

    def encode_attrs(self, y) -> Tensor:
        return Tensor(one_hot(y, self.spec))


def build_model(variant, spec, noise: NoiseSpec | None = None,
                arch: ArchConfig | None = None, seed: int = 0) -> GanModel:
    return GanModel(GanVariant.parse(variant), spec, noise or NoiseSpec(),
                    arch or ArchConfig(), seed)


# ---------------------------------------------------------------------------
# forward passes

def generator_forward(model: GanModel, z: Tensor, y=None, train: bool = True) -> Tensor:
    """tanh-bounded images from noise (and attributes for conditional models)."""
    if model.is_conditional:
        if y is None:
            raise ValueError(f"variant {model.variant.value!r} needs attributes y")
        enc = model.encode_attrs(y)
        if enc.data.ndim == 1:
            enc = Tensor(enc.data[None, :])
        if enc.shape[0] != z.shape[0]:
            raise ad.ShapeError(f"batch mismatch: z has {z.shape[0]}, y has {enc.shape[0]}")
        gin = ad.concat(z, enc, axis=1)
    else:
        gin = z
    a = model.arch
    x = model._g_fc(gin)
    x = ad.reshape(x, (z.shape[0], a.gen_base, a.quarter, a.quarter))
    x = ad.relu(model._g_bn0(x, train))
    x = ad.relu(model._g_bn1(model._g_up1(x), train))
    return ad.tanh(model._g_up2(x))


def _trunk(model: GanModel, x: Tensor, train: bool) -> Tensor:
    t = ad.leaky_relu(model._d_bn1(model._d_c1(x), train))
    t = ad.leaky_relu(model._d_bn2(model._d_c2(t), train))
    return ad.leaky_relu(model._d_fc(ad.flatten(t)))


def disc_unsup_forward(model: GanModel, x: Tensor, train: bool = True):
    """(p_real, h): real/fake probability and the penultimate activation."""
    if model.variant in JOINT_VARIANTS:
        raise ValueError(f"variant {model.variant.value!r} has no unconditional discriminator")
    h = _trunk(model, x, train)
    return ad.sigmoid(model._d_out(h)), h


def disc_cond_forward(model: GanModel, x_or_h: Tensor, y, train: bool = True) -> Tensor:
    """Joint (image, attributes) real/fake probability.

    For 'c'/'sc' the first argument is the raw image; the one-hot encoding is
    broadcast to constant channels and concatenated at the input. For 'ss' it
    is h(x), concatenated with the one-hot encoding and fed to the dense head.
    """
    enc = model.encode_attrs(y)
    if enc.data.ndim == 1:
        enc = Tensor(enc.data[None, :])
    if model.variant in JOINT_VARIANTS:
        if x_or_h.data.ndim != 4:
            raise ValueError(f"variant {model.variant.value!r} expects raw images [B,C,H,W], "
                             f"got shape {x_or_h.shape}")
        planes = ad.broadcast_channels(enc, x_or_h.shape[2], x_or_h.shape[3])
        joint = ad.concat(x_or_h, planes, axis=1)
        return ad.sigmoid(model._d_out(_trunk(model, joint, train)))
    if model.variant is GanVariant.SS_GAN:
        if x_or_h.data.ndim != 2 or x_or_h.shape[1] != model.arch.feat_width:
            raise ValueError(f"stacked head expects features [B,{model.arch.feat_width}], "
                             f"got shape {x_or_h.shape}")
        hin = ad.concat(x_or_h, enc, axis=1)
        return ad.sigmoid(model._d_head2(ad.leaky_relu(model._d_head1(hin))))
    raise ValueError(f"variant {model.variant.value!r} has no conditional discriminator")


def disc_acgan_forward(model: GanModel, x: Tensor, train: bool = True):
    """(p_real, class logits [B, d*K]) from the shared trunk."""
    if model.variant not in ATTR_VARIANTS:
        raise ValueError(f"variant {model.variant.value!r} has no attribute head")
    h = _trunk(model, x, train)
    return ad.sigmoid(model._d_out(h)), model._d_attr(h)


# ---------------------------------------------------------------------------
# checkpoints: JSON manifest + float32 blocks ordered lexicographically by key

CHECKPOINT_FORMAT = "ssgan-checkpoint-v1"


def _block_map(model: GanModel) -> dict[str, np.ndarray]:
    blocks: dict[str, np.ndarray] = {}
    for prefix, ps in (("gen", model.gen), ("disc", model.disc)):
        for path, p in ps.items():
            blocks[f"param/{prefix}/{path}"] = p.data
            st = ps.state(path)
            blocks[f"adam_m/{prefix}/{path}"] = st.m
            blocks[f"adam_v/{prefix}/{path}"] = st.v
    for path, st in sorted(model.bn_states.items()):
        blocks[f"buffer/{path}.mean"] = st.mean
        blocks[f"buffer/{path}.var"] = st.var
    return blocks


def save_checkpoint(model: GanModel, prefix, step: int, extra: dict | None = None) -> None:
    prefix = Path(prefix)
    blocks = _block_map(model)
    adam_t = {}
    for ps_name, ps in (("gen", model.gen), ("disc", model.disc)):
        for path in ps.paths():
            adam_t[f"{ps_name}/{path}"] = ps.state(path).t
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "variant": model.variant.value,
        "arch": asdict(model.arch),
        "spec": {"d": model.spec.d, "K": model.spec.K} if model.spec else None,
        "noise": {"dim": model.noise.dim, "distribution": model.noise.distribution},
        "seed": model.seed,
        "step": step,
        "adam_t": adam_t,
        "blocks": [{"key": k, "shape": list(blocks[k].shape)} for k in sorted(blocks)],
        "extra": extra or {},
    }
    payload = b"".join(np.ascontiguousarray(blocks[k], dtype="<f4").tobytes()
                       for k in sorted(blocks))
    atomic_write_text(prefix.with_suffix(".json"), json.dumps(manifest, sort_keys=True, indent=1))
    atomic_write_bytes(prefix.with_suffix(".bin"), payload)


class CheckpointError(ValueError):
    pass


def load_checkpoint(prefix):
    """Rebuild the model from a checkpoint; returns (model, step, extra)."""
    prefix = Path(prefix)
    json_path = prefix if prefix.suffix == ".json" else prefix.with_suffix(".json")
    try:
        manifest = json.loads(json_path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointError(f"cannot read checkpoint manifest {json_path}: {e}") from None
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{json_path}: not a {CHECKPOINT_FORMAT} manifest")
    spec = AttributeSpec(**manifest["spec"]) if manifest["spec"] else None
    model = GanModel(GanVariant.parse(manifest["variant"]), spec,
                     NoiseSpec(**manifest["noise"]),
                     ArchConfig(**manifest["arch"]), manifest["seed"])
    blocks = _block_map(model)
    expected = sorted(blocks)
    listed = [b["key"] for b in manifest["blocks"]]
    if listed != expected:
        raise CheckpointError(f"{json_path}: block list does not match architecture")
    raw = json_path.with_suffix(".bin").read_bytes()
    offset = 0
    for entry in manifest["blocks"]:
        arr = blocks[entry["key"]]
        nbytes = arr.size * 4
        chunk = np.frombuffer(raw[offset:offset + nbytes], dtype="<f4")
        if chunk.size != arr.size:
            raise CheckpointError(f"{json_path}: truncated block {entry['key']}")
        arr[...] = chunk.reshape(arr.shape)
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"{json_path}: trailing bytes in block file")
    for key, t in manifest["adam_t"].items():
        ps_name, _, path = key.partition("/")
        ps = model.gen if ps_name == "gen" else model.disc
        ps.state(path).t = int(t)
    return model, int(manifest["step"]), manifest.get("extra", {})

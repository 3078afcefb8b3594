"""Synthetic mixture corpus: one oriented Gaussian blob per attribute combination.

Each of the K^d attribute combinations maps to a distinct prototype (ring
position plus orientation of an anisotropic blob). Per-sample style jitter
(position, orientation, scale, amplitude) gives within-class diversity; the
`plain` preset keeps prototypes linearly separable, the `styled` preset makes
style dominate pixel distance, which is what the semi-supervised experiments
need (few labeled examples cover only a corner of each class's styles).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..rng import stream
from .split import AttributeSpec, Dataset


@dataclass(frozen=True)
class StyleParams:
    pos_jitter: float = 0.02    # center jitter disk radius, fraction of side
    angle_jitter: float = 0.03  # orientation jitter, radians
    scale_jitter: float = 0.08  # axis-length multiplier half-range
    amp_jitter: float = 0.08    # amplitude drop half-range


PLAIN_STYLE = StyleParams()
STYLED = StyleParams(pos_jitter=0.14, angle_jitter=0.10, scale_jitter=0.25, amp_jitter=0.35)

STYLE_PRESETS = {"plain": PLAIN_STYLE, "styled": STYLED}

_MIN_RING_SPACING = 1.5  # px between neighboring prototype centers


def _combo_to_values(q: int, spec: AttributeSpec) -> np.ndarray:
    vals = np.empty(spec.d, dtype=np.int64)
    for i in range(spec.d - 1, -1, -1):
        vals[i] = q % spec.K
        q //= spec.K
    return vals


def synth_mixture(spec: AttributeSpec, per_class: int, image_side: int, seed: int,
                  style: StyleParams = PLAIN_STYLE) -> Dataset:
    """Deterministic labeled dataset with per_class samples per combination."""
    q_total = spec.combos
    ring = 0.24 * image_side
    if q_total > 1 and 2 * np.pi * ring / q_total < _MIN_RING_SPACING:
        raise ValueError(f"K^d = {q_total} prototypes do not fit side {image_side}")

    rng = stream(seed, "synth")
    count = q_total * per_class
    images = np.empty((count, 1, image_side, image_side), dtype=np.float32)
    labels = np.empty((count, spec.d), dtype=np.int64)

    c0 = (image_side - 1) / 2.0
    ax_a = 0.16 * image_side
    ax_b = 0.055 * image_side
    yy, xx = np.mgrid[0:image_side, 0:image_side].astype(np.float64)

    row = 0
    for q in range(q_total):
        phi = 2 * np.pi * q / q_total + 0.42
        psi0 = np.pi * q / q_total
        cx0 = c0 + ring * np.cos(phi)
        cy0 = c0 + ring * np.sin(phi)
        vals = _combo_to_values(q, spec)
        for _ in range(per_class):
            r = style.pos_jitter * image_side * np.sqrt(rng.random())
            th = rng.random() * 2 * np.pi
            cx = cx0 + r * np.cos(th)
            cy = cy0 + r * np.sin(th)
            psi = psi0 + rng.uniform(-style.angle_jitter, style.angle_jitter)
            sa = ax_a * (1.0 + rng.uniform(-style.scale_jitter, style.scale_jitter))
            sb = ax_b * (1.0 + rng.uniform(-style.scale_jitter, style.scale_jitter))
            amp = 1.0 - rng.random() * style.amp_jitter
            dx = xx - cx
            dy = yy - cy
            u = np.cos(psi) * dx + np.sin(psi) * dy
            v = -np.sin(psi) * dx + np.cos(psi) * dy
            val = amp * np.exp(-0.5 * ((u / sa) ** 2 + (v / sb) ** 2))
            images[row, 0] = (2.0 * val - 1.0).astype(np.float32)
            labels[row] = vals
            row += 1

    perm = stream(seed, "synth/shuffle").permutation(count)
    return Dataset(images[perm], labels[perm], spec)


def save_dataset(ds: Dataset, prefix) -> None:
    """JSON manifest + raw little-endian float32 image block."""
    prefix = Path(prefix)
    manifest = {
        "spec": {"d": ds.spec.d, "K": ds.spec.K} if ds.spec else None,
        "side": ds.side,
        "count": len(ds),
        "labels": ds.labels.tolist() if ds.labels is not None else None,
    }
    prefix.with_suffix(".json").write_text(json.dumps(manifest, sort_keys=True))
    ds.images.astype("<f4").tofile(prefix.with_suffix(".f32"))


def load_dataset(prefix) -> Dataset:
    prefix = Path(prefix)
    manifest = json.loads(prefix.with_suffix(".json").read_text())
    spec = AttributeSpec(**manifest["spec"]) if manifest["spec"] else None
    images = np.fromfile(prefix.with_suffix(".f32"), dtype="<f4")
    images = images.reshape(manifest["count"], 1, manifest["side"], manifest["side"])
    labels = np.asarray(manifest["labels"], dtype=np.int64) if manifest["labels"] is not None else None
    return Dataset(np.ascontiguousarray(images, dtype=np.float32), labels, spec)


def style_preset(name: str) -> StyleParams:
    try:
        return STYLE_PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown style preset {name!r}; choose from {sorted(STYLE_PRESETS)}") from None


def style_to_dict(style: StyleParams) -> dict:
    return asdict(style)

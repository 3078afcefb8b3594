"""Attribute encoding, dataset container, and the labeled/unlabeled partition.

The split object is the single gatekeeper for training-time data access:
every batch is fetched through a consumer-tagged read method, and per-consumer
counters record how many labeled vs unlabeled images were touched. The
routing rules of the model variants are verified against these counters.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from ..rng import stream


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class AttributeSpec:
    """d discrete attribute dimensions, each with K classes."""

    d: int
    K: int

    def __post_init__(self):
        if self.d < 1 or self.K < 2:
            raise ValueError(f"need d >= 1 and K >= 2, got d={self.d}, K={self.K}")

    @property
    def onehot_width(self) -> int:
        return self.d * self.K

    @property
    def combos(self) -> int:
        return self.K ** self.d


@dataclass(frozen=True)
class AttributeVector:
    values: tuple[int, ...]

    def validate(self, spec: AttributeSpec) -> None:
        if len(self.values) != spec.d or any(v < 0 or v >= spec.K for v in self.values):
            raise ValueError(f"attribute vector {self.values} invalid for d={spec.d}, K={spec.K}")


@dataclass(frozen=True)
class NoiseSpec:
    dim: int = 64
    distribution: str = "uniform"  # uniform[-1,1] or standard normal

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"noise dim must be >= 1, got {self.dim}")
        if self.distribution not in ("uniform", "normal"):
            raise ValueError(f"unknown noise distribution {self.distribution!r}")


class Dataset:
    """Images in [-1,1] float32 [N,1,H,W] with optional integer labels [N,d]."""

    def __init__(self, images: np.ndarray, labels: np.ndarray | None, spec: AttributeSpec | None):
        if images.ndim != 4 or images.dtype != np.float32:
            raise ValueError(f"images must be float32 [N,1,H,W], got {images.shape} {images.dtype}")
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64)
            if labels.ndim == 1:
                labels = labels[:, None]
            if labels.shape[0] != images.shape[0]:
                raise ValueError(f"{labels.shape[0]} labels for {images.shape[0]} images")
        self.images = images
        self.labels = labels
        self.spec = spec
        self._hash: str | None = None

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def side(self) -> int:
        return self.images.shape[2]

    @property
    def content_hash(self) -> str:
        if self._hash is None:
            h = hashlib.sha256()
            h.update(self.images.tobytes())
            if self.labels is not None:
                h.update(self.labels.tobytes())
            self._hash = h.hexdigest()
        return self._hash


def one_hot(y, spec: AttributeSpec) -> np.ndarray:
    """Encode attributes as d stacked one-hot blocks of width K (float32).

    Accepts an AttributeVector, a [d] vector, or a [B,d] batch; returns
    [d*K] or [B,d*K] respectively.
    """
    if isinstance(y, AttributeVector):
        y.validate(spec)
        y = np.asarray(y.values)
    y = np.asarray(y, dtype=np.int64)
    squeeze = y.ndim == 1
    if squeeze:
        y = y[None, :]
    if y.shape[1] != spec.d:
        raise ValueError(f"attribute batch has {y.shape[1]} dims, spec says {spec.d}")
    if y.min(initial=0) < 0 or y.max(initial=0) >= spec.K:
        raise ValueError(f"attribute value out of range [0,{spec.K})")
    b = y.shape[0]
    out = np.zeros((b, spec.d, spec.K), dtype=np.float32)
    out[np.arange(b)[:, None], np.arange(spec.d)[None, :], y] = 1.0
    out = out.reshape(b, spec.onehot_width)
    return out[0] if squeeze else out


def decode_one_hot(enc: np.ndarray, spec: AttributeSpec) -> np.ndarray:
    """Inverse of one_hot: argmax per block."""
    enc = np.asarray(enc)
    squeeze = enc.ndim == 1
    if squeeze:
        enc = enc[None, :]
    y = enc.reshape(enc.shape[0], spec.d, spec.K).argmax(axis=2)
    return y[0] if squeeze else y


def sample_noise(batch: int, spec: NoiseSpec, rng: np.random.Generator) -> np.ndarray:
    if spec.distribution == "uniform":
        return rng.random((batch, spec.dim), dtype=np.float32) * np.float32(2.0) - np.float32(1.0)
    return rng.standard_normal((batch, spec.dim), dtype=np.float32)


class SemiSupervisedSplit:
    """First-n-labeled / next-m-unlabeled partition of a dataset.

    Labels of the unlabeled pool stay on the dataset for evaluation oracles
    and the fully supervised reference variants; the semi-supervised access
    methods never return them.
    """

    def __init__(self, dataset: Dataset, labeled_idx: np.ndarray, unlabeled_idx: np.ndarray, seed: int):
        if dataset.labels is None:
            raise SplitError("split needs a labeled dataset")
        inter = np.intersect1d(labeled_idx, unlabeled_idx)
        if inter.size:
            raise SplitError(f"labeled/unlabeled overlap at dataset indices {inter[:5]}")
        self.dataset = dataset
        self.spec = dataset.spec
        self.seed = seed
        self.labeled_idx = np.asarray(labeled_idx, dtype=np.int64)
        self.unlabeled_idx = np.asarray(unlabeled_idx, dtype=np.int64)
        self.counters: dict[str, dict[str, int]] = {}

    @property
    def n(self) -> int:
        return len(self.labeled_idx)

    @property
    def m(self) -> int:
        return len(self.unlabeled_idx)

    @property
    def pool_size(self) -> int:
        return self.n + self.m

    def _count(self, consumer: str, labeled: int, unlabeled: int) -> None:
        c = self.counters.setdefault(consumer, {"labeled": 0, "unlabeled": 0})
        c["labeled"] += int(labeled)
        c["unlabeled"] += int(unlabeled)

    def unlabeled_reads(self, consumer: str | None = None) -> int:
        if consumer is not None:
            return self.counters.get(consumer, {}).get("unlabeled", 0)
        return sum(c["unlabeled"] for c in self.counters.values())

    def labeled_reads(self, consumer: str | None = None) -> int:
        if consumer is not None:
            return self.counters.get(consumer, {}).get("labeled", 0)
        return sum(c["labeled"] for c in self.counters.values())

    # -- training-time access -------------------------------------------------

    def take_labeled(self, positions: np.ndarray, consumer: str):
        """Labeled pairs by position in [0, n)."""
        idx = self.labeled_idx[positions]
        self._count(consumer, len(idx), 0)
        return self.dataset.images[idx], self.dataset.labels[idx]

    def take_pool(self, positions: np.ndarray, consumer: str) -> np.ndarray:
        """Images only, by pool position in [0, n+m); labeled pool comes first."""
        positions = np.asarray(positions)
        lab = positions < self.n
        idx = np.where(lab, self.labeled_idx[np.minimum(positions, self.n - 1)] if self.n else 0,
                       self.unlabeled_idx[np.maximum(positions - self.n, 0)] if self.m else 0)
        self._count(consumer, int(lab.sum()), int((~lab).sum()))
        return self.dataset.images[idx]

    def take_supervised(self, positions: np.ndarray, consumer: str):
        """(image, label) pairs over the whole pool: the fully supervised view.

        Only the supervised reference variants and evaluation oracles may use
        this; reads are counted like pool reads.
        """
        positions = np.asarray(positions)
        lab = positions < self.n
        idx = np.where(lab, self.labeled_idx[np.minimum(positions, self.n - 1)] if self.n else 0,
                       self.unlabeled_idx[np.maximum(positions - self.n, 0)] if self.m else 0)
        self._count(consumer, int(lab.sum()), int((~lab).sum()))
        return self.dataset.images[idx], self.dataset.labels[idx]

    # -- evaluation-side views (not counted; oracle privilege) ----------------

    def labeled_images(self) -> np.ndarray:
        return self.dataset.images[self.labeled_idx]

    def labeled_labels(self) -> np.ndarray:
        return self.dataset.labels[self.labeled_idx]

    def unlabeled_images(self) -> np.ndarray:
        return self.dataset.images[self.unlabeled_idx]

    def split_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.dataset.content_hash.encode())
        h.update(np.int64([self.n, self.m, self.seed]).tobytes())
        h.update(self.labeled_idx.tobytes())
        h.update(self.unlabeled_idx.tobytes())
        return h.hexdigest()


def make_semi_split(dataset: Dataset, n: int, m: int, seed: int) -> SemiSupervisedSplit:
    """Class-balanced (for d=1) labeled subset of size n plus m unlabeled."""
    if dataset.labels is None:
        raise SplitError("make_semi_split needs a labeled dataset")
    total = len(dataset)
    if n + m > total:
        raise SplitError(f"n+m = {n + m} exceeds dataset size {total}")
    spec = dataset.spec
    if spec is not None and spec.d == 1:
        labels = dataset.labels[:, 0]
        k = spec.K
        per = [n // k] * k
        order = stream(seed, "split/extra-classes").permutation(k)
        for c in order[: n % k]:
            per[c] += 1
        chosen = []
        for c in range(k):
            members = np.flatnonzero(labels == c)
            if len(members) < per[c]:
                raise SplitError(f"class {c} has {len(members)} members, need {per[c]}")
            picks = stream(seed, f"split/class{c}").permutation(members)[: per[c]]
            chosen.append(picks)
        labeled_idx = np.sort(np.concatenate(chosen))
    else:
        perm = stream(seed, "split/labeled").permutation(total)
        labeled_idx = np.sort(perm[:n])
    rest = np.setdiff1d(np.arange(total), labeled_idx)
    rest = stream(seed, "split/unlabeled").permutation(rest)
    unlabeled_idx = np.sort(rest[:m])
    return SemiSupervisedSplit(dataset, labeled_idx, unlabeled_idx, seed)


def sample_attributes(batch: int, split: SemiSupervisedSplit, rng: np.random.Generator) -> np.ndarray:
    """Attribute draws for fake samples: uniform for d=1, labeled-set marginals for d>1."""
    spec = split.spec
    if split.n == 0:
        raise SplitError("sample_attributes needs a non-empty labeled set")
    if batch == 0:
        return np.zeros((0, spec.d), dtype=np.int64)
    if spec.d == 1:
        return rng.integers(0, spec.K, size=(batch, 1))
    labels = split.labeled_labels()
    out = np.empty((batch, spec.d), dtype=np.int64)
    for dim in range(spec.d):
        counts = np.bincount(labels[:, dim], minlength=spec.K).astype(np.float64)
        out[:, dim] = rng.choice(spec.K, size=batch, p=counts / counts.sum())
    return out

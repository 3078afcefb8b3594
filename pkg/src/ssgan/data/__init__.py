"""Dataset ingestion, synthesis, attribute encoding, and split handling."""

from .idx import (
    IdxCountError,
    IdxError,
    IdxMagicError,
    IdxTruncatedError,
    load_idx,
    write_idx_images,
    write_idx_labels,
)
from .split import (
    AttributeSpec,
    AttributeVector,
    Dataset,
    NoiseSpec,
    SemiSupervisedSplit,
    SplitError,
    decode_one_hot,
    make_semi_split,
    one_hot,
    sample_attributes,
    sample_noise,
)
from .synthetic import (
    PLAIN_STYLE,
    STYLED,
    StyleParams,
    load_dataset,
    save_dataset,
    style_preset,
    synth_mixture,
)

__all__ = [name for name in dir() if not name.startswith("_")]

"""Semi-supervised conditional GAN laboratory on a compact autodiff core."""

__version__ = "0.1.0"

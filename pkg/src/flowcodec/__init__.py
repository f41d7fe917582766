"""Toy learned video codec with supervised flow fine-tuning and encode-time latent optimization."""

__version__ = "0.1.0"

"""Mask-guided face de-identification engine with pluggable differentiable
models, latent-space loss optimization, multi-band merging, and an attack
evaluation harness."""

__version__ = "0.1.0"

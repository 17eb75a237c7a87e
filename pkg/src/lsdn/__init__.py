"""Latent SDE imitation learning for turn-based leader/follower games."""

__version__ = "0.1.0"

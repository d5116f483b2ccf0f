"""Ensembling of class-probability grids."""

from .fusion import as_weights, fuse, max_prob_fuse, vote_fuse, weighted_average

__all__ = ["as_weights", "fuse", "max_prob_fuse", "vote_fuse", "weighted_average"]

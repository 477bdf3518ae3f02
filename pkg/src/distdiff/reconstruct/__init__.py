"""Reconstruction from distance-difference data: embedding, charts, sigma-sets, projective checks."""

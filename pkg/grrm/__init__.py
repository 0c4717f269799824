"""Generalized robust risk minimization over finite spaces."""

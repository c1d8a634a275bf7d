"""Deterministic mock AI backends: ridge regressor, hash embedder, generative mock."""

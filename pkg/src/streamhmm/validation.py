"""Input validation helpers shared by the estimator, runner, and CLI."""

import numpy as np

from .errors import InputError


def as_feature_matrix(X, name: str = "X") -> np.ndarray:
    """Coerce to a C-contiguous (T, d) float64 matrix; reject NaN/inf."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InputError(f"{name} must be 2-D (frames x features), got shape {X.shape}")
    if X.size and not np.all(np.isfinite(X)):
        raise InputError(f"{name} contains NaN or inf")
    return np.ascontiguousarray(X)


def as_label_vector(y, n_states: int | None = None, name: str = "y") -> np.ndarray:
    """Coerce to a 1-D int64 label vector, optionally range-checked to [0, n_states)."""
    y = np.asarray(y)
    if y.ndim != 1:
        raise InputError(f"{name} must be 1-D, got shape {y.shape}")
    if y.size and not np.issubdtype(y.dtype, np.number):
        raise InputError(f"{name} must be integer-valued")
    yi = y.astype(np.int64)
    if y.size and np.any(yi != np.asarray(y, dtype=np.float64)):
        raise InputError(f"{name} must be integer-valued")
    if n_states is not None and y.size and (yi.min() < 0 or yi.max() >= n_states):
        raise InputError(
            f"{name} entries must lie in [0, {n_states}), got range "
            f"[{yi.min()}, {yi.max()}]"
        )
    return yi


def check_same_length(a, b, names=("features", "labels")):
    if len(a) != len(b):
        raise InputError(f"{names[0]} and {names[1]} disagree on length: {len(a)} vs {len(b)}")


def split_lengths(X: np.ndarray, lengths) -> list[np.ndarray]:
    """Split a concatenated frame matrix into per-sequence blocks."""
    if lengths is None:
        return [X]
    lengths = np.asarray(lengths, dtype=np.int64)
    if np.any(lengths <= 0):
        raise InputError("sequence lengths must be positive")
    if int(lengths.sum()) != len(X):
        raise InputError(
            f"sum of lengths ({int(lengths.sum())}) does not match number of frames ({len(X)})"
        )
    bounds = np.cumsum(lengths)[:-1]
    return np.split(X, bounds)


def as_generator(seed_or_rng) -> np.random.Generator:
    """Accept None, an int seed, a SeedSequence, or a Generator."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)

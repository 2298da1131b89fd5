"""CSV formats for features, labels, and diagnostics traces.

Feature files carry a frame index column followed by one column per feature
(header ``t,f0,f1,...``); label files carry ``t,label``.  Floats are written
with shortest round-trip formatting so a write/read cycle is lossless.
"""

import csv
from pathlib import Path

import numpy as np

from .errors import InputError
from .validation import as_feature_matrix, as_label_vector

TRACE_COLUMNS = (
    "batch", "sweep", "loglik",
    "tau_mu", "tau_sigma", "tau_beta", "tau_pi",
    "accepted_beta", "accepted_pi",
)


def write_features_csv(path, Y: np.ndarray) -> None:
    Y = as_feature_matrix(Y, "features")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + [f"f{i}" for i in range(Y.shape[1])])
        for t, row in enumerate(Y):
            writer.writerow([t] + [repr(float(v)) for v in row])


def read_features_csv(path) -> np.ndarray:
    rows = list(stream_features_csv(path))
    if not rows:
        return np.zeros((0, 1))
    return np.vstack(rows)


def stream_features_csv(path):
    """Yield one float64 frame vector per row, validating the header lazily."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"feature file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[0] != "t" or len(header) < 2:
            raise InputError(f"{path}: expected header 't,f0,...', got {header}")
        width = len(header) - 1
        for lineno, row in enumerate(reader, start=2):
            if len(row) != width + 1:
                raise InputError(f"{path}:{lineno}: expected {width + 1} columns, got {len(row)}")
            try:
                yield np.array([float(v) for v in row[1:]], dtype=np.float64)
            except ValueError:
                raise InputError(f"{path}:{lineno}: non-numeric feature value") from None


def write_labels_csv(path, labels: np.ndarray) -> None:
    labels = as_label_vector(labels, name="labels")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "label"])
        for t, lab in enumerate(labels):
            writer.writerow([t, int(lab)])


def read_labels_csv(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise InputError(f"label file not found: {path}")
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["t", "label"]:
            raise InputError(f"{path}: expected header 't,label', got {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise InputError(f"{path}:{lineno}: expected 2 columns")
            try:
                out.append(int(row[1]))
            except ValueError:
                raise InputError(f"{path}:{lineno}: non-integer label") from None
    return np.asarray(out, dtype=np.int64)


class TraceWriter:
    """Appends one diagnostics row per sweep to a CSV file."""

    def __init__(self, path):
        path = Path(path)
        fresh = not path.exists() or path.stat().st_size == 0
        self._fh = open(path, "a", newline="")
        self._writer = csv.writer(self._fh)
        if fresh:
            self._writer.writerow(TRACE_COLUMNS)

    def write(self, batch: int, sweep: int, loglik: float,
              tau_mu: float, tau_sigma: float, tau_beta: float, tau_pi: float,
              accepted_beta: int, accepted_pi: int) -> None:
        self._writer.writerow([
            batch, sweep, repr(float(loglik)),
            repr(float(tau_mu)), repr(float(tau_sigma)),
            repr(float(tau_beta)), repr(float(tau_pi)),
            int(accepted_beta), int(accepted_pi),
        ])

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

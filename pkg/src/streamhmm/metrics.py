"""Evaluation of decoded labelings against ground truth.

Decoded state indices are arbitrary, so frame accuracy is computed after a
greedy correspondence pass: decoded labels are visited in decreasing
frequency order and each grabs the unmatched ground-truth class it agrees
with most.  Boundary precision/recall use a tolerance window proportional to
the mean true segment length, with one-to-one nearest-first matching.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .validation import as_label_vector, check_same_length

REPORT_COLUMNS = (
    "frame_accuracy", "boundary_precision", "boundary_recall", "f1",
    "cardinality_error",
)

# Fixed palette; ground-truth classes take colors in sorted order.
_PALETTE = (
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948",
    "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac", "#1170aa", "#5fa2ce",
)
_UNMATCHED_FILLS = ("#555555", "#8a8a8a")


@dataclass
class EvalReport:
    """All four metrics plus the label correspondence that produced them."""

    frame_accuracy: float
    boundary_precision: float
    boundary_recall: float
    f1: float
    cardinality_error: int
    matching: dict

    def to_text(self) -> str:
        lines = [f"{col}: {getattr(self, col):.6f}" for col in REPORT_COLUMNS[:4]]
        lines.append(f"cardinality_error: {self.cardinality_error:+d}")
        pairs = " ".join(f"{d}->{t}" for d, t in sorted(self.matching.items()))
        lines.append(f"matching: {pairs}" if pairs else "matching:")
        return "\n".join(lines) + "\n"

    def csv_row(self) -> str:
        vals = [f"{getattr(self, col):.6f}" for col in REPORT_COLUMNS[:4]]
        vals.append(str(self.cardinality_error))
        return ",".join(vals)

    @staticmethod
    def csv_header() -> str:
        return ",".join(REPORT_COLUMNS)


def _checked_pair(decoded, truth):
    decoded = as_label_vector(decoded, name="decoded")
    truth = as_label_vector(truth, name="truth")
    check_same_length(decoded, truth, ("decoded", "truth"))
    if len(decoded) == 0:
        raise InputError("cannot evaluate empty label vectors")
    return decoded, truth


def greedy_match(decoded, truth) -> tuple[dict, float]:
    """Frequency-ordered injective matching and the resulting frame accuracy.

    Ties in decoded frequency are broken toward the lower label, ties in
    agreement toward the lower ground-truth class; both only for determinism.
    A decoded label that agrees with no remaining class stays unmatched and
    all its frames count as errors.
    """
    decoded, truth = _checked_pair(decoded, truth)
    dec_labels, dec_counts = np.unique(decoded, return_counts=True)
    truth_labels = np.unique(truth)
    order = np.lexsort((dec_labels, -dec_counts))
    free = set(truth_labels.tolist())
    matching: dict = {}
    correct = 0
    for i in order:
        d = int(dec_labels[i])
        under = truth[decoded == d]
        best_t, best_agree = None, 0
        for t in truth_labels.tolist():
            if t not in free:
                continue
            agree = int(np.sum(under == t))
            if agree > best_agree:
                best_t, best_agree = t, agree
        if best_t is not None:
            matching[d] = int(best_t)
            free.remove(best_t)
            correct += best_agree
    return matching, correct / len(decoded)


def _boundaries(labels: np.ndarray) -> np.ndarray:
    """Frames t >= 1 where the label differs from frame t-1."""
    return np.flatnonzero(labels[1:] != labels[:-1]) + 1


def boundary_prf(decoded, truth, window_frac: float = 0.10) -> tuple[float, float, float]:
    """Boundary precision, recall, and F1 under a +-window tolerance.

    The window is ``round(window_frac * mean true-segment length)`` frames,
    inclusive on both sides.  Matching is one-to-one nearest-first; leftover
    decoded boundaries are false positives.  With no true boundaries, recall
    is vacuously 1; with no decoded boundaries, precision follows the
    no-detection convention and is 0 whenever a true boundary was missed.
    """
    decoded, truth = _checked_pair(decoded, truth)
    tb = _boundaries(truth)
    db = _boundaries(decoded)
    if tb.size == 0 and db.size == 0:
        return 1.0, 1.0, 1.0
    if db.size == 0:
        return 0.0, 0.0, 0.0
    if tb.size == 0:
        return 0.0, 1.0, 0.0
    window = int(round(window_frac * len(truth) / (tb.size + 1)))
    pairs = []
    for ti, t in enumerate(tb.tolist()):
        for di, d in enumerate(db.tolist()):
            dist = abs(d - t)
            if dist <= window:
                pairs.append((dist, ti, di))
    pairs.sort()
    used_t: set = set()
    used_d: set = set()
    for _, ti, di in pairs:
        if ti in used_t or di in used_d:
            continue
        used_t.add(ti)
        used_d.add(di)
    matched = len(used_t)
    precision = matched / db.size
    recall = matched / tb.size
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1


def cardinality_error(decoded, truth) -> int:
    """Signed difference in distinct label counts (decoded minus truth)."""
    decoded, truth = _checked_pair(decoded, truth)
    return int(np.unique(decoded).size - np.unique(truth).size)


def evaluate(decoded, truth, window_frac: float = 0.10) -> EvalReport:
    matching, acc = greedy_match(decoded, truth)
    precision, recall, f1 = boundary_prf(decoded, truth, window_frac)
    card = cardinality_error(decoded, truth)
    return EvalReport(acc, precision, recall, f1, card, matching)


def _runs(labels: np.ndarray) -> list:
    starts = np.concatenate([[0], _boundaries(labels)])
    ends = np.concatenate([starts[1:], [len(labels)]])
    return [(int(s), int(e), int(labels[s])) for s, e in zip(starts, ends)]


def render_strip(decoded, truth, matching: dict | None = None, path=None) -> str:
    """Two-row segmentation strip (predicted over truth) as an SVG document.

    Colors are assigned to ground-truth classes in sorted order; predicted
    segments inherit the color of their matched class, unmatched ones fall
    back to grays.  Returns the SVG text; also writes it when ``path`` is
    given.
    """
    decoded, truth = _checked_pair(decoded, truth)
    if matching is None:
        matching, _ = greedy_match(decoded, truth)
    T = len(truth)
    truth_classes = [int(t) for t in np.unique(truth)]
    color_of = {t: _PALETTE[i % len(_PALETTE)] for i, t in enumerate(truth_classes)}
    unmatched = [int(d) for d in np.unique(decoded) if int(d) not in matching]
    fallback = {d: _UNMATCHED_FILLS[i % len(_UNMATCHED_FILLS)] for i, d in enumerate(unmatched)}

    width, row_h, gap, label_w = 800.0, 34, 10, 72
    height = 2 * row_h + gap + 8
    px = width / T

    def row(labels, y, fill_of):
        rects = []
        for s, e, lab in _runs(labels):
            rects.append(
                f'<rect x="{label_w + s * px:.2f}" y="{y}" '
                f'width="{max((e - s) * px, 0.5):.2f}" height="{row_h}" '
                f'fill="{fill_of(lab)}"/>'
            )
        return rects

    def decoded_fill(d):
        if d in matching:
            return color_of[matching[d]]
        return fallback[d]

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" '
        f'width="{label_w + width:.0f}" height="{height}" '
        f'viewBox="0 0 {label_w + width:.0f} {height}">',
        f'<text x="0" y="{4 + row_h / 2:.0f}" font-size="12" '
        f'font-family="sans-serif" dominant-baseline="middle">predicted</text>',
        f'<text x="0" y="{4 + row_h + gap + row_h / 2:.0f}" font-size="12" '
        f'font-family="sans-serif" dominant-baseline="middle">truth</text>',
    ]
    parts += row(decoded, 4, decoded_fill)
    parts += row(truth, 4 + row_h + gap, lambda t: color_of[t])
    parts.append("</svg>")
    text = "\n".join(parts) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text

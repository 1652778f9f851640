"""Meta-evaluation: correlation with human scores, inter-annotator
agreement, dispersion statistics, and a character-overlap F1 baseline.

Kendall's tau is the tie-corrected tau-b, computed in O(n log n) with a
merge-sort inversion count; Krippendorff's alpha uses the interval metric
over pairable ratings and tolerates missing cells.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import (
    AlignmentError,
    EmptyText,
    InsufficientData,
    UndefinedAgreement,
    UndefinedCV,
    UndefinedCorrelation,
)


@dataclass(frozen=True)
class PairedScores:
    system: np.ndarray
    human: np.ndarray
    doc_ids: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "system", np.asarray(self.system, dtype=np.float64))
        object.__setattr__(self, "human", np.asarray(self.human, dtype=np.float64))
        if len(self.system) != len(self.human) or len(self.system) != len(self.doc_ids):
            raise ValueError("system/human/doc_ids lengths differ")
        if len(self.system) < 2:
            raise InsufficientData("need at least 2 paired scores")

    @classmethod
    def align(cls, system: dict[str, float], human: dict[str, float]) -> "PairedScores":
        missing_system = sorted(set(human) - set(system))
        missing_human = sorted(set(system) - set(human))
        if missing_system or missing_human:
            raise AlignmentError(
                f"ids missing from system: {missing_system[:5]}; "
                f"ids missing from human: {missing_human[:5]}"
            )
        ids = tuple(sorted(system))
        return cls(
            system=np.array([system[i] for i in ids]),
            human=np.array([human[i] for i in ids]),
            doc_ids=ids,
        )


class AnnotationMatrix:
    """raters x documents grid of scores; np.nan marks a missing cell."""

    def __init__(self, grid: np.ndarray):
        grid = np.asarray(grid, dtype=np.float64)
        if grid.ndim != 2 or grid.shape[0] < 2:
            raise ValueError("annotation matrix needs >= 2 raters")
        rated = np.sum(~np.isnan(grid), axis=0)
        if not np.any(rated >= 2):
            raise ValueError("at least one document needs >= 2 ratings")
        self.grid = grid

    @property
    def n_raters(self) -> int:
        return self.grid.shape[0]

    @property
    def n_documents(self) -> int:
        return self.grid.shape[1]


def pearson(p: PairedScores) -> float:
    return _pearson(p.system, p.human)


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    dx = x - x.mean()
    dy = y - y.mean()
    sx = float(dx @ dx)
    sy = float(dy @ dy)
    if sx == 0.0 or sy == 0.0:
        raise UndefinedCorrelation("correlation undefined for a constant series")
    return float((dx @ dy) / math.sqrt(sx * sy))


def average_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties assigned the mean of their rank positions."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        mean_rank = (i + j) / 2.0 + 1.0
        for idx in order[i : j + 1]:
            ranks[idx] = mean_rank
        i = j + 1
    return ranks


def spearman(p: PairedScores) -> float:
    return _pearson(average_ranks(p.system), average_ranks(p.human))


def _merge_count_inversions(values: list[float]) -> int:
    """Number of pairs i < j with values[i] > values[j]."""
    n = len(values)
    if n < 2:
        return 0
    work = list(values)
    buffer = [0.0] * n
    inversions = 0
    width = 1
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if work[i] <= work[j]:
                    buffer[k] = work[i]
                    i += 1
                else:
                    buffer[k] = work[j]
                    inversions += mid - i
                    j += 1
                k += 1
            while i < mid:
                buffer[k] = work[i]
                i += 1
                k += 1
            while j < hi:
                buffer[k] = work[j]
                j += 1
                k += 1
            work[lo:hi] = buffer[lo:hi]
        width *= 2
    return inversions


def _tie_pair_count(values) -> int:
    counts = Counter(values)
    return sum(c * (c - 1) // 2 for c in counts.values())


def kendall_tau(p: PairedScores) -> float:
    """Tau-b via sorted inversion counting; exact integer tallies."""
    x = [float(v) for v in p.system]
    y = [float(v) for v in p.human]
    n = len(x)
    order = sorted(range(n), key=lambda i: (x[i], y[i]))
    y_sorted = [y[i] for i in order]

    n0 = n * (n - 1) // 2
    n1 = _tie_pair_count(x)
    n2 = _tie_pair_count(y)
    n_joint = _tie_pair_count(list(zip(x, y)))
    discordant = _merge_count_inversions(y_sorted)
    concordant = n0 - n1 - n2 + n_joint - discordant

    denom_sq = (n0 - n1) * (n0 - n2)
    if denom_sq <= 0:
        raise UndefinedCorrelation("tau-b undefined when a series is fully tied")
    return (concordant - discordant) / math.sqrt(denom_sq)


def krippendorff_alpha(matrix: AnnotationMatrix | np.ndarray) -> float:
    """Interval-metric alpha over pairable values, missing cells allowed."""
    grid = matrix.grid if isinstance(matrix, AnnotationMatrix) else np.asarray(matrix, float)
    units = []
    for doc in range(grid.shape[1]):
        column = grid[:, doc]
        values = column[~np.isnan(column)]
        if len(values) >= 2:
            units.append(values)
    if not units:
        raise UndefinedAgreement("no document was rated by two or more raters")

    n_pairable = sum(len(u) for u in units)
    observed = 0.0
    for values in units:
        m = len(values)
        diffs = values[:, None] - values[None, :]
        observed += float(np.sum(diffs**2)) / (m - 1)
    observed /= n_pairable

    if observed == 0.0:
        return 1.0

    pooled = np.concatenate(units)
    diffs = pooled[:, None] - pooled[None, :]
    expected = float(np.sum(diffs**2)) / (n_pairable * (n_pairable - 1))
    if expected == 0.0:
        raise UndefinedAgreement("expected disagreement is zero")
    return 1.0 - observed / expected


def dispersion(scores) -> tuple[float, float, float]:
    """(population std, variance = std^2, cv = std/mean)."""
    arr = np.asarray(list(scores), dtype=np.float64)
    if len(arr) < 2:
        raise InsufficientData("dispersion needs at least 2 scores")
    mean = float(arr.mean())
    std = float(arr.std())
    variance = std * std
    if std == 0.0 and mean == 0.0:
        raise UndefinedCV("cv undefined for zero-mean scores")
    if mean == 0.0:
        raise UndefinedCV("cv undefined for zero-mean scores")
    return std, variance, std / mean


def char_f1(prediction: str, reference: str) -> float:
    """Multiset character overlap F1 over non-whitespace characters."""
    if not prediction or not prediction.strip() or not reference or not reference.strip():
        raise EmptyText("char_f1 needs non-empty prediction and reference")
    pred = Counter(ch for ch in prediction if not ch.isspace())
    ref = Counter(ch for ch in reference if not ch.isspace())
    overlap = sum((pred & ref).values())
    if overlap == 0:
        return 0.0
    precision = overlap / sum(pred.values())
    recall = overlap / sum(ref.values())
    return 2 * precision * recall / (precision + recall)

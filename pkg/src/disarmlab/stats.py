"""Exact statistics on 2x2 confusion matrices."""

from __future__ import annotations

import math
from dataclasses import dataclass

# Relative slack when deciding whether a table is "no more likely" than the
# observed one; absorbs lgamma rounding so that exact ties are not dropped.
_TIE_RTOL = 1e-9


@dataclass(frozen=True)
class ConfusionMatrix:
    """Cells laid out as ``[[tp, fp], [fn, tn]]`` (rows: predicted +/-; columns: label +/-)."""

    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        for name in ("tp", "fp", "fn", "tn"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {v!r}")

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def positives(self) -> int:
        return self.tp + self.fn

    @property
    def negatives(self) -> int:
        return self.fp + self.tn

    @property
    def precision(self) -> float | None:
        predicted = self.tp + self.fp
        return self.tp / predicted if predicted else None

    @property
    def recall(self) -> float | None:
        return self.tp / self.positives if self.positives else None

    def transpose(self) -> "ConfusionMatrix":
        return ConfusionMatrix(self.tp, self.fn, self.fp, self.tn)

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.tp, self.fp, self.fn, self.tn)


def _as_matrix(m) -> ConfusionMatrix:
    return m if isinstance(m, ConfusionMatrix) else ConfusionMatrix(*m)


def odds_ratio(matrix) -> tuple[float, bool]:
    """``(tp*tn)/(fp*fn)``; with any zero cell, 0.5 is first added to every cell.

    Returns ``(odds_ratio, corrected)``.
    """
    m = _as_matrix(matrix)
    cells = m.as_tuple()
    corrected = 0 in cells
    tp, fp, fn, tn = (c + 0.5 for c in cells) if corrected else cells
    return (tp * tn) / (fp * fn), corrected


def _log_choose(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def fisher_exact_two_sided(matrix) -> float:
    """Two-sided Fisher exact p-value.

    Sums the hypergeometric probability of every table sharing the observed
    margins whose probability does not exceed that of the observed table.
    Log-factorials keep large tables stable; the kept mass is divided by the
    mass of the whole support, so rounding in the log-factorials cancels and
    p is exactly 1.0 when every table is kept.
    """
    m = _as_matrix(matrix)
    if m.n == 0:
        return 1.0  # the only table with these margins is the observed one
    row1 = m.tp + m.fp          # predicted positive
    col1 = m.tp + m.fn          # labeled positive
    n = m.n
    lo, hi = max(0, row1 + col1 - n), min(row1, col1)

    def logp(x: int) -> float:
        return _log_choose(col1, x) + _log_choose(n - col1, row1 - x)

    observed = logp(m.tp)
    cutoff = observed + math.log1p(_TIE_RTOL)
    logs = [logp(x) for x in range(lo, hi + 1)]
    top = max(logs)
    weights = [math.exp(lp - top) for lp in logs]
    total = math.fsum(weights)
    p = math.fsum(w for w, lp in zip(weights, logs) if lp <= cutoff) / total
    return min(1.0, p)

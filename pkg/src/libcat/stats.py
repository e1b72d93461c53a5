"""Rank correlation for holdings-versus-citations comparisons.

Ties get average (fractional) ranks and the coefficient is the Pearson
product-moment correlation of the two rank vectors. That is exact under
ties, unlike the 6*sum(d^2) shortcut, and count data here is tied almost
by construction. No p-values: only the coefficient is reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import ConstantInputError, SampleSizeError


@dataclass(frozen=True, slots=True)
class PairedSample:
    """Two paired real-valued observations per subject."""

    pairs: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        pairs = tuple((float(x), float(y)) for x, y in self.pairs)
        for x, y in pairs:
            if not (math.isfinite(x) and math.isfinite(y)):
                raise ValueError("paired samples must be finite")
        object.__setattr__(self, "pairs", pairs)
        if len(pairs) < 2:
            raise SampleSizeError(
                f"need at least 2 paired observations, got {len(pairs)}"
            )

    @classmethod
    def from_columns(cls, xs: Sequence[float], ys: Sequence[float]) -> "PairedSample":
        if len(xs) != len(ys):
            raise ValueError(f"column lengths differ: {len(xs)} vs {len(ys)}")
        return cls(tuple(zip(xs, ys)))

    @property
    def xs(self) -> tuple[float, ...]:
        return tuple(p[0] for p in self.pairs)

    @property
    def ys(self) -> tuple[float, ...]:
        return tuple(p[1] for p in self.pairs)


def average_ranks(values: Sequence[float]) -> list[float]:
    """Ranks starting at 1; tied values share the mean of their positions."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        shared = (i + j) / 2 + 1
        for k in range(i, j + 1):
            ranks[order[k]] = shared
        i = j + 1
    return ranks


def _pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    n = len(xs)
    mean_x = math.fsum(xs) / n
    mean_y = math.fsum(ys) / n
    cov = math.fsum((x - mean_x) * (y - mean_y) for x, y in zip(xs, ys))
    var_x = math.fsum((x - mean_x) ** 2 for x in xs)
    var_y = math.fsum((y - mean_y) ** 2 for y in ys)
    return cov / math.sqrt(var_x * var_y)


def spearman(sample: "PairedSample | Sequence[tuple[float, float]]") -> float:
    """Spearman rank correlation with average-rank tie handling, in [-1, 1].

    Raises SampleSizeError below two pairs and ConstantInputError when a
    coordinate never varies (its ranks have zero variance).
    """
    if not isinstance(sample, PairedSample):
        sample = PairedSample(tuple(sample))
    xs, ys = sample.xs, sample.ys
    if min(xs) == max(xs):
        raise ConstantInputError("first coordinate is constant")
    if min(ys) == max(ys):
        raise ConstantInputError("second coordinate is constant")
    rho = _pearson(average_ranks(xs), average_ranks(ys))
    return max(-1.0, min(1.0, rho))


@dataclass(frozen=True, slots=True)
class CorrelationMatrix:
    """Pairwise Spearman coefficients between named metric columns.

    Cells are None where the coefficient is undefined (a constant
    column), with the reason recorded per label in `notes`. For defined
    columns the diagonal is exactly 1 and the matrix is symmetric.
    """

    labels: tuple[str, ...]
    values: tuple[tuple[Optional[float], ...], ...]
    notes: tuple[tuple[str, str], ...] = ()

    def cell(self, row_label: str, col_label: str) -> Optional[float]:
        i = self.labels.index(row_label)
        j = self.labels.index(col_label)
        return self.values[i][j]


def correlation_matrix(
    columns: "Sequence[tuple[str, Sequence[float]]] | dict[str, Sequence[float]]",
) -> CorrelationMatrix:
    """All-pairs Spearman over equal-length named columns.

    A constant column does not abort the run; its whole row and column
    (diagonal included) are undefined and the reason is noted.
    """
    if isinstance(columns, dict):
        items = list(columns.items())
    else:
        items = [(name, vector) for name, vector in columns]
    if len(items) < 2:
        raise ValueError("need at least two columns")
    labels = tuple(name for name, _ in items)
    if len(set(labels)) != len(labels):
        raise ValueError("column labels must be unique")
    vectors = [tuple(float(v) for v in vector) for _, vector in items]
    length = len(vectors[0])
    if any(len(v) != length for v in vectors):
        raise ValueError("columns must have equal lengths")
    if length < 2:
        raise SampleSizeError("need at least 2 rows")

    constant = [min(v) == max(v) for v in vectors]
    notes = tuple(
        (labels[i], "constant column") for i in range(len(labels)) if constant[i]
    )
    size = len(vectors)
    cells: list[list[Optional[float]]] = [[None] * size for _ in range(size)]
    for i in range(size):
        if constant[i]:
            continue
        cells[i][i] = 1.0
        for j in range(i + 1, size):
            if constant[j]:
                continue
            rho = spearman(PairedSample.from_columns(vectors[i], vectors[j]))
            cells[i][j] = rho
            cells[j][i] = rho
    return CorrelationMatrix(labels, tuple(tuple(row) for row in cells), notes)

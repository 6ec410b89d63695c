"""Composition matrices, groupings, and the amalgamation operation.

A composition matrix holds ``n`` samples (rows) by ``p`` taxa (columns); every
row is a point on the ``(p-1)``-simplex. A grouping is an ordered partition of
the column indices into ``k`` blocks, which is equivalent to a 0/1
amalgamation matrix with exactly one 1 per column.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

ROW_SUM_TOL = 1e-8


class CompositionError(ValueError):
    """Raised for malformed composition tables or groupings."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CompositionMatrix:
    """Row-stochastic nonnegative ``n x p`` matrix with sample and taxon labels.

    Parameters
    ----------
    values : array_like of shape (n, p)
        Proportions. Rows must sum to 1 within ``ROW_SUM_TOL``; they are
        rescaled to sum to exactly 1 (up to rounding) on construction.
    sample_ids, taxon_ids : sequence of str
        Row and column labels. Defaults are ``s0..`` and ``t0..``.
    library_sizes : array_like of shape (n,), optional
        Original row totals when the matrix was built from counts.
    """

    values: np.ndarray
    sample_ids: tuple = ()
    taxon_ids: tuple = ()
    library_sizes: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise CompositionError("composition matrix must be two-dimensional")
        n, p = v.shape
        if n < 1 or p < 1:
            raise CompositionError("composition matrix must be non-empty")
        if not np.all(np.isfinite(v)):
            raise CompositionError("composition matrix has non-finite entries")
        if np.any(v < 0):
            raise CompositionError("composition matrix has negative entries")
        sums = v.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
        if bad.size:
            raise CompositionError(
                f"row {bad[0]} sums to {sums[bad[0]]!r}, not 1; "
                "use CompositionMatrix.from_counts for raw counts"
            )
        v = v / sums[:, None]
        sample_ids = tuple(self.sample_ids) or tuple(f"s{i}" for i in range(n))
        taxon_ids = tuple(self.taxon_ids) or tuple(f"t{j}" for j in range(p))
        if len(sample_ids) != n or len(taxon_ids) != p:
            raise CompositionError("label count does not match matrix shape")
        _check_unique(sample_ids, "sample")
        _check_unique(taxon_ids, "taxon")
        object.__setattr__(self, "values", _readonly(v))
        object.__setattr__(self, "sample_ids", tuple(str(s) for s in sample_ids))
        object.__setattr__(self, "taxon_ids", tuple(str(t) for t in taxon_ids))
        if self.library_sizes is not None:
            object.__setattr__(self, "library_sizes", _readonly(self.library_sizes))

    @classmethod
    def from_counts(cls, counts, sample_ids=(), taxon_ids=()):
        """Normalize nonnegative counts (or unnormalized weights) row-wise."""
        c = np.asarray(counts, dtype=float)
        if c.ndim != 2:
            raise CompositionError("count matrix must be two-dimensional")
        if np.any(c < 0):
            i, j = np.argwhere(c < 0)[0]
            raise CompositionError(f"negative entry at row {i}, column {j}")
        sums = c.sum(axis=1)
        zero = np.flatnonzero(sums == 0)
        if zero.size:
            sid = sample_ids[zero[0]] if len(sample_ids) else zero[0]
            raise CompositionError(f"zero row sum at sample {sid}")
        return cls(c / sums[:, None], sample_ids, taxon_ids, library_sizes=sums)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def to_frame(self):
        import pandas as pd

        return pd.DataFrame(self.values, index=list(self.sample_ids), columns=list(self.taxon_ids))


def _check_unique(ids: Sequence[str], what: str) -> None:
    seen = set()
    for s in ids:
        if s in seen:
            raise CompositionError(f"duplicate {what} ID {s!r}")
        seen.add(s)


@dataclass(frozen=True)
class Grouping:
    """Ordered partition of ``range(p)`` into non-empty blocks.

    ``groups[g]`` lists the original column indices (0-based, ascending) that
    amalgamate into output column ``g``.
    """

    groups: tuple
    group_labels: tuple = ()

    def __post_init__(self):
        groups = tuple(tuple(sorted(int(j) for j in g)) for g in self.groups)
        if not groups:
            raise CompositionError("grouping must have at least one group")
        if any(len(g) == 0 for g in groups):
            raise CompositionError("grouping contains an empty group")
        flat = [j for g in groups for j in g]
        p = len(flat)
        if sorted(flat) != list(range(p)):
            raise CompositionError("grouping does not cover {0..p-1} exactly once")
        labels = tuple(self.group_labels) or tuple(f"g{i}" for i in range(len(groups)))
        if len(labels) != len(groups):
            raise CompositionError("group_labels length does not match groups")
        object.__setattr__(self, "groups", groups)
        object.__setattr__(self, "group_labels", tuple(str(s) for s in labels))

    @classmethod
    def identity(cls, p: int, labels: Iterable[str] = ()):
        return cls(tuple((j,) for j in range(p)), tuple(labels))

    @classmethod
    def from_labels(cls, assignment: Sequence):
        """Build from a per-column cluster label; groups ordered by first appearance."""
        order: dict = {}
        for j, lab in enumerate(assignment):
            order.setdefault(lab, []).append(j)
        return cls(tuple(tuple(v) for v in order.values()), tuple(str(k) for k in order))

    @property
    def k(self) -> int:
        return len(self.groups)

    @property
    def p(self) -> int:
        return sum(len(g) for g in self.groups)

    def matrix(self) -> np.ndarray:
        """The ``k x p`` 0/1 amalgamation matrix."""
        R = np.zeros((self.k, self.p))
        for i, g in enumerate(self.groups):
            R[i, list(g)] = 1.0
        return R

    def labels_per_column(self) -> np.ndarray:
        out = np.empty(self.p, dtype=int)
        for i, g in enumerate(self.groups):
            out[list(g)] = i
        return out

    def coarsens(self, finer: "Grouping") -> bool:
        """True if every block of ``finer`` lies inside one block of ``self``."""
        if finer.p != self.p:
            return False
        mine = self.labels_per_column()
        return all(len({mine[j] for j in g}) == 1 for g in finer.groups)


def amalgamate(X: CompositionMatrix, g: Grouping) -> CompositionMatrix:
    """Sum the columns of ``X`` within each block of ``g``.

    Examples
    --------
    >>> X = CompositionMatrix([[0.2, 0.3, 0.5]])
    >>> amalgamate(X, Grouping(((0, 1), (2,)))).values
    array([[0.5, 0.5]])
    """
    if g.p != X.p:
        raise CompositionError(f"grouping covers {g.p} columns but X has {X.p}")
    if all(len(b) == 1 for b in g.groups) and [b[0] for b in g.groups] == list(range(X.p)):
        return X
    out = np.column_stack([X.values[:, list(b)].sum(axis=1) for b in g.groups])
    return CompositionMatrix(out, X.sample_ids, g.group_labels, X.library_sizes)


def amalgamate_rows(values: np.ndarray, g: Grouping) -> np.ndarray:
    """Array-level amalgamation for 1-D or 2-D inputs, no label handling."""
    v = np.asarray(values, dtype=float)
    cols = [v[..., list(b)].sum(axis=-1) for b in g.groups]
    return np.stack(cols, axis=-1)


def lift(y, g: Grouping) -> np.ndarray:
    """Spread each group's mass equally over its member columns.

    Right inverse of amalgamation: ``amalgamate_rows(lift(y, g), g) == y``.
    Works on a single ``k``-vector or on an ``(n, k)`` array.
    """
    y = np.asarray(y, dtype=float)
    if y.shape[-1] != g.k:
        raise CompositionError(f"expected {g.k} parts, got {y.shape[-1]}")
    out = np.zeros(y.shape[:-1] + (g.p,))
    for i, b in enumerate(g.groups):
        out[..., list(b)] = (y[..., i] / len(b))[..., None]
    return out


def load_composition_table(text: str, delimiter: str | None = None) -> CompositionMatrix:
    """Parse a samples x taxa table of counts or proportions.

    The first row holds taxon IDs (its first cell is ignored), the first
    column holds sample IDs. Tabs are used if present on the header line,
    otherwise commas.
    """
    if delimiter is None:
        first = text.split("\n", 1)[0]
        delimiter = "\t" if "\t" in first else ","
    rows = [r for r in csv.reader(io.StringIO(text), delimiter=delimiter) if any(c.strip() for c in r)]
    if len(rows) < 2:
        raise CompositionError("table needs a header row and at least one sample row")
    header = [c.strip() for c in rows[0]]
    taxa = header[1:]
    width = len(header)
    sample_ids, body = [], []
    for lineno, r in enumerate(rows[1:], start=2):
        if len(r) != width:
            raise CompositionError(f"ragged row at line {lineno}: {len(r)} fields, expected {width}")
        sample_ids.append(r[0].strip())
        try:
            body.append([float(c) for c in r[1:]])
        except ValueError as e:
            raise CompositionError(f"non-numeric entry at line {lineno}: {e}") from None
    _check_unique(sample_ids, "sample")
    _check_unique(taxa, "taxon")
    return CompositionMatrix.from_counts(np.array(body, dtype=float), sample_ids, taxa)


def format_composition_table(X: CompositionMatrix, delimiter: str = "\t", corner: str = "sample_id") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter=delimiter, lineterminator="\n")
    w.writerow([corner, *X.taxon_ids])
    for sid, row in zip(X.sample_ids, X.values):
        w.writerow([sid, *(repr(float(v)) for v in row)])
    return buf.getvalue()

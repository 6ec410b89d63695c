"""Alpha and beta diversity indices and the two loss constructions.

Alpha losses measure within-sample diversity sacrificed by an amalgamation;
beta losses compare between-sample dissimilarity matrices before and after.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .compdata import CompositionMatrix, Grouping, amalgamate_rows
from .taxonomy import TaxonomyTree


class LossKind(str, Enum):
    SDI = "sdi"
    SWI = "swi"
    BC = "bc"
    WUF = "wuf"

    @property
    def is_alpha(self) -> bool:
        return self in (LossKind.SDI, LossKind.SWI)


@dataclass(frozen=True)
class LossSpec:
    """Which diversity measure drives the loss.

    ``log_base`` only affects SWI; natural log by default.
    """

    kind: LossKind
    tree: TaxonomyTree | None = None
    log_base: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", LossKind(self.kind))
        if self.kind is LossKind.WUF and self.tree is None:
            raise ValueError("WUF loss requires a taxonomy tree")


@dataclass(frozen=True)
class DistanceMatrix:
    values: np.ndarray
    sample_ids: tuple = ()

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("distance matrix must be square")
        if np.any(np.diag(v) != 0):
            raise ValueError("distance matrix must have a zero diagonal")
        if not np.array_equal(v, v.T):
            raise ValueError("distance matrix must be symmetric")
        if np.any(v < 0):
            raise ValueError("distance matrix has negative entries")
        ids = tuple(self.sample_ids) or tuple(f"s{i}" for i in range(v.shape[0]))
        if len(ids) != v.shape[0]:
            raise ValueError("sample_ids length does not match matrix")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "sample_ids", ids)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["", *self.sample_ids])
        for sid, row in zip(self.sample_ids, self.values):
            w.writerow([sid, *(repr(float(x)) for x in row)])
        return buf.getvalue()


def xlogx(x):
    """Elementwise ``x * ln(x)`` with ``0 * ln(0) = 0``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = x[pos] * np.log(x[pos])
    return out


def sdi(x) -> float:
    """Simpson's diversity ``1 - sum(x**2)``."""
    x = np.asarray(x, dtype=float)
    return float(1.0 - np.dot(x, x))


def swi(x, base: float | None = None) -> float:
    """Shannon-Wiener index ``-sum(x ln x)``; zeros contribute nothing."""
    h = -float(xlogx(x).sum())
    if base is not None:
        h /= np.log(base)
    return h + 0.0


def bray_curtis(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return float(np.abs(x - y).sum() / 2.0)


def weighted_unifrac(x, y, tree: TaxonomyTree, taxa=None) -> float:
    """Weighted UniFrac with leaf branch lengths and root-path lengths.

    ``sum_j l_j |x_j - y_j| / sum_j L_j (x_j + y_j)`` where ``l_j`` is the
    length of leaf ``j``'s own edge and ``L_j`` its distance from the root.
    Coordinates follow ``taxa`` (default: the tree's leaf order). A zero
    denominator gives 0.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    taxa = tree.leaves if taxa is None else list(taxa)
    if len(taxa) != x.size or x.shape != y.shape or set(taxa) != set(tree.leaves):
        raise ValueError("vector coordinates do not match the tree's leaves")
    l, L = map(np.asarray, tree.leaf_lengths(taxa))
    return _wuf(x, y, l, L)


def _wuf(x, y, l, L) -> float:
    den = float(np.dot(L, x + y))
    if den == 0.0:
        return 0.0
    return float(np.dot(l, np.abs(x - y)) / den)


def pairwise_bc(values: np.ndarray) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    n = v.shape[0]
    D = np.zeros((n, n))
    for i in range(n):
        D[i, i + 1:] = np.abs(v[i + 1:] - v[i]).sum(axis=1) / 2.0
    return D + D.T


def pairwise_wuf(values: np.ndarray, l, L) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    l = np.asarray(l, dtype=float)
    L = np.asarray(L, dtype=float)
    n = v.shape[0]
    D = np.zeros((n, n))
    for i in range(n):
        num = np.abs(v[i + 1:] - v[i]) @ l
        den = (v[i + 1:] + v[i]) @ L
        with np.errstate(invalid="ignore", divide="ignore"):
            D[i, i + 1:] = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return D + D.T


def distance_matrix(X: CompositionMatrix, spec: LossSpec) -> DistanceMatrix:
    """All-pairs beta dissimilarity for BC or WUF specs."""
    if spec.kind is LossKind.BC:
        return DistanceMatrix(pairwise_bc(X.values), X.sample_ids)
    if spec.kind is LossKind.WUF:
        l, L = spec.tree.leaf_lengths(X.taxon_ids)
        return DistanceMatrix(pairwise_wuf(X.values, l, L), X.sample_ids)
    raise ValueError(f"distance_matrix needs a beta loss, got {spec.kind.value}")


def alpha_values(values: np.ndarray, spec: LossSpec) -> np.ndarray:
    v = np.atleast_2d(np.asarray(values, dtype=float))
    if spec.kind is LossKind.SDI:
        return 1.0 - np.einsum("ij,ij->i", v, v)
    if spec.kind is LossKind.SWI:
        h = -xlogx(v).sum(axis=1)
        return h / np.log(spec.log_base) if spec.log_base else h
    raise ValueError(f"alpha_values needs an alpha loss, got {spec.kind.value}")


def alpha_loss(X: CompositionMatrix, g: Grouping, spec: LossSpec) -> float:
    """Total alpha diversity lost by amalgamating ``X`` with ``g`` (>= 0)."""
    before = alpha_values(X.values, spec).sum()
    after = alpha_values(amalgamate_rows(X.values, g), spec).sum()
    return float(before - after)


def beta_loss(D_ref: DistanceMatrix, D_new: DistanceMatrix) -> float:
    """Sum of squared differences over the upper triangle."""
    a = D_ref.values if isinstance(D_ref, DistanceMatrix) else np.asarray(D_ref)
    b = D_new.values if isinstance(D_new, DistanceMatrix) else np.asarray(D_new)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    iu = np.triu_indices(a.shape[0], 1)
    return float(((a[iu] - b[iu]) ** 2).sum())

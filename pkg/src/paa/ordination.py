"""Nonmetric MDS and the before/after ordination comparison.

NMDS minimizes Kruskal's stress-1 by alternating a SMACOF (Guttman
transform) update of the configuration with a pool-adjacent-violators fit of
the disparities, starting from classical MDS.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage
from scipy.spatial.distance import pdist, squareform

from .compdata import CompositionMatrix, Grouping, amalgamate_rows, lift
from .diversity import DistanceMatrix, LossKind, LossSpec, pairwise_bc

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Embedding:
    coords: np.ndarray
    stress: float
    iterations: int
    point_ids: tuple
    stress_history: tuple = ()


@dataclass(frozen=True)
class OrdinationResult:
    """Joint embedding of original and principal compositions.

    Rows ``0..n-1`` of ``embedding.coords`` are the original samples, rows
    ``n..2n-1`` the amalgamated ones; ``pairing[i] == (i, n + i)``.
    """

    embedding: Embedding
    pairing: tuple
    radii: np.ndarray
    mean: float
    sd: float
    sample_ids: tuple

    @property
    def distances(self) -> np.ndarray:
        return 2.0 * self.radii


def classical_mds_init(D, d: int = 2) -> np.ndarray:
    """Torgerson scaling of a dissimilarity matrix.

    Negative eigenvalues are clipped to zero. Each axis is flipped so that
    its largest-magnitude coordinate is positive.
    """
    D = D.values if isinstance(D, DistanceMatrix) else np.asarray(D, dtype=float)
    m = D.shape[0]
    if m < 3:
        raise ValueError("classical MDS needs at least 3 points")
    if not 1 <= d < m:
        raise ValueError(f"need 1 <= d < {m}, got d={d}")
    J = np.eye(m) - 1.0 / m
    B = -0.5 * J @ (D**2) @ J
    B = (B + B.T) / 2
    evals, evecs = np.linalg.eigh(B)
    order = np.argsort(evals)[::-1][:d]
    evals = np.clip(evals[order], 0.0, None)
    Y = evecs[:, order] * np.sqrt(evals)
    for a in range(d):
        i = np.argmax(np.abs(Y[:, a]))
        if Y[i, a] < 0:
            Y[:, a] = -Y[:, a]
    return Y - Y.mean(axis=0)


def isotonic_regression_pav(targets, weights=None) -> np.ndarray:
    """Weighted least-squares non-decreasing fit (pool adjacent violators)."""
    y = np.asarray(targets, dtype=float)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    if y.shape != w.shape:
        raise ValueError("targets and weights must have equal lengths")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    # blocks as (mean, weight, size)
    means, wts, sizes = [], [], []
    for yi, wi in zip(y, w):
        means.append(yi)
        wts.append(wi)
        sizes.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m2, w2, s2 = means.pop(), wts.pop(), sizes.pop()
            m1, w1, s1 = means.pop(), wts.pop(), sizes.pop()
            wt = w1 + w2
            means.append((w1 * m1 + w2 * m2) / wt)
            wts.append(wt)
            sizes.append(s1 + s2)
    return np.repeat(means, sizes)


def _disparities(dis: np.ndarray, dist: np.ndarray) -> np.ndarray:
    """Monotone regression of configuration distances on the dissimilarity order.

    Tied dissimilarities are ordered by current distance (primary approach).
    """
    order = np.lexsort((dist, dis))
    fit = np.empty_like(dist)
    fit[order] = isotonic_regression_pav(dist[order])
    return fit


def _stress1(dhat, dist) -> float:
    den = float(dist @ dist)
    if den == 0.0:
        return 0.0
    diff = dhat - dist
    return float(np.sqrt(diff @ diff / den))


def _guttman(Y, dhat_sq, dist_sq):
    m = Y.shape[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(dist_sq > 0, dhat_sq / np.where(dist_sq > 0, dist_sq, 1.0), 0.0)
    B = -ratio
    B[np.diag_indices(m)] = 0.0
    B[np.diag_indices(m)] = -B.sum(axis=1)
    return B @ Y / m


def nmds(D, d: int = 2, max_iter: int = 500, tol: float = 1e-8, restarts: int = 0, seed: int = 0) -> Embedding:
    """Kruskal nonmetric MDS.

    Iterates from a classical MDS start until the relative stress decrease
    falls below ``tol`` or ``max_iter`` is reached. A step that would
    increase stress-1 is halved back toward the previous configuration, so
    the recorded stress sequence never increases. With ``restarts > 0``,
    additional runs start from the classical solution plus seeded Gaussian
    jitter and the lowest-stress run is kept.
    """
    ids = D.sample_ids if isinstance(D, DistanceMatrix) else ()
    D = D.values if isinstance(D, DistanceMatrix) else np.asarray(D, dtype=float)
    if not np.all(np.isfinite(D)):
        raise ValueError("dissimilarity matrix has non-finite entries")
    m = D.shape[0]
    iu = np.triu_indices(m, 1)
    dis = D[iu]
    if not np.any(dis > 0):
        raise ValueError("all dissimilarities are zero")
    ids = tuple(ids) or tuple(str(i) for i in range(m))
    if m < 3:
        Y = np.zeros((m, d))
        if m == 2:
            Y[0, 0], Y[1, 0] = -dis[0] / 2, dis[0] / 2
        return Embedding(Y, 0.0, 0, ids, (0.0,))

    Y0 = classical_mds_init(D, min(d, m - 1))
    if Y0.shape[1] < d:
        Y0 = np.hstack([Y0, np.zeros((m, d - Y0.shape[1]))])
    best = _nmds_run(dis, Y0, iu, max_iter, tol)
    if restarts:
        rng = np.random.default_rng(seed)
        spread = float(np.sqrt(np.mean(Y0**2))) or 1.0
        for _ in range(restarts):
            start = Y0 + rng.normal(scale=0.1 * spread, size=Y0.shape)
            cand = _nmds_run(dis, start, iu, max_iter, tol)
            if cand[1] < best[1]:
                best = cand
    Y, s, it, hist = best
    Y = _normalize(Y, dis)
    if m > 3 and _separates_in_two(dis):
        log.warning("dissimilarities split into two well-separated groups; NMDS tends to collapse "
                    "each group to a point (stress %.2g)", s)
    return Embedding(Y, s, it, ids, tuple(hist))


def _separates_in_two(dis) -> bool:
    """True if some bipartition has every within distance below every between distance.

    Then a two-point configuration has zero stress-1. Single linkage gives
    the split with the largest minimum between-group distance, so it is the
    only one worth checking.
    """
    labels = fcluster(linkage(dis, "single"), 2, "maxclust")
    if len(set(labels)) < 2:
        return False
    same = pdist(labels[:, None]) == 0
    return bool(same.any() and dis[same].max() < dis[~same].min())


def _normalize(Y, dis):
    """Center, rotate to principal axes, and scale to the dissimilarity units.

    The scale is the least-squares factor mapping configuration distances
    onto the input dissimilarities; stress-1 is unaffected.
    """
    Y = Y - Y.mean(axis=0)
    _, _, Vt = np.linalg.svd(Y, full_matrices=False)
    Y = Y @ Vt.T
    for a in range(Y.shape[1]):
        i = np.argmax(np.abs(Y[:, a]))
        if Y[i, a] < 0:
            Y[:, a] = -Y[:, a]
    dist = pdist(Y)
    if dist @ dist > 0:
        Y = Y * (dis @ dist) / (dist @ dist)
    return Y - Y.mean(axis=0)


def _nmds_run(dis, Y, iu, max_iter, tol):
    m = Y.shape[0]
    Y = Y - Y.mean(axis=0)

    def evaluate(Y):
        dist = pdist(Y)
        if not np.any(dist > 0):
            return np.inf, dist, dist
        dhat = _disparities(dis, dist)
        return _stress1(dhat, dist), dist, dhat

    s, dist, dhat = evaluate(Y)
    if not np.isfinite(s):
        # degenerate start (all points coincide): spread along the first axis
        Y = np.zeros_like(Y)
        Y[:, 0] = np.argsort(np.argsort(squareform(dis).sum(axis=1)))
        Y -= Y.mean(axis=0)
        s, dist, dhat = evaluate(Y)
    hist = [s]
    it = 0
    for it in range(1, max_iter + 1):
        if s == 0.0:
            it -= 1
            break
        # rescale disparities so sum(dhat^2) matches sum(dist^2)
        scale = np.sqrt((dist @ dist) / (dhat @ dhat)) if dhat @ dhat > 0 else 1.0
        Yn = _guttman(Y, squareform(dhat * scale), squareform(dist))
        Yn -= Yn.mean(axis=0)
        sn, distn, dhatn = evaluate(Yn)
        halvings = 0
        while not sn <= s and halvings < 30:
            Yn = (Y + Yn) / 2
            sn, distn, dhatn = evaluate(Yn)
            halvings += 1
        if not sn <= s:
            it -= 1
            break
        rel = (s - sn) / s if s > 0 else 0.0
        Y, s, dist, dhat = Yn, sn, distn, dhatn
        hist.append(s)
        if rel < tol:
            break
    return Y, s, it, hist


def ordination_compare(X: CompositionMatrix, g: Grouping, metric: LossSpec | None = None, d: int = 2, **nmds_kw) -> OrdinationResult:
    """Embed original and amalgamated samples together and measure distortion.

    The amalgamated rows are lifted back onto the original simplex by equal
    redistribution within each group, the ``2n x 2n`` Bray-Curtis matrix of
    the combined set is embedded by NMDS, and each sample's two points are
    paired. ``radii[i]`` is half the distance between them; ``mean`` and
    ``sd`` (sample SD) summarize the full pair distances.
    """
    if metric is not None and metric.kind is not LossKind.BC:
        raise ValueError("ordination comparison uses Bray-Curtis dissimilarity")
    n = X.n
    reduced = lift(amalgamate_rows(X.values, g), g)
    pts = np.vstack([X.values, reduced])
    ids = tuple(f"{s}:original" for s in X.sample_ids) + tuple(f"{s}:principal" for s in X.sample_ids)
    # identical compositions share one embedded point
    _, first, inverse = np.unique(pts, axis=0, return_index=True, return_inverse=True)
    keep = np.sort(first)
    remap = np.empty(len(first), dtype=int)
    remap[np.argsort(first)] = np.arange(len(first))
    inverse = remap[inverse.ravel()]
    if keep.size == 1:
        Yu, s, it, hist = np.zeros((1, d)), 0.0, 0, (0.0,)
    else:
        eu = nmds(DistanceMatrix(pairwise_bc(pts[keep])), d, **nmds_kw)
        Yu, s, it, hist = eu.coords, eu.stress, eu.iterations, eu.stress_history
    Y = Yu[inverse]
    Y = Y - Y.mean(axis=0)
    emb = Embedding(Y, s, it, ids, hist)
    dists = np.linalg.norm(Y[:n] - Y[n:], axis=1)
    sd = float(np.std(dists, ddof=1)) if n > 1 else 0.0
    return OrdinationResult(emb, tuple((i, n + i) for i in range(n)), dists / 2.0, float(dists.mean()), sd, X.sample_ids)

"""Greedy hierarchical principal amalgamation.

Starting from ``p`` singleton nodes, each step merges the pair of current
nodes whose amalgamation loses the least information, restricted to an
active set of permitted pairs. Three levels of taxonomy guidance define the
active set:

``none``
    every pair of current nodes.
``weak``
    pairs sharing the same lowest multi-child ancestor in the reduced tree.
``strong``
    weak pairs whose nodes both sit at the current maximum leaf depth.

The full path of ``p - 1`` merges is returned as a :class:`MergeTrace`.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .compdata import CompositionMatrix, Grouping, amalgamate
from .diversity import LossKind, LossSpec, alpha_values, pairwise_bc, pairwise_wuf
from .taxonomy import TaxonomyTree

log = logging.getLogger(__name__)

# Costs within this distance of the minimum count as ties (absolute, scaled
# by max(1, |min|)); ties go to the lexicographically smallest pair.
TIE_TOL = 1e-12
# relative size below which an incrementally updated WUF sum is treated as 0
_RESOLUTION = 1e-12


class HPAAError(ValueError):
    """Raised when engine preconditions are violated."""


class ConstraintLevel(str, Enum):
    NONE = "none"
    WEAK = "weak"
    STRONG = "strong"


@dataclass(frozen=True)
class MergeStep:
    t: int
    pair: tuple  # node ids of the merged nodes
    positions: tuple  # (j, j') in the current node ordering, 0-based, j < j'
    new_node: int
    step_loss: float
    cumulative_loss: float
    percent_loss: float
    relaxed: bool = False


@dataclass(frozen=True)
class MergeTrace:
    """Ordered record of the ``p - 1`` pairwise amalgamations.

    Node ids ``0..p-1`` are the original taxa; the node created at step
    ``t`` has id ``p + t - 1``. ``data`` and ``tree`` keep the inputs so
    that any cut can be reconstructed.
    """

    steps: tuple
    initial_taxa: tuple
    loss_spec: LossSpec
    constraint_level: ConstraintLevel
    data: CompositionMatrix = field(repr=False, compare=False)
    tree: TaxonomyTree | None = field(default=None, repr=False, compare=False)

    @property
    def p(self) -> int:
        return len(self.initial_taxa)

    def node_label(self, node: int) -> str:
        return self.initial_taxa[node] if node < self.p else f"node{node}"

    def members(self) -> dict[int, tuple]:
        """Original column indices under every node id."""
        out = {j: (j,) for j in range(self.p)}
        for s in self.steps:
            out[s.new_node] = tuple(sorted(out[s.pair[0]] + out[s.pair[1]]))
        return out

    def to_dict(self) -> dict:
        return {
            "loss": self.loss_spec.kind.value,
            "level": self.constraint_level.value,
            "n_samples": self.data.n,
            "taxa": list(self.initial_taxa),
            "steps": [
                {
                    "t": s.t,
                    "pair": list(s.pair),
                    "pair_labels": [self.node_label(s.pair[0]), self.node_label(s.pair[1])],
                    "positions": list(s.positions),
                    "new_node": s.new_node,
                    "step_loss": s.step_loss,
                    "cumulative_loss": s.cumulative_loss,
                    "percent_loss": s.percent_loss,
                    "relaxed": s.relaxed,
                }
                for s in self.steps
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_newick(self) -> str:
        """Merge dendrogram with node heights equal to ``percent_loss``."""
        if not self.steps:
            return f"{self.initial_taxa[0]};"
        height = {j: 0.0 for j in range(self.p)}
        sub = {j: _nw(self.initial_taxa[j]) for j in range(self.p)}
        for s in self.steps:
            a, b = s.pair
            # clamp inversions (possible for WUF) so edge lengths stay >= 0
            h = max(s.percent_loss, height[a], height[b])
            sub[s.new_node] = (
                f"({sub[a]}:{h - height[a]!r},{sub[b]}:{h - height[b]!r})node{s.new_node}"
            )
            height[s.new_node] = h
        return sub[self.steps[-1].new_node] + ";"


def _nw(s: str) -> str:
    if any(c in s for c in " (),:;'[]\t"):
        return "'" + s.replace("'", "''") + "'"
    return s


# -- active set --------------------------------------------------------


def active_pairs(labels, tree: TaxonomyTree | None, level) -> list[tuple[int, int]]:
    """Permitted merges as position pairs ``(j, j')``, ``j < j'``, sorted.

    ``labels[j]`` names the tree leaf for current node ``j``.
    """
    pairs, _ = _active_pairs(labels, tree, ConstraintLevel(level))
    return pairs


def _active_pairs(labels, tree, level):
    m = len(labels)
    if level is ConstraintLevel.NONE:
        return [(j, k) for j in range(m) for k in range(j + 1, m)], False
    if tree is None:
        raise HPAAError(f"constraint level {level.value!r} requires a taxonomy tree")
    astar = [tree.lowest_multichild_ancestor(s) for s in labels]
    pairs = [(j, k) for j in range(m) for k in range(j + 1, m) if astar[j] == astar[k]]
    if not pairs and m >= 2:
        raise HPAAError("empty active set: tree has no mergeable leaf pair")
    relaxed = False
    if level is ConstraintLevel.STRONG:
        d = [tree.depth(s) for s in labels]
        best = max(min(d[j], d[k]) for j, k in pairs)
        relaxed = best < max(d)
        pairs = [(j, k) for j, k in pairs if min(d[j], d[k]) == best]
    return pairs, relaxed


# -- costs -------------------------------------------------------------


def _merge_entropy(a: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Sum over rows of (a+b)ln(a+b) - a ln a - b ln b, for each column b of B.

    Written as a ln(s/a) + b ln(s/b) so every term is >= 0.
    """
    s = a[:, None] + B
    A = np.broadcast_to(a[:, None], B.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        ta = np.where(A > 0, A * np.log(np.where(A > 0, s / np.where(A > 0, A, 1.0), 1.0)), 0.0)
        tb = np.where(B > 0, B * np.log(np.where(B > 0, s / np.where(B > 0, B, 1.0), 1.0)), 0.0)
    return (ta + tb).sum(axis=0)


class _BCCache:
    """Per-column tables of pairwise sample minima for the BC step objective."""

    def __init__(self, X: np.ndarray, chunk: int = 64):
        n = X.shape[0]
        self.iu, self.ju = np.triu_indices(n, 1)
        self.chunk = chunk
        self.T = np.minimum(X[self.iu], X[self.ju])  # (P, m)

    def row(self, c: np.ndarray, X: np.ndarray) -> np.ndarray:
        """Cost of merging column ``c`` with every column of X."""
        iu, ju = self.iu, self.ju
        mc = np.minimum(c[iu], c[ju])
        out = np.empty(X.shape[1])
        for s in range(0, X.shape[1], self.chunk):
            sl = slice(s, s + self.chunk)
            merged = np.minimum(c[iu, None] + X[iu, sl], c[ju, None] + X[ju, sl])
            diff = mc[:, None] + self.T[:, sl] - merged
            out[sl] = np.einsum("ij,ij->j", diff, diff)
        return out

    def replace(self, j: int, jp: int, c: np.ndarray):
        self.T[:, j] = np.minimum(c[self.iu], c[self.ju])
        self.T = np.delete(self.T, jp, axis=1)


def merge_cost(X, j: int, jp: int, spec: LossSpec, labels=None, tree: TaxonomyTree | None = None, lca: bool = False) -> float:
    """Step objective for merging columns ``j`` and ``jp`` of ``X``.

    SDI: inner product of the two columns. SWI: entropy lost. BC, WUF: sum
    over sample pairs of the squared change in dissimilarity. WUF needs the
    current tree and the leaf label of every column.
    """
    X = X.values if isinstance(X, CompositionMatrix) else np.asarray(X, dtype=float)
    if j == jp:
        raise HPAAError("cannot merge a column with itself")
    a, b = X[:, j], X[:, jp]
    kind = spec.kind
    if kind is LossKind.SDI:
        return float(a @ b)
    if kind is LossKind.SWI:
        v = float(_merge_entropy(a, b[:, None])[0])
        return v / np.log(spec.log_base) if spec.log_base else v
    n = X.shape[0]
    iu, ju = np.triu_indices(n, 1)
    if kind is LossKind.BC:
        d = np.minimum(a[iu], a[ju]) + np.minimum(b[iu], b[ju]) - np.minimum(a[iu] + b[iu], a[ju] + b[ju])
        return float(d @ d)
    if tree is None or labels is None:
        raise HPAAError("WUF merge cost requires the current tree and column labels")
    l, L = map(np.asarray, tree.leaf_lengths(labels))
    l_new, L_new = tree.merge_placement(labels[j], labels[jp], lca=lca)
    return float(_wuf_costs(X, l, L, [(j, jp)], [(l_new, L_new)])[0])


def _wuf_costs(X, l, L, pairs, placements) -> np.ndarray:
    n = X.shape[0]
    iu, ju = np.triu_indices(n, 1)
    delta = X[iu] - X[ju]
    ssum = X[iu] + X[ju]
    N = np.abs(delta) @ l
    Dn = ssum @ L
    W = _safe_div(N, Dn)
    out = np.empty(len(pairs))
    for q, ((j, k), (ln, Ln)) in enumerate(zip(pairs, placements)):
        N2 = N - l[j] * np.abs(delta[:, j]) - l[k] * np.abs(delta[:, k]) + ln * np.abs(delta[:, j] + delta[:, k])
        D2 = Dn - L[j] * ssum[:, j] - L[k] * ssum[:, k] + Ln * (ssum[:, j] + ssum[:, k])
        # residues at rounding level are exact zeros (e.g. all mass left on the root)
        D2 = np.where(D2 <= _RESOLUTION * Dn, 0.0, D2)
        N2 = np.where(N2 <= _RESOLUTION * N, 0.0, N2)
        d = W - _safe_div(N2, D2)
        out[q] = d @ d
    return out


def _safe_div(a, b):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(b > 0, a / np.where(b > 0, b, 1.0), 0.0)


def select_pair(pairs, costs) -> int:
    """Index of the winning pair: minimum cost, ties to the earliest pair."""
    costs = np.asarray(costs, dtype=float)
    if not np.all(np.isfinite(costs)):
        raise HPAAError("non-finite merge cost encountered")
    mn = costs.min()
    return int(np.flatnonzero(costs <= mn + TIE_TOL * max(1.0, abs(mn)))[0])


# -- engine ------------------------------------------------------------


def run_hpaa(X: CompositionMatrix, tree: TaxonomyTree | None = None, spec: LossSpec | str = "sdi", level="none") -> MergeTrace:
    """Trace the full path of greedy pairwise amalgamations.

    Parameters
    ----------
    X : CompositionMatrix
    tree : TaxonomyTree, optional
        Leaves must be exactly ``X.taxon_ids``. Required for ``weak`` and
        ``strong`` levels and for WUF. With ``level='none'`` a tree is only
        carried along (merged nodes are attached below the lowest common
        ancestor) so that reduced trees are available for plotting.
    spec : LossSpec or str
    level : ConstraintLevel or str

    Returns
    -------
    MergeTrace
    """
    if isinstance(spec, str):
        spec = LossSpec(LossKind(spec), tree)
    level = ConstraintLevel(level)
    kind = spec.kind
    if kind is LossKind.WUF:
        tree = tree if tree is not None else spec.tree
        if level is ConstraintLevel.NONE:
            raise HPAAError(
                "WUF loss cannot be used with the unconstrained level: merged-node "
                "branch lengths are only defined along the taxonomy"
            )
    if level is not ConstraintLevel.NONE and tree is None:
        raise HPAAError(f"constraint level {level.value!r} requires a taxonomy tree")
    if tree is not None and set(tree.leaves) != set(X.taxon_ids):
        raise HPAAError("tree leaves do not match the composition's taxa")
    lca = level is ConstraintLevel.NONE

    p = X.p
    V = np.array(X.values, dtype=float)
    T = tree.copy() if tree is not None else None
    nodes = list(range(p))
    labels = list(X.taxon_ids)
    used_labels = set(labels)

    C = None
    bc = None
    if kind is LossKind.SDI:
        C = V.T @ V
    elif kind is LossKind.SWI:
        C = np.vstack([_merge_entropy(V[:, j], V) for j in range(p)])
    elif kind is LossKind.BC:
        bc = _BCCache(V)
        C = np.vstack([bc.row(V[:, j], V) for j in range(p)])
    scale = np.log(spec.log_base) if (kind is LossKind.SWI and spec.log_base) else 1.0

    if kind.is_alpha:
        total_alpha = float(alpha_values(V, spec).sum())
    else:
        if kind is LossKind.BC:
            D0 = pairwise_bc(V)
        else:
            D0 = pairwise_wuf(V, *T.leaf_lengths(labels))
        iu = np.triu_indices(X.n, 1)
        d0 = D0[iu]
        d_cur = d0.copy()
        ref_ss = float(d0 @ d0)

    steps = []
    cum = 0.0
    for t in range(1, p):
        m = len(nodes)
        pairs, relaxed = _active_pairs(labels, T, level)
        if relaxed:
            log.info("step %d: no pair at the maximum depth; strong level relaxed", t)
        if kind is LossKind.WUF:
            l, L = map(np.asarray, T.leaf_lengths(labels))
            placements = [T.merge_placement(labels[j], labels[k]) for j, k in pairs]
            costs = _wuf_costs(V, l, L, pairs, placements)
        elif level is ConstraintLevel.NONE:
            ju, ku = np.triu_indices(m, 1)
            costs = C[ju, ku]
        else:
            pj, pk = np.array(pairs).T
            costs = C[pj, pk]
        q = select_pair(pairs, costs)
        j, k = pairs[q]
        cost = float(costs[q]) / scale if kind is LossKind.SWI else float(costs[q])

        new_col = V[:, j] + V[:, k]
        if kind is LossKind.BC:
            iu_, ju_ = bc.iu, bc.ju
            gain = np.minimum(new_col[iu_], new_col[ju_]) - bc.T[:, j] - bc.T[:, k]
        new_id = p + t - 1
        if T is not None:
            new_label = f"node{new_id}"
            while new_label in used_labels:
                new_label = "_" + new_label
            used_labels.add(new_label)
            T.merge_leaves(labels[j], labels[k], new_label, lca=lca)
            labels[j] = new_label
        else:
            labels[j] = f"node{new_id}"
        del labels[k]
        pair_ids = (nodes[j], nodes[k])
        nodes[j] = new_id
        del nodes[k]
        V[:, j] = new_col
        V = np.delete(V, k, axis=1)

        if kind is LossKind.SDI:
            row = new_col @ V
        elif kind is LossKind.SWI:
            row = _merge_entropy(new_col, V)
        elif kind is LossKind.BC:
            bc.replace(j, k, new_col)
            row = bc.row(new_col, V)
        if C is not None:
            C = np.delete(np.delete(C, k, axis=0), k, axis=1)
            C[j, :] = row
            C[:, j] = row

        if kind.is_alpha:
            step_loss = 2.0 * cost if kind is LossKind.SDI else cost
            cum += step_loss
            cumulative = cum
        else:
            step_loss = cost
            if kind is LossKind.BC:
                d_cur = d_cur - gain
            else:
                d_cur = pairwise_wuf(V, *T.leaf_lengths(labels))[np.triu_indices(X.n, 1)]
            diff = d0 - d_cur
            cumulative = float(diff @ diff)
            if kind is LossKind.BC:
                # BC distances only shrink under merging; absorb rounding dips
                cumulative = max(cumulative, steps[-1][5] if steps else 0.0)
        steps.append([t, pair_ids, (j, k), new_id, step_loss, cumulative, relaxed])

    out = []
    final = steps[-1][5] if steps else 0.0
    for t, pair_ids, pos, new_id, step_loss, cumulative, relaxed in steps:
        if kind.is_alpha:
            if final > 0:
                pct = 100.0 * cumulative / final
            else:
                pct = 100.0 if t == p - 1 else 0.0
        else:
            pct = 100.0 * np.sqrt(cumulative / ref_ss) if ref_ss > 0 else 0.0
        out.append(MergeStep(t, pair_ids, pos, new_id, step_loss, cumulative, min(100.0, float(pct)), relaxed))
    if kind.is_alpha:
        log.debug("total alpha %.6g, accumulated loss %.6g", total_alpha, final)
    return MergeTrace(tuple(out), X.taxon_ids, spec, level, X, tree)


# -- cuts --------------------------------------------------------------


def _replay(trace: MergeTrace, n_merges: int):
    groups = [[j] for j in range(trace.p)]
    ids = list(range(trace.p))
    T = trace.tree.copy() if trace.tree is not None else None
    labels = list(trace.initial_taxa)
    lca = trace.constraint_level is ConstraintLevel.NONE
    used = set(labels)
    for s in trace.steps[:n_merges]:
        j, k = s.positions
        if (ids[j], ids[k]) != tuple(s.pair):
            raise HPAAError(f"trace is inconsistent at step {s.t}")
        if T is not None:
            lab = f"node{s.new_node}"
            while lab in used:
                lab = "_" + lab
            used.add(lab)
            T.merge_leaves(labels[j], labels[k], lab, lca=lca)
            labels[j] = lab
        del labels[k]
        groups[j] = groups[j] + groups[k]
        del groups[k]
        ids[j] = s.new_node
        del ids[k]
    return groups, ids, labels, T


def cut(trace: MergeTrace, k: int):
    """The ``k`` principal compositions of a trace.

    Returns ``(grouping, scores, reduced_tree)``; ``scores`` is the
    amalgamated composition matrix and ``reduced_tree`` is None when the
    trace was run without a tree.
    """
    p = trace.p
    if not 1 <= k <= p:
        raise HPAAError(f"k must lie in [1, {p}], got {k}")
    groups, ids, _, T = _replay(trace, p - k)
    glabels = _unique_labels([trace.node_label(i) for i in ids])
    g = Grouping(tuple(tuple(gr) for gr in groups), tuple(glabels))
    return g, amalgamate(trace.data, g), T


def _unique_labels(labels):
    seen, out = set(), []
    for s in labels:
        while s in seen:
            s = "_" + s
        seen.add(s)
        out.append(s)
    return out


def scree(trace: MergeTrace) -> list[tuple[int, float]]:
    """``(k, percent_loss)`` for ``k = p, p-1, ..., 1``."""
    p = trace.p
    return [(p, 0.0)] + [(p - s.t, s.percent_loss) for s in trace.steps]

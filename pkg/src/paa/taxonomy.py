"""Rooted taxonomic trees with depth / lowest-multi-child-ancestor queries.

Nodes are integer ids. Leaves carry a label (the taxon id, or the label of a
merged node once amalgamation has started); ``leaf_map`` maps labels to node
ids. Every non-root edge has a nonnegative ``branch_length`` (1.0 by default
for rank-based taxonomies).
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass

ROOT_RANK = "root"


class TreeError(ValueError):
    """Raised for malformed trees or invalid tree queries."""


@dataclass
class Node:
    id: int
    parent: int | None
    children: list
    rank: str | None = None
    name: str | None = None
    branch_length: float = 1.0


class TaxonomyTree:
    """Mutable rooted tree; use :meth:`copy` before destructive edits.

    Parameters
    ----------
    nodes : dict of int -> Node
    leaf_map : dict of str -> int
        Leaf label to leaf node id. Must cover every leaf exactly once.
    rank_names : sequence of str, optional
        Rank name per depth, starting at depth 1. Used for plotting.
    """

    def __init__(self, nodes, leaf_map, rank_names=()):
        self.nodes: dict[int, Node] = nodes
        self.leaf_map: dict[str, int] = dict(leaf_map)
        self.rank_names = tuple(rank_names)
        self._next_id = max(nodes) + 1 if nodes else 0
        self._validate()

    def _validate(self):
        roots = [i for i, nd in self.nodes.items() if nd.parent is None]
        if len(roots) != 1:
            raise TreeError(f"tree must have exactly one root, found {len(roots)}")
        self.root = roots[0]
        seen = set()
        stack = [self.root]
        while stack:
            i = stack.pop()
            if i in seen:
                raise TreeError("tree contains a cycle")
            seen.add(i)
            for c in self.nodes[i].children:
                if self.nodes[c].parent != i:
                    raise TreeError(f"node {c} has inconsistent parent pointer")
                stack.append(c)
        if len(seen) != len(self.nodes):
            raise TreeError("tree has nodes unreachable from the root")
        for nd in self.nodes.values():
            if nd.branch_length < 0:
                raise TreeError(f"negative branch length at node {nd.id}")
        leaves = {i for i, nd in self.nodes.items() if not nd.children}
        if set(self.leaf_map.values()) != leaves or len(self.leaf_map) != len(leaves):
            raise TreeError("leaf_map must cover every leaf exactly once")

    def copy(self) -> "TaxonomyTree":
        nodes = {
            i: Node(nd.id, nd.parent, list(nd.children), nd.rank, nd.name, nd.branch_length)
            for i, nd in self.nodes.items()
        }
        t = TaxonomyTree.__new__(TaxonomyTree)
        t.nodes, t.leaf_map, t.rank_names = nodes, dict(self.leaf_map), self.rank_names
        t.root, t._next_id = self.root, self._next_id
        return t

    # -- queries -------------------------------------------------------

    @property
    def leaves(self) -> list[str]:
        return list(self.leaf_map)

    def node_of(self, leaf_or_node) -> int:
        if isinstance(leaf_or_node, str):
            try:
                return self.leaf_map[leaf_or_node]
            except KeyError:
                raise TreeError(f"unknown leaf {leaf_or_node!r}") from None
        if leaf_or_node not in self.nodes:
            raise TreeError(f"unknown node {leaf_or_node!r}")
        return leaf_or_node

    def ancestors(self, node) -> list[int]:
        """Ancestors from the parent up to the root."""
        i = self.node_of(node)
        out = []
        while self.nodes[i].parent is not None:
            i = self.nodes[i].parent
            out.append(i)
        return out

    def depth(self, node) -> int:
        return len(self.ancestors(node))

    def max_leaf_depth(self) -> int:
        return max(self.depth(i) for i in self.leaf_map.values())

    def root_path_length(self, node) -> float:
        i = self.node_of(node)
        total = 0.0
        while self.nodes[i].parent is not None:
            total += self.nodes[i].branch_length
            i = self.nodes[i].parent
        return total

    def branch_length(self, node) -> float:
        i = self.node_of(node)
        return 0.0 if self.nodes[i].parent is None else self.nodes[i].branch_length

    def lowest_multichild_ancestor(self, node) -> int:
        for a in self.ancestors(node):
            if len(self.nodes[a].children) >= 2:
                return a
        raise TreeError(f"node {node!r} has no ancestor with more than one child")

    def lowest_common_ancestor(self, a, b) -> int:
        pa = [self.node_of(a), *self.ancestors(a)]
        pb = set([self.node_of(b), *self.ancestors(b)])
        for x in pa:
            if x in pb:
                return x
        raise TreeError("nodes share no ancestor")  # unreachable for a valid tree

    def leaf_lengths(self, labels) -> tuple[list[float], list[float]]:
        """Branch lengths and root-path lengths for the given leaf labels."""
        ids = [self.node_of(s) for s in labels]
        return [self.branch_length(i) for i in ids], [self.root_path_length(i) for i in ids]

    def leaves_under(self, node) -> list[str]:
        inv = {v: k for k, v in self.leaf_map.items()}
        out, stack = [], [self.node_of(node)]
        while stack:
            i = stack.pop()
            ch = self.nodes[i].children
            if not ch:
                out.append(inv[i])
            stack.extend(reversed(ch))
        return out

    def ancestor_at_depth(self, node, d: int) -> int:
        path = [self.node_of(node), *self.ancestors(node)][::-1]
        return path[min(d, len(path) - 1)]

    # -- reduction -----------------------------------------------------

    def _merge_anchor(self, a: int, b: int, lca: bool) -> int:
        if lca:
            return self.lowest_common_ancestor(a, b)
        A = self.lowest_multichild_ancestor(a)
        if self.lowest_multichild_ancestor(b) != A:
            raise TreeError("leaves do not share a lowest multi-child ancestor")
        return A

    def _pruned_children(self, A: int, a: int, b: int) -> int:
        """Number of children A keeps after removing a, b and emptied chains."""
        lost = set()
        for x in (a, b):
            while x != A:
                lost.add(x)
                p = self.nodes[x].parent
                if p == A or any(c not in lost for c in self.nodes[p].children):
                    break
                x = p
        return sum(c not in lost for c in self.nodes[A].children)

    def merge_placement(self, a, b, lca: bool = False) -> tuple[float, float]:
        """Branch length and root-path length the merged leaf would receive.

        Same rule as :meth:`merge_leaves`, evaluated without modifying the tree.
        """
        ia, ib = self.node_of(a), self.node_of(b)
        if ia == ib:
            raise TreeError("cannot merge a leaf with itself")
        A = self._merge_anchor(ia, ib, lca)
        LA = self.root_path_length(A)
        if self._pruned_children(A, ia, ib) == 0:
            return self.branch_length(A), LA
        l = min(1.0, max(self.root_path_length(ia), self.root_path_length(ib)) - LA)
        return l, LA + l

    def merge_leaves(self, a, b, label: str, lca: bool = False) -> int:
        """Replace leaves ``a`` and ``b`` by a single leaf named ``label`` (in place).

        Both leaves and any ancestors left childless below the anchor ``A``
        are removed. ``A`` is the shared lowest multi-child ancestor, or the
        lowest common ancestor when ``lca`` is true. If ``A`` has no children
        left, the merged leaf takes ``A``'s place (same parent, branch length
        and depth). Otherwise it becomes a new child of ``A`` whose branch
        length is the larger of the two removed root-path lengths minus that
        of ``A``, capped at 1.0.

        Returns the node id of the merged leaf.
        """
        ia, ib = self.node_of(a), self.node_of(b)
        if ia == ib:
            raise TreeError("cannot merge a leaf with itself")
        if self.nodes[ia].children or self.nodes[ib].children:
            raise TreeError("merge_leaves expects two leaves")
        if label in self.leaf_map and self.leaf_map[label] not in (ia, ib):
            raise TreeError(f"leaf label {label!r} already in use")
        A = self._merge_anchor(ia, ib, lca)
        LA = self.root_path_length(A)
        l_new = min(1.0, max(self.root_path_length(ia), self.root_path_length(ib)) - LA)
        for lab, i in list(self.leaf_map.items()):
            if i in (ia, ib):
                del self.leaf_map[lab]
        for x in (ia, ib):
            while x != A:
                p = self.nodes[x].parent
                self.nodes[p].children.remove(x)
                del self.nodes[x]
                if self.nodes[p].children or p == A:
                    break
                x = p
        if not self.nodes[A].children:
            # A becomes the merged leaf
            self.nodes[A].name = label
            self.leaf_map[label] = A
            return A
        nid = self._next_id
        self._next_id += 1
        self.nodes[nid] = Node(nid, A, [], None, label, l_new)
        self.nodes[A].children.append(nid)
        self.leaf_map[label] = nid
        return nid

    # -- output --------------------------------------------------------

    def to_newick(self) -> str:
        inv = {v: k for k, v in self.leaf_map.items()}

        def rec(i):
            nd = self.nodes[i]
            if nd.children:
                s = "(" + ",".join(rec(c) for c in nd.children) + ")"
                s += _newick_name(nd.name) if nd.name else ""
            else:
                s = _newick_name(inv[i])
            if nd.parent is not None:
                s += ":" + _fmt_len(nd.branch_length)
            return s

        return rec(self.root) + ";"


def reduce_after_merge(tree: TaxonomyTree, leaf_a, leaf_b, label: str | None = None, lca: bool = False) -> TaxonomyTree:
    """Functional wrapper around :meth:`TaxonomyTree.merge_leaves`."""
    t = tree.copy()
    if label is None:
        label = f"{leaf_a}+{leaf_b}"
    t.merge_leaves(leaf_a, leaf_b, label, lca=lca)
    return t


def depth(tree: TaxonomyTree, node) -> int:
    return tree.depth(node)


def lowest_multichild_ancestor(tree: TaxonomyTree, node) -> int:
    return tree.lowest_multichild_ancestor(node)


def _fmt_len(x: float) -> str:
    return repr(float(x))


def _newick_name(s: str) -> str:
    if re.search(r"[\s(),:;'\[\]]", s):
        return "'" + s.replace("'", "''") + "'"
    return s


def parse_lineage_table(text: str, delimiter: str | None = None) -> TaxonomyTree:
    """Build a tree from a taxon lineage table.

    The header row names the columns: taxon id first, then ranks from the
    highest (e.g. phylum) to the lowest. An optional column named
    ``branch_length`` sets the length of the taxon's own leaf edge. Empty
    rank cells end the lineage early; the taxon then hangs below its last
    non-empty rank (or the root). Shared lineage prefixes become shared
    internal nodes.
    """
    if delimiter is None:
        first = text.split("\n", 1)[0]
        delimiter = "\t" if "\t" in first else ","
    rows = [r for r in csv.reader(io.StringIO(text), delimiter=delimiter) if any(c.strip() for c in r)]
    if len(rows) < 2:
        raise TreeError("lineage table is empty")
    header = [c.strip() for c in rows[0]]
    bl_col = header.index("branch_length") if "branch_length" in header else None
    rank_cols = [i for i in range(1, len(header)) if i != bl_col]
    ranks = [header[i] for i in rank_cols]

    nodes = {0: Node(0, None, [], ROOT_RANK, "root", 0.0)}
    by_path: dict[tuple, int] = {(): 0}
    leaf_map: dict[str, int] = {}
    for lineno, r in enumerate(rows[1:], start=2):
        r = [c.strip() for c in r] + [""] * (len(header) - len(r))
        taxon = r[0]
        if not taxon:
            raise TreeError(f"missing taxon id at line {lineno}")
        if taxon in leaf_map:
            raise TreeError(f"duplicate taxon id {taxon!r} at line {lineno}")
        path: tuple = ()
        parent = 0
        for rank, ci in zip(ranks, rank_cols):
            v = r[ci]
            if not v:
                break
            path = path + (v,)
            if path not in by_path:
                nid = len(nodes)
                nodes[nid] = Node(nid, parent, [], rank, v, 1.0)
                nodes[parent].children.append(nid)
                by_path[path] = nid
            parent = by_path[path]
        bl = 1.0
        if bl_col is not None and r[bl_col]:
            bl = float(r[bl_col])
        nid = len(nodes)
        nodes[nid] = Node(nid, parent, [], header[0] or "taxon", taxon, bl)
        nodes[parent].children.append(nid)
        leaf_map[taxon] = nid
    return TaxonomyTree(nodes, leaf_map, ranks)


_NEWICK_TOKEN = re.compile(r"\s*('(?:[^']|'')*'|[(),:;]|[^\s(),:;']+)")


def parse_newick(text: str) -> TaxonomyTree:
    """Parse a Newick string. Leaf names become leaf labels.

    Missing branch lengths default to 1.0. Internal node names are kept as
    node names.
    """
    tokens = [m.group(1) for m in _NEWICK_TOKEN.finditer(text.strip())]
    pos = 0
    nodes: dict[int, Node] = {}
    leaf_map: dict[str, int] = {}

    def peek():
        return tokens[pos] if pos < len(tokens) else None

    def take():
        nonlocal pos
        t = tokens[pos]
        pos += 1
        return t

    def name_token(t):
        if t.startswith("'"):
            return t[1:-1].replace("''", "'")
        return t

    def subtree(parent):
        nid = len(nodes)
        nodes[nid] = Node(nid, parent, [], None, None, 1.0)
        if peek() == "(":
            take()
            while True:
                nodes[nid].children.append(subtree(nid))
                t = take()
                if t == ")":
                    break
                if t != ",":
                    raise TreeError(f"unexpected token {t!r} in Newick")
        t = peek()
        if t is not None and t not in "(),:;":
            nodes[nid].name = name_token(take())
        if peek() == ":":
            take()
            tok = take()
            try:
                nodes[nid].branch_length = float(tok)
            except (TypeError, ValueError):
                raise TreeError(f"invalid branch length {tok!r} in Newick") from None
        if not nodes[nid].children:
            if not nodes[nid].name:
                raise TreeError("unnamed leaf in Newick")
            if nodes[nid].name in leaf_map:
                raise TreeError(f"duplicate leaf name {nodes[nid].name!r}")
            leaf_map[nodes[nid].name] = nid
        return nid

    if not tokens:
        raise TreeError("empty Newick string")
    subtree(None)
    if peek() == ";":
        take()
    if peek() is not None:
        raise TreeError(f"trailing tokens in Newick: {tokens[pos:]}")
    nodes[0].branch_length = 0.0
    return TaxonomyTree(nodes, leaf_map)


def load_tree(text: str) -> TaxonomyTree:
    """Newick if the text starts with '(' (after whitespace), else a lineage table."""
    if text.lstrip().startswith("("):
        return parse_newick(text)
    return parse_lineage_table(text)


def star_tree(labels, branch_length: float = 1.0) -> TaxonomyTree:
    nodes = {0: Node(0, None, [], ROOT_RANK, "root", 0.0)}
    leaf_map = {}
    for s in labels:
        nid = len(nodes)
        nodes[nid] = Node(nid, 0, [], None, s, branch_length)
        nodes[0].children.append(nid)
        leaf_map[s] = nid
    return TaxonomyTree(nodes, leaf_map)

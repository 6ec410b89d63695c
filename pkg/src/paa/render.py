"""Static SVG figures: merge dendrogram, scree plot, ordination plot.

The writer is deliberately dependency-free and deterministic so identical
inputs give byte-identical documents. Every function optionally fills a
``sidecar`` dict with the plotted coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape, quoteattr

from .hpaa import ConstraintLevel, MergeTrace
from .ordination import OrdinationResult
from .taxonomy import TaxonomyTree

DEFAULT_PALETTE = (
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02",
    "#a6761d", "#666666", "#1f78b4", "#b2df8a", "#fb9a99", "#cab2d6",
)
LOG_EPS = 0.01


@dataclass(frozen=True)
class PlotStyle:
    width: int = 800
    height: int = 500
    palette: tuple = DEFAULT_PALETTE
    log_scale: bool = False
    font_size: int = 11

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("width and height must be positive")
        if not self.palette:
            raise ValueError("palette must not be empty")


def _n(x: float) -> str:
    s = f"{x:.10f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


class _Svg:
    def __init__(self, style: PlotStyle):
        self.style = style
        self.parts = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{style.width}" '
            f'height="{style.height}" viewBox="0 0 {style.width} {style.height}" '
            f'font-family="sans-serif" font-size="{style.font_size}">',
            f'<rect width="{style.width}" height="{style.height}" fill="white"/>',
        ]

    def add(self, tag: str, text: str | None = None, **attrs):
        a = " ".join(f"{k.rstrip('_').replace('_', '-')}={quoteattr(str(v))}" for k, v in attrs.items())
        if text is None:
            self.parts.append(f"<{tag} {a}/>")
        else:
            self.parts.append(f"<{tag} {a}>{escape(text)}</{tag}>")

    def close(self) -> str:
        return "\n".join(self.parts + ["</svg>", ""])


class _Axis:
    """Affine map from a data interval onto a pixel interval."""

    def __init__(self, lo, hi, p0, p1):
        if hi == lo:
            lo, hi = lo - 0.5, hi + 0.5
        self.lo, self.hi, self.p0, self.p1 = lo, hi, p0, p1

    def __call__(self, v):
        return self.p0 + (v - self.lo) / (self.hi - self.lo) * (self.p1 - self.p0)


def _margin(style):
    return max(0.08 * style.width, 40.0), max(0.08 * style.height, 30.0)


# -- dendrogram --------------------------------------------------------


def _leaf_order(trace: MergeTrace) -> list[int]:
    if not trace.steps:
        return [0]
    kids = {s.new_node: s.pair for s in trace.steps}
    out, stack = [], [trace.steps[-1].new_node]
    while stack:
        v = stack.pop()
        if v in kids:
            stack.extend(reversed(kids[v]))
        else:
            out.append(v)
    return out


def _rank_events(trace: MergeTrace, tree: TaxonomyTree):
    """(step, depth) pairs: first step at which the reduced tree's max depth drops to ``depth``."""
    events = []
    T = tree.copy()
    cur = T.max_leaf_depth()
    lca = trace.constraint_level is ConstraintLevel.NONE
    labels = list(trace.initial_taxa)
    for s in trace.steps:
        j, k = s.positions
        lab = f"node{s.new_node}"
        while lab in labels or lab in T.leaf_map:
            lab = "_" + lab
        T.merge_leaves(labels[j], labels[k], lab, lca=lca)
        labels[j] = lab
        del labels[k]
        d = T.max_leaf_depth()
        while d < cur:
            cur -= 1
            events.append((s.t, cur))
    return events


def _rank_name(tree: TaxonomyTree, depth: int) -> str:
    if depth == 0:
        return "root"
    if depth - 1 < len(tree.rank_names):
        return tree.rank_names[depth - 1]
    return f"depth {depth}"


def render_dendrogram(trace: MergeTrace, tree: TaxonomyTree | None = None, style: PlotStyle = PlotStyle(), sidecar: dict | None = None) -> str:
    """Merge dendrogram over taxonomy colour bars.

    Join heights are the cumulative percent loss (``log10(pct + 0.01)`` when
    ``style.log_scale``). Dashed lines mark the steps at which the reduced
    tree first loses a taxonomic level; one colour bar per rank shows which
    taxa share a category at that rank.
    """
    tree = tree if tree is not None else trace.tree
    if tree is not None and set(tree.leaves) != set(trace.initial_taxa):
        raise ValueError("tree leaves do not match the trace taxa")
    p = trace.p
    W, H = style.width, style.height
    mx, my = _margin(style)
    n_ranks = 0
    if tree is not None:
        n_ranks = max(tree.depth(s) for s in tree.leaves) - 1
    bar_h = 12.0
    label_h = 6.0 * style.font_size
    bottom = H - my - label_h - n_ranks * (bar_h + 2)
    hfun = (lambda v: math.log10(v + LOG_EPS)) if style.log_scale else (lambda v: v)
    heights = {j: hfun(0.0) for j in range(p)}
    for s in trace.steps:
        # WUF percent loss can dip; keep parents at or above their children
        a, b = s.pair
        heights[s.new_node] = max(hfun(s.percent_loss), heights[a], heights[b])
    top_val = max(heights.values())
    yax = _Axis(hfun(0.0), max(top_val, hfun(0.0) + 1e-12), bottom, my)
    order = _leaf_order(trace)
    step_x = (W - 2 * mx) / max(p, 1)
    xpos = {leaf: mx + (i + 0.5) * step_x for i, leaf in enumerate(order)}
    for s in trace.steps:
        a, b = s.pair
        xpos[s.new_node] = (xpos[a] + xpos[b]) / 2

    svg = _Svg(style)
    scale_note = " (log10 scale)" if style.log_scale else ""
    svg.add("text", f"% loss{scale_note}", x=_n(mx * 0.25), y=_n(my * 0.6), class_="axis-label")
    for v in _ticks(yax.lo, yax.hi):
        y = yax(v)
        svg.add("line", x1=_n(mx - 4), y1=_n(y), x2=_n(mx), y2=_n(y), stroke="black", class_="tick")
        lab = f"{10 ** v - LOG_EPS:.3g}" if style.log_scale else f"{v:.3g}"
        svg.add("text", lab, x=_n(mx - 6), y=_n(y + 3), text_anchor="end", class_="tick-label")
    svg.add("line", x1=_n(mx), y1=_n(my), x2=_n(mx), y2=_n(bottom), stroke="black", class_="axis")

    joins = []
    for s in trace.steps:
        a, b = s.pair
        ya, yb, yp = yax(heights[a]), yax(heights[b]), yax(heights[s.new_node])
        d = f"M {_n(xpos[a])} {_n(ya)} V {_n(yp)} H {_n(xpos[b])} V {_n(yb)}"
        svg.add("path", d=d, fill="none", stroke="black", class_="join",
                data_node=s.new_node, data_children=f"{a} {b}", data_height=_n(s.percent_loss))
        joins.append({"node": s.new_node, "children": [a, b], "x": xpos[s.new_node], "y": yp, "percent": s.percent_loss})

    if tree is not None and trace.steps:
        for t, dep in _rank_events(trace, tree):
            y = yax(heights[trace.steps[t - 1].new_node])
            svg.add("line", x1=_n(mx), y1=_n(y), x2=_n(W - mx), y2=_n(y), stroke="red",
                    stroke_dasharray="6,4", class_="rank-line", data_step=t, data_depth=dep)
            svg.add("text", _rank_name(tree, dep), x=_n(W - mx + 2), y=_n(y + 3), fill="red", class_="rank-label")

    leaves = []
    for leaf in order:
        x = xpos[leaf]
        svg.add("text", trace.initial_taxa[leaf], x=_n(x), y=_n(bottom + 4),
                transform=f"rotate(90 {_n(x)} {_n(bottom + 4)})", class_="leaf")
        leaves.append({"taxon": trace.initial_taxa[leaf], "x": x, "y": bottom})

    bars = []
    if tree is not None:
        y0 = bottom + label_h
        for r in range(1, n_ranks + 1):
            colours: dict = {}
            y = y0 + (r - 1) * (bar_h + 2)
            svg.add("text", _rank_name(tree, r), x=_n(mx - 4), y=_n(y + bar_h - 2), text_anchor="end", class_="rank-name")
            for leaf in order:
                taxon = trace.initial_taxa[leaf]
                node = tree.ancestor_at_depth(taxon, r)
                nd = tree.nodes[node]
                cat = nd.name if nd.children else ""
                if cat:
                    colours.setdefault(cat, style.palette[len(colours) % len(style.palette)])
                fill = colours.get(cat, "#ffffff")
                svg.add("rect", x=_n(xpos[leaf] - step_x / 2), y=_n(y), width=_n(step_x), height=_n(bar_h),
                        fill=fill, class_="rankbar", data_rank=_rank_name(tree, r), data_category=cat)
                bars.append({"rank": _rank_name(tree, r), "taxon": taxon, "category": cat})
    if sidecar is not None:
        sidecar.update({"joins": joins, "leaves": leaves, "rank_bars": bars})
    return svg.close()


def _ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    step = 10 ** math.floor(math.log10((hi - lo) / n))
    for mult in (1, 2, 5, 10):
        if (hi - lo) / (step * mult) <= n:
            step *= mult
            break
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-12:
        out.append(round(v, 12))
        v += step
    return out


# -- scree -------------------------------------------------------------


def render_scree(series, style: PlotStyle = PlotStyle(), sidecar: dict | None = None) -> str:
    """Percent loss against number of principal compositions.

    ``series`` is either one list of ``(k, percent)`` points or a mapping of
    series name to such a list (drawn as overlaid, coloured polylines with a
    legend). The x axis runs from ``p`` on the left down to 1.
    """
    if not isinstance(series, dict):
        series = {"": list(series)}
    if not series or any(len(v) == 0 for v in series.values()):
        raise ValueError("scree series must be non-empty")
    W, H = style.width, style.height
    mx, my = _margin(style)
    ks = [k for v in series.values() for k, _ in v]
    xax = _Axis(max(ks), min(ks), mx, W - mx)
    yax = _Axis(0.0, 100.0, H - my, my)
    svg = _Svg(style)
    svg.add("line", x1=_n(mx), y1=_n(H - my), x2=_n(W - mx), y2=_n(H - my), stroke="black", class_="axis")
    svg.add("line", x1=_n(mx), y1=_n(my), x2=_n(mx), y2=_n(H - my), stroke="black", class_="axis")
    for v in (0, 25, 50, 75, 100):
        svg.add("text", str(v), x=_n(mx - 6), y=_n(yax(v) + 3), text_anchor="end", class_="tick-label")
    for k in sorted(set(_ticks(min(ks), max(ks)))):
        svg.add("text", f"{k:g}", x=_n(xax(k)), y=_n(H - my + 14), text_anchor="middle", class_="tick-label")
    svg.add("text", "number of principal compositions", x=_n(W / 2), y=_n(H - my * 0.2), text_anchor="middle", class_="axis-label")
    svg.add("text", "% loss", x=_n(mx * 0.2), y=_n(my * 0.6), class_="axis-label")
    out = {}
    for i, (name, pts) in enumerate(series.items()):
        colour = style.palette[i % len(style.palette)]
        coords = [(xax(k), yax(v)) for k, v in pts]
        svg.add("polyline", points=" ".join(f"{_n(x)},{_n(y)}" for x, y in coords), fill="none",
                stroke=colour, stroke_width="1.5", class_="series", data_name=name)
        out[name] = [{"k": k, "percent": v, "x": x, "y": y} for (k, v), (x, y) in zip(pts, coords)]
        if name:
            ly = my + i * (style.font_size + 6)
            svg.add("line", x1=_n(W - mx - 110), y1=_n(ly), x2=_n(W - mx - 90), y2=_n(ly), stroke=colour,
                    stroke_width="2", class_="legend-line")
            svg.add("text", name, x=_n(W - mx - 85), y=_n(ly + 4), class_="legend")
    if sidecar is not None:
        sidecar["series"] = out
    return svg.close()


# -- ordination --------------------------------------------------------


def render_ordination(result: OrdinationResult, style: PlotStyle = PlotStyle(), sidecar: dict | None = None) -> str:
    """Paired NMDS scatter with one covering circle per sample.

    Both axes share one scale so circles stay circular.
    """
    Y = result.embedding.coords
    n = len(result.pairing)
    W, H = style.width, style.height
    mx, my = _margin(style)
    x0, x1 = float(Y[:, 0].min()), float(Y[:, 0].max())
    if Y.shape[1] > 1:
        y0, y1 = float(Y[:, 1].min()), float(Y[:, 1].max())
    else:
        y0 = y1 = 0.0
    span = max(x1 - x0, y1 - y0, 1e-12)
    scale = min((W - 2 * mx) / span, (H - 2 * my) / span)
    cx, cy = (x0 + x1) / 2, (y0 + y1) / 2

    def px(pt):
        x = W / 2 + (pt[0] - cx) * scale
        y = H / 2 - ((pt[1] if len(pt) > 1 else 0.0) - cy) * scale
        return x, y

    svg = _Svg(style)
    svg.add("text", "NMDS1", x=_n(W / 2), y=_n(H - my * 0.3), text_anchor="middle", class_="axis-label")
    svg.add("text", "NMDS2", x=_n(mx * 0.3), y=_n(H / 2), class_="axis-label")
    circles, points = [], []
    for i, (a, b) in enumerate(result.pairing):
        pa, pb = px(Y[a]), px(Y[b])
        c = ((pa[0] + pb[0]) / 2, (pa[1] + pb[1]) / 2)
        r = math.hypot(pa[0] - pb[0], pa[1] - pb[1]) / 2
        svg.add("circle", cx=_n(c[0]), cy=_n(c[1]), r=_n(r), fill="none", stroke="#888888",
                class_="pair-circle", data_sample=result.sample_ids[i])
        circles.append({"sample": result.sample_ids[i], "cx": c[0], "cy": c[1], "r": r})
    c_orig, c_prin = style.palette[0], style.palette[1 % len(style.palette)]
    for i in range(n):
        a, b = result.pairing[i]
        pa, pb = px(Y[a]), px(Y[b])
        svg.add("circle", cx=_n(pa[0]), cy=_n(pa[1]), r="3", fill=c_orig, class_="pt-original",
                data_sample=result.sample_ids[i])
        svg.add("rect", x=_n(pb[0] - 3), y=_n(pb[1] - 3), width="6", height="6", fill=c_prin,
                class_="pt-principal", data_sample=result.sample_ids[i], data_cx=_n(pb[0]), data_cy=_n(pb[1]))
        points.append({"sample": result.sample_ids[i], "original": pa, "principal": pb})
    svg.add("text", f"mean distortion {result.mean:.3f} ({result.sd:.3f})", x=_n(mx), y=_n(my * 0.6),
            class_="annotation")
    svg.add("circle", cx=_n(W - mx - 120), cy=_n(my * 0.5), r="3", fill=c_orig, class_="legend-marker")
    svg.add("text", "original", x=_n(W - mx - 112), y=_n(my * 0.5 + 4), class_="legend")
    svg.add("rect", x=_n(W - mx - 63), y=_n(my * 0.5 - 3), width="6", height="6", fill=c_prin, class_="legend-marker")
    svg.add("text", "principal", x=_n(W - mx - 52), y=_n(my * 0.5 + 4), class_="legend")
    if sidecar is not None:
        sidecar.update({"circles": circles, "points": points, "scale": scale})
    return svg.close()

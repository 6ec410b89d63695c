"""Synthetic data, the prevalence-filter baseline, and benchmark reports.

Replicate ``r`` of a study seeded with ``seed`` draws from
``numpy.random.default_rng(numpy.random.SeedSequence([seed, r]))``, so every
replicate is reproducible on its own and independent of scheduling.
"""

from __future__ import annotations

import csv
import io
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .compdata import CompositionMatrix
from .diversity import LossKind, LossSpec, pairwise_bc
from .hpaa import ConstraintLevel, cut, run_hpaa
from .taxonomy import TaxonomyTree, parse_lineage_table

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimConfig:
    generator: str = "poisson"
    n: int = 100
    p: int = 50
    seed: int = 0
    replicates: int = 1
    lam: float = 100.0
    total_count: int = 10_000
    probs: tuple | None = None

    def __post_init__(self):
        if self.generator not in ("poisson", "multinomial"):
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.lam <= 0:
            raise ValueError("Poisson rate must be positive")
        if self.total_count < 1:
            raise ValueError("total_count must be at least 1")
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if self.probs is not None:
            pr = np.asarray(self.probs, dtype=float)
            if np.any(pr < 0) or abs(pr.sum() - 1.0) > 1e-8:
                raise ValueError("probs must lie on the simplex (tolerance 1e-8)")
            object.__setattr__(self, "probs", tuple(float(x) for x in pr))
            object.__setattr__(self, "p", len(pr))


def replicate_rng(seed: int, r: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(r)]))


def _ids(n, p):
    return [f"S{i + 1}" for i in range(n)], [f"T{j + 1}" for j in range(p)]


def gen_poisson_matrix(cfg: SimConfig, rng: np.random.Generator | None = None) -> CompositionMatrix:
    """iid Poisson(lam) counts, normalized per row. All-zero rows are redrawn."""
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    counts = rng.poisson(cfg.lam, size=(cfg.n, cfg.p)).astype(float)
    for i in range(cfg.n):
        while counts[i].sum() == 0:
            log.warning("resampling all-zero Poisson row %d", i)
            counts[i] = rng.poisson(cfg.lam, size=cfg.p)
    s, t = _ids(cfg.n, cfg.p)
    return CompositionMatrix.from_counts(counts, s, t)


def gen_multinomial_matrix(cfg: SimConfig, rng: np.random.Generator | None = None) -> CompositionMatrix:
    """Rows ``Multinomial(total_count, probs) / total_count``."""
    if cfg.probs is None:
        raise ValueError("multinomial generator needs probs")
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    pr = np.asarray(cfg.probs)
    counts = rng.multinomial(cfg.total_count, pr / pr.sum(), size=cfg.n).astype(float)
    s, t = _ids(cfg.n, len(pr))
    return CompositionMatrix(counts / cfg.total_count, s, t, library_sizes=np.full(cfg.n, float(cfg.total_count)))


def prevalence_filter(X: CompositionMatrix, k: int, return_flags: bool = False):
    """Keep the ``k`` most prevalent taxa and renormalize.

    Prevalence is the number of samples with a nonzero entry; ties go to the
    higher mean abundance, then to the lower column index. Retained columns
    keep their original order. A row with no retained mass becomes uniform
    over the ``k`` columns and is flagged.
    """
    p = X.p
    if not 1 <= k <= p:
        raise ValueError(f"k must lie in [1, {p}], got {k}")
    V = X.values
    prev = (V > 0).sum(axis=0)
    mean = V.mean(axis=0)
    rank = np.lexsort((np.arange(p), -mean, -prev))
    keep = np.sort(rank[:k])
    sub = V[:, keep]
    sums = sub.sum(axis=1)
    flags = sums == 0
    sub = np.where(flags[:, None], 1.0 / k, sub / np.where(flags, 1.0, sums)[:, None])
    if flags.any():
        log.warning("%d samples have no mass in the retained taxa", int(flags.sum()))
    out = CompositionMatrix(sub, X.sample_ids, [X.taxon_ids[j] for j in keep], X.library_sizes)
    return (out, flags) if return_flags else out


Reducer = Callable[[CompositionMatrix, int], CompositionMatrix]


def prevalence_reducer() -> Reducer:
    return lambda X, k: prevalence_filter(X, k)


def hpaa_reducer(loss: str, level: str = "weak", tree: TaxonomyTree | None = None) -> Reducer:
    def reduce(X: CompositionMatrix, k: int) -> CompositionMatrix:
        spec = LossSpec(LossKind(loss), tree)
        return cut(run_hpaa(X, tree, spec, level), k)[1]

    return reduce


def random_lineage_tree(taxa, branching=(3, 3, 3), seed: int = 0) -> TaxonomyTree:
    """Random taxonomy: each taxon gets one category per rank, nested top-down.

    ``branching[r]`` is the number of child categories each rank-``r``
    category may have. Some taxa are given truncated lineages so that leaves
    sit at different depths.
    """
    rng = np.random.default_rng(seed)
    ranks = [f"rank{r + 1}" for r in range(len(branching))]
    lines = ["\t".join(["taxon", *ranks])]
    for t in taxa:
        path, prefix = [], ""
        for r, b in enumerate(branching):
            prefix = f"{prefix}{rng.integers(b)}"
            path.append(f"{ranks[r]}_{prefix}")
        if rng.random() < 0.15 and len(path) > 1:
            path = path[: int(rng.integers(1, len(path)))]
        lines.append("\t".join([t, *path] + [""] * (len(ranks) - len(path))))
    return parse_lineage_table("\n".join(lines) + "\n")


def _upper(D):
    return D[np.triu_indices(D.shape[0], 1)]


def distance_mse(X: CompositionMatrix, Y: CompositionMatrix) -> float:
    """Mean over sample pairs of the squared BC difference."""
    if X.n != Y.n:
        raise ValueError(f"reducer returned {Y.n} samples, expected {X.n}")
    d = _upper(pairwise_bc(X.values)) - _upper(pairwise_bc(Y.values))
    return float(d @ d / d.size) if d.size else 0.0


def distance_preservation_report(X: CompositionMatrix | None, methods: dict, k: int, replicates: int, seed: int,
                                 n: int | None = None, total_count: int = 10_000, baseline: str = "Simple",
                                 threads: int = 1, probs=None, taxon_ids=None) -> list[dict]:
    """MSE between original and reduced BC matrices over simulated replicates.

    Each replicate draws ``n`` rows from ``Multinomial(total_count, probs)``
    where ``probs`` defaults to the column means of ``X``. ``methods`` maps
    a method name to a reducer ``f(X, k) -> CompositionMatrix``. The
    relative MSE divides each MSE by the median MSE of ``baseline``.

    Returns long-format rows with keys ``replicate, method, mse, rmse``,
    sorted by replicate then method name. Simulated columns are named by
    ``taxon_ids`` (default: those of ``X``) so tree-guided reducers apply.
    """
    if probs is None:
        if X is None:
            raise ValueError("need X or probs")
        probs = X.values.mean(axis=0)
    probs = np.asarray(probs, dtype=float)
    probs = probs / probs.sum()
    n = n if n is not None else (X.n if X is not None else 100)
    if taxon_ids is None and X is not None:
        taxon_ids = X.taxon_ids
    if baseline not in methods:
        raise ValueError(f"baseline method {baseline!r} missing from methods")
    names = sorted(methods)

    def one(r):
        cfg = SimConfig("multinomial", n=n, seed=seed, total_count=total_count, probs=tuple(probs))
        data = gen_multinomial_matrix(cfg, replicate_rng(seed, r))
        if taxon_ids is not None:
            data = CompositionMatrix(data.values, data.sample_ids, taxon_ids, data.library_sizes)
        return [distance_mse(data, methods[m](data, k)) for m in names]

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(one, range(replicates)))
    else:
        results = [one(r) for r in range(replicates)]
    mse = np.array(results)  # (replicates, methods)
    base = float(np.median(mse[:, names.index(baseline)]))
    rows = []
    for r in range(replicates):
        for q, m in enumerate(names):
            rel = mse[r, q] / base if base > 0 else float("nan")
            rows.append({"replicate": r, "method": m, "mse": float(mse[r, q]), "rmse": float(rel)})
    return rows


def runtime_scaling_report(dims, spec: LossSpec | str = "sdi", level="none", replicates: int = 5, seed: int = 0,
                           tree_factory=None) -> list[dict]:
    """Wall-clock seconds for a full engine run per ``(n, p)`` setting.

    Data are Poisson(100) compositions. Runs are sequential.
    """
    if not dims:
        raise ValueError("dims must be non-empty")
    kind = LossKind(spec.kind if isinstance(spec, LossSpec) else spec)
    level = ConstraintLevel(level)
    rows = []
    for n, p in dims:
        times = []
        for r in range(replicates):
            X = gen_poisson_matrix(SimConfig("poisson", n=n, p=p, seed=seed), replicate_rng(seed, r))
            tree = None
            if level is not ConstraintLevel.NONE or kind is LossKind.WUF:
                tree = tree_factory(X.taxon_ids) if tree_factory else random_lineage_tree(X.taxon_ids, seed=seed)
            t0 = time.perf_counter()
            run_hpaa(X, tree, LossSpec(kind, tree), level)
            times.append(time.perf_counter() - t0)
        rows.append({
            "n": n, "p": p, "loss": kind.value,
            "mean_seconds": float(np.mean(times)),
            "sd_seconds": float(np.std(times, ddof=1)) if len(times) > 1 else 0.0,
            "median_seconds": float(np.median(times)),
        })
    return rows


def rows_to_csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)

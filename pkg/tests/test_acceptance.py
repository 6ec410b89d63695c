"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines as they
happen; they are also repeated in the terminal summary.
"""

import contextlib
import os
import time

import numpy as np
import pytest
from scipy.spatial.distance import pdist, squareform

from oracles import OracleTree, oracle_active, oracle_path, partition_projection, random_composition, random_instance
from paa import CompositionMatrix, active_pairs, cut, run_hpaa, sdi
from paa.cli import main
from paa.ordination import isotonic_regression_pav, nmds
from paa.simbench import (
    distance_preservation_report,
    hpaa_reducer,
    prevalence_reducer,
    random_lineage_tree,
    runtime_scaling_report,
)

RESULTS = {}

LOSSES = ("sdi", "swi", "bc", "wuf")
LEVELS = ("none", "weak", "strong")


def valid_runs():
    for loss in LOSSES:
        for level in LEVELS:
            if loss == "wuf" and level == "none":
                continue
            yield loss, level


@contextlib.contextmanager
def criterion(n, title):
    detail = {}
    try:
        yield detail
    except BaseException:
        line = f"criterion {n} FAIL: {title} {detail.get('info', '')}".rstrip()
        RESULTS[n] = line
        print(line)
        raise
    line = f"criterion {n} PASS: {title} {detail.get('info', '')}".rstrip()
    RESULTS[n] = line
    print(line)


def test_criterion_1_greedy_oracle_equivalence():
    with criterion(1, "engine argmin equals brute-force argmin at every step") as c:
        rng = np.random.default_rng(7)
        t0 = time.perf_counter()
        runs = mismatches = 0
        for _ in range(200):
            X, T = random_instance(rng, (3, 6), (4, 10))
            for loss, level in valid_runs():
                tr = run_hpaa(X, T, loss, level)
                ref = oracle_path(X, T, loss, level)
                got = [(s.positions, s.relaxed) for s in tr.steps]
                want = [(pos, relaxed) for pos, _, relaxed in ref]
                mismatches += got != want
                runs += 1
        elapsed = time.perf_counter() - t0
        c["info"] = f"({runs} runs, {mismatches} mismatches, {elapsed:.1f} s)"
        assert mismatches == 0
        assert elapsed < 60


def test_criterion_2_monotone_loss():
    with criterion(2, "per-step loss >= 0, percent loss non-decreasing, SDI total") as c:
        rng = np.random.default_rng(8)
        worst = 0.0
        for _ in range(100):
            X, T = random_instance(rng, (3, 8), (4, 12))
            for loss in ("sdi", "swi", "bc"):
                for level in LEVELS:
                    tr = run_hpaa(X, T, loss, level)
                    assert all(s.step_loss >= 0 for s in tr.steps)
                    pct = [0.0] + [s.percent_loss for s in tr.steps]
                    assert all(b >= a for a, b in zip(pct, pct[1:]))
                    if loss == "sdi":
                        total = sum(sdi(x) for x in X.values)
                        err = abs(tr.steps[-1].cumulative_loss - total)
                        worst = max(worst, err)
                        assert err <= 1e-9
        c["info"] = f"(max SDI total error {worst:.1e})"


def test_criterion_3_constraint_replay():
    with criterion(3, "weak/strong traces satisfy the constraints on replay") as c:
        rng = np.random.default_rng(9)
        violations = checked = relaxed = 0
        for _ in range(150):
            X, T = random_instance(rng, (3, 6), (4, 14))
            for loss in LOSSES:
                for level in ("weak", "strong"):
                    tr = run_hpaa(X, T, loss, level)
                    O = OracleTree(T)
                    labels = list(X.taxon_ids)
                    for s in tr.steps:
                        j, k = s.positions
                        a, b = labels[j], labels[k]
                        ok = O.astar(a) == O.astar(b)
                        if level == "strong":
                            dmax = max(O.depth(x) for x in labels)
                            strict, _ = oracle_active(labels, O, "strong")
                            if s.relaxed:
                                # allowed only when no weak pair sits entirely at max depth
                                deepest = max(min(O.depth(labels[u]), O.depth(labels[v]))
                                              for u, v in oracle_active(labels, O, "weak")[0])
                                ok = ok and all(min(O.depth(labels[u]), O.depth(labels[v])) < dmax
                                                for u, v in strict)
                                ok = ok and min(O.depth(a), O.depth(b)) == deepest
                                relaxed += 1
                            else:
                                ok = ok and O.depth(a) == O.depth(b) == dmax
                        violations += not ok
                        checked += 1
                        O = O.merged(a, b, f"m{s.t}")
                        labels[j] = f"m{s.t}"
                        del labels[k]
        c["info"] = f"({checked} steps, {relaxed} relaxed, {violations} violations)"
        assert violations == 0


def test_criterion_4_worked_semantics(worked_tree):
    with criterion(4, "worked taxonomy relations hold exactly"):
        T = worked_tree
        assert T.depth("Taxon1") == 1
        assert T.depth("Taxon2") == 5
        t12, t13 = T.node_of("Taxon12"), T.node_of("Taxon13")
        assert T.lowest_multichild_ancestor("Taxon12") == T.nodes[t12].parent
        assert T.lowest_multichild_ancestor("Taxon13") == T.nodes[T.nodes[t13].parent].parent
        labels = T.leaves
        idx = {s: i for i, s in enumerate(labels)}

        def pair(a, b):
            return tuple(sorted((idx[a], idx[b])))

        weak = active_pairs(labels, T, "weak")
        strong = active_pairs(labels, T, "strong")
        assert pair("Taxon2", "Taxon3") in weak and pair("Taxon2", "Taxon3") in strong
        assert pair("Taxon12", "Taxon13") in weak and pair("Taxon12", "Taxon13") not in strong
        assert pair("Taxon26", "Taxon27") not in weak


def test_criterion_5_nmds_correctness():
    with criterion(5, "PAV exact on short grids, stress monotone, realizable fit") as c:
        grid = np.round(np.arange(6) * 0.1, 1)
        n_seq = 0
        for n in range(1, 6):
            for y in np.array(np.meshgrid(*[grid] * n, indexing="ij")).reshape(n, -1).T:
                f, _ = partition_projection(y)
                np.testing.assert_allclose(isotonic_regression_pav(y), f, rtol=0, atol=1e-12)
                n_seq += 1
        rng = np.random.default_rng(10)
        iters = 0
        for _ in range(10):
            V = rng.dirichlet(np.full(10, 0.5), size=int(rng.integers(8, 30)))
            emb = nmds(squareform(pdist(V, "braycurtis")))
            h = np.array(emb.stress_history)
            assert np.all(np.diff(h) <= 0)
            iters += emb.iterations
        worst = 0.0
        for _ in range(10):
            P = rng.normal(size=(int(rng.integers(4, 25)), 2))
            worst = max(worst, nmds(squareform(pdist(P))).stress)
        assert worst < 1e-6
        c["info"] = f"({n_seq} grid sequences, {iters} NMDS iterations, worst realizable stress {worst:.1e})"


def test_criterion_6_distance_preservation():
    # Fixed design: 60 taxa with sparse Dirichlet(0.1) probabilities, a
    # random three-rank taxonomy, weak hierarchy, k = 20.
    with criterion(6, "HPAA-BC median RMSE < 1 and <= HPAA-SDI, HPAA-SWI") as c:
        taxa = [f"T{j + 1}" for j in range(60)]
        tree = random_lineage_tree(taxa, seed=0)
        probs = np.random.default_rng(0).dirichlet(np.full(60, 0.1))
        methods = {"Simple": prevalence_reducer()}
        for loss in ("bc", "sdi", "swi"):
            methods[f"HPAA-{loss.upper()}"] = hpaa_reducer(loss, "weak", tree)
        t0 = time.perf_counter()
        rows = distance_preservation_report(None, methods, k=20, replicates=100, seed=0, n=100, total_count=10_000,
                                            threads=os.cpu_count() or 1, probs=probs, taxon_ids=taxa)
        elapsed = time.perf_counter() - t0
        med = {m: float(np.median([r["rmse"] for r in rows if r["method"] == m])) for m in methods}
        c["info"] = "(" + ", ".join(f"{m} {v:.3f}" for m, v in sorted(med.items())) + f"; {elapsed:.0f} s)"
        assert med["HPAA-BC"] < 1.0
        assert med["HPAA-BC"] <= med["HPAA-SDI"]
        assert med["HPAA-BC"] <= med["HPAA-SWI"]
        assert elapsed < 600


def test_criterion_7_runtime_scaling():
    with criterion(7, "SDI path n=100, p=400 under 60 s; medians non-decreasing in p") as c:
        rows = runtime_scaling_report([(100, p) for p in (25, 50, 100, 200, 400)], "sdi", "none", replicates=5, seed=0)
        med = [r["median_seconds"] for r in rows]
        worst_400 = rows[-1]["mean_seconds"] + 3 * rows[-1]["sd_seconds"]
        c["info"] = "(medians " + ", ".join(f"{m:.3f}" for m in med) + " s)"
        assert worst_400 < 60
        assert all(b >= a for a, b in zip(med, med[1:]))


def cli_artifacts(tmp, data, tree, threads):
    out = tmp / f"run_{threads}_{len(list(tmp.iterdir()))}"
    base = ["--input", str(data), "--seed", "3", "--threads", str(threads)]
    calls = [
        ["fit", "--tree", str(tree), "--loss", "wuf", "--level", "weak", "--k", "4", "--out", str(out / "fit")],
        ["fit", "--loss", "bc", "--k", "5", "--log-scale", "--out", str(out / "fit_bc")],
        ["scree", "--tree", str(tree), "--levels", "all", "--out", str(out / "scree")],
        ["ordinate", "--k", "4", "--loss", "bc", "--restarts", "2", "--out", str(out / "ord")],
        ["bench", "--study", "distance", "--tree", str(tree), "--level", "weak", "--k", "4",
         "--replicates", "6", "--n", "10", "--out", str(out / "bench")],
    ]
    for args in calls:
        assert main([*args, *base]) == 0
    return {p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}


def test_criterion_8_determinism(tmp_path):
    with criterion(8, "CLI artifacts byte-identical across runs and thread counts") as c:
        rng = np.random.default_rng(11)
        X = random_composition(rng, 12, 15)
        data = tmp_path / "data.tsv"
        data.write_text("sample\t" + "\t".join(X.taxon_ids) + "\n" + "".join(
            f"{s}\t" + "\t".join(repr(float(v)) for v in row) + "\n" for s, row in zip(X.sample_ids, X.values)))
        tree = tmp_path / "tree.tsv"
        tree.write_text(random_lineage_tree(X.taxon_ids, seed=2).to_newick())
        work = tmp_path / "work"
        work.mkdir()
        a = cli_artifacts(work, data, tree, 1)
        b = cli_artifacts(work, data, tree, 1)
        top = max(os.cpu_count() or 1, 2)
        d = cli_artifacts(work, data, tree, top)
        c["info"] = f"({len(a)} files, threads 1 vs {top})"
        assert len(a) >= 12
        assert a == b
        assert a == d


def test_criterion_9_terminal_state():
    with criterion(9, "p-1 steps, cut(1) is all ones, cuts nested across k") as c:
        rng = np.random.default_rng(12)
        n_traces = 0
        for _ in range(60):
            X, T = random_instance(rng, (2, 6), (2, 12))
            for loss, level in valid_runs():
                tr = run_hpaa(X, T, loss, level)
                assert len(tr.steps) == X.p - 1
                _, scores, _ = cut(tr, 1)
                np.testing.assert_allclose(scores.values, 1.0, rtol=0, atol=1e-10)
                groupings = [cut(tr, k)[0] for k in range(X.p, 0, -1)]
                assert all(coarse.coarsens(fine) for fine, coarse in zip(groupings, groupings[1:]))
                n_traces += 1
        c["info"] = f"({n_traces} traces)"

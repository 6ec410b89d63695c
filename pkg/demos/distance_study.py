"""
Prevalence filtering versus greedy amalgamation
===============================================

A scaled-down distance-preservation study: repeated multinomial draws,
each reduced to ``k`` columns by every method, scored by the mean squared
change in pairwise Bray-Curtis dissimilarity relative to the prevalence
filter. Values below one beat the filter.
"""

import numpy as np

from paa.simbench import distance_preservation_report, hpaa_reducer, prevalence_reducer, random_lineage_tree

taxa = [f"T{j + 1}" for j in range(40)]
tree = random_lineage_tree(taxa, seed=0)
probs = np.random.default_rng(0).dirichlet(np.full(40, 0.1))

methods = {"Simple": prevalence_reducer()}
for loss in ("sdi", "swi", "bc"):
    methods[f"HPAA-{loss.upper()}"] = hpaa_reducer(loss, "weak", tree)
methods["HPAA-BC (free)"] = hpaa_reducer("bc", "none")

rows = distance_preservation_report(None, methods, k=12, replicates=20, seed=0, n=50, probs=probs, taxon_ids=taxa)
for m in sorted(methods):
    r = np.array([row["rmse"] for row in rows if row["method"] == m])
    print(f"{m:>15}  median {np.median(r):.3f}  IQR {np.percentile(r, 25):.3f}-{np.percentile(r, 75):.3f}")

"""Taxonomy-guided principal amalgamation analysis for compositional data."""

from .compdata import CompositionMatrix, Grouping, amalgamate, lift, load_composition_table
from .diversity import DistanceMatrix, LossKind, LossSpec, bray_curtis, sdi, swi, weighted_unifrac
from .hpaa import ConstraintLevel, MergeTrace, active_pairs, cut, merge_cost, run_hpaa, scree
from .taxonomy import TaxonomyTree, parse_lineage_table, parse_newick

__version__ = "0.1.0"

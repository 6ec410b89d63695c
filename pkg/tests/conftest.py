import numpy as np
import pytest

from paa import parse_lineage_table

# Minimal taxonomy reproducing the relations of the worked example: a taxon
# hanging directly off the root, two deep siblings, a leaf next to a
# single-child chain, and two families in different classes.
WORKED_LINEAGE = """taxon\tphylum\tclass\torder\tfamily
Taxon1\t\t\t\t
Taxon2\tP1\tC1\tO1\tF1
Taxon3\tP1\tC1\tO1\tF1
Taxon12\tP1\tC2\t\t
Taxon13\tP1\tC2\tO3\t
Taxon26\tP2\tC3\t\t
Taxon28\tP2\tC3\t\t
Taxon27\tP2\tC4\t\t
Taxon29\tP2\tC4\t\t
"""


@pytest.fixture
def worked_tree():
    return parse_lineage_table(WORKED_LINEAGE)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from paa import CompositionMatrix, Grouping, amalgamate, lift, load_composition_table
from paa.compdata import CompositionError, amalgamate_rows, format_composition_table


def test_load_normalizes_counts():
    X = load_composition_table("id\ta\tb\ns1\t1\t1\ns2\t3\t1\n")
    np.testing.assert_array_equal(X.values, [[0.5, 0.5], [0.75, 0.25]])
    np.testing.assert_array_equal(X.library_sizes, [2.0, 4.0])
    assert X.sample_ids == ("s1", "s2")
    assert X.taxon_ids == ("a", "b")


def test_load_already_stochastic_unchanged():
    X = load_composition_table("id,a,b\ns1,0.2,0.8\n")
    np.testing.assert_array_equal(X.values, [[0.2, 0.8]])


@pytest.mark.parametrize(
    "text, msg",
    [
        ("id,a,b,c\ns1,0,0,0\n", "zero row sum at sample s1"),
        ("id,a,b\ns1,1,-1\n", "negative entry"),
        ("id,a,b\ns1,1\n", "ragged row"),
        ("id,a,b\ns1,1,2\ns1,2,1\n", "duplicate sample"),
        ("id,a,a\ns1,1,2\n", "duplicate taxon"),
        ("id,a,b\ns1,x,2\n", "non-numeric"),
    ],
)
def test_load_errors(text, msg):
    with pytest.raises(CompositionError, match=msg):
        load_composition_table(text)


def test_round_trip_format():
    X = load_composition_table("sample_id\ta\tb\tc\ns1\t1\t2\t7\ns2\t5\t0\t5\n")
    Y = load_composition_table(format_composition_table(X))
    np.testing.assert_array_equal(X.values, Y.values)
    assert X.taxon_ids == Y.taxon_ids


def test_matrix_validation():
    with pytest.raises(CompositionError, match="sums to"):
        CompositionMatrix([[0.5, 0.6]])
    with pytest.raises(CompositionError, match="negative"):
        CompositionMatrix([[1.5, -0.5]])
    with pytest.raises(CompositionError, match="non-finite"):
        CompositionMatrix([[np.nan, 1.0]])
    X = CompositionMatrix([[0.5, 0.5 + 5e-9]])
    assert X.values.sum() == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(ValueError):
        X.values[0, 0] = 1.0


def test_amalgamate_five_part_example():
    x = np.array([[0.1, 0.15, 0.3, 0.25, 0.2]])
    g = Grouping(((0, 1), (2,), (3, 4)))
    out = amalgamate(CompositionMatrix(x), g).values
    np.testing.assert_allclose(out, [[0.25, 0.3, 0.45]], atol=1e-15)


def test_amalgamate_small():
    out = amalgamate(CompositionMatrix([[0.2, 0.3, 0.5]]), Grouping(((0, 1), (2,))))
    np.testing.assert_allclose(out.values, [[0.5, 0.5]])
    assert out.taxon_ids == ("g0", "g1")


def test_identity_grouping_is_exact():
    rng = np.random.default_rng(0)
    X = CompositionMatrix(rng.dirichlet(np.ones(6), size=4))
    assert amalgamate(X, Grouping.identity(6)) is X


def test_grouping_validation():
    with pytest.raises(CompositionError, match="empty"):
        Grouping(((0, 1), ()))
    with pytest.raises(CompositionError, match="exactly once"):
        Grouping(((0, 1), (1, 2)))
    with pytest.raises(CompositionError, match="exactly once"):
        Grouping(((0,), (2,)))
    X = CompositionMatrix([[0.2, 0.3, 0.5]])
    with pytest.raises(CompositionError, match="covers"):
        amalgamate(X, Grouping(((0, 1),)))


def test_grouping_helpers():
    g = Grouping.from_labels(["a", "b", "a", "c"])
    assert g.groups == ((0, 2), (1,), (3,))
    assert g.group_labels == ("a", "b", "c")
    np.testing.assert_array_equal(g.matrix(), [[1, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]])
    coarse = Grouping(((0, 1, 2), (3,)))
    assert coarse.coarsens(g)
    assert not g.coarsens(coarse)


@pytest.mark.parametrize(
    "y, groups, expected",
    [
        ([0.6, 0.4], ((0, 1), (2,)), [0.3, 0.3, 0.4]),
        ([0.1, 0.2, 0.7], ((0,), (1,), (2,)), [0.1, 0.2, 0.7]),
        ([1.0], ((0, 1, 2, 3),), [0.25, 0.25, 0.25, 0.25]),
    ],
)
def test_lift_examples(y, groups, expected):
    np.testing.assert_allclose(lift(y, Grouping(groups)), expected, atol=1e-15)


def random_grouping(draw, p):
    labels = draw(st.lists(st.integers(0, p - 1), min_size=p, max_size=p))
    return Grouping.from_labels(labels)


@st.composite
def composition_and_groupings(draw):
    n = draw(st.integers(1, 5))
    p = draw(st.integers(1, 8))
    seed = draw(st.integers(0, 2**32 - 1))
    V = np.random.default_rng(seed).dirichlet(np.ones(p), size=n)
    g = random_grouping(draw, p)
    return V, g, random_grouping(draw, g.k)


@settings(max_examples=100, deadline=None)
@given(composition_and_groupings())
def test_amalgamation_properties(case):
    V, g, h = case
    Y = amalgamate_rows(V, g)
    np.testing.assert_allclose(Y.sum(axis=1), V.sum(axis=1), atol=1e-12)
    np.testing.assert_allclose(amalgamate_rows(lift(Y, g), g), Y, atol=1e-15)
    # amalgamating by g then h equals one step by the composed grouping
    composed = Grouping(tuple(tuple(j for i in hb for j in g.groups[i]) for hb in h.groups))
    np.testing.assert_allclose(amalgamate_rows(Y, h), amalgamate_rows(V, composed), atol=1e-12)


def test_to_frame():
    pd = pytest.importorskip("pandas")
    X = CompositionMatrix([[0.25, 0.75]], ["s1"], ["a", "b"])
    df = X.to_frame()
    assert isinstance(df, pd.DataFrame)
    assert list(df.columns) == ["a", "b"] and df.loc["s1", "b"] == 0.75

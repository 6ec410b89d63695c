import itertools

import numpy as np
import pytest
from scipy.spatial.distance import pdist, squareform

from oracles import block_means, brute_monotone_projection, partition_projection
from paa import CompositionMatrix, Grouping, LossSpec
from paa.diversity import DistanceMatrix
from paa.ordination import classical_mds_init, isotonic_regression_pav, nmds, ordination_compare


def euclid(P):
    return squareform(pdist(P))


def test_cmds_equilateral():
    D = np.ones((3, 3)) - np.eye(3)
    Y = classical_mds_init(D, 2)
    np.testing.assert_allclose(pdist(Y), 1.0, atol=1e-9)


def test_cmds_recovers_planar_points(rng):
    P = rng.normal(size=(12, 2))
    Y = classical_mds_init(euclid(P), 2)
    np.testing.assert_allclose(pdist(Y), pdist(P), atol=1e-9)
    np.testing.assert_allclose(Y.mean(axis=0), 0, atol=1e-12)


def test_cmds_duplicates_coincide(rng):
    P = rng.normal(size=(5, 2))
    P[4] = P[1]
    Y = classical_mds_init(euclid(P), 2)
    np.testing.assert_allclose(Y[4], Y[1], atol=1e-9)


def test_cmds_errors():
    with pytest.raises(ValueError, match="3 points"):
        classical_mds_init(np.zeros((2, 2)))
    with pytest.raises(ValueError, match="d="):
        classical_mds_init(np.ones((3, 3)) - np.eye(3), 3)


@pytest.mark.parametrize(
    "y, w, expected",
    [((1, 2, 3), None, (1, 2, 3)), ((3, 1, 2), None, (2, 2, 2)), ((5, 1), (1, 3), (2, 2))],
)
def test_pav_examples(y, w, expected):
    np.testing.assert_allclose(isotonic_regression_pav(y, w), expected, atol=1e-15)


def test_pav_matches_grid_search():
    y = np.array([3.0, 1.0, 2.0])
    f, _ = brute_monotone_projection(y, block_means(y))
    np.testing.assert_allclose(isotonic_regression_pav(y), f, atol=1e-15)


def test_pav_all_short_sequences_on_grid():
    grid = np.round(np.arange(6) * 0.1, 1)
    for n in range(1, 6):
        for y in itertools.product(grid, repeat=n):
            f, _ = partition_projection(y)
            np.testing.assert_allclose(isotonic_regression_pav(y), f, atol=1e-12)


def test_pav_weighted_random(rng):
    for _ in range(200):
        n = int(rng.integers(1, 7))
        y, w = rng.normal(size=n), rng.uniform(0.1, 3, size=n)
        fit = isotonic_regression_pav(y, w)
        f, _ = partition_projection(y, w)
        np.testing.assert_allclose(fit, f, atol=1e-12)
        assert np.all(np.diff(fit) >= 0)
        assert fit @ w == pytest.approx(y @ w)


def test_pav_errors():
    with pytest.raises(ValueError, match="positive"):
        isotonic_regression_pav([1, 2], [1, 0])
    with pytest.raises(ValueError, match="equal lengths"):
        isotonic_regression_pav([1, 2], [1])


def test_nmds_realizable(rng):
    P = rng.normal(size=(15, 2))
    emb = nmds(euclid(P))
    assert emb.stress < 1e-6
    np.testing.assert_allclose(emb.coords.mean(axis=0), 0, atol=1e-9)


def test_nmds_collinear():
    P = np.array([[0.0, 0], [1, 0], [3, 0], [7, 0]])
    assert nmds(euclid(P), 2).stress < 1e-6


@pytest.mark.parametrize("seed", range(5))
def test_nmds_stress_history_non_increasing(seed):
    V = np.random.default_rng(seed).dirichlet(np.full(8, 0.5), size=20)
    emb = nmds(squareform(pdist(V, "braycurtis")))
    h = np.array(emb.stress_history)
    assert np.all(np.diff(h) <= 0)
    assert emb.stress == h[-1]
    assert 0 <= emb.stress <= 1
    assert emb.iterations <= 500


def test_nmds_is_deterministic(rng):
    D = squareform(pdist(rng.dirichlet(np.ones(5), size=12), "braycurtis"))
    a, b = nmds(D), nmds(D)
    assert a.coords.tobytes() == b.coords.tobytes()
    assert a.stress == b.stress


def test_nmds_restarts_never_worse(rng):
    D = squareform(pdist(rng.dirichlet(np.ones(5), size=12), "braycurtis"))
    assert nmds(D, restarts=3, seed=1).stress <= nmds(D).stress


def test_nmds_errors():
    with pytest.raises(ValueError, match="zero"):
        nmds(np.zeros((4, 4)))
    D = np.ones((4, 4)) - np.eye(4)
    D[0, 1] = D[1, 0] = np.inf
    with pytest.raises(ValueError, match="non-finite"):
        nmds(D)


def test_nmds_keeps_ids():
    D = DistanceMatrix(np.ones((4, 4)) - np.eye(4), ("a", "b", "c", "d"))
    assert nmds(D).point_ids == ("a", "b", "c", "d")


def test_compare_identity_grouping(rng):
    X = CompositionMatrix(rng.dirichlet(np.ones(6), size=8))
    res = ordination_compare(X, Grouping.identity(6))
    assert res.embedding.coords.shape == (16, 2)
    assert res.pairing[3] == (3, 11)
    np.testing.assert_array_equal(res.radii, 0.0)
    assert res.mean == 0.0 and res.sd == 0.0


def test_compare_zero_columns_merged(rng):
    V = np.hstack([rng.dirichlet(np.ones(4), size=6), np.zeros((6, 2))])
    res = ordination_compare(CompositionMatrix(V), Grouping(((0,), (1,), (2,), (3,), (4, 5))))
    np.testing.assert_array_equal(res.radii, 0.0)


def test_compare_summary_consistent(rng):
    X = CompositionMatrix(rng.dirichlet(np.ones(6), size=10))
    res = ordination_compare(X, Grouping(((0, 1, 2), (3, 4), (5,))), LossSpec("bc"))
    Y = res.embedding.coords
    d = np.linalg.norm(Y[:10] - Y[10:], axis=1)
    np.testing.assert_allclose(res.distances, d)
    assert res.mean == pytest.approx(d.mean())
    assert res.sd == pytest.approx(d.std(ddof=1))
    assert res.mean > 0
    assert res.embedding.point_ids[10] == f"{X.sample_ids[0]}:principal"


def test_compare_rejects_other_metrics(rng):
    X = CompositionMatrix(rng.dirichlet(np.ones(3), size=4))
    with pytest.raises(ValueError, match="Bray-Curtis"):
        ordination_compare(X, Grouping.identity(3), LossSpec("sdi"))


def test_compare_warns_on_collapse(caplog):
    # near-identical samples, each moved far by the lift: both blocks
    # shrink to a point and stress-1 reaches zero
    from paa.simbench import SimConfig, gen_multinomial_matrix

    probs = np.random.default_rng(1).dirichlet(np.full(12, 0.2))
    X = gen_multinomial_matrix(SimConfig("multinomial", n=12, total_count=2000, probs=tuple(probs), seed=5))
    res = ordination_compare(X, Grouping((tuple(range(6)), tuple(range(6, 12)))))
    assert res.embedding.stress < 1e-3
    assert "well-separated" in caplog.text


def test_no_collapse_warning_on_spread_data(caplog, rng):
    nmds(euclid(rng.normal(size=(10, 2))))
    assert "well-separated" not in caplog.text

"""Histogram trees, ANLL scoring, best-of-k selection, and forests."""

import numpy as np
import pytest

from bsclust.data import AffineTransform
from bsclust.density import (
    ANLL_FLOOR,
    DensityForest,
    ForestDensity,
    ForestParams,
    anll,
    best_scored_tree,
    eval_forest,
    eval_tree,
    eval_tree_many,
    fit_forest,
    fit_tree,
    substream,
)
from bsclust.partition import Box, InvalidInputError, build_partition, init_partition

RNG = np.random.default_rng


def unit_box(d):
    return Box(np.full(d, -1.0), np.full(d, 1.0))


def identity_transform(d):
    return AffineTransform(np.ones(d), np.zeros(d))


def mc_integral(forest, n_samples=10 ** 6, seed=0):
    # Monte Carlo quadrature over the root box, in root coordinates
    rng = RNG(seed)
    d = forest.root.d
    u = rng.uniform(forest.root.lower, forest.root.upper, size=(n_samples, d))
    vals = eval_forest(forest, forest.scale_transform.inverse(u))
    return vals.mean() * forest.root.volume


# ---------------------------------------------------------------------------
# fit_tree / eval_tree


def test_uniform_tree_density():
    part = init_partition(unit_box(2))
    data = RNG(0).uniform(-1, 1, size=(50, 2))
    tree = fit_tree(part, data)
    assert tree.cell_density[0] == pytest.approx(0.25)
    assert eval_tree(tree, [0.0, 0.0]) == pytest.approx(0.25)


def test_half_split_counts_by_hand():
    part = init_partition(Box(np.array([-1.0]), np.array([1.0])))
    part.apply_split(0, 0, 0.5)  # cut at 0
    data = np.concatenate([np.full(30, -0.5), np.full(70, 0.5)])[:, None]
    tree = fit_tree(part, data)
    assert tree.cell_density.tolist() == pytest.approx([0.3, 0.7])
    assert tree.cell_mass.sum() == pytest.approx(1.0)


def test_all_points_outside():
    part = init_partition(unit_box(2))
    tree = fit_tree(part, np.full((20, 2), 9.0))
    assert np.all(tree.cell_density == 0.0)
    assert tree.outside_mass == pytest.approx(1.0)


def test_empty_data_rejected():
    with pytest.raises(InvalidInputError):
        fit_tree(init_partition(unit_box(2)), np.zeros((0, 2)))


def test_eval_outside_root_is_zero():
    tree = fit_tree(init_partition(unit_box(2)), RNG(1).uniform(-1, 1, (10, 2)))
    assert eval_tree(tree, [5.0, 5.0]) == 0.0


def test_tree_mass_normalization():
    rng = RNG(2)
    for _ in range(20):
        part = build_partition(unit_box(2), int(rng.integers(0, 200)), "pure", rng=rng)
        data = rng.uniform(-1.5, 1.5, size=(int(rng.integers(5, 300)), 2))
        tree = fit_tree(part, data)
        assert abs(tree.cell_mass.sum() + tree.outside_mass - 1.0) < 1e-12
        assert np.all(tree.cell_mass >= 0)
        assert np.allclose(tree.cell_density, tree.cell_mass / part.cell_volumes())


def test_piecewise_constant_on_cells():
    rng = RNG(3)
    part = build_partition(unit_box(2), 50, "pure", rng=rng)
    tree = fit_tree(part, rng.uniform(-1, 1, (200, 2)))
    for cell in part.cells:
        a = cell.lower + 0.25 * (cell.upper - cell.lower)
        b = cell.lower + 0.75 * (cell.upper - cell.lower)
        assert eval_tree(tree, a) == eval_tree(tree, b)


def test_duplicating_data_preserves_density():
    rng = RNG(4)
    part = build_partition(unit_box(2), 30, "pure", rng=rng)
    data = rng.uniform(-1, 1, (80, 2))
    single = fit_tree(part, data)
    doubled = fit_tree(part, np.concatenate([data, data]))
    assert np.allclose(single.cell_density, doubled.cell_density)


def test_tree_mc_integral():
    rng = RNG(5)
    part = build_partition(unit_box(2), 100, "pure", rng=rng)
    tree = fit_tree(part, rng.uniform(-1, 1, (500, 2)))
    u = rng.uniform(-1, 1, size=(10 ** 6, 2))
    integral = eval_tree_many(tree, u).mean() * 4.0
    assert 0.99 <= integral <= 1.01


# ---------------------------------------------------------------------------
# anll


def test_anll_constant_density():
    pts = RNG(6).uniform(-1, 1, (40, 2))
    val = anll(lambda X: np.full(len(X), 0.25), pts)
    assert val == pytest.approx(-np.log(0.25))


def test_anll_floor():
    val = anll(lambda X: np.zeros(len(X)), np.zeros((1, 2)))
    assert val == pytest.approx(-np.log(ANLL_FLOOR))


def test_anll_empty_rejected():
    with pytest.raises(InvalidInputError):
        anll(lambda X: np.ones(len(X)), np.zeros((0, 2)))


def test_finer_tree_scores_better_on_bimodal_sample():
    rng = RNG(7)
    data = np.concatenate([rng.normal(-0.6, 0.05, (300, 2)),
                           rng.normal(0.6, 0.05, (300, 2))])
    train, val = data[:400], data[400:]
    coarse = fit_tree(init_partition(unit_box(2)), train)
    fine = fit_tree(build_partition(unit_box(2), 200, "adaptive", data=train,
                                    rng=RNG(8)), train)
    assert anll(lambda X: eval_tree_many(fine, X), val) \
        < anll(lambda X: eval_tree_many(coarse, X), val)


# ---------------------------------------------------------------------------
# best_scored_tree


def test_k1_equals_single_partition_fit():
    rng = RNG(9)
    data = rng.uniform(-1, 1, (120, 2))
    tree = best_scored_tree(data, k=1, p=40, mode="pure", rng=0, tree_index=3)
    expected_part = build_partition(unit_box(2), 40, "pure", rng=substream(0, 3, 0))
    expected = fit_tree(expected_part, data)
    assert np.allclose(tree.cell_density, expected.cell_density)


def test_winner_minimizes_holdout_anll():
    data = RNG(10).uniform(-1, 1, (200, 2))
    k, p, seed, t = 5, 60, 0, 0
    tree = best_scored_tree(data, k=k, p=p, mode="pure", rng=seed, tree_index=t)

    # replay the candidate draw by hand
    holdout_rng = substream(seed, t, k)
    n_val = int(np.floor(200 * 0.3))
    perm = holdout_rng.permutation(200)
    train, val = data[perm[n_val:]], data[perm[:n_val]]
    scores = []
    parts = []
    for c in range(k):
        part = build_partition(unit_box(2), p, "pure", data=train, rng=substream(seed, t, c))
        cand = fit_tree(part, train)
        scores.append(anll(lambda X: eval_tree_many(cand, X), val))
        parts.append(part)
    winner = fit_tree(parts[int(np.argmin(scores))], data)
    assert np.allclose(tree.cell_density, winner.cell_density)


def test_more_candidates_never_hurt_on_average():
    rng = RNG(11)
    test_pts = rng.normal(0.0, 0.1, (500, 2))
    scores = {1: [], 20: []}
    for seed in range(20):
        data = RNG(100 + seed).normal(0.0, 0.1, (300, 2))
        for k in scores:
            tree = best_scored_tree(data, k=k, p=100, mode="pure", rng=seed)
            scores[k].append(anll(lambda X: eval_tree_many(tree, X), test_pts))
    assert np.mean(scores[20]) <= np.mean(scores[1])


# ---------------------------------------------------------------------------
# forests


def test_forest_m1_equals_tree():
    data = RNG(12).uniform(-3, 3, (100, 2))
    forest = fit_forest(data, ForestParams(m=1, k=1, p=30, mode="pure", seed=0))
    pts = RNG(13).uniform(-3, 3, (50, 2))
    scaled = forest.scale_transform(pts)
    assert np.allclose(eval_forest(forest, pts), eval_tree_many(forest.trees[0], scaled))


def test_forest_deterministic():
    data = RNG(14).uniform(-1, 1, (150, 2))
    pts = RNG(15).uniform(-1, 1, (100, 2))
    a = fit_forest(data, ForestParams(m=20, k=2, p=50, seed=5))
    b = fit_forest(data, ForestParams(m=20, k=2, p=50, seed=5))
    assert np.array_equal(eval_forest(a, pts), eval_forest(b, pts))


def test_forest_is_mean_of_trees():
    data = RNG(16).uniform(-1, 1, (150, 2))
    forest = fit_forest(data, ForestParams(m=7, k=1, p=40, seed=1))
    pts = RNG(17).uniform(-2, 2, (100, 2))
    scaled = forest.scale_transform(pts)
    manual = np.mean([eval_tree_many(t, scaled) for t in forest.trees], axis=0)
    assert np.allclose(eval_forest(forest, pts), manual)


def test_uniform_forest_value():
    # p=0 trees are uniform on the root regardless of m
    trees = [fit_tree(init_partition(unit_box(2)), RNG(18).uniform(-1, 1, (30, 2)))
             for _ in range(3)]
    forest = DensityForest(trees, unit_box(2), identity_transform(2), n_fit=30)
    assert eval_forest(forest, np.array([0.3, -0.2])) == pytest.approx(0.25)
    assert eval_forest(forest, np.array([5.0, 0.0])) == 0.0


def test_forest_nonnegative_and_normalized():
    data = RNG(19).normal(size=(400, 2))
    forest = fit_forest(data, ForestParams(m=10, k=1, p=100, seed=3))
    pts = RNG(20).normal(size=(1000, 2)) * 3
    assert np.all(eval_forest(forest, pts) >= 0)
    assert 0.99 <= mc_integral(forest, 200000) <= 1.01


def test_degenerate_params_uniform():
    data = RNG(21).uniform(-1, 1, (60, 2))
    forest = fit_forest(data, ForestParams(m=1, k=1, p=0, seed=0))
    inside = forest.scale_transform.inverse(np.zeros((1, 2)))
    assert eval_forest(forest, inside)[0] == pytest.approx(0.25)


def test_forest_params_validation():
    for bad in (dict(m=0), dict(k=0), dict(p=-1), dict(holdout_fraction=1.0),
                dict(mode="fancy")):
        with pytest.raises(InvalidInputError):
            ForestParams(**bad)


def test_forest_json_round_trip():
    data = RNG(22).normal(size=(120, 2))
    forest = fit_forest(data, ForestParams(m=4, k=1, p=60, seed=9))
    back = DensityForest.from_json(forest.to_json())
    pts = RNG(23).normal(size=(200, 2))
    assert np.array_equal(eval_forest(forest, pts), eval_forest(back, pts))
    assert back.n_fit == forest.n_fit


def test_density_applies_jacobian():
    data = RNG(24).normal(scale=10.0, size=(200, 2))
    forest = fit_forest(data, ForestParams(m=5, k=1, p=50, seed=2))
    pts = data[:20]
    expected = eval_forest(forest, pts) * forest.scale_transform.jacobian
    assert np.allclose(forest.density(pts), expected)


def test_estimator_api():
    data = RNG(25).normal(size=(150, 2))
    est = ForestDensity(m=5, p=40, seed=1).fit(data)
    assert est.get_params()["m"] == 5
    vals = est.density(data)
    assert vals.shape == (150,)
    assert np.isfinite(est.score(data))

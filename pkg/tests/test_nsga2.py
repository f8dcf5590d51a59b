import numpy as np

from amslab.nsga2 import (
    GAConfig,
    constrained_dominates,
    crowding_distance,
    fast_nondominated_sort,
    nsga2_step,
    polynomial_mutation,
    sbx_pair,
    select_survivors,
)


def oracle_fronts(objectives, violations):
    """Independent front peeling: repeatedly remove the non-dominated set,
    using only direct pairwise constrained-domination checks."""
    remaining = list(range(len(objectives)))
    fronts = []
    while remaining:
        front = []
        for i in remaining:
            dominated = any(
                constrained_dominates(objectives[j], violations[j], objectives[i], violations[i])
                for j in remaining
                if j != i
            )
            if not dominated:
                front.append(i)
        fronts.append(sorted(front))
        remaining = [i for i in remaining if i not in front]
    return fronts


def test_three_point_fronts_example():
    objs = np.array([[1.0, 2.0], [2.0, 1.0], [3.0, 3.0]])
    viols = np.zeros(3)
    assert fast_nondominated_sort(objs, viols) == [[0, 1], [2]]


def test_boundary_points_get_infinite_crowding():
    objs = np.array([[0.0, 3.0], [1.0, 2.0], [2.0, 1.0], [3.0, 0.0]])
    crowd = crowding_distance(objs)
    assert np.isinf(crowd[0]) and np.isinf(crowd[3])
    assert np.isfinite(crowd[1]) and np.isfinite(crowd[2])


def test_feasible_dominates_infeasible_with_better_objectives():
    assert constrained_dominates([10.0, 10.0], 0.0, [0.0, 0.0], 5.0)
    assert not constrained_dominates([0.0, 0.0], 5.0, [10.0, 10.0], 0.0)
    # infeasibles compare by total violation
    assert constrained_dominates([9.0], 1.0, [0.0], 2.0)


def test_constructed_feasible_infeasible_mix():
    objs = np.array([[5.0, 5.0], [1.0, 1.0], [2.0, 2.0], [0.5, 9.0]])
    viols = np.array([0.0, 3.0, 1.0, 0.0])
    fronts = fast_nondominated_sort(objs, viols)
    assert fronts == oracle_fronts(objs, viols)
    assert set(fronts[0]) == {0, 3}          # the two feasible points
    assert fronts[1] == [2]                  # lower violation first
    assert fronts[2] == [1]


def test_sort_matches_oracle_on_random_populations():
    rng = np.random.default_rng(1234)
    for _ in range(40):
        n = int(rng.integers(2, 65))
        m = int(rng.integers(2, 5))
        objs = np.round(rng.random((n, m)) * 10, 1)     # ties likely
        viols = np.where(rng.random(n) < 0.4, rng.random(n), 0.0)
        assert fast_nondominated_sort(objs, viols) == oracle_fronts(objs, viols)


def test_operators_respect_bounds():
    rng = np.random.default_rng(5)
    lo = np.array([0.0, -1.0, 10.0])
    hi = np.array([1.0, 1.0, 20.0])
    for _ in range(200):
        p1 = rng.uniform(lo, hi)
        p2 = rng.uniform(lo, hi)
        c1, c2 = sbx_pair(p1, p2, lo, hi, eta=15.0, rng=rng)
        m = polynomial_mutation(c1, lo, hi, eta=20.0, prob=0.5, rng=rng)
        for v in (c1, c2, m):
            assert np.all(v >= lo) and np.all(v <= hi)


def test_step_is_deterministic_per_seed():
    pop = np.random.default_rng(0).random((10, 3))
    objs = np.random.default_rng(1).random((10, 2))
    viols = np.zeros(10)
    lo, hi = np.zeros(3), np.ones(3)
    a = nsga2_step(pop, objs, viols, lo, hi, GAConfig(), np.random.default_rng(77))
    b = nsga2_step(pop, objs, viols, lo, hi, GAConfig(), np.random.default_rng(77))
    assert np.array_equal(a, b)
    assert a.shape == pop.shape


def test_select_survivors_front_then_crowding():
    objs = np.array([[0.0, 3.0], [3.0, 0.0], [1.0, 1.0], [2.0, 2.0], [5.0, 5.0]])
    viols = np.zeros(5)
    # front 1: 0,1,2 (mutually non-dominated); front 2: 3; front 3: 4
    keep = select_survivors(objs, viols, 4)
    assert set(keep[:3]) == {0, 1, 2}
    assert keep[3] == 3

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mctstsp.errors import SizeLimitError
from mctstsp.instances import TspInstance, gen_random, load_instance, tour_length
from mctstsp.oracles import (
    HeldKarpTable,
    brute_force_opt,
    held_karp,
    nearest_neighbor,
    optimality_gap,
    two_opt,
)


def test_brute_force_unit_square(unit_square):
    res = brute_force_opt(unit_square)
    assert res.length == 4.0
    assert res.tour == (0, 1, 2, 3)


def test_brute_force_three_cities():
    inst = gen_random(3, 2)
    d = inst.dist
    assert brute_force_opt(inst).length == pytest.approx(d[0, 1] + d[1, 2] + d[2, 0])


def test_brute_force_size_limit():
    with pytest.raises(SizeLimitError):
        brute_force_opt(gen_random(11, 0))


def test_brute_force_ties_are_lexicographic():
    # regular hexagon: the convex-order tour and its mirror tie; city 1 must come second
    ang = np.arange(6) * math.pi / 3
    inst = TspInstance(np.c_[np.cos(ang), np.sin(ang)], 1.0)
    assert brute_force_opt(inst).tour == (0, 1, 2, 3, 4, 5)


@pytest.mark.parametrize("seed", range(6))
def test_held_karp_matches_brute_force(seed):
    n = 4 + seed
    inst = gen_random(n, [9, seed])
    bf, hk = brute_force_opt(inst), held_karp(inst)
    assert hk.length == bf.length
    assert hk.tour == bf.tour


def test_held_karp_collinear():
    xs = np.array([0.0, 7.0, 2.0, 9.5, 4.0, 1.0])
    inst = TspInstance(np.c_[xs, np.zeros_like(xs)], 10.0)
    assert held_karp(inst).length == pytest.approx(2 * 9.5)


def test_held_karp_size_limit(data_dir):
    with pytest.raises(SizeLimitError):
        held_karp(load_instance(data_dir / "eil51.tsp"))


@pytest.mark.parametrize("seed", range(3))
def test_held_karp_beats_random_permutations(seed):
    inst = gen_random(12, [5, seed])
    opt = held_karp(inst).length
    rng = np.random.default_rng(seed)
    samples = [tour_length(inst, rng.permutation(12)) for _ in range(1000)]
    assert opt <= min(samples)


def test_held_karp_completion_table():
    inst = gen_random(7, 3)
    table = HeldKarpTable(inst, start=2)
    # path 5 -> {0, 6} -> back to 2, by enumeration
    d = inst.dist
    want = min(d[5, 0] + d[0, 6] + d[6, 2], d[5, 6] + d[6, 0] + d[0, 2])
    assert table.completion(5, {0, 6}) == pytest.approx(want, rel=1e-14)
    assert table.completion(4, set()) == d[4, 2]


def test_nearest_neighbor_examples(unit_square):
    res = nearest_neighbor(unit_square, 0)
    assert res.tour == (0, 1, 2, 3)  # ties broken by lowest index
    assert res.length >= brute_force_opt(unit_square).length
    two = gen_random(2, 1)
    assert nearest_neighbor(two, 1).length == held_karp(two).length
    with pytest.raises(ValueError):
        nearest_neighbor(unit_square, 4)


def test_nearest_neighbor_not_better_than_optimum_on_average():
    nn, opt = [], []
    for s in range(20):
        inst = gen_random(10, [3, s])
        nn.append(nearest_neighbor(inst).length)
        opt.append(held_karp(inst).length)
        assert nn[-1] >= opt[-1] * (1 - 1e-12)
    assert np.mean(nn) >= np.mean(opt)


def test_two_opt_keeps_optimum():
    inst = gen_random(9, 8)
    opt = held_karp(inst)
    assert two_opt(inst, opt.tour).length == pytest.approx(opt.length, rel=1e-12)


def test_two_opt_uncrosses(unit_square):
    crossed = [0, 2, 1, 3]
    before = tour_length(unit_square, crossed)
    after = two_opt(unit_square, crossed)
    assert before == pytest.approx(2 + 2 * math.sqrt(2))
    assert after.length == pytest.approx(4.0)


def test_two_opt_between_optimum_and_nn():
    inst = gen_random(12, 44)
    nn = nearest_neighbor(inst)
    res = two_opt(inst, nn.tour)
    opt = held_karp(inst).length
    assert opt * (1 - 1e-12) <= res.length <= nn.length


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(5, 11))
def test_two_opt_monotone_and_idempotent(seed, n):
    inst = gen_random(n, seed)
    tour = np.random.default_rng(seed).permutation(n)
    first = two_opt(inst, tour)
    assert first.length <= tour_length(inst, tour) + 1e-9
    again = two_opt(inst, first.tour)
    assert again.tour == first.tour


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 8))
def test_solver_outputs_are_consistent(seed, n):
    inst = gen_random(n, seed)
    for res in (brute_force_opt(inst), held_karp(inst), nearest_neighbor(inst), two_opt(inst, list(range(n)))):
        assert sorted(res.tour) == list(range(n))
        assert res.length == pytest.approx(tour_length(inst, res.tour), rel=1e-9)
        assert optimality_gap(res.length, held_karp(inst).length) >= 1.0 - 1e-12


def test_optimality_gap_examples():
    assert optimality_gap(5.0, 5.0) == 1.0
    assert optimality_gap(5.0 * (1 - 1e-15), 5.0) == 1.0
    assert optimality_gap(442, 426) == pytest.approx(1.0376, abs=5e-5)
    assert optimality_gap(108576, 108159) == pytest.approx(1.00386, abs=5e-6)
    with pytest.raises(ValueError):
        optimality_gap(1.0, 0.0)
    with pytest.raises(ValueError):
        optimality_gap(0.5, 1.0)


@pytest.mark.slow
@pytest.mark.parametrize("name, optimum", [("eil51", 426), ("berlin52", 7542)])
def test_tsplib_optimum_by_milp(data_dir, name, optimum):
    """Independent check of the stored optima: exact MILP with subtour cuts."""
    import itertools

    from scipy.optimize import Bounds, LinearConstraint, milp
    from scipy.sparse import lil_matrix

    inst = load_instance(data_dir / f"{name}.tsp")
    n = inst.n
    edges = list(itertools.combinations(range(n), 2))
    cost = np.array([inst.dist[i, j] for i, j in edges])
    degree = lil_matrix((n, len(edges)))
    for k, (i, j) in enumerate(edges):
        degree[i, k] = degree[j, k] = 1
    constraints = [LinearConstraint(degree.tocsr(), 2, 2)]
    while True:
        res = milp(cost, constraints=constraints, integrality=np.ones(len(edges)), bounds=Bounds(0, 1))
        chosen = [edges[k] for k in np.flatnonzero(res.x > 0.5)]
        # connected components of the chosen edges
        comp = list(range(n))

        def find(a):
            while comp[a] != a:
                comp[a] = comp[comp[a]]
                a = comp[a]
            return a

        for i, j in chosen:
            comp[find(i)] = find(j)
        groups = {}
        for v in range(n):
            groups.setdefault(find(v), set()).add(v)
        if len(groups) == 1:
            break
        for members in groups.values():
            row = np.array([1.0 if i in members and j in members else 0.0 for i, j in edges])
            constraints.append(LinearConstraint(row, -np.inf, len(members) - 1))
    assert round(res.fun) == optimum

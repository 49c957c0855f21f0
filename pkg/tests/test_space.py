import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from opspaces.space import (
    SpaceError,
    ball_volume,
    ball_volumes,
    build_space,
    default_r_grid,
    fefferman_stein_ratio,
    fit_doubling,
    maximal_function,
    space_from_distance,
    space_from_graph_dict,
    space_from_graph_file,
)


def cycle_volume(N, r):
    # strict ball on the cycle: #{k : min(k, N-k) < r}
    return min(2 * math.ceil(r) - 1, N)


def test_cycle8_distances_and_balls(c8):
    assert c8.dist[0, 4] == 4
    assert c8.dist[1, 7] == 2
    # strict balls: radius 1 is the singleton, radius 1.5 holds {7, 0, 1}
    assert all(ball_volume(c8, x, 1.0) == 1 for x in range(8))
    assert ball_volume(c8, 0, 1.5) == 3
    assert ball_volume(c8, 0, 100) == 8


def test_path2_and_totals():
    p2 = build_space("path", 2)
    assert p2.dist[0, 1] == 1
    assert p2.quasi_const == 1
    assert build_space("cycle", 16).total_measure == 16


def test_singleton_ball_below_min_distance():
    w = np.linspace(1, 2, 64)
    sp = build_space("cycle", 64, weights=w)
    r = sp.min_distance
    assert np.allclose(ball_volumes(sp, r), w)


@pytest.mark.parametrize("r", [0.5, 1, 1.5, 2, 3.7, 10, 31.5, 33, 100])
def test_cycle64_volume_oracle(c64, r):
    assert np.all(ball_volumes(c64, r) == cycle_volume(64, r))


def test_ball_volume_rejects_nonpositive_radius(c8):
    with pytest.raises(ValueError):
        ball_volume(c8, 0, 0.0)


def test_invalid_inputs():
    with pytest.raises(SpaceError):
        build_space("cycle", 1)
    d = np.array([[0, 1.0], [2.0, 0]])
    with pytest.raises(SpaceError) as err:
        space_from_distance(d)
    assert err.value.pair is not None
    with pytest.raises(SpaceError):
        space_from_distance(np.array([[0, -1.0], [-1.0, 0]]))
    with pytest.raises(SpaceError):
        space_from_distance(np.array([[0, 1.0], [1.0, 0]]), weight=[1.0, 0.0])


def test_graph_file_roundtrip(tmp_path):
    data = {"n": 4, "edges": [[0, 1, 1.0], [1, 2, 2.0], [2, 3, 1.0]], "weights": [1, 2, 3, 4]}
    path = tmp_path / "g.json"
    path.write_text(json.dumps(data))
    sp = space_from_graph_file(path)
    assert sp.dist[0, 3] == 4.0
    assert sp.total_measure == 10
    sp2 = space_from_graph_dict({"n": 3, "edges": [[0, 1], [1, 2]]})
    assert np.all(sp2.weight == 1.0)
    sp3 = build_space("weighted_graph_file", path=str(path))
    assert np.array_equal(sp3.dist, sp.dist)


def test_quasi_const_of_metric_graph_is_one(c64):
    assert c64.quasi_const == pytest.approx(1.0)


def test_quasi_const_of_squared_metric():
    # d^2 on three collinear points: d(0,2)=4 = K (1 + 1) needs K = 2
    x = np.array([0.0, 1.0, 2.0])
    sp = space_from_distance((x[:, None] - x[None, :]) ** 2)
    assert sp.quasi_const == pytest.approx(2.0)


def test_doubling_fit_cycle64(c64):
    rep = fit_doubling(c64)
    assert abs(rep.n - 1) <= 0.15
    assert 0 <= rep.n_tilde <= rep.n


def test_doubling_fit_grid8():
    rep = fit_doubling(build_space("grid2d", 8))
    assert abs(rep.n - 2) <= 0.3


def test_two_point_doubling_saturates():
    sp = build_space("path", 2)
    rep = fit_doubling(sp, r_grid=[2.0, 4.0])
    assert rep.C_doubling == 1.0


def test_doubling_upper_bound_certified(c64):
    rep = fit_doubling(c64)
    for r in default_r_grid(c64):
        for lam in (1, 2, 4, 8):
            assert np.all(ball_volumes(c64, lam * r) <= rep.C_upper * lam**rep.n * ball_volumes(c64, r) * (1 + 1e-12))
    for r in default_r_grid(c64):
        assert np.all(ball_volumes(c64, 2 * r) <= rep.C_doubling * ball_volumes(c64, r))


def test_doubling_grid_validation(c8):
    with pytest.raises(ValueError):
        fit_doubling(c8, r_grid=[])
    with pytest.raises(ValueError):
        fit_doubling(c8, lambda_grid=[0.5])


@pytest.mark.parametrize("kind,size", [("cycle", 64), ("grid2d", 8), ("path", 16)])
def test_certified_constants_monotone_under_refinement(kind, size):
    sp = build_space(kind, size)
    g = default_r_grid(sp)
    fine = np.union1d(g, np.sqrt(g[1:] * g[:-1]))
    a, b = fit_doubling(sp, g), fit_doubling(sp, fine)
    assert b.C_doubling >= a.C_doubling
    assert b.n_tilde >= a.n_tilde or b.clamped


@pytest.mark.xfail(strict=True, reason="the exponent n is a least-squares fit, so extra constraints can lower it")
def test_fitted_exponent_monotone_under_refinement(c64):
    g = default_r_grid(c64)
    fine = np.union1d(g, np.sqrt(g[1:] * g[:-1]))
    assert fit_doubling(c64, fine).n >= fit_doubling(c64, g).n


def test_ball_volume_nondecreasing_in_r(c64):
    rs = np.linspace(0.1, 40, 200)
    V = np.array([ball_volumes(c64, r) for r in rs])
    assert np.all(np.diff(V, axis=0) >= 0)


def test_maximal_function_examples(c8):
    assert np.allclose(maximal_function(c8, np.ones(8)), 1.0)
    f = np.zeros(8)
    f[0] = 1
    M = maximal_function(c8, f, 1.0)
    assert M[0] == 1.0
    # x = 4 is 4 away: the best ball through 0 and 4 has 5 or more points
    assert M[4] == pytest.approx(1 / 5)
    with pytest.raises(ValueError):
        maximal_function(c8, f, 0)


def brute_maximal(space, f, r):
    # every ball B(z, rho) with rho just above a distance value
    f = np.abs(f) ** r
    out = np.zeros(space.size)
    for z in range(space.size):
        for rho in np.unique(space.dist[z]):
            ball = space.dist[z] < rho + 1e-9
            avg = (f * space.weight)[ball].sum() / space.weight[ball].sum()
            out[ball] = np.maximum(out[ball], avg)
    return out ** (1 / r)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=8, max_size=8), st.sampled_from([0.5, 1.0, 2.0]))
def test_maximal_function_matches_brute_force(vals, r):
    sp = build_space("cycle", 8, weights=np.arange(1, 9))
    f = np.array(vals)
    M = maximal_function(sp, f, r)
    assert np.allclose(M, brute_maximal(sp, f, r))
    assert np.all(M >= np.abs(f) * (1 - 1e-12))


def test_fefferman_stein_stable_across_batches(c64):
    ratios = []
    for seed in range(4):
        rng = np.random.default_rng(seed)
        ratios.append(fefferman_stein_ratio(c64, rng.standard_normal((6, 64)), 0.5, 2.0, 2.0))
    ratios = np.array(ratios)
    assert np.all(np.isfinite(ratios)) and np.all(ratios >= 1)
    assert ratios.max() <= 1.2 * ratios.min()
    with pytest.raises(ValueError):
        fefferman_stein_ratio(c64, np.ones((2, 64)), 2.0, 2.0, 2.0)

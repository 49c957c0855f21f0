import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from opspaces.space import build_space, space_from_distance, space_from_graph_dict
from opspaces.spectral import (
    SpectralError,
    apply_function,
    finite_propagation_check,
    gaussian_diagnostic,
    graph_laplacian,
    heat_kernel,
    load_operator,
    operator_norm_power,
    restricted_kernel_bounds,
    spectral_decompose,
)
from opspaces.symbols import SpectralFunction, log_bump, symbol_family


@pytest.fixture(scope="module")
def p3():
    return spectral_decompose(build_space("path", 3))


def test_p3_eigenvalues(p3):
    assert np.allclose(p3.eigenvalues, [0, 1, 3], atol=1e-10)


@pytest.mark.parametrize("t", [0.1, 1.0, 10.0])
def test_p3_heat_kernel_entry(p3, t):
    want = 1 / 3 + math.exp(-t) / 2 + math.exp(-3 * t) / 6
    assert abs(heat_kernel(p3, t).values[0, 0] - want) <= 1e-10


def test_c4_eigenvalues():
    spec = spectral_decompose(build_space("cycle", 4))
    assert np.allclose(spec.eigenvalues, [0, 2, 2, 4], atol=1e-12)


def test_cycle_circulant_oracle(spec64):
    want = np.sort(2 - 2 * np.cos(2 * np.pi * np.arange(64) / 64))
    assert np.allclose(spec64.eigenvalues, want, atol=1e-12)


def test_zero_operator(c8):
    spec = spectral_decompose(c8, np.zeros((8, 8)))
    assert np.all(spec.eigenvalues == 0)
    F = symbol_family("gaussian")
    K = apply_function(spec, F).operator()
    assert np.allclose(K, np.eye(8) * F(np.zeros(1))[0])


def weighted_spectrum():
    data = {"n": 6, "edges": [[0, 1, 1], [1, 2, 2], [2, 3, 1], [3, 4, 0.5], [4, 5, 1], [5, 0, 1.5], [1, 4, 1]],
            "weights": [1, 2, 0.5, 3, 1, 1.5]}
    return spectral_decompose(space_from_graph_dict(data))


@pytest.mark.parametrize("method", ["jacobi", "lapack"])
def test_orthonormal_and_eigen_equation(method):
    spec0 = weighted_spectrum()
    spec = spectral_decompose(spec0.space, method=method)
    mu = spec.space.weight
    G = spec.eigenvectors.T @ (mu[:, None] * spec.eigenvectors)
    assert np.allclose(G, np.eye(6), atol=1e-10)
    L = spec.matrix
    assert np.abs(L @ spec.eigenvectors - spec.eigenvectors * spec.eigenvalues).max() <= 1e-8 * np.abs(L).max()
    assert np.all(spec.eigenvalues >= 0)
    # sign convention: first nonzero entry of every eigenvector is positive
    for v in spec.eigenvectors.T:
        assert v[np.flatnonzero(np.abs(v) > 1e-12)[0]] > 0


def test_jacobi_and_lapack_agree(c64):
    a = spectral_decompose(c64, method="jacobi")
    b = spectral_decompose(c64, method="lapack")
    assert np.allclose(a.eigenvalues, b.eigenvalues, atol=1e-12)
    F = symbol_family("gaussian")
    assert np.allclose(apply_function(a, F).values, apply_function(b, F).values, atol=1e-12)


def test_rejections(c8):
    L = graph_laplacian(c8).copy()
    L[0, 1] += 0.1
    with pytest.raises(SpectralError) as err:
        spectral_decompose(c8, L)
    assert err.value.witness is not None
    with pytest.raises(SpectralError):
        spectral_decompose(c8, -graph_laplacian(c8))
    with pytest.raises(SpectralError):
        spectral_decompose(c8, np.eye(3))


def test_load_operator(tmp_path, c8):
    L = graph_laplacian(c8)
    (tmp_path / "a.json").write_text(json.dumps({"matrix": L.tolist()}))
    (tmp_path / "b.json").write_text(json.dumps(L.tolist()))
    assert np.array_equal(load_operator(tmp_path / "a.json"), L)
    assert np.array_equal(load_operator(tmp_path / "b.json"), L)


def test_heat_semigroup(spec64):
    mu = spec64.space.weight
    pt, ps = heat_kernel(spec64, 0.7), heat_kernel(spec64, 1.9)
    assert np.allclose(pt.compose(ps).values, heat_kernel(spec64, 2.6).values, atol=1e-10)
    assert np.allclose(heat_kernel(spec64, 1e-9).operator(), np.eye(64), atol=1e-7)
    F = SpectralFunction(lambda lam: np.exp(-1.3 * lam**2))
    assert np.allclose(apply_function(spec64, F).values, heat_kernel(spec64, 1.3).values, atol=1e-14)
    # Markov: total mass is preserved for the graph Laplacian
    assert np.allclose(pt.operator() @ np.ones(64), 1.0)
    assert pt.is_symmetric


def test_heat_rejects_nonpositive_time(spec8):
    with pytest.raises(ValueError):
        heat_kernel(spec8, 0)


def test_functional_calculus_identities(spec64):
    one = symbol_family("const", c=1.0)
    assert np.allclose(apply_function(spec64, one).operator(), np.eye(64), atol=1e-12)
    sq = SpectralFunction(lambda lam: lam**2)
    assert np.allclose(apply_function(spec64, sq).operator(), spec64.matrix, atol=1e-12)


def test_p3_band_projector(p3):
    phi1 = p3.eigenvectors[:, 1]
    # sqrt(lam) in {0, 1, sqrt 3}: only 1 lies in [0.5, 1.5]
    F = symbol_family("rough_indicator", a=0.5, b=1.5)
    assert np.allclose(apply_function(p3, F).values, np.outer(phi1, phi1), atol=1e-12)
    # [0.5, 2] also catches sqrt 3, leaving the projector off constants
    F = symbol_family("rough_indicator", a=0.5, b=2.0)
    assert np.allclose(apply_function(p3, F).values, np.eye(3) - 1 / 3, atol=1e-12)


def test_nonfinite_symbol_names_eigenvalue(spec8):
    F = SpectralFunction(lambda lam: np.divide(1.0, lam, out=np.full(lam.shape, np.inf), where=lam != 0),
                         None, "inverse")
    with pytest.raises(SpectralError, match="lambda"):
        apply_function(spec8, F)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 3.0), st.floats(0.1, 3.0), st.floats(-2, 2), st.integers(0, 3))
def test_homomorphism(a, b, c, k):
    spec = _SPEC64
    F = SpectralFunction(lambda lam: np.exp(-a * lam) * np.cos(c * lam))
    G = SpectralFunction(lambda lam: (1 + lam) ** (-b) * lam**k)
    lhs = apply_function(spec, F * G)
    rhs = apply_function(spec, F).compose(apply_function(spec, G))
    assert np.allclose(lhs.values, rhs.values, atol=1e-9)


_SPEC64 = spectral_decompose(build_space("cycle", 64))


def test_operator_norm_matches_spectral_theorem(spec64):
    for F in [symbol_family("gaussian"), SpectralFunction(lambda lam: lam * np.exp(-lam)), symbol_family("wave", gamma=1)]:
        want = np.abs(F(spec64.frequencies)).max()
        assert abs(operator_norm_power(spec64, F) - want) <= 1e-6


def test_gaussian_diagnostic_cycle64(spec64):
    fit = gaussian_diagnostic(spec64, np.geomspace(0.1, 10, 9))
    assert math.isfinite(fit.C) and fit.C < 100
    assert fit.c in (1, 2, 4, 8, 16)
    # nonnegative up to eigensolver roundoff
    assert fit.min_entry >= -1e-12


def test_gaussian_single_point():
    sp = space_from_distance(np.zeros((1, 1)))
    spec = spectral_decompose(sp, np.zeros((1, 1)))
    fit = gaussian_diagnostic(spec, [0.5, 1, 2])
    assert fit.C == pytest.approx(1.0)


def test_propagation(spec64):
    for k in (0, 1):
        rep = finite_propagation_check(spec64, 4.0, k)
        assert rep.off_ratio <= 1e-3
        assert math.isfinite(rep.size_constant)
    assert finite_propagation_check(spec64, 40.0).off_ratio == 0


def test_restricted_kernel_bounds(spec64):
    R = math.sqrt(spec64.lambda_max)
    bump = symbol_family("mikhlin_bump", a=R / 4, b=R)
    out = restricted_kernel_bounds(spec64, bump, R)
    for key in ("pointwise", "l2_column", "weighted"):
        assert 0 < out[key] < math.inf
    zero = SpectralFunction(lambda lam: np.zeros_like(lam), (R / 4, R), "zero")
    assert all(restricted_kernel_bounds(spec64, zero, R)[k] == 0 for k in ("pointwise", "l2_column", "weighted"))
    with pytest.raises(SpectralError):
        restricted_kernel_bounds(spec64, symbol_family("mikhlin_bump", a=0.1, b=R), R)
    # zero padding: the same symbol viewed at 2R
    out2 = restricted_kernel_bounds(spec64, symbol_family("mikhlin_bump", a=R / 2, b=R), 2 * R)
    out1 = restricted_kernel_bounds(spec64, symbol_family("mikhlin_bump", a=R / 2, b=R), R)
    for key in ("pointwise", "l2_column", "weighted"):
        assert 0.5 <= out2[key] / out1[key] <= 2.0

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from miscflow.errors import HypothesisError
from miscflow.fields import (CoefficientFields, DispersionModel, FluidModel, density,
                             dispersion_tensor, dispersion_tensor_truncated, tensor_sqrt,
                             truncate_velocity, viscosity)
from miscflow.grid import build_grid

DM = DispersionModel(0.1, 1.0, 0.01)


def test_viscosity_koval():
    fm = FluidModel(mu0=2.0, M=16.0)
    assert viscosity(0.0, fm) == 2.0
    assert viscosity(1.0, fm) == pytest.approx(0.125, rel=1e-15)
    assert viscosity(0.5, FluidModel(mu0=1.0, M=1.0)) == 1.0


def test_viscosity_clamps():
    fm = FluidModel(mu0=2.0, M=16.0)
    assert viscosity(-0.3, fm) == viscosity(0.0, fm)
    assert viscosity(1.7, fm) == viscosity(1.0, fm)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(1.0, 100.0))
def test_viscosity_monotone_for_favourable_ratio(c1, c2, M):
    fm = FluidModel(M=M)
    lo, hi = min(c1, c2), max(c1, c2)
    assert viscosity(lo, fm) >= viscosity(hi, fm)


def test_density_linear():
    fm = FluidModel(rho0=1000.0, rho1=800.0)
    assert density(0.0, fm) == 1000.0
    assert density(1.0, fm) == 800.0
    assert density(0.5, fm) == 900.0


@pytest.mark.parametrize("M", [0.0, -1.0, math.inf])
def test_fluid_rejects_bad_ratio(M):
    with pytest.raises(HypothesisError, match="density-viscosity"):
        FluidModel(M=M)


@pytest.mark.parametrize("kw", [dict(dm=0.0, dl=1, dt=1), dict(dm=1, dl=1, dt=0.0),
                                dict(dm=1, dl=-1, dt=1)])
def test_dispersion_rejects_degenerate(kw):
    with pytest.raises(HypothesisError, match="dispersion-ellipticity"):
        DispersionModel(**kw)


def test_dispersion_examples():
    assert np.array_equal(dispersion_tensor(1.0, [0.0, 0.0], DM), 0.1 * np.eye(2))
    np.testing.assert_allclose(dispersion_tensor(1.0, [1.0, 0.0], DM), np.diag([1.1, 0.11]),
                               rtol=1e-15)
    np.testing.assert_allclose(dispersion_tensor(2.0, [3.0, 4.0], DispersionModel(1, 1, 1)),
                               12.0 * np.eye(2), rtol=1e-15)


def test_truncated_examples():
    u = np.array([1.2, -1.6])
    assert np.array_equal(dispersion_tensor_truncated(1.0, u, 5.0, DM), dispersion_tensor(1.0, u, DM))
    np.testing.assert_allclose(dispersion_tensor_truncated(1.0, [10.0, 0.0], 5.0, DM),
                               np.diag([5.1, 0.15]), rtol=1e-15)
    for k in (1e-3, 1.0, 1e9):
        assert np.array_equal(dispersion_tensor_truncated(0.3, [0.0, 0.0], k, DM), 0.03 * np.eye(2))
    with pytest.raises(ValueError):
        dispersion_tensor_truncated(1.0, u, 0.0, DM)


def test_truncate_velocity_keeps_direction():
    u = np.array([[3.0, 4.0], [0.3, 0.4]])
    t = truncate_velocity(u, 1.0)
    np.testing.assert_allclose(t[0], [0.6, 0.8], rtol=1e-15)
    assert np.array_equal(t[1], u[1])


def test_projection_properties(rng):
    for _ in range(50):
        u = rng.normal(size=2)
        E = np.outer(u, u) / (u @ u)
        np.testing.assert_allclose(E @ E, E, atol=1e-14)
        np.testing.assert_allclose(E @ u, u, rtol=1e-13)
        assert np.trace(E) == pytest.approx(1.0)


def test_ellipticity_sampling(rng):
    dm = DispersionModel(0.02, 0.3, 0.05)
    phi_star = 0.25
    alpha, lam = dm.alpha(phi_star), dm.lam(phi_star)
    n = 10_000
    phi = rng.uniform(phi_star, 1 / phi_star, n)
    zeta = rng.normal(size=(n, 2)) * rng.lognormal(0, 2, size=(n, 1))
    xi = rng.normal(size=(n, 2))
    D = dispersion_tensor(phi, zeta, dm)
    q = np.einsum("ni,nij,nj->n", xi, D, xi)
    speed = np.linalg.norm(zeta, axis=1)
    xi2 = np.sum(xi * xi, axis=1)
    assert np.all(q >= alpha * (1 + speed) * xi2 * (1 - 1e-12))
    assert np.all(np.linalg.norm(D, ord=2, axis=(1, 2)) <= lam * (1 + speed) * (1 + 1e-12))
    Dk = dispersion_tensor_truncated(phi, zeta, 0.5, dm)
    qk = np.einsum("ni,nij,nj->n", xi, Dk, xi)
    assert np.all(qk >= alpha * xi2 * (1 - 1e-12))


def test_continuity_at_origin(rng):
    dm = DispersionModel(0.02, 0.3, 0.05)
    D0 = dispersion_tensor(1.0, [0.0, 0.0], dm)
    for _ in range(100):
        u = rng.normal(size=2) * 1e-9
        diff = np.linalg.norm(dispersion_tensor(1.0, u, dm) - D0, 2)
        # subtracting D0 costs a few ulps of |D0|
        assert diff <= dm.lam(1.0) * np.linalg.norm(u) + 8 * np.finfo(float).eps * np.abs(D0).max()


def test_truncation_converges_uniformly(rng):
    u = rng.uniform(-3, 3, size=(500, 2))
    errs = [np.abs(dispersion_tensor_truncated(1.0, u, k, DM) - dispersion_tensor(1.0, u, DM)).max()
            for k in (0.5, 1.0, 2.0, 5.0)]
    assert all(b <= a for a, b in zip(errs, errs[1:]))
    assert errs[-1] == 0.0


def test_tensor_sqrt_examples():
    np.testing.assert_allclose(tensor_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), rtol=1e-15)
    np.testing.assert_allclose(tensor_sqrt(np.eye(2)), np.eye(2), rtol=1e-15)
    assert np.array_equal(tensor_sqrt(np.zeros((2, 2))), np.zeros((2, 2)))


@settings(max_examples=200)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_tensor_sqrt_matches_eigen_oracle(a, b, c, d):
    B = np.array([[a, b], [c, d]])
    D = B @ B.T + 1e-3 * np.eye(2)
    R = tensor_sqrt(D)
    w, V = np.linalg.eigh(D)
    oracle = V @ np.diag(np.sqrt(w)) @ V.T
    np.testing.assert_allclose(R, oracle, atol=1e-12 * np.abs(D).max() ** 0.5 + 1e-14)
    np.testing.assert_allclose(R @ R, D, rtol=0, atol=1e-12 * np.abs(D).max())


def test_tensor_sqrt_growth_bound(rng):
    dm = DispersionModel(0.02, 0.3, 0.05)
    lam = dm.lam(0.5)
    zeta = rng.normal(size=(1000, 2)) * 10
    R = tensor_sqrt(dispersion_tensor(rng.uniform(0.5, 2.0, 1000), zeta, dm))
    bound = np.sqrt(lam) * (1 + np.linalg.norm(zeta, axis=1) ** 0.5)
    assert np.all(np.linalg.norm(R, 2, axis=(1, 2)) <= bound)


def test_tensor_sqrt_rejects():
    with pytest.raises(ValueError, match="symmetric"):
        tensor_sqrt(np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(ValueError, match="indefinite"):
        tensor_sqrt(np.diag([1.0, -1.0]))


def test_coefficient_bounds():
    g = build_grid(3, 3, 1.0, 1.0)
    cf = CoefficientFields.uniform(g, phi=0.2, k=2.0)
    assert cf.phi_star == 0.2 and cf.k_star == 0.5 and cf.is_diagonal
    with pytest.raises(HypothesisError, match="porosity"):
        CoefficientFields(np.full(g.shape, 0.1), cf.K, phi_star=0.2, k_star=0.5)
    K = cf.K.copy()
    K[0, 0] = [[1.0, 0.2], [0.0, 1.0]]
    with pytest.raises(HypothesisError, match="symmetric"):
        CoefficientFields(cf.phi, K, phi_star=0.2, k_star=0.5)
    K = cf.K.copy()
    K[1, 1] = np.diag([0.1, 1.0])
    with pytest.raises(HypothesisError, match="permeability"):
        CoefficientFields(cf.phi, K, phi_star=0.2, k_star=0.5)

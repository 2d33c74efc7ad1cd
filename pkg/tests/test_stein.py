import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fclt.core import DependencyModel, PathGrid, RngStream
from fclt.functionals import CylinderFunctional, make_chi
from fclt.stein import (check_stationary_decomposition, gaussian_dn_sampler,
                        generator_apply, generator_semigroup_check, ou_step,
                        semigroup_apply, sigma_ou, solution_derivative_bounds,
                        stationary_state, stein_null_check, wn_path)


def toy():
    a = np.random.default_rng(11).standard_normal((4, 4))
    cov = a @ a.T / 4 + 0.1 * np.eye(4)
    dm = DependencyModel(2, 2, (2, 2), (frozenset({0, 1}),) * 2)
    return dm, cov


@given(st.floats(0, 30))
def test_sigma_ou(v):
    assert sigma_ou(v) ** 2 == pytest.approx(1 - math.exp(-2 * v), abs=1e-15)


def test_ou_step_zero_is_identity_and_rejects_negative():
    dm, cov = toy()
    gen = RngStream(0).generator()
    s = stationary_state(cov, 2, 2, gen, 10)
    assert ou_step(s, 0.0, gen) is s
    with pytest.raises(ValueError):
        ou_step(s, -1.0, gen)
    with pytest.raises(ValueError):
        stationary_state(cov, 3, 2, gen)


def test_wn_path_shape():
    dm, cov = toy()
    gen = RngStream(0).generator()
    w = wn_path(stationary_state(cov, 2, 2, gen, 7), dm, 4)
    assert w.values.shape == (7, 5, 2)
    assert np.all(w.values[:, 0] == 0)


@pytest.mark.parametrize("v", [0.0, 0.7])
def test_stationary_decomposition(v):
    dm, cov = toy()
    rep = check_stationary_decomposition(dm, cov, 0.3, v, 20_000, 4)
    assert rep.passed
    if v == 0:
        assert rep.max_deviation == 0.0


def test_stein_null_linear():
    dm, cov = toy()
    f = CylinderFunctional(make_chi("linear", 2), [0.5, 1.0], [0, 1])
    est = stein_null_check(f, gaussian_dn_sampler(cov, dm, 2), 20_000, 1)
    assert abs(est.mean) <= 3 * est.se


def test_generator_quadratic_is_exact_in_expectation():
    # for χ(x) = x², 𝒜f(w) = -2 a(w)² + 2 E a(D)², zero at a(w)² = E a(D)²
    dm, cov = toy()
    f = CylinderFunctional(make_chi("square", 1), [1.0], [0])
    var = cov[0, 0] + cov[2, 2] + 2 * cov[0, 2]
    w = PathGrid(np.array([[0.0, 0.0], [0.0, 0.0], [math.sqrt(var), 0.0]]))
    est = generator_apply(f, w, gaussian_dn_sampler(cov, dm, 2), 20_000, 2)
    assert abs(est.mean) <= 3 * est.se + 1e-12


def test_semigroup_at_zero_and_errors():
    dm, cov = toy()
    f = CylinderFunctional(make_chi("cos-mean", 1), [1.0], [0])
    w = PathGrid(np.array([[0.0, 0.0], [0.2, 0.0], [0.4, 0.0]]))
    dn = gaussian_dn_sampler(cov, dm, 2)
    assert semigroup_apply(f, w, 0.0, dn, 1000, 0).mean == pytest.approx(math.cos(0.4))
    with pytest.raises(ValueError):
        semigroup_apply(f, w, -0.1, dn, 1000, 0)


def test_generator_semigroup_consistency():
    dm, cov = toy()
    f = CylinderFunctional(make_chi("cos-mean", 2), [0.5, 1.0], [0, 1])
    w = PathGrid(np.array([[0.0, 0.0], [0.3, -0.2], [0.5, 0.4]]))
    gc = generator_semigroup_check(f, w, gaussian_dn_sampler(cov, dm, 2), 20_000, 3)
    assert gc.passed


def test_solution_bounds_formula():
    b = solution_derivative_bounds(2.0, 1.5, 3.0, 0.5)
    assert b.A == pytest.approx(2 * (1 + 2 / 3 * 0.25 + 4 / 3 * 3))
    assert b.B == pytest.approx(2 * (0.5 + 0.5 / 3 + 0.5))
    assert b.C == pytest.approx(2 / 3)
    assert solution_derivative_bounds(2.0, 1.5, 3.0, 0.5, d2_lipschitz=0.3).C == pytest.approx(0.1)
    with pytest.raises(ValueError):
        solution_derivative_bounds(-1, 0, 0, 0)

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fclt.core import ModelValidationError, PathGrid, RngStream, path_sup_norm
from fclt.functionals import LrNormFunctional
from fclt.harness import mc_mean
from fclt.models import (IidModel, KERNEL_CATALOG, ScansModel, UStatModel, iid_moments,
                         iid_sampler, model_from_dict, scans_bound, scans_dependency_model,
                         scans_moment_oracle, scans_pi, scans_psi, scans_sample_path,
                         scans_sample_X, scans_sigma, scans_stats, ustat_paths,
                         ustat_projection)

COIN = dict(support=[[0.0], [1.0]], probs=[0.5, 0.5])
PAIR_SUPPORT = [[0, 0], [0, 1], [1, 0], [1, 1]]


def coin(m, n=10, a=0.0):
    return ScansModel(1, m, n, [a], **COIN)


def skew(m=2, n=10):
    # asymmetric bivariate innovations so ψ_kl(d) differs from ψ_lk(d)
    return ScansModel(2, m, n, [0.0, 1.0], support=PAIR_SUPPORT, probs=[0.1, 0.2, 0.3, 0.4])


def brute_force(model):
    """Independent enumeration of π and ψ(d) by iterating innovation strings."""
    K, m, p = len(model.probs), model.m, model.p
    L = 2 * m - 1
    pi = np.zeros(p)
    joint = np.zeros((m, p, p))
    for idx in itertools.product(range(K), repeat=L):
        w = np.prod([model.probs[i] for i in idx])
        v = np.array([model.support[i] for i in idx])
        R = np.array([v[s:s + m].sum(axis=0) for s in range(m)])
        ind = (R <= np.array(model.a)).astype(float)
        pi += w * ind[0]
        for d in range(m):
            joint[d] += w * np.outer(ind[d], ind[0])
    return pi, joint - np.outer(pi, pi)[None]


# --- π, ψ, Σ ----------------------------------------------------------------------

def test_pi_examples():
    assert scans_pi(coin(1))[0] == pytest.approx(0.5)
    assert scans_pi(coin(2))[0] == pytest.approx(0.25)
    assert scans_pi(coin(3, a=3.0))[0] == pytest.approx(1.0)


def test_psi_examples():
    assert scans_psi(coin(1), 0)[0, 0] == pytest.approx(0.25)
    assert np.all(scans_psi(coin(1), 1) == 0)
    assert scans_psi(coin(2), 1)[0, 0] == pytest.approx(1 / 16)
    assert scans_sigma(coin(1))[0, 0] == pytest.approx(0.25)


@pytest.mark.parametrize("model", [coin(3), skew(2), skew(3)])
def test_enumeration_matches_brute_force(model):
    pi, psi = brute_force(model)
    st_ = scans_stats(model)
    assert st_.exact
    np.testing.assert_allclose(st_.pi, pi, atol=1e-14)
    psi[0] = 0.5 * (psi[0] + psi[0].T)
    np.testing.assert_allclose(st_.psi, psi, atol=1e-14)
    s = st_.sigma
    np.testing.assert_allclose(s, s.T, atol=0)


def test_mc_psi_agrees_with_enumeration():
    model = skew(2)
    ex = scans_stats(model, method="exact")
    mc = scans_stats(model, method="mc", budget=100_000, seed=3)
    assert not mc.exact
    assert np.all(np.abs(mc.psi - ex.psi) <= 3 * mc.psi_se + 1e-15)
    assert np.all(np.abs(mc.pi - ex.pi) <= 3 * mc.pi_se + 1e-15)


def test_state_explosion():
    big = ScansModel(1, 8, 20, [3.0], support=np.arange(8.0)[:, None], probs=np.full(8, 1 / 8))
    with pytest.raises(ValueError, match="state explosion"):
        scans_stats(big)


def test_model_validation():
    with pytest.raises(ModelValidationError, match="n must exceed m"):
        ScansModel(1, 3, 3, [0.0], **COIN)
    with pytest.raises(ModelValidationError, match="sum to 1"):
        ScansModel(1, 1, 3, [0.0], support=[[0.0], [1.0]], probs=[0.5, 0.5 + 1e-9])
    with pytest.raises(ValueError):
        scans_psi(coin(2), -1)


# --- sampled arrays -------------------------------------------------------------

def test_impossible_threshold_gives_zero_path():
    model = coin(2, n=6, a=-1.0)
    assert scans_pi(model)[0] == 0.0
    w = scans_sample_path(model, "block", RngStream(0).generator(), 5)
    assert np.all(w.values == 0)


@pytest.mark.parametrize("regime", ["block", "unit"])
def test_path_endpoint_moments(regime):
    model = skew(2, n=6)
    oracle = scans_moment_oracle(model, regime)
    rows = model.n if regime == "block" else model.n ** 2
    p = model.p
    target = np.zeros((p, p))
    for i in range(rows):
        for j in range(max(0, i - model.m), min(rows, i + model.m + 1)):
            for k in range(p):
                for l in range(p):
                    target[k, l] += oracle.second_moment(i, k, j, l)

    def fn(gen, size):
        y = scans_sample_path(model, regime, gen, size).values[:, -1, :]
        return np.concatenate([y, (y[:, :, None] * y[:, None, :]).reshape(size, -1)], axis=1)

    mean, se = mc_mean(fn, 20_000, 5)
    assert np.all(np.abs(mean[:p]) <= 3 * se[:p])
    assert np.all(np.abs(mean[p:] - target.ravel()) <= 3 * se[p:])


def test_block_same_and_adjacent_moments():
    # n E X_ik X_il and n² E X_ik X_{i+1,l} against the lag sums
    model = skew(3, n=6)
    n = model.n
    psi = scans_stats(model).psi
    same = psi[0] + sum((1 - d / n) * (psi[d].T + psi[d]) for d in range(1, 3))
    nxt = sum(d * psi[d] for d in range(1, 3))     # nxt[l, k] = n² E X_ik X_{i+1,l}

    def fn(gen, size):
        x = scans_sample_X(model, "block", gen, size)
        a = x[:, 2, :, None] * x[:, 2, None, :]
        b = x[:, 2, :, None] * x[:, 3, None, :]
        return np.concatenate([a.reshape(size, -1), b.reshape(size, -1)], axis=1)

    mean, se = mc_mean(fn, 30_000, 6)
    np.testing.assert_array_less(np.abs(n * mean[:4] - same.ravel()), 3 * n * se[:4] + 1e-12)
    np.testing.assert_array_less(np.abs(n * n * mean[4:] - nxt.T.ravel()), 3 * n * n * se[4:] + 1e-12)


def test_written_orientation_on_symmetric_model():
    # with exchangeable coordinates ψ_kl(d) = ψ_lk(d) and both readings agree
    model = ScansModel(2, 2, 6, [1.0, 1.0], support=PAIR_SUPPORT, probs=[3 / 8, 1 / 8, 1 / 8, 3 / 8])
    psi = scans_stats(model).psi
    np.testing.assert_allclose(psi[1], psi[1].T, atol=1e-15)
    oracle = scans_moment_oracle(model, "block")
    n = model.n
    got = np.array([[oracle.second_moment(0, k, 1, l) for l in range(2)] for k in range(2)])
    np.testing.assert_allclose(n * n * got, psi[1], atol=1e-14)


def test_dependency_models_validate():
    model = coin(2, n=4)
    assert scans_dependency_model(model, "block").neighborhoods[0] == {0, 1}
    dm = scans_dependency_model(model, "unit")
    assert dm.n == 16 and dm.regime == "weak" and dm.neighborhoods[5] == {4, 5, 6}


# --- closed-form bounds ---------------------------------------------------------

def test_scans_bound_m1_structural_zeros():
    rep = scans_bound(ScansModel(1, 1, 100, [0.0], **COIN), "block")
    assert rep["eps4"].value == 0.0 and rep["eps5"].value == 0.0 and rep["eps7"].value == 0.0


def test_scans_bound_rate_ratio():
    n = 2 ** 14
    mk = lambda n: ScansModel(1, 2, n, [0.0], **COIN)
    r = scans_bound(mk(4 * n), "block").total / scans_bound(mk(n), "block").total
    target = 0.5 * math.sqrt(math.log(8 * n) / math.log(2 * n))
    assert abs(r / target - 1) < 0.05


def test_scans_delta7_factor():
    model = coin(2, n=8)
    psi = scans_stats(model).psi
    rep = scans_bound(model, "unit", LrNormFunctional(2))
    expect = math.sqrt(1 / 8) * math.sqrt(psi[0, 0, 0] + 2 * (1 - 1 / 64) * psi[1, 0, 0])
    assert rep["delta7"].value == pytest.approx(expect, rel=1e-12)
    assert rep["delta7"].weighted is False
    with pytest.raises(ValueError, match="direction bound"):
        scans_bound(model, "unit")


def test_scans_bound_mc_carries_se():
    model = skew(2, n=20)
    mc = scans_stats(model, method="mc", budget=20_000, seed=1)
    rep = scans_bound(model, "block", stats=mc)
    assert rep["eps1"].se > 0
    assert rep["eps6"].se > 0


# --- U-statistics ---------------------------------------------------------------

def test_kernel_catalog_moments():
    pr = ustat_projection(UStatModel("sum", 10))
    assert (pr.sigma_w2, pr.sigma_h2) == (1.0, 2.0)
    pr = ustat_projection(UStatModel("sum-plus-product", 10))
    assert pr.sigma_h2 / pr.sigma_w2 - 2 == pytest.approx(1.0)
    with pytest.raises(ValueError, match="degenerate kernel"):
        ustat_projection(UStatModel("product", 10))


def test_projection_by_simulation():
    # a non-default sampler forces the Monte Carlo route
    m = UStatModel(KERNEL_CATALOG["sum-plus-product"], 10,
                   sampler=lambda g, s: g.standard_normal(s))
    pr = ustat_projection(m, budget=100_000, rng=2)
    assert abs(pr.sigma_w2 - 1) <= 3 * pr.se["sigma_w2"]
    assert abs(pr.sigma_h2 - 3) <= 3 * pr.se["sigma_h2"]
    assert abs(pr.e_abs_w3 - 2 * math.sqrt(2 / math.pi)) <= 3 * pr.se["e_abs_w3"]


@pytest.mark.parametrize("name", sorted(KERNEL_CATALOG))
def test_kernel_symmetry(name):
    assert UStatModel(name, 5).check_symmetry(RngStream(0).generator()) <= 1e-12


def test_sum_kernel_paths_coincide():
    y, t = ustat_paths(UStatModel("sum", 100), RngStream(0).generator(), 200, R=2)
    assert np.all(path_sup_norm(PathGrid(y.values - t.values)) == 0)
    assert np.all(y.values[:, :4] == 0)     # l < 2 on grid q/(2n)


def test_ustat_paths_direct_sum():
    model = UStatModel("sum-plus-product", 6)
    gen = RngStream(4).generator()
    y, _ = ustat_paths(model, gen, R=1)
    x = model.sampler(RngStream(4).generator(), (1, 6))[0]
    for l in range(2, 7):
        s = sum(x[i] + x[j] + x[i] * x[j] for i in range(l) for j in range(i + 1, l))
        assert y.values[l, 0] == pytest.approx(6 ** -1.5 * s / (l / 6), rel=1e-12)


@pytest.mark.parametrize("m", [2, 3, 4])
def test_variance_identity(m):
    def fn(gen, size):
        x = gen.standard_normal((size, m))
        r = sum(x[:, i] * x[:, j] for i in range(m) for j in range(i + 1, m))
        return r ** 2
    mean, se = mc_mean(fn, 100_000, m)
    assert abs(mean - math.comb(m, 2)) <= 3 * se


def test_tilde_doob_bound():
    def fn(gen, size):
        _, t = ustat_paths(UStatModel("sum-plus-product", 64), gen, size)
        return path_sup_norm(t) ** 2
    mean, se = mc_mean(fn, 10_000, 8)
    assert mean <= 4 + 3 * se


def test_residual_sup_bound():
    n = 64
    def fn(gen, size):
        y, t = ustat_paths(UStatModel("sum-plus-product", n), gen, size)
        return path_sup_norm(PathGrid(y.values - t.values)) ** 2
    mean, se = mc_mean(fn, 5000, 9)
    assert mean - 3 * se <= 16 * 1.0 * math.log(3 * n) / n


# --- i.i.d. ---------------------------------------------------------------------

def test_iid_moments():
    m3, m2 = iid_moments(IidModel(np.diag([1.0, 4.0]), 10))
    np.testing.assert_allclose(m3, 2 * math.sqrt(2 / math.pi) * np.array([1.0, 8.0]))
    m3, m2 = iid_moments(IidModel(np.eye(2), 10, "rademacher"))
    np.testing.assert_allclose(m3, [1.0, 1.0])
    np.testing.assert_allclose(m2, [1.0, 1.0])


def test_iid_sampler_endpoint_covariance():
    sigma = np.array([[1.0, 0.4], [0.4, 2.0]])
    sample = iid_sampler(IidModel(sigma, 8, "rademacher"))

    def fn(gen, size):
        y = sample(gen, size).values[:, -1, :]
        return (y[:, :, None] * y[:, None, :]).reshape(size, 4)
    mean, se = mc_mean(fn, 20_000, 1)
    assert np.all(np.abs(mean - sigma.ravel()) <= 3 * se)


# --- descriptors ----------------------------------------------------------------

def test_model_from_dict():
    m = model_from_dict({"scans": skew(2).to_dict()})
    assert m.to_dict() == skew(2).to_dict()
    assert model_from_dict({"ustat": {"kernel": "sum", "n": 20}}).kernel.name == "sum"
    assert model_from_dict({"iid": {"sigma": [[1.0]], "n": 5}}).p == 1
    with pytest.raises(KeyError):
        model_from_dict({"ustat": {"kernel": "cube", "n": 20}})
    with pytest.raises(ValueError):
        model_from_dict({"other": {}})

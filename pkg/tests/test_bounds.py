import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fclt.bounds import (BoundReport, BoundTerm, NormBoundMissing, delta_terms, eps_terms,
                         eps_terms_independent, iid_bound, total, ustat_bound)
from fclt.core import DependencyModel, MomentOracle
from fclt.functionals import (ConstantFunctional, CylinderFunctional, LrNormFunctional,
                              make_chi)
from fclt.models import (ScansModel, scans_dependency_model, scans_moment_oracle,
                         scans_sigma)

E3_NORMAL = 2 * math.sqrt(2 / math.pi)

# frozen from an independent 30-digit re-evaluation of the closed forms
IID_P1_N100_DISPLAYED = 46.0881211355124319873888
IID_P1_N100_PROOF = 42.9435292924719251814562
IID_P3_IDENTITY_N100 = 214.055220028412721705562
USTAT_N100_R3 = 52.3572041945804667413224


def iid_model(n, p, sigma, seed_mix=None):
    root = np.linalg.cholesky(sigma)
    dm = DependencyModel(n, p, (n,) * p, tuple(frozenset({i}) for i in range(n)))
    cov = np.kron(np.eye(n), sigma / n)

    def sampler(gen, size):
        return gen.standard_normal((size, n, p)) @ root.T / math.sqrt(n)

    return dm, MomentOracle(cov, sampler, (n, p))


# --- closed forms ---------------------------------------------------------------

def test_iid_bound_scalar_oracle():
    args = (1, 100, np.eye(1), [E3_NORMAL], [1.0])
    assert iid_bound(*args, variant="displayed").total == pytest.approx(IID_P1_N100_DISPLAYED, rel=1e-12)
    assert iid_bound(*args).total == pytest.approx(IID_P1_N100_PROOF, rel=1e-12)


def test_iid_bound_identity_matches_simplified_form():
    rep = iid_bound(3, 100, np.eye(3), [E3_NORMAL] * 3, [1.0] * 3)
    assert rep.total == pytest.approx(IID_P3_IDENTITY_N100, rel=1e-12)
    assert rep.norm_class == "M"


def test_iid_bound_errors():
    with pytest.raises(ValueError):
        iid_bound(1, 100, np.eye(1), [1], [1], variant="other")
    with pytest.raises(ValueError):
        iid_bound(2, 100, np.eye(1), [1, 1], [1, 1])


def test_ustat_bound_oracle():
    rep = ustat_bound(100, 3.0, 1.0, E3_NORMAL, math.sqrt(2 / math.pi))
    assert rep.total == pytest.approx(USTAT_N100_R3, rel=1e-12)
    assert rep.norm_class == "M2"


def test_ustat_bound_errors():
    with pytest.raises(ValueError, match="degenerate kernel"):
        ustat_bound(100, 1.0, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError, match="variance identity violated"):
        ustat_bound(100, 1.0, 1.0, 1.0, 1.0)


# --- reports and totals ---------------------------------------------------------

def test_bound_term_validation():
    with pytest.raises(ValueError):
        BoundTerm("x", -1.0)
    with pytest.raises(ValueError):
        BoundTerm("x", float("nan"))
    with pytest.raises(ValueError):
        BoundReport("nowhere", ())


def _report():
    return BoundReport("proposition-weak", (BoundTerm("a", 1.0, 0.1), BoundTerm("b", 2.0),
                                            BoundTerm("c", 0.5, weighted=False)))


def test_total_semantics():
    rep = _report()
    assert total(rep, 1.0) == rep.total == 3.5
    assert total(rep, ConstantFunctional(0.0)) == 0.5
    assert total(rep, 2.0, inflate=True) == pytest.approx(2 * 3.3 + 0.5)
    local = BoundReport("local3", (BoundTerm("eps1", 0.3),))
    assert total(local, ConstantFunctional(0.0)) == 0.0


@settings(max_examples=50)
@given(st.floats(0, 1e3), st.floats(0, 1e3))
def test_total_linear_in_norm(a, b):
    rep = _report()
    assert total(rep, a + b) - 0.5 == pytest.approx((total(rep, a) - 0.5) + (total(rep, b) - 0.5),
                                                    rel=1e-12, abs=1e-9)


def test_total_missing_norm():
    sq = CylinderFunctional(make_chi("square", 1), [1.0], [0])
    with pytest.raises(NormBoundMissing, match="norm bound missing: M1"):
        total(BoundReport("local3", (BoundTerm("eps1", 1.0),)), sq)


def test_report_json_roundtrip():
    rep = _report()
    d = json.loads(rep.to_json())
    assert set(d) == {"regime", "g_norm_used", "terms", "total"}
    assert BoundReport.from_dict(d) == rep
    assert rep["c"].weighted is False
    with pytest.raises(KeyError):
        rep["zzz"]


# --- epsilon terms --------------------------------------------------------------

def test_independent_terms_agree_and_vanish():
    sigma = np.array([[1.0, 0.3], [0.3, 0.5]])
    dm, oracle = iid_model(12, 2, sigma)
    full = eps_terms(dm, oracle, sigma, 4000, 7)
    ind = eps_terms_independent(dm, oracle, sigma, 4000, 7)
    assert full["eps2"].value == 0.0 and full["eps5"].value == 0.0
    assert ind["eps2"].value == 0.0 and ind["eps5"].value == 0.0
    assert full["eps7"].value == 0.0
    # matched covariance Σ/λ per summand
    assert full["eps4"].value == pytest.approx(0.0, abs=1e-14)
    for name in ("eps1", "eps3", "eps6"):
        assert full[name].value == pytest.approx(ind[name].value, rel=1e-12)


def test_eps_third_order_dual_route():
    # ε₁ as an MC average against an analytic value for Gaussian rows:
    # (1/6) n E‖X‖³ with X ~ N(0, I/n) in R¹ is (1/6) n^{-1/2} E|Z|³
    n = 16
    dm, oracle = iid_model(n, 1, np.eye(1))
    rep = eps_terms(dm, oracle, np.eye(1), 40_000, 3)
    expect = E3_NORMAL / (6 * math.sqrt(n))
    assert abs(rep["eps1"].value - expect) <= 4 * rep["eps1"].se


def test_eps_errors():
    sigma = np.eye(1)
    dm, oracle = iid_model(6, 1, sigma)
    with pytest.raises(ValueError, match="at least 1000"):
        eps_terms(dm, oracle, sigma, 10, 0)
    with pytest.raises(ValueError):
        eps_terms(dm, oracle, np.eye(2), 2000, 0)
    dep = DependencyModel(6, 1, (6,), tuple(frozenset({max(i - 1, 0), i}) | {min(i + 1, 5)}
                                             for i in range(6)))
    with pytest.raises(ValueError, match="not independent"):
        eps_terms_independent(dep, oracle, sigma, 2000, 0)
    weak = DependencyModel(4, 1, (2,), tuple(frozenset({i}) for i in range(4)), regime="weak")
    oracle4 = MomentOracle(np.eye(4) / 4, None, (4, 1))
    with pytest.raises(ValueError, match="local-dependence"):
        eps_terms(weak, oracle4, sigma, 2000, 0)


# --- delta terms ----------------------------------------------------------------

def test_delta_structural_zeros_m1():
    model = ScansModel(1, 1, 6, [0.0], support=[[0.0], [1.0]], probs=[0.5, 0.5])
    dm = scans_dependency_model(model, "unit")
    oracle = scans_moment_oracle(model, "unit")
    sigma = scans_sigma(model)
    rep = delta_terms(dm, oracle, sigma, LrNormFunctional(2), 2000, 0)
    assert rep["delta4"].value == pytest.approx(0.0, abs=1e-15)
    assert rep["delta5"].value == 0.0
    # δ₇ = (1/λ)^{1/2} sqrt(λ² ψ(0)/λ²)
    assert rep["delta7"].value == pytest.approx(math.sqrt(1 / 6) * math.sqrt(0.25), rel=1e-12)
    assert rep.norm_class == "M1"


def test_delta_errors():
    model = ScansModel(1, 1, 6, [0.0], support=[[0.0], [1.0]], probs=[0.5, 0.5])
    dm = scans_dependency_model(model, "unit")
    oracle = scans_moment_oracle(model, "unit")
    sq = CylinderFunctional(make_chi("square", 1), [1.0], [0])
    with pytest.raises(ValueError, match="direction bound"):
        delta_terms(dm, oracle, np.eye(1) / 4, sq, 2000, 0)
    block = ScansModel(1, 1, 6, [0.0], support=[[0.0], [1.0]], probs=[0.5, 0.5])
    bdm = scans_dependency_model(block, "block")
    with pytest.raises(ValueError, match="n²-summand"):
        delta_terms(bdm, scans_moment_oracle(block, "block"), np.eye(1) / 4,
                    LrNormFunctional(2), 2000, 0)

import math

import numpy as np
import pytest
from scipy.stats import norm

from maxrep.clark_ocone import (brownian_integrand, closed_form_integrands, estimate_ef, hedge_table,
                                jump_integrand, nested_integrands, reconstruct, wiener_phi)
from maxrep.first_passage import mc_first_passage
from maxrep.model import (COX_A, COX_A_SPEC, HAWKES_A, HAWKES_A_SPEC, CoxParams, JumpSpec, SimGrid,
                          make_spec)
from maxrep.paths import simulate_batch, simulate_cox_path, simulate_hawkes_path

WIENER = CoxParams(0.5, 1.0, 1.0, 1.0, 0.5, 1.0, T=1.0)
FLAT = CoxParams(0.3, 0.0, 1.0, 1.0, 0.5, 1.0, T=1.0)  # sigma1 = 0: X_t = mu t


def test_estimate_ef_wiener():
    e = estimate_ef("cox", WIENER, JumpSpec(), SimGrid(1.0, 128), 20000, 1, "continuous")
    assert abs(e.value - math.sqrt(2 / math.pi)) <= 3 * e.se


def test_estimate_ef_deterministic_path():
    e = estimate_ef("cox", FLAT, JumpSpec(), SimGrid(1.0, 16), 100, 1)
    assert e.value == pytest.approx(0.3, abs=1e-14) and e.se < 1e-14


def test_estimate_ef_seed_consistency():
    g = SimGrid(1.0, 32)
    a = estimate_ef("cox", COX_A, COX_A_SPEC, g, 10000, 1)
    b = estimate_ef("cox", COX_A, COX_A_SPEC, g, 10000, 2)
    assert abs(a.value - b.value) <= 3 * math.hypot(a.se, b.se)


def test_estimate_ef_needs_two_paths():
    with pytest.raises(ValueError):
        estimate_ef("cox", COX_A, COX_A_SPEC, SimGrid(1.0, 8), 1)


# --- closed-form Brownian integrand ----------------------------------------

def test_wiener_phi_zero_drift():
    v = wiener_phi(0.3, 0.1, 0.5, 1.0)
    assert v == pytest.approx(2 * (1 - norm.cdf(0.2 / math.sqrt(0.5))))
    assert wiener_phi(0.0, 0.0, 0.0, 1.0) == 1.0
    assert wiener_phi(0.5, 0.0, 0.0, 1.0) == 0.0


def test_wiener_phi_drift_matches_mc():
    p = CoxParams(0.8, 1.0, 1.0, 1.0, 0.5, 1.0, T=1.0)  # drift 0.3
    est = mc_first_passage("cox", p, JumpSpec(), 0.6, -np.inf, SimGrid(1.0, 64), 20000, seed=2)
    assert abs(wiener_phi(0.6, 0.0, 1.0, 1.0, 0.3) - est.value) <= 3 * est.se


# --- integrands along one path ---------------------------------------------

def test_brownian_integrand_at_horizon():
    p = simulate_hawkes_path(HAWKES_A, HAWKES_A_SPEC, SimGrid(2.0, 16), 0)
    r = brownian_integrand("hawkes", p, 16)
    assert r.value == HAWKES_A.sigma1 * float(p.x[-1] == p.m[-1])
    assert r.se == 0.0


def test_brownian_integrand_far_below_max():
    g = SimGrid(1.0, 16)
    p = simulate_cox_path(WIENER, JumpSpec(), g, 0)
    p.x[:15] = 0.0
    p.x[10] = 50.0
    p.m[:] = np.maximum.accumulate(p.x)
    r = brownian_integrand("cox", p, 12, n_inner=64)
    assert r.value == 0.0


@pytest.mark.parametrize("k", [0, 8, 12])
def test_brownian_integrand_wiener_below_formula(k):
    # the grid maximum never exceeds the continuous one, so the nested value sits under the formula
    g = SimGrid(1.0, 16)
    p = simulate_cox_path(WIENER, JumpSpec(), g, 3)
    p.key = None
    r = brownian_integrand("cox", p, k, n_inner=4000, seed=5)
    exact = wiener_phi(p.m[k], p.x[k], 1.0 - g.times[k], 1.0)
    assert r.method == "nested_mc" and r.n_inner == 4000
    assert r.value <= exact + 3 * r.se


def test_brownian_integrand_wiener_discrete_is_unbiased_for_grid_max():
    # the nested estimator targets the grid functional exactly; compare with a direct simulation
    g = SimGrid(1.0, 8)
    p = simulate_cox_path(WIENER, JumpSpec(), g, 0)
    r = brownian_integrand("cox", p, 4, n_inner=20000, seed=1)
    rng = np.random.default_rng(0)
    steps = math.sqrt(g.dt) * rng.standard_normal((200000, 4))
    tail = p.x[4] + np.cumsum(steps, axis=1)
    ref = (tail.max(axis=1) >= p.m[4]).mean()
    assert abs(r.value - ref) <= 3 * math.hypot(r.se, math.sqrt(ref * (1 - ref) / 200000))


def test_hawkes_phi_is_a_probability():
    g = SimGrid(2.0, 16)
    b = simulate_batch("hawkes", HAWKES_A, HAWKES_A_SPEC, g, 0, [0], "outer")
    ints = nested_integrands("hawkes", HAWKES_A, HAWKES_A_SPEC, g, b.x[0], b.lam[0], np.arange(16), 64, 0, 0)
    assert np.all(ints.phi_price >= 0) and np.all(ints.phi_price <= HAWKES_A.sigma1)
    assert np.all(ints.psi >= 0)  # positive jumps and a monotone cascade


def test_jump_integrand_zero_jump():
    spec = make_spec([(1, 1)], "const", 0.0)
    p = simulate_cox_path(COX_A, spec, SimGrid(1.0, 16), 0)
    out = jump_integrand("cox", p, 3, 1.0, n_inner=32, mode="both")
    assert out["closed_form"].value == 0.0 and out["nested_mc"].value == 0.0


def test_jump_integrand_at_horizon_and_outside_strip():
    p = simulate_hawkes_path(HAWKES_A, HAWKES_A_SPEC, SimGrid(2.0, 16), 0)
    assert jump_integrand("hawkes", p, 16, 0.1)["nested_mc"].value == 0.0
    out = jump_integrand("hawkes", p, 4, p.lam[4] + 1.0)
    assert out["closed_form"].value == 0.0 and out["nested_mc"].value == 0.0


def test_jump_integrand_rejects_unknown_atom():
    p = simulate_cox_path(COX_A, COX_A_SPEC, SimGrid(1.0, 16), 0)
    with pytest.raises(ValueError):
        jump_integrand("cox", p, 3, 7.0)


def test_jump_integrand_cox_nested_matches_shift_average():
    p = simulate_cox_path(COX_A, COX_A_SPEC, SimGrid(1.0, 16), 0)
    out = jump_integrand("cox", p, 5, 1.0, n_inner=512, mode="both", seed=3)
    nm = out["nested_mc"]
    assert 0.0 <= nm.value <= 0.1 + 1e-12 and nm.se >= 0 and nm.n_inner == 512
    assert out["closed_form"].method == "closed_form"


def test_tower_property_hawkes():
    # mean of E[D1 F | F_t] over outer paths equals E[D1 F] = sigma1 P(tau >= t)
    g = SimGrid(2.0, 16)
    k = 6
    b = simulate_batch("hawkes", HAWKES_A, HAWKES_A_SPEC, g, 0, range(300), "outer")
    vals = [nested_integrands("hawkes", HAWKES_A, HAWKES_A_SPEC, g, b.x[r], b.lam[r], [k], 64, 0, r).phi_price[0]
            for r in range(300)]
    glob = simulate_batch("hawkes", HAWKES_A, HAWKES_A_SPEC, g, 1, range(20000), "paths", keep_events=False)
    tau = np.argmax(glob.x == glob.M_T[:, None], axis=1)
    d1 = HAWKES_A.sigma1 * (tau >= k)
    se = math.hypot(np.std(vals, ddof=1) / math.sqrt(300), d1.std(ddof=1) / math.sqrt(d1.size))
    assert abs(np.mean(vals) - d1.mean()) <= 3 * se


# --- reconstruction ------------------------------------------------------------

def test_reconstruct_deterministic_is_exact():
    r = reconstruct("cox", FLAT, JumpSpec(), SimGrid(1.0, 16), 16, "closed_form", n_ef=16)
    assert np.allclose(r.F, 0.3, atol=1e-14)
    assert np.allclose(r.F_hat, r.F, atol=1e-14)


def test_reconstruct_wiener_closed_form():
    r = reconstruct("cox", WIENER, JumpSpec(), SimGrid(1.0, 256), 2000, "closed_form", n_ef=20000, seed=4)
    assert r.corr >= 0.99
    assert abs(r.resid_mean) <= 3 * r.resid_se
    s = r.summary()
    assert -1 <= s["corr"] <= 1 and s["sign"] == "theorem" and s["streams"]


def test_reconstruct_cox_nested_small():
    r = reconstruct("cox", COX_A, COX_A_SPEC, SimGrid(1.0, 16), 48, "nested_mc", n_inner=64, n_ef=20000, seed=6)
    assert abs(r.resid_mean) <= 3 * r.resid_se
    assert r.corr > 0.9


def test_reconstruct_hawkes_nested_small():
    r = reconstruct("hawkes", HAWKES_A, HAWKES_A_SPEC, SimGrid(2.0, 16), 48, "nested_mc", n_inner=64,
                    n_ef=20000, seed=6)
    assert abs(r.resid_mean) <= 3 * r.resid_se
    assert r.corr > 0.9


def test_reconstruct_sign_validation():
    with pytest.raises(ValueError):
        reconstruct("cox", COX_A, COX_A_SPEC, SimGrid(1.0, 4), 2, sign_convention="plus")


def test_reconstruct_signs_differ_only_in_intensity_term():
    g = SimGrid(1.0, 8)
    a = reconstruct("cox", COX_A, COX_A_SPEC, g, 8, n_inner=16, n_ef=100, sign_convention="theorem")
    b = reconstruct("cox", COX_A, COX_A_SPEC, g, 8, n_inner=16, n_ef=100, sign_convention="raw")
    assert np.array_equal(a.F, b.F)
    assert not np.array_equal(a.F_hat, b.F_hat)


def test_reconstruct_independent_of_workers():
    g = SimGrid(1.0, 8)
    a = reconstruct("cox", COX_A, COX_A_SPEC, g, 20, n_inner=8, n_ef=100, workers=1)
    b = reconstruct("cox", COX_A, COX_A_SPEC, g, 20, n_inner=8, n_ef=100, workers=3)
    assert np.array_equal(a.F_hat, b.F_hat)


# --- hedge table -----------------------------------------------------------------

def test_hedge_table_deterministic_path():
    tab = hedge_table("cox", FLAT, JumpSpec(), SimGrid(1.0, 8), n_inner=8)
    assert tab.shape == (9, 3)
    assert np.all(tab[:, 1] == 0.0)


def test_hedge_table_hawkes_bounds():
    tab = hedge_table("hawkes", HAWKES_A, HAWKES_A_SPEC, SimGrid(2.0, 16), n_inner=32)
    assert np.all((tab[:, 1] >= 0) & (tab[:, 1] <= HAWKES_A.sigma1))
    assert np.allclose(tab[:, 0], np.linspace(0, 2, 17))


def test_hedge_phi_vanishes_far_below_max():
    # Gaussian tail bound: P(sup of remaining motion >= 5 sigma sqrt(h)) <= 2 (1 - Phi(5))
    g = SimGrid(1.0, 32)
    b = simulate_batch("cox", WIENER, JumpSpec(), g, 0, [0], "outer")
    x = b.x[0].copy()
    k = 28
    x[k - 1] = x[k] + 6 * math.sqrt(1.0 - g.times[k])
    ints = closed_form_integrands("cox", WIENER, JumpSpec(), g, x, b.lam[0], [k])
    assert ints.phi_price[0] <= 2 * norm.sf(5.0)


def test_wiener_phi_without_noise():
    assert np.all(wiener_phi([0.5, 0.0], [0.0, 0.0], 1.0, 0.0, 0.3) == 0.0)

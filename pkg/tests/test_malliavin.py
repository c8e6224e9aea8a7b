import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxrep.malliavin import (IntensityHitZero, c_sigma, d1_lambda_cir, d1_lambda_rows, d1_max_cox,
                              d1_max_cox_rows, d1_max_hawkes, d2_from_perturbed, d2_max_cox,
                              d2_max_hawkes, d2_max_shift, d2_pert_rows, d2_shift_rows,
                              tau_after_rows)
from maxrep.model import (COX_A, COX_A_SPEC, HAWKES_A, HAWKES_A_SPEC, HawkesParams, SimGrid,
                          make_spec, mu_bar)
from maxrep.paths import SimPath, insert_event_cascade, simulate_cox_path, simulate_hawkes_path


def _const_path(lam_value, n=64, T=1.0, params=COX_A):
    g = SimGrid(T, n)
    z = np.zeros(n)
    x = np.zeros(n + 1)
    return SimPath(g, "cox", z, z, np.full(n + 1, lam_value), x, x.copy(), 0, [], np.zeros(n + 1),
                   z, np.zeros((n, 1)), params=params, spec=COX_A_SPEC)


def test_c_sigma_hand_value():
    assert c_sigma(COX_A) == pytest.approx(2 * 1 / 2 - 0.25 / 8)
    assert c_sigma(COX_A) == 0.96875


def test_d1_lambda_empty_integral():
    p = simulate_cox_path(COX_A, COX_A_SPEC, SimGrid(1.0, 32), 0)
    for k in (0, 7, 32):
        assert d1_lambda_cir(p, k, k) == pytest.approx(0.5 * math.sqrt(p.lam[k]))
    assert d1_lambda_cir(p, 9, 3) == 0.0


def test_d1_lambda_constant_intensity():
    # lam = 1 on [0, 1]: 0.5 exp(-(kappa/2 + C) * 1)
    v = d1_lambda_cir(_const_path(1.0), 0, 64)
    assert v == pytest.approx(0.5 * math.exp(-(1.0 + 0.96875)), rel=1e-12)
    assert v == pytest.approx(0.069815, abs=1e-6)


def test_d1_lambda_floor():
    path = _const_path(0.0)
    with pytest.raises(IntensityHitZero):
        d1_lambda_cir(path, 0, 10)
    assert d1_lambda_cir(path, 0, 10, clamp=True) >= 0.0
    with pytest.raises(IntensityHitZero):
        d1_lambda_rows(path.lam[None, :], 0, COX_A, path.grid.dt)


def test_d1_lambda_rows_match_scalar():
    p = simulate_cox_path(COX_A, COX_A_SPEC, SimGrid(1.0, 32), 2)
    rows = d1_lambda_rows(p.lam[None, :], 5, COX_A, p.grid.dt)[0]
    for t in range(33):
        assert rows[t] == pytest.approx(d1_lambda_cir(p, 5, t) if t >= 5 else 0.0, rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_d1_lambda_decreasing_in_lag(seed):
    p = simulate_cox_path(COX_A, COX_A_SPEC, SimGrid(1.0, 64), seed)
    t = 64
    vals = [d1_lambda_cir(p, s, t) for s in range(t + 1)]
    assert min(vals) >= 0
    assert np.all(np.diff(vals) >= 0)  # shorter lag (larger s) gives a larger value


def test_d1_max_cox_indicator_and_zero_jump():
    p = simulate_cox_path(COX_A, COX_A_SPEC, SimGrid(1.0, 64), 3)
    for t in range(p.tau_idx, 65):
        assert d1_max_cox(p, COX_A_SPEC, t) == 0.0
    nojump = make_spec([(1, 1)], "const", 0.0)
    assert all(d1_max_cox(p, nojump, t) == 0.0 for t in range(65))


def _brute_d1_max(path, spec, t):
    """Explicit-loop trapezoid of mu_bar * D_t lambda_s over [t, tau]."""
    dt = path.grid.dt
    total = 0.0
    prev = None
    for s in range(t, path.tau_idx + 1):
        f = mu_bar(spec, path.grid.times[s]) * d1_lambda_cir(path, t, s)
        if prev is not None:
            total += 0.5 * (f + prev) * dt
        prev = f
    return total


@pytest.mark.parametrize("seed", range(4))
def test_d1_max_cox_matches_brute_force(seed):
    p = simulate_cox_path(COX_A, COX_A_SPEC, SimGrid(1.0, 1024), seed)
    for t in (0, p.tau_idx // 2):
        assert d1_max_cox(p, COX_A_SPEC, t) == pytest.approx(_brute_d1_max(p, COX_A_SPEC, t), abs=1e-6)


def test_d1_max_cox_refinement_is_order_dt():
    # sigma2 = 0: deterministic intensity, so refinement changes only the quadrature
    lam = lambda t: 1 - 0.5 * np.exp(-2 * t)
    vals = []
    for n in (64, 128, 256):
        g = SimGrid(1.0, n)
        x = np.linspace(0, 1, n + 1)  # increasing path: tau = T
        path = SimPath(g, "cox", np.zeros(n), np.zeros(n), lam(g.times), x, x, n, [], np.zeros(n + 1),
                       np.zeros(n), np.zeros((n, 1)), params=COX_A, spec=COX_A_SPEC)
        vals.append(d1_max_cox(path, COX_A_SPEC, 0))
    d1, d2 = abs(vals[1] - vals[0]), abs(vals[2] - vals[1])
    assert d2 < 0.6 * d1


def test_d1_max_cox_rows_match_scalar():
    p = simulate_cox_path(COX_A, COX_A_SPEC, SimGrid(1.0, 32), 5)
    starts = np.arange(33)
    rows = d1_max_cox_rows(np.repeat(p.x[None], 33, 0), np.repeat(p.lam[None], 33, 0), starts, COX_A,
                           COX_A_SPEC, p.grid.dt)
    for t in starts:
        assert rows[t] == pytest.approx(d1_max_cox(p, COX_A_SPEC, t), rel=1e-12, abs=1e-15)


def test_d1_max_hawkes_scan():
    p = simulate_hawkes_path(HAWKES_A, HAWKES_A_SPEC, SimGrid(2.0, 64), 1)
    assert d1_max_hawkes(p, 0) == HAWKES_A.sigma1
    for t in range(65):
        assert d1_max_hawkes(p, t) == (HAWKES_A.sigma1 if t <= p.tau_idx else 0.0)


def test_tau_after_rows():
    x = np.array([[0, 2, 1, 2], [3, 1, 1, 0]], dtype=float)
    fires, tau = tau_after_rows(x, np.array([0, 0]))
    assert list(fires) == [True, False]
    assert tau[0] == 1


# --- D2 ----------------------------------------------------------------------

def _brute_shift(x, t, jump):
    z = np.array(x, dtype=float)
    z[t + 1:] = z[t + 1:] + jump
    return z.max() - np.max(x)


def test_d2_trivial_cases():
    x = np.array([0.0, 1.0, 0.5, 0.2])
    assert d2_max_shift(x, 1, 0.0) == 0.0
    assert d2_max_shift(x, 0, -10.0) == 0.0 - 1.0
    assert d2_max_shift(x, 3, 5.0) == 0.0


@settings(max_examples=300, deadline=None)
@given(x=st.lists(st.floats(-100, 100), min_size=2, max_size=40), j=st.floats(-5, 5), data=st.data())
def test_d2_shift_equals_perturb_and_rescan(x, j, data):
    t = data.draw(st.integers(0, len(x) - 1))
    assert d2_max_shift(x, t, j) == _brute_shift(x, t, j)
    assert d2_shift_rows(np.array([x]), np.array([t]), j)[0] == _brute_shift(x, t, j)
    assert d2_max_shift(x, t, j) >= -(max(x) - max(x[:t + 1]))
    assert abs(d2_max_shift(x, t, j)) <= abs(j) + 1e-13 * (1 + max(map(abs, x)))


def test_d2_max_cox_uses_atom_jump():
    p = simulate_cox_path(COX_A, COX_A_SPEC, SimGrid(1.0, 32), 0)
    assert d2_max_cox(p, 4, 1.0) == _brute_shift(p.x, 4, 0.1)


def test_d2_hawkes_outside_strip_is_zero():
    p = simulate_hawkes_path(HAWKES_A, HAWKES_A_SPEC, SimGrid(2.0, 32), 0)
    assert d2_max_hawkes(p, 5, p.lam[5] * 1.01) == 0.0


def test_d2_hawkes_without_excitation_is_shift():
    hp = HawkesParams(0.05, 0.2, 1.0, 0.5, 0.0, 0.5, T=2.0)
    p = simulate_hawkes_path(hp, HAWKES_A_SPEC, SimGrid(2.0, 32), 4)
    for k in (0, 10, 31):
        assert d2_max_hawkes(p, k, 0.5 * p.lam[k]) == pytest.approx(d2_max_shift(p.x, k, 0.3), abs=1e-14)


@pytest.mark.parametrize("seed", range(8))
def test_d2_hawkes_nonnegative_and_rescan(seed):
    p = simulate_hawkes_path(HAWKES_A, HAWKES_A_SPEC, SimGrid(2.0, 32), seed)
    for k in (0, 8, 20):
        pert = insert_event_cascade(p, float(p.grid.times[k]), 0.9 * p.lam[k])
        v = d2_from_perturbed(p.x, pert.z_path, k)
        assert v >= 0
        assert v == pert.z_path.max() - p.x.max()
        cascade = sum(abs(e.jump_applied) for e in pert.new_events)
        assert v <= cascade + 1e-12
        assert d2_pert_rows(p.x[None], pert.z_path[None], np.array([k]))[0] == v

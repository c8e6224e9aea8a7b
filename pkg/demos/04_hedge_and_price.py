"""Hedge ratios along one path and lookback prices.

Prints the Brownian integrand phi and the jump-weighted integrand along one
realised Hawkes path, then Monte Carlo prices of fixed- and floating-strike
lookbacks on S = s0 exp(X).
"""
from maxrep.clark_ocone import hedge_table
from maxrep.model import COX_A, COX_A_SPEC, HAWKES_A, HAWKES_A_SPEC, SimGrid
from maxrep.paths import simulate_hawkes_path
from maxrep.pricing import price_lookback

grid = SimGrid(2.0, 16)
path = simulate_hawkes_path(HAWKES_A, HAWKES_A_SPEC, grid, seed=0, family="outer")
tab = hedge_table("hawkes", HAWKES_A, HAWKES_A_SPEC, grid, path_id=0, seed=0, n_inner=256)
print("   t      X      M     phi   psi_w")
for (t, phi, psi), x, m in zip(tab, path.x, path.m):
    print(f"{t:5.2f} {x:+.3f} {m:+.3f}  {phi:.3f}  {psi:.3f}")
print("phi drops to zero once the path sits far below its running maximum near expiry.")

for model, params, spec in (("cox", COX_A, COX_A_SPEC), ("hawkes", HAWKES_A, HAWKES_A_SPEC)):
    g = SimGrid(params.T, 64)
    for payoff in ("fixed", "floating"):
        p = price_lookback(model, params, spec, g, 20_000, seed=2, payoff=payoff, strike=1.0)
        print(f"{model:6s} {payoff:8s} lookback price {p.price:.4f} +/- {p.se:.4f}")

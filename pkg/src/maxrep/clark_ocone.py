"""Clark-Ocone representation of the running maximum: integrands and reconstruction.

For ``F = M_T`` (the grid maximum of the log-price) we estimate

* ``E[F]`` from fresh paths,
* the Brownian integrands ``E[D1 F | F_t]`` (price Brownian motion, and for the
  Cox model also the intensity Brownian motion),
* the jump integrand ``E[D2_{t,z} F | F_t]``,

either by nested Monte Carlo (continuations branched from each grid node) or
by the closed forms, then rebuild ``F`` path by path as
``E[F] + sum phi dW + sum psi (dN - compensator)`` and study the residual.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .first_passage import (AlphaConstants, ExitTimeQuery, alpha_constants_cox,
                            alpha_constants_hawkes, psi_jump, tail_supX_hawkes)
from .malliavin import d1_max_cox_rows, d2_pert_rows, d2_shift_rows, tau_after_rows
from .model import CoxParams, HawkesParams, JumpSpec, SimGrid
from .paths import (PathBatch, SimPath, batch_bridge_sup, continue_cox, continue_hawkes,
                    simulate_batch)

CHUNK = 8          # outer paths per work unit; fixed so results never depend on worker count
START_BLOCK = 32   # grid nodes branched together in the nested estimators
SIGNS = {"theorem": -1.0, "raw": 1.0}


@dataclass(frozen=True)
class IntegrandEstimate:
    t: float
    value: float
    se: float
    method: str
    z: float | None = None
    n_inner: int = 0


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float


def _is_jump_free(model: str, spec: JumpSpec) -> bool:
    if model == "cox":
        return not spec.enabled or spec.const_jump() == 0.0
    return spec.const_jump() == 0.0


# ---------------------------------------------------------------------------
# E[F]


def estimate_ef(model: str, params, spec: JumpSpec, grid: SimGrid, n_paths: int, seed: int = 0,
                monitoring: str = "discrete", family: str = "ef", chunk: int = 4096) -> Estimate:
    """Sample mean of ``M_T`` over fresh paths.

    ``monitoring="discrete"`` uses the grid maximum (the functional reconstructed
    by :func:`reconstruct`); ``"continuous"`` samples the exact Brownian-bridge
    maximum inside each cell.
    """
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2")
    vals = np.empty(n_paths)
    for lo in range(0, n_paths, chunk):
        ids = range(lo, min(lo + chunk, n_paths))
        b = simulate_batch(model, params, spec, grid, seed, ids, family)
        vals[lo:lo + len(ids)] = batch_bridge_sup(b, params.sigma1) if monitoring == "continuous" else b.M_T
    return Estimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n_paths)))


# ---------------------------------------------------------------------------
# Closed-form integrands


def wiener_phi(m_t, x_t, horizon, sigma: float, drift: float = 0.0):
    """``sigma * P(sup_{[0,h]} (drift s + sigma B_s) >= M_t - X_t)`` for drifted Brownian motion.

    With zero drift this is ``2 sigma (1 - Phi((M_t - X_t) / (sigma sqrt h)))``.
    """
    m = np.maximum(np.asarray(m_t, dtype=float) - np.asarray(x_t, dtype=float), 0.0)
    h = np.asarray(horizon, dtype=float)
    if sigma == 0.0:
        return np.zeros(np.broadcast(m, h).shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        sq = sigma * np.sqrt(h)
        if drift == 0.0:
            p = 2.0 * norm.sf(m / sq)
        else:
            p = norm.sf((m - drift * h) / sq) + np.exp(2.0 * drift * m / sigma ** 2) * norm.cdf((-m - drift * h) / sq)
    p = np.where(h > 0, p, (m == 0).astype(float))
    return sigma * np.clip(p, 0.0, 1.0)


def _consts(model, params, spec) -> AlphaConstants:
    return alpha_constants_hawkes(params, spec) if model == "hawkes" else alpha_constants_cox(params, spec)


# ---------------------------------------------------------------------------
# Nested Monte Carlo integrands along one outer path


@dataclass
class PathIntegrands:
    """Integrands at every grid node ``t_0 .. t_{n-1}`` of one outer path."""

    phi_price: np.ndarray
    phi_intensity: np.ndarray
    psi: np.ndarray            # (n, A) per Cox atom, (n, 1) for Hawkes
    phi_price_se: np.ndarray
    phi_intensity_se: np.ndarray
    psi_se: np.ndarray


def _group_stats(v, n_starts, n_inner):
    v = v.reshape(n_starts, n_inner, *v.shape[1:])
    return v.mean(axis=1), v.std(axis=1, ddof=1) / math.sqrt(n_inner)


def nested_integrands(model: str, params, spec: JumpSpec, grid: SimGrid, x, lam, starts,
                      n_inner: int, seed: int, path_id: int, family: str = "outer",
                      clamp: bool = False) -> PathIntegrands:
    starts = np.asarray(starts, dtype=int)
    S = starts.size
    A = max(len(spec.atoms), 1) if model == "cox" else 1
    out = PathIntegrands(np.zeros(S), np.zeros(S), np.zeros((S, A)), np.zeros(S), np.zeros(S), np.zeros((S, A)))
    times = grid.times
    for lo in range(0, S, START_BLOCK):
        blk = starts[lo:lo + START_BLOCK]
        sl = slice(lo, lo + blk.size)
        if model == "cox":
            c = continue_cox(params, spec, grid, x, lam, blk, n_inner, seed, path_id, family)
        else:
            c = continue_hawkes(params, spec, grid, x, lam, blk, n_inner, seed, path_id, family)
        fires, _ = tau_after_rows(c.x, c.start)
        out.phi_price[sl], out.phi_price_se[sl] = _group_stats(params.sigma1 * fires, blk.size, n_inner)
        if model == "cox":
            if spec.enabled:
                d1 = d1_max_cox_rows(c.x, c.lam, c.start, params, spec, grid.dt, clamp=clamp)
                out.phi_intensity[sl], out.phi_intensity_se[sl] = _group_stats(d1, blk.size, n_inner)
                jumps = np.stack([np.asarray(spec.J(times[c.start], z), dtype=float) * np.ones(c.start.size)
                                  for z in spec.marks], axis=1)
                d2 = np.stack([d2_shift_rows(c.x, c.start, jumps[:, a]) for a in range(A)], axis=1)
                out.psi[sl], out.psi_se[sl] = _group_stats(d2, blk.size, n_inner)
        else:
            d2 = d2_pert_rows(c.x, c.x_pert, c.start)[:, None]
            out.psi[sl], out.psi_se[sl] = _group_stats(d2, blk.size, n_inner)
    return out


def closed_form_integrands(model: str, params, spec: JumpSpec, grid: SimGrid, x, lam,
                           starts, n_inner: int = 0, seed: int = 0, path_id: int = 0,
                           family: str = "outer", clamp: bool = False) -> PathIntegrands:
    """Closed-form integrands.

    Jump-free paths use the drifted-Brownian maximum formula. Hawkes uses the
    exponential-tilt tails for both integrands; Cox has no closed form for the
    Brownian integrands, so those fall back to nested Monte Carlo.
    """
    starts = np.asarray(starts, dtype=int)
    S = starts.size
    times = grid.times
    m = np.maximum.accumulate(np.asarray(x, dtype=float))
    if _is_jump_free(model, spec):
        drift = params.mu - 0.5 * params.sigma1 ** 2
        phi = wiener_phi(m[starts], x[starts], grid.T - times[starts], params.sigma1, drift)
        A = max(len(spec.atoms), 1) if model == "cox" else 1
        z = np.zeros(S)
        return PathIntegrands(phi, z, np.zeros((S, A)), z.copy(), z.copy(), np.zeros((S, A)))
    consts = _consts(model, params, spec)
    if model == "hawkes":
        phi = np.empty(S)
        psi = np.empty((S, 1))
        J = consts.J
        for i, k in enumerate(starts):
            q = ExitTimeQuery(times[k], grid.T, x[k], lam[k], m_t=m[k], b=m[k])
            phi[i] = params.sigma1 * tail_supX_hawkes(q, consts).value
            psi[i, 0] = psi_jump("hawkes", q, consts, J)
        z = np.zeros(S)
        return PathIntegrands(phi, z, psi, z.copy(), z.copy(), np.zeros_like(psi))
    out = nested_integrands(model, params, spec, grid, x, lam, starts, n_inner, seed, path_id, family, clamp)
    for i, k in enumerate(starts):
        q = ExitTimeQuery(times[k], grid.T, x[k], lam[k], m_t=m[k])
        for a, zz in enumerate(spec.marks):
            out.psi[i, a] = psi_jump("cox", q, consts, float(spec.J(times[k], zz)))
    out.psi_se[:] = 0.0
    return out


# ---------------------------------------------------------------------------
# Single integrand queries


def _check_t(path: SimPath, t_idx: int) -> None:
    if not 0 <= t_idx <= path.grid.n_steps:
        raise IndexError("t_idx outside the grid")


def brownian_integrand(model: str, path: SimPath, t_idx: int, n_inner: int = 256, seed: int = 0,
                       which: str = "price", params=None, spec=None, method: str = "nested_mc",
                       clamp: bool = False) -> IntegrandEstimate:
    """``E[D1 F | F_t]`` at one node of ``path``.

    ``which="price"`` is the integrand against the price Brownian motion
    (``sigma1 P(tau >= t | F_t)``); ``which="intensity"`` is the Cox
    intensity-Brownian integrand, returned as a magnitude.
    """
    params = params or path.params
    spec = spec or path.spec
    _check_t(path, t_idx)
    grid = path.grid
    t = float(grid.times[t_idx])
    if t_idx == grid.n_steps:
        if which == "price":
            return IntegrandEstimate(t, params.sigma1 * float(path.x[-1] == path.m[-1]), 0.0, "exact")
        return IntegrandEstimate(t, 0.0, 0.0, "exact")
    pid = path.key.path_id if path.key else 0
    fn = closed_form_integrands if method == "closed_form" else nested_integrands
    r = fn(model, params, spec, grid, path.x, path.lam, [t_idx], n_inner, seed, pid, clamp=clamp)
    if which == "price":
        return IntegrandEstimate(t, float(r.phi_price[0]), float(r.phi_price_se[0]), method, n_inner=n_inner)
    return IntegrandEstimate(t, float(r.phi_intensity[0]), float(r.phi_intensity_se[0]), method, n_inner=n_inner)


def jump_integrand(model: str, path: SimPath, t_idx: int, z: float, n_inner: int = 256, seed: int = 0,
                   mode: str = "both", params=None, spec=None) -> dict[str, IntegrandEstimate]:
    """``E[D2_{t,z} F | F_t]`` by closed form, nested Monte Carlo, or both.

    For Hawkes, ``z`` is an ordinate: marks above ``lam_t`` give zero.
    """
    params = params or path.params
    spec = spec or path.spec
    _check_t(path, t_idx)
    grid = path.grid
    t = float(grid.times[t_idx])
    out: dict[str, IntegrandEstimate] = {}
    if t_idx == grid.n_steps:
        for name in ("closed_form", "nested_mc"):
            if mode in (name, "both"):
                out[name] = IntegrandEstimate(t, 0.0, 0.0, name, z)
        return out
    if model == "cox":
        atoms = list(spec.marks)
        if z not in atoms:
            raise ValueError(f"z={z} is not an atom of the mark measure")
        a = atoms.index(z)
        jump = float(spec.J(t, z))
    else:
        inside = 0.0 < z <= path.lam[t_idx]
        a = 0
        jump = float(spec.J(t, 1.0)) if inside else 0.0
    pid = path.key.path_id if path.key else 0
    if mode in ("closed_form", "both"):
        if jump == 0.0:
            out["closed_form"] = IntegrandEstimate(t, 0.0, 0.0, "closed_form", z)
        else:
            q = ExitTimeQuery(t, grid.T, path.x[t_idx], path.lam[t_idx], m_t=path.m[t_idx])
            out["closed_form"] = IntegrandEstimate(t, psi_jump(model, q, _consts(model, params, spec), jump),
                                                   0.0, "closed_form", z)
    if mode in ("nested_mc", "both"):
        if jump == 0.0:
            out["nested_mc"] = IntegrandEstimate(t, 0.0, 0.0, "nested_mc", z, n_inner)
        else:
            r = nested_integrands(model, params, spec, grid, path.x, path.lam, [t_idx], n_inner, seed, pid)
            out["nested_mc"] = IntegrandEstimate(t, float(r.psi[0, a]), float(r.psi_se[0, a]),
                                                 "nested_mc", z, n_inner)
    return out


# ---------------------------------------------------------------------------
# Reconstruction


@dataclass
class ClarkOconeReport:
    model: str
    ef_hat: float
    ef_se: float
    F: np.ndarray
    F_hat: np.ndarray
    sign_convention: str
    integrand_mode: str
    n_steps: int
    n_paths: int
    n_inner: int
    n_ef: int
    seed: int
    stream_families: dict = field(default_factory=dict)

    @property
    def residual(self) -> np.ndarray:
        return self.F - self.F_hat

    @property
    def resid_mean(self) -> float:
        return float(self.residual.mean())

    @property
    def resid_var(self) -> float:
        return float(self.residual.var(ddof=1))

    @property
    def resid_se(self) -> float:
        """Standard error of the mean residual, including the error of ``ef_hat``."""
        return float(math.sqrt(self.resid_var / self.n_paths + self.ef_se ** 2))

    @property
    def corr(self) -> float:
        if np.std(self.F) == 0 or np.std(self.F_hat) == 0:
            return 1.0 if np.allclose(self.F, self.F_hat) else 0.0
        return float(np.corrcoef(self.F, self.F_hat)[0, 1])

    def summary(self) -> dict:
        return {
            "model": self.model, "ef_hat": self.ef_hat, "se": self.ef_se,
            "resid_mean": self.resid_mean, "resid_se": self.resid_se, "resid_var": self.resid_var,
            "corr": self.corr, "sign": self.sign_convention, "mode": self.integrand_mode,
            "n_steps": self.n_steps, "n_paths": self.n_paths, "n_inner": self.n_inner,
            "n_ef": self.n_ef, "seed": self.seed, "streams": self.stream_families,
        }


def stochastic_integrals(batch: PathBatch, r: int, ints: PathIntegrands, spec: JumpSpec,
                         sign: float) -> float:
    """``sum phi dW + sum psi (dN - compensator)`` along row ``r`` of ``batch``."""
    total = float(np.dot(ints.phi_price, batch.w_s_incr[r]))
    if batch.model == "cox":
        if batch.w_incr is not None:
            total += sign * float(np.dot(ints.phi_intensity, batch.w_incr[r]))
        if spec.enabled:
            expected = batch.comp[r][:, None] * spec.weights[None, :]
            total += float(np.sum(ints.psi * (batch.counts[r] - expected)))
    else:
        total += float(np.sum(ints.psi[:, 0] * (batch.counts[r][:, 0] - batch.comp[r])))
    return total


def _reconstruct_chunk(args):
    model, params, spec, grid, ids, mode, sign, n_inner, seed, clamp = args
    batch = simulate_batch(model, params, spec, grid, seed, ids, "outer")
    starts = np.arange(grid.n_steps)
    fn = closed_form_integrands if mode == "closed_form" else nested_integrands
    F = batch.M_T
    I = np.empty(len(ids))
    for r, pid in enumerate(ids):
        ints = fn(model, params, spec, grid, batch.x[r], batch.lam[r], starts, n_inner, seed, pid,
                  "outer", clamp)
        I[r] = stochastic_integrals(batch, r, ints, spec, sign)
    return F, I


def reconstruct(model: str, params, spec: JumpSpec, grid: SimGrid, n_paths: int,
                integrand_mode: str = "nested_mc", sign_convention: str = "theorem",
                n_inner: int = 256, n_ef: int | None = None, seed: int = 0, workers: int = 1,
                clamp: bool = False) -> ClarkOconeReport:
    """Rebuild ``M_T`` on fresh paths from its mean and estimated integrands.

    ``sign_convention`` applies to the Cox intensity-Brownian term only:
    ``"theorem"`` subtracts it, ``"raw"`` adds it.
    """
    if sign_convention not in SIGNS:
        raise ValueError(f"sign_convention must be one of {sorted(SIGNS)}")
    n_ef = n_paths if n_ef is None else n_ef
    ef = estimate_ef(model, params, spec, grid, n_ef, seed, "discrete", "ef")
    sign = SIGNS[sign_convention]
    jobs = [(model, params, spec, grid, list(range(lo, min(lo + CHUNK, n_paths))), integrand_mode,
             sign, n_inner, seed, clamp) for lo in range(0, n_paths, CHUNK)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_reconstruct_chunk, jobs))
    else:
        parts = [_reconstruct_chunk(j) for j in jobs]
    F = np.concatenate([p[0] for p in parts])
    I = np.concatenate([p[1] for p in parts])
    return ClarkOconeReport(model, ef.value, ef.se, F, ef.value + I, sign_convention, integrand_mode,
                            grid.n_steps, n_paths, n_inner, n_ef, seed,
                            {"ef": "ef", "outer": "outer", "inner": "outer/inner"})


def hedge_table(model: str, params, spec: JumpSpec, grid: SimGrid, path_id: int = 0, seed: int = 0,
                n_inner: int = 256, mode: str = "nested_mc", clamp: bool = False) -> np.ndarray:
    """Integrands along one realised path: columns ``t, phi, psi_weighted``.

    ``phi`` is the price-Brownian integrand; ``psi_weighted`` integrates the jump
    integrand against the mark measure (Cox: ``sum_z psi w_z``; Hawkes:
    ``psi * lam_t``, the accepted strip).
    """
    batch = simulate_batch(model, params, spec, grid, seed, [path_id], "outer")
    starts = np.arange(grid.n_steps + 1)
    inner = starts[:-1]
    fn = closed_form_integrands if mode == "closed_form" else nested_integrands
    ints = fn(model, params, spec, grid, batch.x[0], batch.lam[0], inner, n_inner, seed, path_id, "outer", clamp)
    phi = np.append(ints.phi_price, params.sigma1 * float(batch.x[0, -1] == batch.x[0].max()))
    if model == "cox":
        w = spec.weights if spec.enabled else np.zeros(ints.psi.shape[1])
        psi_w = ints.psi @ w
    else:
        psi_w = ints.psi[:, 0] * batch.lam[0, :-1]
    psi_w = np.append(psi_w, 0.0)
    return np.column_stack([grid.times, phi, psi_w])

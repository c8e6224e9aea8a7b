"""Pathwise Malliavin derivatives of the intensity and of the running maximum.

``D1`` is the derivative in the direction of a Brownian motion, ``D2`` the
difference operator for inserting a jump at ``(t, z)``. All functions act on a
single :class:`~maxrep.paths.SimPath`; the ``*_rows`` helpers are the
vectorised kernels reused by the nested Monte Carlo estimators.
"""
from __future__ import annotations

import numpy as np

from .model import CoxParams, JumpSpec, mu_bar
from .paths import PoissonStrip, SimPath, insert_event_cascade

LAMBDA_FLOOR = 1e-12


class IntensityHitZero(FloatingPointError):
    pass


def c_sigma(params: CoxParams) -> float:
    return params.kappa * params.theta / 2.0 - params.sigma2 ** 2 / 8.0


def _cumtrapz(y, dt, axis=-1):
    y = np.moveaxis(y, axis, -1)
    out = np.zeros_like(y)
    out[..., 1:] = np.cumsum(0.5 * (y[..., 1:] + y[..., :-1]) * dt, axis=-1)
    return np.moveaxis(out, -1, axis)


def d1_lambda_rows(lam, start, params: CoxParams, dt: float, clamp: bool = False,
                   floor: float = LAMBDA_FLOOR) -> np.ndarray:
    """``D_{t_start} lambda_s`` for every node ``s >= start`` of each row (zero before)."""
    lam = np.atleast_2d(np.asarray(lam, dtype=float))
    start = np.broadcast_to(np.asarray(start), (lam.shape[0],))
    after = np.arange(lam.shape[1])[None, :] >= start[:, None]
    if np.any((lam <= floor) & after):
        if not clamp:
            raise IntensityHitZero("intensity reached the floor on the integration range")
        lam = np.maximum(lam, floor)
    g = np.where(after, params.kappa / 2.0 + c_sigma(params) / np.where(after, lam, 1.0), 0.0)
    # G[j] - G[start] is the trapezoid integral over [t_start, t_j]
    G = _cumtrapz(g, dt)
    G = np.where(after, G - G[np.arange(lam.shape[0]), start][:, None], 0.0)
    return np.where(after, params.sigma2 * np.sqrt(lam) * np.exp(-G), 0.0)


def d1_lambda_cir(path: SimPath, s_idx: int, t_idx: int, params: CoxParams | None = None,
                  clamp: bool = False, floor: float = LAMBDA_FLOOR) -> float:
    """``D_s lambda_t = sigma2 sqrt(lam_t) exp(-int_s^t (kappa/2 + C/lam_r) dr)`` by trapezoid."""
    params = params or path.params
    if s_idx > t_idx:
        return 0.0
    seg = np.asarray(path.lam[s_idx:t_idx + 1], dtype=float)
    if np.any(seg <= floor):
        if not clamp:
            raise IntensityHitZero(f"lambda <= {floor} on [{s_idx}, {t_idx}]")
        seg = np.maximum(seg, floor)
    g = params.kappa / 2.0 + c_sigma(params) / seg
    integral = np.trapezoid(g, dx=path.grid.dt) if seg.size > 1 else 0.0
    return float(params.sigma2 * np.sqrt(seg[-1]) * np.exp(-integral))


def tau_after_rows(x, start):
    """Per row: whether the first argmax of the whole row lies after ``start``, and its index."""
    x = np.atleast_2d(x)
    R, n1 = x.shape
    start = np.broadcast_to(np.asarray(start), (R,))
    cols = np.arange(n1)[None, :]
    head = np.where(cols <= start[:, None], x, -np.inf).max(axis=1)
    tail_x = np.where(cols > start[:, None], x, -np.inf)
    tail = tail_x.max(axis=1)
    tau = np.argmax(tail_x == tail[:, None], axis=1)
    return tail >= head, tau


def d1_max_cox_rows(x, lam, start, params: CoxParams, spec: JumpSpec, dt: float,
                    clamp: bool = False) -> np.ndarray:
    """``1{tau >= t} int_t^tau mu_bar_s D_t lambda_s ds`` per row, trapezoid on nodes."""
    x = np.atleast_2d(x)
    R, n1 = x.shape
    start = np.broadcast_to(np.asarray(start), (R,))
    fires, tau = tau_after_rows(x, start)
    if not np.any(fires):
        return np.zeros(R)
    times = np.arange(n1) * dt
    mub = np.array([mu_bar(spec, s) for s in times])
    D = d1_lambda_rows(lam, start, params, dt, clamp=clamp)
    A = _cumtrapz(mub[None, :] * D, dt)
    A = A - A[np.arange(R), start][:, None]
    val = A[np.arange(R), tau]
    return np.where(fires, val, 0.0)


def d1_max_cox(path: SimPath, spec: JumpSpec | None, t_idx: int, params: CoxParams | None = None,
               clamp: bool = False) -> float:
    """Magnitude of the intensity-Brownian derivative of ``M_T``; the caller applies the sign."""
    params = params or path.params
    spec = spec or path.spec
    tau = path.tau_idx
    if tau <= t_idx:
        return 0.0
    D = d1_lambda_rows(path.lam[None, :], t_idx, params, path.grid.dt, clamp=clamp)[0]
    mub = np.array([mu_bar(spec, s) for s in path.grid.times])
    A = _cumtrapz(mub * D, path.grid.dt)
    return float(A[tau] - A[t_idx])


def d1_max_hawkes(path: SimPath, t_idx: int, sigma1: float | None = None) -> float:
    sigma1 = path.params.sigma1 if sigma1 is None else sigma1
    return float(sigma1) if t_idx <= path.tau_idx else 0.0


def d2_max_shift(x, t_idx: int, jump: float) -> float:
    """``max{M_t, max_{s>t} x_s + jump} - M_T`` on one path."""
    x = np.asarray(x, dtype=float)
    M_T = x.max()
    if t_idx >= x.size - 1:
        return 0.0
    return float(max(x[:t_idx + 1].max(), x[t_idx + 1:].max() + jump) - M_T)


def d2_max_cox(path: SimPath, t_idx: int, z: float, spec: JumpSpec | None = None) -> float:
    spec = spec or path.spec
    J = float(spec.J(path.grid.times[t_idx], z))
    return d2_max_shift(path.x, t_idx, J)


def d2_max_hawkes(base: SimPath, t_idx: int, z: float, rng_replay: PoissonStrip | None = None) -> float:
    pert = insert_event_cascade(base, float(base.grid.times[t_idx]), z, rng_replay)
    return d2_from_perturbed(base.x, pert.z_path, t_idx)


def d2_from_perturbed(x, z_path, t_idx: int) -> float:
    x = np.asarray(x)
    if t_idx >= x.size - 1:
        return 0.0
    return float(max(x[:t_idx + 1].max(), np.max(z_path[t_idx + 1:])) - x.max())


def d2_shift_rows(x, start, jump) -> np.ndarray:
    """Row-wise ``max{M_t, M_{t+,T} + jump} - M_T``; ``jump`` broadcasts against rows."""
    x = np.atleast_2d(x)
    R, n1 = x.shape
    start = np.broadcast_to(np.asarray(start), (R,))
    cols = np.arange(n1)[None, :]
    head = np.where(cols <= start[:, None], x, -np.inf).max(axis=1)
    tail = np.where(cols > start[:, None], x, -np.inf).max(axis=1)
    M_T = np.maximum(head, tail)
    out = np.maximum(head, tail + jump) - M_T
    return np.where(start < n1 - 1, out, 0.0)


def d2_pert_rows(x, x_pert, start) -> np.ndarray:
    x = np.atleast_2d(x)
    R, n1 = x.shape
    cols = np.arange(n1)[None, :]
    head = np.where(cols <= start[:, None], x, -np.inf).max(axis=1)
    tail_p = np.where(cols > start[:, None], x_pert, -np.inf).max(axis=1)
    out = np.maximum(head, tail_p) - x.max(axis=1)
    return np.where(start < n1 - 1, out, 0.0)

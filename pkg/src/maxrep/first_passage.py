"""Exit-time constants, closed-form tails, Laplace inversion and Monte Carlo oracles.

The closed forms come from exponential martingales ``exp(-alpha t) u(X, lam)``
with ``u(x, y) = exp(-a1 (b - x) - a2 (e - y))``. For the Hawkes model the
constants make the generator of ``u`` equal ``alpha * u`` exactly, which is
what :func:`dynkin_martingale_check` tests by simulation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import mpmath
import numpy as np

from .model import CoxParams, HawkesParams, JumpSpec, SimGrid, mu_bar
from .paths import simulate_batch


class ClosedFormUnavailable(ValueError):
    pass


class EvaluationFailed(ArithmeticError):
    pass


@dataclass(frozen=True)
class AlphaConstants:
    alpha1: float
    alpha2: float
    alpha: float
    model: str
    J: float
    alpha3: float | None = None
    eta: float = 0.0

    def identity_residual(self, params) -> float:
        """Defining identity of the constants; zero up to rounding."""
        if self.model == "hawkes":
            return math.exp(self.alpha1 * self.J + self.alpha2 * params.eta) - (self.alpha2 * params.kappa + 1.0)
        # -a2 kappa + s2^2 a2^2 / 2 - a2 kappa theta, factored to avoid cancellation
        a2, k, s2 = self.alpha2, params.kappa, params.sigma2
        return a2 * (0.5 * s2 ** 2 * a2 - k * (1.0 + params.theta))


def alpha_constants_hawkes(params: HawkesParams, J: float | JumpSpec,
                           alpha2: float | None = None) -> AlphaConstants:
    """Constants with ``exp(a1 J + a2 eta) = a2 kappa + 1``; ``a2`` defaults to ``1/kappa``."""
    if isinstance(J, JumpSpec):
        if J.const_jump() is None or J.jump_fn.time_dependent:
            raise ClosedFormUnavailable("closed forms need a time-independent jump size")
        J = J.const_jump()
    if not params.closed_form_ok:
        raise ClosedFormUnavailable(f"eta={params.eta} >= kappa*ln2={params.kappa * math.log(2):.6g}")
    if J == 0:
        raise ClosedFormUnavailable("J = 0 leaves alpha1 undefined")
    a2 = 1.0 / params.kappa if alpha2 is None else float(alpha2)
    a1 = (math.log1p(a2 * params.kappa) - a2 * params.eta) / J
    if not (a1 > 0 and a2 > 0):
        raise ClosedFormUnavailable(f"alpha1={a1:.6g}, alpha2={a2:.6g} must both be positive")
    s = params.sigma1
    alpha = (params.mu - 0.5 * s ** 2) * a1 + 0.5 * s ** 2 * a1 ** 2 + params.kappa * params.theta * a2
    return AlphaConstants(a1, a2, alpha, "hawkes", float(J), alpha3=a2, eta=params.eta)


def alpha_constants_cox(params: CoxParams, spec: JumpSpec, alpha1: float = 2.0) -> AlphaConstants:
    """Constants with ``a2 = 2 kappa (theta + 1) / sigma2^2`` and a free ``a1 > 1``."""
    J = spec.const_jump()
    if J is None or spec.jump_fn.time_dependent:
        raise ClosedFormUnavailable("closed forms need one jump size shared by all atoms")
    if not params.sigma2 > 0:
        raise ClosedFormUnavailable("sigma2 must be positive")
    if not alpha1 > 1:
        raise ValueError("alpha1 must exceed one")
    a2 = 2.0 * params.kappa * (params.theta + 1.0) / params.sigma2 ** 2
    s = params.sigma1
    mb = mu_bar(spec)
    alpha = ((params.mu - 0.5 * s ** 2) * alpha1 + 0.5 * s ** 2 * alpha1 ** 2
             + alpha1 * (mb - J) + math.expm1(alpha1 * J))
    return AlphaConstants(float(alpha1), a2, alpha, "cox", float(J))


# ---------------------------------------------------------------------------
# Numerical Laplace inversion


@lru_cache(maxsize=None)
def _stehfest_weights(N: int, dps: int) -> tuple:
    with mpmath.workdps(dps):
        half = N // 2
        V = []
        for k in range(1, N + 1):
            s = mpmath.mpf(0)
            for j in range((k + 1) // 2, min(k, half) + 1):
                s += (mpmath.mpf(j) ** half * mpmath.factorial(2 * j)
                      / (mpmath.factorial(half - j) * mpmath.factorial(j) * mpmath.factorial(j - 1)
                         * mpmath.factorial(k - j) * mpmath.factorial(2 * j - k)))
            V.append((-1) ** (k + half) * s)
        return tuple(V)


def _gaver_stehfest(F: Callable, t: float, N: int) -> float:
    if N % 2:
        raise ValueError("Gaver-Stehfest order must be even")
    # weights grow like 10^(0.6 N); the transform is sampled at the same precision
    dps = max(30, int(1.2 * N) + 15)
    V = _stehfest_weights(N, dps)
    with mpmath.workdps(dps):
        a = mpmath.log(2) / mpmath.mpf(t)
        total = mpmath.mpf(0)
        for k in range(1, N + 1):
            try:
                f = F(k * a)
            except (ZeroDivisionError, OverflowError, ValueError) as exc:
                raise EvaluationFailed(f"transform failed at s={float(k * a)!r}: {exc}") from exc
            f = mpmath.mpmathify(f)
            if not mpmath.isfinite(f):
                raise EvaluationFailed(f"transform is not finite at s={float(k * a)!r}")
            total += V[k - 1] * f
        return float(a * total)


def _talbot(F: Callable, t: float, M: int) -> float:
    # fixed Talbot contour (Abate-Valko), r = 2M/5
    r = 2.0 * M / 5.0
    theta = np.arange(1, M) * np.pi / M
    cot = 1.0 / np.tan(theta)
    s = r * theta * (cot + 1j)
    sigma = theta + (theta * cot - 1.0) * cot
    vals = []
    for node in [r / t] + list(s / t):
        try:
            v = complex(F(node))
        except (ZeroDivisionError, OverflowError, ValueError) as exc:
            raise EvaluationFailed(f"transform failed at s={node!r}: {exc}") from exc
        if not (math.isfinite(v.real) and math.isfinite(v.imag)):
            raise EvaluationFailed(f"transform is not finite at s={node!r}")
        vals.append(v)
    vals = np.array(vals)
    total = 0.5 * math.exp(r) * vals[0].real + np.sum((np.exp(s) * vals[1:] * (1.0 + 1j * sigma)).real)
    return float(r / M * total / t)


def inverse_laplace(transform: Callable, t: float, method: str = "gaver_stehfest",
                    order: int | None = None) -> float:
    """Numerically invert a Laplace transform at ``t > 0``.

    ``gaver_stehfest`` samples the transform at real nodes in extended precision
    (``order`` terms, default 24); ``talbot`` uses the fixed Talbot contour with
    ``order`` complex nodes (default 32).
    """
    if not t > 0:
        raise ValueError("t must be positive")
    if method in ("gaver_stehfest", "gaver", "stehfest"):
        return _gaver_stehfest(transform, t, order or 24)
    if method == "talbot":
        return _talbot(transform, t, order or 32)
    raise ValueError(f"unknown method {method!r}")


TRANSFORMS = {
    "one_over_s": lambda s: 1 / s,
    "one_over_s_plus_1": lambda s: 1 / (s + 1),
    "one_over_s2": lambda s: 1 / s ** 2,
}


@lru_cache(maxsize=256)
def step_factor(h: float, method: str = "gaver_stehfest") -> float:
    """``L^{-1}(1/u)(h)``; equal to one for every ``h > 0``."""
    return inverse_laplace(TRANSFORMS["one_over_s"], h, method)


# ---------------------------------------------------------------------------
# Closed-form tails


@dataclass(frozen=True)
class ExitTimeQuery:
    t: float
    T: float
    x_t: float
    lam_t: float
    m_t: float | None = None
    b: float | None = None
    e: float | None = None
    r: float | None = None
    d2lam_t: float = 0.0

    def __post_init__(self):
        if not self.t < self.T:
            raise ValueError("conditioning time must precede the horizon")


@dataclass(frozen=True)
class Tail:
    value: float
    raw: float
    clamped: bool

    def __float__(self):
        return self.value


def _clamp(raw: float) -> Tail:
    v = min(max(raw, 0.0), 1.0)
    return Tail(v, raw, v != raw)


def bar_F_cox(q: ExitTimeQuery, consts: AlphaConstants, method: str = "gaver_stehfest") -> Tail:
    """Joint tail of the maximum and the intensity sup for the Cox model at thresholds ``(b, e)``."""
    L = step_factor(q.T - q.t, method)
    raw = L / consts.alpha2 * math.exp(-consts.alpha1 * (q.b - q.x_t) - consts.alpha2 * (q.e - q.lam_t))
    return _clamp(raw)


def tail_supX_hawkes(q: ExitTimeQuery, consts: AlphaConstants, method: str = "gaver_stehfest") -> Tail:
    """``P(sup_{[t,T]} X >= b | F_t)`` in closed form (intensity threshold integrated out)."""
    L = step_factor(q.T - q.t, method)
    raw = L / consts.alpha2 * math.exp(-consts.alpha1 * (q.b - q.x_t) + consts.alpha2 * q.lam_t)
    return _clamp(raw)


def tail_supZ_hawkes(q: ExitTimeQuery, consts: AlphaConstants, K: float, inside: bool,
                     method: str = "gaver_stehfest") -> Tail:
    """Integrated tail ``int_{M_t-K}^inf P(sup Z >= y | F_t) dy`` of the perturbed log-price.

    ``inside`` says whether the inserted mark fell in ``(0, lam_t]``. This is an
    expected overshoot rather than a probability, so it is never clamped.
    """
    L = step_factor(q.T - q.t, method)
    a1, a2 = consts.alpha1, consts.alpha2
    raw = (L / (a2 ** 2 * a1) * math.exp(a2 * q.lam_t + (a2 * consts.eta if inside else 0.0))
           * math.exp(-a1 * (q.m_t - K - q.x_t)))
    return Tail(raw, raw, False)


def psi_jump(model: str, q: ExitTimeQuery, consts: AlphaConstants, jump: float,
             method: str = "gaver_stehfest") -> float:
    """Closed-form jump integrand ``E[D2 F | F_t]`` for a jump of size ``jump``.

    For Hawkes ``jump`` is ``K_{t,z}`` (zero when the mark lies above ``lam_t``);
    for Cox it is ``J_{t,z}``. Both reduce to
    ``c * exp(a2 lam_t - a1 (M_t - X_t)) * (exp(a1 jump) - 1)``.
    """
    if jump == 0:
        return 0.0
    L = step_factor(q.T - q.t, method)
    a1, a2 = consts.alpha1, consts.alpha2
    scale = L / (a1 * a2) if model == "hawkes" else L / (a1 * a2 ** 2)
    return float(scale * math.exp(a2 * q.lam_t - a1 * (q.m_t - q.x_t)) * math.expm1(a1 * jump))


# ---------------------------------------------------------------------------
# Monte Carlo oracles


CHUNK = 20000  # paths simulated per batch in the Monte Carlo oracles


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float


def hit_probability_rows(x, jumps, sigma1: float, dt: float, b: float) -> np.ndarray:
    """Per-row probability that the continuous path reaches ``b``.

    Nodes at or above ``b`` count as hits; otherwise each cell's Brownian bridge
    (from ``x[k]`` to the pre-jump value at ``k+1``) crosses ``b`` with the
    reflection probability ``exp(-2 (b-a)(b-c) / (sigma^2 dt))``.
    """
    x = np.atleast_2d(x)
    if b == -np.inf:
        return np.ones(x.shape[0])
    hit = (x >= b).any(axis=1)
    if sigma1 == 0:
        return hit.astype(float)
    a = x[:, :-1]
    c = x[:, 1:] - np.atleast_2d(jumps)[:, 1:]
    with np.errstate(over="ignore", invalid="ignore"):
        expo = -2.0 * np.maximum(b - a, 0.0) * np.maximum(b - c, 0.0) / (sigma1 ** 2 * dt)
        p_cell = np.where((a >= b) | (c >= b), 1.0, np.exp(expo))
    miss = np.prod(1.0 - p_cell, axis=1)
    return np.where(hit, 1.0, 1.0 - miss)


def mc_first_passage(model: str, params, spec: JumpSpec, b: float, e: float, grid: SimGrid,
                     n_paths: int, seed: int = 0, family: str = "oracle") -> Estimate:
    """Probability that ``sup X >= b`` and ``sup lam >= e`` on ``[0, T]``, with its standard error.

    The price supremum is monitored continuously through the bridge crossing
    probability; the intensity only at grid nodes.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    if b == -np.inf and e == -np.inf:
        return Estimate(1.0, 0.0)
    p = np.empty(n_paths)
    for lo in range(0, n_paths, CHUNK):
        ids = range(lo, min(lo + CHUNK, n_paths))
        batch = simulate_batch(model, params, spec, grid, seed, ids, family, keep_events=False)
        lam_hit = batch.lam.max(axis=1) >= e
        p[lo:lo + len(ids)] = hit_probability_rows(batch.x, batch.jumps, params.sigma1, grid.dt, b) * lam_hit
    se = float(p.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
    return Estimate(float(p.mean()), se)


@dataclass
class DynkinResult:
    checkpoints: np.ndarray
    estimates: np.ndarray
    se: np.ndarray
    u0: float

    @property
    def deviations(self) -> np.ndarray:
        return self.estimates - self.u0

    @property
    def max_deviation(self) -> float:
        return float(np.max(np.abs(self.deviations)))

    @property
    def max_deviation_se(self) -> float:
        """Standard error at the checkpoint with the largest deviation."""
        return float(self.se[int(np.argmax(np.abs(self.deviations)))])

    @property
    def z_scores(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.se > 0, np.abs(self.deviations) / self.se,
                            np.where(self.deviations == 0, 0.0, np.inf))


def dynkin_martingale_check(model: str, params, spec: JumpSpec, consts: AlphaConstants,
                            thresholds: tuple[float, float], grid: SimGrid, n_paths: int,
                            checkpoints, seed: int = 0, family: str = "dynkin") -> DynkinResult:
    """Estimate ``E[exp(-alpha (s ^ tau)) u(X, lam)_{s ^ tau}]`` at each checkpoint ``s``.

    ``tau`` is the first grid time at which ``X >= b`` and ``lam >= e`` hold
    together. Under the drift-vanishing choice of constants every estimate
    equals ``u(X_0, lam_0)``.
    """
    b, e = thresholds
    a1, a2, alpha = consts.alpha1, consts.alpha2, consts.alpha
    times = grid.times
    cps = [float(s) for s in np.atleast_1d(checkpoints)]
    idx = []
    for s in cps:
        k = grid.index_of(s)
        if k is None:
            raise ValueError(f"checkpoint {s} is not a grid node")
        idx.append(k)

    def u(xv, yv):
        return np.exp(-a1 * (b - xv) - a2 * (e - yv))

    y = np.empty((len(cps), n_paths))
    u0 = None
    for lo in range(0, n_paths, CHUNK):
        ids = range(lo, min(lo + CHUNK, n_paths))
        batch = simulate_batch(model, params, spec, grid, seed, ids, family, keep_events=False)
        x, lam = batch.x, batch.lam
        if u0 is None:
            u0 = float(u(x[0, 0], lam[0, 0]))
        stopped = (x >= b) & (lam >= e)
        tau = np.where(stopped.any(axis=1), np.argmax(stopped, axis=1), grid.n_steps + 1)
        rows = np.arange(len(ids))
        for c, k in enumerate(idx):
            j = np.minimum(tau, k)
            y[c, lo:lo + len(ids)] = np.exp(-alpha * times[j]) * u(x[rows, j], lam[rows, j])
    se = y.std(axis=1, ddof=1) / math.sqrt(n_paths) if n_paths > 1 else np.zeros(len(cps))
    return DynkinResult(np.array(cps), y.mean(axis=1), se, u0)

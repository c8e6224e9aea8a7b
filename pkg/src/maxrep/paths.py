"""Path simulation for the Cox/CIR and Hawkes jump models.

Conventions shared by every simulator here:

* ``x[k]`` is the log-price at grid node ``t_k``; a jump occurring at time
  ``s in (t_{k-1}, t_k]`` is booked at node ``k`` (so ``x`` at nodes is exact
  for the Hawkes model).
* ``comp[k]`` is the compensator of the jump counting process over the cell
  ``(t_k, t_{k+1}]`` (per unit mark weight for Cox, total for Hawkes).
* ``counts[k, a]`` is the number of jumps with atom ``a`` in that cell
  (Hawkes uses a single column).

Jump times come from a unit-rate Poisson random measure on time x ordinate,
materialised in horizontal layers with one random stream per layer. A point
``(s, u)`` is an event when ``u`` lies below the (scaled) intensity at ``s-``.
Keeping the measure explicit is what lets :func:`insert_event_cascade`
replay the same points against a raised intensity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import CoxParams, HawkesParams, JumpSpec, SimGrid, mu_bar
from .rng import StreamKey, stream


class InsertOffGrid(ValueError):
    pass


@dataclass(frozen=True)
class MarkedEvent:
    time: float
    z: float
    accepted: bool
    jump_applied: float


# ---------------------------------------------------------------------------
# Poisson random measure on (t0, T] x (0, inf)


class PoissonStrip:
    """Lazily layered unit-rate Poisson random measure for one path."""

    def __init__(self, key: StreamKey, t0: float, T: float, layer_height: float,
                 purpose: str = "strip"):
        self.key = key
        self.t0 = float(t0)
        self.T = float(T)
        self.layer_height = float(layer_height)
        self.purpose = purpose
        self._layers: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = []

    @property
    def height(self) -> float:
        return self.layer_height * len(self._layers)

    def ensure(self, height: float) -> None:
        while self.height < height:
            j = len(self._layers)
            g = self.key.gen(self.purpose, j)
            n = g.poisson(self.layer_height * (self.T - self.t0))
            t = self.t0 + (self.T - self.t0) * g.random(n)
            u = self.layer_height * (j + g.random(n))
            v = g.random(n)
            self._layers.append((t, u, v))

    def points(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """All materialised points ``(time, ordinate, aux uniform)`` sorted by time."""
        if not self._layers:
            return np.empty(0), np.empty(0), np.empty(0)
        t = np.concatenate([l[0] for l in self._layers])
        u = np.concatenate([l[1] for l in self._layers])
        v = np.concatenate([l[2] for l in self._layers])
        order = np.argsort(t, kind="stable")
        return t[order], u[order], v[order]


def _pad(row: np.ndarray, n_rows: int, *cols: np.ndarray, fill=np.inf):
    """Scatter flat per-row values into a row-major padded matrix sorted by the first column."""
    order = np.lexsort((cols[0], row))
    row = row[order]
    counts = np.bincount(row, minlength=n_rows)
    width = max(int(counts.max(initial=0)), 1)
    start = np.concatenate(([0], np.cumsum(counts)[:-1]))
    pos = np.arange(row.size) - start[row]
    out = []
    for i, c in enumerate(cols):
        m = np.full((n_rows, width), fill if i == 0 else 0.0)
        m[row, pos] = c[order]
        out.append(m)
    valid = np.zeros((n_rows, width), dtype=bool)
    valid[row, pos] = True
    return valid, out


def thin_exponential(t_start, lam_start, pts_t, pts_u, valid, kappa, theta, eta):
    """Exact thinning of exponential-kernel Hawkes intensities, vectorised over rows.

    Points must be sorted by time within each row. Returns the acceptance mask,
    the intensity just before each point and the peak intensity per row (the
    strip must cover the peak for the thinning to be exact).
    """
    t_start = np.asarray(t_start, dtype=float)
    lam = np.array(lam_start, dtype=float)
    s = t_start.copy()
    peak = np.maximum(lam, theta)
    acc = np.zeros(pts_t.shape, dtype=bool)
    lam_minus = np.zeros(pts_t.shape)
    for c in range(pts_t.shape[1]):
        tc = pts_t[:, c]
        live = valid[:, c] & (tc > t_start)
        if not live.any():
            continue
        dt = np.where(live, tc - s, 0.0)
        lm = theta + (lam - theta) * np.exp(-kappa * dt)
        a = live & (pts_u[:, c] <= lm)
        lam_minus[:, c] = lm
        acc[:, c] = a
        lam = np.where(a, lm + eta, lam)
        s = np.where(a, tc, s)
        peak = np.maximum(peak, lam)
    return acc, lam_minus, peak


def hawkes_intensity_at(times, t0, lam0, event_times, kappa, theta, eta):
    """``theta + (lam0-theta) e^{-kappa(t-t0)} + sum_{s_i<=t} eta e^{-kappa(t-s_i)}``."""
    times = np.asarray(times, dtype=float)
    lam = theta + (lam0 - theta) * np.exp(-kappa * (times - t0))
    if len(event_times):
        d = times[:, None] - np.asarray(event_times)[None, :]
        lam = lam + eta * np.sum(np.where(d >= 0, np.exp(-kappa * np.maximum(d, 0.0)), 0.0), axis=1)
    return lam


def hawkes_compensator_at(times, t0, lam0, event_times, kappa, theta, eta):
    """Integral of the intensity from ``t0`` to each time."""
    times = np.asarray(times, dtype=float)
    h = times - t0
    out = theta * h + (lam0 - theta) * (-np.expm1(-kappa * h)) / kappa
    if len(event_times):
        d = times[:, None] - np.asarray(event_times)[None, :]
        out = out + eta / kappa * np.sum(np.where(d > 0, -np.expm1(-kappa * np.maximum(d, 0.0)), 0.0), axis=1)
    return out


def node_of(times, dt: float, n_steps: int) -> np.ndarray:
    """Grid node at which an event at ``times`` is booked (right end of its cell)."""
    k = np.ceil(np.asarray(times) / dt - 1e-9).astype(int)
    return np.clip(k, 1, n_steps)


# ---------------------------------------------------------------------------
# Path records


@dataclass
class PathBatch:
    """Vectorised record of many simulated paths (rows)."""

    model: str
    grid: SimGrid
    x: np.ndarray
    lam: np.ndarray
    w_s_incr: np.ndarray
    w_incr: np.ndarray | None
    jumps: np.ndarray
    comp: np.ndarray
    counts: np.ndarray
    keys: list[StreamKey]
    events: list[list[MarkedEvent]] = field(default_factory=list)
    strips: list[PoissonStrip | None] = field(default_factory=list)

    @property
    def n_paths(self) -> int:
        return self.x.shape[0]

    @property
    def m(self) -> np.ndarray:
        return np.maximum.accumulate(self.x, axis=1)

    @property
    def M_T(self) -> np.ndarray:
        return self.x.max(axis=1)

    def path(self, i: int, params=None, spec=None) -> "SimPath":
        m, tau = running_max_and_tau(self.x[i])
        return SimPath(
            grid=self.grid, model=self.model, w_s_incr=self.w_s_incr[i],
            w_incr=None if self.w_incr is None else self.w_incr[i],
            lam=self.lam[i], x=self.x[i], m=m, tau_idx=tau,
            events=self.events[i] if self.events else [], jumps=self.jumps[i],
            comp=self.comp[i], counts=self.counts[i], key=self.keys[i],
            strip=self.strips[i] if self.strips else None, params=params, spec=spec)


@dataclass
class SimPath:
    grid: SimGrid
    model: str
    w_s_incr: np.ndarray
    w_incr: np.ndarray | None
    lam: np.ndarray
    x: np.ndarray
    m: np.ndarray
    tau_idx: int
    events: list[MarkedEvent]
    jumps: np.ndarray
    comp: np.ndarray
    counts: np.ndarray
    key: StreamKey | None = None
    strip: PoissonStrip | None = None
    params: CoxParams | HawkesParams | None = None
    spec: JumpSpec | None = None

    @property
    def M_T(self) -> float:
        return float(self.m[-1])

    @property
    def accepted_events(self) -> list[MarkedEvent]:
        return [e for e in self.events if e.accepted]


@dataclass
class PerturbedPath:
    base: SimPath
    t_idx: int
    z: float
    K: float
    z_path: np.ndarray
    lambda_pert: np.ndarray
    new_events: list[MarkedEvent]

    @property
    def d2_lambda(self) -> np.ndarray:
        return self.lambda_pert - self.base.lam


# ---------------------------------------------------------------------------
# Running maximum


def running_max_and_tau(x) -> tuple[np.ndarray, int]:
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise ValueError("empty path")
    m = np.maximum.accumulate(x)
    return m, int(np.argmax(x == m[-1]))


def bridge_sup(x, jumps, sigma, dt, u) -> np.ndarray:
    """Continuous-time supremum of a piecewise Brownian path observed at nodes.

    Within each cell the diffusive part is a Brownian bridge from ``x[k]`` to
    ``x[k+1] - jumps[k+1]``; its maximum is drawn exactly from uniforms ``u``
    (shape ``(..., n)``). Works row-wise on 2-D input.
    """
    x = np.asarray(x, dtype=float)
    a = x[..., :-1]
    b = x[..., 1:] - jumps[..., 1:]
    if sigma == 0:
        cell = np.maximum(a, b)
    else:
        cell = 0.5 * (a + b + np.sqrt((b - a) ** 2 - 2.0 * sigma ** 2 * dt * np.log(u)))
    return np.maximum(cell.max(axis=-1), x.max(axis=-1))


# ---------------------------------------------------------------------------
# CIR intensity


def cir_euler(lam0, dW, params: CoxParams, dt: float) -> np.ndarray:
    """Full-truncation Euler for the CIR intensity; rows are paths, output clamped at 0."""
    dW = np.atleast_2d(dW)
    lam = np.empty((dW.shape[0], dW.shape[1] + 1))
    lam[:, 0] = lam0
    cur = np.broadcast_to(np.asarray(lam0, dtype=float), (dW.shape[0],)).copy()
    k, th, s2 = params.kappa, params.theta, params.sigma2
    for j in range(dW.shape[1]):
        p = np.maximum(cur, 0.0)
        cur = cur + k * (th - p) * dt + s2 * np.sqrt(p) * dW[:, j]
        lam[:, j + 1] = cur
    return np.maximum(lam, 0.0)


def simulate_cir(params: CoxParams, grid: SimGrid, seed: int, path_ids=None,
                 family: str = "paths") -> np.ndarray:
    """Intensity paths (rows) using the same increments as :func:`simulate_cox_batch`."""
    ids = range(1) if path_ids is None else path_ids
    n, sd = grid.n_steps, math.sqrt(grid.dt)
    dW = np.empty((len(ids), n))
    for r, i in enumerate(ids):
        g = StreamKey(seed, int(i), family).gen("base")
        g.standard_normal(n)  # price increments come first
        dW[r] = sd * g.standard_normal(n)
    return cir_euler(params.lambda0, dW, params, grid.dt)


# ---------------------------------------------------------------------------
# Cox paths


def _cox_marks(spec: JumpSpec, v: np.ndarray) -> np.ndarray:
    cw = np.cumsum(spec.weights) / spec.total_mass
    return np.minimum(np.searchsorted(cw, v, side="right"), len(cw) - 1)


def simulate_cox_batch(params: CoxParams, spec: JumpSpec, grid: SimGrid, seed: int,
                       path_ids=None, family: str = "paths", keep_events: bool = True,
                       x0: float | None = None) -> PathBatch:
    ids = list(range(1) if path_ids is None else path_ids)
    N, n, dt = len(ids), grid.n_steps, grid.dt
    sd = math.sqrt(dt)
    keys = [StreamKey(seed, int(i), family) for i in ids]
    dWs = np.empty((N, n))
    dW = np.empty((N, n))
    for r, key in enumerate(keys):
        g = key.gen("base")
        dWs[r] = sd * g.standard_normal(n)
        dW[r] = sd * g.standard_normal(n)
    lam = cir_euler(params.lambda0, dW, params, dt)
    times = grid.times
    A = max(len(spec.atoms), 1)
    counts = np.zeros((N, n, A), dtype=np.int64)
    jumps = np.zeros((N, n + 1))
    mass = spec.total_mass
    comp = lam[:, :-1] * dt  # per unit weight
    events: list[list[MarkedEvent]] = []
    strips: list[PoissonStrip | None] = []
    mub = np.array([mu_bar(spec, t) for t in times[:-1]])
    if spec.enabled:
        rate = lam[:, :-1] * mass  # piecewise constant on cells, left node
        for r, key in enumerate(keys):
            strip = PoissonStrip(key, 0.0, grid.T, layer_height=max(1.0, mass * max(params.theta, params.lambda0)))
            strip.ensure(rate[r].max(initial=0.0))
            t, u, v = strip.points()
            cell = node_of(t, dt, n) - 1
            acc = u <= rate[r, cell]
            atom = _cox_marks(spec, v[acc])
            z = spec.marks[atom]
            j = np.asarray(spec.J(times[cell[acc]], z), dtype=float).reshape(-1)
            np.add.at(counts[r], (cell[acc], atom), 1)
            np.add.at(jumps[r], cell[acc] + 1, j)
            if keep_events:
                evs = []
                zi = iter(z)
                ji = iter(j)
                for tt, uu, aa in zip(t, u, acc):
                    if aa:
                        evs.append(MarkedEvent(float(tt), float(next(zi)), True, float(next(ji))))
                events.append(evs)
                strips.append(strip)
    drift = (params.mu - 0.5 * params.sigma1 ** 2) * dt - mub[None, :] * lam[:, :-1] * dt
    incr = drift + params.sigma1 * dWs + jumps[:, 1:]
    x = np.empty((N, n + 1))
    x[:, 0] = math.log(params.s0) if x0 is None else x0
    x[:, 1:] = x[:, :1] + np.cumsum(incr, axis=1)
    return PathBatch("cox", grid, x, lam, dWs, dW, jumps, comp, counts, keys, events, strips)


def simulate_cox_path(params: CoxParams, spec: JumpSpec, grid: SimGrid, seed: int = 0,
                      path_id: int = 0, family: str = "paths") -> SimPath:
    return simulate_cox_batch(params, spec, grid, seed, [path_id], family).path(0, params, spec)


# ---------------------------------------------------------------------------
# Hawkes paths


def _hawkes_layer_height(params: HawkesParams) -> float:
    return max(params.lambda0, params.theta) + 2.0 * params.eta + 0.5


def simulate_hawkes_batch(params: HawkesParams, spec: JumpSpec, grid: SimGrid, seed: int,
                          path_ids=None, family: str = "paths", keep_events: bool = True) -> PathBatch:
    ids = list(range(1) if path_ids is None else path_ids)
    N, n, dt = len(ids), grid.n_steps, grid.dt
    sd = math.sqrt(dt)
    keys = [StreamKey(seed, int(i), family) for i in ids]
    dWs = np.empty((N, n))
    for r, key in enumerate(keys):
        dWs[r] = sd * key.gen("base").standard_normal(n)
    B = _hawkes_layer_height(params)
    strips = [PoissonStrip(key, 0.0, grid.T, B) for key in keys]
    for s in strips:
        s.ensure(B)
    k, th, eta = params.kappa, params.theta, params.eta
    todo = np.arange(N)
    acc_rows: dict[int, np.ndarray] = {}
    lm_rows: dict[int, np.ndarray] = {}
    while todo.size:
        flat = [strips[r].points() for r in todo]
        row = np.concatenate([np.full(p[0].size, i) for i, p in enumerate(flat)]).astype(int)
        valid, (pt, pu) = _pad(row, todo.size, np.concatenate([p[0] for p in flat]),
                               np.concatenate([p[1] for p in flat]))
        acc, lm, peak = thin_exponential(np.zeros(todo.size), np.full(todo.size, params.lambda0),
                                         pt, pu, valid, k, th, eta)
        again = []
        for i, r in enumerate(todo):
            if peak[i] > strips[r].height:
                strips[r].ensure(peak[i])
                again.append(r)
            else:
                w = valid[i]
                acc_rows[r], lm_rows[r] = acc[i][w], lm[i][w]
        todo = np.array(again, dtype=int)

    times = grid.times
    lam = np.empty((N, n + 1))
    Lam = np.empty((N, n + 1))
    jumps = np.zeros((N, n + 1))
    counts = np.zeros((N, n, 1), dtype=np.int64)
    events: list[list[MarkedEvent]] = []
    for r in range(N):
        t, u, _ = strips[r].points()
        a = acc_rows[r]
        ev_t = t[a]
        lam[r] = hawkes_intensity_at(times, 0.0, params.lambda0, ev_t, k, th, eta)
        Lam[r] = hawkes_compensator_at(times, 0.0, params.lambda0, ev_t, k, th, eta)
        j = np.asarray(spec.J(ev_t, 1.0), dtype=float).reshape(-1) * np.ones(ev_t.size)
        node = node_of(ev_t, dt, n)
        np.add.at(jumps[r], node, j)
        np.add.at(counts[r, :, 0], node - 1, 1)
        if keep_events:
            jall = np.asarray(spec.J(t, 1.0), dtype=float).reshape(-1) * np.ones(t.size)
            events.append([MarkedEvent(float(tt), float(uu), bool(aa), float(jj) if aa else 0.0)
                           for tt, uu, aa, jj in zip(t, u, a, jall)])
    x = np.empty((N, n + 1))
    x[:, 0] = math.log(params.s0)
    incr = (params.mu - 0.5 * params.sigma1 ** 2) * dt + params.sigma1 * dWs + jumps[:, 1:]
    x[:, 1:] = x[:, :1] + np.cumsum(incr, axis=1)
    comp = np.diff(Lam, axis=1)
    return PathBatch("hawkes", grid, x, lam, dWs, None, jumps, comp, counts, keys,
                     events, strips if keep_events else [])


def simulate_hawkes_path(params: HawkesParams, spec: JumpSpec, grid: SimGrid, seed: int = 0,
                         path_id: int = 0, family: str = "paths") -> SimPath:
    return simulate_hawkes_batch(params, spec, grid, seed, [path_id], family).path(0, params, spec)


def simulate_batch(model: str, params, spec, grid, seed, path_ids=None, family="paths",
                   keep_events=False) -> PathBatch:
    if model == "cox":
        return simulate_cox_batch(params, spec, grid, seed, path_ids, family, keep_events)
    if model == "hawkes":
        return simulate_hawkes_batch(params, spec, grid, seed, path_ids, family, keep_events)
    raise ValueError(f"unknown model {model!r}")


def batch_bridge_sup(batch: PathBatch, sigma1: float) -> np.ndarray:
    """Continuous-monitoring supremum for each row, with bridge uniforms from each path's stream."""
    n = batch.grid.n_steps
    u = np.empty((batch.n_paths, n))
    for r, key in enumerate(batch.keys):
        u[r] = 1.0 - key.gen("bridge").random(n)  # (0, 1]
    return bridge_sup(batch.x, batch.jumps, sigma1, batch.grid.dt, u)


# ---------------------------------------------------------------------------
# Event insertion (Hawkes)


def insert_event_cascade(base: SimPath, t: float, z: float, rng_replay: PoissonStrip | None = None,
                         params: HawkesParams | None = None, spec: JumpSpec | None = None) -> PerturbedPath:
    """Insert an event at grid time ``t`` with ordinate ``z`` and replay the thinning.

    The same Poisson points drive both runs, so the perturbed event set is the
    base set plus the cascade triggered by the insertion.
    """
    params = params or base.params
    spec = spec or base.spec
    strip = rng_replay or base.strip
    grid = base.grid
    t_idx = grid.index_of(t)
    if t_idx is None:
        raise InsertOffGrid(f"t={t} is not a grid node")
    lam_t = float(base.lam[t_idx])
    if not (0.0 < z <= lam_t):
        return PerturbedPath(base, t_idx, z, 0.0, base.x.copy(), base.lam.copy(), [])
    t = float(grid.times[t_idx])
    k, th, eta = params.kappa, params.theta, params.eta
    while True:
        pt, pu, _ = strip.points()
        after = pt > t
        pt, pu = pt[after], pu[after]
        valid = np.ones((1, pt.size), dtype=bool)
        acc_b, _, _ = thin_exponential([t], [lam_t], pt[None], pu[None], valid, k, th, eta)
        acc_p, _, peak = thin_exponential([t], [lam_t + eta], pt[None], pu[None], valid, k, th, eta)
        if peak[0] <= strip.height:
            break
        strip.ensure(peak[0])
    acc_b, acc_p = acc_b[0], acc_p[0]
    new = acc_p & ~acc_b
    K = float(spec.J(t, 1.0))
    n, dt = grid.n_steps, grid.dt
    z_path = base.x.copy()
    if t_idx < n:
        extra = np.zeros(n + 1)
        jn = np.asarray(spec.J(pt[new], 1.0), dtype=float).reshape(-1) * np.ones(int(new.sum()))
        np.add.at(extra, node_of(pt[new], dt, n), jn)
        extra[t_idx + 1] += K
        z_path[t_idx + 1:] += np.cumsum(extra)[t_idx + 1:]
    times = grid.times
    post = times >= t
    lam_pert = base.lam.copy()
    lam_pert[post] = hawkes_intensity_at(times[post], t, lam_t + eta, pt[acc_p], k, th, eta)
    new_events = [MarkedEvent(t, float(z), True, K)] + [
        MarkedEvent(float(a), float(b), True, float(spec.J(a, 1.0))) for a, b in zip(pt[new], pu[new])]
    return PerturbedPath(base, t_idx, float(z), K, z_path, lam_pert, new_events)


# ---------------------------------------------------------------------------
# Nested continuations


@dataclass
class Continuations:
    """Inner paths branched from nodes of one outer path.

    Rows are ordered as (start node block, inner sample). Entries at nodes
    before a row's start node are filled with the outer path values.
    """

    start: np.ndarray
    x: np.ndarray
    lam: np.ndarray
    x_pert: np.ndarray | None = None


def continue_cox(params: CoxParams, spec: JumpSpec, grid: SimGrid, outer_x, outer_lam,
                 starts, n_inner: int, seed: int, path_id: int, family: str = "outer") -> Continuations:
    """Cox continuations from each node in ``starts``; jumps per atom are independent Poisson counts."""
    n, dt = grid.n_steps, grid.dt
    sd = math.sqrt(dt)
    starts = np.asarray(starts, dtype=int)
    R = starts.size * n_inner
    x = np.repeat(np.asarray(outer_x, dtype=float)[None, :], R, axis=0)
    lam = np.repeat(np.asarray(outer_lam, dtype=float)[None, :], R, axis=0)
    dWs = np.zeros((R, n))
    dW = np.zeros((R, n))
    for b, k in enumerate(starts):
        g = stream(seed, "inner", path_id, int(k), family=family)
        rows = slice(b * n_inner, (b + 1) * n_inner)
        dWs[rows, k:] = sd * g.standard_normal((n_inner, n - k))
        dW[rows, k:] = sd * g.standard_normal((n_inner, n - k))
    start = np.repeat(starts, n_inner)
    times = grid.times
    mub = np.array([mu_bar(spec, tt) for tt in times[:-1]])
    drift0 = (params.mu - 0.5 * params.sigma1 ** 2) * dt
    A = len(spec.atoms)
    cur_lam = lam[np.arange(R), start].copy()
    cur_x = x[np.arange(R), start].copy()
    gens = [stream(seed, "inner_strip", path_id, int(k), family=family) for k in starts]
    for j in range(starts.min(), n):
        live = start <= j
        p = np.maximum(cur_lam, 0.0)
        jump = np.zeros(R)
        if A and spec.enabled:
            cnt = np.zeros((R, A), dtype=np.int64)
            for b, g in enumerate(gens):
                if starts[b] <= j:
                    rows = slice(b * n_inner, (b + 1) * n_inner)
                    cnt[rows] = g.poisson(p[rows, None] * spec.weights[None, :] * dt)
            jump = cnt @ np.asarray(spec.J(times[j], spec.marks), dtype=float).reshape(-1)
        nx = cur_x + drift0 - mub[j] * p * dt + params.sigma1 * dWs[:, j] + jump
        nl = np.maximum(cur_lam + params.kappa * (params.theta - p) * dt
                        + params.sigma2 * np.sqrt(p) * dW[:, j], 0.0)
        cur_x = np.where(live, nx, cur_x)
        cur_lam = np.where(live, nl, cur_lam)
        x[live, j + 1] = cur_x[live]
        lam[live, j + 1] = cur_lam[live]
    return Continuations(start, x, lam)


def continue_hawkes(params: HawkesParams, spec: JumpSpec, grid: SimGrid, outer_x, outer_lam,
                    starts, n_inner: int, seed: int, path_id: int, family: str = "outer",
                    perturb: bool = True) -> Continuations:
    """Hawkes continuations from each node; optionally a paired run with an event inserted at the node.

    The paired run replays the same Poisson points (common random numbers).
    """
    n, dt = grid.n_steps, grid.dt
    sd = math.sqrt(dt)
    starts = np.asarray(starts, dtype=int)
    R = starts.size * n_inner
    times = grid.times
    k_, th, eta = params.kappa, params.theta, params.eta
    x = np.repeat(np.asarray(outer_x, dtype=float)[None, :], R, axis=0)
    dWs = np.zeros((R, n))
    start = np.repeat(starts, n_inner)
    lam0 = np.asarray(outer_lam, dtype=float)[start]
    t0 = times[start]
    for b, k in enumerate(starts):
        g = stream(seed, "inner", path_id, int(k), family=family)
        dWs[b * n_inner:(b + 1) * n_inner, k:] = sd * g.standard_normal((n_inner, n - k))

    n_layers = np.ones(starts.size, dtype=int)
    heights = np.maximum(np.asarray(outer_lam)[starts], th) + 2.0 * eta + 0.5

    def layers(b, j):
        g = stream(seed, "inner_strip", path_id, int(starts[b]), j, family=family)
        T0 = times[starts[b]]
        cnt = g.poisson(heights[b] * (grid.T - T0), size=n_inner)
        tot = int(cnt.sum())
        tt = T0 + (grid.T - T0) * g.random(tot)
        uu = heights[b] * (j + g.random(tot))
        rr = np.repeat(np.arange(n_inner), cnt) + b * n_inner
        return rr, tt, uu

    cache: dict[tuple[int, int], tuple] = {}
    while True:
        parts = []
        for b in range(starts.size):
            for j in range(n_layers[b]):
                if (b, j) not in cache:
                    cache[b, j] = layers(b, j)
                parts.append(cache[b, j])
        rr = np.concatenate([p[0] for p in parts])
        valid, (pt, pu) = _pad(rr, R, np.concatenate([p[1] for p in parts]),
                               np.concatenate([p[2] for p in parts]))
        acc, _, peak = thin_exponential(t0, lam0, pt, pu, valid, k_, th, eta)
        if perturb:
            acc_p, _, peak_p = thin_exponential(t0, lam0 + eta, pt, pu, valid, k_, th, eta)
            peak = np.maximum(peak, peak_p)
        cover = (n_layers * heights)[np.arange(R) // n_inner]
        bad = np.unique(np.nonzero(peak > cover)[0] // n_inner)
        if bad.size == 0:
            break
        n_layers[bad] += 1

    def book(mask):
        jmp = np.zeros((R, n + 1))
        r, c = np.nonzero(mask)
        s = pt[r, c]
        jv = np.asarray(spec.J(s, 1.0), dtype=float).reshape(-1) * np.ones(s.size)
        np.add.at(jmp, (r, node_of(s, dt, n)), jv)
        return jmp

    drift = (params.mu - 0.5 * params.sigma1 ** 2) * dt
    col = np.arange(n)[None, :]
    incr = np.where(col >= start[:, None], drift + params.sigma1 * dWs, 0.0)
    jmp = book(acc)
    cum = np.concatenate([np.zeros((R, 1)), np.cumsum(incr + jmp[:, 1:], axis=1)], axis=1)
    base_at_start = cum[np.arange(R), start]
    after = np.arange(n + 1)[None, :] > start[:, None]
    xs = np.where(after, x[np.arange(R), start][:, None] + cum - base_at_start[:, None], x)
    lam = np.zeros((R, n + 1))  # intensity along continuations is not needed downstream
    out = Continuations(start, xs, lam)
    if perturb:
        jmp_p = book(acc_p)
        K = np.asarray(spec.J(t0, 1.0), dtype=float).reshape(-1) * np.ones(R)
        nxt = np.minimum(start + 1, n)
        jmp_p[np.arange(R), nxt] += np.where(start < n, K, 0.0)
        cum_p = np.concatenate([np.zeros((R, 1)), np.cumsum(incr + jmp_p[:, 1:], axis=1)], axis=1)
        out.x_pert = np.where(after, x[np.arange(R), start][:, None] + cum_p - cum_p[np.arange(R), start][:, None], x)
    return out

"""Model parameters, jump measures and simulation grids.

Both models share the log-price diffusion (``mu``, ``sigma1``) and differ in
how the jump intensity evolves:

* Cox: CIR intensity ``d lam = kappa (theta - lam) dt + sigma2 sqrt(lam) dW``
  driving a compensated marked point process with mark measure ``nu``.
* Hawkes: ``d lam = kappa (theta - lam) dt + eta dN`` (exponential kernel).

Everything here is immutable; simulators and closed forms take these objects
as plain inputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class HardInvalid(ValueError):
    """A strict parameter invariant is violated."""

    def __init__(self, report: "ValidationReport"):
        super().__init__("; ".join(report.errors))
        self.report = report


@dataclass(frozen=True)
class CoxParams:
    mu: float
    sigma1: float
    kappa: float
    theta: float
    sigma2: float
    lambda0: float
    s0: float = 1.0
    T: float = 1.0

    @property
    def feller_ok(self) -> bool:
        return 2.0 * self.kappa * self.theta > self.sigma2 ** 2


@dataclass(frozen=True)
class HawkesParams:
    mu: float
    sigma1: float
    kappa: float
    theta: float
    eta: float
    lambda0: float
    s0: float = 1.0
    T: float = 1.0

    @property
    def stable(self) -> bool:
        return self.eta < self.kappa

    @property
    def closed_form_ok(self) -> bool:
        return self.eta < self.kappa * math.log(2.0)


# Jump-size families. Declared rather than arbitrary so that time dependence
# is visible to validation.

@dataclass(frozen=True)
class Const:
    value: float

    def __call__(self, t, z):
        return np.full(np.broadcast(t, z).shape, self.value, dtype=float)[()]

    time_dependent = False


@dataclass(frozen=True)
class LinearInMark:
    c: float

    def __call__(self, t, z):
        return self.c * np.asarray(z, dtype=float)[()] + 0.0 * np.asarray(t, dtype=float)[()]

    time_dependent = False


@dataclass(frozen=True)
class TimeConst:
    """``J(t, z) = j(t)``; used for the Hawkes ``J_t``."""

    fn: Callable[[float], float]

    def __call__(self, t, z):
        jt = np.vectorize(self.fn, otypes=[float])(t)
        return jt + 0.0 * np.asarray(z, dtype=float)[()]

    time_dependent = True


JumpFn = Const | LinearInMark | TimeConst


@dataclass(frozen=True)
class JumpSpec:
    """Finite discrete mark measure ``nu = sum_i w_i delta_{z_i}`` plus jump size ``J``.

    For the Hawkes model the atoms are unused (marks are thinning ordinates)
    and only ``jump_fn`` matters.
    """

    atoms: tuple[tuple[float, float], ...] = ()
    jump_fn: JumpFn = field(default_factory=lambda: Const(0.0))

    def __post_init__(self):
        atoms = tuple((float(z), float(w)) for z, w in self.atoms)
        for z, w in atoms:
            if z == 0.0:
                raise ValueError("atoms must have nonzero mark")
            if w < 0.0 or not math.isfinite(w):
                raise ValueError("atom weights must be finite and nonnegative")
        object.__setattr__(self, "atoms", atoms)

    @property
    def marks(self) -> np.ndarray:
        return np.array([z for z, _ in self.atoms], dtype=float)

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for _, w in self.atoms], dtype=float)

    @property
    def total_mass(self) -> float:
        return float(sum(w for _, w in self.atoms))

    @property
    def enabled(self) -> bool:
        return self.total_mass > 0.0

    def J(self, t, z):
        return self.jump_fn(t, z)

    def const_jump(self) -> float | None:
        """The scalar jump size if ``J`` is the same for every atom and time, else None."""
        if isinstance(self.jump_fn, Const):
            return float(self.jump_fn.value)
        if isinstance(self.jump_fn, LinearInMark):
            vals = {self.jump_fn.c * z for z, w in self.atoms if w > 0}
            if len(vals) == 1:
                return float(vals.pop())
        return None


@dataclass(frozen=True)
class SimGrid:
    T: float
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")
        if not self.T > 0:
            raise ValueError("T must be positive")

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def times(self) -> np.ndarray:
        t = np.arange(self.n_steps + 1, dtype=float) * self.dt
        t[-1] = self.T
        return t

    def index_of(self, t: float, tol: float = 1e-12) -> int | None:
        k = int(round(t / self.dt))
        if 0 <= k <= self.n_steps and abs(k * self.dt - t) <= tol * max(1.0, self.T):
            return k
        return None


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    flags: dict[str, bool] = field(default_factory=dict)

    @property
    def valid(self) -> bool:
        return not self.errors


def _positive(report: ValidationReport, **values: float) -> None:
    for name, v in values.items():
        if not (math.isfinite(v) and v > 0):
            report.errors.append(f"{name} must be > 0 (got {v})")


def validate_cox(params: CoxParams, *, strict: bool = True) -> ValidationReport:
    report = ValidationReport()
    _positive(report, sigma1=params.sigma1, sigma2=params.sigma2,
              kappa=params.kappa, theta=params.theta, T=params.T, s0=params.s0)
    if params.lambda0 < 0:
        report.errors.append(f"lambda0 must be >= 0 (got {params.lambda0})")
    report.flags["feller_ok"] = params.feller_ok
    if not params.feller_ok:
        report.warnings.append(
            "Feller condition 2*kappa*theta > sigma2^2 violated: inverse-moment "
            "bounds on the intensity are not guaranteed")
    if strict and report.errors:
        raise HardInvalid(report)
    return report


def validate_hawkes(params: HawkesParams, *, strict: bool = True) -> ValidationReport:
    report = ValidationReport()
    _positive(report, sigma1=params.sigma1, kappa=params.kappa,
              theta=params.theta, T=params.T, s0=params.s0)
    if params.eta < 0:
        report.errors.append(f"eta must be >= 0 (got {params.eta})")
    if params.lambda0 < 0:
        report.errors.append(f"lambda0 must be >= 0 (got {params.lambda0})")
    report.flags["stable"] = params.stable
    report.flags["closed_form_ok"] = params.closed_form_ok
    if not params.stable:
        report.warnings.append("eta >= kappa: intensity is not mean-reverting")
    if not params.closed_form_ok:
        report.warnings.append("eta >= kappa*ln2: closed-form tails unavailable")
    if strict and report.errors:
        raise HardInvalid(report)
    return report


def validate_jumps(spec: JumpSpec, model: str) -> ValidationReport:
    report = ValidationReport()
    if model == "cox" and isinstance(spec.jump_fn, TimeConst):
        report.warnings.append("time-dependent J with Cox atoms: closed forms unavailable")
    if model == "hawkes" and isinstance(spec.jump_fn, LinearInMark):
        report.errors.append("Hawkes jumps must be Const or TimeConst")
    report.flags["closed_form_ok"] = isinstance(spec.jump_fn, Const)
    if report.errors:
        raise HardInvalid(report)
    return report


def mu_bar(spec: JumpSpec, t: float = 0.0) -> float:
    """``sum_i w_i (exp(J(t, z_i)) - 1)``, the jump compensator rate per unit intensity."""
    if not spec.atoms:
        return 0.0
    j = np.asarray(spec.J(t, spec.marks), dtype=float)
    return float(np.sum(spec.weights * np.expm1(j)))


def hawkes_mu_bar(spec: JumpSpec, t: float = 0.0) -> float:
    """``exp(J_t) - 1`` for the Hawkes model (unit mark strip)."""
    return float(np.expm1(spec.J(t, 1.0)))


def make_spec(atoms: Sequence[Sequence[float]], kind: str, value: float) -> JumpSpec:
    kinds = {"const": Const, "linear": LinearInMark}
    if kind not in kinds:
        raise ValueError(f"unknown jump kind {kind!r}; expected one of {sorted(kinds)}")
    return JumpSpec(tuple((float(z), float(w)) for z, w in atoms), kinds[kind](float(value)))


# Reference parameter sets used across tests and demos.
COX_A = CoxParams(mu=0.05, sigma1=0.2, kappa=2.0, theta=1.0, sigma2=0.5, lambda0=0.5, T=1.0)
HAWKES_A = HawkesParams(mu=0.05, sigma1=0.2, kappa=1.0, theta=0.5, eta=0.5, lambda0=0.5, T=2.0)
COX_A_SPEC = JumpSpec(((1.0, 1.0),), LinearInMark(0.1))
HAWKES_A_SPEC = JumpSpec(((1.0, 1.0),), Const(0.3))

"""Exact per-instant solver for the box-constrained resource allocation problem.

    minimise   sum_i a_i x_i^2 + b_i x_i + c_i x_i d
    subject to sum_i x_i = required,   lo_i <= x_i <= hi_i

solved by bisection on the multiplier followed by a closed-form refinement on
the interior set.  The module deliberately shares no code with the
controllers so it can serve as an independent reference.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

ACTIVE_TOL = 1e-12


class InfeasibleProblem(ValueError):
    pass


class Active(str, enum.Enum):
    INTERIOR = "interior"
    AT_LO = "at_lo"
    AT_HI = "at_hi"


@dataclass(frozen=True)
class InstantProblem:
    """Frozen-instant allocation problem.

    Parameters
    ----------
    a, b : array_like
        Quadratic and linear cost coefficients, ``a > 0``.
    lo, hi : array_like
        Box in deviation coordinates (MW).
    required : float
        Aggregate quantity to deliver (MW).
    c : array_like, optional
        Frequency-coupling coefficient, multiplied by ``deviation``.
    deviation : float
        COI deviation (Hz) at the instant; only enters through ``c``.
    """

    a: np.ndarray
    b: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    required: float
    c: np.ndarray | None = None
    deviation: float = 0.0

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, float))
        n = a.size
        conv = lambda v: np.broadcast_to(np.asarray(v, float), (n,)).copy()
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", conv(self.b))
        object.__setattr__(self, "lo", conv(self.lo))
        object.__setattr__(self, "hi", conv(self.hi))
        object.__setattr__(self, "c", conv(0.0 if self.c is None else self.c))
        object.__setattr__(self, "required", float(self.required))
        if not np.all(a > 0):
            raise ValueError("all quadratic coefficients must be positive")
        if np.any(self.lo > self.hi):
            raise ValueError("empty box")
        slack = 1e-12 * max(1.0, abs(self.required))
        if not self.lo.sum() - slack <= self.required <= self.hi.sum() + slack:
            raise InfeasibleProblem(
                f"required {self.required:.6g} MW outside "
                f"[{self.lo.sum():.6g}, {self.hi.sum():.6g}]")

    @property
    def n(self) -> int:
        return self.a.size

    @property
    def linear(self) -> np.ndarray:
        return self.b + self.c * self.deviation

    def cost(self, x) -> float:
        x = np.asarray(x, float)
        return float(np.sum(self.a * x * x + self.linear * x))


@dataclass(frozen=True)
class InstantSolution:
    x: np.ndarray
    lam: float
    active_set: tuple[Active, ...] = field(default=())

    @property
    def sigma(self) -> np.ndarray:
        return np.array([s is Active.INTERIOR for s in self.active_set], float)


def _allocation(prob: InstantProblem, lam):
    return np.clip(-(prob.linear + lam) / (2.0 * prob.a), prob.lo, prob.hi)


def solve_instant(prob: InstantProblem, max_iter: int = 400) -> InstantSolution:
    """Exact minimiser and multiplier of ``prob``."""
    a, lin = prob.a, prob.linear
    lam_lo = -float(np.max(2.0 * a * prob.hi + lin)) - 1.0
    lam_hi = -float(np.min(2.0 * a * prob.lo + lin)) + 1.0
    req = prob.required
    tol = 1e-10 * max(1.0, abs(req))
    lam = 0.5 * (lam_lo + lam_hi)
    for _ in range(max_iter):
        lam = 0.5 * (lam_lo + lam_hi)
        g = float(np.sum(_allocation(prob, lam)))
        if abs(g - req) <= tol:
            break
        # g is non-increasing in lam
        if g > req:
            lam_lo = lam
        else:
            lam_hi = lam
        if lam_hi - lam_lo <= 1e-15 * max(1.0, abs(lam)):
            break

    u = -(lin + lam) / (2.0 * a)
    interior = (u > prob.lo) & (u < prob.hi)
    if interior.any():
        fixed = np.where(u <= prob.lo, prob.lo, prob.hi)[~interior].sum()
        w = 1.0 / (2.0 * a[interior])
        lam_ref = -(req - fixed + np.sum(lin[interior] * w)) / np.sum(w)
        x_ref = _allocation(prob, lam_ref)
        if abs(x_ref.sum() - req) <= abs(float(np.sum(_allocation(prob, lam))) - req):
            lam = lam_ref
    x = _allocation(prob, lam)
    u = -(lin + lam) / (2.0 * a)
    active = tuple(Active.AT_LO if ui <= lo + ACTIVE_TOL else
                   Active.AT_HI if ui >= hi - ACTIVE_TOL else Active.INTERIOR
                   for ui, lo, hi in zip(u, prob.lo, prob.hi))
    return InstantSolution(x, float(lam), active)


def kkt_residual(prob: InstantProblem, sol: InstantSolution) -> tuple[float, float]:
    """(stationarity, primal feasibility) residuals in projected form."""
    grad = 2.0 * prob.a * sol.x + prob.linear + sol.lam
    stat = np.abs(sol.x - np.clip(sol.x - grad, prob.lo, prob.hi))
    return float(stat.max()), abs(float(sol.x.sum()) - prob.required)


def trajectory_rates(prob: InstantProblem, sol: InstantSolution, rate: float,
                     curve_slope: float, c_agg: float) -> tuple[np.ndarray, float]:
    """Time derivatives of the optimal allocation and multiplier.

    Parameters
    ----------
    rate : float
        COI frequency rate (Hz/s).
    curve_slope : float
        Delivery-curve slope at the instant (per Hz).
    """
    rho = sol.sigma / (2.0 * prob.a)
    total = rho.sum()
    if total <= 0:
        return np.zeros(prob.n), 0.0
    lam_dot = -(float(np.sum(rho * prob.c)) * rate + curve_slope * rate * c_agg) / total
    x_dot = -rho * (prob.c * rate + lam_dot)
    return x_dot, lam_dot


@dataclass
class RateCheckReport:
    max_rel_error: float
    compared: int
    excluded: list[float]
    errors: list[float]


def validate_theorem1(a, b, lo, hi, deviations, curve, c_agg: float,
                      eps: float = 1e-7, rate: float = 1.0, c=None) -> RateCheckReport:
    """Compare analytic trajectory rates with finite differences of the solver.

    At each deviation ``d`` the problem is solved at ``d - eps``, ``d`` and
    ``d + eps``; the central difference times ``rate`` is the reference for
    the analytic rates.  Points whose active set differs across the stencil,
    or where a curve knot lies inside it, are excluded and listed.
    """
    knots = np.asarray(curve.breakpoints)

    def solve(d):
        prob = InstantProblem(a, b, lo, hi, curve.evaluate(d) * c_agg, c=c, deviation=d)
        return prob, solve_instant(prob)

    errors, excluded = [], []
    for d in deviations:
        d = float(d)
        pm, sm = solve(d - eps)
        p0, s0 = solve(d)
        pp, sp = solve(d + eps)
        if (sm.active_set != s0.active_set or sp.active_set != s0.active_set
                or np.any((knots > d - eps) & (knots < d + eps))):
            excluded.append(d)
            continue
        fd_x = (sp.x - sm.x) / (2.0 * eps) * rate
        fd_l = (sp.lam - sm.lam) / (2.0 * eps) * rate
        an_x, an_l = trajectory_rates(p0, s0, rate, curve.derivative(d), c_agg)
        scale = max(1.0, float(np.max(np.abs(an_x))), abs(an_l))
        err = max(float(np.max(np.abs(fd_x - an_x))), abs(fd_l - an_l)) / scale
        errors.append(err)
    return RateCheckReport(max(errors, default=0.0), len(errors), excluded, errors)


def brute_force(prob: InstantProblem, step: float = 1e-3) -> np.ndarray:
    """Grid search over the feasible set for n <= 3; the last coordinate closes the sum."""
    n = prob.n
    if n > 3:
        raise ValueError("brute force is limited to n <= 3")
    if n == 1:
        return np.array([prob.required])
    axes = [np.append(np.arange(prob.lo[i], prob.hi[i], step), prob.hi[i]) for i in range(n - 1)]
    grids = np.meshgrid(*axes, indexing="ij")
    pts = [g.ravel() for g in grids]
    last = prob.required - sum(pts)
    ok = (last >= prob.lo[-1]) & (last <= prob.hi[-1])
    pts = [p[ok] for p in pts] + [last[ok]]
    X = np.stack(pts, axis=1)
    cost = np.sum(prob.a * X * X + prob.linear * X, axis=1)
    return X[int(np.argmin(cost))]

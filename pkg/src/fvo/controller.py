"""Fixed-time tracking controllers for an aggregated response unit.

Two tracking laws are provided: one for assets that follow their setpoint
instantly (``tot1``) and one for assets with first-order power dynamics
``tau * dx/dt = r - x`` (``tot2``).  Both combine a fixed-time feedback on
the projected stationarity error with feedforward terms that ride the moving
optimum.  A projected primal-dual gradient law (``benchmark``) is included
for comparison.

The sign-type feedback is discretised implicitly (backward Euler on the
error), which is the Filippov-consistent limit of the continuous law and
avoids chattering at the 1 ms control interval.  Everything else is forward
Euler.  Per-asset work is written as scalar kernels so that cost grows
linearly with the number of assets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .costs import CostDerivatives, QuadraticCost
from .curves import DeliveryCurve, derivative as curve_derivative, evaluate as curve_evaluate

ALGORITHMS = ("tot1", "tot2", "benchmark")
PLANTS = ("first_order", "inertial")


class ControllerError(ValueError):
    pass


class NonFiniteState(FloatingPointError):
    pass


@dataclass(frozen=True)
class AssetParams:
    """One asset.

    Parameters
    ----------
    cost : QuadraticCost
    p_max : float
        Upper power limit (MW).
    baseline : float
        Operating point P(0) (MW); decisions are deviations from it.
    p_min : float, optional
        Lower power limit, defaults to ``-p_max``.
    tau : float
        Power time constant (s) for the inertial plant.
    """

    cost: QuadraticCost
    p_max: float
    baseline: float = 0.0
    p_min: float | None = None
    tau: float = 0.0
    name: str = ""

    def __post_init__(self):
        if self.p_min is None:
            object.__setattr__(self, "p_min", -self.p_max)
        if not self.p_min <= self.p_max:
            raise ControllerError(f"asset {self.name}: p_min > p_max")
        if not self.p_min <= self.baseline <= self.p_max:
            raise ControllerError(
                f"asset {self.name}: baseline {self.baseline} outside "
                f"[{self.p_min}, {self.p_max}]")
        if self.tau < 0:
            raise ControllerError(f"asset {self.name}: tau must be >= 0")

    @property
    def lo(self) -> float:
        return self.p_min - self.baseline

    @property
    def hi(self) -> float:
        return self.p_max - self.baseline


@dataclass(frozen=True)
class ControllerGains:
    gamma1: float = 3.0
    gamma2: float = 3.0
    gamma3: float = 200.0
    p: int = 2
    q: int = 3
    kappa_x: float = 1.0
    kappa_lambda: float = 20.0
    sig_tolerance: float = 1e-6
    boundary_tolerance: float = 1e-9

    def __post_init__(self):
        if not (isinstance(self.p, int) and isinstance(self.q, int)) or self.p <= 0 or self.q <= 0:
            raise ControllerError("p and q must be positive integers")
        if self.p % 2 != 0 or self.q % 2 != 1:
            raise ControllerError(f"p must be even and q odd (got p={self.p}, q={self.q})")
        if not self.p < self.q:
            raise ControllerError("p must be smaller than q")
        for name in ("gamma1", "gamma2", "gamma3", "kappa_x", "kappa_lambda"):
            if not getattr(self, name) > 0:
                raise ControllerError(f"{name} must be positive")
        if self.sig_tolerance < 0 or self.boundary_tolerance < 0:
            raise ControllerError("tolerances must be non-negative")


def t_max(gains: ControllerGains) -> float:
    """Upper bound on the convergence time of the fixed-time feedback (s)."""
    return math.pi * gains.q / (2.0 * gains.kappa_x * gains.p
                                * math.sqrt(gains.gamma1 * gains.gamma2))


def check_delivery_time(gains: ControllerGains, curve: DeliveryCurve) -> None:
    bound = t_max(gains)
    if bound > curve.max_delivery_time:
        raise ControllerError(
            f"convergence bound {bound:.4g} s exceeds the {curve.service.value} "
            f"delivery time {curve.max_delivery_time} s")


# -- elementary operations --------------------------------------------------

def project_box(x: float, lo: float, hi: float) -> float:
    if lo > hi:
        raise ControllerError(f"empty box [{lo}, {hi}]")
    return lo if x < lo else hi if x > hi else x


def stationarity_error_1(x: float, F: float, lo: float, hi: float) -> float:
    return x - project_box(x - F, lo, hi)


def switching_signal_1(x: float, e: float, lo: float, hi: float,
                       tol: float = 1e-9) -> int:
    """1 when ``x - e`` sits strictly inside the box (outside the tolerance band)."""
    y = x - e
    return 1 if lo + tol < y < hi - tol else 0


def fixed_time_feedback(e: float, gains: ControllerGains) -> float:
    """gamma1 e^(1-p/q) + gamma2 e^(1+p/q) + gamma3 sign(e), real odd branch."""
    m = abs(e)
    if m < 1e-30:
        return 0.0
    k = gains.p / gains.q
    v = gains.gamma1 * m ** (1.0 - k) + gains.gamma2 * m ** (1.0 + k) + gains.gamma3
    return v if e > 0 else -v


def implicit_feedback(e: float, c: float, gains: ControllerGains) -> float:
    """Solve ``z + c * phi(z) = e`` for the end-of-step error ``z``.

    ``phi`` is the fixed-time feedback.  The solution is zero whenever the
    sign term alone can absorb ``e`` within the step.
    """
    return _implicit(e, c, gains.gamma1, gains.gamma2, gains.gamma3,
                     gains.q / (gains.q - gains.p),
                     (gains.q + gains.p) / (gains.q - gains.p))


def _implicit(e, c, g1, g2, g3, m, n2):
    R = (e if e > 0 else -e) - c * g3
    if R <= 0.0:
        return 0.0
    # |z| = w**m turns the equation into a convex increasing polynomial in w
    A = c * g1
    B = c * g2
    w = R ** (1.0 / m)
    if A > 0.0 and R / A < w:
        w = R / A
    if B > 0.0:
        wb = (R / B) ** (1.0 / n2)
        if wb < w:
            w = wb
    for _ in range(60):
        wm = w ** m
        wn = w ** n2
        psi = wm + A * w + B * wn - R
        if psi <= 1e-15 * R:
            break
        w_new = w - psi / ((m * wm + n2 * B * wn) / w + A)
        if not w_new < w:
            break
        w = w_new
    s = w ** m
    return s if e > 0 else -s


def feedforward_beta(sum_rho: float, sum_rho_fxw: float, rate: float,
                     curve_slope: float, c_agg: float) -> float:
    if sum_rho <= 0.0:
        return 0.0
    return -(sum_rho_fxw * rate + curve_slope * rate * c_agg) / sum_rho


def feedforward_beta2(sum_rho: float, sum_rho_fxw: float, sum_rho_fxww: float,
                      rate: float, accel: float, curve_slope: float, c_agg: float) -> float:
    if sum_rho <= 0.0:
        return 0.0
    return -(sum_rho_fxw * accel + sum_rho_fxww * (rate * rate)
             + curve_slope * accel * c_agg) / sum_rho


def feedforward_1(rho: Sequence[float], derivs: Sequence[CostDerivatives], meas,
                  curve_slope: float, c_agg: float) -> tuple[list[float], float]:
    """Tangential drive (alpha per asset, beta) along the optimal trajectory."""
    rate = meas.rate
    s_rho = 0.0
    s_w = 0.0
    for r_i, d in zip(rho, derivs):
        s_rho += r_i
        s_w += r_i * d.f_xw
    beta = feedforward_beta(s_rho, s_w, rate, curve_slope, c_agg)
    alpha = [-r_i * (d.f_xw * rate + beta) if r_i > 0.0 else 0.0
             for r_i, d in zip(rho, derivs)]
    return alpha, beta


def feedforward_2(rho: Sequence[float], derivs: Sequence[CostDerivatives], meas,
                  curve_slope: float, c_agg: float, tau: Sequence[float]):
    """Second-order drive for the inertial plant.

    Returns ``(alpha2, alpha1, beta2, beta1)`` where ``alpha1, beta1`` are the
    first-order terms and ``alpha2, beta2`` add the acceleration correction.
    """
    alpha1, beta1 = feedforward_1(rho, derivs, meas, curve_slope, c_agg)
    rate, acc = meas.rate, meas.acceleration
    s_rho = s_w = s_ww = 0.0
    for r_i, d in zip(rho, derivs):
        s_rho += r_i
        s_w += r_i * d.f_xw
        s_ww += r_i * d.f_xww
    beta2 = feedforward_beta2(s_rho, s_w, s_ww, rate, acc, curve_slope, c_agg)
    alpha2 = [(-t * r_i * (d.f_xw * acc + d.f_xww * (rate * rate) + beta2) if r_i > 0.0 else 0.0) + a1
              for r_i, d, t, a1 in zip(rho, derivs, tau, alpha1)]
    return alpha2, alpha1, beta2, beta1


# -- state ------------------------------------------------------------------

@dataclass(frozen=True)
class AssetState:
    x: float
    r: float
    sigma: int
    e: float
    u: float


@dataclass(frozen=True)
class ControllerState:
    """Snapshot of one ARU controller.

    ``x`` is the delivered deviation from baseline; ``r`` is the decision
    variable (setpoint).  They coincide on the first-order plant.  ``beta``
    holds the first-order multiplier drive and ``beta2`` the second-order one
    (inertial law only); ``alpha`` is the drive actually applied and
    ``alpha1`` the first-order part.
    """

    x: tuple
    r: tuple
    sigma: tuple
    e: tuple
    u: tuple
    lam: float
    beta: float = 0.0
    beta2: float = 0.0
    alpha: tuple = ()
    alpha1: tuple = ()
    F: tuple = ()
    sig: tuple = ()
    mismatch: float = 0.0
    required: float = 0.0
    gamma3_demand: float = 0.0
    slope: float = 0.0

    def asset(self, i: int) -> AssetState:
        return AssetState(self.x[i], self.r[i], self.sigma[i], self.e[i], self.u[i])

    @property
    def n(self) -> int:
        return len(self.x)


@dataclass
class _Coeffs:
    fxx: list
    b: list
    c: list
    cww: list
    lo: list
    hi: list
    lo_t: list
    hi_t: list
    inv_fxx: list
    tau: list
    dt_tau: list


class Controller:
    """Precomputed controller for one ARU.

    Parameters
    ----------
    assets : sequence of AssetParams
    gains : ControllerGains
    curve : DeliveryCurve
    c_agg : float
        Contracted quantity (MW).
    algorithm : {"tot1", "tot2", "benchmark"}
    plant : {"first_order", "inertial"}
        ``tot2`` always runs on the inertial plant.
    dt : float
        Control interval (s).
    """

    def __init__(self, assets: Sequence[AssetParams], gains: ControllerGains,
                 curve: DeliveryCurve, c_agg: float, algorithm: str = "tot1",
                 plant: str = "first_order", dt: float = 1e-3,
                 lambda0: float = 0.0, sigma0: int = 1):
        if algorithm not in ALGORITHMS:
            raise ControllerError(f"unknown algorithm {algorithm!r}")
        if algorithm == "tot2":
            plant = "inertial"
        if plant not in PLANTS:
            raise ControllerError(f"unknown plant {plant!r}")
        if not dt > 0:
            raise ControllerError("dt must be positive")
        if not c_agg > 0:
            raise ControllerError("c_agg must be positive")
        if not assets:
            raise ControllerError("an ARU needs at least one asset")
        if plant == "inertial":
            for a in assets:
                if a.tau < dt:
                    raise ControllerError(
                        f"asset {a.name}: tau={a.tau} must be >= dt={dt} on the inertial plant")
        if sigma0 not in (0, 1):
            raise ControllerError("sigma0 must be 0 or 1")
        self.assets = tuple(assets)
        self.gains = gains
        self.curve = curve
        self.c_agg = float(c_agg)
        self.algorithm = algorithm
        self.plant = plant
        self.dt = float(dt)
        self.lambda0 = float(lambda0)
        self.sigma0 = sigma0
        tol = gains.boundary_tolerance
        self.k = _Coeffs(
            fxx=[2.0 * a.cost.a for a in assets],
            b=[a.cost.b for a in assets],
            c=[a.cost.c for a in assets],
            cww=[0.0 for _ in assets],
            lo=[a.lo for a in assets],
            hi=[a.hi for a in assets],
            lo_t=[a.lo + tol for a in assets],
            hi_t=[a.hi - tol for a in assets],
            inv_fxx=[1.0 / (2.0 * a.cost.a) for a in assets],
            tau=[a.tau for a in assets],
            dt_tau=[self.dt / a.tau if a.tau > 0 else 1.0 for a in assets],
        )
        g = gains
        self._m = g.q / (g.q - g.p)
        self._n2 = (g.q + g.p) / (g.q - g.p)
        # per-asset (c, gain) of the implicit feedback for free and clamped assets
        kx, h = g.kappa_x, self.dt
        if algorithm == "tot1":
            self._fb = tuple(((kx * h, kx * f), (h * inv, 1.0))
                             for f, inv in zip(self.k.fxx, self.k.inv_fxx))
        else:
            self._fb = (((kx * h, kx), (h, 1.0)),) * len(self.k.fxx)
        self._inertial = plant == "inertial"
        self._tmax = t_max(gains)

    @property
    def n(self) -> int:
        return len(self.assets)

    @property
    def t_max(self) -> float:
        return self._tmax

    def initial_state(self) -> ControllerState:
        n = self.n
        x = tuple(project_box(0.0, lo, hi) for lo, hi in zip(self.k.lo, self.k.hi))
        z = (0.0,) * n
        return ControllerState(x=x, r=x, sigma=(self.sigma0,) * n, e=z, u=z,
                               lam=self.lambda0, alpha=z, alpha1=z, F=z, sig=(1,) * n)

    def required(self, deviation: float) -> float:
        return curve_evaluate(self.curve, deviation) * self.c_agg

    def slope(self, deviation: float, rate: float) -> float:
        """Curve slope over the coming interval.

        Uses the secant towards the extrapolated deviation so a knot crossed
        inside the interval is accounted for in the same step. Equals the
        one-sided derivative whenever no knot is crossed.
        """
        step = rate * self.dt
        if step != 0.0:
            ahead = curve_evaluate(self.curve, deviation + step)
            sec = (ahead - curve_evaluate(self.curve, deviation)) / step
            tan = curve_derivative(self.curve, deviation, rate)
            if abs(sec - tan) > 1e-9 * max(1.0, abs(tan)):
                return sec
            return tan
        return curve_derivative(self.curve, deviation, rate)

    # -- per-asset kernels, shared with the distributed realisation --------

    def local_error(self, i: int, r: float, x: float, lam: float, dev: float,
                    alpha1: float = 0.0):
        """Stationarity error of asset ``i``: (F, e, projection_active, sigma)."""
        k = self.k
        if self.algorithm == "tot2":
            fx = k.fxx[i] * x + k.b[i] + k.c[i] * dev
            F = self.gains.kappa_x * (fx + lam + (r - x - k.tau[i] * alpha1))
        else:
            fx = k.fxx[i] * r + k.b[i] + k.c[i] * dev
            F = self.gains.kappa_x * (fx + lam)
        y = r - F
        lo, hi = k.lo[i], k.hi[i]
        if y < lo:
            p, active = lo, True
        elif y > hi:
            p, active = hi, True
        else:
            p, active = y, False
        sigma = 1 if k.lo_t[i] < p < k.hi_t[i] else 0
        return F, r - p, active, sigma

    def advance(self, i: int, r: float, x: float, e: float, active: bool,
                drive: float):
        """Integrate asset ``i`` one interval: (r_next, x_next, u, sig)."""
        g = self.gains
        dt = self.dt
        c, gain = self._fb[i][1 if active else 0]
        z = _implicit(e, c, g.gamma1, g.gamma2, g.gamma3, self._m, self._n2)
        tol = g.sig_tolerance
        sig = 1 if -tol <= z <= tol else 0
        u = (z - e) / (gain * dt)
        if sig:
            u = u + drive
        k = self.k
        lo, hi = k.lo[i], k.hi[i]
        rn = r + dt * u
        rn = lo if rn < lo else hi if rn > hi else rn
        if self._inertial:
            xn = x + k.dt_tau[i] * (r - x)
            xn = lo if xn < lo else hi if xn > hi else xn
        else:
            xn = rn
        return rn, xn, u, sig

    def alpha1_jump(self, i: int, a1: float, prev: float) -> float:
        """Setpoint offset that absorbs a step in the first-order drive.

        A step in alpha1 is an impulse in its rate; integrating the impulse
        moves the setpoint by ``tau * step`` within the interval.
        """
        return self.k.tau[i] * (a1 - prev)

    def shift(self, i: int, r: float, offset: float) -> float:
        k = self.k
        r = r + offset
        return k.lo[i] if r < k.lo[i] else k.hi[i] if r > k.hi[i] else r

    def _integrate(self, i, r, x, u):
        k = self.k
        rn = r + self.dt * u
        lo, hi = k.lo[i], k.hi[i]
        rn = lo if rn < lo else hi if rn > hi else rn
        if self.plant == "inertial":
            xn = x + k.dt_tau[i] * (r - x)
            xn = lo if xn < lo else hi if xn > hi else xn
        else:
            xn = rn
        return rn, xn

    def benchmark_advance(self, i: int, r: float, x: float, lam: float, dev: float):
        k = self.k
        fx = k.fxx[i] * r + k.b[i] + k.c[i] * dev
        y = r - self.gains.kappa_x * (fx + lam)
        lo, hi = k.lo[i], k.hi[i]
        p = lo if y < lo else hi if y > hi else y
        u = p - r
        return self._integrate(i, r, x, u) + (u, r - p, r - y)

    # -- centralised step ---------------------------------------------------

    def step(self, state: ControllerState, meas) -> ControllerState:
        if self.algorithm == "tot1":
            new = self._step_tot1(state, meas)
        elif self.algorithm == "tot2":
            new = self._step_tot2(state, meas)
        else:
            new = self._step_benchmark(state, meas)
        if not (math.isfinite(new.lam) and all(map(math.isfinite, new.r))
                and all(map(math.isfinite, new.x))):
            raise NonFiniteState(f"non-finite controller state at t={meas.timestamp}")
        return new

    def _mismatch(self, state, dev):
        req = self.required(dev)
        return sum(state.x) - req, req

    def _step_tot1(self, state, meas):
        n = self.n
        k = self.k
        dev, rate = meas.deviation, meas.rate
        lam = state.lam
        mismatch, req = self._mismatch(state, dev)
        Fs, es, acts, sigmas = [], [], [], []
        s_rho = s_rw = 0.0
        for i in range(n):
            F, e, act, sigma = self.local_error(i, state.r[i], state.x[i], lam, dev)
            Fs.append(F); es.append(e); acts.append(act); sigmas.append(sigma)
            if sigma:
                rho = k.inv_fxx[i]
                s_rho += rho
                s_rw += rho * k.c[i]
        hw = self.slope(dev, rate)
        beta = feedforward_beta(s_rho, s_rw, rate, hw, self.c_agg)
        alphas, rs, xs, us, sigs = [], [], [], [], []
        demand = 0.0
        lam_dot = self.gains.kappa_lambda * mismatch + beta
        for i in range(n):
            a = -k.inv_fxx[i] * (k.c[i] * rate + beta) if sigmas[i] else 0.0
            rn, xn, u, sg = self.advance(i, state.r[i], state.x[i], es[i], acts[i], a)
            alphas.append(a); rs.append(rn); xs.append(xn); us.append(u); sigs.append(sg)
            d = abs(lam_dot + k.c[i] * rate)
            if d > demand:
                demand = d
        lam_n = lam + self.dt * lam_dot
        return ControllerState(tuple(xs), tuple(rs), tuple(sigmas), tuple(es), tuple(us),
                               lam_n, beta, 0.0, tuple(alphas), tuple(alphas), tuple(Fs),
                               tuple(sigs), mismatch, req, demand, hw)

    def _step_tot2(self, state, meas):
        n = self.n
        k = self.k
        inv, cw, cww, tau, fxx = k.inv_fxx, k.c, k.cww, k.tau, k.fxx
        dt = self.dt
        dev, rate, acc = meas.deviation, meas.rate, meas.acceleration
        lam = state.lam
        r0, x0, sigma0 = state.r, state.x, state.sigma
        mismatch, req = self._mismatch(state, dev)
        hw = self.slope(dev, rate)
        c_agg = self.c_agg
        local_error = self.local_error

        # first-order drive from the previous switching pattern
        s_rho = s_rw = 0.0
        for i in range(n):
            if sigma0[i]:
                s_rho += inv[i]
                s_rw += inv[i] * cw[i]
        beta1 = feedforward_beta(s_rho, s_rw, rate, hw, c_agg)
        a1 = [-inv[i] * (cw[i] * rate + beta1) if sigma0[i] else 0.0 for i in range(n)]
        errs = [local_error(i, r0[i], x0[i], lam, dev, a1[i]) for i in range(n)]
        sigmas = tuple(v[3] for v in errs)

        s_rho = s_rw = s_rww = 0.0
        for i in range(n):
            if sigmas[i]:
                s_rho += inv[i]
                s_rw += inv[i] * cw[i]
                s_rww += inv[i] * cww[i]
        if sigmas != sigma0:
            # switching pattern changed: redo the first-order drive and errors
            beta1 = feedforward_beta(s_rho, s_rw, rate, hw, c_agg)
            a1 = [-inv[i] * (cw[i] * rate + beta1) if sigmas[i] else 0.0 for i in range(n)]
            errs = [local_error(i, r0[i], x0[i], lam, dev, a1[i]) for i in range(n)]
        beta2 = feedforward_beta2(s_rho, s_rw, s_rww, rate, acc, hw, c_agg)

        Fs = [v[0] for v in errs]
        es = [v[1] for v in errs]
        alphas, rs, xs, us, sigs = [], [], [], [], []
        lam_dot = self.gains.kappa_lambda * mismatch + beta1
        demand = 0.0
        # the alpha1 rate is only defined away from switching instants
        prev_a1 = state.alpha1
        smooth = bool(prev_a1) and sigmas == sigma0 and hw == state.slope
        jumps = bool(prev_a1) and not smooth
        rr = rate * rate
        for i in range(n):
            if sigmas[i]:
                a2 = -tau[i] * inv[i] * (cw[i] * acc + cww[i] * rr + beta2) + a1[i]
            else:
                a2 = a1[i]
            r, x = r0[i], x0[i]
            act = errs[i][2]
            if jumps:
                jump = self.alpha1_jump(i, a1[i], prev_a1[i])
                if jump:
                    r = self.shift(i, r, jump)
                    Fs[i], es[i], act, _ = local_error(i, r, x, lam, dev, a1[i])
            rn, xn, u, sg = self.advance(i, r, x, es[i], act, a2)
            u += (r - r0[i]) / dt
            alphas.append(a2); rs.append(rn); xs.append(xn); us.append(u); sigs.append(sg)
            if smooth:
                d = abs((fxx[i] - 1.0) * (r - x) / tau[i] + cw[i] * rate + lam_dot
                        - tau[i] * (a1[i] - prev_a1[i]) / dt)
                if d > demand:
                    demand = d
        lam_n = lam + dt * lam_dot
        return ControllerState(tuple(xs), tuple(rs), sigmas, tuple(es), tuple(us),
                               lam_n, beta1, beta2, tuple(alphas), tuple(a1), tuple(Fs),
                               tuple(sigs), mismatch, req, demand, hw)

    def _step_benchmark(self, state, meas):
        n = self.n
        dev = meas.deviation
        lam = state.lam
        mismatch, req = self._mismatch(state, dev)
        rs, xs, us, es, Fs = [], [], [], [], []
        for i in range(n):
            rn, xn, u, e, F = self.benchmark_advance(i, state.r[i], state.x[i], lam, dev)
            rs.append(rn); xs.append(xn); us.append(u); es.append(e); Fs.append(F)
        lam_n = lam + self.dt * (self.gains.kappa_lambda * mismatch)
        z = (0.0,) * n
        return ControllerState(tuple(xs), tuple(rs), state.sigma, tuple(es), tuple(us),
                               lam_n, 0.0, 0.0, z, z, tuple(Fs), state.sig, mismatch, req, 0.0)


def algorithm1_step(state: ControllerState, assets, gains, meas, curve, c_agg, dt,
                    plant: str = "first_order") -> ControllerState:
    return Controller(assets, gains, curve, c_agg, "tot1", plant, dt).step(state, meas)


def algorithm2_step(state: ControllerState, assets, gains, meas, curve, c_agg, dt) -> ControllerState:
    return Controller(assets, gains, curve, c_agg, "tot2", "inertial", dt).step(state, meas)


def benchmark_step(state: ControllerState, assets, gains, meas, curve, c_agg, dt,
                   plant: str = "first_order") -> ControllerState:
    return Controller(assets, gains, curve, c_agg, "benchmark", plant, dt).step(state, meas)

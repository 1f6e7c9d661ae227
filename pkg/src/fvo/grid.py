"""Multi-bus swing-equation exosystem.

Buses carry inertia ``H`` (s, system base) and damping ``D`` (pu power per pu
frequency).  Lines are modelled by their admittance magnitude and angle with
bus voltages held at nominal.  The state is integrated with fixed-step RK4;
asset powers are held constant across a step.

Units: powers in the public API are MW, bus loads from signals are pu on
``base_mva``, angles in rad, bus speeds in rad/s and every measurement in Hz.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import optimize

TWO_PI = 2.0 * math.pi


class GridError(ValueError):
    pass


class GridDivergence(RuntimeError):
    """Raised when a bus frequency leaves the configured stability band."""

    def __init__(self, t, bus, deviation_hz):
        super().__init__(f"bus {bus} frequency deviation {deviation_hz:.4g} Hz "
                         f"left the stability band at t={t:.6g} s")
        self.t = t
        self.bus = bus
        self.deviation_hz = deviation_hz


@dataclass(frozen=True)
class BusParams:
    name: str
    inertia: float
    damping: float
    generation: float = 0.0
    load: float = 0.0
    agc: bool = False

    def __post_init__(self):
        if self.inertia < 0 or self.damping < 0:
            raise GridError(f"bus {self.name}: H and D must be non-negative")


@dataclass(frozen=True)
class LineParams:
    from_bus: int
    to_bus: int
    x: float
    r: float = 0.0

    @property
    def admittance(self) -> complex:
        # off-diagonal bus admittance element
        return -1.0 / complex(self.r, self.x)


@dataclass(frozen=True)
class AgcParams:
    """PI regulator on the COI deviation; output shared by inertia."""

    kp: float = 0.0     # MW/Hz
    ki: float = 25.0    # MW/(Hz s)
    enabled: bool = True


@dataclass(frozen=True)
class FrequencyMeasurement:
    deviation: float      # Hz
    rate: float           # Hz/s
    acceleration: float   # Hz/s^2
    timestamp: float      # s


@dataclass(frozen=True)
class GridState:
    t: float
    delta: np.ndarray
    omega: np.ndarray
    agc_integral: float   # MW


class LoadSignal:
    """Time-indexed load (pu) at one bus."""

    def __init__(self, kind: str, bus: int, **params):
        self.kind = kind
        self.bus = bus
        self.params = params
        if kind == "constant":
            self._value = float(params.get("value", 0.0))
        elif kind == "step":
            self._t0 = float(params["t0"])
            self._mag = float(params["magnitude"])
        elif kind == "bounded_noise":
            self._init_noise(**params)
        else:
            raise GridError(f"unknown load signal kind {kind!r}")

    def _init_noise(self, seed=None, band=None, bandwidth=None, components=24,
                    t0=0.0, min_frequency=0.02):
        if seed is None:
            raise GridError("bounded_noise needs an explicit seed")
        if band is None or not np.isfinite(band) or band <= 0:
            raise GridError("bounded_noise band must be finite and positive")
        if bandwidth is None or not np.isfinite(bandwidth) or bandwidth <= 0:
            raise GridError("bounded_noise bandwidth must be finite and positive")
        rng = np.random.default_rng(seed)
        freqs = rng.uniform(min(min_frequency, bandwidth), bandwidth, components)
        phases = rng.uniform(0.0, TWO_PI, components)
        amps = rng.uniform(0.2, 1.0, components)
        # shifted so the signal starts at zero; |value| <= 2*sum(amps) = band
        amps *= band / (2.0 * amps.sum())
        self._w = TWO_PI * freqs
        self._ph = phases
        self._amp = amps
        self._offset = float(np.dot(amps, np.sin(phases)))
        self._t0 = float(t0)

    def __call__(self, t: float) -> float:
        kind = self.kind
        if kind == "step":
            return self._mag if t >= self._t0 else 0.0
        if kind == "constant":
            return self._value
        if t < self._t0:
            return 0.0
        s = t - self._t0
        return float(np.dot(self._amp, np.sin(self._w * s + self._ph))) - self._offset


def load_signal(kind: str, bus: int = 0, **params) -> LoadSignal:
    return LoadSignal(kind, bus, **params)


@dataclass
class GridModel:
    buses: Sequence[BusParams]
    lines: Sequence[LineParams]
    agc: AgcParams = field(default_factory=AgcParams)
    nominal_hz: float = 50.0
    base_mva: float = 100.0
    loads: Sequence[LoadSignal] = ()
    asset_buses: Sequence[int] = ()
    divergence_band_hz: float = 5.0

    def __post_init__(self):
        m = len(self.buses)
        if m == 0:
            raise GridError("grid has no buses")
        H = np.array([b.inertia for b in self.buses], float)
        if not np.all(H > 0):
            raise GridError("every bus needs H > 0 (no algebraic buses)")
        for ln in self.lines:
            if not (0 <= ln.from_bus < m and 0 <= ln.to_bus < m) or ln.from_bus == ln.to_bus:
                raise GridError(f"line {ln} references an invalid bus")
            if abs(ln.admittance) <= 0:
                raise GridError(f"line {ln} has zero admittance")
        self._check_connected(m)
        for sig in self.loads:
            if not 0 <= sig.bus < m:
                raise GridError(f"load signal at invalid bus {sig.bus}")
        for k in self.asset_buses:
            if not 0 <= k < m:
                raise GridError(f"asset attached to invalid bus {k}")
        self.omega_star = TWO_PI * self.nominal_hz
        self._H = H
        self._D = np.array([b.damping for b in self.buses], float)
        self._h_total = float(H.sum())
        self._fr = np.array([ln.from_bus for ln in self.lines], int)
        self._to = np.array([ln.to_bus for ln in self.lines], int)
        y = np.array([ln.admittance for ln in self.lines], complex)
        self._ymag = np.abs(y)
        self._phi = np.angle(y)
        self._base = np.array([(b.load - b.generation) / self.base_mva
                               for b in self.buses], float)
        agc = np.array([b.agc for b in self.buses], bool)
        if not agc.any():
            agc[:] = True
        part = np.where(agc, H, 0.0)
        self._part = part / part.sum()
        self._asset_bus = np.asarray(self.asset_buses, int)
        self._load_bus = np.array([s.bus for s in self.loads], int)

    def _check_connected(self, m):
        adj = [[] for _ in range(m)]
        for ln in self.lines:
            adj[ln.from_bus].append(ln.to_bus)
            adj[ln.to_bus].append(ln.from_bus)
        seen, stack = {0}, [0]
        while stack:
            for j in adj[stack.pop()]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        if len(seen) != m:
            raise GridError("bus graph is not connected")

    @property
    def n_buses(self) -> int:
        return len(self.buses)

    def with_loads(self, loads, asset_buses=None) -> "GridModel":
        return replace(self, loads=tuple(loads),
                       asset_buses=self.asset_buses if asset_buses is None else tuple(asset_buses))

    # -- dynamics ---------------------------------------------------------

    def _load_pu(self, t):
        m = self.n_buses
        if not self.loads:
            return np.zeros(m)
        vals = np.array([s(t) for s in self.loads])
        return np.bincount(self._load_bus, vals, minlength=m)

    def _flows(self, delta):
        d = delta[self._fr] - delta[self._to]
        p_out = self._ymag * np.cos(d - self._phi)
        p_in = self._ymag * np.cos(-d - self._phi)
        m = self.n_buses
        return (np.bincount(self._fr, p_out, minlength=m)
                + np.bincount(self._to, p_in, minlength=m))

    def _asset_pu(self, asset_mw):
        if len(self._asset_bus) == 0:
            return 0.0
        return np.bincount(self._asset_bus, asset_mw, minlength=self.n_buses) / self.base_mva

    def _rhs(self, t, delta, omega, xi, asset_pu):
        dw = omega - self.omega_star
        dw0_hz = float(np.dot(self._H, dw)) / self._h_total / TWO_PI
        if self.agc.enabled:
            p_agc = xi - self.agc.kp * dw0_hz
            dxi = -self.agc.ki * dw0_hz
        else:
            p_agc, dxi = xi, 0.0
        p_hat = self._base + self._load_pu(t) - self._part * (p_agc / self.base_mva) - asset_pu
        domega = -(self.omega_star / (2.0 * self._H)) * (
            self._D * dw / self.omega_star + p_hat + self._flows(delta))
        return dw, domega, dxi

    def initial_state(self, asset_mw=None) -> GridState:
        """Flat-frequency equilibrium with assets at baseline.

        Angles and the AGC schedule offset are solved so that every bus is
        balanced at nominal frequency; the offset absorbs any scheduling
        imbalance in the bus tables.
        """
        m = self.n_buses
        asset_pu = self._asset_pu(np.zeros(len(self._asset_bus)) if asset_mw is None
                                  else np.asarray(asset_mw, float))
        load0 = self._load_pu(0.0)

        def residual(z):
            delta = np.concatenate(([0.0], z[:m - 1]))
            xi = z[m - 1]
            return (self._base + load0 - self._part * (xi / self.base_mva)
                    - asset_pu + self._flows(delta))

        # linearised flows give the starting point
        inj = self._base + load0 - asset_pu
        xi0 = float(np.sum(inj)) * self.base_mva
        B = np.zeros((m, m))
        s = self._ymag * np.sin(self._phi)
        np.add.at(B, (self._fr, self._fr), s)
        np.add.at(B, (self._to, self._to), s)
        np.add.at(B, (self._fr, self._to), -s)
        np.add.at(B, (self._to, self._fr), -s)
        rhs = -(inj - self._part * (xi0 / self.base_mva) + self._flows(np.zeros(m)))
        z0 = np.empty(m)
        z0[:m - 1] = np.linalg.solve(B[1:, 1:], rhs[1:]) if m > 1 else []
        z0[m - 1] = xi0
        sol = optimize.root(residual, z0, method="hybr")
        if np.max(np.abs(residual(sol.x))) > 1e-8:
            raise GridError(f"no pre-disturbance equilibrium: {sol.message}")
        delta = np.concatenate(([0.0], sol.x[:m - 1]))
        return GridState(0.0, delta, np.full(m, self.omega_star), float(sol.x[m - 1]))


def step(model: GridModel, state: GridState, asset_powers, dt: float) -> GridState:
    """Advance one RK4 step of length ``dt`` with asset powers (MW) held."""
    if not dt > 0:
        raise GridError("dt must be positive")
    asset_pu = model._asset_pu(np.asarray(asset_powers, float))
    t, d0, w0, x0 = state.t, state.delta, state.omega, state.agc_integral
    f = model._rhs
    k1d, k1w, k1x = f(t, d0, w0, x0, asset_pu)
    h2 = 0.5 * dt
    k2d, k2w, k2x = f(t + h2, d0 + h2 * k1d, w0 + h2 * k1w, x0 + h2 * k1x, asset_pu)
    k3d, k3w, k3x = f(t + h2, d0 + h2 * k2d, w0 + h2 * k2w, x0 + h2 * k2x, asset_pu)
    k4d, k4w, k4x = f(t + dt, d0 + dt * k3d, w0 + dt * k3w, x0 + dt * k3x, asset_pu)
    s = dt / 6.0
    delta = d0 + s * (k1d + 2.0 * k2d + 2.0 * k3d + k4d)
    omega = w0 + s * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
    xi = x0 + s * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    new = GridState(t + dt, delta, omega, xi)
    dev_hz = (omega - model.omega_star) / TWO_PI
    worst = int(np.argmax(np.abs(dev_hz)))
    if not np.all(np.isfinite(dev_hz)) or abs(dev_hz[worst]) > model.divergence_band_hz:
        raise GridDivergence(new.t, model.buses[worst].name, float(dev_hz[worst]))
    return new


def coi_measurement(model: GridModel, state: GridState, asset_powers,
                    prev: FrequencyMeasurement | None = None,
                    dt: float | None = None,
                    filter_tau: float = 0.0) -> FrequencyMeasurement:
    """COI deviation, its exact rate, and a backward-difference acceleration."""
    if not model._h_total > 0:
        raise GridError("COI undefined for zero total inertia")
    H = model._H
    dev = (float(np.dot(H, state.omega)) / model._h_total - model.omega_star) / TWO_PI
    asset_pu = model._asset_pu(np.asarray(asset_powers, float))
    _, domega, _ = model._rhs(state.t, state.delta, state.omega,
                              state.agc_integral, asset_pu)
    rate = float(np.dot(H, domega)) / model._h_total / TWO_PI
    if prev is None or not dt:
        acc = 0.0
    else:
        acc = (rate - prev.rate) / dt
        if filter_tau > 0:
            acc = prev.acceleration + dt / (filter_tau + dt) * (acc - prev.acceleration)
    return FrequencyMeasurement(dev, rate, acc, state.t)


class FrequencyMeter:
    """Stateful COI measurement stream with optional seeded Gaussian noise."""

    def __init__(self, model: GridModel, dt: float, filter_tau: float = 0.0,
                 noise_std: float = 0.0, rate_noise_std: float = 0.0, seed: int = 0):
        self.model = model
        self.dt = dt
        self.filter_tau = filter_tau
        self.noise_std = noise_std
        self.rate_noise_std = rate_noise_std
        self._rng = np.random.default_rng(seed)
        self._prev: FrequencyMeasurement | None = None

    def measure(self, state: GridState, asset_powers) -> FrequencyMeasurement:
        meas = coi_measurement(self.model, state, asset_powers, self._prev,
                               self.dt, self.filter_tau)
        self._prev = meas
        if self.noise_std or self.rate_noise_std:
            meas = replace(meas,
                           deviation=meas.deviation + self.noise_std * self._rng.standard_normal(),
                           rate=meas.rate + self.rate_noise_std * self._rng.standard_normal())
        return meas


# -- topology files --------------------------------------------------------

def read_buses(path) -> tuple[list[BusParams], dict[str, int]]:
    """Bus table: columns bus, H, D, P_G, P_L, agc."""
    buses, index = [], {}
    with open(path, newline="") as fh:
        rows = (r for r in fh if not r.lstrip().startswith("#"))
        for row in csv.DictReader(rows):
            name = row["bus"].strip()
            index[name] = len(buses)
            buses.append(BusParams(name, float(row["H"]), float(row["D"]),
                                   float(row.get("P_G") or 0.0),
                                   float(row.get("P_L") or 0.0),
                                   str(row.get("agc", "0")).strip() in ("1", "true", "True")))
    return buses, index


def read_lines(path, index: dict[str, int]) -> list[LineParams]:
    """Line table: columns from, to, x[, r] (pu on the system base)."""
    lines = []
    with open(path, newline="") as fh:
        rows = (r for r in fh if not r.lstrip().startswith("#"))
        for row in csv.DictReader(rows):
            try:
                fr, to = index[row["from"].strip()], index[row["to"].strip()]
            except KeyError as exc:
                raise GridError(f"line references unknown bus {exc}") from None
            lines.append(LineParams(fr, to, float(row["x"]), float(row.get("r") or 0.0)))
    return lines


def load_grid(bus_path, line_path, **kwargs) -> tuple[GridModel, dict[str, int]]:
    buses, index = read_buses(Path(bus_path))
    lines = read_lines(Path(line_path), index)
    return GridModel(buses, lines, **kwargs), index

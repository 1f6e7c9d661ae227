"""Co-simulation loop: grid exosystem, ARU controllers and the per-instant oracle.

Each control interval the COI measurement is taken, every active ARU takes
one controller step, the oracle is consulted at the sampling cadence, a trace
record is written and the grid is advanced with the delivered powers held.
"""

from __future__ import annotations

import copy
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .controller import Controller, ControllerGains, AssetParams, NonFiniteState
from .costs import QuadraticCost
from .curves import DeliveryCurve, derivative as curve_derivative
from .distributed import CommGraph, DistributedController
from .grid import (AgcParams, FrequencyMeasurement, FrequencyMeter, GridDivergence,
                   GridModel, load_signal, read_buses, read_lines, step as grid_step)
from .oracle import InfeasibleProblem, InstantProblem, solve_instant, trajectory_rates
from .scenario import Scenario, parse_scenario, with_algorithm

MISMATCH_TOL = 1e-3      # fraction of c_agg
ASSET_TOL = 1e-2         # relative to max(1 MW, |x*|)
FEASIBILITY_TOL = 1e-9   # MW
SIGN_PRODUCT_TOL = 1e-12


class RunAborted(RuntimeError):
    """A run stopped early; ``category`` is 'divergence' or 'infeasible'."""

    def __init__(self, category: str, last_index: int, cause: Exception):
        super().__init__(f"{category} after record {last_index}: {cause}")
        self.category = category
        self.last_index = last_index
        self.cause = cause


@dataclass
class RunMetrics:
    """Per-ARU summary of a run.

    ``convergence_time`` is measured from ``start_time``. Quantities marked
    "after" are taken from the convergence instant to the horizon.
    ``gamma3_margin`` is the configured gain minus the largest demand seen by
    the sufficiency monitor. ``straddle_time`` counts oracle samples where a
    setpoint sits on a bound its lagging delivered power has not reached.
    """

    aru: str
    algorithm: str
    mode: str
    start_time: float
    convergence_time: float | None
    t_max_bound: float
    max_mismatch_after: float | None
    rms_mismatch_after: float | None
    integrated_cost_gap: float | None
    integrated_oracle_cost: float | None
    gamma3_margin: float | None
    gamma3_conforming: bool | None
    compute_time_mean: float
    feasibility_violations: int
    sign_product_min: float
    feedforward_max_error: float | None
    feedforward_samples: int
    oracle_samples: int
    straddle_time: float


@dataclass
class RunResult:
    scenario: str
    metrics: dict
    t: np.ndarray
    mismatch: dict
    trace_path: Path | None = None
    manifest_path: Path | None = None
    columns: list = field(default_factory=list)


class _Aru:
    """Runtime bookkeeping for one ARU."""

    def __init__(self, spec, scenario: Scenario, offset: int, n_steps: int):
        self.spec = spec
        self.offset = offset
        ctl = Controller(spec.assets, spec.gains, scenario.curve, spec.c_agg,
                         spec.algorithm, spec.plant, scenario.dt, spec.lambda0, spec.sigma0)
        self.ctl = ctl
        if spec.mode == "distributed":
            graph = _build_graph(spec.graph, ctl.n, scenario.base_dir)
            self.dctl = DistributedController(ctl, graph, spec.rounds_per_interval)
            self.dstate = self.dctl.initial_state()
            self.state = self.dstate.ctrl
        else:
            self.dctl = None
            self.state = ctl.initial_state()
        self.baseline = [a.baseline for a in spec.assets]
        self.a = np.array([a.cost.a for a in spec.assets])
        self.b = np.array([a.cost.b for a in spec.assets])
        self.c = np.array([a.cost.c for a in spec.assets])
        self.lo = [a.lo for a in spec.assets]
        self.hi = [a.hi for a in spec.assets]
        self.mismatch = np.zeros(n_steps)
        self.compute = 0.0
        self.compute_n = 0
        self.demand = 0.0
        self.violations = 0
        self.sign_min = math.inf
        self.ff_err = None
        self.ff_n = 0
        self.straddle_samples = 0
        self.samples = []          # (t, cost, cost_star)
        self.buffer = []           # (t, deviation, r, x, mismatch) since the previous sample
        self.last_fail = None
        self.candidate = None

    @property
    def n(self):
        return self.ctl.n

    def problem(self, dev):
        return InstantProblem(self.a, self.b, self.lo, self.hi, self.ctl.required(dev),
                              c=self.c, deviation=dev)

    def cost(self, x, dev):
        return float(np.sum(self.a * np.square(x) + (self.b + self.c * dev) * np.asarray(x)))

    def straddling(self, r, x) -> bool:
        """True when some setpoint sits on a bound its delivered power has not reached.

        Tracking is not guaranteed while a lagging asset catches up with a
        saturated setpoint, so such instants neither confirm nor break
        convergence.
        """
        if self.spec.plant != "inertial":
            return False
        tol = self.spec.gains.boundary_tolerance
        k = self.ctl.k
        for i, (ri, xi) in enumerate(zip(r, x)):
            for b in (k.lo[i], k.hi[i]):
                if abs(ri - b) <= tol and abs(xi - b) > tol:
                    return True
        return False

    def converged_at(self, x, mismatch, sol):
        if abs(mismatch) > MISMATCH_TOL * self.ctl.c_agg:
            return False
        for xi, si in zip(x, sol.x):
            if abs(xi - si) > ASSET_TOL * max(1.0, abs(si)):
                return False
        return True


def _build_graph(graph, n, base_dir):
    if graph == "ring":
        return CommGraph.ring(n)
    if graph == "complete":
        return CommGraph.complete(n)
    if isinstance(graph, list):
        return CommGraph.from_edges(n, graph)
    return CommGraph.from_file(n, Path(base_dir) / graph)


def build_grid(scenario: Scenario, asset_buses) -> GridModel:
    g = scenario.grid
    buses, index = read_buses(g["bus_file"])
    lines = read_lines(g["line_file"], index)
    loads = []
    for ev in scenario.events:
        params = {k: v for k, v in ev.items() if k not in ("kind", "bus")}
        loads.append(load_signal(ev["kind"], index[ev["bus"]], **params))
    agc = AgcParams(g["agc"]["kp"], g["agc"]["ki"], g["agc"]["enabled"])
    return GridModel(buses, lines, agc, g["nominal_hz"], g["base_mva"], tuple(loads),
                     tuple(index[b] for b in asset_buses), g["divergence_band_hz"])


def trace_columns(arus) -> list[str]:
    cols = ["t", "deviation", "rate", "acceleration"]
    for a in arus:
        p = a.spec.name
        cols += [f"{p}.required", f"{p}.mismatch", f"{p}.lambda", f"{p}.cost",
                 f"{p}.lambda_star", f"{p}.cost_star"]
        for i in range(1, a.n + 1):
            cols += [f"{p}.x_{i}", f"{p}.r_{i}", f"{p}.u_{i}", f"{p}.sigma_{i}",
                     f"{p}.e_{i}", f"{p}.xstar_{i}"]
    return cols


def _fmt(v) -> str:
    return format(v, ".17g")


def run(scenario: Scenario, out_dir=None, write_trace: bool = True) -> RunResult:
    """Execute ``scenario``; write ``trace.csv`` and ``manifest.json`` to ``out_dir``."""
    dt = scenario.dt
    n_steps = int(round(scenario.horizon / dt))
    arus, offset, asset_buses = [], 0, []
    for spec in scenario.arus:
        arus.append(_Aru(spec, scenario, offset, n_steps))
        offset += len(spec.assets)
        asset_buses += spec.buses
    model = build_grid(scenario, asset_buses)
    baseline = np.concatenate([a.baseline for a in arus])
    gstate = model.initial_state(baseline)
    g = scenario.grid
    every_m = g["measurement_every"]
    meter = FrequencyMeter(model, dt * every_m, g["ddot_filter_tau"],
                           g["noise"]["deviation_std"], g["noise"]["rate_std"], scenario.seed)
    t_axis = np.arange(n_steps) * dt

    trace_fh = None
    cols = trace_columns(arus)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        if write_trace:
            trace_fh = open(out_dir / "trace.csv", "w", newline="")
            trace_fh.write(",".join(cols) + "\n")

    oracle_every = scenario.oracle_every
    trace_every = scenario.trace_every
    powers = baseline.copy()
    meas = None
    k = -1
    try:
        for k in range(n_steps):
            t = k * dt
            if k % every_m == 0:
                meas = meter.measure(gstate, powers)
                meas = replace(meas, timestamp=t)
            sample = k % oracle_every == 0
            row = [_fmt(t), _fmt(meas.deviation), _fmt(meas.rate), _fmt(meas.acceleration)] \
                if trace_fh is not None and k % trace_every == 0 else None
            for a in arus:
                _aru_interval(a, k, t, meas, sample, row)
            if row is not None:
                trace_fh.write(",".join(row) + "\n")
            for a in arus:
                for i, xi in enumerate(a.state.x):
                    powers[a.offset + i] = a.baseline[i] + xi
            gstate = grid_step(model, gstate, powers, dt)
            gstate = replace(gstate, t=(k + 1) * dt)
    except (GridDivergence, NonFiniteState) as exc:
        raise RunAborted("divergence", k - 1, exc) from exc
    except InfeasibleProblem as exc:
        raise RunAborted("infeasible", k - 1, exc) from exc
    finally:
        if trace_fh is not None:
            trace_fh.close()

    metrics = {a.spec.name: _finish_metrics(a, scenario, t_axis) for a in arus}
    result = RunResult(scenario.name, metrics, t_axis,
                       {a.spec.name: a.mismatch for a in arus}, columns=cols)
    if out_dir is not None:
        if write_trace:
            result.trace_path = out_dir / "trace.csv"
        result.manifest_path = out_dir / "manifest.json"
        write_manifest(result.manifest_path, scenario, metrics, cols)
    return result


def _aru_interval(a: _Aru, k: int, t: float, meas, sample: bool, row):
    spec = a.spec
    prev = a.state
    active = t >= spec.start_time - 1e-12
    if active:
        t0 = time.perf_counter()
        if a.dctl is not None:
            a.dstate = a.dctl.step(a.dstate, meas)
            new = a.dstate.ctrl
        else:
            new = a.ctl.step(prev, meas)
        a.compute += time.perf_counter() - t0
        a.compute_n += 1
        a.state = new
        if new.gamma3_demand > a.demand:
            a.demand = new.gamma3_demand
        mismatch = new.mismatch
        req = new.required
        e, u, sigma, F = new.e, new.u, new.sigma, new.F
    else:
        req = a.ctl.required(meas.deviation)
        mismatch = sum(prev.x) - req
        new = prev
        e, u, sigma, F = prev.e, (0.0,) * a.n, prev.sigma, prev.F
    a.mismatch[k] = mismatch

    # feasibility and projection sign checks on the pre-step state and step terms
    for i in range(a.n):
        lo, hi = a.lo[i], a.hi[i]
        if not (lo - FEASIBILITY_TOL <= prev.x[i] <= hi + FEASIBILITY_TOL
                and lo - FEASIBILITY_TOL <= prev.r[i] <= hi + FEASIBILITY_TOL):
            a.violations += 1
        if active:
            sp = (F[i] - e[i]) * e[i]
            if sp < a.sign_min:
                a.sign_min = sp

    lam_star = cost_star = None
    xstar = None
    cost = a.cost(prev.x, meas.deviation)
    if active:
        a.buffer.append((t, meas.deviation, prev.r, prev.x, mismatch))
    if sample:
        prob = a.problem(meas.deviation)
        sol = solve_instant(prob)
        xstar, lam_star = sol.x, sol.lam
        cost_star = prob.cost(sol.x)
        if active:
            a.samples.append((t, cost, cost_star))
            _track_convergence(a, t, prev.r, prev.x, mismatch, sol)
            hw = curve_derivative(a.ctl.curve, meas.deviation, meas.rate)
            # a knot inside the interval is a switching instant, rates undefined
            if (spec.algorithm != "benchmark" and new.slope == hw
                    and all(abs(v) <= spec.gains.sig_tolerance for v in e)):
                xd, _ = trajectory_rates(prob, sol, meas.rate, hw, a.ctl.c_agg)
                alpha = new.alpha if spec.algorithm == "tot1" else new.alpha1
                err = float(np.max(np.abs(np.asarray(alpha) - xd)))
                a.ff_err = err if a.ff_err is None else max(a.ff_err, err)
                a.ff_n += 1

    if row is not None:
        row += [_fmt(req), _fmt(mismatch), _fmt(prev.lam), _fmt(cost),
                "" if lam_star is None else _fmt(lam_star),
                "" if cost_star is None else _fmt(cost_star)]
        for i in range(a.n):
            row += [_fmt(prev.x[i]), _fmt(prev.r[i]), _fmt(u[i]), str(sigma[i]), _fmt(e[i]),
                    "" if xstar is None else _fmt(float(xstar[i]))]


def _track_convergence(a: _Aru, t, r, x, mismatch, sol):
    """Online convergence detection, refined step by step near the crossing."""
    buf = a.buffer
    a.buffer = []
    if a.straddling(r, x):
        a.straddle_samples += 1
        return
    if not a.converged_at(x, mismatch, sol):
        a.last_fail = t
        a.candidate = None
        return
    if a.candidate is not None:
        return
    # refine over the steps since the previous sample
    cand = t
    for bt, dev, br, bx, bm in reversed(buf[:-1]):
        if a.last_fail is not None and bt <= a.last_fail:
            break
        if a.straddling(br, bx):
            break
        bs = solve_instant(a.problem(dev))
        if not a.converged_at(bx, bm, bs):
            break
        cand = bt
    a.candidate = cand


def _finish_metrics(a: _Aru, scenario: Scenario, t_axis) -> RunMetrics:
    spec = a.spec
    start = spec.start_time
    T = None if a.candidate is None else a.candidate - start
    dt = scenario.dt
    after = mx = rms = gap = ocost = None
    if T is not None:
        mask = t_axis >= a.candidate - 1e-12
        after = a.mismatch[mask]
        if after.size:
            mx = float(np.max(np.abs(after)))
            rms = float(np.sqrt(np.mean(after ** 2)))
        w = scenario.oracle_every * dt
        post = [(c, cs) for (ts, c, cs) in a.samples if ts >= a.candidate - 1e-12]
        gap = float(sum(c - cs for c, cs in post) * w)
        ocost = float(sum(cs for _, cs in post) * w)
    margin = conforming = None
    if spec.algorithm != "benchmark" and spec.mode == "centralized":
        margin = spec.gains.gamma3 - a.demand
        conforming = margin >= 0
    return RunMetrics(
        aru=spec.name, algorithm=spec.algorithm, mode=spec.mode, start_time=start,
        convergence_time=T, t_max_bound=a.ctl.t_max, max_mismatch_after=mx,
        rms_mismatch_after=rms, integrated_cost_gap=gap, integrated_oracle_cost=ocost,
        gamma3_margin=margin, gamma3_conforming=conforming,
        compute_time_mean=a.compute / a.compute_n if a.compute_n else 0.0,
        feasibility_violations=a.violations,
        sign_product_min=a.sign_min if a.sign_min != math.inf else 0.0,
        feedforward_max_error=a.ff_err, feedforward_samples=a.ff_n,
        oracle_samples=len(a.samples),
        straddle_time=a.straddle_samples * scenario.oracle_every * dt)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def write_manifest(path, scenario: Scenario, metrics: dict, columns) -> None:
    doc = dict(version=__version__, scenario=scenario.name,
               resolved=_jsonable(scenario.resolved),
               metrics={k: asdict(v) for k, v in metrics.items()},
               trace_columns=columns)
    Path(path).write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")


# -- comparison -------------------------------------------------------------

def compare(runs, window_start: float = 0.0, window_end: float | None = None) -> dict:
    """Mismatch envelopes per label over a common time window.

    Parameters
    ----------
    runs : list of (label, t, mismatch)
        ``t`` grids must coincide.
    """
    if not runs:
        raise ValueError("nothing to compare")
    t_ref = np.asarray(runs[0][1])
    for label, t, _ in runs[1:]:
        t = np.asarray(t)
        if t.shape != t_ref.shape or not np.array_equal(t, t_ref):
            raise ValueError(f"time grid of {label!r} does not match {runs[0][0]!r}")
    end = t_ref[-1] if window_end is None else window_end
    mask = (t_ref >= window_start - 1e-12) & (t_ref <= end + 1e-12)
    report = {"window": [float(window_start), float(end)], "labels": {}}
    series = {}
    for label, _, m in runs:
        w = np.asarray(m)[mask]
        series[label] = w
        report["labels"][label] = dict(
            rms=float(np.sqrt(np.mean(w ** 2))) if w.size else 0.0,
            max_abs=float(np.max(np.abs(w))) if w.size else 0.0,
            peak_to_peak=float(np.ptp(w)) if w.size else 0.0)
    report["ranking"] = sorted(report["labels"], key=lambda k: report["labels"][k]["rms"])
    labels = list(series)
    report["max_difference"] = {
        f"{x}|{y}": float(np.max(np.abs(series[x] - series[y]))) if series[x].size else 0.0
        for i, x in enumerate(labels) for y in labels[i + 1:]}
    return report


# -- scaling benchmark -------------------------------------------------------

def random_assets(n: int, seed: int, tau_range=(0.05, 0.2)) -> list[AssetParams]:
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        out.append(AssetParams(QuadraticCost(float(rng.uniform(1.0, 5.0)), 1.0),
                               float(rng.uniform(1.0, 2.0)), 0.0,
                               tau=float(rng.uniform(*tau_range)), name=f"b{i + 1}"))
    return out


def bench(sizes=(30, 60, 120), modes=("centralized", "distributed"), algorithm: str = "tot2",
          steps: int = 2000, warmup: int = 200, seed: int = 0, service: str = "DR",
          repeats: int = 3) -> dict:
    """Mean controller time per control interval against a synthetic frequency stream.

    Distributed times are reported per node (total work divided by the node
    count), which is what one asset's processor would spend.
    """
    curve = DeliveryCurve.default(service)
    gains = ControllerGains()
    dt = 1e-3
    rows = []
    stream = []
    for k in range(steps + warmup):
        t = k * dt
        w = 2 * math.pi * 0.5
        stream.append(FrequencyMeasurement(-0.15 * math.sin(w * t), -0.15 * w * math.cos(w * t),
                                           0.15 * w * w * math.sin(w * t), t))
    for n in sizes:
        assets = random_assets(n, seed)
        c_agg = 0.5 * sum(a.hi for a in assets)
        for mode in modes:
            best = math.inf
            for _ in range(repeats):
                ctl = Controller(assets, gains, curve, c_agg, algorithm, "inertial", dt)
                if mode == "distributed":
                    stepper = DistributedController(ctl, CommGraph.ring(n))
                    st = stepper.initial_state()
                else:
                    stepper = ctl
                    st = ctl.initial_state()
                for m in stream[:warmup]:
                    st = stepper.step(st, m)
                t0 = time.perf_counter()
                for m in stream[warmup:]:
                    st = stepper.step(st, m)
                best = min(best, (time.perf_counter() - t0) / steps)
            per = best / n if mode == "distributed" else best
            rows.append(dict(n=n, mode=mode, interval_time=best, reported_time=per))
    exponents = {}
    for mode in modes:
        pts = [(r["n"], r["reported_time"]) for r in rows if r["mode"] == mode]
        if len(pts) >= 2:
            x = np.log([p[0] for p in pts])
            y = np.log([p[1] for p in pts])
            exponents[mode] = float(np.polyfit(x, y, 1)[0])
    return dict(algorithm=algorithm, rows=rows, exponents=exponents)


def run_variants(scenario: Scenario, out_dir=None, write_trace: bool = True):
    """Run every ``compare`` variant of a scenario and compare mismatch.

    The window opens one second after the earliest convergence among the
    variants and closes at the horizon. Returns ``(results, report)`` where
    ``results`` maps label to :class:`RunResult` and ``report`` is the output
    of :func:`compare` for the first ARU.
    """
    if not scenario.variants:
        raise ValueError(f"scenario {scenario.name!r} defines no compare variants")
    results = {}
    for v in scenario.variants:
        doc = with_algorithm(scenario.resolved, v["algorithm"]) if v.get("algorithm") \
            else copy.deepcopy(scenario.resolved)
        doc.pop("compare", None)
        sc = parse_scenario(doc, scenario.base_dir, f"{scenario.name}.{v['label']}", {})
        sub = None if out_dir is None else Path(out_dir) / v["label"]
        results[v["label"]] = run(sc, sub, write_trace=write_trace)
    aru = scenario.arus[0].name
    starts = [res.metrics[aru].start_time + res.metrics[aru].convergence_time
              for res in results.values() if res.metrics[aru].convergence_time is not None]
    opened = min(starts) if starts else scenario.arus[0].start_time
    runs = [(label, res.t, res.mismatch[aru]) for label, res in results.items()]
    report = compare(runs, opened + 1.0, scenario.horizon)
    report["aru"] = aru
    report["convergence_time"] = {label: res.metrics[aru].convergence_time
                                  for label, res in results.items()}
    return results, report

"""Scenario files: YAML documents describing grid, service, ARUs and events.

Every default applied while loading is written back into ``Scenario.resolved``
so a run can be reproduced from its manifest alone.
"""

from __future__ import annotations

import copy
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .controller import (ALGORITHMS, PLANTS, AssetParams, ControllerError,
                         ControllerGains, check_delivery_time)
from .costs import QuadraticCost
from .curves import CurveError, DeliveryCurve, Service

MIN_CAPACITY_MW = 1.0
MAX_CAPACITY_MW = {Service.DC: 100.0, Service.DR: 50.0, Service.DM: 50.0}

GAIN_DEFAULTS = dict(gamma1=3.0, gamma2=3.0, gamma3=200.0, p=2, q=3, kappa_x=1.0,
                     kappa_lambda=20.0, sig_tolerance=1e-6, boundary_tolerance=1e-9,
                     lambda0=0.0, sigma0=1)
GRID_DEFAULTS = dict(base_mva=100.0, nominal_hz=50.0, divergence_band_hz=5.0,
                     ddot_filter_tau=0.0, measurement_every=1)
AGC_DEFAULTS = dict(kp=0.0, ki=25.0, enabled=True)
NOISE_DEFAULTS = dict(deviation_std=0.0, rate_std=0.0)
ARU_DEFAULTS = dict(algorithm="tot1", mode="centralized", plant="first_order",
                    start_time=0.0, graph="ring", rounds_per_interval=1)
TOP_DEFAULTS = dict(seed=0, dt=0.001, oracle_every=10)


class ScenarioError(ValueError):
    """Schema or consistency violation; ``path`` locates the offending field."""

    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


@dataclass
class AruSpec:
    name: str
    algorithm: str
    mode: str
    plant: str
    start_time: float
    assets: list
    buses: list
    gains: ControllerGains
    lambda0: float
    sigma0: int
    c_agg: float
    graph: object
    rounds_per_interval: int


@dataclass
class Scenario:
    name: str
    grid: dict
    curve: DeliveryCurve
    c_agg: float
    arus: list
    events: list
    horizon: float
    dt: float
    seed: int
    oracle_every: int
    trace_every: int
    variants: list
    resolved: dict
    base_dir: Path = field(default=Path("."))


def scenario_dir() -> Path:
    return Path(str(resources.files("fvo") / "scenarios"))


def grid_dir() -> Path:
    return Path(str(resources.files("fvo") / "grids"))


def list_scenarios() -> list[str]:
    return sorted(p.stem for p in scenario_dir().glob("*.yaml"))


def resolve_path(name_or_path) -> Path:
    p = Path(name_or_path)
    if p.exists():
        return p
    cand = scenario_dir() / f"{name_or_path}.yaml"
    if cand.exists():
        return cand
    raise ScenarioError(str(name_or_path), "no such scenario file or shipped scenario")


def _num(d, key, path, default=None, kind=float, positive=False, nonneg=False):
    if key not in d:
        if default is None:
            raise ScenarioError(f"{path}.{key}", "required field missing")
        d[key] = default
    v = d[key]
    try:
        if kind is int and (isinstance(v, bool) or float(v) != int(v)):
            raise TypeError
        v = kind(v)
    except (TypeError, ValueError):
        raise ScenarioError(f"{path}.{key}", f"expected {kind.__name__}, got {v!r}") from None
    if positive and not v > 0:
        raise ScenarioError(f"{path}.{key}", f"must be positive, got {v}")
    if nonneg and v < 0:
        raise ScenarioError(f"{path}.{key}", f"must be non-negative, got {v}")
    d[key] = v
    return v


def _section(d, key, path, default=None):
    v = d.get(key, {} if default is None else default)
    if v is None:
        v = {}
    if not isinstance(v, dict):
        raise ScenarioError(f"{path}.{key}", "expected a mapping")
    d[key] = v
    return v


def _fill(d, defaults):
    for k, v in defaults.items():
        d.setdefault(k, v)


def _find_file(ref, base: Path, path: str) -> Path:
    for cand in (base / ref, grid_dir() / Path(ref).name, Path(ref)):
        if cand.exists():
            return cand
    raise ScenarioError(path, f"file {ref!r} not found")


def _generate_assets(gen: dict, path: str) -> list[dict]:
    """Randomised asset table: uniform draws over the given [lo, hi] ranges."""
    count = _num(gen, "count", path, kind=int, positive=True)
    seed = _num(gen, "seed", path, kind=int)
    ranges = {}
    for key, default in (("a", [1.0, 5.0]), ("b", [1.0, 1.0]), ("p_max", [1.0, 2.0]),
                         ("baseline_fraction", [0.0, 0.0]), ("tau", [0.05, 0.2])):
        v = gen.setdefault(key, default)
        if not (isinstance(v, list) and len(v) == 2 and float(v[0]) <= float(v[1])):
            raise ScenarioError(f"{path}.{key}", "expected [low, high]")
        ranges[key] = (float(v[0]), float(v[1]))
    buses = gen.get("buses")
    if not buses:
        raise ScenarioError(f"{path}.buses", "list of host buses required")
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        draw = {k: float(rng.uniform(lo, hi)) for k, (lo, hi) in ranges.items()}
        p_max = round(draw["p_max"], 6)
        out.append(dict(name=f"g{i + 1}", cost=dict(a=round(draw["a"], 6), b=round(draw["b"], 6)),
                        p_max=p_max, baseline=round(draw["baseline_fraction"] * p_max, 6),
                        tau=round(draw["tau"], 6), bus=str(buses[i % len(buses)])))
    return out


def _build_aru(raw: dict, path: str, service: dict, bus_names, dt: float, curve) -> AruSpec:
    _fill(raw, ARU_DEFAULTS)
    name = str(raw.setdefault("name", path))
    alg = raw["algorithm"]
    if alg not in ALGORITHMS:
        raise ScenarioError(f"{path}.algorithm", f"must be one of {ALGORITHMS}, got {alg!r}")
    if raw["mode"] not in ("centralized", "distributed"):
        raise ScenarioError(f"{path}.mode", "must be 'centralized' or 'distributed'")
    if alg == "tot2":
        raw["plant"] = "inertial"
    if raw["plant"] not in PLANTS:
        raise ScenarioError(f"{path}.plant", f"must be one of {PLANTS}")
    start = _num(raw, "start_time", path, nonneg=True)
    rounds = _num(raw, "rounds_per_interval", path, kind=int, positive=True)
    c_agg = _num(raw, "c_agg", path, default=service["c_agg"], positive=True)

    ctrl = _section(raw, "controller", path)
    _fill(ctrl, GAIN_DEFAULTS)
    for key in ("p", "q", "sigma0"):
        _num(ctrl, key, f"{path}.controller", kind=int)
    for key in ("gamma1", "gamma2", "gamma3", "kappa_x", "kappa_lambda",
                "sig_tolerance", "boundary_tolerance", "lambda0"):
        _num(ctrl, key, f"{path}.controller")
    try:
        gains = ControllerGains(**{k: ctrl[k] for k in ControllerGains.__dataclass_fields__})
        check_delivery_time(gains, curve)
    except ControllerError as exc:
        raise ScenarioError(f"{path}.controller", str(exc)) from None
    if ctrl["sigma0"] not in (0, 1):
        raise ScenarioError(f"{path}.controller.sigma0", "must be 0 or 1")

    if "generate" in raw:
        if raw.get("assets"):
            raise ScenarioError(path, "give either 'assets' or 'generate', not both")
        raw["assets"] = _generate_assets(raw["generate"], f"{path}.generate")
        raw["generated_from"] = raw.pop("generate")
    table = raw.get("assets")
    if not isinstance(table, list) or not table:
        raise ScenarioError(f"{path}.assets", "non-empty list of assets required")
    assets, buses = [], []
    default_bus = raw.get("bus")
    for j, a in enumerate(table):
        ap = f"{path}.assets[{j}]"
        if not isinstance(a, dict):
            raise ScenarioError(ap, "expected a mapping")
        cost = _section(a, "cost", ap)
        ca = _num(cost, "a", f"{ap}.cost", positive=True)
        cb = _num(cost, "b", f"{ap}.cost", default=0.0, nonneg=True)
        cc = _num(cost, "c", f"{ap}.cost", default=0.0)
        p_max = _num(a, "p_max", ap)
        a.setdefault("p_min", -p_max)
        p_min = _num(a, "p_min", ap)
        base = _num(a, "baseline", ap, default=0.0)
        tau = _num(a, "tau", ap, default=0.0, nonneg=True)
        a.setdefault("name", f"{name}_{j + 1}")
        bus = str(a.setdefault("bus", default_bus))
        if bus not in bus_names:
            raise ScenarioError(f"{ap}.bus", f"unknown bus {bus!r}")
        if not p_min <= base <= p_max:
            raise ScenarioError(ap, f"infeasible baseline: need p_min <= baseline <= p_max "
                                    f"({p_min} <= {base} <= {p_max})")
        if raw["plant"] == "inertial" and tau < dt:
            raise ScenarioError(f"{ap}.tau", f"inertial plant needs tau >= dt ({dt} s)")
        try:
            assets.append(AssetParams(QuadraticCost(ca, cb, cc), p_max, base, p_min, tau, a["name"]))
        except (ControllerError, ValueError) as exc:
            raise ScenarioError(ap, str(exc)) from None
        buses.append(bus)
    lo = sum(a.lo for a in assets)
    hi = sum(a.hi for a in assets)
    if not (lo <= -c_agg and c_agg <= hi):
        raise ScenarioError(path, f"assets cannot cover +-{c_agg} MW (range [{lo:.4g}, {hi:.4g}])")

    graph = raw["graph"]
    if raw["mode"] == "distributed":
        if not (graph in ("ring", "complete") or isinstance(graph, (str, list))):
            raise ScenarioError(f"{path}.graph", "ring, complete, an edge-list file or a list of pairs")
    return AruSpec(name, alg, raw["mode"], raw["plant"], start, assets, buses, gains,
                   float(ctrl["lambda0"]), int(ctrl["sigma0"]), c_agg, graph, rounds)


def parse_scenario(doc: dict, base_dir: Path = Path("."), name: str = "scenario",
                   overrides: dict | None = None) -> Scenario:
    """Validate a scenario document and resolve its defaults."""
    if not isinstance(doc, dict):
        raise ScenarioError("<root>", "expected a mapping")
    raw = copy.deepcopy(doc)
    for k, v in (overrides or {}).items():
        if v is not None:
            raw[k] = v
    raw.setdefault("name", name)
    _fill(raw, TOP_DEFAULTS)
    dt = _num(raw, "dt", "<root>", positive=True)
    horizon = _num(raw, "horizon", "<root>", positive=True)
    seed = _num(raw, "seed", "<root>", kind=int)
    oracle_every = _num(raw, "oracle_every", "<root>", kind=int, positive=True)
    out = _section(raw, "output", "<root>")
    trace_every = _num(out, "trace_every", "output", default=1, kind=int, positive=True)

    grid = _section(raw, "grid", "<root>")
    _fill(grid, GRID_DEFAULTS)
    for key in ("buses", "lines"):
        if key not in grid:
            raise ScenarioError(f"grid.{key}", "required field missing")
        grid[key] = str(grid[key])
    for key in ("base_mva", "nominal_hz", "divergence_band_hz"):
        _num(grid, key, "grid", positive=True)
    _num(grid, "ddot_filter_tau", "grid", nonneg=True)
    _num(grid, "measurement_every", "grid", kind=int, positive=True)
    agc = _section(grid, "agc", "grid")
    _fill(agc, AGC_DEFAULTS)
    _num(agc, "kp", "grid.agc", nonneg=True)
    _num(agc, "ki", "grid.agc", nonneg=True)
    agc["enabled"] = bool(agc["enabled"])
    noise = _section(grid, "noise", "grid")
    _fill(noise, NOISE_DEFAULTS)
    _num(noise, "deviation_std", "grid.noise", nonneg=True)
    _num(noise, "rate_std", "grid.noise", nonneg=True)
    bus_file = _find_file(grid["buses"], base_dir, "grid.buses")
    line_file = _find_file(grid["lines"], base_dir, "grid.lines")
    from .grid import read_buses  # local import keeps the loader light
    bus_names = [b.name for b in read_buses(bus_file)[0]]
    grid_info = dict(grid, bus_file=bus_file, line_file=line_file)

    service = _section(raw, "service", "<root>")
    kind = service.get("kind")
    try:
        svc = Service(kind)
    except ValueError:
        raise ScenarioError("service.kind", f"must be DR, DM or DC, got {kind!r}") from None
    _num(service, "c_agg", "service", positive=True)
    curve_cfg = _section(service, "curve", "service")
    try:
        if "knots" in curve_cfg:
            curve = DeliveryCurve.from_knots(svc, curve_cfg["knots"])
        else:
            curve = DeliveryCurve.default(svc)
            curve_cfg["knots"] = [list(k) for k in curve.knots]
    except (CurveError, TypeError, ValueError) as exc:
        raise ScenarioError("service.curve.knots", str(exc)) from None
    service["max_delivery_time"] = curve.max_delivery_time

    arus_raw = raw.get("arus")
    if not isinstance(arus_raw, list) or not arus_raw:
        raise ScenarioError("arus", "non-empty list of ARUs required")
    arus = [_build_aru(a, f"arus[{j}]", service, bus_names, dt, curve)
            for j, a in enumerate(arus_raw)]
    names = [a.name for a in arus]
    if len(set(names)) != len(names):
        raise ScenarioError("arus", "ARU names must be unique")
    total = sum(a.c_agg for a in arus)
    if not MIN_CAPACITY_MW <= total <= MAX_CAPACITY_MW[svc]:
        warnings.warn(f"contracted capacity {total} MW outside the {svc.value} range "
                      f"[{MIN_CAPACITY_MW}, {MAX_CAPACITY_MW[svc]}] MW", stacklevel=2)

    events = raw.setdefault("events", [])
    if not isinstance(events, list):
        raise ScenarioError("events", "expected a list")
    for j, ev in enumerate(events):
        ep = f"events[{j}]"
        if not isinstance(ev, dict) or ev.get("kind") not in ("step", "constant", "bounded_noise"):
            raise ScenarioError(f"{ep}.kind", "must be step, constant or bounded_noise")
        bus = str(ev.get("bus", ""))
        if bus not in bus_names:
            raise ScenarioError(f"{ep}.bus", f"unknown bus {bus!r}")
        ev["bus"] = bus
        if ev["kind"] == "step":
            t0 = _num(ev, "t0", ep, nonneg=True)
            _num(ev, "magnitude", ep)
            if t0 > horizon:
                raise ScenarioError(f"{ep}.t0", "event after the horizon")
        elif ev["kind"] == "bounded_noise":
            ev.setdefault("seed", seed + 1000 * (j + 1))
            _num(ev, "seed", ep, kind=int)
            _num(ev, "band", ep, positive=True)
            _num(ev, "bandwidth", ep, positive=True)
            _num(ev, "components", ep, default=24, kind=int, positive=True)
            _num(ev, "t0", ep, default=0.0, nonneg=True)
            if not np.isfinite(ev["band"]) or not np.isfinite(ev["bandwidth"]):
                raise ScenarioError(ep, "noise bounds must be finite")
        else:
            _num(ev, "value", ep, default=0.0)

    variants = raw.setdefault("compare", [])
    if not isinstance(variants, list):
        raise ScenarioError("compare", "expected a list of variants")
    for j, v in enumerate(variants):
        if not isinstance(v, dict) or "label" not in v:
            raise ScenarioError(f"compare[{j}]", "each variant needs a label")
        alg = v.get("algorithm")
        if alg is not None and alg not in ALGORITHMS:
            raise ScenarioError(f"compare[{j}].algorithm", f"must be one of {ALGORITHMS}")

    return Scenario(name=str(raw["name"]), grid=grid_info, curve=curve,
                    c_agg=float(service["c_agg"]), arus=arus, events=events,
                    horizon=horizon, dt=dt, seed=seed, oracle_every=oracle_every,
                    trace_every=trace_every, variants=variants, resolved=raw,
                    base_dir=base_dir)


def load_scenario(path_or_name, **overrides) -> Scenario:
    """Load and validate a scenario by file path or shipped name.

    Keyword overrides (``seed``, ``dt``, ``horizon``) replace top-level keys.
    """
    path = resolve_path(path_or_name)
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioError(str(path), f"YAML parse error: {exc}") from None
    return parse_scenario(doc, path.parent, path.stem, overrides)


def with_algorithm(doc: dict, algorithm: str) -> dict:
    doc = copy.deepcopy(doc)
    for aru in doc["arus"]:
        aru["algorithm"] = algorithm
    return doc

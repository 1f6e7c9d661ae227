import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fvo.grid import (AgcParams, BusParams, GridDivergence, GridError, GridModel, LineParams,
                      coi_measurement, load_signal, step)


def two_bus(loads=(), agc=True):
    buses = [BusParams("g", 5.0, 1.0, generation=100.0, agc=True),
             BusParams("l", 3.0, 1.0, load=100.0)]
    return GridModel(buses, [LineParams(0, 1, 0.1)], AgcParams(enabled=agc), loads=loads)


def simulate(model, dt, t_end, powers=()):
    s = model.initial_state()
    for _ in range(int(round(t_end / dt))):
        s = step(model, s, powers, dt)
    return s


def test_initial_state_is_equilibrium():
    model = two_bus()
    s0 = model.initial_state()
    s1 = simulate(model, 1e-3, 1.0)
    assert np.max(np.abs(s1.omega - model.omega_star)) < 1e-9
    assert np.allclose(s1.delta, s0.delta, atol=1e-9)


def test_rk4_fourth_order():
    # smooth response to a held asset injection
    model = GridModel(two_bus().buses, [LineParams(0, 1, 1.0)], asset_buses=[1])
    ref = simulate(model, 1e-3 / 8, 1.0, [20.0]).omega
    errs = [np.max(np.abs(simulate(model, h, 1.0, [20.0]).omega - ref)) for h in (0.02, 0.01)]
    order = np.log2(errs[0] / errs[1])
    assert 3.6 < order < 4.4


def test_single_bus_damping_steady_state():
    H, D, load = 2.0, 20.0, 0.01
    model = GridModel([BusParams("b", H, D)], [], AgcParams(enabled=False),
                      loads=[load_signal("step", 0, t0=0.1, magnitude=load)],
                      divergence_band_hz=100.0)
    s = simulate(model, 1e-3, 6.0)
    # 2H/D = 0.2 s time constant
    assert (s.omega[0] - model.omega_star) / model.omega_star == pytest.approx(-load / D, rel=1e-8)


def test_agc_restores_nominal():
    model = two_bus([load_signal("step", 1, t0=0.0, magnitude=0.1)])
    s = simulate(model, 5e-3, 60.0)
    meas = coi_measurement(model, s, ())
    assert abs(meas.deviation) < 1e-3


def test_coi_rate_matches_difference():
    model = two_bus([load_signal("step", 1, t0=0.0, magnitude=0.1)])
    s = simulate(model, 1e-3, 0.2)
    dt = 1e-6
    m0 = coi_measurement(model, s, ())
    m1 = coi_measurement(model, step(model, s, (), dt), ())
    assert (m1.deviation - m0.deviation) / dt == pytest.approx(m0.rate, rel=1e-4)


def test_asset_power_opposes_load():
    model = GridModel(two_bus().buses, two_bus().lines, asset_buses=[1],
                      loads=[load_signal("step", 1, t0=0.0, magnitude=0.1)])
    s0 = model.initial_state()
    up = simulate_from(model, s0, [10.0])
    down = simulate_from(model, s0, [-10.0])
    # +10 MW at the load bus raises frequency, -10 MW lowers it by the same amount
    assert np.all(up.omega > model.omega_star) and np.all(down.omega < model.omega_star)
    assert np.allclose(up.omega - model.omega_star, model.omega_star - down.omega, rtol=1e-2)


def simulate_from(model, s, powers, dt=1e-3, n=200):
    for _ in range(n):
        s = step(model, s, powers, dt)
    return s


def test_divergence_detected():
    model = GridModel([BusParams("b", 1.0, 0.0)], [], AgcParams(enabled=False),
                      loads=[load_signal("step", 0, t0=0.01, magnitude=5.0)])
    with pytest.raises(GridDivergence):
        simulate(model, 1e-3, 5.0)


@pytest.mark.parametrize("make", [
    lambda: GridModel([], []),
    lambda: GridModel([BusParams("a", 0.0, 1.0)], []),
    lambda: GridModel([BusParams("a", 1.0, 1.0), BusParams("b", 1.0, 1.0)], []),
    lambda: GridModel([BusParams("a", 1.0, 1.0)], [LineParams(0, 1, 0.1)]),
    lambda: BusParams("a", -1.0, 1.0),
])
def test_invalid_grids_rejected(make):
    with pytest.raises(GridError):
        make()


def test_noise_requires_seed_and_band():
    with pytest.raises(GridError):
        load_signal("bounded_noise", 0, band=1.0, bandwidth=1.0)
    with pytest.raises(GridError):
        load_signal("bounded_noise", 0, seed=1, band=float("inf"), bandwidth=1.0)
    with pytest.raises(GridError):
        load_signal("sawtooth", 0)


@settings(max_examples=30)
@given(st.integers(0, 2**31), st.floats(0.01, 5.0), st.floats(0.1, 5.0))
def test_noise_bounded_and_reproducible(seed, band, bandwidth):
    a = load_signal("bounded_noise", 0, seed=seed, band=band, bandwidth=bandwidth)
    b = load_signal("bounded_noise", 0, seed=seed, band=band, bandwidth=bandwidth)
    t = np.linspace(0.0, 50.0, 2001)
    va = np.array([a(x) for x in t])
    assert va[0] == pytest.approx(0.0, abs=1e-12)
    assert np.max(np.abs(va)) <= band * (1 + 1e-12)
    assert np.array_equal(va, [b(x) for x in t])


def test_single_bus_coi_is_bus_frequency():
    model = GridModel([BusParams("b", 2.0, 5.0)], [], AgcParams(enabled=False),
                      loads=[load_signal("step", 0, t0=0.01, magnitude=0.01)])
    s = simulate(model, 1e-3, 0.3)
    m = coi_measurement(model, s, ())
    assert m.deviation == (s.omega[0] - model.omega_star) / (2 * np.pi)


def test_steady_state_power_balance():
    loads = [load_signal("step", 1, t0=0.01, magnitude=0.05)]
    buses = [BusParams("g", 5.0, 10.0, generation=100.0), BusParams("l", 3.0, 10.0, load=100.0)]
    model = GridModel(buses, [LineParams(0, 1, 0.1)], AgcParams(enabled=False), loads=loads)
    s = simulate(model, 2e-3, 20.0)
    dw = (s.omega - model.omega_star) / model.omega_star
    # sum_k D_k dw_k + net injection change = 0 on a lossless network
    assert np.sum([b.damping for b in model.buses] * dw) == pytest.approx(-0.05, rel=1e-6)

"""Acceptance checks; each test logs one PASS/FAIL line at the stated tolerance.

Run alone with ``pytest tests/test_acceptance.py -s`` or ``python3 tests/test_acceptance.py``.
"""

import warnings

import numpy as np
import pytest

from conftest import record
from fvo.controller import ControllerGains, t_max
from fvo.harness import bench, compare, run, run_variants
from fvo.oracle import InstantProblem, brute_force, kkt_residual, solve_instant, validate_theorem1
from fvo.scenario import load_scenario

pytestmark = pytest.mark.slow

T_MAX = 0.785
SIMULATED = ["ieee14_dc_step", "ieee14_dm_noise", "ieee14_dr_tot2", "ieee39_three_aru",
             "bench_scaling"]


class Runs:
    """Runs each shipped scenario once per session, on demand."""

    def __init__(self, root):
        self.root = root
        self.cache = {}

    def get(self, name):
        if name not in self.cache:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                sc = load_scenario(name)
            self.cache[name] = run(sc, self.root / name)
        return self.cache[name]

    def variants(self, name):
        key = name + "#variants"
        if key not in self.cache:
            self.cache[key] = run_variants(load_scenario(name), self.root / name)
        return self.cache[key]


@pytest.fixture(scope="session")
def runs(tmp_path_factory):
    return Runs(tmp_path_factory.mktemp("acceptance"))


def test_01_convergence_bound():
    v = t_max(ControllerGains(gamma1=3.0, gamma2=3.0, p=2, q=3, kappa_x=1.0))
    ok = abs(v - 0.7853981) < 1e-7 and round(v, 3) == T_MAX
    assert record(1, ok, f"t_max = {v:.7f} s (target 0.785)")


def test_02_dc_step(runs):
    m = runs.get("ieee14_dc_step").metrics["aru1"]
    T = m.convergence_time
    conforming = m.gamma3_margin is not None and m.gamma3_margin > 0
    ok = T is not None and 0.05 <= T <= T_MAX and conforming
    assert record(2, ok, f"DC step T = {T:.3f} s in [0.05, 0.785], target 0.2 +- 0.15; "
                         f"gamma3 margin {m.gamma3_margin:.1f}")


def test_03_dm_noise(runs):
    sc = load_scenario("ieee14_dm_noise")
    m = runs.get("ieee14_dm_noise").metrics["aru1"]
    T = m.convergence_time
    limit = 1e-3 * sc.arus[0].c_agg
    ok = T is not None and T <= T_MAX and m.max_mismatch_after <= limit
    assert record(3, ok, f"DM noise T = {T:.3f} s <= 0.785; max |mismatch| after T at oracle "
                         f"samples {m.max_mismatch_after:.4f} <= {limit:.3f} MW")


def test_04_dr_tot2(runs):
    m = runs.get("ieee14_dr_tot2").metrics["aru1"]
    T = m.convergence_time
    rel = m.integrated_cost_gap / m.integrated_oracle_cost
    ok = T is not None and T <= T_MAX and abs(rel) <= 0.01
    assert record(4, ok, f"DR tot2 T = {T:.3f} s <= 0.785; integrated cost gap "
                         f"{100 * rel:.4f}% <= 1%")


def test_05_algorithm_comparison(runs):
    _, rep = runs.variants("ieee14_algo_compare")
    amp = {k: v["max_abs"] for k, v in rep["labels"].items()}
    ratio = amp["tot1"] / amp["tot2"]
    T2 = rep["convergence_time"]["tot2"]
    ok = ratio >= 2.0 and T2 is not None and T2 <= T_MAX
    w = rep["window"]
    assert record(5, ok, f"window [{w[0]:.3f}, {w[1]:.1f}] s: amplitude tot1 {amp['tot1']:.4f} / "
                         f"tot2 {amp['tot2']:.4f} = {ratio:.1f} >= 2; tot2 T = {T2:.3f} s")


def test_06_three_aru_ordering(runs):
    res = runs.get("ieee39_three_aru")
    by_alg = {m.algorithm: name for name, m in res.metrics.items()}
    rep = compare([(alg, res.t, res.mismatch[name]) for alg, name in by_alg.items()], 1.0)
    rms = {alg: v["rms"] for alg, v in rep["labels"].items()}
    ok = rms["tot2"] < rms["tot1"] < rms["benchmark"]
    assert record(6, ok, "RMS mismatch tot2 {tot2:.3g} < tot1 {tot1:.3g} < benchmark "
                         "{benchmark:.3g} MW".format(**rms))


def test_07_oracle():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 9))
        lo, hi = -rng.uniform(0, 20, n), rng.uniform(0, 20, n)
        prob = InstantProblem(rng.uniform(0.1, 10, n), rng.uniform(0, 5, n), lo, hi,
                              rng.uniform(lo.sum(), hi.sum()))
        worst = max(worst, *kkt_residual(prob, solve_instant(prob)))
    gap = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 4))
        lo, hi = -rng.uniform(0, 1, n), rng.uniform(0, 1, n)
        prob = InstantProblem(rng.uniform(1, 5, n), rng.uniform(0, 2, n), lo, hi,
                              rng.uniform(lo.sum(), hi.sum()))
        gap = max(gap, float(np.max(np.abs(solve_instant(prob).x - brute_force(prob, 1e-3)))))
    ok = worst <= 1e-8 and gap <= 2e-3
    assert record(7, ok, f"max KKT residual {worst:.2e} <= 1e-8 over 1000 instances; "
                         f"grid-search gap {gap:.2e} <= 2e-3 MW over 100 instances")


def test_08_trajectory_rates():
    sc = load_scenario("ieee14_dm_noise")
    assets = sc.arus[0].assets
    rep = validate_theorem1([p.cost.a for p in assets], [p.cost.b for p in assets],
                            [p.lo for p in assets], [p.hi for p in assets],
                            np.linspace(-0.2, -0.1, 51), sc.curve, sc.arus[0].c_agg,
                            c=[p.cost.c for p in assets])
    ok = rep.compared > 0 and rep.max_rel_error <= 1e-6
    assert record(8, ok, f"max relative rate error {rep.max_rel_error:.2e} <= 1e-6 "
                         f"({rep.compared} points, {len(rep.excluded)} excluded)")


def test_09_invariance(runs):
    metrics = []
    for name in SIMULATED:
        metrics += [(f"{name}/{k}", m) for k, m in runs.get(name).metrics.items()]
    results, _ = runs.variants("ieee14_algo_compare")
    for label, res in results.items():
        metrics += [(f"ieee14_algo_compare.{label}/{k}", m) for k, m in res.metrics.items()]
    violations = sum(m.feasibility_violations for _, m in metrics)
    sign_min = min(m.sign_product_min for _, m in metrics)
    ok = violations == 0 and sign_min >= -1e-12
    assert record(9, ok, f"{violations} box violations over {len(metrics)} ARU runs; "
                         f"min (F-e)e = {sign_min:.2e} >= -1e-12")


def test_10_feedforward_consistency(runs):
    errs = []
    for name in ("ieee14_dc_step", "ieee14_dm_noise"):
        m = runs.get(name).metrics["aru1"]
        errs.append((m.feedforward_max_error, m.feedforward_samples))
    worst = max(e for e, _ in errs)
    samples = sum(s for _, s in errs)
    ok = samples > 0 and worst <= 1e-4
    assert record(10, ok, f"max |alpha - x*dot| {worst:.2e} <= 1e-4 MW/s "
                          f"over {samples} converged oracle samples")


def test_11_scaling():
    rep = bench(sizes=[30, 60, 120], modes=["centralized", "distributed"], algorithm="tot2",
                steps=2000, repeats=5)
    k_c = rep["exponents"]["centralized"]
    k_d = rep["exponents"]["distributed"]
    slowest = max(r["reported_time"] for r in rep["rows"])
    ok = abs(k_c - 1.0) <= 0.25 and k_d < 0.5 and slowest <= 0.5e-3
    assert record(11, ok, f"exponents centralized {k_c:.2f} (1 +- 0.25), distributed per node "
                          f"{k_d:.2f} (< 0.5); slowest interval {slowest * 1e6:.0f} us <= 500 us")


def test_12_determinism(runs, tmp_path):
    first = runs.get("ieee14_dr_tot2").trace_path.read_bytes()
    again = run(load_scenario("ieee14_dr_tot2"), tmp_path).trace_path.read_bytes()
    ok = first == again and len(first) > 0
    assert record(12, ok, f"ieee14_dr_tot2 traces byte-identical across two runs "
                          f"({len(first)} bytes)")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))

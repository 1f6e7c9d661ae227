import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fvo.controller import Controller, ControllerGains
from fvo.distributed import (CommGraph, ConsensusError, DistributedController, GraphError,
                             NodeState, consensus_round)
from fvo.oracle import InstantProblem, solve_instant

from test_controller import DM, assets, meas


def random_inputs(seed, steps=400):
    rng = np.random.default_rng(seed)
    dev, out = 0.0, []
    for k in range(steps):
        rate = rng.normal(0, 1.0)
        dev = float(np.clip(dev + rate * 1e-3, -0.3, 0.3))
        out.append(meas(dev, rate, rng.normal(0, 10), k * 1e-3))
    return out


@pytest.mark.parametrize("algorithm", ["tot1", "tot2", "benchmark"])
def test_single_node_matches_centralised_bitwise(algorithm):
    ctl = Controller(assets()[:1], ControllerGains(), DM, 20.0, algorithm, dt=1e-3)
    dctl = DistributedController(ctl, CommGraph.ring(1))
    cs, ds = ctl.initial_state(), dctl.initial_state()
    for m in random_inputs(5):
        cs = ctl.step(cs, m)
        ds = dctl.step(ds, m)
        assert ds.ctrl.x == cs.x and ds.ctrl.r == cs.r
        assert ds.ctrl.lam == cs.lam


def test_complete_graph_averages_in_one_round():
    n = 5
    g = CommGraph.complete(n)
    sig = [(float(i), float(i * i)) for i in range(n)]
    nodes = [NodeState(0.0, s, (0.0, 0.0)) for s in sig]
    out = consensus_round(nodes, g, sig)
    for nd in out:
        assert nd.estimate == pytest.approx((2.0, 6.0), rel=1e-14)
        assert nd.round == 1


@settings(max_examples=30)
@given(st.integers(2, 12), st.integers(0, 2**31))
def test_consensus_conserves_sum_and_converges(n, seed):
    rng = np.random.default_rng(seed)
    g = CommGraph.ring(n)
    W = g.matrix()
    assert np.allclose(W, W.T) and np.allclose(W.sum(axis=1), 1.0) and np.all(W >= 0)
    sig = [tuple(rng.normal(size=3)) for _ in range(n)]
    nodes = [NodeState(0.0, s, (0.0,) * 3) for s in sig]
    for _ in range(400):
        nodes = consensus_round(nodes, g, sig)
        assert np.allclose(np.sum([nd.estimate for nd in nodes], axis=0),
                           np.sum(sig, axis=0), atol=1e-10)
    mean = np.mean(sig, axis=0)
    assert np.allclose([nd.estimate for nd in nodes], mean, atol=1e-6)


def test_disconnected_graph_rejected():
    with pytest.raises(GraphError, match="disconnected"):
        CommGraph.from_edges(4, [(0, 1), (2, 3)])
    with pytest.raises(GraphError):
        CommGraph.from_edges(2, [(0, 5)])


def test_graph_from_file(tmp_path):
    p = tmp_path / "g.txt"
    p.write_text("# ring\n0 1\n1 2\n2,0\n")
    g = CommGraph.from_file(3, p)
    assert g.edges == ((0, 1), (0, 2), (1, 2))


def test_round_mismatch_rejected():
    g = CommGraph.ring(2)
    nodes = [NodeState(0.0, (0.0,), (0.0,), 0), NodeState(0.0, (0.0,), (0.0,), 1)]
    with pytest.raises(ConsensusError):
        consensus_round(nodes, g, [(0.0,), (0.0,)])
    with pytest.raises(ConsensusError):
        consensus_round(nodes[:1], g, [(0.0,)])


def test_graph_size_must_match_assets():
    ctl = Controller(assets(), ControllerGains(), DM, 50.0, "tot1", dt=1e-3)
    with pytest.raises(GraphError):
        DistributedController(ctl, CommGraph.ring(3))
    with pytest.raises(GraphError):
        DistributedController(ctl, CommGraph.ring(6), rounds_per_interval=0)


@pytest.mark.parametrize("algorithm", ["tot1", "tot2"])
def test_ring_reaches_oracle_at_frozen_frequency(algorithm):
    ctl = Controller(assets(), ControllerGains(), DM, 50.0, algorithm, dt=1e-3)
    dctl = DistributedController(ctl, CommGraph.ring(ctl.n), rounds_per_interval=3)
    dev = -0.15
    k = ctl.k
    sol = solve_instant(InstantProblem([f / 2 for f in k.fxx], k.b, k.lo, k.hi, ctl.required(dev)))
    ds = dctl.initial_state()
    for i in range(3000):
        ds = dctl.step(ds, meas(dev, t=i * 1e-3))
    assert abs(sum(ds.ctrl.x) - ctl.required(dev)) <= 1e-3 * ctl.c_agg
    assert np.all(np.abs(np.array(ds.ctrl.x) - sol.x) <= 1e-2 * np.maximum(1.0, np.abs(sol.x)))
    assert max(nd.lam for nd in ds.nodes) - min(nd.lam for nd in ds.nodes) < 1e-3


@settings(max_examples=30)
@given(st.integers(2, 12), st.integers(0, 2**31))
def test_mixing_contracts_spread(n, seed):
    rng = np.random.default_rng(seed)
    g = CommGraph.ring(n)
    lam = list(rng.normal(size=n))
    for _ in range(20):
        new = g.mix(lam)
        assert max(new) - min(new) <= max(lam) - min(lam) + 1e-12
        lam = new


def test_ring_rate_matches_spectral_gap():
    n = 10
    g = CommGraph.ring(n)
    rate = sorted(np.abs(np.linalg.eigvalsh(g.matrix())))[-2]
    sig = [(float(i),) for i in range(n)]
    nodes = [NodeState(0.0, s, (0.0,)) for s in sig]
    err0 = np.linalg.norm(np.array(sig)[:, 0] - 4.5)
    for k in range(1, 60):
        nodes = consensus_round(nodes, g, sig)
        err = np.linalg.norm([nd.estimate[0] - 4.5 for nd in nodes])
        assert err <= rate ** k * err0 * (1 + 1e-9)


def test_zero_signals_stay_zero():
    g = CommGraph.ring(4)
    nodes = [NodeState(0.0, (0.0, 0.0), (0.0, 0.0)) for _ in range(4)]
    for _ in range(5):
        nodes = consensus_round(nodes, g, [(0.0, 0.0)] * 4)
    assert all(nd.estimate == (0.0, 0.0) for nd in nodes)

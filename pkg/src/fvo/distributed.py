"""Distributed realisation of the ARU controllers over a sparse graph.

Every asset keeps a local multiplier estimate ``lam_i``.  The sums the
feedforward terms need (total curvature weight, its frequency-coupled
counterpart) and the aggregate delivery mismatch are replaced by network
averages tracked with first-order dynamic average consensus, scaled by the
number of assets.  The multiplier estimates are mixed with Metropolis weights
and driven by the local mismatch estimate, so their mean follows the
centralised multiplier update.

Message passing is an in-process synchronous simulation: one round reads
every neighbour's previous value and writes all nodes at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .controller import (Controller, ControllerState, NonFiniteState,
                         feedforward_beta, feedforward_beta2)

N_SIGNALS = 4   # mismatch share, rho, rho*f_xw, rho*f_xww


class GraphError(ValueError):
    pass


class ConsensusError(RuntimeError):
    pass


@dataclass(frozen=True)
class CommGraph:
    """Undirected communication graph with Metropolis mixing weights."""

    n: int
    edges: tuple
    neighbors: tuple
    weights: tuple
    self_weight: tuple

    @classmethod
    def from_edges(cls, n: int, edges) -> "CommGraph":
        if n < 1:
            raise GraphError("graph needs at least one node")
        es = set()
        for i, j in edges:
            i, j = int(i), int(j)
            if not (0 <= i < n and 0 <= j < n):
                raise GraphError(f"edge ({i}, {j}) references a missing node")
            if i != j:
                es.add((min(i, j), max(i, j)))
        adj = [[] for _ in range(n)]
        for i, j in sorted(es):
            adj[i].append(j)
            adj[j].append(i)
        seen, stack = {0}, [0]
        while stack:
            for j in adj[stack.pop()]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        if len(seen) != n:
            raise GraphError(f"communication graph is disconnected "
                             f"({len(seen)} of {n} nodes reachable from node 0)")
        deg = [len(a) for a in adj]
        nbrs = tuple(tuple(sorted(a)) for a in adj)
        w = tuple(tuple(1.0 / (1.0 + max(deg[i], deg[j])) for j in nbrs[i])
                  for i in range(n))
        self_w = tuple(1.0 - sum(w[i]) for i in range(n))
        return cls(n, tuple(sorted(es)), nbrs, w, self_w)

    @classmethod
    def ring(cls, n: int) -> "CommGraph":
        return cls.from_edges(n, [(i, (i + 1) % n) for i in range(n)] if n > 1 else [])

    @classmethod
    def complete(cls, n: int) -> "CommGraph":
        return cls.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])

    @classmethod
    def from_file(cls, n: int, path) -> "CommGraph":
        """Edge list, one ``i j`` pair (0-based) per line; ``#`` comments."""
        edges = []
        for line in Path(path).read_text().splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                i, j = line.replace(",", " ").split()[:2]
                edges.append((int(i), int(j)))
        return cls.from_edges(n, edges)

    def matrix(self) -> np.ndarray:
        W = np.diag(np.asarray(self.self_weight, float))
        for i, (nb, w) in enumerate(zip(self.neighbors, self.weights)):
            W[i, list(nb)] = w
        return W

    def mix(self, values: Sequence[float]) -> list[float]:
        out = []
        for i in range(self.n):
            acc = self.self_weight[i] * values[i]
            for j, w in zip(self.neighbors[i], self.weights[i]):
                acc += w * values[j]
            out.append(acc)
        return out


@dataclass(frozen=True)
class NodeState:
    """Per-node consensus variables.

    ``estimate[k]`` tracks the network average of local signal ``k``;
    ``correction[k]`` is the estimate minus the node's own current signal.
    """

    lam: float
    estimate: tuple
    correction: tuple
    round: int = 0


def consensus_round(nodes: Sequence[NodeState], graph: CommGraph,
                    signals: Sequence[Sequence[float]]) -> list[NodeState]:
    """One synchronous dynamic-average-consensus round on every tracked signal.

    ``signals[i]`` holds node ``i``'s current local values.  The estimates
    satisfy ``sum_i estimate_i == sum_i signal_i`` after every round.
    Multipliers are left unchanged; they are mixed in the control step.
    """
    if len(nodes) != graph.n:
        raise ConsensusError("node count does not match the graph")
    rnd = nodes[0].round
    if any(nd.round != rnd for nd in nodes):
        raise ConsensusError("nodes are not at the same round index")
    n_sig = len(signals[0])
    new_est = [[0.0] * n_sig for _ in range(graph.n)]
    for k in range(n_sig):
        pre = [signals[i][k] + nodes[i].correction[k] for i in range(graph.n)]
        mixed = graph.mix(pre)
        for i in range(graph.n):
            new_est[i][k] = mixed[i]
    return [NodeState(nodes[i].lam, tuple(new_est[i]),
                      tuple(new_est[i][k] - signals[i][k] for k in range(n_sig)),
                      rnd + 1)
            for i in range(graph.n)]


@dataclass(frozen=True)
class DistributedState:
    ctrl: ControllerState
    nodes: tuple


class DistributedController:
    """Runs a :class:`Controller` with local multiplier estimates.

    Parameters
    ----------
    controller : Controller
        Supplies the per-asset kernels, gains, curve and contract.
    graph : CommGraph
        One node per asset.
    rounds_per_interval : int
        Consensus rounds executed per control interval.
    """

    def __init__(self, controller: Controller, graph: CommGraph, rounds_per_interval: int = 1):
        if graph.n != controller.n:
            raise GraphError(f"graph has {graph.n} nodes for {controller.n} assets")
        if rounds_per_interval < 1:
            raise GraphError("rounds_per_interval must be >= 1")
        self.ctl = controller
        self.graph = graph
        self.rounds = int(rounds_per_interval)

    @property
    def n(self) -> int:
        return self.ctl.n

    def _signals(self, x, sigma, req):
        k = self.ctl.k
        share = req / self.n
        out = []
        for i in range(self.n):
            rho = k.inv_fxx[i] if sigma[i] else 0.0
            out.append((x[i] - share, rho, rho * k.c[i], rho * k.cww[i]))
        return out

    def initial_state(self) -> DistributedState:
        st = self.ctl.initial_state()
        sig = self._signals(st.x, st.sigma, 0.0)
        nodes = tuple(NodeState(st.lam, tuple(s), (0.0,) * N_SIGNALS) for s in sig)
        return DistributedState(st, nodes)

    def _rounds(self, nodes, signals):
        for _ in range(self.rounds):
            nodes = consensus_round(nodes, self.graph, signals)
        return nodes

    def _mix_lambda(self, nodes):
        lams = [nd.lam for nd in nodes]
        for _ in range(self.rounds):
            lams = self.graph.mix(lams)
        return lams

    def step(self, ds: DistributedState, meas) -> DistributedState:
        alg = self.ctl.algorithm
        if alg == "tot1":
            new = self._step_tot1(ds, meas)
        elif alg == "tot2":
            new = self._step_tot2(ds, meas)
        else:
            new = self._step_benchmark(ds, meas)
        if not all(math.isfinite(nd.lam) for nd in new.nodes):
            raise NonFiniteState(f"non-finite multiplier estimate at t={meas.timestamp}")
        return new

    def _finish(self, nodes, lams, incr, fields):
        dt = self.ctl.dt
        new_nodes = tuple(NodeState(lams[i] + dt * incr[i], nd.estimate, nd.correction, nd.round)
                          for i, nd in enumerate(nodes))
        lam_mean = sum(nd.lam for nd in new_nodes) / self.n
        return DistributedState(ControllerState(lam=lam_mean, **fields), new_nodes)

    def _step_tot1(self, ds, meas):
        ctl, k, n = self.ctl, self.ctl.k, self.n
        st = ds.ctrl
        dev, rate = meas.deviation, meas.rate
        req = ctl.required(dev)
        mismatch = sum(st.x) - req
        Fs, es, acts, sigmas = [], [], [], []
        for i in range(n):
            F, e, act, sigma = ctl.local_error(i, st.r[i], st.x[i], ds.nodes[i].lam, dev)
            Fs.append(F); es.append(e); acts.append(act); sigmas.append(sigma)
        nodes = self._rounds(ds.nodes, self._signals(st.x, sigmas, req))
        lams = self._mix_lambda(ds.nodes)
        hw = ctl.slope(dev, rate)
        kl = ctl.gains.kappa_lambda
        alphas, rs, xs, us, sigs, incr = [], [], [], [], [], []
        beta_sum = 0.0
        for i in range(n):
            est = nodes[i].estimate
            beta = feedforward_beta(n * est[1], n * est[2], rate, hw, ctl.c_agg)
            a = -k.inv_fxx[i] * (k.c[i] * rate + beta) if sigmas[i] else 0.0
            rn, xn, u, sg = ctl.advance(i, st.r[i], st.x[i], es[i], acts[i], a)
            alphas.append(a); rs.append(rn); xs.append(xn); us.append(u); sigs.append(sg)
            incr.append(kl * (n * est[0]) + beta)
            beta_sum += beta
        z = tuple(alphas)
        return self._finish(nodes, lams, incr, dict(
            x=tuple(xs), r=tuple(rs), sigma=tuple(sigmas), e=tuple(es), u=tuple(us),
            beta=beta_sum / n, alpha=z, alpha1=z, F=tuple(Fs), sig=tuple(sigs),
            mismatch=mismatch, required=req, slope=hw))

    def _step_tot2(self, ds, meas):
        ctl, k, n = self.ctl, self.ctl.k, self.n
        st = ds.ctrl
        dev, rate, acc = meas.deviation, meas.rate, meas.acceleration
        req = ctl.required(dev)
        mismatch = sum(st.x) - req
        hw = ctl.slope(dev, rate)
        c_agg = ctl.c_agg
        # first-order drive from the estimates of the previous round
        a1 = []
        for i in range(n):
            est = ds.nodes[i].estimate
            b1 = feedforward_beta(n * est[1], n * est[2], rate, hw, c_agg)
            a1.append(-k.inv_fxx[i] * (k.c[i] * rate + b1) if st.sigma[i] else 0.0)
        sigmas = []
        for i in range(n):
            _, _, _, sigma = ctl.local_error(i, st.r[i], st.x[i], ds.nodes[i].lam, dev, a1[i])
            sigmas.append(sigma)
        nodes = self._rounds(ds.nodes, self._signals(st.x, sigmas, req))
        lams = self._mix_lambda(ds.nodes)
        kl = ctl.gains.kappa_lambda
        Fs, es, alphas, a1s, rs, xs, us, sigs, incr = [], [], [], [], [], [], [], [], []
        b1_sum = b2_sum = 0.0
        for i in range(n):
            est = nodes[i].estimate
            s_rho, s_rw, s_rww = n * est[1], n * est[2], n * est[3]
            b1 = feedforward_beta(s_rho, s_rw, rate, hw, c_agg)
            a1i = -k.inv_fxx[i] * (k.c[i] * rate + b1) if sigmas[i] else 0.0
            r = st.r[i]
            # locally visible switching: own pattern or curve segment changed
            if st.alpha1 and (hw != st.slope or sigmas[i] != st.sigma[i]):
                r = ctl.shift(i, r, ctl.alpha1_jump(i, a1i, st.alpha1[i]))
            F, e, act, _ = ctl.local_error(i, r, st.x[i], ds.nodes[i].lam, dev, a1i)
            b2 = feedforward_beta2(s_rho, s_rw, s_rww, rate, acc, hw, c_agg)
            if sigmas[i]:
                a2 = -k.tau[i] * k.inv_fxx[i] * (k.c[i] * acc + k.cww[i] * (rate * rate) + b2) + a1i
            else:
                a2 = a1i
            rn, xn, u, sg = ctl.advance(i, r, st.x[i], e, act, a2)
            u += (r - st.r[i]) / ctl.dt
            Fs.append(F); es.append(e); alphas.append(a2); a1s.append(a1i)
            rs.append(rn); xs.append(xn); us.append(u); sigs.append(sg)
            incr.append(kl * (n * est[0]) + b1)
            b1_sum += b1
            b2_sum += b2
        return self._finish(nodes, lams, incr, dict(
            x=tuple(xs), r=tuple(rs), sigma=tuple(sigmas), e=tuple(es), u=tuple(us),
            beta=b1_sum / n, beta2=b2_sum / n, alpha=tuple(alphas), alpha1=tuple(a1s),
            F=tuple(Fs), sig=tuple(sigs), mismatch=mismatch, required=req, slope=hw))

    def _step_benchmark(self, ds, meas):
        ctl, n = self.ctl, self.n
        st = ds.ctrl
        dev = meas.deviation
        req = ctl.required(dev)
        mismatch = sum(st.x) - req
        nodes = self._rounds(ds.nodes, self._signals(st.x, st.sigma, req))
        lams = self._mix_lambda(ds.nodes)
        kl = ctl.gains.kappa_lambda
        rs, xs, us, es, Fs, incr = [], [], [], [], [], []
        for i in range(n):
            rn, xn, u, e, F = ctl.benchmark_advance(i, st.r[i], st.x[i], ds.nodes[i].lam, dev)
            rs.append(rn); xs.append(xn); us.append(u); es.append(e); Fs.append(F)
            incr.append(kl * (n * nodes[i].estimate[0]))
        z = (0.0,) * n
        return self._finish(nodes, lams, incr, dict(
            x=tuple(xs), r=tuple(rs), sigma=st.sigma, e=tuple(es), u=tuple(us),
            alpha=z, alpha1=z, F=tuple(Fs), sig=st.sig, mismatch=mismatch, required=req))


def distributed_step(ds: DistributedState, dctl: DistributedController, meas) -> DistributedState:
    return dctl.step(ds, meas)

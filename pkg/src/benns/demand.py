"""Benchmarking math: host CPU/memory demand, link bandwidth demand, per-SFC maxima
and total propagation delay.

The scalar functions follow the definitions term by term and serve as the
reference. ``DemandModel`` computes the same quantities for a whole embedding at
once and is what the evaluators use.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence, Union

import numpy as np

from .errors import InvalidArgumentError, UndefinedDemandError
from .netmodel import (
    EGRESS,
    INGRESS,
    Embedding,
    SfcInstanceGraph,
    SfcRequest,
    Topology,
    VnfType,
    expand_sfcr,
)
from .predictors import UsageModel
from .traffic import TrafficSeries

Traffic = Union[TrafficSeries, Mapping[int, TrafficSeries]]


def _rate(traffic: Traffic, s: int, t: int) -> float:
    series = traffic if isinstance(traffic, TrafficSeries) else traffic[s]
    return series.rate(t)


def _n_slots(traffic: Traffic) -> int:
    if isinstance(traffic, TrafficSeries):
        return len(traffic)
    lengths = {len(v) for v in traffic.values()}
    if len(lengths) != 1:
        raise InvalidArgumentError("per-SFC traffic series must share one length")
    return lengths.pop()


def _host_usage(embedding: Embedding, predict, h: int, t: int, traffic: Traffic) -> float:
    total = 0.0
    for s in embedding.sfcs_on_host(h):
        r = _rate(traffic, s, t)
        graph = embedding.sfcs[s].graph
        for i in embedding.instances_on(s, h):
            inst = graph.instances[i]
            total += float(predict(inst.vnf, r / 2 ** (inst.level - 1)))
    return total


def host_cpu_demand(embedding: Embedding, predictors: UsageModel, h: int, t: int, traffic: Traffic) -> float:
    return _host_usage(embedding, predictors.cpu_pred, h, t, traffic) / embedding.topology.hosts[h].cpus


def host_mem_demand(embedding: Embedding, predictors: UsageModel, h: int, t: int, traffic: Traffic) -> float:
    return _host_usage(embedding, predictors.mem_pred, h, t, traffic) / embedding.topology.hosts[h].memory_mb


def link_bw_demand(embedding: Embedding, l: int, t: int, traffic: Traffic) -> float:
    total = 0.0
    for s in embedding.sfcs_on_link(l):
        r = _rate(traffic, s, t)
        vlinks = embedding.sfcs[s].graph.virtual_links
        for y in embedding.vlinks_on(s, l):
            total += r / 2 ** (vlinks[y].level - 1)
    return total / embedding.topology.links[l].bandwidth_mbps


def _require_deployed(embedding: Embedding, s: int) -> None:
    if not embedding.sfcs[s].deployed:
        raise UndefinedDemandError(f"SFC {s} is not deployed")


def sfc_maxima(
    embedding: Embedding, predictors: UsageModel, s: int, t: int, traffic: Traffic
) -> tuple[float, float, float]:
    """(alpha, gamma, beta) of SFC ``s`` at slot ``t``.

    An SFC whose whole chain sits on the gateway host uses no links; its
    bandwidth maximum is taken as 0.
    """
    _require_deployed(embedding, s)
    hosts = embedding.hosts_of(s)
    alpha = max(host_cpu_demand(embedding, predictors, h, t, traffic) for h in hosts)
    gamma = max(host_mem_demand(embedding, predictors, h, t, traffic) for h in hosts)
    links = embedding.links_of(s)
    beta = max((link_bw_demand(embedding, l, t, traffic) for l in links), default=0.0)
    return alpha, gamma, beta


def total_prop_delay(embedding: Embedding, s: int) -> float:
    _require_deployed(embedding, s)
    vlinks = embedding.sfcs[s].graph.virtual_links
    total = 0.0
    for l in embedding.links_of(s):
        d = embedding.topology.links[l].prop_delay_ms
        for y in embedding.vlinks_on(s, l):
            total += d / 2 ** (vlinks[y].level - 1)
    return 2.0 * total


@dataclass(frozen=True)
class DemandSample:
    sfc: int
    slot: int
    alpha: float
    gamma: float
    beta: float
    delta_ms: float


@dataclass(frozen=True, eq=False)
class DemandArrays:
    """Per-SFC demands over the distinct traffic levels of a series.

    Slots with identical rates give identical demands, so arrays are indexed by
    distinct rate column ``u``; ``rate_index`` maps slot -> column and ``counts``
    holds the number of slots per column.
    """

    deployed: np.ndarray  # (S,) bool
    alpha: np.ndarray  # (S, U)
    gamma: np.ndarray  # (S, U)
    beta: np.ndarray  # (S, U)
    delta: np.ndarray  # (S,)
    rate_index: np.ndarray  # (T,)
    counts: np.ndarray  # (U,)

    @property
    def n_slots(self) -> int:
        return self.rate_index.size

    def per_slot(self, values: np.ndarray) -> np.ndarray:
        return values[:, self.rate_index]

    def samples(self, sfc_ids: Sequence[int] | None = None) -> list[DemandSample]:
        out = []
        alpha, gamma, beta = (self.per_slot(a) for a in (self.alpha, self.gamma, self.beta))
        for s in np.flatnonzero(self.deployed):
            sid = int(s) if sfc_ids is None else sfc_ids[s]
            d = float(self.delta[s])
            for t in range(self.n_slots):
                out.append(DemandSample(sid, t, float(alpha[s, t]), float(gamma[s, t]), float(beta[s, t]), d))
        return out


class DemandModel:
    """Vectorized demand computation for one (topology, SFCRs, usage, traffic) problem.

    Usage predictions are tabulated once per (instance row, distinct rate), so
    evaluating an embedding costs a handful of array operations.
    """

    def __init__(
        self,
        topology: Topology,
        sfcrs: Sequence[SfcRequest] | Sequence[SfcInstanceGraph],
        usage: UsageModel,
        traffic: Traffic,
        gateway: int = 0,
    ):
        self.topology = topology
        self.gateway = gateway
        self.graphs = [g if isinstance(g, SfcInstanceGraph) else expand_sfcr(g) for g in sfcrs]
        self.n_sfcs = len(self.graphs)
        self.n_hosts = topology.n_hosts
        self.n_links = len(topology.links)

        row_sfc, row_vnf, row_level = [], [], []
        vl_sfc, vl_src, vl_dst, vl_weight = [], [], [], []
        self.row_offsets = []
        offset = 0
        for s, g in enumerate(self.graphs):
            self.row_offsets.append(offset)
            for inst in g.instances:
                row_sfc.append(s)
                row_vnf.append(inst.vnf)
                row_level.append(inst.level)
            for y in g.virtual_links:
                vl_sfc.append(s)
                vl_src.append(-1 if y.source == INGRESS else offset + y.source)
                vl_dst.append(-1 if y.target == EGRESS else offset + y.target)
                vl_weight.append(0.5 ** (y.level - 1))
            offset += len(g.instances)
        self.n_rows = offset
        self.row_sfc = np.array(row_sfc, dtype=np.int64)
        self.row_level = np.array(row_level, dtype=np.int64)
        self.row_vnf = row_vnf
        self.vl_sfc = np.array(vl_sfc, dtype=np.int64)
        self.vl_src = np.array(vl_src, dtype=np.int64)
        self.vl_dst = np.array(vl_dst, dtype=np.int64)
        self.vl_weight = np.array(vl_weight)

        # traffic: (S, T) rates, compressed to distinct slot columns
        n_slots = _n_slots(traffic)
        self.shared_traffic = isinstance(traffic, TrafficSeries)
        if self.shared_traffic:
            rates = np.broadcast_to(traffic.rates, (self.n_sfcs, n_slots))
        else:
            rates = np.stack([traffic[s].rates for s in range(self.n_sfcs)])
        columns, rate_index, counts = np.unique(rates, axis=1, return_inverse=True, return_counts=True)
        self.rates = np.ascontiguousarray(columns)  # (S, U)
        self.rate_index = rate_index.reshape(-1)
        self.counts = counts

        row_rates = self.rates[self.row_sfc] / (2.0 ** (self.row_level - 1))[:, None]  # (R, U)
        self.row_cpu = np.zeros_like(row_rates)
        self.row_mem = np.zeros_like(row_rates)
        for vnf in VnfType:
            mask = np.array([v is vnf for v in row_vnf], dtype=bool)
            if mask.any():
                r = row_rates[mask]
                self.row_cpu[mask] = np.asarray(usage.cpu_pred(vnf, r.ravel())).reshape(r.shape)
                self.row_mem[mask] = np.asarray(usage.mem_pred(vnf, r.ravel())).reshape(r.shape)

        self.host_cpus = np.array([h.cpus for h in topology.hosts])
        self.host_mem = np.array([h.memory_mb for h in topology.hosts])
        self.link_bw = np.array([l.bandwidth_mbps for l in topology.links])
        self.link_delay = np.array([l.prop_delay_ms for l in topology.links])

        H = self.n_hosts
        self.path_incidence = np.zeros((H, H, self.n_links))
        for a in range(H):
            for b in range(H):
                for l in topology.shortest_path(a, b):
                    self.path_incidence[a, b, l] = 1.0
        self.path_delay = self.path_incidence @ self.link_delay

    # -- placement helpers -------------------------------------------------

    def sfc_slices(self):
        for s, g in enumerate(self.graphs):
            yield s, slice(self.row_offsets[s], self.row_offsets[s] + len(g.instances))

    def placement_from_genome(self, genome: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(host_of_row with -1 for undeployed SFCs, deployed mask per SFC)."""
        set_rows = genome.any(axis=1)
        deployed = np.logical_and.reduceat(set_rows, self.row_offsets) if self.n_rows else np.zeros(0, bool)
        host = genome.argmax(axis=1).astype(np.int64)
        host[~deployed[self.row_sfc]] = -1
        return host, deployed

    def placement_from_embedding(self, embedding: Embedding) -> tuple[np.ndarray, np.ndarray]:
        host = np.full(self.n_rows, -1, dtype=np.int64)
        deployed = np.zeros(self.n_sfcs, dtype=bool)
        for (s, sl), emb in zip(self.sfc_slices(), embedding.sfcs):
            if emb.deployed:
                deployed[s] = True
                host[sl] = emb.placement
        return host, deployed

    # -- evaluation --------------------------------------------------------

    def evaluate_genome(self, genome: np.ndarray) -> DemandArrays:
        host, deployed = self.placement_from_genome(np.asarray(genome))
        vl_ok = deployed[self.vl_sfc]
        src = np.where(self.vl_src < 0, self.gateway, host[self.vl_src])[vl_ok]
        dst = np.where(self.vl_dst < 0, self.gateway, host[self.vl_dst])[vl_ok]
        incidence = self.path_incidence[src, dst]  # (V', L)
        delays = self.path_delay[src, dst]
        return self._evaluate(host, deployed, vl_ok, incidence, delays)

    def evaluate_embedding(self, embedding: Embedding) -> DemandArrays:
        """Like ``evaluate_genome`` but honours the embedding's explicit routes."""
        host, deployed = self.placement_from_embedding(embedding)
        vl_ok = deployed[self.vl_sfc]
        routes = [r for emb in embedding.sfcs if emb.deployed for r in emb.routes]
        incidence = np.zeros((len(routes), self.n_links))
        for i, route in enumerate(routes):
            incidence[i, list(route)] = 1.0
        delays = incidence @ self.link_delay
        return self._evaluate(host, deployed, vl_ok, incidence, delays)

    def _evaluate(self, host, deployed, vl_ok, incidence, delays) -> DemandArrays:
        S, H = self.n_sfcs, self.n_hosts
        placed = host >= 0
        rows = np.flatnonzero(placed)
        onehot = np.zeros((H, self.n_rows))
        onehot[host[rows], rows] = 1.0
        safe_host = np.where(placed, host, 0)

        def host_max(row_usage, capacity):
            per_host = (onehot @ row_usage) / capacity[:, None]  # (H, U)
            vals = per_host[safe_host]
            vals[~placed] = 0.0
            return np.maximum.reduceat(vals, self.row_offsets, axis=0)

        alpha = host_max(self.row_cpu, self.host_cpus)
        gamma = host_max(self.row_mem, self.host_mem)

        vl_sfc = self.vl_sfc[vl_ok]
        w = self.vl_weight[vl_ok]
        used = incidence > 0
        if self.shared_traffic:
            # bandwidth demand of link l is rate * load_l / b_l
            coef = (w @ incidence) / self.link_bw
            per_vlink = np.where(used, coef, 0.0).max(axis=1, initial=0.0)
            sfc_coef = np.zeros(S)
            np.maximum.at(sfc_coef, vl_sfc, per_vlink)
            beta = sfc_coef[:, None] * self.rates[0][None, :]
        else:
            bw = ((incidence * w[:, None]).T @ self.rates[vl_sfc]) / self.link_bw[:, None]  # (L, U)
            uses_link = np.zeros((S, self.n_links), dtype=bool)
            np.logical_or.at(uses_link, vl_sfc, used)
            beta = np.where(uses_link[:, :, None], bw[None], 0.0).max(axis=1, initial=0.0)

        delta = 2.0 * np.bincount(vl_sfc, weights=w * delays, minlength=S)
        return DemandArrays(deployed, alpha, gamma, beta, delta, self.rate_index, self.counts)


def demand_series(embedding: Embedding, predictors: UsageModel, traffic: Traffic) -> list[DemandSample]:
    """One sample per (deployed SFC, slot), SFCs identified by request id."""
    if _n_slots(traffic) < 1:
        raise InvalidArgumentError("empty traffic")
    model = DemandModel(embedding.topology, [e.graph for e in embedding.sfcs], predictors, traffic, embedding.gateway)
    arrays = model.evaluate_embedding(embedding)
    return arrays.samples([e.request.id for e in embedding.sfcs])


DEMAND_CSV_HEADER = ["sfc", "slot", "alpha", "gamma", "beta", "delta_ms"]


def write_demand_csv(samples: Sequence[DemandSample], path: str | Path, latencies: Sequence[float] | None = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DEMAND_CSV_HEADER + (["latency_ms"] if latencies is not None else []))
        for i, d in enumerate(samples):
            row = [d.sfc, d.slot, repr(d.alpha), repr(d.gamma), repr(d.beta), repr(d.delta_ms)]
            if latencies is not None:
                row.append(repr(float(latencies[i])))
            w.writerow(row)

"""Substrate network, SFC requests, leveled expansion, and decoded embeddings."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import networkx as nx
import numpy as np

from .errors import InvalidArgumentError, InvalidGenomeError, NoPathError, UnsupportedChainError

INGRESS = -1
EGRESS = -2


class VnfType(enum.Enum):
    WebApplicationFirewall = "waf"
    LoadBalancer = "lb"
    IntrusionDetectionSystem = "ids"
    IntrusionPreventionSystem = "ips"
    TrafficMonitor = "tm"
    DeepPacketInspection = "dpi"
    HttpAccelerator = "ha"

    @property
    def is_splitter(self) -> bool:
        return self is VnfType.LoadBalancer

    @property
    def code(self) -> int:
        return _VNF_CODES[self]


_VNF_CODES = {v: i for i, v in enumerate(VnfType)}


@dataclass(frozen=True)
class Host:
    id: int
    cpus: float
    memory_mb: float

    def __post_init__(self):
        if not (self.cpus > 0 and self.memory_mb > 0):
            raise InvalidArgumentError(f"host {self.id}: cpus and memory must be positive")


@dataclass(frozen=True)
class PhysicalLink:
    id: int
    endpoints: tuple[int, int]
    bandwidth_mbps: float
    prop_delay_ms: float

    def __post_init__(self):
        a, b = self.endpoints
        if a == b:
            raise InvalidArgumentError(f"link {self.id} is a self-loop")
        if self.bandwidth_mbps <= 0 or self.prop_delay_ms < 0:
            raise InvalidArgumentError(f"link {self.id}: bad bandwidth/delay")


@dataclass(frozen=True, eq=False)
class Topology:
    """General substrate graph. Host ids double as node ids and come first."""

    hosts: tuple[Host, ...]
    switches: tuple[int, ...]
    links: tuple[PhysicalLink, ...]
    graph: nx.Graph = field(init=False, repr=False)
    _paths: dict = field(init=False, repr=False, default_factory=dict)

    def __post_init__(self):
        g = nx.Graph()
        g.add_nodes_from(h.id for h in self.hosts)
        g.add_nodes_from(self.switches)
        for link in self.links:
            a, b = link.endpoints
            if a not in g or b not in g:
                raise InvalidArgumentError(f"link {link.id} references unknown node")
            g.add_edge(a, b, link=link.id)
        for i, h in enumerate(self.hosts):
            if h.id != i:
                raise InvalidArgumentError("host ids must be 0..n-1 in order")
        object.__setattr__(self, "graph", g)

    @property
    def n_hosts(self) -> int:
        return len(self.hosts)

    def link(self, link_id: int) -> PhysicalLink:
        return self.links[link_id]

    def shortest_path(self, a: int, b: int) -> tuple[int, ...]:
        key = (a, b)
        if key not in self._paths:
            self._paths[key] = _min_hop_path(self, a, b)
        return self._paths[key]


def _min_hop_path(topology: Topology, a: int, b: int) -> tuple[int, ...]:
    g = topology.graph
    if a not in g or b not in g:
        raise InvalidArgumentError(f"unknown node in ({a}, {b})")
    if a == b:
        return ()
    try:
        # all min-hop node sequences; the lexicographically smallest wins
        best = min(nx.all_shortest_paths(g, a, b))
    except nx.NetworkXNoPath:
        raise NoPathError(f"no path between {a} and {b}") from None
    return tuple(g.edges[u, v]["link"] for u, v in zip(best[:-1], best[1:]))


def shortest_path(topology: Topology, a: int, b: int) -> tuple[int, ...]:
    """Min-hop route from ``a`` to ``b`` as link ids, ties broken by smallest node sequence."""
    return topology.shortest_path(a, b)


def build_fat_tree(
    k: int,
    cpus_per_host: float,
    memory_mb: float,
    bandwidth_mbps: float,
    prop_delay_ms: float,
) -> Topology:
    """Standard k-ary fat-tree.

    Node ids: hosts first (pod-major), then edge, aggregation and core switches.
    Aggregation switch ``j`` of every pod uplinks to cores ``j*k/2 .. (j+1)*k/2 - 1``.
    """
    if not isinstance(k, (int, np.integer)) or k < 2 or k % 2:
        raise InvalidArgumentError(f"fat-tree arity must be an even integer >= 2, got {k!r}")
    half = k // 2
    n_hosts = k * half * half
    hosts = tuple(Host(i, cpus_per_host, memory_mb) for i in range(n_hosts))
    edge0 = n_hosts
    agg0 = edge0 + k * half
    core0 = agg0 + k * half
    n_core = half * half
    switches = tuple(range(edge0, core0 + n_core))

    pairs: list[tuple[int, int]] = []
    for pod in range(k):
        for e in range(half):
            edge = edge0 + pod * half + e
            for i in range(half):
                pairs.append(((pod * half + e) * half + i, edge))
    for pod in range(k):
        for e in range(half):
            for a in range(half):
                pairs.append((edge0 + pod * half + e, agg0 + pod * half + a))
    for pod in range(k):
        for a in range(half):
            for c in range(half):
                pairs.append((agg0 + pod * half + a, core0 + a * half + c))

    links = tuple(
        PhysicalLink(i, pair, bandwidth_mbps, prop_delay_ms) for i, pair in enumerate(pairs)
    )
    return Topology(hosts, switches, links)


@dataclass(frozen=True)
class SfcRequest:
    id: int
    chain: tuple[VnfType, ...]

    def __post_init__(self):
        if not self.chain:
            raise InvalidArgumentError(f"SFCR {self.id} has an empty chain")


# The four chains used throughout the experiments.
REFERENCE_CHAINS: tuple[tuple[VnfType, ...], ...] = (
    (VnfType.LoadBalancer, VnfType.WebApplicationFirewall),
    (VnfType.HttpAccelerator, VnfType.LoadBalancer, VnfType.WebApplicationFirewall),
    (
        VnfType.HttpAccelerator,
        VnfType.TrafficMonitor,
        VnfType.LoadBalancer,
        VnfType.WebApplicationFirewall,
    ),
    (VnfType.LoadBalancer, VnfType.TrafficMonitor, VnfType.WebApplicationFirewall),
)


def make_sfcrs(n: int, chains: Sequence[Sequence[VnfType]] = REFERENCE_CHAINS) -> list[SfcRequest]:
    """``n`` requests cycling through ``chains`` (n/4 copies of each reference chain)."""
    if n < 1 or n % len(chains):
        raise InvalidArgumentError(f"SFCR count must be a positive multiple of {len(chains)}")
    return [SfcRequest(i, tuple(chains[i % len(chains)])) for i in range(n)]


@dataclass(frozen=True)
class VnfInstance:
    index: int
    vnf: VnfType
    level: int
    branch: str = ""


@dataclass(frozen=True)
class VirtualLink:
    source: int  # instance index or INGRESS
    target: int  # instance index or EGRESS
    level: int


@dataclass(frozen=True)
class SfcInstanceGraph:
    request: SfcRequest
    instances: tuple[VnfInstance, ...]
    virtual_links: tuple[VirtualLink, ...]


def expand_sfcr(sfcr: SfcRequest) -> SfcInstanceGraph:
    """Expand a chain into leveled VNF instances and virtual links.

    Everything after the (single) splitter is duplicated into branches A and B,
    each at level 2, so that each branch carries half of the SFC's requests.
    """
    splitters = [i for i, v in enumerate(sfcr.chain) if v.is_splitter]
    if len(splitters) > 1:
        raise UnsupportedChainError(f"SFCR {sfcr.id} has {len(splitters)} splitters")

    instances: list[VnfInstance] = []
    vlinks: list[VirtualLink] = []
    cut = splitters[0] + 1 if splitters else len(sfcr.chain)

    prev = INGRESS
    for vnf in sfcr.chain[:cut]:
        inst = VnfInstance(len(instances), vnf, 1)
        instances.append(inst)
        vlinks.append(VirtualLink(prev, inst.index, 1))
        prev = inst.index

    if not splitters:
        vlinks.append(VirtualLink(prev, EGRESS, 1))
    else:
        splitter = prev
        for branch in ("A", "B"):
            tail = splitter
            for vnf in sfcr.chain[cut:]:
                inst = VnfInstance(len(instances), vnf, 2, branch)
                instances.append(inst)
                vlinks.append(VirtualLink(tail, inst.index, 2))
                tail = inst.index
            vlinks.append(VirtualLink(tail, EGRESS, 2))

    return SfcInstanceGraph(sfcr, tuple(instances), tuple(vlinks))


def genome_shape(sfcrs: Sequence[SfcRequest], topology: Topology) -> tuple[int, int]:
    rows = sum(len(expand_sfcr(s).instances) for s in sfcrs)
    return rows, topology.n_hosts


@dataclass(frozen=True)
class SfcEmbedding:
    graph: SfcInstanceGraph
    deployed: bool
    placement: tuple[int, ...] = ()  # host per instance; empty when undeployed
    routes: tuple[tuple[int, ...], ...] = ()  # link ids per virtual link

    @property
    def request(self) -> SfcRequest:
        return self.graph.request

    def endpoint_host(self, node: int, gateway: int) -> int:
        return gateway if node in (INGRESS, EGRESS) else self.placement[node]


@dataclass(frozen=True, eq=False)
class Embedding:
    """Placement and routes for every SFC of a problem instance.

    SFCs are addressed by position ``s`` in ``sfcs``. Undeployed SFCs are absent
    from every inverse index.
    """

    topology: Topology
    sfcs: tuple[SfcEmbedding, ...]
    gateway: int = 0
    _host_index: dict = field(init=False, repr=False, compare=False)
    _link_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        host_index: dict[int, dict[int, list[int]]] = {}
        link_index: dict[int, dict[int, list[int]]] = {}
        for s, emb in enumerate(self.sfcs):
            if not emb.deployed:
                continue
            for inst in emb.graph.instances:
                h = emb.placement[inst.index]
                host_index.setdefault(h, {}).setdefault(s, []).append(inst.index)
            for y, route in enumerate(emb.routes):
                for l in route:
                    link_index.setdefault(l, {}).setdefault(s, []).append(y)
        object.__setattr__(self, "_host_index", host_index)
        object.__setattr__(self, "_link_index", link_index)

    def __eq__(self, other):
        if not isinstance(other, Embedding):
            return NotImplemented
        return (
            self.topology is other.topology
            and self.gateway == other.gateway
            and self.sfcs == other.sfcs
        )

    __hash__ = None

    @property
    def n_deployed(self) -> int:
        return sum(e.deployed for e in self.sfcs)

    @property
    def acceptance_ratio(self) -> float:
        return self.n_deployed / len(self.sfcs) if self.sfcs else 0.0

    def hosts_of(self, s: int) -> list[int]:
        """H(s): hosts holding at least one instance of SFC ``s``."""
        emb = self.sfcs[s]
        return sorted(set(emb.placement)) if emb.deployed else []

    def links_of(self, s: int) -> list[int]:
        """L(s): physical links carrying at least one virtual link of ``s``."""
        emb = self.sfcs[s]
        return sorted({l for route in emb.routes for l in route}) if emb.deployed else []

    def instances_on(self, s: int, h: int) -> list[int]:
        """V(s,h)."""
        return list(self._host_index.get(h, {}).get(s, ()))

    def vlinks_on(self, s: int, l: int) -> list[int]:
        """Y(s,l)."""
        return list(self._link_index.get(l, {}).get(s, ()))

    def sfcs_on_host(self, h: int) -> list[int]:
        """S(h)."""
        return sorted(self._host_index.get(h, {}))

    def sfcs_on_link(self, l: int) -> list[int]:
        """S(l)."""
        return sorted(self._link_index.get(l, {}))


def decode_embedding(
    genome: np.ndarray,
    sfcrs: Sequence[SfcRequest],
    topology: Topology,
    gateway: int = 0,
    graphs: Sequence[SfcInstanceGraph] | None = None,
) -> Embedding:
    """Decode a binary instance-by-host genome.

    The lowest-index set bit of a row picks the host; an all-zero row leaves the
    whole SFC undeployed. Routes follow ``shortest_path`` between consecutive
    hosts, with ingress/egress anchored at ``gateway``.
    """
    if graphs is None:
        graphs = [expand_sfcr(s) for s in sfcrs]
    rows = sum(len(g.instances) for g in graphs)
    genome = np.asarray(genome)
    if genome.ndim != 2 or genome.shape != (rows, topology.n_hosts):
        raise InvalidGenomeError(
            f"genome shape {genome.shape} != ({rows}, {topology.n_hosts})"
        )
    if not 0 <= gateway < topology.n_hosts:
        raise InvalidArgumentError(f"gateway {gateway} is not a host")

    set_rows = genome.any(axis=1)
    first = genome.argmax(axis=1)
    out = []
    offset = 0
    for g in graphs:
        n = len(g.instances)
        if not set_rows[offset:offset + n].all():
            out.append(SfcEmbedding(g, False))
        else:
            placement = tuple(int(h) for h in first[offset:offset + n])
            emb = SfcEmbedding(g, True, placement)
            routes = tuple(
                topology.shortest_path(
                    emb.endpoint_host(y.source, gateway), emb.endpoint_host(y.target, gateway)
                )
                for y in g.virtual_links
            )
            out.append(SfcEmbedding(g, True, placement, routes))
        offset += n
    return Embedding(topology, tuple(out), gateway)

"""Substrate network and slice request data model.

Nodes are addressed by their integer position in ``PsnGraph.nodes``; VNFs by
their 0-based position in ``Nspr.vnfs``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

SERVER = "server"
SWITCH = "switch"
ROUTER = "router"
UAP = "uap"
NODE_KINDS = (SERVER, SWITCH, ROUTER, UAP)
DC_KINDS = ("CCP", "CDC", "EDC")

PSN_FORMAT = "hadrl-psn/1"

# (count, servers per DC, intra-DC link capacity)
REFERENCE_DCS = {
    "CCP": (1, 16, 100.0),
    "CDC": (5, 10, 100.0),
    "EDC": (15, 4, 10.0),
}
SERVER_CPU = 50.0
SERVER_RAM = 300.0
CCP_CDC_BW = 100.0
CDC_CDC_BW = 100.0
CDC_EDC_BW = 10.0
UAP_BW = 10.0
EDC_PER_CDC = 3
CDC_EDC_KM = 100.0
CDC_CCP_KM = 300.0

EMBB_VNFS = 5
EMBB_CPU = 25.0
EMBB_RAM = 150.0
EMBB_BW = 2.0


class TopologyError(ValueError):
    pass


@dataclass
class PsnNode:
    id: int
    kind: str
    max_cpu: float = 0.0
    avail_cpu: float = 0.0
    max_ram: float = 0.0
    avail_ram: float = 0.0
    name: str = ""
    dc: str | None = None


@dataclass
class PsnLink:
    a: int
    b: int
    max_bw: float
    avail_bw: float
    distance_km: float | None = None

    @property
    def endpoints(self) -> tuple[int, int]:
        return (self.a, self.b)


@dataclass
class DataCenter:
    id: str
    kind: str
    servers: list[int]
    switch: int


class PsnGraph:
    """Physical substrate network: typed nodes, undirected links, DC groups."""

    def __init__(self, nodes, links, dc_groups=None):
        self.nodes: list[PsnNode] = list(nodes)
        self.links: list[PsnLink] = list(links)
        self.dc_groups: dict[str, DataCenter] = dict(dc_groups or {})
        self._validate()
        self.adjacency: list[list[tuple[int, int]]] = [[] for _ in self.nodes]
        self.link_index: dict[tuple[int, int], int] = {}
        for i, link in enumerate(self.links):
            self.adjacency[link.a].append((link.b, i))
            self.adjacency[link.b].append((link.a, i))
            self.link_index[(link.a, link.b)] = i
            self.link_index[(link.b, link.a)] = i
        self.servers = [n.id for n in self.nodes if n.kind == SERVER]
        self.max_bw_per_node = np.zeros(len(self.nodes))
        for link in self.links:
            self.max_bw_per_node[link.a] += link.max_bw
            self.max_bw_per_node[link.b] += link.max_bw
        self.norm_cpu = max((n.max_cpu for n in self.nodes), default=0.0) or 1.0
        self.norm_ram = max((n.max_ram for n in self.nodes), default=0.0) or 1.0
        self.norm_bw = float(self.max_bw_per_node.max()) if self.links else 1.0
        self._adj_matrix = None
        # nspr id -> (Nspr, Placement) for every committed slice
        self.live: dict = {}

    def _validate(self):
        for i, node in enumerate(self.nodes):
            if node.id != i:
                raise TopologyError(f"node at position {i} has id {node.id}")
            if node.kind not in NODE_KINDS:
                raise TopologyError(f"node {i}: unknown kind {node.kind!r}")
            if node.kind != SERVER and (node.max_cpu or node.max_ram):
                raise TopologyError(f"node {i}: non-server node with CPU/RAM capacity")
            for avail, cap in ((node.avail_cpu, node.max_cpu), (node.avail_ram, node.max_ram)):
                if not 0 <= avail <= cap:
                    raise TopologyError(f"node {i}: availability {avail} outside [0, {cap}]")
        seen = set()
        for link in self.links:
            if link.a == link.b:
                raise TopologyError(f"self-loop on node {link.a}")
            for end in (link.a, link.b):
                if not 0 <= end < len(self.nodes):
                    raise TopologyError(f"link endpoint {end} does not exist")
            key = (min(link.a, link.b), max(link.a, link.b))
            if key in seen:
                raise TopologyError(f"duplicate link {key}")
            seen.add(key)
            if not 0 <= link.avail_bw <= link.max_bw:
                raise TopologyError(f"link {key}: availability outside [0, {link.max_bw}]")
        for dc in self.dc_groups.values():
            if dc.kind not in DC_KINDS:
                raise TopologyError(f"dc {dc.id}: unknown kind {dc.kind!r}")
            for s in dc.servers:
                if not 0 <= s < len(self.nodes) or self.nodes[s].kind != SERVER:
                    raise TopologyError(f"dc {dc.id}: member {s} is not a server")

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    def link_between(self, a: int, b: int) -> PsnLink | None:
        i = self.link_index.get((a, b))
        return None if i is None else self.links[i]

    def adjacency_matrix(self) -> np.ndarray:
        if self._adj_matrix is None:
            adj = np.zeros((self.num_nodes, self.num_nodes))
            for link in self.links:
                adj[link.a, link.b] = adj[link.b, link.a] = 1.0
            self._adj_matrix = adj
        return self._adj_matrix

    def availability(self) -> tuple[tuple[float, ...], tuple[float, ...], tuple[float, ...]]:
        """Hashable snapshot of every availability field."""
        return (
            tuple(n.avail_cpu for n in self.nodes),
            tuple(n.avail_ram for n in self.nodes),
            tuple(link.avail_bw for link in self.links),
        )

    def reset(self):
        self.live = {}
        for n in self.nodes:
            n.avail_cpu, n.avail_ram = n.max_cpu, n.max_ram
        for link in self.links:
            link.avail_bw = link.max_bw

    def copy(self) -> PsnGraph:
        new = PsnGraph(
            [PsnNode(**asdict(n)) for n in self.nodes],
            [PsnLink(**asdict(link)) for link in self.links],
            {k: DataCenter(dc.id, dc.kind, list(dc.servers), dc.switch) for k, dc in self.dc_groups.items()},
        )
        new.live = dict(self.live)
        return new

    def total_cpu(self) -> float:
        return sum(n.max_cpu for n in self.nodes)

    # serialization

    def to_dict(self) -> dict:
        return {
            "format": PSN_FORMAT,
            "nodes": [asdict(n) for n in self.nodes],
            "links": [asdict(link) for link in self.links],
            "dc_groups": [asdict(dc) for dc in self.dc_groups.values()],
        }

    @classmethod
    def from_dict(cls, data: dict) -> PsnGraph:
        if data.get("format") != PSN_FORMAT:
            raise TopologyError(f"unsupported topology format {data.get('format')!r}, expected {PSN_FORMAT!r}")
        try:
            nodes = [PsnNode(**n) for n in data["nodes"]]
            links = [PsnLink(**link) for link in data["links"]]
            dcs = {d["id"]: DataCenter(**d) for d in data.get("dc_groups", [])}
        except (KeyError, TypeError) as exc:
            raise TopologyError(f"malformed topology: {exc}") from exc
        return cls(nodes, links, dcs)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> PsnGraph:
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise TopologyError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
        return cls.from_dict(data)


@dataclass
class Vnf:
    req_cpu: float
    req_ram: float


@dataclass
class VirtualLink:
    src: int
    dst: int
    req_bw: float

    @property
    def key(self) -> tuple[int, int]:
        return (self.src, self.dst)


@dataclass
class Nspr:
    id: int
    vnfs: list[Vnf]
    vls: list[VirtualLink]
    arrival_time: float = 0.0
    lifetime: float = 1.0
    slice_class: str = "eMBB"
    _incoming: list = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.lifetime <= 0:
            raise ValueError(f"lifetime must be positive, got {self.lifetime}")
        for v in self.vnfs:
            if v.req_cpu <= 0 or v.req_ram <= 0:
                raise ValueError("VNF requirements must be strictly positive")
        for vl in self.vls:
            if vl.req_bw <= 0:
                raise ValueError("VL requirements must be strictly positive")
            if vl.src == vl.dst or not (0 <= vl.src < len(self.vnfs) and 0 <= vl.dst < len(self.vnfs)):
                raise ValueError(f"invalid virtual link {vl.key}")

    def incoming(self, v: int) -> list[VirtualLink]:
        """VLs that become mappable once VNF ``v`` is placed after VNFs 0..v-1."""
        if self._incoming is None:
            inc = [[] for _ in self.vnfs]
            for vl in self.vls:
                inc[max(vl.src, vl.dst)].append(vl)
            self._incoming = inc
        return self._incoming[v]

    def outgoing_bw(self, v: int) -> float:
        return sum(vl.req_bw for vl in self.vls if vl.src == v)

    def total_cpu(self) -> float:
        return sum(v.req_cpu for v in self.vnfs)


def generate_embb_nspr(id: int, arrival_time: float, lifetime: float, num_vnfs: int = EMBB_VNFS) -> Nspr:
    """A chain of ``num_vnfs`` eMBB VNFs (25 CPU, 150 RAM) linked by 2 Gbps VLs."""
    return Nspr(
        id=id,
        vnfs=[Vnf(EMBB_CPU, EMBB_RAM) for _ in range(num_vnfs)],
        vls=[VirtualLink(i, i + 1, EMBB_BW) for i in range(num_vnfs - 1)],
        arrival_time=arrival_time,
        lifetime=lifetime,
    )


def build_reference_psn(servers_scale: float = 1.0) -> PsnGraph:
    """Operator-style substrate: 1 CCP, 5 CDCs, 15 EDCs, one switch per DC.

    ``servers_scale`` multiplies the per-DC server counts (used by timing sweeps).
    """
    nodes: list[PsnNode] = []
    links: list[PsnLink] = []
    dcs: dict[str, DataCenter] = {}

    def add_node(kind, name, dc=None, cpu=0.0, ram=0.0):
        node = PsnNode(len(nodes), kind, cpu, cpu, ram, ram, name, dc)
        nodes.append(node)
        return node.id

    def add_dc(kind, idx):
        _, n_servers, intra_bw = REFERENCE_DCS[kind]
        n_servers = max(1, int(round(n_servers * servers_scale)))
        dc_id = f"{kind.lower()}{idx}"
        switch = add_node(SWITCH, f"{dc_id}-sw", dc_id)
        servers = []
        for k in range(n_servers):
            s = add_node(SERVER, f"{dc_id}-s{k}", dc_id, SERVER_CPU, SERVER_RAM)
            links.append(PsnLink(switch, s, intra_bw, intra_bw))
            servers.append(s)
        dcs[dc_id] = DataCenter(dc_id, kind, servers, switch)
        return dcs[dc_id]

    ccp = add_dc("CCP", 0)
    cdcs = [add_dc("CDC", i) for i in range(REFERENCE_DCS["CDC"][0])]
    for i, cdc in enumerate(cdcs):
        links.append(PsnLink(ccp.switch, cdc.switch, CCP_CDC_BW, CCP_CDC_BW, CDC_CCP_KM))
    for i in range(len(cdcs)):
        for j in range(i + 1, len(cdcs)):
            links.append(PsnLink(cdcs[i].switch, cdcs[j].switch, CDC_CDC_BW, CDC_CDC_BW))
    edc_idx = 0
    for cdc in cdcs:
        for _ in range(EDC_PER_CDC):
            edc = add_dc("EDC", edc_idx)
            edc_idx += 1
            links.append(PsnLink(cdc.switch, edc.switch, CDC_EDC_BW, CDC_EDC_BW, CDC_EDC_KM))
            uap = add_node(UAP, f"{edc.id}-uap", edc.id)
            links.append(PsnLink(edc.switch, uap, UAP_BW, UAP_BW))
    return PsnGraph(nodes, links, dcs)


def node_features(psn: PsnGraph, chi=None) -> np.ndarray:
    """(|N|, 4) block: normalized avail CPU, RAM, incident avail BW, and chi."""
    n = psn.num_nodes
    feats = np.empty((n, 4))
    feats[:, 0] = [node.avail_cpu for node in psn.nodes]
    feats[:, 0] /= psn.norm_cpu
    feats[:, 1] = [node.avail_ram for node in psn.nodes]
    feats[:, 1] /= psn.norm_ram
    bw = np.zeros(n)
    for link in psn.links:
        bw[link.a] += link.avail_bw
        bw[link.b] += link.avail_bw
    feats[:, 2] = bw / psn.norm_bw
    feats[:, 3] = 0.0 if chi is None else chi
    return feats


def nspr_features(psn: PsnGraph, nspr: Nspr, v: int) -> np.ndarray:
    vnf = nspr.vnfs[v]
    return np.array([
        vnf.req_cpu / psn.norm_cpu,
        vnf.req_ram / psn.norm_ram,
        nspr.outgoing_bw(v) / psn.norm_bw,
        float(len(nspr.vnfs) - v),
    ])


def normalized_features(psn: PsnGraph, nspr: Nspr, v: int, chi=None) -> tuple[np.ndarray, np.ndarray]:
    """PSN and NSPR feature blocks for placing VNF ``v`` (0-based).

    Resource features are divided by the largest maximum capacity of that
    resource over all nodes; the last NSPR feature counts VNFs left to place,
    including ``v``.
    """
    if not 0 <= v < len(nspr.vnfs):
        raise IndexError(f"vnf index {v} out of range")
    return node_features(psn, chi), nspr_features(psn, nspr, v)

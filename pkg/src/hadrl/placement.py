"""Placement state, constraint checking, resource accounting and objectives."""
from __future__ import annotations

import itertools
import json
from collections import deque
from dataclasses import dataclass, field

from .topology import SERVER, Nspr, PsnGraph

NODE_MAPPING = "NodeMapping"
CPU = "Cpu"
RAM = "Ram"
BW = "Bw"
FLOW_CONSERVATION = "FlowConservation"
LINK_DIRECTION = "LinkDirection"

PLACEMENT_FORMAT = "hadrl-placement/1"


class StructuralError(ValueError):
    """A placement refers to nodes, links or VNFs that do not exist."""


class PlacementError(RuntimeError):
    """Illegal resource-accounting operation (commit of an infeasible
    placement, release of something never committed)."""


class InstanceTooLarge(ValueError):
    pass


@dataclass
class Placement:
    nspr_id: int
    vnf_assignment: dict[int, int] = field(default_factory=dict)
    vl_paths: dict[tuple[int, int], list[tuple[int, int]]] = field(default_factory=dict)
    accepted: bool = False

    @classmethod
    def rejected(cls, nspr_id) -> Placement:
        return cls(nspr_id)

    def to_dict(self) -> dict:
        return {
            "format": PLACEMENT_FORMAT,
            "nspr_id": self.nspr_id,
            "accepted": self.accepted,
            "vnf_assignment": {str(k): v for k, v in sorted(self.vnf_assignment.items())},
            "vl_paths": [
                {"vl": list(k), "path": [list(hop) for hop in path]}
                for k, path in sorted(self.vl_paths.items())
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> Placement:
        if data.get("format") != PLACEMENT_FORMAT:
            raise ValueError(f"unsupported placement format {data.get('format')!r}")
        return cls(
            data["nspr_id"],
            {int(k): int(v) for k, v in data["vnf_assignment"].items()},
            {tuple(e["vl"]): [tuple(h) for h in e["path"]] for e in data["vl_paths"]},
            bool(data["accepted"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass
class ConstraintReport:
    violations: list[tuple[str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {kind for kind, _ in self.violations}


def _check_structure(psn: PsnGraph, nspr: Nspr, p: Placement):
    n = psn.num_nodes
    for v, s in p.vnf_assignment.items():
        if not 0 <= v < len(nspr.vnfs):
            raise StructuralError(f"placement references unknown VNF {v}")
        if not 0 <= s < n:
            raise StructuralError(f"VNF {v} assigned to unknown node {s}")
    vl_keys = {vl.key for vl in nspr.vls}
    for key, path in p.vl_paths.items():
        if key not in vl_keys:
            raise StructuralError(f"placement references unknown VL {key}")
        for a, b in path:
            if psn.link_between(a, b) is None:
                raise StructuralError(f"VL {key} uses ({a}, {b}) which is not a physical link")


def check_constraints(psn: PsnGraph, nspr: Nspr, p: Placement) -> ConstraintReport:
    """Check a placement against node mapping, capacity and path constraints.

    Capacities are compared with the availabilities currently stored in
    ``psn`` (i.e. the state before the placement is committed).
    """
    _check_structure(psn, nspr, p)
    report = ConstraintReport()
    bad = report.violations
    if not p.accepted:
        if p.vnf_assignment or p.vl_paths:
            bad.append((NODE_MAPPING, "rejected placement carries assignments"))
        return report

    cpu: dict[int, float] = {}
    ram: dict[int, float] = {}
    for v in range(len(nspr.vnfs)):
        s = p.vnf_assignment.get(v)
        if s is None:
            bad.append((NODE_MAPPING, f"VNF {v} is not placed"))
            continue
        if psn.nodes[s].kind != SERVER:
            bad.append((NODE_MAPPING, f"VNF {v} placed on non-server node {s}"))
            continue
        cpu[s] = cpu.get(s, 0.0) + nspr.vnfs[v].req_cpu
        ram[s] = ram.get(s, 0.0) + nspr.vnfs[v].req_ram
    for s, demand in cpu.items():
        if demand > psn.nodes[s].avail_cpu:
            bad.append((CPU, f"server {s}: CPU demand {demand} > available {psn.nodes[s].avail_cpu}"))
    for s, demand in ram.items():
        if demand > psn.nodes[s].avail_ram:
            bad.append((RAM, f"server {s}: RAM demand {demand} > available {psn.nodes[s].avail_ram}"))

    bw: dict[int, float] = {}
    for vl in nspr.vls:
        path = p.vl_paths.get(vl.key)
        if path is None:
            bad.append((FLOW_CONSERVATION, f"VL {vl.key} has no path"))
            continue
        src = p.vnf_assignment.get(vl.src)
        dst = p.vnf_assignment.get(vl.dst)
        if src is not None and dst is not None:
            _check_walk(vl.key, path, src, dst, bad)
        used = set()
        for a, b in path:
            idx = psn.link_index[(a, b)]
            if idx in used:
                bad.append((LINK_DIRECTION, f"VL {vl.key} uses link ({a}, {b}) more than once"))
            used.add(idx)
            bw[idx] = bw.get(idx, 0.0) + vl.req_bw
    for idx, demand in bw.items():
        link = psn.links[idx]
        if demand > link.avail_bw:
            bad.append((BW, f"link ({link.a}, {link.b}): demand {demand} > available {link.avail_bw}"))
    return report


def _check_walk(key, path, src, dst, bad):
    net: dict[int, int] = {}
    for a, b in path:
        net[a] = net.get(a, 0) + 1
        net[b] = net.get(b, 0) - 1
    expected = {} if src == dst else {src: 1, dst: -1}
    for node in set(net) | set(expected):
        if net.get(node, 0) != expected.get(node, 0):
            bad.append((FLOW_CONSERVATION, f"VL {key}: net flow {net.get(node, 0)} at node {node}"))
            return
    if not path:
        return
    if path[0][0] != src or path[-1][1] != dst or any(path[i][1] != path[i + 1][0] for i in range(len(path) - 1)):
        bad.append((FLOW_CONSERVATION, f"VL {key}: path is not a walk from {src} to {dst}"))


def shortest_feasible_path(psn: PsnGraph, src: int, dst: int, req_bw: float) -> list[tuple[int, int]] | None:
    """Minimum-hop path over links with at least ``req_bw`` available.

    Returns the directed links of the path, ``[]`` when ``src == dst`` and
    ``None`` when no such path exists.
    """
    if src == dst:
        return []
    links = psn.links
    parent = {src: None}
    queue = deque([src])
    while queue:
        a = queue.popleft()
        for b, idx in psn.adjacency[a]:
            if b in parent or links[idx].avail_bw < req_bw:
                continue
            parent[b] = a
            if b == dst:
                path = []
                while b != src:
                    path.append((parent[b], b))
                    b = parent[b]
                path.reverse()
                return path
            queue.append(b)
    return None


def _apply(psn: PsnGraph, nspr: Nspr, p: Placement, sign: float):
    for v, s in p.vnf_assignment.items():
        node = psn.nodes[s]
        node.avail_cpu += sign * nspr.vnfs[v].req_cpu
        node.avail_ram += sign * nspr.vnfs[v].req_ram
    for vl in nspr.vls:
        for a, b in p.vl_paths.get(vl.key, ()):
            psn.links[psn.link_index[(a, b)]].avail_bw += sign * vl.req_bw


def commit(psn: PsnGraph, nspr: Nspr, p: Placement):
    """Subtract an accepted placement's demands from ``psn``."""
    if not p.accepted:
        raise PlacementError("cannot commit a rejected placement")
    live = psn.live
    if nspr.id in live:
        raise PlacementError(f"NSPR {nspr.id} is already committed")
    report = check_constraints(psn, nspr, p)
    if not report.ok:
        raise PlacementError(f"placement violates constraints: {report.violations}")
    _apply(psn, nspr, p, -1.0)
    live[nspr.id] = (nspr, p)


def release(psn: PsnGraph, nspr: Nspr, p: Placement | None = None):
    """Return a committed placement's demands to ``psn``."""
    live = psn.live
    if nspr.id not in live:
        raise PlacementError(f"NSPR {nspr.id} is not committed")
    _, committed = live.pop(nspr.id)
    _apply(psn, nspr, committed, +1.0)


def objective_bandwidth(nspr: Nspr, p: Placement) -> float:
    return sum(len(p.vl_paths.get(vl.key, ())) * vl.req_bw for vl in nspr.vls)


def server_balance(psn: PsnGraph, s: int) -> float:
    node = psn.nodes[s]
    return node.avail_cpu / node.max_cpu + node.avail_ram / node.max_ram


def objective_load_balance(psn: PsnGraph, p: Placement) -> float:
    """Sum over placed VNFs of the host's free CPU and RAM fractions, read
    from ``psn`` as given (pass the pre-placement state)."""
    return sum(server_balance(psn, s) for s in p.vnf_assignment.values())


class IncrementalPlacement:
    """VNF-by-VNF placement with immediate resource accounting on ``psn``.

    Used by the heuristic and the learning agent. ``rollback`` restores the
    exact pre-placement availabilities; ``finish`` rolls back and commits the
    full placement through :func:`commit`, so every accepted placement is
    re-verified by :func:`check_constraints`.
    """

    def __init__(self, psn: PsnGraph, nspr: Nspr):
        self.psn = psn
        self.nspr = nspr
        self.assignment: dict[int, int] = {}
        self.paths: dict[tuple[int, int], list[tuple[int, int]]] = {}
        self.chi = [0] * psn.num_nodes
        # candidate servers drawn by the heuristic for this request
        self.heu_pool: set[int] | None = None

    def can_host(self, v: int, s: int) -> bool:
        node = self.psn.nodes[s]
        vnf = self.nspr.vnfs[v]
        return node.kind == SERVER and node.avail_cpu >= vnf.req_cpu and node.avail_ram >= vnf.req_ram

    def route(self, v: int, s: int) -> dict | None:
        """Paths for the VLs joining ``v`` (on ``s``) to already placed VNFs.

        Bandwidth for earlier VLs of the same call is reserved while routing
        later ones, then returned.
        """
        paths = {}
        reserved = []
        try:
            for vl in self.nspr.incoming(v):
                other = vl.src if vl.dst == v else vl.dst
                host = self.assignment[other]
                a, b = (host, s) if vl.dst == v else (s, host)
                path = shortest_feasible_path(self.psn, a, b, vl.req_bw)
                if path is None:
                    return None
                paths[vl.key] = path
                for hop in path:
                    link = self.psn.links[self.psn.link_index[hop]]
                    link.avail_bw -= vl.req_bw
                    reserved.append((link, vl.req_bw))
            return paths
        finally:
            for link, bw in reserved:
                link.avail_bw += bw

    def place(self, v: int, s: int, paths: dict):
        node = self.psn.nodes[s]
        vnf = self.nspr.vnfs[v]
        node.avail_cpu -= vnf.req_cpu
        node.avail_ram -= vnf.req_ram
        for vl in self.nspr.incoming(v):
            for hop in paths[vl.key]:
                self.psn.links[self.psn.link_index[hop]].avail_bw -= vl.req_bw
        self.assignment[v] = s
        self.paths.update(paths)
        self.chi[s] += 1

    def try_place(self, v: int, s: int):
        """Place ``v`` on ``s`` if capacity and VL routing allow; return the
        new paths, or ``None`` (nothing changed) on failure."""
        if not self.can_host(v, s):
            return None
        paths = self.route(v, s)
        if paths is None:
            return None
        self.place(v, s, paths)
        return paths

    def rollback(self):
        p = Placement(self.nspr.id, self.assignment, self.paths, True)
        _apply(self.psn, self.nspr, p, +1.0)
        self.assignment, self.paths = {}, {}
        self.chi = [0] * self.psn.num_nodes

    def finish(self) -> Placement:
        p = Placement(self.nspr.id, dict(self.assignment), dict(self.paths), True)
        self.rollback()
        commit(self.psn, self.nspr, p)
        return p


def exact_solve(psn: PsnGraph, nspr: Nspr, objective_weights=(1.0, 1.0), max_assignments: int = 10**6) -> Placement:
    """Exhaustive search over VNF-to-server assignments.

    Feasible assignments are ranked by bandwidth use (weighted) and then by
    load balance (weighted, maximized); the first assignment in lexicographic
    server order wins ties. VLs are routed by sequential shortest feasible
    paths; when that fails, all simple-path combinations are tried so the
    accept/reject decision is exact. ``psn`` is left unchanged.
    """
    servers = psn.servers
    n_vnf = len(nspr.vnfs)
    if len(servers) ** n_vnf > max_assignments:
        raise InstanceTooLarge(f"{len(servers)}^{n_vnf} assignments exceed bound {max_assignments}")
    w_bw, w_lb = objective_weights
    best, best_key = None, None
    for combo in itertools.product(servers, repeat=n_vnf):
        if not _capacity_ok(psn, nspr, combo):
            continue
        assignment = dict(enumerate(combo))
        paths = _route_sequential(psn, nspr, assignment)
        if paths is None:
            paths = _route_exhaustive(psn, nspr, assignment)
            if paths is None:
                continue
        p = Placement(nspr.id, assignment, paths, True)
        key = (w_bw * objective_bandwidth(nspr, p), -w_lb * objective_load_balance(psn, p))
        if best_key is None or key < best_key:
            best, best_key = p, key
    return best if best is not None else Placement.rejected(nspr.id)


def _capacity_ok(psn, nspr, combo) -> bool:
    cpu: dict[int, float] = {}
    ram: dict[int, float] = {}
    for v, s in enumerate(combo):
        cpu[s] = cpu.get(s, 0.0) + nspr.vnfs[v].req_cpu
        ram[s] = ram.get(s, 0.0) + nspr.vnfs[v].req_ram
    return all(cpu[s] <= psn.nodes[s].avail_cpu and ram[s] <= psn.nodes[s].avail_ram for s in cpu)


def _route_sequential(psn, nspr, assignment):
    paths = {}
    taken = []
    try:
        for vl in nspr.vls:
            path = shortest_feasible_path(psn, assignment[vl.src], assignment[vl.dst], vl.req_bw)
            if path is None:
                return None
            paths[vl.key] = path
            for hop in path:
                link = psn.links[psn.link_index[hop]]
                link.avail_bw -= vl.req_bw
                taken.append((link, vl.req_bw))
        return paths
    finally:
        for link, bw in taken:
            link.avail_bw += bw


def _simple_paths(psn, src, dst, limit=10_000):
    if src == dst:
        return [[]]
    found = []
    stack = [(src, [src])]
    while stack and len(found) < limit:
        a, trail = stack.pop()
        for b, _ in psn.adjacency[a]:
            if b in trail:
                continue
            if b == dst:
                nodes = trail + [b]
                found.append(list(zip(nodes, nodes[1:])))
            else:
                stack.append((b, trail + [b]))
    found.sort(key=len)
    return found


def _route_exhaustive(psn, nspr, assignment):
    options = [_simple_paths(psn, assignment[vl.src], assignment[vl.dst]) for vl in nspr.vls]
    for choice in itertools.product(*options):
        load: dict[int, float] = {}
        for vl, path in zip(nspr.vls, choice):
            for hop in path:
                idx = psn.link_index[hop]
                load[idx] = load.get(idx, 0.0) + vl.req_bw
        if all(load[i] <= psn.links[i].avail_bw for i in load):
            return {vl.key: list(path) for vl, path in zip(nspr.vls, choice)}
    return None

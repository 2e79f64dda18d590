"""Small substrates, random instances and an independent feasibility oracle."""
import itertools

import networkx as nx
import numpy as np

from hadrl.topology import SERVER, SWITCH, Nspr, PsnGraph, PsnLink, PsnNode, Vnf, VirtualLink


def server(i, cpu=50.0, ram=300.0, dc=None):
    return PsnNode(i, SERVER, cpu, cpu, ram, ram, f"s{i}", dc)


def switch(i):
    return PsnNode(i, SWITCH, name=f"sw{i}")


def link(a, b, bw):
    return PsnLink(a, b, bw, bw)


def chain_nspr(n, cpu=25.0, ram=150.0, bw=2.0, id=0):
    return Nspr(id, [Vnf(cpu, ram) for _ in range(n)], [VirtualLink(i, i + 1, bw) for i in range(n - 1)])


def star_psn(n_servers, bw=10.0, cpu=50.0, ram=300.0):
    """Servers 1..n hanging off switch 0."""
    nodes = [switch(0)] + [server(i, cpu, ram) for i in range(1, n_servers + 1)]
    return PsnGraph(nodes, [link(0, i, bw) for i in range(1, n_servers + 1)])


def random_instance(rng: np.random.Generator, max_servers=3, max_vnfs=3):
    """Random substrate of 1-3 servers plus 0-2 switches, connected by a
    random spanning tree plus extra links, and a random VNF chain/graph."""
    n_srv = int(rng.integers(1, max_servers + 1))
    n_sw = int(rng.integers(0, 3))
    nodes = []
    for i in range(n_srv + n_sw):
        if i < n_srv:
            nodes.append(server(i, float(rng.choice([20, 30, 50, 60])), float(rng.choice([100, 200, 300]))))
        else:
            nodes.append(switch(i))
    order = rng.permutation(len(nodes))
    pairs = set()
    for k in range(1, len(order)):
        a, b = int(order[k]), int(order[rng.integers(0, k)])
        pairs.add((min(a, b), max(a, b)))
    for a, b in itertools.combinations(range(len(nodes)), 2):
        if rng.random() < 0.25:
            pairs.add((a, b))
    links = [link(a, b, float(rng.choice([1, 2, 3, 4, 6]))) for a, b in sorted(pairs)]
    psn = PsnGraph(nodes, links)
    n_vnf = int(rng.integers(1, max_vnfs + 1))
    vnfs = [Vnf(float(rng.choice([10, 20, 25, 30])), float(rng.choice([50, 100, 150]))) for _ in range(n_vnf)]
    vls = [VirtualLink(i, i + 1, float(rng.choice([1, 2, 3]))) for i in range(n_vnf - 1)]
    if n_vnf == 3 and rng.random() < 0.3:
        vls.append(VirtualLink(0, 2, float(rng.choice([1, 2]))))
    return psn, Nspr(0, vnfs, vls)


def naive_feasible(psn: PsnGraph, nspr: Nspr) -> bool:
    """Brute force over server assignments and simple-path combinations,
    built on networkx rather than the package's own routing."""
    g = nx.Graph()
    g.add_nodes_from(range(len(psn.nodes)))
    cap = {}
    for l in psn.links:
        g.add_edge(l.a, l.b)
        cap[frozenset((l.a, l.b))] = l.avail_bw
    servers = [n.id for n in psn.nodes if n.kind == SERVER]
    for combo in itertools.product(servers, repeat=len(nspr.vnfs)):
        used_cpu, used_ram = {}, {}
        for vnf, s in zip(nspr.vnfs, combo):
            used_cpu[s] = used_cpu.get(s, 0) + vnf.req_cpu
            used_ram[s] = used_ram.get(s, 0) + vnf.req_ram
        if any(used_cpu[s] > psn.nodes[s].avail_cpu or used_ram[s] > psn.nodes[s].avail_ram for s in used_cpu):
            continue
        options = []
        for vl in nspr.vls:
            a, b = combo[vl.src], combo[vl.dst]
            options.append([[]] if a == b else [list(zip(p, p[1:])) for p in nx.all_simple_paths(g, a, b)])
        for choice in itertools.product(*options):
            load = {}
            for vl, path in zip(nspr.vls, choice):
                for a, b in path:
                    e = frozenset((a, b))
                    load[e] = load.get(e, 0) + vl.req_bw
            if all(load[e] <= cap[e] for e in load):
                return True
    return False


def conservation_holds(psn: PsnGraph, base: PsnGraph) -> bool:
    """Initial availability minus the demand of live slices equals the
    current availability, exactly."""
    cpu = [n.avail_cpu for n in base.nodes]
    ram = [n.avail_ram for n in base.nodes]
    bw = [l.avail_bw for l in base.links]
    for nspr, p in psn.live.values():
        for v, s in p.vnf_assignment.items():
            cpu[s] -= nspr.vnfs[v].req_cpu
            ram[s] -= nspr.vnfs[v].req_ram
        for vl in nspr.vls:
            for hop in p.vl_paths[vl.key]:
                bw[psn.link_index[hop]] -= vl.req_bw
    return psn.availability() == (tuple(cpu), tuple(ram), tuple(bw))

"""Power-of-two-choices greedy placement heuristic.

With ``candidate_scope="datacenter"`` (default) each request first draws two
servers uniformly at random and restricts itself to the data centers hosting
them; every VNF then picks the better of two random feasible servers inside
that pool. ``candidate_scope="server"`` skips the first stage and samples
from every server in the substrate.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .placement import IncrementalPlacement, Placement
from .topology import Nspr, PsnGraph

log = logging.getLogger(__name__)


SCOPES = ("datacenter", "server")


@dataclass
class P2cConfig:
    seed: int | None = None
    candidate_count: int = 2
    w_bw: float = 1.0
    w_lb: float = 1.0
    retries: int = 3
    trace: bool = False
    candidate_scope: str = "datacenter"

    def __post_init__(self):
        if self.candidate_count < 2:
            raise ValueError("candidate_count must be >= 2")
        if self.w_bw < 0 or self.w_lb < 0 or (self.w_bw == 0 and self.w_lb == 0):
            raise ValueError("score weights must be non-negative and not both zero")
        if self.retries < 0:
            raise ValueError("retries must be >= 0")
        if self.candidate_scope not in SCOPES:
            raise ValueError(f"candidate_scope must be one of {SCOPES}")


def _score(partial: IncrementalPlacement, v: int, s: int, paths: dict, cfg: P2cConfig) -> float:
    node = partial.psn.nodes[s]
    vnf = partial.nspr.vnfs[v]
    hops = sum(len(p) for p in paths.values())
    balance = (node.avail_cpu - vnf.req_cpu) / node.max_cpu + (node.avail_ram - vnf.req_ram) / node.max_ram
    return cfg.w_bw * hops - cfg.w_lb * balance


def candidate_pool(partial: IncrementalPlacement, cfg: P2cConfig, rng: np.random.Generator) -> set[int] | None:
    """Servers the heuristic may use for this request (``None`` = all).

    Drawn once per request and kept on ``partial``. Servers outside any data
    center group count as their own group.
    """
    if cfg.candidate_scope == "server":
        return None
    pool = partial.heu_pool
    if pool is None:
        psn = partial.psn
        servers = psn.servers
        picks = rng.choice(len(servers), size=min(2, len(servers)), replace=False)
        pool = set()
        for i in picks:
            dc = psn.nodes[servers[i]].dc
            pool.update(psn.dc_groups[dc].servers if dc in psn.dc_groups else [servers[i]])
        partial.heu_pool = pool
    return pool


def _choose(partial: IncrementalPlacement, v: int, cfg: P2cConfig, rng: np.random.Generator):
    pool = candidate_pool(partial, cfg, rng)
    feasible = [s for s in partial.psn.servers if (pool is None or s in pool) and partial.can_host(v, s)]
    if not feasible:
        return None
    k = min(cfg.candidate_count, len(feasible))
    for _ in range(1 + cfg.retries):
        picks = rng.choice(len(feasible), size=k, replace=False)
        best = None
        for i in picks:
            s = feasible[i]
            paths = partial.route(v, s)
            if paths is None:
                continue
            score = _score(partial, v, s, paths, cfg)
            if cfg.trace:
                log.debug("nspr=%s vnf=%d candidate=%d score=%.4f", partial.nspr.id, v, s, score)
            if best is None or score < best[0]:
                best = (score, s, paths)
        if best is not None:
            return best[1], best[2]
        if k == len(feasible):
            break
    return None


def heu_suggest(partial: IncrementalPlacement, v: int, cfg: P2cConfig, rng: np.random.Generator) -> int | None:
    """Server the heuristic would pick for VNF ``v``, without placing it."""
    choice = _choose(partial, v, cfg, rng)
    return None if choice is None else choice[0]


def p2c_place_vnf(partial: IncrementalPlacement, v: int, cfg: P2cConfig, rng: np.random.Generator) -> int | None:
    choice = _choose(partial, v, cfg, rng)
    if choice is None:
        return None
    s, paths = choice
    partial.place(v, s, paths)
    return s


def p2c_place_nspr(psn: PsnGraph, nspr: Nspr, cfg: P2cConfig, rng: np.random.Generator) -> Placement:
    """Place VNFs in order; commit on success, leave ``psn`` untouched on rejection."""
    partial = IncrementalPlacement(psn, nspr)
    for v in range(len(nspr.vnfs)):
        if p2c_place_vnf(partial, v, cfg, rng) is None:
            partial.rollback()
            return Placement.rejected(nspr.id)
    return partial.finish()

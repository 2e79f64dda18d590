"""Discrete-event simulation of slice arrivals and departures."""
from __future__ import annotations

import heapq
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .agent import DrlAgent, TrainingConfig, a3c_update
from .neural import ActorCriticParams
from .p2c import P2cConfig, p2c_place_nspr
from .placement import release
from .topology import EMBB_BW, EMBB_CPU, EMBB_RAM, EMBB_VNFS, Nspr, PsnGraph, Vnf, VirtualLink, build_reference_psn

log = logging.getLogger(__name__)

AGENT_KINDS = ("heu", "drl", "hadrl")


@dataclass
class SliceClass:
    name: str = "eMBB"
    num_vnfs: int = EMBB_VNFS
    cpu: float = EMBB_CPU
    ram: float = EMBB_RAM
    bw: float = EMBB_BW
    load_share: float = 1.0

    @property
    def cpu_demand(self) -> float:
        return self.num_vnfs * self.cpu

    def make(self, id: int, arrival_time: float, lifetime: float) -> Nspr:
        return Nspr(
            id,
            [Vnf(self.cpu, self.ram) for _ in range(self.num_vnfs)],
            [VirtualLink(i, i + 1, self.bw) for i in range(self.num_vnfs - 1)],
            arrival_time,
            lifetime,
            self.name,
        )


@dataclass
class SimConfig:
    rho: float = 0.5
    mean_lifetime: float = 100.0
    phase_size: int = 1000
    arrivals: int = 10_000
    seed: int = 0
    agent: str = "heu"
    train: bool = True
    use_heuristic: bool = True
    warmup_phases: int | None = None
    classes: list[SliceClass] = field(default_factory=lambda: [SliceClass()])
    training: TrainingConfig = field(default_factory=TrainingConfig)
    p2c: P2cConfig = field(default_factory=P2cConfig)

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.phase_size < 1:
            raise ValueError("phase_size must be >= 1")
        if self.mean_lifetime <= 0:
            raise ValueError("mean_lifetime must be positive")
        if self.agent not in AGENT_KINDS:
            raise ValueError(f"unknown agent kind {self.agent!r}; expected one of {AGENT_KINDS}")


@dataclass
class SimMetrics:
    phase_accepts: list[int] = field(default_factory=list)
    phase_arrivals: list[int] = field(default_factory=list)
    cumulative: list[float] = field(default_factory=list)
    placement_times: list[float] = field(default_factory=list)
    arrivals: int = 0
    accepts: int = 0
    rejects: int = 0

    @property
    def phase_ratios(self) -> list[float]:
        return [a / n for a, n in zip(self.phase_accepts, self.phase_arrivals)]

    def steady_state(self, warmup: int | None = None) -> float:
        """Acceptance over the phases left after discarding ``warmup`` leading
        phases (default: 10, capped at a tenth of the run)."""
        if warmup is None:
            warmup = default_warmup(len(self.phase_arrivals))
        acc = sum(self.phase_accepts[warmup:])
        n = sum(self.phase_arrivals[warmup:])
        return acc / n if n else float("nan")


def default_warmup(num_phases: int) -> int:
    return min(10, num_phases // 10)


def arrival_rate_for_load(rho: float, capacity: float, classes, mean_lifetime: float = 100.0) -> list[float]:
    """Per-class arrival rates giving CPU load ``rho`` on ``capacity`` units.

    Class k carries ``load_share`` of the load: lambda_k = share * rho * C * mu / A_k.
    """
    mu = 1.0 / mean_lifetime
    rates = []
    for c in classes:
        if c.cpu_demand <= 0:
            raise ValueError(f"slice class {c.name!r} has no CPU demand")
        rates.append(c.load_share * rho * capacity * mu / c.cpu_demand)
    return rates


class HeuAgent:
    def __init__(self, cfg: P2cConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.mode = "eval"

    def run_episode(self, psn: PsnGraph, nspr: Nspr):
        return [], p2c_place_nspr(psn, nspr, self.cfg, self.rng)


def make_agent(kind: str, psn: PsnGraph, params: ActorCriticParams | None, cfg: SimConfig, seeds):
    """Build the agent for ``kind``; ``seeds`` is a list of SeedSequences
    (agent sampling, heuristic, parameter init)."""
    agent_rng = np.random.default_rng(seeds[0])
    heu_rng = np.random.default_rng(seeds[1])
    if kind == "heu":
        return HeuAgent(cfg.p2c, heu_rng), None
    if params is None:
        params = ActorCriticParams.create(psn.num_nodes, np.random.default_rng(seeds[2]),
                                          dtype=cfg.training.precision)
    training = cfg.training
    heuristic = None
    if kind == "hadrl":
        heuristic = cfg.p2c
    elif training.xi != 0:
        training = TrainingConfig(**{**training.__dict__, "xi": 0.0})
    agent = DrlAgent(params, training, psn, agent_rng, heuristic, heu_rng, "train" if cfg.train else "eval")
    agent.use_heuristic = kind == "hadrl" and cfg.use_heuristic
    return agent, params


@dataclass
class SimResult:
    metrics: SimMetrics
    params: ActorCriticParams | None
    psn: PsnGraph


def run_simulation(cfg: SimConfig, psn: PsnGraph | None = None, params: ActorCriticParams | None = None,
                   on_event=None, on_phase=None) -> SimResult:
    """Run ``cfg.arrivals`` slice arrivals through the configured agent.

    ``on_event(kind, time, psn)`` is called after every arrival and departure;
    ``on_phase(index, ratio)`` after every completed phase.
    """
    psn = build_reference_psn() if psn is None else psn
    seeds = np.random.SeedSequence(cfg.seed).spawn(4)
    traffic = np.random.default_rng(seeds[0])
    agent, params = make_agent(cfg.agent, psn, params, cfg, seeds[1:])
    training = cfg.train and cfg.agent != "heu"

    rates = arrival_rate_for_load(cfg.rho, psn.total_cpu(), cfg.classes, cfg.mean_lifetime)
    total_rate = sum(rates)
    class_p = np.array(rates) / total_rate
    metrics = SimMetrics()
    departures: list[tuple[float, int, Nspr]] = []
    now = 0.0
    phase_acc = phase_n = 0
    for i in range(cfg.arrivals):
        now += traffic.exponential(1.0 / total_rate)
        k = 0 if len(rates) == 1 else int(traffic.choice(len(rates), p=class_p))
        lifetime = traffic.exponential(cfg.mean_lifetime)
        while departures and departures[0][0] <= now:
            t_dep, _, gone = heapq.heappop(departures)
            release(psn, gone)
            if on_event:
                on_event("departure", t_dep, psn)
        nspr = cfg.classes[k].make(i, now, lifetime)
        start = time.perf_counter()
        transitions, placement = agent.run_episode(psn, nspr)
        metrics.placement_times.append(time.perf_counter() - start)
        if training:
            agent.last_stats = a3c_update(transitions, agent.params, agent.cfg, agent.optimizers)
        metrics.arrivals += 1
        phase_n += 1
        if placement.accepted:
            metrics.accepts += 1
            phase_acc += 1
            heapq.heappush(departures, (now + lifetime, i, nspr))
        else:
            metrics.rejects += 1
        metrics.cumulative.append(metrics.accepts / metrics.arrivals)
        if on_event:
            on_event("arrival", now, psn)
        if phase_n == cfg.phase_size or i == cfg.arrivals - 1:
            metrics.phase_accepts.append(phase_acc)
            metrics.phase_arrivals.append(phase_n)
            log.info("phase %d acceptance %.4f", len(metrics.phase_accepts), phase_acc / phase_n)
            if on_phase:
                on_phase(len(metrics.phase_accepts), phase_acc / phase_n)
            phase_acc = phase_n = 0
    return SimResult(metrics, params, psn)


@dataclass
class TimedPlacement:
    seconds: float
    steps: int
    accepted: bool


def timed_placements(agent, psn: PsnGraph, nsprs: list[Nspr]) -> list[TimedPlacement]:
    """Time one placement attempt per request, without training updates.

    Every request sees the same substrate state: accepted placements are
    released right after timing. ``steps`` counts agent decisions (for the
    heuristic, the VNFs of accepted requests).
    """
    out = []
    for nspr in nsprs:
        start = time.perf_counter()
        transitions, placement = agent.run_episode(psn, nspr)
        elapsed = time.perf_counter() - start
        steps = len(transitions) if transitions else (len(nspr.vnfs) if placement.accepted else 0)
        out.append(TimedPlacement(elapsed, steps, placement.accepted))
        if placement.accepted:
            release(psn, nspr)
    return out


def wall_clock_probe(agent, psn: PsnGraph, nsprs: list[Nspr]) -> float:
    """Mean seconds per placement attempt over ``nsprs``."""
    if not nsprs:
        raise ValueError("empty request batch")
    times = timed_placements(agent, psn, nsprs)
    return sum(t.seconds for t in times) / len(times)


def validation_run(params: ActorCriticParams, cfg: SimConfig, psn: PsnGraph | None = None) -> list[float]:
    """Cumulative acceptance ratio after each arrival for a frozen agent
    (arg-max actions, no updates)."""
    psn = build_reference_psn() if psn is None else psn
    run_cfg = SimConfig(**{**cfg.__dict__, "train": False})
    if run_cfg.agent == "heu":
        params = None
    return run_simulation(run_cfg, psn, params.copy() if params is not None else None).metrics.cumulative

"""Sequential placement agent: state encoding, rewards, episodes, A3C updates
and the heuristic policy modifier."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .neural import ActorCriticParams, Adam, ShapeError, normalized_adjacency, softmax, softmax_objective
from .p2c import P2cConfig, heu_suggest
from .placement import IncrementalPlacement, Placement, server_balance
from .topology import SERVER, Nspr, PsnGraph, normalized_features

ACCEPT_REWARD = 100.0
REJECT_REWARD = -100.0
MAX_BALANCE = 2.0


@dataclass
class TrainingConfig:
    actor_lr: float = 1e-4
    critic_lr: float = 2.5e-3
    entropy_weight: float = 0.5
    gamma: float = 1.0
    beta: float = 1.0
    xi: float = 1.0
    eta: float = 0.0
    reward_max: float = 10.0
    optimizer: str = "adam"
    # dtype of freshly created network parameters
    precision: str = "float32"

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.precision not in ("float32", "float64"):
            raise ValueError(f"unknown precision {self.precision!r}")
        if self.actor_lr <= 0 or self.critic_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.entropy_weight < 0:
            raise ValueError("entropy_weight must be >= 0")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.xi < 0 or self.eta < 0:
            raise ValueError("xi and eta must be >= 0")


@dataclass
class AgentState:
    node_features: np.ndarray
    nspr_features: np.ndarray
    vnf_index: int

    @property
    def chi(self) -> np.ndarray:
        return self.node_features[:, 3]


def encode_state(psn: PsnGraph, nspr: Nspr, v: int, chi=None) -> AgentState:
    nodes, req = normalized_features(psn, nspr, v, chi)
    return AgentState(nodes, req, v)


def select_action(pi: np.ndarray, mode: str, rng: np.random.Generator | None = None) -> int:
    """Categorical sample in ``train`` mode, lowest-index argmax in ``eval``."""
    if mode == "eval":
        return int(np.argmax(pi))
    if mode != "train":
        raise ValueError(f"unknown mode {mode!r}")
    u = rng.random()
    a = int(np.searchsorted(np.cumsum(pi), u * pi.sum(), side="right"))
    return min(a, len(pi) - 1)


def step_reward(success: bool, hops: int = 0, balance: float = 0.0) -> tuple[float, float, float]:
    """(acceptance, resource, load-balance) rewards of one placement action.

    ``hops`` is the length of the path carrying the VL from the previous VNF
    (0 for co-location or for the first VNF); ``balance`` is the free CPU plus
    free RAM fraction of the chosen server before the VNF lands on it.
    """
    if not success:
        return REJECT_REWARD, 0.0, 0.0
    return ACCEPT_REWARD, (1.0 / hops if hops > 0 else 1.0), balance


def global_reward(products, terminal: bool, success: bool, normalizer: float | None = None) -> float:
    """Reward returned after an action.

    ``products`` holds acceptance*balance*resource for each successful step of
    the episode so far. The terminal sum is divided by ``normalizer`` when
    given.
    """
    if not success:
        return REJECT_REWARD
    if not terminal:
        return 0.0
    total = float(sum(products))
    return total / normalizer if normalizer else total


def reward_normalizer(num_vnfs: int, reward_max: float) -> float:
    """Maps the largest achievable terminal sum onto ``reward_max``."""
    return ACCEPT_REWARD * MAX_BALANCE * 1.0 * num_vnfs / reward_max


def heuristic_function(z: np.ndarray, a_star: int | None, eta: float) -> np.ndarray:
    """Gap between the best score and the suggested action's score, plus eta,
    on the suggested action; zero elsewhere."""
    h = np.zeros_like(z, dtype=float)
    if a_star is not None:
        h[a_star] = z.max() - z[a_star] + eta
    return h


def apply_heuristic_modifier(z: np.ndarray, h: np.ndarray, xi: float, beta: float) -> np.ndarray:
    return z + xi * np.power(h, beta)


def modifier_backward(z: np.ndarray, a_star: int | None, cfg: TrainingConfig, dz_mod: np.ndarray) -> np.ndarray:
    """Pull a gradient w.r.t. the modified scores back to the raw scores."""
    dz = dz_mod.copy()
    if a_star is None or cfg.xi == 0:
        return dz
    best = int(np.argmax(z))
    gap = z[best] - z[a_star] + cfg.eta
    if gap <= 0 or best == a_star:
        return dz
    coeff = dz_mod[a_star] * cfg.xi * cfg.beta * gap ** (cfg.beta - 1.0)
    dz[best] += coeff
    dz[a_star] -= coeff
    return dz


@dataclass
class Transition:
    state: AgentState
    action: int
    reward: float
    terminal: bool
    pi: np.ndarray
    value: float
    z: np.ndarray
    a_star: int | None = None
    modified: bool = False
    next_state: AgentState | None = None
    actor_cache: dict = field(default=None, repr=False)
    critic_cache: dict = field(default=None, repr=False)


class DrlAgent:
    """Actor-critic placement agent, optionally assisted by the P2C heuristic.

    ``heuristic`` enables the policy modifier; ``use_heuristic`` switches it
    off without discarding the configuration (validation runs).
    """

    def __init__(self, params: ActorCriticParams, cfg: TrainingConfig, psn: PsnGraph,
                 rng: np.random.Generator, heuristic: P2cConfig | None = None,
                 heu_rng: np.random.Generator | None = None, mode: str = "train"):
        if params.num_nodes != psn.num_nodes:
            raise ShapeError(f"parameters built for {params.num_nodes} nodes, topology has {psn.num_nodes}")
        self.params = params
        self.cfg = cfg
        self.rng = rng
        self.heuristic = heuristic
        self.heu_rng = heu_rng if heu_rng is not None else rng
        self.mode = mode
        self.use_heuristic = heuristic is not None
        self.a_hat = normalized_adjacency(psn.adjacency_matrix()).astype(params.actor.dtype)
        self.optimizers = (Adam(), Adam())
        self.last_stats: dict = {}

    def policy(self, state: AgentState, a_star: int | None = None):
        z, cache = self.params.actor.forward(state.node_features, state.nspr_features, self.a_hat)
        z = z.astype(float)
        modified = a_star is not None and self.cfg.xi != 0
        z_used = z
        if modified:
            h = heuristic_function(z, a_star, self.cfg.eta)
            z_used = apply_heuristic_modifier(z, h, self.cfg.xi, self.cfg.beta)
        return z, z_used, softmax(z_used), cache, modified

    def run_episode(self, psn: PsnGraph, nspr: Nspr) -> tuple[list[Transition], Placement]:
        """Place ``nspr`` VNF by VNF; commit on success, roll back on the first
        unsuccessful action."""
        partial = IncrementalPlacement(psn, nspr)
        n_vnf = len(nspr.vnfs)
        norm = reward_normalizer(n_vnf, self.cfg.reward_max)
        transitions: list[Transition] = []
        products: list[float] = []
        for v in range(n_vnf):
            state = encode_state(psn, nspr, v, partial.chi)
            a_star = None
            if self.use_heuristic:
                a_star = heu_suggest(partial, v, self.heuristic, self.heu_rng)
            z, z_used, pi, acache, modified = self.policy(state, a_star)
            value, ccache = 0.0, None
            if self.mode == "train":
                value, ccache = self.params.critic.forward(state.node_features, state.nspr_features, self.a_hat)
            a = select_action(pi, self.mode, self.rng)
            balance = server_balance(psn, a) if psn.nodes[a].kind == SERVER else 0.0
            paths = partial.try_place(v, a)
            success = paths is not None
            if success:
                hops = sum(len(p) for p in paths.values())
                da, dc, db = step_reward(True, hops, balance)
                products.append(da * db * dc)
            terminal = not success or v == n_vnf - 1
            r = global_reward(products, terminal, success, norm)
            if transitions:
                transitions[-1].next_state = state
            transitions.append(Transition(state, a, r, terminal, pi, value, z, a_star, modified,
                                          actor_cache=acache, critic_cache=ccache))
            if not success:
                partial.rollback()
                return transitions, Placement.rejected(nspr.id)
        return transitions, partial.finish()

    def place(self, psn: PsnGraph, nspr: Nspr) -> Placement:
        transitions, placement = self.run_episode(psn, nspr)
        if self.mode == "train":
            self.last_stats = a3c_update(transitions, self.params, self.cfg, self.optimizers)
        return placement


def advantages(transitions: list[Transition], gamma: float) -> np.ndarray:
    values = np.array([t.value for t in transitions])
    nxt = np.append(values[1:], 0.0)
    nxt[[t.terminal for t in transitions]] = 0.0
    rewards = np.array([t.reward for t in transitions])
    return rewards + gamma * nxt - values


def actor_objective(params: ActorCriticParams, transitions, cfg: TrainingConfig, adv=None) -> float:
    """J + phi * entropy, recomputed from stored states with current parameters
    (advantages held fixed)."""
    adv = advantages(transitions, cfg.gamma) if adv is None else adv
    total = 0.0
    for t, A in zip(transitions, adv):
        z, _ = params.actor.forward(t.state.node_features, t.state.nspr_features, t.actor_cache["a_hat"])
        if t.modified:
            z = apply_heuristic_modifier(z, heuristic_function(z, t.a_star, cfg.eta), cfg.xi, cfg.beta)
        total += softmax_objective(z, t.action, A, cfg.entropy_weight)[0]
    return total


def actor_gradients(params: ActorCriticParams, transitions, cfg: TrainingConfig, adv=None):
    adv = advantages(transitions, cfg.gamma) if adv is None else adv
    dzs = []
    for t, A in zip(transitions, adv):
        z_used = t.z
        if t.modified:
            z_used = apply_heuristic_modifier(t.z, heuristic_function(t.z, t.a_star, cfg.eta), cfg.xi, cfg.beta)
        _, dz = softmax_objective(z_used, t.action, A, cfg.entropy_weight)
        if t.modified:
            dz = modifier_backward(t.z, t.a_star, cfg, dz)
        dzs.append(dz)
    return params.actor.backward([t.actor_cache for t in transitions], np.stack(dzs))


def critic_targets(transitions, gamma: float) -> np.ndarray:
    values = np.array([t.value for t in transitions])
    return advantages(transitions, gamma) + values


def critic_loss(params: ActorCriticParams, transitions, cfg: TrainingConfig, targets=None) -> float:
    """Squared TD error with targets held fixed."""
    targets = critic_targets(transitions, cfg.gamma) if targets is None else targets
    total = 0.0
    for t, y in zip(transitions, targets):
        v, _ = params.critic.forward(t.state.node_features, t.state.nspr_features, t.critic_cache["a_hat"])
        total += (y - v) ** 2
    return total


def critic_gradients(params: ActorCriticParams, transitions, cfg: TrainingConfig, targets=None):
    targets = critic_targets(transitions, cfg.gamma) if targets is None else targets
    values = np.array([t.value for t in transitions])
    return params.critic.backward([t.critic_cache for t in transitions], -2.0 * (targets - values))


def a3c_update(transitions: list[Transition], params: ActorCriticParams, cfg: TrainingConfig,
               optimizers: tuple[Adam, Adam] | None = None) -> dict:
    """One end-of-episode update: gradient ascent on the actor objective,
    descent on the critic's squared TD error, both scaled by 1/episode length.

    With ``cfg.optimizer == "sgd"`` the scaled gradients are applied directly;
    with ``"adam"`` they are fed to the pair of Adam states in ``optimizers``.
    """
    if not transitions:
        raise ValueError("empty episode")
    n = len(transitions)
    adv = advantages(transitions, cfg.gamma)
    g_actor = actor_gradients(params, transitions, cfg, adv)
    g_critic = critic_gradients(params, transitions, cfg)
    if cfg.optimizer == "sgd":
        params.actor.apply(g_actor, cfg.actor_lr / n)
        params.critic.apply(g_critic, -cfg.critic_lr / n)
    else:
        if optimizers is None:
            raise ValueError("adam updates need optimizer state")
        optimizers[0].step(params.actor.params, g_actor, -cfg.actor_lr, 1.0 / n)
        optimizers[1].step(params.critic.params, g_critic, cfg.critic_lr, 1.0 / n)
    return {"steps": n, "mean_advantage": float(adv.mean()), "td_loss": float((adv ** 2).sum())}


def run_episode(psn, nspr, params, cfg, heuristic=None, rng=None, mode="train", heu_rng=None):
    agent = DrlAgent(params, cfg, psn, rng or np.random.default_rng(), heuristic, heu_rng, mode)
    return agent.run_episode(psn, nspr)

"""GCN-based actor and critic networks with hand-written backpropagation.

Both networks share one shape::

    node features (|N|, 4) --K x GCN--> (|N|, 60) --flatten--+
                                                             +--> dense |N| --> out
    NSPR features (4,) -------dense 4------------------------+

The actor emits the |N| dense outputs directly (pre-softmax scores); the
critic applies its activation to them and adds a one-neuron value head.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

CHECKPOINT_FORMAT = "hadrl-ckpt/1"


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


def normalized_adjacency(adj: np.ndarray) -> np.ndarray:
    """D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I."""
    a = np.asarray(adj, dtype=float) + np.eye(len(adj))
    d = 1.0 / np.sqrt(a.sum(axis=1))
    return a * d[:, None] * d[None, :]


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def entropy(pi: np.ndarray) -> float:
    p = pi[pi > 0]
    return float(-(p * np.log(p)).sum())


def softmax_objective(z: np.ndarray, action: int, advantage: float, phi: float) -> tuple[float, np.ndarray]:
    """``advantage * log pi(action) + phi * H(pi)`` for pi = softmax(z), and its gradient in z."""
    logp = log_softmax(z)
    pi = np.exp(logp)
    h = -float((pi * logp).sum())
    value = advantage * logp[action] + phi * h
    grad = -advantage * pi
    grad[action] += advantage
    # dH/dz_i = -pi_i (log pi_i + H)
    grad -= phi * pi * (logp + h)
    return value, grad


_ACTIVATIONS = {
    "tanh": (np.tanh, lambda y: 1.0 - y * y),
    "relu": (lambda x: np.maximum(x, 0.0), lambda y: (y > 0).astype(y.dtype)),
    "linear": (lambda x: x, lambda y: np.ones_like(y)),
}


class GcnNet:
    """One actor or critic network. Parameters live in ``self.params``."""

    def __init__(self, num_nodes: int, activation: str = "tanh", value_head: bool = False,
                 hidden: int = 60, K: int = 3, node_inputs: int = 4, nspr_inputs: int = 4, nspr_units: int = 4,
                 dtype: str = "float64"):
        if K < 1:
            raise ValueError("K must be >= 1")
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        if dtype not in ("float32", "float64"):
            raise ValueError(f"unsupported dtype {dtype!r}")
        self.num_nodes = num_nodes
        self.activation = activation
        self.value_head = value_head
        self.hidden = hidden
        self.K = K
        self.node_inputs = node_inputs
        self.nspr_inputs = nspr_inputs
        self.nspr_units = nspr_units
        self.dtype = dtype
        self.params: dict[str, np.ndarray] = {}

    def shapes(self) -> dict[str, tuple[int, ...]]:
        n, f = self.num_nodes, self.hidden
        shapes = {}
        fin = self.node_inputs
        for k in range(self.K):
            shapes[f"gcn{k}.W"] = (fin, f)
            shapes[f"gcn{k}.b"] = (f,)
            fin = f
        shapes["nspr.W"] = (self.nspr_inputs, self.nspr_units)
        shapes["nspr.b"] = (self.nspr_units,)
        shapes["trunk.W"] = (n * f + self.nspr_units, n)
        shapes["trunk.b"] = (n,)
        if self.value_head:
            shapes["value.W"] = (n,)
            shapes["value.b"] = ()
        return shapes

    def init(self, rng: np.random.Generator) -> GcnNet:
        """Uniform in +-1/sqrt(fan_in) for weights and biases."""
        shapes = self.shapes()
        for name, shape in shapes.items():
            layer = name.split(".")[0]
            fan_in = shapes[layer + ".W"][0]
            bound = 1.0 / np.sqrt(fan_in)
            self.params[name] = rng.uniform(-bound, bound, size=shape).astype(self.dtype)
        return self

    def config(self) -> dict:
        return {
            "num_nodes": self.num_nodes, "activation": self.activation, "value_head": self.value_head,
            "hidden": self.hidden, "K": self.K, "node_inputs": self.node_inputs,
            "nspr_inputs": self.nspr_inputs, "nspr_units": self.nspr_units, "dtype": self.dtype,
        }

    def copy(self) -> GcnNet:
        new = GcnNet(**self.config())
        new.params = {k: v.copy() for k, v in self.params.items()}
        return new

    def forward(self, x_nodes: np.ndarray, x_nspr: np.ndarray, a_hat: np.ndarray):
        """Return (output, cache). Output is the |N| score vector, or the
        scalar value estimate when the net has a value head."""
        n = self.num_nodes
        if x_nodes.shape != (n, self.node_inputs) or a_hat.shape != (n, n) or x_nspr.shape != (self.nspr_inputs,):
            raise ShapeError(
                f"expected node features {(n, self.node_inputs)}, adjacency {(n, n)}, "
                f"nspr features {(self.nspr_inputs,)}; got {x_nodes.shape}, {a_hat.shape}, {x_nspr.shape}"
            )
        act, _ = _ACTIVATIONS[self.activation]
        p = self.params
        x_nspr = x_nspr.astype(self.dtype, copy=False)
        a_hat = a_hat.astype(self.dtype, copy=False)
        h = x_nodes.astype(self.dtype, copy=False)
        ah_list, h_list = [], []
        for k in range(self.K):
            ah = a_hat @ h
            h = act(ah @ p[f"gcn{k}.W"] + p[f"gcn{k}.b"])
            ah_list.append(ah)
            h_list.append(h)
        u = act(x_nspr @ p["nspr.W"] + p["nspr.b"])
        c = np.concatenate([h.reshape(-1), u])
        t = c @ p["trunk.W"] + p["trunk.b"]
        cache = {"x_nspr": x_nspr, "ah": ah_list, "h": h_list, "u": u, "c": c, "a_hat": a_hat}
        if not self.value_head:
            out = t
        else:
            hv = act(t)
            cache["hv"] = hv
            out = float(hv @ p["value.W"] + p["value.b"])
        if not np.all(np.isfinite(out)):
            raise NonFiniteError("non-finite network output")
        return out, cache

    def backward(self, caches: list[dict], douts) -> dict[str, np.ndarray]:
        """Parameter gradients of sum_t <douts[t], out_t> over a batch of forward caches."""
        _, dact = _ACTIVATIONS[self.activation]
        p = self.params
        n, f = self.num_nodes, self.hidden
        T = len(caches)
        dtype = p["trunk.W"].dtype
        grads = {}
        douts = np.asarray(douts, dtype=dtype)
        if self.value_head:
            hv = np.stack([c["hv"] for c in caches])
            grads["value.W"] = hv.T @ douts
            grads["value.b"] = np.asarray(douts.sum(), dtype=dtype)
            dt = douts[:, None] * p["value.W"][None, :] * dact(hv)
        else:
            dt = douts.reshape(T, n)
        cmat = np.stack([c["c"] for c in caches])
        grads["trunk.W"] = cmat.T @ dt
        grads["trunk.b"] = dt.sum(axis=0)
        dc = dt @ p["trunk.W"].T
        du = dc[:, n * f:] * dact(np.stack([c["u"] for c in caches]))
        grads["nspr.W"] = np.stack([c["x_nspr"] for c in caches]).T @ du
        grads["nspr.b"] = du.sum(axis=0)
        dh = dc[:, : n * f].reshape(T, n, f)
        a_hat = caches[0]["a_hat"]
        for k in reversed(range(self.K)):
            hk = np.stack([c["h"][k] for c in caches])
            dpre = (dh * dact(hk)).reshape(T * n, f)
            ah = np.concatenate([c["ah"][k] for c in caches])
            grads[f"gcn{k}.W"] = ah.T @ dpre
            grads[f"gcn{k}.b"] = dpre.sum(axis=0)
            if k:
                # a_hat is symmetric
                dh = a_hat @ (dpre @ p[f"gcn{k}.W"].T).reshape(T, n, -1)
        return grads

    def apply(self, grads: dict[str, np.ndarray], scale: float):
        for name, g in grads.items():
            self.params[name] += scale * g


@numba.njit(cache=True)
def _adam_kernel(param, grad, m, v, b1, b2, grad_scale, step, denom_scale, eps):
    param, grad, m, v = param.reshape(-1), grad.reshape(-1), m.reshape(-1), v.reshape(-1)
    one = b1 - b1 + 1
    for i in range(param.size):
        g = grad[i] * grad_scale
        mi = b1 * m[i] + (one - b1) * g
        vi = b2 * v[i] + (one - b2) * g * g
        m[i] = mi
        v[i] = vi
        param[i] -= step * mi / (np.sqrt(vi) * denom_scale + eps)


class Adam:
    """Adam step on a parameter dict. ``lr`` may be negative for ascent."""

    def __init__(self, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.b1, self.b2, self.eps = b1, b2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float, grad_scale: float = 1.0):
        """In-place update; gradients are multiplied by ``grad_scale`` first."""
        self.t += 1
        bc1 = 1.0 - self.b1 ** self.t
        bc2 = 1.0 - self.b2 ** self.t
        for name, g in grads.items():
            p = params[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            g = np.ascontiguousarray(g, dtype=p.dtype)
            # scalars in the parameter dtype keep the kernel free of conversions
            scalars = [p.dtype.type(x) for x in (self.b1, self.b2, grad_scale, lr / bc1, 1.0 / np.sqrt(bc2), self.eps)]
            if p.ndim == 0:
                # numba kernels need at least 1-d views
                p1 = p.reshape(1)
                _adam_kernel(p1, g.reshape(1), self.m[name].reshape(1), self.v[name].reshape(1), *scalars)
                params[name] = p1.reshape(())
            else:
                _adam_kernel(p, g, self.m[name], self.v[name], *scalars)


@dataclass
class ActorCriticParams:
    actor: GcnNet
    critic: GcnNet

    @classmethod
    def create(cls, num_nodes: int, rng: np.random.Generator, hidden: int = 60, K: int = 3,
               dtype: str = "float64") -> ActorCriticParams:
        return cls(
            GcnNet(num_nodes, "tanh", value_head=False, hidden=hidden, K=K, dtype=dtype).init(rng),
            GcnNet(num_nodes, "relu", value_head=True, hidden=hidden, K=K, dtype=dtype).init(rng),
        )

    @property
    def num_nodes(self) -> int:
        return self.actor.num_nodes

    def copy(self) -> ActorCriticParams:
        return ActorCriticParams(self.actor.copy(), self.critic.copy())

    def save(self, path):
        meta = {"format": CHECKPOINT_FORMAT, "actor": self.actor.config(), "critic": self.critic.config()}
        arrays = {f"actor/{k}": v for k, v in self.actor.params.items()}
        arrays.update({f"critic/{k}": v for k, v in self.critic.params.items()})
        with open(path, "wb") as fh:
            np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **arrays)

    @classmethod
    def load(cls, path, num_nodes: int | None = None) -> ActorCriticParams:
        with np.load(Path(path), allow_pickle=False) as data:
            meta = json.loads(str(data["__meta__"]))
            if meta.get("format") != CHECKPOINT_FORMAT:
                raise ValueError(f"{path}: unsupported checkpoint format {meta.get('format')!r}")
            nets = {}
            for role in ("actor", "critic"):
                net = GcnNet(**meta[role])
                for name, shape in net.shapes().items():
                    key = f"{role}/{name}"
                    if key not in data or data[key].shape != shape:
                        raise ShapeError(f"{path}: parameter {key} missing or not shaped {shape}")
                    net.params[name] = data[key].astype(net.dtype)
                nets[role] = net
        params = cls(nets["actor"], nets["critic"])
        if num_nodes is not None and params.num_nodes != num_nodes:
            raise ShapeError(f"checkpoint built for {params.num_nodes} nodes, topology has {num_nodes}")
        return params

"""Feed-forward actor and critic with hand-written backpropagation.

The actor maps an observation to the concatenated logits of several
categorical heads; the critic maps it to a scalar value. Both are
``tanh`` MLPs stored as flat lists ``[W1, b1, W2, b2, ..., Wout, bout]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

LOG_RATIO_CAP = 20.0


@dataclass
class PolicyParams:
    actor: List[np.ndarray]
    critic: List[np.ndarray]
    head_sizes: Tuple[int, ...]

    def arrays(self) -> List[np.ndarray]:
        return self.actor + self.critic

    def copy(self) -> "PolicyParams":
        return PolicyParams([a.copy() for a in self.actor], [c.copy() for c in self.critic],
                            tuple(self.head_sizes))

    def all_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays())


def _orthogonal(rng: np.random.Generator, n_in: int, n_out: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((max(n_in, n_out), min(n_in, n_out)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if n_in < n_out:
        q = q.T
    return np.ascontiguousarray(gain * q[:n_in, :n_out])


def _init_mlp(rng, sizes: Sequence[int], out_gain: float) -> List[np.ndarray]:
    layers = []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        gain = out_gain if i == len(sizes) - 2 else np.sqrt(2.0)
        layers += [_orthogonal(rng, n_in, n_out, gain), np.zeros(n_out)]
    return layers


def init_params(obs_dim: int, head_sizes: Sequence[int], rng: np.random.Generator,
                hidden: Sequence[int] = (64, 64)) -> PolicyParams:
    actor = _init_mlp(rng, [obs_dim, *hidden, int(sum(head_sizes))], out_gain=0.01)
    critic = _init_mlp(rng, [obs_dim, *hidden, 1], out_gain=1.0)
    return PolicyParams(actor, critic, tuple(int(h) for h in head_sizes))


def zero_params(obs_dim: int, head_sizes: Sequence[int], hidden: Sequence[int] = (64, 64)) -> PolicyParams:
    sizes_a = [obs_dim, *hidden, int(sum(head_sizes))]
    sizes_c = [obs_dim, *hidden, 1]
    mk = lambda sizes: [z for a, b in zip(sizes[:-1], sizes[1:]) for z in (np.zeros((a, b)), np.zeros(b))]
    return PolicyParams(mk(sizes_a), mk(sizes_c), tuple(head_sizes))


def mlp_forward(layers: List[np.ndarray], x: np.ndarray):
    """Return the output and the post-activation of each hidden layer."""
    acts = [x]
    h = x
    n = len(layers) // 2
    for i in range(n):
        h = h @ layers[2 * i] + layers[2 * i + 1]
        if i < n - 1:
            h = np.tanh(h)
            acts.append(h)
    return h, acts


def mlp_backward(layers: List[np.ndarray], acts: List[np.ndarray], grad_out: np.ndarray) -> List[np.ndarray]:
    n = len(layers) // 2
    grads: List[np.ndarray] = [None] * len(layers)
    g = grad_out
    for i in range(n - 1, -1, -1):
        a_in = acts[i]
        grads[2 * i] = a_in.T @ g
        grads[2 * i + 1] = g.sum(axis=0)
        if i > 0:
            g = (g @ layers[2 * i].T) * (1.0 - a_in ** 2)
    return grads


def split_heads(logits: np.ndarray, head_sizes: Sequence[int]) -> List[np.ndarray]:
    return np.split(logits, np.cumsum(head_sizes)[:-1], axis=-1)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def policy_forward(params: PolicyParams, obs: np.ndarray) -> Tuple[List[np.ndarray], np.ndarray]:
    """Per-head action probabilities and state values for a batch (or one row)."""
    single = obs.ndim == 1
    x = np.atleast_2d(obs)
    logits, _ = mlp_forward(params.actor, x)
    value, _ = mlp_forward(params.critic, x)
    probs = [np.exp(log_softmax(z)) for z in split_heads(logits, params.head_sizes)]
    value = value[:, 0]
    if not (np.isfinite(value).all() and all(np.isfinite(p).all() for p in probs)):
        raise FloatingPointError("non-finite policy output")
    if single:
        return [p[0] for p in probs], value[0]
    return probs, value


def entropy(probs: np.ndarray) -> np.ndarray:
    logp = np.log(np.clip(probs, 1e-300, None))
    return -(probs * logp).sum(axis=-1)


def ppo_loss_and_grad(params: PolicyParams, obs: np.ndarray, actions: np.ndarray,
                      old_logp: np.ndarray, advantages: np.ndarray, returns: np.ndarray,
                      clip: float, vf_coef: float, ent_coef: float):
    """Clipped-surrogate loss (to minimise) and its exact gradient.

    ``actions`` and ``old_logp`` have one column per head. The surrogate is
    summed over heads and averaged over samples.
    """
    n = obs.shape[0]
    logits, a_acts = mlp_forward(params.actor, obs)
    value, c_acts = mlp_forward(params.critic, obs)
    value = value[:, 0]

    rows = np.arange(n)
    grad_logits = []
    pol_loss = 0.0
    ent_total = 0.0
    clipped = 0.0
    approx_kl = 0.0
    for k, z in enumerate(split_heads(logits, params.head_sizes)):
        logp_all = log_softmax(z)
        p = np.exp(logp_all)
        a = actions[:, k]
        raw = logp_all[rows, a] - old_logp[:, k]
        log_ratio = np.clip(raw, -LOG_RATIO_CAP, LOG_RATIO_CAP)
        ratio = np.exp(log_ratio)
        surr1 = ratio * advantages
        surr2 = np.clip(ratio, 1.0 - clip, 1.0 + clip) * advantages
        use_unclipped = surr1 <= surr2
        pol_loss -= np.minimum(surr1, surr2).mean()
        clipped += (~use_unclipped).mean()
        approx_kl += ((ratio - 1) - log_ratio).mean()

        # d(-surr)/d logp_new, then through log-softmax
        d_logp = np.where(use_unclipped & (np.abs(raw) < LOG_RATIO_CAP), -surr1, 0.0) / n
        onehot = np.zeros_like(p)
        onehot[rows, a] = 1.0
        g = d_logp[:, None] * (onehot - p)

        h = -(p * logp_all).sum(axis=-1)
        ent_total += h.mean()
        # d(-ent_coef * mean H)/dz = ent_coef * p * (log p + H) / n
        g += ent_coef * p * (logp_all + h[:, None]) / n
        grad_logits.append(g)

    diff = value - returns
    v_loss = (diff ** 2).mean()
    grad_value = (vf_coef * 2.0 * diff / n)[:, None]

    loss = pol_loss + vf_coef * v_loss - ent_coef * ent_total
    grads_actor = mlp_backward(params.actor, a_acts, np.concatenate(grad_logits, axis=1))
    grads_critic = mlp_backward(params.critic, c_acts, grad_value)
    diag = {
        "loss": float(loss),
        "policy_loss": float(pol_loss),
        "value_loss": float(v_loss),
        "entropy": float(ent_total),
        "approx_kl": float(approx_kl),
        "clip_fraction": float(clipped / len(params.head_sizes)),
    }
    return float(loss), grads_actor + grads_critic, diag


class Adam:
    def __init__(self, arrays: Sequence[np.ndarray], lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.lr, self.betas, self.eps = lr, betas, eps
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]
        self.t = 0

    def step(self, arrays: Sequence[np.ndarray], grads: Sequence[np.ndarray]):
        self.t += 1
        b1, b2 = self.betas
        c1 = 1 - b1 ** self.t
        c2 = 1 - b2 ** self.t
        for a, g, m, v in zip(arrays, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            a -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

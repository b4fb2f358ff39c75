"""Independent PPO learners, one per player, trained in shared episodes."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .network import Adam, PolicyParams, init_params, policy_forward, ppo_loss_and_grad
from .normalize import ObsNormalizer, RewardScaler

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    def __init__(self, iteration: int, player: str, detail: str = ""):
        super().__init__(f"non-finite values at iteration {iteration} for player {player!r} {detail}".strip())
        self.iteration = iteration
        self.player = player


@dataclass
class LearnerConfig:
    clip: float = 0.2
    lr: float = 3e-4
    epochs: int = 10
    minibatch_size: int = 128
    gae_lambda: float = 0.95
    gamma: float = 0.9999
    ent_coef: float = 0.01
    vf_coef: float = 0.5
    max_grad_norm: float = 0.5
    episodes_per_iteration: int = 4
    iterations: int = 50
    hidden: Tuple[int, ...] = (64, 64)
    obs_clip: float = 10.0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.clip <= 0:
            raise ValueError("clip must be > 0")
        if not (0 <= self.gae_lambda <= 1 and 0 <= self.gamma <= 1):
            raise ValueError("gae_lambda and gamma must lie in [0, 1]")
        if min(self.epochs, self.minibatch_size, self.episodes_per_iteration) < 1 or self.iterations < 0:
            raise ValueError("epochs, minibatch_size, episodes_per_iteration must be positive")
        if self.lr <= 0:
            raise ValueError("lr must be > 0")


@dataclass
class Transition:
    obs: np.ndarray
    actions: Tuple[int, ...]
    logp: Tuple[float, ...]
    reward: float
    value: float
    done: bool
    step: int


@dataclass
class TrajectoryBatch:
    player: str
    obs: np.ndarray
    actions: np.ndarray
    logp: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray

    def __len__(self):
        return len(self.obs)


def compute_gae(rewards: Sequence[float], values: Sequence[float], gamma: float, lam: float):
    """Advantages and return targets for one complete episode (terminal value 0)."""
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    adv = np.zeros_like(rewards)
    last = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        next_value = values[t + 1] if t + 1 < len(rewards) else 0.0
        delta = rewards[t] + gamma * next_value - values[t]
        last = delta + gamma * lam * last
        adv[t] = last
    return adv, adv + values


def ppo_update(params: PolicyParams, batch: TrajectoryBatch, config: LearnerConfig,
               optimizer: Adam, rng: np.random.Generator) -> Tuple[PolicyParams, dict]:
    """Several epochs of minibatch Adam steps on the clipped surrogate objective.

    Advantages are standardized over the whole batch first. ``params`` is
    updated in place and returned with the mean loss diagnostics.
    """
    n = len(batch)
    if n == 0:
        raise ValueError("empty batch")
    adv = batch.advantages
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    arrays = params.arrays()
    diags: List[dict] = []
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.minibatch_size):
            idx = order[start:start + config.minibatch_size]
            loss, grads, diag = ppo_loss_and_grad(
                params, batch.obs[idx], batch.actions[idx], batch.logp[idx], adv[idx],
                batch.returns[idx], config.clip, config.vf_coef, config.ent_coef)
            if not np.isfinite(loss) or not all(np.isfinite(g).all() for g in grads):
                raise FloatingPointError(f"non-finite loss {loss}")
            norm = np.sqrt(sum(float((g * g).sum()) for g in grads))
            if config.max_grad_norm and norm > config.max_grad_norm:
                grads = [g * (config.max_grad_norm / norm) for g in grads]
            optimizer.step(arrays, grads)
            diag["grad_norm"] = norm
            diags.append(diag)
    return params, {k: float(np.mean([d[k] for d in diags])) for k in diags[0]}


class Learner:
    """One player's policy, optimizer, normalizers and random stream."""

    def __init__(self, obs_dim: int, head_sizes: Sequence[int], config: LearnerConfig,
                 rng: np.random.Generator):
        self.config = config
        self.rng = rng
        self.params = init_params(obs_dim, head_sizes, rng, config.hidden)
        self.optimizer = Adam(self.params.arrays(), config.lr)
        self.obs_norm = ObsNormalizer(obs_dim, clip=config.obs_clip)
        self.reward_scaler = RewardScaler(config.gamma)

    @property
    def head_sizes(self):
        return self.params.head_sizes

    def normalize(self, obs: np.ndarray, update: bool = False) -> np.ndarray:
        if update:
            self.obs_norm.update(obs)
        return self.obs_norm(obs)

    def sample(self, z: np.ndarray):
        probs, value = policy_forward(self.params, z)
        actions, logps = [], []
        for p in probs:
            a = int(np.searchsorted(np.cumsum(p), self.rng.random() * p.sum(), side="right"))
            a = min(a, len(p) - 1)
            actions.append(a)
            logps.append(float(np.log(p[a])))
        return tuple(actions), tuple(logps), float(value)

    def greedy(self, z: np.ndarray) -> Tuple[int, ...]:
        probs, _ = policy_forward(self.params, z)
        return tuple(int(np.argmax(p)) for p in probs)

    def update(self, episodes: List[List[Transition]], player: str = "") -> dict:
        cfg = self.config
        obs, acts, logps, advs, rets = [], [], [], [], []
        for ep in episodes:
            adv, ret = compute_gae([tr.reward for tr in ep], [tr.value for tr in ep], cfg.gamma, cfg.gae_lambda)
            obs += [tr.obs for tr in ep]
            acts += [tr.actions for tr in ep]
            logps += [tr.logp for tr in ep]
            advs.append(adv)
            rets.append(ret)
        batch = TrajectoryBatch(player, np.array(obs), np.array(acts, dtype=int), np.array(logps),
                                np.concatenate(advs), np.concatenate(rets))
        _, diag = ppo_update(self.params, batch, cfg, self.optimizer, self.rng)
        return diag


class FixedPolicy:
    """A non-learning policy returning the same head indices every step."""

    def __init__(self, action: Sequence[int]):
        self.action = tuple(int(a) for a in action)

    def normalize(self, obs, update=False):
        return np.nan_to_num(np.asarray(obs, dtype=float), nan=0.0)

    def greedy(self, z):
        return self.action

    def sample(self, z):
        return self.action, tuple(0.0 for _ in self.action), 0.0


@dataclass
class TrainingCurves:
    episode_returns: Dict[str, List[float]] = field(default_factory=dict)
    rows: List[dict] = field(default_factory=list)

    def moving_average(self, player: str, window: int = 50) -> np.ndarray:
        x = np.asarray(self.episode_returns[player], dtype=float)
        if len(x) < window:
            return np.array([x.mean()]) if len(x) else np.array([])
        return np.convolve(x, np.ones(window) / window, mode="valid")


@dataclass
class TrainResult:
    learners: Dict[str, Learner]
    curves: TrainingCurves

    @property
    def params(self) -> Dict[str, PolicyParams]:
        return {p: l.params for p, l in self.learners.items()}


def make_learners(env, configs: Dict[str, LearnerConfig], seed: int) -> Tuple[Dict[str, Learner], np.random.Generator]:
    streams = np.random.SeedSequence(seed).spawn(1 + len(env.players))
    env_rng = np.random.default_rng(streams[0])
    learners = {p: Learner(env.obs_dim, env.head_sizes[p], configs[p], np.random.default_rng(s))
                for p, s in zip(env.players, streams[1:])}
    return learners, env_rng


def run_episode(env, policies: Dict[str, object], env_rng, train: bool = True):
    """Play one episode. Returns per-player transitions, raw rewards and infos."""
    obs = env.reset(env_rng)
    for pol in policies.values():
        if train:
            pol.reward_scaler.reset()
    trans = {p: [] for p in env.players}
    raw = {p: [] for p in env.players}
    infos = []
    t = 0
    while True:
        acts, cache = {}, {}
        for p in env.players:
            z = policies[p].normalize(obs[p], update=train)
            if train:
                a, lp, v = policies[p].sample(z)
            else:
                a, lp, v = policies[p].greedy(z), (), 0.0
            acts[p] = a
            cache[p] = (z, a, lp, v)
        res = env.step(acts)
        for p in env.players:
            z, a, lp, v = cache[p]
            r = res.rewards[p]
            raw[p].append(r)
            if train:
                trans[p].append(Transition(z, a, lp, policies[p].reward_scaler(r), v, res.done, t))
            else:
                trans[p].append(Transition(z, a, lp, r, v, res.done, t))
        infos.append(res.info)
        obs = res.observations
        t += 1
        if res.done:
            return trans, raw, infos


def discounted(rewards: Sequence[float], gamma: float) -> float:
    return float(np.sum(np.asarray(rewards) * gamma ** np.arange(len(rewards))))


def train(env_factory: Callable, configs: Dict[str, LearnerConfig], seed: int,
          on_iteration: Optional[Callable[[int, dict], None]] = None) -> TrainResult:
    """Alternate episode collection and independent PPO updates for every player.

    All players act with their current stochastic policies in the same
    episodes; each learner only sees its own transitions.
    """
    env = env_factory()
    missing = set(env.players) - set(configs)
    if missing:
        raise ValueError(f"no learner config for players {sorted(missing)}")
    first = configs[env.players[0]]
    if any((c.iterations, c.episodes_per_iteration) != (first.iterations, first.episodes_per_iteration)
           for c in configs.values()):
        raise ValueError("all players must share iterations and episodes_per_iteration")
    learners, env_rng = make_learners(env, configs, seed)
    curves = TrainingCurves({p: [] for p in env.players})
    for it in range(first.iterations):
        batch = {p: [] for p in env.players}
        for _ in range(first.episodes_per_iteration):
            trans, raw, _ = run_episode(env, learners, env_rng, train=True)
            for p in env.players:
                batch[p].append(trans[p])
                curves.episode_returns[p].append(discounted(raw[p], configs[p].gamma))
        for p in env.players:
            try:
                diag = learners[p].update(batch[p], p)
            except FloatingPointError as exc:
                raise TrainingDiverged(it, p, str(exc)) from exc
            if not learners[p].params.all_finite():
                raise TrainingDiverged(it, p)
            recent = curves.episode_returns[p][-first.episodes_per_iteration:]
            window = curves.episode_returns[p][-50:]
            row = {"iteration": it, "player": p, "episodes": len(curves.episode_returns[p]),
                   "mean_discounted_return": float(np.mean(recent)),
                   "moving_avg_return": float(np.mean(window)), **diag}
            curves.rows.append(row)
            if on_iteration is not None:
                on_iteration(it, row)
        log.debug("iteration %d done", it)
    return TrainResult(learners, curves)


@dataclass
class EvalResult:
    outcomes: Dict[str, np.ndarray]
    actions: Dict[str, List[np.ndarray]]
    fills: Dict[str, np.ndarray]
    observations: Dict[str, np.ndarray]
    infos: List[List[dict]]


def evaluate(policies: Dict[str, object], env_factory: Callable, episode_count: int, seed: int,
             keep_infos: bool = False) -> EvalResult:
    """Greedy rollouts with frozen normalizers.

    Outcomes are undiscounted episode profits, checked against the change in
    mark-to-market portfolio value.
    """
    env = env_factory()
    env_rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    outcomes = {p: [] for p in env.players}
    actions = {p: [] for p in env.players}
    fills = {p: [] for p in env.players}
    observations = {p: [] for p in env.players}
    infos = []
    for _ in range(episode_count):
        trans, raw, ep_infos = run_episode(env, policies, env_rng, train=False)
        for p in env.players:
            profit = float(np.sum(raw[p]))
            if hasattr(env, "portfolio_value2"):
                exact = (env.portfolio_value2(p) - env.portfolio_value2(p, 0)) / 2
                if profit != exact:
                    raise AssertionError(f"telescoping failed for {p}: {profit} != {exact}")
            outcomes[p].append(profit)
            actions[p].append(np.array([tr.actions for tr in trans[p]], dtype=int))
            observations[p].append(np.array([tr.obs for tr in trans[p]]))
            fills[p].append(sum(v for info in ep_infos for _, v, _ in info.get("fills", {}).get(p, ())))
        if keep_infos:
            infos.append(ep_infos)
    return EvalResult(
        {p: np.array(v) for p, v in outcomes.items()},
        actions,
        {p: np.array(v) for p, v in fills.items()},
        {p: (np.concatenate(v) if v else np.empty((0, env.obs_dim))) for p, v in observations.items()},
        infos,
    )

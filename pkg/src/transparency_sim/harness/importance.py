"""Permutation feature importance for trained policy heads."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence, Union

import numpy as np

from ..learner.network import PolicyParams, policy_forward


@dataclass(frozen=True)
class GroupScore:
    group: str
    score: float
    delayed: bool


def greedy_head_actions(params: PolicyParams, obs: np.ndarray, head: int) -> np.ndarray:
    probs, _ = policy_forward(params, obs)
    return probs[head].argmax(axis=1)


def permutation_importance(params: PolicyParams, observations: np.ndarray, head: int,
                           groups: Dict[str, Sequence[int]],
                           rng: Union[int, np.random.Generator] = 0,
                           repeats: int = 5,
                           delayed_groups: Iterable[str] = ()) -> List[GroupScore]:
    """Score each feature group by how often permuting it changes the greedy action.

    A group's columns are shuffled jointly across rows; the score is the mean
    fraction of rows whose chosen action for ``head`` changes. Rows are put in
    a canonical order first, so the scores do not depend on dataset order.
    """
    X = np.asarray(observations, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("need a non-empty 2-d observation dataset")
    X = X[np.lexsort(X.T[::-1])]
    base = greedy_head_actions(params, X, head)
    seed = int(rng.integers(2**63 - 1)) if isinstance(rng, np.random.Generator) else int(rng)
    delayed = set(delayed_groups)
    scores = []
    for gi, (name, idx) in enumerate(groups.items()):
        idx = np.asarray(idx, dtype=int)
        if idx.size == 0:
            continue
        g_rng = np.random.default_rng([seed, gi])
        changed = []
        for _ in range(repeats):
            perm = g_rng.permutation(len(X))
            Xp = X.copy()
            Xp[:, idx] = X[perm][:, idx]
            changed.append(float(np.mean(greedy_head_actions(params, Xp, head) != base)))
        scores.append(GroupScore(name, float(np.mean(changed)), name in delayed))
    return sorted(scores, key=lambda s: (-s.score, s.group))

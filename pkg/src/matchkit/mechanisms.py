"""Example-generating mechanisms (deferred acceptance, reward-maximising
assignments) and the random serial dictatorship baseline."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import PreferenceProfile, matching_from_partners, run_sd

FORBIDDEN = -1e12


def deferred_acceptance(profile: PreferenceProfile) -> np.ndarray:
    """Worker-proposing deferred acceptance with an outside option on both sides."""
    n, m = profile.n, profile.m
    wr, fr = profile.worker_ranks, profile.firm_ranks
    # each worker's acceptable firms, best first
    lists = []
    for i in range(n):
        acceptable = [j for j in np.argsort(wr[i, :m]) if wr[i, j] < wr[i, m]]
        lists.append(acceptable)
    nxt = [0] * n
    held = np.full(m, n)   # n = holding nobody
    free = list(range(n))
    while free:
        i = free.pop()
        if nxt[i] >= len(lists[i]):
            continue
        j = lists[i][nxt[i]]
        nxt[i] += 1
        if fr[j, i] > fr[j, n]:
            free.append(i)          # i is unacceptable to j
        elif held[j] == n:
            held[j] = i
        elif fr[j, i] < fr[j, held[j]]:
            free.append(int(held[j]))
            held[j] = i
        else:
            free.append(i)
    wp = np.full(n, m)
    for j, i in enumerate(held):
        if i < n:
            wp[i] = j
    return matching_from_partners(wp, m)


@dataclass(frozen=True)
class RewardSpec:
    """``kind`` is ``"EH"`` or ``"MH"``; MH doubles the worker term for ``selected`` workers."""

    kind: str
    n: int
    selected: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.kind not in ("EH", "MH"):
            raise ValueError(f"unknown reward kind {self.kind!r}")
        sel = tuple(sorted(int(i) for i in self.selected))
        if self.kind == "EH" and sel:
            raise ValueError("EH takes no selected workers")
        if self.kind == "MH" and (len(sel) != self.n // 3 or len(set(sel)) != len(sel)):
            raise ValueError(f"MH needs {self.n // 3} distinct selected workers, got {sel}")
        if any(not 0 <= i < self.n for i in sel):
            raise ValueError("selected worker out of range")
        object.__setattr__(self, "selected", sel)

    @classmethod
    def eh(cls, n: int) -> "RewardSpec":
        return cls("EH", n)

    @classmethod
    def mh(cls, n: int, rng: np.random.Generator) -> "RewardSpec":
        sel = rng.choice(n, size=n // 3, replace=False)
        return cls("MH", n, tuple(sel))

    @property
    def weights(self) -> np.ndarray:
        a = np.ones(self.n)
        a[list(self.selected)] = 2.0
        return a


def reward(i: int, j: int, profile: PreferenceProfile, spec: RewardSpec) -> float:
    """Reward of pairing worker ``i`` (``n`` = unmatch) with firm ``j`` (``m`` = unmatch).

    Each side contributes its inverted order ``(k+2) - ord``; the unmatch
    "agent" has no preferences and contributes 0.
    """
    n, m = profile.n, profile.m
    if not (0 <= i <= n and 0 <= j <= m) or (i == n and j == m):
        raise IndexError(f"invalid pair ({i}, {j}) for n={n}, m={m}")
    total = 0.0
    if i < n:
        total += spec.weights[i] * (m + 2 - profile.worker_ranks[i, j])
    if j < m:
        total += n + 2 - profile.firm_ranks[j, i]
    return float(total)


def reward_matrix(profile: PreferenceProfile, spec: RewardSpec) -> np.ndarray:
    """``(n+1, m+1)`` table of :func:`reward` with 0 in the corner."""
    n, m = profile.n, profile.m
    if spec.n != n:
        raise ValueError("reward spec and profile disagree on n")
    R = np.zeros((n + 1, m + 1))
    R[:n, :] += spec.weights[:, None] * (m + 2 - profile.worker_ranks)
    R[:, :m] += (n + 2 - profile.firm_ranks).T
    R[n, m] = 0.0
    return R


def hungarian_max_assignment(rewards: np.ndarray) -> np.ndarray:
    """Column assigned to each row in a maximum-reward perfect assignment."""
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.ndim != 2 or rewards.shape[0] != rewards.shape[1]:
        raise ValueError("rewards must be a square matrix")
    if not np.all(np.isfinite(rewards)):
        raise ValueError("rewards must be finite")
    rows, cols = linear_sum_assignment(rewards, maximize=True)
    out = np.empty(len(rows), dtype=np.int64)
    out[rows] = cols
    return out


def assignment_table(profile: PreferenceProfile, spec: RewardSpec) -> np.ndarray:
    """Square ``(n+m)`` reduction: rows are workers then firm-unmatch slots,
    columns are firms then worker-unmatch slots."""
    n, m = profile.n, profile.m
    R = reward_matrix(profile, spec)
    T = np.zeros((n + m, m + n))
    T[:n, :m] = R[:n, :m]
    T[:n, m:] = FORBIDDEN
    T[np.arange(n), m + np.arange(n)] = R[:n, m]
    T[n:, :m] = FORBIDDEN
    T[n + np.arange(m), np.arange(m)] = R[n, :m]
    return T


def hungarian_matching(profile: PreferenceProfile, spec: RewardSpec) -> np.ndarray:
    """Matching maximising the total reward of :func:`reward_matrix`."""
    n, m = profile.n, profile.m
    assign = hungarian_max_assignment(assignment_table(profile, spec))
    wp = np.where(assign[:n] < m, assign[:n], m)
    return matching_from_partners(wp, m)


def total_reward(M: np.ndarray, profile: PreferenceProfile, spec: RewardSpec) -> float:
    return float((reward_matrix(profile, spec) * np.asarray(M)).sum())


def rsd(profile: PreferenceProfile, rng: np.random.Generator) -> np.ndarray:
    """Serial dictatorship under a uniformly random ranking."""
    return run_sd(profile, rng.permutation(profile.n + profile.m))


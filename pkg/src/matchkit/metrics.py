"""Evaluation metrics and the paired one-sided Wilcoxon signed-rank test."""
from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np
from scipy import stats

from .core import PreferenceProfile, blocking_pairs, run_sd
from .mechanisms import RewardSpec, total_reward
from .neuralsd import preference_values, stv_tensor


def _square(profile: PreferenceProfile):
    if profile.n != profile.m:
        raise ValueError(f"metric defined for n == m only (got n={profile.n}, m={profile.m})")
    return profile.n


def hamming_distance(M, M2) -> float:
    """``sum |M - M2| / 3n``."""
    M, M2 = np.asarray(M), np.asarray(M2)
    if M.shape != M2.shape:
        raise ValueError(f"shape mismatch {M.shape} vs {M2.shape}")
    n = M.shape[0] - 1
    return float(np.abs(M - M2).sum()) / (3 * n)


def raw_hamming(M, M2) -> int:
    return int(np.abs(np.asarray(M, dtype=np.int64) - np.asarray(M2, dtype=np.int64)).sum())


def num_blocking_pairs(M, profile: PreferenceProfile) -> float:
    n = _square(profile)
    return len(blocking_pairs(M, profile)) / n**2


def preference_vectors(profile: PreferenceProfile) -> tuple[np.ndarray, np.ndarray]:
    """``(p, q)``: ``p[i, j]`` is worker i's value of firm j, ``q[j, i]`` firm j's value of worker i."""
    _square(profile)
    return preference_values(profile)


def stability_violation(M, profile: PreferenceProfile, normalize: bool = True) -> float:
    """Stability violation of a hard or soft matrix, divided by ``n`` again when ``normalize``."""
    n = _square(profile)
    v = stv_tensor(np.asarray(M, dtype=np.float64), profile).item()
    return v / n if normalize else v


def ir_violation(M, profile: PreferenceProfile) -> float:
    _square(profile)
    return ir_violation_general(M, profile)


def ir_violation_general(M, profile: PreferenceProfile) -> float:
    """IR violation with the firm term over ``2n`` and the worker term over ``2m``."""
    n, m = profile.n, profile.m
    p, q = preference_values(profile)
    M = np.asarray(M, dtype=np.float64)[:n, :m]
    firm_term = (M * np.maximum(-q.T, 0)).sum() / (2 * n)
    worker_term = (M * np.maximum(-p, 0)).sum() / (2 * m)
    return float(firm_term + worker_term)


def reward_ratio(M, profile: PreferenceProfile, spec: RewardSpec, M_opt) -> float:
    best = total_reward(M_opt, profile, spec)
    if best == 0:
        raise ZeroDivisionError("optimal reward is zero (degenerate record)")
    return total_reward(M, profile, spec) / best


# --------------------------------------------------------------------------
# recovery rate

@lru_cache(maxsize=None)
def _all_rankings(k: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(k))), dtype=np.int64)


def optimal_ranking_set(profile: PreferenceProfile, example) -> set[tuple]:
    """Rankings whose SD outcome is closest (raw Hamming distance) to ``example``."""
    if (profile.n, profile.m) != (3, 3):
        raise ValueError("recovery rate is defined on n = m = 3 instances")
    best, out = None, set()
    for r in _all_rankings(6):
        d = raw_hamming(run_sd(profile, r), example)
        if best is None or d < best:
            best, out = d, {tuple(r)}
        elif d == best:
            out.add(tuple(r))
    return out


def recovery_hits(rankings, profiles, examples) -> tuple[np.ndarray, np.ndarray]:
    """Per-record hit indicator and optimal-set size."""
    hits, sizes = [], []
    for r, p, ex in zip(rankings, profiles, examples):
        opt = optimal_ranking_set(p, ex)
        hits.append(tuple(int(a) for a in r) in opt)
        sizes.append(len(opt))
    return np.array(hits, dtype=bool), np.array(sizes)


def recovery_rate(rankings, profiles, examples) -> float:
    hits, _ = recovery_hits(rankings, profiles, examples)
    if len(hits) == 0:
        raise ValueError("no records")
    return float(hits.mean())


# --------------------------------------------------------------------------
# Wilcoxon signed-rank test

def wilcoxon_one_sided(a, b, alternative: str = "less", exact_below: int = 20) -> float:
    """p-value of the paired signed-rank test of ``a`` against ``b``.

    ``alternative="less"`` tests whether ``a`` tends to be smaller than ``b``.
    Zero differences are dropped and tied magnitudes get mid-ranks.  Below
    ``exact_below`` non-zero pairs the exact null distribution is used;
    otherwise the continuity-corrected normal approximation (with tie
    correction) from scipy.
    """
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("samples must be paired 1-D arrays")
    if alternative not in ("less", "greater"):
        raise ValueError("alternative must be 'less' or 'greater'")
    d = a - b
    d = d[d != 0]
    if len(d) == 0:
        raise ValueError("all paired differences are zero")
    if len(d) < exact_below:
        return _exact_signed_rank_p(d, alternative)
    res = stats.wilcoxon(d, zero_method="wilcox", correction=True, alternative=alternative, method="approx")
    return float(res.pvalue)


def _exact_signed_rank_p(d: np.ndarray, alternative: str) -> float:
    """Exact tail of the positive-rank sum over all sign patterns.

    Mid-ranks are doubled so they become integers; the null distribution is
    then the subset-sum count of those integers.
    """
    r2 = np.rint(2 * stats.rankdata(np.abs(d))).astype(np.int64)
    counts = np.zeros(int(r2.sum()) + 1)
    counts[0] = 1.0
    for r in r2:
        counts[r:] += counts[:-r].copy()   # doubled ranks are >= 2
    counts /= counts.sum()
    w = int(r2[d > 0].sum())
    tail = counts[w:].sum() if alternative == "greater" else counts[: w + 1].sum()
    return float(min(tail, 1.0))

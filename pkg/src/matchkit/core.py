"""Instances, preferences, matchings and the discrete serial dictatorship.

Indexing conventions used across the package (all zero-based):

* workers are ``0..n-1`` and firms ``0..m-1`` within their own side;
* in a :class:`Ranking` (and anywhere a single agent index is needed) workers
  occupy global indices ``0..n-1`` and firms ``n..n+m-1``;
* the unmatch option is always the last option: index ``m`` in a worker's
  order, index ``n`` in a firm's order;
* a matching matrix has shape ``(n+1, m+1)``; row ``n`` and column ``m`` are
  the unmatch row/column and ``M[n, m] == 0``.

Ranks inside a :class:`LinearOrder` are one-based positions (1 = top).
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Sequence

import numpy as np


class EnumerationLimitError(ValueError):
    """Raised when an exhaustive check would exceed its size guard."""


@dataclass(frozen=True)
class Instance:
    contexts_w: np.ndarray
    contexts_f: np.ndarray

    def __post_init__(self):
        xw = np.asarray(self.contexts_w, dtype=np.float64)
        xf = np.asarray(self.contexts_f, dtype=np.float64)
        if xw.ndim != 2 or xf.ndim != 2:
            raise ValueError("contexts must be 2-D arrays")
        if xw.shape[0] < 1 or xf.shape[0] < 1:
            raise ValueError("need at least one worker and one firm")
        if xw.shape[1] != xf.shape[1] or xw.shape[1] < 1:
            raise ValueError(f"context dims disagree: {xw.shape} vs {xf.shape}")
        if not (np.all(np.isfinite(xw)) and np.all(np.isfinite(xf))):
            raise ValueError("contexts must be finite")
        xw.setflags(write=False)
        xf.setflags(write=False)
        object.__setattr__(self, "contexts_w", xw)
        object.__setattr__(self, "contexts_f", xf)

    @property
    def n(self) -> int:
        return self.contexts_w.shape[0]

    @property
    def m(self) -> int:
        return self.contexts_f.shape[0]

    @property
    def d(self) -> int:
        return self.contexts_w.shape[1]


@dataclass(frozen=True)
class LinearOrder:
    """Strict order over ``k`` opposite-side agents plus the unmatch option.

    ``ranks[j]`` is the one-based position of option ``j``; option ``k`` is
    the unmatch option.
    """

    ranks: tuple

    def __post_init__(self):
        ranks = tuple(int(r) for r in self.ranks)
        if sorted(ranks) != list(range(1, len(ranks) + 1)):
            raise ValueError(f"ranks {ranks} are not a permutation of 1..{len(ranks)}")
        object.__setattr__(self, "ranks", ranks)

    @classmethod
    def from_list(cls, options: Sequence[int]) -> "LinearOrder":
        """Build from options listed most-preferred first."""
        ranks = [0] * len(options)
        for pos, opt in enumerate(options):
            ranks[opt] = pos + 1
        return cls(tuple(ranks))

    @property
    def k(self) -> int:
        """Size of the opposite side (the unmatch option is index ``k``)."""
        return len(self.ranks) - 1

    @property
    def unmatch(self) -> int:
        return self.k

    def ord(self, option: int) -> int:
        """Number of options weakly preferred to ``option`` (its position)."""
        if not 0 <= option <= self.k:
            raise IndexError(f"option {option} out of range 0..{self.k}")
        return self.ranks[option]

    def as_list(self) -> list[int]:
        """Options ordered most-preferred first."""
        out = [0] * len(self.ranks)
        for opt, r in enumerate(self.ranks):
            out[r - 1] = opt
        return out

    def prefers(self, a: int, b: int) -> bool:
        """Strict preference ``a > b``."""
        return self.ranks[a] < self.ranks[b]


@dataclass(frozen=True)
class PreferenceProfile:
    """Orders of all agents, stored as rank arrays.

    ``worker_ranks`` has shape ``(n, m+1)`` and ``firm_ranks`` shape
    ``(m, n+1)``; row ``i`` is the rank array of that agent's order.
    """

    worker_ranks: np.ndarray
    firm_ranks: np.ndarray

    def __post_init__(self):
        wr = np.array(self.worker_ranks, dtype=np.int64)
        fr = np.array(self.firm_ranks, dtype=np.int64)
        if wr.ndim != 2 or fr.ndim != 2:
            raise ValueError("rank tables must be 2-D")
        n, m = wr.shape[0], fr.shape[0]
        if wr.shape[1] != m + 1 or fr.shape[1] != n + 1:
            raise ValueError(f"rank table shapes {wr.shape}, {fr.shape} are inconsistent")
        for table, k in ((wr, m + 1), (fr, n + 1)):
            if not np.array_equal(np.sort(table, axis=1), np.broadcast_to(np.arange(1, k + 1), table.shape)):
                raise ValueError("every row must be a permutation of 1..k+1")
        wr.setflags(write=False)
        fr.setflags(write=False)
        object.__setattr__(self, "worker_ranks", wr)
        object.__setattr__(self, "firm_ranks", fr)

    @classmethod
    def from_orders(cls, worker_orders: Iterable[LinearOrder], firm_orders: Iterable[LinearOrder]):
        return cls(np.array([o.ranks for o in worker_orders]), np.array([o.ranks for o in firm_orders]))

    @classmethod
    def from_lists(cls, worker_lists, firm_lists):
        """Build from preference lists (most preferred first) for each agent."""
        return cls.from_orders(
            [LinearOrder.from_list(x) for x in worker_lists],
            [LinearOrder.from_list(x) for x in firm_lists],
        )

    @classmethod
    def random(cls, n: int, m: int, rng: np.random.Generator) -> "PreferenceProfile":
        """Uniformly random strict orders for every agent."""
        wr = np.argsort(rng.random((n, m + 1)), axis=1).argsort(axis=1) + 1
        fr = np.argsort(rng.random((m, n + 1)), axis=1).argsort(axis=1) + 1
        return cls(wr, fr)

    @property
    def n(self) -> int:
        return self.worker_ranks.shape[0]

    @property
    def m(self) -> int:
        return self.firm_ranks.shape[0]

    def worker(self, i: int) -> LinearOrder:
        return LinearOrder(tuple(self.worker_ranks[i]))

    def firm(self, j: int) -> LinearOrder:
        return LinearOrder(tuple(self.firm_ranks[j]))

    def order_of(self, agent: int) -> LinearOrder:
        """Order of the agent with global index ``agent``."""
        return self.worker(agent) if agent < self.n else self.firm(agent - self.n)

    def replace(self, agent: int, order: LinearOrder) -> "PreferenceProfile":
        """Profile with the order of global agent ``agent`` swapped for ``order``."""
        wr = self.worker_ranks.copy()
        fr = self.firm_ranks.copy()
        if agent < self.n:
            wr[agent] = order.ranks
        else:
            fr[agent - self.n] = order.ranks
        return PreferenceProfile(wr, fr)

    def __eq__(self, other):
        if not isinstance(other, PreferenceProfile):
            return NotImplemented
        return np.array_equal(self.worker_ranks, other.worker_ranks) and np.array_equal(
            self.firm_ranks, other.firm_ranks
        )

    def __hash__(self):
        return hash((self.worker_ranks.tobytes(), self.firm_ranks.tobytes()))


# --------------------------------------------------------------------------
# matchings

def empty_matching(n: int, m: int) -> np.ndarray:
    """Matching in which every agent stays single."""
    M = np.zeros((n + 1, m + 1), dtype=np.int64)
    M[:n, m] = 1
    M[n, :m] = 1
    return M


def matching_from_partners(worker_partner: Sequence[int], m: int) -> np.ndarray:
    """Matrix of the matching given each worker's firm (``m`` for unmatched)."""
    worker_partner = np.asarray(worker_partner, dtype=np.int64)
    n = len(worker_partner)
    M = np.zeros((n + 1, m + 1), dtype=np.int64)
    M[np.arange(n), worker_partner] = 1
    taken = np.zeros(m, dtype=bool)
    taken[worker_partner[worker_partner < m]] = True
    M[n, :m] = ~taken
    return M


def partners(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(worker_partner, firm_partner)`` arrays; ``m`` / ``n`` mean unmatched."""
    M = np.asarray(M)
    n, m = M.shape[0] - 1, M.shape[1] - 1
    return np.argmax(M[:n], axis=1), np.argmax(M[:, :m], axis=0)


def validate_matching(M: np.ndarray, n: int, m: int) -> list[str]:
    """All violations of the matching-matrix invariants (empty list if valid)."""
    M = np.asarray(M)
    if M.shape != (n + 1, m + 1):
        return [f"shape {M.shape} != {(n + 1, m + 1)}"]
    out = []
    if not np.all((M == 0) | (M == 1)):
        out.append("entries are not binary")
    for i in range(n):
        s = M[i].sum()
        if s != 1:
            out.append(f"row {i} sums to {s}")
    for j in range(m):
        s = M[:, j].sum()
        if s != 1:
            out.append(f"column {j} sums to {s}")
    if M[n, m] != 0:
        out.append(f"corner entry M[{n}, {m}] is {M[n, m]}")
    return out


# --------------------------------------------------------------------------
# serial dictatorship

def validate_ranking(ranking: Sequence[int], n: int, m: int) -> np.ndarray:
    r = np.asarray(ranking, dtype=np.int64)
    if r.shape != (n + m,) or not np.array_equal(np.sort(r), np.arange(n + m)):
        raise ValueError(f"ranking must be a permutation of 0..{n + m - 1}")
    return r


def sd_rounds(profile: PreferenceProfile, ranking: Sequence[int]):
    """Yield ``(worker_partner, firm_partner)`` after every round of serial dictatorship.

    Partners use ``-1`` for "not yet assigned" and ``m`` / ``n`` for the
    unmatch option.  The yielded arrays are copies.
    """
    n, m = profile.n, profile.m
    ranking = validate_ranking(ranking, n, m)
    wr, fr = profile.worker_ranks, profile.firm_ranks
    wp = np.full(n, -1)
    fp = np.full(m, -1)
    for a in ranking:
        if a < n and wp[a] < 0:
            row = np.where(fp < 0, wr[a, :m], n + m + 2)
            j = int(np.argmin(row))
            if row[j] < wr[a, m]:
                wp[a], fp[j] = j, a
            else:
                wp[a] = m
        elif a >= n and fp[a - n] < 0:
            j = a - n
            row = np.where(wp < 0, fr[j, :n], n + m + 2)
            i = int(np.argmin(row))
            if row[i] < fr[j, n]:
                fp[j], wp[i] = i, j
            else:
                fp[j] = n
        yield wp.copy(), fp.copy()


def partial_matrix(wp: np.ndarray, fp: np.ndarray) -> np.ndarray:
    """Matrix of a partial SD state (unassigned agents have all-zero entries)."""
    n, m = len(wp), len(fp)
    M = np.zeros((n + 1, m + 1), dtype=np.int64)
    for i, j in enumerate(wp):
        if j >= 0:
            M[i, j] = 1
    for j, i in enumerate(fp):
        if i == n:
            M[n, j] = 1
    return M


def run_sd(profile: PreferenceProfile, ranking: Sequence[int]) -> np.ndarray:
    """Serial dictatorship: agents pick in ranking order among the still-unmatched.

    An agent whose turn comes while it is unassigned takes its favourite
    unassigned opposite-side agent, or stays single when nobody left beats
    the unmatch option.
    """
    wp = np.full(profile.n, profile.m)
    for wp, _ in sd_rounds(profile, ranking):
        pass
    return matching_from_partners(wp, profile.m)


# --------------------------------------------------------------------------
# properties

def _check_dims(M, profile):
    if np.shape(M) != (profile.n + 1, profile.m + 1):
        raise ValueError(f"matching shape {np.shape(M)} does not fit n={profile.n}, m={profile.m}")


def blocking_pairs(M: np.ndarray, profile: PreferenceProfile) -> set[tuple[int, int]]:
    _check_dims(M, profile)
    wp, fp = partners(M)
    wr, fr = profile.worker_ranks, profile.firm_ranks
    n, m = profile.n, profile.m
    # worker i strictly prefers firm j to its partner, and vice versa
    w_wants = wr[:, :m] < wr[np.arange(n), wp][:, None]
    f_wants = (fr[:, :n] < fr[np.arange(m), fp][:, None]).T
    ii, jj = np.nonzero(w_wants & f_wants)
    return {(int(i), int(j)) for i, j in zip(ii, jj)}


def is_individually_rational(M: np.ndarray, profile: PreferenceProfile) -> bool:
    _check_dims(M, profile)
    wp, fp = partners(M)
    n, m = profile.n, profile.m
    wr, fr = profile.worker_ranks, profile.firm_ranks
    return bool(
        np.all(wr[np.arange(n), wp] <= wr[:, m]) and np.all(fr[np.arange(m), fp] <= fr[:, n])
    )


def is_stable(M: np.ndarray, profile: PreferenceProfile) -> bool:
    return is_individually_rational(M, profile) and not blocking_pairs(M, profile)


@lru_cache(maxsize=None)
def _all_matchings(n: int, m: int) -> np.ndarray:
    """Every matching as a ``(K, n)`` array of worker partners (``m`` = single)."""
    rows = []

    def extend(i, used, acc):
        if i == n:
            rows.append(tuple(acc))
            return
        acc.append(m)
        extend(i + 1, used, acc)
        acc.pop()
        for j in range(m):
            if not used >> j & 1:
                acc.append(j)
                extend(i + 1, used | 1 << j, acc)
                acc.pop()

    extend(0, 0, [])
    out = np.array(rows, dtype=np.int64).reshape(len(rows), n)
    out.setflags(write=False)
    return out


def enumerate_matchings(n: int, m: int) -> Iterable[np.ndarray]:
    """Yield the matrix of every matching between ``n`` workers and ``m`` firms."""
    for row in _all_matchings(n, m):
        yield matching_from_partners(row, m)


def _firm_partners(W: np.ndarray, n: int, m: int) -> np.ndarray:
    K = W.shape[0]
    F = np.full((K, m + 1), n, dtype=np.int64)
    kk, ii = np.nonzero(W < m)
    F[kk, W[kk, ii]] = ii
    return F[:, :m]


def is_pareto_efficient(M: np.ndarray, profile: PreferenceProfile, max_size: int = 5) -> bool:
    """Exhaustive check that no matching Pareto dominates ``M``."""
    _check_dims(M, profile)
    n, m = profile.n, profile.m
    if n > max_size or m > max_size:
        raise EnumerationLimitError(f"n={n}, m={m} exceeds exhaustive limit {max_size}")
    W = _all_matchings(n, m)
    F = _firm_partners(W, n, m)
    wr, fr = profile.worker_ranks, profile.firm_ranks
    cand_w = wr[np.arange(n), W]          # (K, n) ranks of candidate partners
    cand_f = fr[np.arange(m), F]
    wp, fp = partners(M)
    cur_w = wr[np.arange(n), wp]
    cur_f = fr[np.arange(m), fp]
    weakly = np.all(cand_w <= cur_w, axis=1) & np.all(cand_f <= cur_f, axis=1)
    strictly = np.any(cand_w < cur_w, axis=1) | np.any(cand_f < cur_f, axis=1)
    return not bool(np.any(weakly & strictly))


# --------------------------------------------------------------------------
# strategy-proofness

Mechanism = Callable[[Instance, PreferenceProfile], np.ndarray]


def payoff(agent: int, M: np.ndarray, order: LinearOrder, n: int) -> int:
    """``#{b : partner >= b}`` under ``order`` for global agent ``agent``."""
    wp, fp = partners(M)
    partner = wp[agent] if agent < n else fp[agent - n]
    return order.k + 2 - order.ord(int(partner))


@dataclass(frozen=True)
class Deviation:
    agent: int
    misreport: LinearOrder
    truthful_payoff: int
    misreport_payoff: int


def check_strategy_proofness(
    mechanism: Mechanism,
    instance: Instance,
    profile: PreferenceProfile,
    max_opposite: int = 4,
    agents: Iterable[int] | None = None,
) -> list[Deviation]:
    """Every profitable single-agent misreport found by full enumeration.

    The payoff of a misreport is judged with the agent's true order.
    """
    n, m = profile.n, profile.m
    if max(n, m) > max_opposite:
        raise EnumerationLimitError(
            f"opposite side of size {max(n, m)} needs {math.factorial(max(n, m) + 1)} misreports per agent"
        )
    truthful = mechanism(instance, profile)
    found = []
    for a in range(n + m) if agents is None else agents:
        true_order = profile.order_of(a)
        base = payoff(a, truthful, true_order, n)
        if base == true_order.k + 1:
            continue  # already at the top choice
        for perm in itertools.permutations(range(true_order.k + 1)):
            lie = LinearOrder.from_list(perm)
            if lie == true_order:
                continue
            got = payoff(a, mechanism(instance, profile.replace(a, lie)), true_order, n)
            if got > base:
                found.append(Deviation(a, lie, base, got))
    return found


def random_ranking(n: int, m: int, rng: np.random.Generator) -> np.ndarray:
    return rng.permutation(n + m)

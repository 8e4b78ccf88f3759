"""Serial dictatorship written as differentiable tensor operations.

Preference tensors hold one ``(k+1, k+1)`` permutation matrix per agent whose
entry ``[j, r]`` is 1 when option ``j`` sits at (zero-based) position ``r`` of
the agent's order.  A ranking matrix ``R`` has ``R[a, k] = 1`` when agent
``a`` (global index) holds rank ``k``.  Feeding a hard ranking matrix through
:func:`tsd` reproduces :func:`matchkit.core.run_sd` exactly; feeding a
soft one runs the same arithmetic on real values so gradients reach ``R``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .core import PreferenceProfile, partial_matrix, sd_rounds, validate_ranking


def build_preference_tensor(profile: PreferenceProfile) -> tuple[np.ndarray, np.ndarray]:
    """``(P_W, P_F)`` with shapes ``(n, m+1, m+1)`` and ``(m, n+1, n+1)``."""
    n, m = profile.n, profile.m
    PW = np.zeros((n, m + 1, m + 1))
    PF = np.zeros((m, n + 1, n + 1))
    i, j = np.indices((n, m + 1))
    PW[i, j, profile.worker_ranks - 1] = 1.0
    i, j = np.indices((m, n + 1))
    PF[i, j, profile.firm_ranks - 1] = 1.0
    return PW, PF


def build_ranking_matrix(ranking: Sequence[int], n: int, m: int) -> np.ndarray:
    r = validate_ranking(ranking, n, m)
    R = np.zeros((n + m, n + m))
    R[r, np.arange(n + m)] = 1.0
    return R


def ranking_from_matrix(R: np.ndarray) -> np.ndarray:
    """Inverse of :func:`build_ranking_matrix` (column-wise argmax)."""
    return np.argmax(np.asarray(R), axis=0)


def create_ranking_masks(R, n: int, m: int) -> tuple[list[Tensor], list[Tensor]]:
    """Per-rank masks that blank the acting agent's row in the other side's matrices.

    ``U_W[k]`` puts ``-R[n + j, k]`` on every entry of row ``j`` (firm rows
    only), ``U_F[k]`` puts ``-R[i, k]`` on row ``i`` (worker rows only).
    """
    R = ad.as_tensor(R)
    if R.shape != (n + m, n + m):
        raise ad.ShapeError(f"ranking matrix shape {R.shape} != {(n + m, n + m)}")
    zero = Tensor(np.zeros(1))
    ones_w, ones_f = Tensor(np.ones(m + 1)), Tensor(np.ones(n + 1))
    UW, UF = [], []
    for k in range(n + m):
        col = R[:, k]
        UW.append(-ad.outer(ad.concat([col[n:], zero]), ones_w))
        UF.append(-ad.outer(ad.concat([col[:n], zero]), ones_f))
    return UW, UF


def find_counterpart(P) -> Tensor:
    """Leftmost non-zero column of a 0/1 matrix with at most one 1 per row and column.

    Returns the zero vector for a zero matrix.
    """
    P = ad.as_tensor(P)
    window = ad.triangle_window(ad.cumsum(ad.colsum(P)))
    return ad.matmul(P, window)


@dataclass
class TSDState:
    """Working tensors after ``k`` iterations of the main loop."""

    k: int
    M: Tensor
    PW: Tensor
    PF: Tensor


def tsd_iter(PW, PF, R):
    """Run the tensor serial dictatorship, yielding the state before and after each rank.

    The preference stacks are treated as values: the caller's arrays are
    never modified.
    """
    PW, PF, R = ad.as_tensor(PW), ad.as_tensor(PF), ad.as_tensor(R)
    if PW.ndim != 3 or PF.ndim != 3:
        raise ad.ShapeError("preference stacks must be rank-3")
    n, m = PW.shape[0], PF.shape[0]
    if PW.shape[1:] != (m + 1, m + 1) or PF.shape[1:] != (n + 1, n + 1):
        raise ad.ShapeError(f"preference stacks {PW.shape}, {PF.shape} are inconsistent")
    UW, UF = create_ranking_masks(R, n, m)
    keep_w = Tensor(np.r_[np.ones(m), 0.0])
    keep_f = Tensor(np.r_[np.ones(n), 0.0])
    zero = Tensor(np.zeros(1))
    M = Tensor(np.zeros((n + 1, m + 1)))
    yield TSDState(0, M, PW, PF)
    for k in range(n + m):
        col = R[:, k]
        d_w, d_f = col[:n], col[n:]
        P_w, P_f = ad.stack_matvec(PW, d_w), ad.stack_matvec(PF, d_f)
        c_w, c_f = find_counterpart(P_w), find_counterpart(P_f)
        M_w = ad.outer(ad.concat([d_w, zero]), c_w)
        M_f = ad.outer(ad.concat([d_f, zero]), c_f)
        M = M + M_w + M_f.T
        V_W = -ad.repeat(c_w * keep_w, m + 1).T
        V_F = -ad.repeat(c_f * keep_f, n + 1).T
        PW = PW + UW[k] + V_W
        PF = PF + UF[k] + V_F
        PW = ad.stack_scale(ad.relu(PW), (1.0 - c_f)[:n])
        PF = ad.stack_scale(ad.relu(PF), (1.0 - c_w)[:m])
        yield TSDState(k + 1, M, PW, PF)


def tsd(PW, PF, R) -> Tensor:
    """Matching matrix ``(n+1, m+1)`` produced by serial dictatorship under ``R``."""
    state = None
    for state in tsd_iter(PW, PF, R):
        pass
    return state.M


# --------------------------------------------------------------------------
# loop-invariant probe (test support)

@dataclass
class ProbeReport:
    k: int
    violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def _at_most_one_per_line(A: np.ndarray) -> bool:
    binary = np.all((A == 0) | (A == 1))
    return bool(binary and np.all(A.sum(axis=0) <= 1) and np.all(A.sum(axis=1) <= 1))


def tsd_loop_invariant_probe(profile: PreferenceProfile, ranking: Sequence[int], k: int) -> ProbeReport:
    """Check the loop invariants of :func:`tsd` after ``k`` iterations.

    The reference state comes from the discrete serial dictatorship run for
    the same number of rounds.
    """
    n, m = profile.n, profile.m
    ranking = validate_ranking(ranking, n, m)
    if not 0 <= k <= n + m:
        raise ValueError(f"k must lie in 0..{n + m}")
    PW0, PF0 = build_preference_tensor(profile)
    R = build_ranking_matrix(ranking, n, m)
    state = None
    for state in tsd_iter(PW0, PF0, R):
        if state.k == k:
            break
    if k == 0:
        wp, fp = np.full(n, -1), np.full(m, -1)
    else:
        for step, (wp, fp) in enumerate(sd_rounds(profile, ranking), start=1):
            if step == k:
                break
    report = ProbeReport(k)
    PW, PF, M = state.PW.data, state.PF.data, state.M.data

    for side, stack in (("A", PW), ("B", PF)):
        for a, P in enumerate(stack):
            if not _at_most_one_per_line(P):
                report.violations.append(f"({side}) k={k}: matrix of agent {a} has a repeated 1")

    # an agent is active once its own turn came while it was still unassigned
    active = set()
    w_seen, f_seen = np.full(n, -1), np.full(m, -1)
    for r, (w_after, f_after) in enumerate(sd_rounds(profile, ranking)):
        if r >= k:
            break
        a = int(ranking[r])
        if (a < n and w_seen[a] < 0) or (a >= n and f_seen[a - n] < 0):
            active.add(a)
        w_seen, f_seen = w_after, f_after
    passive_w = {i for i in range(n) if 0 <= wp[i] < m and i not in active}
    passive_f = {j for j in range(m) if 0 <= fp[j] < n and (n + j) not in active}
    for i in range(n):
        if (not PW[i].any()) != (i in passive_w):
            report.violations.append(f"(C) k={k}: worker {i} zero-matrix status is wrong")
    for j in range(m):
        if (not PF[j].any()) != (j in passive_f):
            report.violations.append(f"(C) k={k}: firm {j} zero-matrix status is wrong")

    for i in range(n):
        if i in passive_w:
            continue
        for j in range(m):
            expect = np.zeros(m + 1) if fp[j] >= 0 else PW0[i, j]
            if not np.array_equal(PW[i, j], expect):
                report.violations.append(f"(D) k={k}: worker {i} row for firm {j} is wrong")
        if not np.array_equal(PW[i, m], PW0[i, m]):
            report.violations.append(f"(D) k={k}: worker {i} unmatch row changed")
    for j in range(m):
        if j in passive_f:
            continue
        for i in range(n):
            expect = np.zeros(n + 1) if wp[i] >= 0 else PF0[j, i]
            if not np.array_equal(PF[j, i], expect):
                report.violations.append(f"(D) k={k}: firm {j} row for worker {i} is wrong")
        if not np.array_equal(PF[j, n], PF0[j, n]):
            report.violations.append(f"(D) k={k}: firm {j} unmatch row changed")

    if not np.array_equal(M, partial_matrix(wp, fp)):
        report.violations.append(f"(E) k={k}: accumulated matching differs from serial dictatorship")
    return report

"""NeuralSD: a learned ranking fed into serial dictatorship.

Training runs the soft ranking through the tensor serial dictatorship so the
loss is differentiable in the ranking parameters; inference takes the hard
argsort ranking and runs the discrete algorithm, which is strategy-proof for
any parameter values because the ranking ignores the reports.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .core import PreferenceProfile, run_sd
from .ranking import RankingParams, hard_ranking, ranking_block
from .tsd import build_preference_tensor, tsd


@dataclass
class ModelOutput:
    soft_matching: Tensor
    soft_ranking: Tensor


def forward_train(profile: PreferenceProfile, X_W, X_F, params: RankingParams) -> ModelOutput:
    n, m = profile.n, profile.m
    if np.shape(X_W)[0] != n or np.shape(X_F)[0] != m:
        raise ad.ShapeError("contexts do not match the profile size")
    PW, PF = build_preference_tensor(profile)
    R_soft = ranking_block(X_W, X_F, params)
    return ModelOutput(tsd(PW, PF, R_soft.T), R_soft)


def forward_infer(profile: PreferenceProfile, X_W, X_F, params: RankingParams) -> np.ndarray:
    if np.shape(X_W)[0] != profile.n or np.shape(X_F)[0] != profile.m:
        raise ad.ShapeError("contexts do not match the profile size")
    return run_sd(profile, hard_ranking(X_W, X_F, params))


def mechanism(params: RankingParams):
    """The deployed mechanism as an ``(instance, profile) -> matching`` callable."""
    def run(instance, profile):
        return forward_infer(profile, instance.contexts_w, instance.contexts_f, params)
    return run


def loss(M_hat, M) -> Tensor:
    """Mean row-wise cross entropy of ``softmax(M_hat[i])`` against ``M[i]`` over worker rows."""
    M_hat = ad.as_tensor(M_hat)
    M = np.asarray(M, dtype=np.float64)
    if M_hat.shape != M.shape:
        raise ad.ShapeError(f"prediction {M_hat.shape} and target {M.shape} differ")
    n = M.shape[0] - 1
    logp = ad.log_softmax_rows(M_hat[:n])
    return -ad.sum(logp * M[:n]) / n


def preference_values(profile: PreferenceProfile) -> tuple[np.ndarray, np.ndarray]:
    """Rational encodings ``p`` (n x m) and ``q`` (m x n) of the reports.

    Worker values are scaled by ``1/m`` and firm values by ``1/n`` (the same
    when ``n == m``).

    ``p[i, j] = (1/m)(1[f_j > bot] + sum_j'' (1[f_j > f_j''] - 1[bot > f_j'']))``
    and symmetrically for ``q``; the unmatch option itself is worth 0.
    """
    def side(ranks, k, scale):
        opts = ranks[:, :k]                    # rank of each real option
        bot = ranks[:, k:k + 1]
        above_bot = (opts < bot).astype(float)
        beats = (opts[:, :, None] < opts[:, None, :]).sum(axis=2)
        below_bot = (opts > bot).sum(axis=1, keepdims=True)
        return (above_bot + beats - below_bot) / scale

    n, m = profile.n, profile.m
    return side(profile.worker_ranks, m, m), side(profile.firm_ranks, n, n)


def stv_tensor(M_hat, profile: PreferenceProfile) -> Tensor:
    """Stability violation ``(1/n) sum_ij stv_ij`` of a (possibly soft) matrix.

    The unmatch column/row enters the comparison sums with value 0, so an
    unmatched agent still counts toward a blocking pair.
    """
    M_hat = ad.as_tensor(M_hat)
    n, m = profile.n, profile.m
    p, q = preference_values(profile)
    p_ext = np.concatenate([p, np.zeros((n, 1))], axis=1)
    q_ext = np.concatenate([q, np.zeros((m, 1))], axis=1)
    Dp = np.maximum(p[:, :, None] - p_ext[:, None, :], 0.0)   # (n, m, m+1)
    Dq = np.maximum(q[:, :, None] - q_ext[:, None, :], 0.0)   # (m, n, n+1)
    rows = ad.reshape(M_hat[:n], (n, 1, m + 1))
    cols = ad.reshape(ad.transpose(M_hat[:, :m]), (m, 1, n + 1))
    worker_side = ad.sum(rows * Dp, axis=2)                   # (n, m)
    firm_side = ad.transpose(ad.sum(cols * Dq, axis=2))       # (n, m)
    return ad.sum(worker_side * firm_side) / n


def loss_with_stability_reg(M_hat, M, profile: PreferenceProfile, lam: float, L: int) -> Tensor:
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    base = loss(M_hat, M)
    if lam == 0:
        return base
    return base + stv_tensor(M_hat, profile) * (lam / L)

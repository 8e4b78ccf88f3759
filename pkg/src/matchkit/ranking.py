"""Ranking block: self-attention over agent contexts, a scalar score per agent,
an index tie-break and a SoftSort relaxation of the descending argsort.

The soft ranking returned by :func:`ranking_block` is oriented rank x agent
(row ``k`` is a distribution over the agent holding rank ``k``).  The TSD
ranking matrix is its transpose.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

PARAM_NAMES = ("Wq", "Wk", "Wv", "w", "b")


@dataclass
class RankingParams:
    """Weights of the ranking block.  Fields may be numpy arrays or Tensors."""

    Wq: object
    Wk: object
    Wv: object
    w: object
    b: object
    tau: float = 0.1

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        d, e = np.shape(_data(self.Wq))
        for name in ("Wk", "Wv"):
            if np.shape(_data(getattr(self, name))) != (d, e):
                raise ValueError(f"{name} must have shape {(d, e)}")
        if np.shape(_data(self.w)) != (e,) or np.shape(_data(self.b)) != (1,):
            raise ValueError("w must have shape (d_emb,) and b shape (1,)")
        for name in PARAM_NAMES:
            if not np.all(np.isfinite(_data(getattr(self, name)))):
                raise ValueError(f"{name} has non-finite entries")

    @property
    def d(self) -> int:
        return np.shape(_data(self.Wq))[0]

    @property
    def d_emb(self) -> int:
        return np.shape(_data(self.Wq))[1]

    def arrays(self) -> dict:
        return {k: np.array(_data(getattr(self, k)), dtype=np.float64) for k in PARAM_NAMES}

    def as_leaves(self) -> "RankingParams":
        """Copy whose weights are fresh Tensors that require grad."""
        a = self.arrays()
        return RankingParams(**{k: Tensor(v, requires_grad=True) for k, v in a.items()}, tau=self.tau)

    def with_tau(self, tau: float) -> "RankingParams":
        return RankingParams(**{k: getattr(self, k) for k in PARAM_NAMES}, tau=tau)


def _data(x):
    return x.data if isinstance(x, Tensor) else x


def init_params(d: int, d_emb: int = 10, seed: int = 0, tau: float = 0.1) -> RankingParams:
    """Uniform init in +-1/sqrt(fan_in) for every weight, zero bias."""
    rng = np.random.default_rng(seed)
    s = 1.0 / math.sqrt(d)
    Wq, Wk, Wv = (rng.uniform(-s, s, (d, d_emb)) for _ in range(3))
    se = 1.0 / math.sqrt(d_emb)
    w = rng.uniform(-se, se, d_emb)
    return RankingParams(Wq, Wk, Wv, w, np.zeros(1), tau)


def self_attention(X, params: RankingParams) -> Tensor:
    """Single-head scaled dot-product self-attention."""
    X = ad.as_tensor(X)
    Q = X @ ad.as_tensor(params.Wq)
    K = X @ ad.as_tensor(params.Wk)
    V = X @ ad.as_tensor(params.Wv)
    scores = (Q @ K.T) / math.sqrt(params.d_emb)
    return ad.softmax_rows(scores) @ V


def rank(a: np.ndarray) -> np.ndarray:
    """``rank(a)_i = #{j : a_j < a_i, or a_j == a_i and j < i}``."""
    a = np.asarray(a)
    order = np.lexsort((np.arange(len(a)), a))
    out = np.empty(len(a), dtype=np.int64)
    out[order] = np.arange(len(a))
    return out


def tie_break(a) -> Tensor:
    """``a + rank(a)`` with the rank term treated as a constant."""
    a = ad.as_tensor(a)
    return a + Tensor(rank(a.data).astype(np.float64))


def soft_sort(a, tau: float) -> Tensor:
    """Relaxed permutation matrix of the descending sort of ``a`` (rank x agent)."""
    a = ad.as_tensor(a)
    if a.ndim != 1:
        raise ad.ShapeError("soft_sort expects a vector")
    k = a.shape[0]
    perm = np.zeros((k, k))
    perm[np.arange(k), np.argsort(-a.data, kind="stable")] = 1.0
    s = Tensor(perm) @ a
    ones = Tensor(np.ones(k))
    diff = ad.outer(s, ones) - ad.outer(ones, a)
    return ad.softmax_rows(-ad.abs(diff) / tau)


def scores(X_W, X_F, params: RankingParams) -> Tensor:
    """Per-agent scores after attention, the linear map and the tie-break."""
    X = ad.concat_rows(ad.as_tensor(X_W), ad.as_tensor(X_F))
    if X.shape[1] != params.d:
        raise ad.ShapeError(f"context dim {X.shape[1]} != parameter dim {params.d}")
    A = self_attention(X, params)
    a = A @ ad.as_tensor(params.w) + ad.as_tensor(params.b)
    return tie_break(a)


def ranking_block(X_W, X_F, params: RankingParams) -> Tensor:
    """Soft ranking, shape ``(n+m, n+m)``, rows indexed by rank."""
    return soft_sort(scores(X_W, X_F, params), params.tau)


def hard_ranking(X_W, X_F, params: RankingParams) -> np.ndarray:
    """Agents ordered by decreasing tie-broken score (the inference ranking)."""
    s = scores(np.asarray(X_W, dtype=float), np.asarray(X_F, dtype=float), params).data
    return np.argsort(-s, kind="stable")

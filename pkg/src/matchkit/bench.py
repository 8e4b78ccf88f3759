"""Wall-time growth of the tensor serial dictatorship and the ranking block."""
from __future__ import annotations

import timeit
from dataclasses import dataclass

import numpy as np

from .core import PreferenceProfile
from .ranking import init_params, ranking_block
from .tsd import build_preference_tensor, tsd

OPS = ("tsd", "ranking")


@dataclass
class BenchRow:
    op: str
    n: int
    seconds: float


def _workload(op: str, n: int, rng: np.random.Generator):
    if op == "tsd":
        profile = PreferenceProfile.random(n, n, rng)
        PW, PF = build_preference_tensor(profile)
        R = np.zeros((2 * n, 2 * n))
        R[rng.permutation(2 * n), np.arange(2 * n)] = 1.0
        return lambda: tsd(PW, PF, R)
    if op == "ranking":
        d = 10
        params = init_params(d, 10, seed=0)
        xw, xf = rng.normal(1, 1, (n, d)), rng.normal(-1, 1, (n, d))
        return lambda: ranking_block(xw, xf, params)
    raise ValueError(f"unknown op {op!r}; choose from {OPS}")


def time_op(op: str, n: int, repeats: int = 5, seed: int = 0) -> float:
    """Best-of-``repeats`` seconds per call at ``n = m``.

    Each repeat loops the call for at least 0.2 s (``timeit`` autorange);
    garbage collection is off while timing.
    """
    timer = timeit.Timer(_workload(op, n, np.random.default_rng(seed)))
    number, _ = timer.autorange()
    return min(timer.repeat(repeats, number)) / number


def loglog_slope(sizes, seconds) -> float:
    x, y = np.log(np.asarray(sizes, dtype=float)), np.log(np.asarray(seconds, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def run_bench(op: str, sizes, repeats: int = 5, seed: int = 0) -> tuple[list[BenchRow], float]:
    rows = [BenchRow(op, int(n), time_op(op, int(n), repeats, seed)) for n in sizes]
    return rows, loglog_slope([r.n for r in rows], [r.seconds for r in rows])

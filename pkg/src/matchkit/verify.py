"""Executable property suites: strategy-proofness, Pareto efficiency, the IR
violation bound, TSD/SD equivalence and optimality of the assignment solver."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    Instance,
    PreferenceProfile,
    check_strategy_proofness,
    enumerate_matchings,
    is_pareto_efficient,
    run_sd,
    validate_matching,
)
from .mechanisms import RewardSpec, hungarian_matching, total_reward
from .metrics import ir_violation_general
from .neuralsd import forward_infer, mechanism
from .ranking import init_params
from .tsd import build_preference_tensor, build_ranking_matrix, tsd

SUITES = ("sp", "pareto", "irv", "tsd-equiv", "hungarian")


@dataclass
class SuiteResult:
    name: str
    checked: int = 0
    failures: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.failures


def random_market(n: int, m: int, rng: np.random.Generator, d: int = 10):
    inst = Instance(rng.normal(1, 1, (n, d)), rng.normal(-1, 1, (m, d)))
    return inst, PreferenceProfile.random(n, m, rng)


def fixed_ranking_sd(ranking):
    return lambda inst, prof: run_sd(prof, ranking)


def suite_sp(trials: int, rng: np.random.Generator, n: int = 3, param_settings: int = 1) -> SuiteResult:
    """Exhaustive misreport search against SD and NeuralSD inference."""
    res = SuiteResult("sp")
    seeds = rng.integers(0, 2**31, size=param_settings)
    for t in range(trials):
        inst, prof = random_market(n, n, rng)
        mechs = [("SD", fixed_ranking_sd(rng.permutation(2 * n)))]
        mechs += [(f"NeuralSD[seed={s}]", mechanism(init_params(inst.d, 10, seed=int(s)))) for s in seeds]
        for name, mech in mechs:
            devs = check_strategy_proofness(mech, inst, prof)
            res.checked += 1
            for dv in devs:
                res.failures.append(
                    f"{name} trial {t}: agent {dv.agent} gains {dv.truthful_payoff}->{dv.misreport_payoff} "
                    f"by reporting {dv.misreport.as_list()}"
                )
    return res


def suite_pareto(trials: int, rng: np.random.Generator, n: int = 3) -> SuiteResult:
    res = SuiteResult("pareto")
    for t in range(trials):
        inst, prof = random_market(n, n, rng)
        params = init_params(inst.d, 10, seed=int(rng.integers(2**31)))
        outs = {
            "SD": run_sd(prof, rng.permutation(2 * n)),
            "NeuralSD": forward_infer(prof, inst.contexts_w, inst.contexts_f, params),
        }
        for name, M in outs.items():
            res.checked += 1
            if not is_pareto_efficient(M, prof):
                res.failures.append(f"{name} trial {t}: output is Pareto dominated")
    return res


def adversarial_irv_profile(n: int, m: int) -> tuple[PreferenceProfile, np.ndarray]:
    """Profile and ranking where every passively matched agent gets its last choice.

    The short side moves first and its agent ``k`` takes partner ``k``; the
    passive side ranks the unmatch option first and that partner last.
    """
    def actor(k, size):
        # wants partner k most; the unmatch option (index size-1) comes last
        return _order_to_ranks([k] + [x for x in range(size) if x != k], size)

    def passive(k, size, n_active):
        bot = size - 1
        if k < n_active:
            order = [bot] + [x for x in range(bot) if x != k] + [k]
        else:
            order = [bot] + list(range(bot))
        return _order_to_ranks(order, size)

    if n <= m:
        wr = np.array([actor(i, m + 1) for i in range(n)])
        fr = np.array([passive(j, n + 1, n) for j in range(m)])
        ranking = np.r_[np.arange(n), n + np.arange(m)]
    else:
        fr = np.array([actor(j, n + 1) for j in range(m)])
        wr = np.array([passive(i, m + 1, m) for i in range(n)])
        ranking = np.r_[n + np.arange(m), np.arange(n)]
    return PreferenceProfile(wr, fr), ranking


def _order_to_ranks(order, size):
    r = np.empty(size, dtype=np.int64)
    r[np.asarray(order)] = np.arange(1, size + 1)
    return r


def suite_irv(trials: int, rng: np.random.Generator, max_size: int = 8) -> SuiteResult:
    res = SuiteResult("irv")
    worst = 0.0
    params = init_params(10, 10, seed=int(rng.integers(2**31)))
    for t in range(trials):
        n, m = (int(x) for x in rng.integers(1, max_size + 1, size=2))
        inst, prof = random_market(n, m, rng)
        for name, M in (
            ("SD", run_sd(prof, rng.permutation(n + m))),
            ("NeuralSD", forward_infer(prof, inst.contexts_w, inst.contexts_f, params)),
        ):
            v = ir_violation_general(M, prof)
            worst = max(worst, v)
            res.checked += 1
            if v > 0.5:
                res.failures.append(f"{name} trial {t} (n={n}, m={m}): IRV {v} > 0.5")
    adv = []
    for n in range(1, max_size + 1):
        prof, ranking = adversarial_irv_profile(n, n)
        v = ir_violation_general(run_sd(prof, ranking), prof)
        adv.append(v)
        res.checked += 1
        if v > 0.5:
            res.failures.append(f"adversarial n={n}: IRV {v} > 0.5")
    res.stats = {"max_random": worst, "max_adversarial": max(adv), "min_adversarial": min(adv)}
    return res


def suite_tsd_equiv(trials: int, rng: np.random.Generator, max_size: int = 6) -> SuiteResult:
    res = SuiteResult("tsd-equiv")
    for t in range(trials):
        n, m = (int(x) for x in rng.integers(1, max_size + 1, size=2))
        prof = PreferenceProfile.random(n, m, rng)
        ranking = rng.permutation(n + m)
        PW, PF = build_preference_tensor(prof)
        got = tsd(PW, PF, build_ranking_matrix(ranking, n, m)).data
        want = run_sd(prof, ranking)
        res.checked += 1
        if not np.array_equal(got, want):
            res.failures.append(f"trial {t} (n={n}, m={m}, ranking={ranking.tolist()}): TSD differs from SD")
    return res


def suite_hungarian(trials: int, rng: np.random.Generator, max_size: int = 4) -> SuiteResult:
    res = SuiteResult("hungarian")
    for t in range(trials):
        n = int(rng.integers(1, max_size + 1))
        prof = PreferenceProfile.random(n, n, rng)
        spec = RewardSpec.eh(n) if t % 2 == 0 else RewardSpec.mh(n, rng)
        M = hungarian_matching(prof, spec)
        got = total_reward(M, prof, spec)
        best = max(total_reward(X, prof, spec) for X in enumerate_matchings(n, n))
        res.checked += 1
        if validate_matching(M, n, n):
            res.failures.append(f"trial {t}: invalid matching")
        if got != best:
            res.failures.append(f"trial {t} ({spec.kind}, n={n}): objective {got} < brute force {best}")
    return res


def run_suite(name: str, trials: int = 100, seed: int = 0) -> list[SuiteResult]:
    rng = np.random.default_rng(seed)
    names = SUITES if name == "all" else (name,)
    out = []
    for s in names:
        if s == "sp":
            out.append(suite_sp(trials, rng))
        elif s == "pareto":
            out.append(suite_pareto(trials, rng))
        elif s == "irv":
            out.append(suite_irv(trials, rng))
        elif s == "tsd-equiv":
            out.append(suite_tsd_equiv(trials, rng))
        elif s == "hungarian":
            out.append(suite_hungarian(trials, rng))
        else:
            raise ValueError(f"unknown suite {s!r}; choose from {SUITES + ('all',)}")
    return out

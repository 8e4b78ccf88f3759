"""End-to-end acceptance criteria, run at their stated tolerances.

Each test prints one PASS/FAIL line (collected again in the terminal summary)
and then asserts.  Seeds are fixed up front; nothing here is tuned per run.
"""
import time

import numpy as np
import pytest

from matchkit.autodiff import grad_check
from matchkit.bench import run_bench
from matchkit.core import (
    Instance,
    PreferenceProfile,
    check_strategy_proofness,
    enumerate_matchings,
    is_pareto_efficient,
    run_sd,
    validate_matching,
)
from matchkit.datagen import DataConfig, generate_dataset, make_record
from matchkit.mechanisms import RewardSpec, hungarian_matching, total_reward
from matchkit.metrics import ir_violation_general, optimal_ranking_set, wilcoxon_one_sided
from matchkit.neuralsd import forward_infer, forward_train, loss, mechanism
from matchkit.ranking import PARAM_NAMES, RankingParams, hard_ranking, init_params
from matchkit.training import TrainConfig, evaluate, rsd_rng, train
from matchkit.tsd import build_preference_tensor, build_ranking_matrix, find_counterpart, tsd
from matchkit.verify import adversarial_irv_profile, random_market

import oracles

pytestmark = pytest.mark.acceptance

# fixed in advance
C8_TRAIN_SEED, C8_TEST_SEED = 10, 11
C8_EH_TRAIN_SEED, C8_EH_TEST_SEED = 20, 21
C10_SEEDS = {20: 30, 40: 40}
C9_RUNS, C9_TEST_SEED = 20, 999


# ---------------------------------------------------------------- 1

def test_c1_tsd_equals_sd(criterion):
    rng = np.random.default_rng(1)
    start, bad, rect = time.perf_counter(), 0, 0
    for _ in range(1000):
        n, m = (int(x) for x in rng.integers(1, 7, size=2))
        rect += n != m
        p = PreferenceProfile.random(n, m, rng)
        r = rng.permutation(n + m)
        PW, PF = build_preference_tensor(p)
        bad += not np.array_equal(tsd(PW, PF, build_ranking_matrix(r, n, m)).data, run_sd(p, r))
    secs = time.perf_counter() - start
    ok = bad == 0 and secs < 60
    criterion(1, ok, f"TSD == SD on 1000 pairs ({rect} with n != m): {bad} mismatches, {secs:.1f}s")
    assert ok


# ---------------------------------------------------------------- 2

def test_c2_strategy_proofness(criterion):
    rng = np.random.default_rng(2)
    start, devs = time.perf_counter(), 0
    settings = [init_params(10, 10, seed=int(s)) for s in rng.integers(0, 2**31, size=10)]
    for _ in range(50):
        inst, prof = random_market(3, 3, rng)
        for params in settings:
            devs += len(check_strategy_proofness(mechanism(params), inst, prof))
    secs = time.perf_counter() - start
    ok = devs == 0 and secs < 300
    criterion(2, ok, f"50 instances x 10 parameter settings, all 24 misreports per agent: "
                     f"{devs} profitable deviations, {secs:.1f}s")
    assert ok


# ---------------------------------------------------------------- 3

def test_c3_pareto(criterion):
    rng = np.random.default_rng(3)
    start, dominated = time.perf_counter(), 0
    for t in range(100):
        inst, prof = random_market(3, 3, rng)
        params = init_params(10, 10, seed=t)
        for M in (run_sd(prof, rng.permutation(6)), forward_infer(prof, inst.contexts_w, inst.contexts_f, params)):
            dominated += not is_pareto_efficient(M, prof)
    secs = time.perf_counter() - start
    ok = dominated == 0 and secs < 120
    criterion(3, ok, f"SD and NeuralSD on 100 instances: {dominated} dominated outputs, {secs:.1f}s")
    assert ok


# ---------------------------------------------------------------- 4

def test_c4_irv_bound(criterion):
    rng = np.random.default_rng(4)
    params = init_params(10, 10, seed=4)
    worst = 0.0
    for _ in range(10_000):
        n, m = (int(x) for x in rng.integers(1, 9, size=2))
        inst, prof = random_market(n, m, rng)
        worst = max(worst,
                    ir_violation_general(run_sd(prof, rng.permutation(n + m)), prof),
                    ir_violation_general(forward_infer(prof, inst.contexts_w, inst.contexts_f, params), prof))
    adv = []
    for n in range(1, 9):
        for m in range(1, 9):
            prof, ranking = adversarial_irv_profile(n, m)
            adv.append(ir_violation_general(run_sd(prof, ranking), prof))
    ok = worst <= 0.5 and max(adv) <= 0.5 and min(adv) >= 0.45
    criterion(4, ok, f"max IRV over 10000 random instances {worst:.4f}; adversarial construction "
                     f"min {min(adv):.4f} max {max(adv):.4f}")
    assert ok


# ---------------------------------------------------------------- 5

def test_c5_find_counterpart(criterion):
    import itertools
    checked = mismatched = 0
    for r in range(1, 5):
        for c in range(1, 5):
            for rows in itertools.product(range(-1, c), repeat=r):
                used = [x for x in rows if x >= 0]
                if len(used) != len(set(used)):
                    continue
                P = np.zeros((r, c))
                for i, j in enumerate(rows):
                    if j >= 0:
                        P[i, j] = 1
                checked += 1
                mismatched += find_counterpart(P).data.tolist() != oracles.leftmost_nonzero_column(P.tolist())
    ok = mismatched == 0
    criterion(5, ok, f"{checked} admissible matrices up to 4x4: {mismatched} mismatches")
    assert ok


# ---------------------------------------------------------------- 6

def _kinked(f, x, eps=1e-5):
    """Central differences at two step sizes disagree near a non-smooth point."""
    base = np.array(x, dtype=float)
    flat = base.reshape(-1)
    from matchkit.autodiff import Tensor
    for k in range(flat.size):
        diffs = []
        for h in (eps, eps / 10):
            orig = flat[k]
            flat[k] = orig + h
            hi = f(Tensor(base.copy())).item()
            flat[k] = orig - h
            lo = f(Tensor(base.copy())).item()
            flat[k] = orig
            diffs.append((hi - lo) / (2 * h))
        if abs(diffs[0] - diffs[1]) > 1e-3 * max(1.0, abs(diffs[0])):
            return True
    return False


def test_c6_composite_gradient(criterion):
    cfg = DataConfig(3, 3, 20, seed=6)
    worst, retries = 0.0, 0
    rng = np.random.default_rng(6)
    for k in range(20):
        rec = make_record(cfg, k)
        base = init_params(10, seed=100 + k, tau=0.1)
        for attempt in range(4):
            errs = {}
            for name in PARAM_NAMES:
                def f(x, name=name, base=base):
                    kw = {n: (x if n == name else getattr(base, n)) for n in PARAM_NAMES}
                    out = forward_train(rec.profile, rec.instance.contexts_w, rec.instance.contexts_f,
                                        RankingParams(**kw, tau=0.1))
                    return loss(out.soft_matching, rec.example)
                errs[name] = (grad_check(f, getattr(base, name)), f)
            bad = [n for n, (e, _) in errs.items() if e >= 1e-4]
            if not bad or attempt == 3 or not any(_kinked(errs[n][1], getattr(base, n)) for n in bad):
                break
            retries += 1
            arrs = {n: getattr(base, n) + rng.normal(0, 1e-3, np.shape(getattr(base, n))) for n in PARAM_NAMES}
            base = RankingParams(**arrs, tau=0.1)
        worst = max(worst, max(e for e, _ in errs.values()))
    ok = worst < 1e-4
    criterion(6, ok, f"max relative gradient error over 20 instances, all parameters: {worst:.2e} "
                     f"({retries} kink retries)")
    assert ok


# ---------------------------------------------------------------- 7

def test_c7_hungarian(criterion):
    rng = np.random.default_rng(7)
    wrong = 0
    for t in range(200):
        n = int(rng.integers(1, 5))
        prof = PreferenceProfile.random(n, n, rng)
        spec = RewardSpec.eh(n) if t % 2 == 0 else RewardSpec.mh(n, rng)
        M = hungarian_matching(prof, spec)
        best = max(total_reward(X, prof, spec) for X in enumerate_matchings(n, n))
        wrong += bool(validate_matching(M, n, n)) or total_reward(M, prof, spec) != best
    ok = wrong == 0
    criterion(7, ok, f"EH/MH objective vs brute force on 200 instances: {wrong} differ")
    assert ok


# ---------------------------------------------------------------- shared training runs

@pytest.fixture(scope="module")
def c8_da():
    start = time.perf_counter()
    tr = list(generate_dataset(DataConfig(10, 10, 1000, "DA", seed=C8_TRAIN_SEED)))
    te = list(generate_dataset(DataConfig(10, 10, 750, "DA", seed=C8_TEST_SEED)))
    ck = train(tr, TrainConfig(seed=0))
    res = evaluate(ck.params, te, seed=0)
    return {"train": tr, "test": te, "ckpt": ck, "eval": res, "seconds": time.perf_counter() - start}


@pytest.fixture(scope="module")
def c8_eh():
    start = time.perf_counter()
    tr = list(generate_dataset(DataConfig(10, 10, 1000, "EH", seed=C8_EH_TRAIN_SEED)))
    te = list(generate_dataset(DataConfig(10, 10, 750, "EH", seed=C8_EH_TEST_SEED)))
    ck = train(tr, TrainConfig(seed=0))
    res = evaluate(ck.params, te, seed=0)
    return {"eval": res, "seconds": time.perf_counter() - start}


# ---------------------------------------------------------------- 8

def test_c8_directional_vs_rsd(criterion, c8_da, c8_eh):
    da, eh = c8_da["eval"], c8_eh["eval"]
    hd = (da.mean("NeuralSD", "HD"), da.mean("RSD", "HD"))
    bp = (da.mean("NeuralSD", "BP"), da.mean("RSD", "BP"))
    irv_zero = bool(np.all(da.values("NeuralSD", "IRV") == 0) and np.all(da.values("RSD", "IRV") == 0))
    p_rw = eh.wilcoxon["RW"]
    secs = c8_da["seconds"] + c8_eh["seconds"]
    ok = hd[0] <= hd[1] and bp[0] <= bp[1] and irv_zero and p_rw < 0.05 and secs < 900
    criterion(8, ok, f"DA n=10: HD {hd[0]:.4f} vs RSD {hd[1]:.4f} (p={da.wilcoxon['HD']:.2g}), "
                     f"#BP {bp[0]:.4f} vs {bp[1]:.4f} (p={da.wilcoxon['BP']:.2g}), IRV all zero={irv_zero}; "
                     f"EH: RW {eh.mean('NeuralSD', 'RW'):.4f} vs {eh.mean('RSD', 'RW'):.4f} p={p_rw:.2g}; "
                     f"{secs:.0f}s")
    assert ok


# ---------------------------------------------------------------- 9

def test_c9_recovery_rate(criterion):
    test = list(generate_dataset(DataConfig(3, 3, 750, "DA", seed=C9_TEST_SEED)))
    opt = [optimal_ranking_set(r.profile, r.example) for r in test]
    nn, base = [], []
    for k in range(C9_RUNS):
        tr = list(generate_dataset(DataConfig(3, 3, 1000, "DA", seed=100 + k)))
        params = train(tr, TrainConfig(seed=k)).params
        nn.append(np.mean([tuple(int(a) for a in hard_ranking(r.instance.contexts_w, r.instance.contexts_f, params))
                           in o for r, o in zip(test, opt)]))
        base.append(np.mean([tuple(int(a) for a in rsd_rng(k, rid).permutation(6)) in o
                             for rid, o in enumerate(opt)]))
    nn, base = np.array(nn), np.array(base)
    p = wilcoxon_one_sided(nn, base, alternative="greater")
    ok = nn.mean() > base.mean() and p < 0.05
    criterion(9, ok, f"recovery over {C9_RUNS} runs: NeuralSD {nn.mean():.4f} +- {nn.std():.4f}, "
                     f"RSD {base.mean():.4f} +- {base.std():.4f} (expected RSD "
                     f"{np.mean([len(o) / 720 for o in opt]):.4f}), p={p:.2g}")
    assert ok


# ---------------------------------------------------------------- 10

def test_c10_scale_invariance(criterion, c8_da):
    params = c8_da["ckpt"].params
    start, parts, ok = time.perf_counter(), [], True
    for n, seed in C10_SEEDS.items():
        te = list(generate_dataset(DataConfig(n, n, 750, "DA", seed=seed)))
        res = evaluate(params, te, seed=0, metrics=("HD",))
        a, b = res.mean("NeuralSD", "HD"), res.mean("RSD", "HD")
        ok &= a <= b
        parts.append(f"n={n}: HD {a:.4f} vs RSD {b:.4f} (p={res.wilcoxon['HD']:.2g})")
    secs = time.perf_counter() - start
    ok &= secs < 1200
    criterion(10, ok, f"checkpoint trained at n=10; " + "; ".join(parts) + f"; {secs:.0f}s")
    assert ok


# ---------------------------------------------------------------- 11

def test_c11_tsd_growth(criterion):
    _, slope = run_bench("tsd", [20, 40, 80], repeats=7)
    ok = 3.3 <= slope <= 4.7
    criterion(11, ok, f"TSD log-log slope over n in {{20,40,80}}: {slope:.3f} (target [3.3, 4.7])")
    assert ok


def test_c11_ranking_growth(criterion):
    _, slope = run_bench("ranking", [20, 40, 80], repeats=7)
    ok = 1.5 <= slope <= 2.5
    criterion(11, ok, f"ranking-block log-log slope over n in {{20,40,80}}: {slope:.3f} (target [1.5, 2.5])")
    assert ok


# ---------------------------------------------------------------- 12

def test_c12_stability_regulariser(criterion, c8_da):
    ck = train(c8_da["train"], TrainConfig(seed=0, lambda_stability=0.1))
    reg = evaluate(ck.params, c8_da["test"], seed=0, metrics=("SV",))
    sv_reg = reg.mean("NeuralSD", "SV")
    sv_base = c8_da["eval"].mean("NeuralSD", "SV")
    a = reg.values("NeuralSD", "SV")
    b = np.array([r["value"] for r in c8_da["eval"].rows if r["model"] == "NeuralSD" and r["metric"] == "SV"])
    try:
        p = wilcoxon_one_sided(a, b, "less")
    except ValueError:
        p = float("nan")
    ok = sv_reg <= sv_base
    criterion(12, ok, f"mean SV with lambda=0.1 {sv_reg:.5f} vs lambda=0 {sv_base:.5f} (paired p={p:.2g})")
    assert ok

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from matchkit.core import (
    EnumerationLimitError,
    Instance,
    LinearOrder,
    PreferenceProfile,
    blocking_pairs,
    check_strategy_proofness,
    empty_matching,
    is_individually_rational,
    is_pareto_efficient,
    is_stable,
    matching_from_partners,
    partners,
    run_sd,
    validate_matching,
)
from matchkit.mechanisms import deferred_acceptance

import oracles


def two_by_two():
    # w1: f1 > f2 > bot, w2: f1 > bot > f2, f1: w2 > w1 > bot, f2: w1 > bot > w2
    return PreferenceProfile.from_lists([[0, 1, 2], [0, 2, 1]], [[1, 0, 2], [0, 2, 1]])


def dummy_instance(n, m):
    return Instance(np.zeros((n, 1)), np.zeros((m, 1)))


@st.composite
def profiles(draw, max_n=5, max_m=5):
    n = draw(st.integers(1, max_n))
    m = draw(st.integers(1, max_m))
    seed = draw(st.integers(0, 2**32 - 1))
    return PreferenceProfile.random(n, m, np.random.default_rng(seed)), seed


# ---------------------------------------------------------------- ord

def test_ord_top_is_one():
    assert LinearOrder.from_list([2, 0, 1]).ord(2) == 1


def test_ord_bottom_is_k_plus_one():
    o = LinearOrder.from_list([2, 0, 3, 1])
    assert o.ord(1) == 4


def test_ord_counts_weakly_preferred_options():
    # f1 > bot > f2 with m = 2; bot is option 2
    o = LinearOrder.from_list([0, 2, 1])
    assert o.ord(1) == 3


def test_ord_out_of_range():
    with pytest.raises(IndexError):
        LinearOrder.from_list([0, 1]).ord(2)


def test_linear_order_rejects_non_permutation():
    with pytest.raises(ValueError):
        LinearOrder((1, 1, 2))


def test_instance_validation():
    with pytest.raises(ValueError):
        Instance(np.zeros((0, 2)), np.zeros((1, 2)))
    with pytest.raises(ValueError):
        Instance(np.zeros((1, 2)), np.zeros((1, 3)))
    with pytest.raises(ValueError):
        Instance(np.array([[np.nan]]), np.zeros((1, 1)))
    inst = Instance(np.zeros((2, 3)), np.ones((4, 3)))
    assert (inst.n, inst.m, inst.d) == (2, 4, 3)


def test_profile_replace_and_equality(rng):
    p = PreferenceProfile.random(3, 2, rng)
    cur = p.worker(1).as_list()
    lie = LinearOrder.from_list(cur[::-1])
    q = p.replace(1, lie)
    assert q.worker(1) == lie and q != p
    assert q.replace(1, p.worker(1)) == p
    assert hash(q.replace(1, p.worker(1))) == hash(p)


# ---------------------------------------------------------------- run_sd

def test_run_sd_hand_trace():
    M = run_sd(two_by_two(), [0, 3, 1, 2])
    wp, fp = partners(M)
    assert wp.tolist() == [0, 2]          # w1-f1, w2 single
    assert fp[1] == 2                     # f2 single


def test_run_sd_everyone_prefers_unmatch():
    p = PreferenceProfile.from_lists([[2, 0, 1], [2, 1, 0]], [[2, 0, 1], [2, 1, 0]])
    assert np.array_equal(run_sd(p, [3, 1, 0, 2]), empty_matching(2, 2))


@pytest.mark.parametrize("ranking", [[0, 1], [1, 0]])
def test_run_sd_unique_acceptable_pair(ranking):
    p = PreferenceProfile.from_lists([[0, 1]], [[0, 1]])
    assert run_sd(p, ranking).tolist() == [[1, 0], [0, 0]]


def test_run_sd_rejects_bad_ranking():
    with pytest.raises(ValueError):
        run_sd(two_by_two(), [0, 1, 2])
    with pytest.raises(ValueError):
        run_sd(two_by_two(), [0, 0, 1, 2])


@settings(max_examples=150, deadline=None)
@given(profiles(max_n=8, max_m=8), st.randoms(use_true_random=False))
def test_run_sd_matches_hand_oracle_and_is_valid(pf, rnd):
    profile, _ = pf
    ranking = list(range(profile.n + profile.m))
    rnd.shuffle(ranking)
    M = run_sd(profile, ranking)
    assert validate_matching(M, profile.n, profile.m) == []
    want = oracles.matrix_from_dict(oracles.sd_partners(profile, ranking), profile.n, profile.m)
    assert M.tolist() == want


# ---------------------------------------------------------------- validate_matching

def test_validate_matching_ok():
    assert validate_matching(matching_from_partners([1, 2], 2), 2, 2) == []


def test_validate_matching_row_violation():
    M = empty_matching(2, 2)
    M[0, 0] = 1
    errs = validate_matching(M, 2, 2)
    assert any("row 0" in e for e in errs)


def test_validate_matching_corner():
    M = empty_matching(1, 1)
    M[1, 1] = 1
    assert any("corner" in e for e in validate_matching(M, 1, 1))


def test_validate_matching_shape_and_binary():
    assert validate_matching(np.zeros((2, 2)), 2, 2)
    M = empty_matching(1, 1).astype(float)
    M[0, 1] = 0.5
    assert any("binary" in e for e in validate_matching(M, 1, 1))


# ---------------------------------------------------------------- stability notions

def test_da_output_has_no_blocking_pairs(rng):
    for _ in range(50):
        p = PreferenceProfile.random(4, 3, rng)
        assert blocking_pairs(deferred_acceptance(p), p) == set()


def test_single_pair_blocks_empty_matching():
    p = PreferenceProfile.from_lists([[0, 1]], [[0, 1]])
    assert blocking_pairs(empty_matching(1, 1), p) == {(0, 0)}


@settings(max_examples=100, deadline=None)
@given(profiles(max_n=4, max_m=4), st.integers(0, 2**32 - 1))
def test_blocking_pairs_match_brute_force(pf, seed):
    profile, _ = pf
    r = np.random.default_rng(seed)
    candidates = oracles.all_matchings(profile.n, profile.m)
    ms = list(candidates)
    wp = ms[r.integers(len(ms))]
    M = np.array(oracles.matrix_from_dict(wp, profile.n, profile.m))
    assert blocking_pairs(M, profile) == oracles.blocking_pairs_brute(M, profile)


def test_individual_rationality():
    p = PreferenceProfile.from_lists([[1, 0]], [[0, 1]])   # w1: bot > f1
    assert is_individually_rational(empty_matching(1, 1), p)
    assert not is_individually_rational(matching_from_partners([0], 1), p)
    q = PreferenceProfile.from_lists([[0, 1]], [[0, 1]])
    assert is_individually_rational(matching_from_partners([0], 1), q)


def test_stable_iff_ir_and_no_blocking(rng):
    for _ in range(100):
        p = PreferenceProfile.random(3, 3, rng)
        for M in (run_sd(p, rng.permutation(6)), deferred_acceptance(p), empty_matching(3, 3)):
            assert is_stable(M, p) == (is_individually_rational(M, p) and not blocking_pairs(M, p))


# ---------------------------------------------------------------- Pareto efficiency

def test_sd_is_pareto_efficient(rng):
    for _ in range(60):
        n, m = rng.integers(1, 4, size=2)
        p = PreferenceProfile.random(n, m, rng)
        M = run_sd(p, rng.permutation(n + m))
        assert is_pareto_efficient(M, p)


def test_empty_matching_dominated_when_pair_mutually_acceptable():
    p = PreferenceProfile.from_lists([[0, 1], [1, 0]], [[0, 1, 2]])
    assert not is_pareto_efficient(empty_matching(2, 1), p)


@settings(max_examples=60, deadline=None)
@given(profiles(max_n=3, max_m=3), st.integers(0, 2**32 - 1))
def test_pareto_matches_brute_force(pf, seed):
    profile, _ = pf
    ms = list(oracles.all_matchings(profile.n, profile.m))
    wp = ms[np.random.default_rng(seed).integers(len(ms))]
    M = np.array(oracles.matrix_from_dict(wp, profile.n, profile.m))
    assert is_pareto_efficient(M, profile) == (not oracles.pareto_dominated_brute(M, profile))


def test_pareto_size_guard(rng):
    p = PreferenceProfile.random(6, 2, rng)
    with pytest.raises(EnumerationLimitError):
        is_pareto_efficient(empty_matching(6, 2), p)


# ---------------------------------------------------------------- strategy-proofness

def test_sd_strategy_proof(rng):
    for _ in range(15):
        p = PreferenceProfile.random(3, 3, rng)
        ranking = rng.permutation(6)
        mech = lambda inst, prof: run_sd(prof, ranking)  # noqa: E731
        assert check_strategy_proofness(mech, dummy_instance(3, 3), p) == []


def test_da_has_a_profitable_firm_misreport(rng):
    mech = lambda inst, prof: deferred_acceptance(prof)  # noqa: E731
    found = []
    for _ in range(200):
        p = PreferenceProfile.random(3, 3, rng)
        found = check_strategy_proofness(mech, dummy_instance(3, 3), p, agents=range(3, 6))
        if found:
            break
    assert found, "no firm-side manipulation found"
    dev = found[0]
    assert dev.agent >= 3 and dev.misreport_payoff > dev.truthful_payoff


def test_strategy_proofness_size_guard(rng):
    p = PreferenceProfile.random(5, 5, rng)
    with pytest.raises(EnumerationLimitError):
        check_strategy_proofness(lambda i, q: run_sd(q, range(10)), dummy_instance(5, 5), p)

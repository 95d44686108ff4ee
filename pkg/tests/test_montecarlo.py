import math
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from pbcoin.bounds import budget_c_n
from pbcoin.core_math import psi_star
from pbcoin.montecarlo import (
    McConfig,
    block_rngs,
    boosting_floor,
    hoeffding_width,
    recommend_m,
    run_boosted_mc,
    run_maurer_mc,
    solve_block,
)
from pbcoin.optimizer import LOWER, UPPER, FiniteSupportProblem, solve_bound
from pbcoin.scenarios import gen_gaussian_erf, make_rng


def test_config_validation():
    assert McConfig.default(0.05, 10).K == 3
    McConfig(K=4, m=8, multiplier=2.1147, delta=0.05)
    for bad in (dict(K=0, m=8), dict(K=2, m=0), dict(K=2, m=8, multiplier=1.0),
                dict(K=2, m=8, delta=0.0), dict(K=2, m=8, multiplier=2.0, delta=0.05)):
        with pytest.raises(ValueError):
            McConfig(**bad)


def test_config_reports_every_error():
    with pytest.raises(ValueError) as info:
        McConfig(K=0, m=0, multiplier=0.5, delta=2.0)
    assert str(info.value).count(";") == 3


def test_boosting_floor_examples():
    assert boosting_floor([1, 2, 4, 8], 2.0) == 0.5
    assert boosting_floor([0.3] * 5, 3.0) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        boosting_floor([1.0], 1.0)
    with pytest.raises(ValueError):
        boosting_floor([], 2.0)
    with pytest.raises(ValueError):
        boosting_floor([-1.0], 2.0)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.0, 1e6), min_size=1, max_size=20), st.floats(1.0001, 100.0))
def test_boosting_floor_below_every_block(vals, C):
    floor = boosting_floor(vals, C)
    assert floor >= 0
    assert all(floor <= v / C for v in vals)


def test_boosting_floor_coverage():
    # the floor under-estimates the psi* integral with probability >= 1 - C**-K
    inst = gen_gaussian_erf(32, 3)
    sampler = inst.sampler
    sd = 0.5
    grid = np.linspace(-6 * sd, 6 * sd, 4001)
    psi = np.array([psi_star(row, 0.5).value for row in sampler.loss_eval(grid)])
    dens = np.exp(-0.5 * (grid / sd) ** 2) / (sd * math.sqrt(2 * math.pi))
    truth = float(np.sum(0.5 * (psi[1:] * dens[1:] + psi[:-1] * dens[:-1]) * np.diff(grid)))

    K, m, C = 3, 16, math.e
    hits = 0
    for rep in range(500):
        blocks = []
        for rng in block_rngs([rep], K):
            rows = sampler.loss_eval(sampler.draw(rng, m))
            blocks.append(np.mean([psi_star(r, 0.5).value for r in rows]))
        hits += boosting_floor(blocks, C) <= truth
    assert hits / 500 >= 1 - C**-K


def test_recommend_m_examples():
    # mean 1 and second moment 4
    assert recommend_m([0.0, 0.0, 0.0, 4.0], 0.05, 0.5) == 96
    # constant pilot: second moment equals mean squared
    assert recommend_m([0.7] * 9, 0.05, 0.5) == math.ceil(2 * math.log(20) / 0.25)
    assert recommend_m([0.0, 0.0], 0.05, 0.5) == sys.maxsize
    with pytest.raises(ValueError):
        recommend_m([], 0.05, 0.5)
    with pytest.raises(ValueError):
        recommend_m([1.0], 0.05, 1.5)
    with pytest.raises(ValueError):
        recommend_m([-1.0], 0.05, 0.5)


def test_recommend_m_scales_with_second_moment():
    a = [0.0, 2.0]  # mean 1, second moment 2
    b = [0.0] * 7 + [8.0]  # mean 1, second moment 8
    ma, mb = recommend_m(a, 0.01, 0.1), recommend_m(b, 0.01, 0.1)
    assert ma == math.ceil(2 * math.log(100) * 2 / 0.01)
    assert abs(mb - 4 * ma) <= 4


def test_hoeffding_width_example():
    assert hoeffding_width(1024, 0.05) == pytest.approx(oracles.HOEFFDING_1024, rel=1e-14)


@pytest.fixture(scope="module")
def gaussian():
    return gen_gaussian_erf(32, [7, 0])


def test_boosted_mc_reproducible_and_ordered(gaussian):
    cfg = McConfig(K=4, m=32, multiplier=2.1147, delta=0.05)
    a = run_boosted_mc(gaussian.sampler, 32, cfg, [7, 1])
    b = run_boosted_mc(gaussian.sampler, 32, cfg, [7, 1])
    assert (a.lower, a.upper) == (b.lower, b.upper)
    d = a.diagnostics
    assert 0.0 <= a.lower <= min(d["nu_lower"]) <= max(d["nu_upper"]) <= a.upper <= 1.0
    assert d["nu_lower"][d["k_lower"]] == min(d["nu_lower"])
    assert d["nu_upper"][d["k_upper"]] == max(d["nu_upper"])
    assert d["kl_budget"] == pytest.approx(math.log(4 / 0.1) / 32)
    assert d["confidence"] == pytest.approx(0.85)


def test_boosted_mc_rejects_length_mismatch(gaussian):
    with pytest.raises(ValueError):
        run_boosted_mc(gaussian.sampler, 31, McConfig.default(0.05, 4), 0)


def test_single_block_matches_finite_solve(gaussian):
    # K=1, C near 1 and no kl widening: the output is the finite program on the sampled atoms
    C = 1.0 + 1e-12
    cfg = McConfig(K=1, m=24, multiplier=C, delta=1.0)
    ci = run_boosted_mc(gaussian.sampler, 32, cfg, 11, kl_correction=False)
    rng = block_rngs(11, 1)[0]
    losses = gaussian.sampler.loss_eval(gaussian.sampler.draw(rng, 24))
    prob = FiniteSupportProblem(np.full(24, 1 / 24), losses,
                                C * budget_c_n(32, gaussian.kl_post_prior))
    # the block value is an unweighted mean, so allow summation-order rounding
    assert ci.upper == pytest.approx(solve_bound(prob, UPPER).value, abs=1e-14)
    assert ci.lower == pytest.approx(solve_bound(prob, LOWER).value, abs=1e-14)


def test_solve_block_average_and_feasibility(gaussian):
    losses = gaussian.sampler.loss_eval(gaussian.sampler.draw(make_rng(3), 16))
    for direction in (UPPER, LOWER):
        res = solve_block(losses, 2.0, 1.0, direction)
        assert res.feasible
        assert res.nu_bar == pytest.approx(float(np.mean(res.mu_assignment)), abs=1e-15)
    # zero budget keeps the empirical means
    res = solve_block(losses, 0.0, 2.0, UPPER)
    assert res.nu_bar == pytest.approx(float(losses.mean()))


def test_block_streams_independent_of_k():
    a = [r.random(3) for r in block_rngs(5, 2)]
    b = [r.random(3) for r in block_rngs(5, 4)]
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
    assert not np.array_equal(b[0], b[1])


def test_maurer_mc(gaussian):
    M = 4 * 64
    ci = run_maurer_mc(gaussian.sampler, 32, M, 0.05, [7, 2])
    again = run_maurer_mc(gaussian.sampler, 32, M, 0.05, [7, 2])
    assert (ci.lower, ci.upper) == (again.lower, again.upper)
    d = ci.diagnostics
    assert d["mc_width"] == hoeffding_width(M, 0.05)
    assert d["kl_budget"] == pytest.approx(
        (budget_c_n(32, gaussian.kl_post_prior) + math.log(40)) / 32)
    assert 0.0 <= ci.lower <= d["mu_hat"] - d["mc_width"] <= d["mu_hat"] + d["mc_width"] <= ci.upper
    with pytest.raises(ValueError):
        run_maurer_mc(gaussian.sampler, 32, 0, 0.05, 0)


def test_width_shrinks_with_m():
    cfg_small = McConfig(K=4, m=2, multiplier=2.1147, delta=0.05)
    cfg_big = McConfig(K=4, m=1024, multiplier=2.1147, delta=0.05)
    small, big = [], []
    for seed in range(5):
        inst = gen_gaussian_erf(32, [seed, 0])
        small.append(run_boosted_mc(inst.sampler, 32, cfg_small, [seed, 1]).width)
        big.append(run_boosted_mc(inst.sampler, 32, cfg_big, [seed, 1]).width)
    assert np.median(big) < np.median(small)


def test_coverage_at_default_level():
    # K = 3 and C = e at delta = 0.05: nominal coverage 1 - 3 delta
    cfg = McConfig.default(0.05, 32)
    covered = 0
    for seed in range(200):
        inst = gen_gaussian_erf(32, [seed, 0])
        ci = run_boosted_mc(inst.sampler, 32, cfg, [seed, 1])
        covered += ci.contains(inst.true_integral)
    assert covered / 200 >= 0.85

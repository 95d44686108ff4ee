import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from pbcoin.core_math import psi_star
from pbcoin.scenarios import (
    BERNOULLI,
    BINOMIAL_ERF,
    GAUSSIAN_ERF,
    erf,
    erf_loss,
    gaussian_kl,
    gen_bernoulli,
    gen_binomial_erf,
    gen_gaussian_erf,
    generate,
    make_rng,
)


def _same_instance(a, b):
    assert a.true_integral == b.true_integral
    assert a.kl_post_prior == b.kl_post_prior
    np.testing.assert_array_equal(a.data, b.data)
    if a.is_finite:
        np.testing.assert_array_equal(a.losses, b.losses)
        np.testing.assert_array_equal(a.weights, b.weights)


@pytest.mark.parametrize("kind", [BERNOULLI, BINOMIAL_ERF, GAUSSIAN_ERF])
def test_deterministic(kind):
    _same_instance(generate(kind, 50, 123), generate(kind, 50, 123))
    assert not np.array_equal(generate(kind, 50, 123).data, generate(kind, 50, 124).data)


@pytest.mark.parametrize("kind", [BERNOULLI, BINOMIAL_ERF, GAUSSIAN_ERF])
def test_prefixes_are_nested(kind):
    short, long = generate(kind, 16, 9), generate(kind, 64, 9)
    np.testing.assert_array_equal(short.data, long.data[:16])
    if short.is_finite:
        np.testing.assert_array_equal(short.losses, long.losses[:, :16])


@settings(max_examples=50, deadline=None)
@given(st.sampled_from([BERNOULLI, BINOMIAL_ERF, GAUSSIAN_ERF]), st.integers(1, 300),
       st.integers(0, 2**64 - 1))
def test_losses_in_unit_interval(kind, n, seed):
    inst = generate(kind, n, seed)
    if inst.is_finite:
        losses = inst.losses
    else:
        sampler = inst.sampler
        losses = sampler.loss_eval(sampler.draw(make_rng(seed), 20))
    assert losses.shape[1] == n
    assert np.all((losses >= 0) & (losses <= 1))


def test_bernoulli_scenario():
    inst = gen_bernoulli(40, 1)
    assert inst.true_integral == pytest.approx(0.45, abs=1e-15)
    np.testing.assert_array_equal(inst.true_means, [0.0, 0.5])
    assert np.all(inst.losses[0] == 0.0)
    np.testing.assert_array_equal(inst.losses[1], inst.data)
    assert set(np.unique(inst.data)) <= {0.0, 1.0}
    assert psi_star(inst.losses[0], 0.0).value == 0.0
    assert inst.kl_post_prior == pytest.approx(oracles.BERNOULLI_PRIOR_KL, rel=1e-12)


def test_binomial_scenario():
    inst = gen_binomial_erf(40, 2)
    assert inst.losses.shape == (7, 40)
    assert inst.true_integral == 0.5
    np.testing.assert_array_equal(inst.true_means, np.full(7, 0.5))
    np.testing.assert_allclose(inst.atoms, (np.arange(7) - 3) / 4)
    assert inst.weights.sum() == pytest.approx(1.0, abs=1e-15)
    # the zero atom sees erf(0) = 0 for every sample
    assert np.all(inst.losses[3] == 0.5)
    assert inst.kl_post_prior == pytest.approx(oracles.BINOMIAL_PRIOR_KL, abs=1e-12)


def test_gaussian_scenario():
    inst = gen_gaussian_erf(32, 5)
    assert inst.true_integral == 0.5
    assert inst.kl_post_prior == pytest.approx(oracles.GAUSSIAN_PRIOR_KL, rel=1e-12)
    assert gaussian_kl(1.0) == 0.0
    with pytest.raises(ValueError):
        gen_gaussian_erf(32, 5, post_var=0.0)


def test_gaussian_posterior_variance():
    draws = gen_gaussian_erf(8, 0).sampler.draw(make_rng(77), 10**5)
    # variance of the sample variance of a normal: 2 sigma^4 / (N - 1)
    se = math.sqrt(2 * 0.25**2 / (10**5 - 1))
    assert abs(draws.var(ddof=1) - 0.25) <= 3 * se
    assert abs(draws.mean()) <= 3 * math.sqrt(0.25 / 10**5)


def test_erf_values():
    assert erf(0.0) == 0.0
    assert erf(1.0) == pytest.approx(oracles.ERF_1, abs=1e-7)
    x = np.linspace(-4, 4, 81)
    np.testing.assert_array_equal(erf(-x), -erf(x))


def test_erf_loss_grid():
    z = erf_loss([0.0, 1.0, -1.0], [0.0, 2.0])
    assert z.shape == (2, 3)
    np.testing.assert_array_equal(z[0], [0.5, 0.5, 0.5])
    assert z[1, 1] + z[1, 2] == pytest.approx(1.0, abs=1e-15)


def test_bernoulli_means_converge():
    n = 2**15
    for seed in range(20):
        inst = gen_bernoulli(n, seed)
        assert np.all(np.abs(inst.losses.mean(axis=1) - inst.true_means) <= 0.02)


def test_binomial_atom_means_concentrate():
    inst = gen_binomial_erf(2**14, 3)
    assert np.all(np.abs(inst.losses.mean(axis=1) - 0.5) <= 0.02)


def test_finite_posterior_sampler_draws_atoms():
    inst = gen_binomial_erf(12, 4)
    sampler = inst.posterior_sampler()
    idx = sampler.draw(make_rng(0), 20000)
    freq = np.bincount(idx, minlength=7) / idx.size
    np.testing.assert_allclose(freq, inst.weights, atol=0.015)
    np.testing.assert_array_equal(sampler.loss_eval(idx[:3]), inst.losses[idx[:3]])


def test_generator_validation():
    with pytest.raises(ValueError):
        generate("nope", 4, 0)
    for gen in (gen_bernoulli, gen_binomial_erf, gen_gaussian_erf):
        with pytest.raises(ValueError):
            gen(0, 0)

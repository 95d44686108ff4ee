"""Seeded synthetic scenarios with known ground-truth means.

Random numbers come from numpy's PCG64 generator seeded through
``SeedSequence``; Gaussian variates use numpy's ziggurat sampler. Data are
drawn sequentially, so the same seed with a larger ``n`` extends the sample
(prefixes are nested).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special

from .core_math import DiscreteDistribution, discrete_kl

BERNOULLI = "bernoulli_x_theta"
BINOMIAL_ERF = "binomial_erf"
GAUSSIAN_ERF = "gaussian_erf"
SCENARIO_KINDS = (BERNOULLI, BINOMIAL_ERF, GAUSSIAN_ERF)


def erf(x):
    """Gaussian error function (scalar or array)."""
    return special.erf(x)


def erf_loss(x, theta):
    """(erf(x * theta) + 1) / 2 on the outer grid theta x x."""
    z = np.multiply.outer(np.asarray(theta, dtype=float), np.asarray(x, dtype=float))
    return np.clip(0.5 * (special.erf(z) + 1.0), 0.0, 1.0)


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


@dataclass
class ParamSampler:
    """Samplable posterior over parameters for a fixed data sample.

    ``draw(rng, size)`` returns ``size`` parameter atoms; ``loss_eval(atoms)``
    maps them to a (size, n) loss matrix.
    """

    draw: Callable[[np.random.Generator, int], np.ndarray]
    loss_eval: Callable[[np.ndarray], np.ndarray]
    kl_post_prior: float
    n: int


@dataclass
class ScenarioInstance:
    kind: str
    n: int
    seed: object
    true_integral: float
    kl_post_prior: float
    # finite scenarios
    weights: np.ndarray | None = None
    losses: np.ndarray | None = None
    atoms: np.ndarray | None = None
    true_means: np.ndarray | None = None
    prior: np.ndarray | None = None
    # continuous scenarios
    sampler: ParamSampler | None = None
    data: np.ndarray | None = field(default=None, repr=False)

    @property
    def is_finite(self) -> bool:
        return self.losses is not None

    def posterior_sampler(self) -> ParamSampler:
        """A sampler over the posterior; finite scenarios draw atom indices."""
        if self.sampler is not None:
            return self.sampler
        weights, losses = self.weights, self.losses

        def draw(rng, size):
            return rng.choice(weights.size, size=size, p=weights)

        return ParamSampler(draw, lambda idx: losses[np.asarray(idx)], self.kl_post_prior, self.n)


def gen_bernoulli(n: int, seed, p_data: float = 0.5, prior_p: float = 0.8,
                  post_p: float = 0.9) -> ScenarioInstance:
    """X ~ Bernoulli(p_data), theta in {0, 1}, f(x, theta) = x * theta."""
    if n < 1:
        raise ValueError("n must be >= 1")
    x = (make_rng(seed).random(n) < p_data).astype(float)
    atoms = np.array([0.0, 1.0])
    losses = np.outer(atoms, x)
    post = DiscreteDistribution((0, 1), (1 - post_p, post_p))
    prior = DiscreteDistribution((0, 1), (1 - prior_p, prior_p))
    true_means = atoms * p_data
    weights = post.weights
    return ScenarioInstance(
        kind=BERNOULLI, n=n, seed=seed,
        true_integral=float(weights @ true_means),
        kl_post_prior=discrete_kl(post, prior),
        weights=weights, losses=losses, atoms=atoms, true_means=true_means,
        prior=prior.weights, data=x,
    )


def binomial_pmf(k: int, trials: int, p: float) -> float:
    return math.comb(trials, k) * p**k * (1 - p) ** (trials - k)


def gen_binomial_erf(n: int, seed, trials: int = 6, prior_p: float = 0.7,
                     post_p: float = 0.8) -> ScenarioInstance:
    """X ~ N(0, 1); theta = (k - 3)/4 with k binomial; f = (erf(x theta) + 1)/2.

    Every atom has true mean 1/2 because erf is odd and X is symmetric.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    x = make_rng(seed).standard_normal(n)
    ks = tuple(range(trials + 1))
    atoms = (np.array(ks, dtype=float) - trials / 2) / 4
    post = DiscreteDistribution(ks, tuple(binomial_pmf(k, trials, post_p) for k in ks))
    prior = DiscreteDistribution(ks, tuple(binomial_pmf(k, trials, prior_p) for k in ks))
    return ScenarioInstance(
        kind=BINOMIAL_ERF, n=n, seed=seed, true_integral=0.5,
        kl_post_prior=discrete_kl(post, prior),
        weights=post.weights, losses=erf_loss(x, atoms), atoms=atoms,
        true_means=np.full(atoms.size, 0.5), prior=prior.weights, data=x,
    )


def gaussian_kl(post_var: float, prior_var: float = 1.0) -> float:
    """KL(N(0, post_var) || N(0, prior_var))."""
    r = post_var / prior_var
    return 0.5 * (r - 1.0 - math.log(r))


def gen_gaussian_erf(n: int, seed, post_var: float = 0.25) -> ScenarioInstance:
    """X ~ N(0, 1); posterior N(0, post_var), prior N(0, 1); erf loss."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not post_var > 0:
        raise ValueError("post_var must be positive")
    x = make_rng(seed).standard_normal(n)
    sd = math.sqrt(post_var)

    def draw(rng, size):
        return sd * rng.standard_normal(size)

    sampler = ParamSampler(draw, lambda th: erf_loss(x, th), gaussian_kl(post_var), n)
    return ScenarioInstance(kind=GAUSSIAN_ERF, n=n, seed=seed, true_integral=0.5,
                            kl_post_prior=sampler.kl_post_prior, sampler=sampler, data=x)


GENERATORS = {
    BERNOULLI: gen_bernoulli,
    BINOMIAL_ERF: gen_binomial_erf,
    GAUSSIAN_ERF: gen_gaussian_erf,
}


def generate(kind: str, n: int, seed, **params) -> ScenarioInstance:
    try:
        gen = GENERATORS[kind]
    except KeyError:
        raise ValueError(f"unknown scenario kind {kind!r}") from None
    return gen(n, seed, **params)

"""Monte Carlo confidence intervals for samplable (continuous) posteriors."""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass

import numpy as np

from .bounds import ConfidenceInterval, budget_c_n
from .core_math import DEFAULT_TOL, SolverTolerances, kl_lower_inverse, kl_upper_inverse
from .optimizer import COIN_BETTING, LOWER, UPPER, FiniteSupportProblem, solve_bound
from .scenarios import ParamSampler

# relative slack on C**-K <= delta, so the rounded multiplier 2.1147 (for 20**(1/4))
# passes at K=4, delta=0.05
_BOOST_SLACK = 1e-4


@dataclass(frozen=True)
class McConfig:
    K: int
    m: int
    multiplier: float = math.e
    delta: float = 0.05

    def __post_init__(self):
        errors = self.validate()
        if errors:
            raise ValueError("; ".join(errors))

    def validate(self) -> list[str]:
        errors = []
        if self.K < 1:
            errors.append("K must be >= 1")
        if self.m < 1:
            errors.append("m must be >= 1")
        if not self.multiplier > 1:
            errors.append("multiplier must be > 1")
        if not 0 < self.delta <= 1:
            errors.append("delta must lie in (0, 1]")
        if not errors and self.failure_mass > self.delta * (1 + _BOOST_SLACK):
            errors.append(
                f"multiplier**-K = {self.failure_mass:.6g} exceeds delta = {self.delta}"
            )
        return errors

    @property
    def failure_mass(self) -> float:
        return self.multiplier ** (-self.K)

    @classmethod
    def default(cls, delta: float, m: int) -> "McConfig":
        """K = ceil(ln(1/delta)) with multiplier e."""
        return cls(K=max(1, math.ceil(math.log(1.0 / delta))), m=m, multiplier=math.e,
                   delta=delta)


@dataclass(frozen=True)
class BlockResult:
    nu_bar: float
    mu_assignment: np.ndarray
    feasible: bool


def block_rngs(seed, K: int) -> list[np.random.Generator]:
    """One independent stream per block, split from the master seed."""
    children = np.random.SeedSequence(seed).spawn(K)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def solve_block(losses: np.ndarray, budget: float, multiplier: float, direction: str,
                tol: SolverTolerances = DEFAULT_TOL) -> BlockResult:
    """max/min of the block average subject to mean psi* <= multiplier * budget."""
    m = losses.shape[0]
    prob = FiniteSupportProblem(np.full(m, 1.0 / m), losses, multiplier * budget, COIN_BETTING)
    sol = solve_bound(prob, direction, tol)
    return BlockResult(float(np.mean(sol.mu)), sol.mu, True)


def boosting_floor(psi_block_means, C: float) -> float:
    """min_k (block mean)/C, a lower bound on the psi* integral w.p. 1 - C**-K."""
    if not C > 1:
        raise ValueError("C must be > 1")
    vals = np.asarray(psi_block_means, dtype=float)
    if vals.size == 0 or np.any(vals < 0):
        raise ValueError("block means must be a non-empty sequence of nonnegative reals")
    return float(vals.min() / C)


def run_boosted_mc(sampler: ParamSampler, n: int, cfg: McConfig, seed,
                   tol: SolverTolerances = DEFAULT_TOL,
                   kl_correction: bool = True) -> ConfidenceInterval:
    """Boosted Monte Carlo inversion of the coin-betting constraint.

    Each of the K blocks draws m parameters, solves the finite program with
    the budget inflated by the multiplier, and the extreme block values are
    widened by a kl inversion at level ln(K / (2 delta)) / m. The interval
    holds with probability at least 1 - 3 delta when multiplier**-K <= delta.
    """
    if sampler.n != n:
        raise ValueError("sampler loss vectors must have length n")
    budget = budget_c_n(n, sampler.kl_post_prior) + math.log(1.0 / cfg.delta)
    nu_u, nu_l = [], []
    for rng in block_rngs(seed, cfg.K):
        losses = sampler.loss_eval(sampler.draw(rng, cfg.m))
        nu_u.append(solve_block(losses, budget, cfg.multiplier, UPPER, tol).nu_bar)
        nu_l.append(solve_block(losses, budget, cfg.multiplier, LOWER, tol).nu_bar)
    k_u = int(np.argmax(nu_u))
    k_l = int(np.argmin(nu_l))
    top, bottom = nu_u[k_u], nu_l[k_l]
    width_budget = math.log(cfg.K / (2.0 * cfg.delta)) / cfg.m
    if kl_correction:
        upper = kl_upper_inverse(top, max(width_budget, 0.0))
        lower = kl_lower_inverse(bottom, max(width_budget, 0.0))
    else:
        upper, lower = top, bottom
    return ConfidenceInterval(
        min(lower, upper), upper, "mc_algorithm1", n, cfg.delta,
        {"nu_upper": nu_u, "nu_lower": nu_l, "k_upper": k_u, "k_lower": k_l,
         "kl_budget": width_budget, "confidence": 1.0 - 3.0 * cfg.delta},
    )


def hoeffding_width(M: int, delta: float) -> float:
    """sqrt(ln(2/delta) / (2M)), the two-sided Monte Carlo slack."""
    return math.sqrt(math.log(2.0 / delta) / (2.0 * M))


def run_maurer_mc(sampler: ParamSampler, n: int, M: int, delta: float, seed) -> ConfidenceInterval:
    """Maurer-style interval from M posterior draws, widened for Monte Carlo error."""
    if M < 1:
        raise ValueError("M must be >= 1")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    losses = sampler.loss_eval(sampler.draw(rng, M))
    mu_hat = float(losses.mean())
    w = hoeffding_width(M, delta)
    k_u = min(max(mu_hat + w, 0.0), 1.0)
    k_l = min(max(mu_hat - w, 0.0), 1.0)
    c = (budget_c_n(n, sampler.kl_post_prior) + math.log(2.0 / delta)) / n
    return ConfidenceInterval(kl_lower_inverse(k_l, c), kl_upper_inverse(k_u, c), "maurer_mc",
                              n, delta, {"mu_hat": mu_hat, "mc_width": w, "kl_budget": c})


def recommend_m(psi_samples, delta: float, target_ratio: float) -> int:
    """Smallest m with sqrt(2 ln(1/delta) E[psi^2] / m) <= target_ratio * E[psi].

    Moments are estimated from a pilot sample. Returns ``sys.maxsize`` when
    the estimated mean is zero.
    """
    x = np.asarray(psi_samples, dtype=float)
    if x.size == 0 or np.any(x < 0):
        raise ValueError("pilot samples must be a non-empty sequence of nonnegative reals")
    if not 0 < target_ratio < 1:
        raise ValueError("target_ratio must lie in (0, 1)")
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    mean = float(x.mean())
    if mean == 0.0:
        return sys.maxsize
    second = float(np.mean(x * x))
    m = 2.0 * math.log(1.0 / delta) * second / (target_ratio * mean) ** 2
    return max(1, math.ceil(m - 1e-9 * m))

"""Closed-form PAC-Bayes intervals for a posterior-averaged mean.

Every interval here is a relaxation of the coin-betting event, so they may be
intersected at a common confidence level without splitting it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core_math import kl_lower_inverse, kl_upper_inverse, regret_budget

# slack on the variance bound of [0, 1] data
_VAR_SLACK = 1e-9


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    method: str
    n: int
    delta: float
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (0.0 <= self.lower <= self.upper <= 1.0):
            raise ValueError(
                f"invalid interval [{self.lower}, {self.upper}] from {self.method}"
            )

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, x: float) -> bool:
        return self.lower <= x <= self.upper


def clipped_interval(center_lo: float, center_hi: float, method: str, n: int, delta: float,
                     **diagnostics) -> ConfidenceInterval:
    """Clip raw endpoints to [0, 1], keeping the raw values in diagnostics."""
    diagnostics.setdefault("raw_lower", center_lo)
    diagnostics.setdefault("raw_upper", center_hi)
    lo = min(max(center_lo, 0.0), 1.0)
    hi = min(max(center_hi, 0.0), 1.0)
    return ConfidenceInterval(lo, hi, method, n, delta, diagnostics)


@dataclass(frozen=True)
class BoundInputs:
    n: int
    kl_post_prior: float
    delta: float
    mu_hat_bar: float
    v_hat: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not self.kl_post_prior >= 0:
            raise ValueError("kl_post_prior must be nonnegative")
        if not 0.0 < self.delta <= 1.0:
            raise ValueError("delta must lie in (0, 1]")
        if not 0.0 <= self.mu_hat_bar <= 1.0:
            raise ValueError("mu_hat_bar must lie in [0, 1]")
        if not 0.0 <= self.v_hat <= self.n / 4 + _VAR_SLACK:
            raise ValueError("v_hat must lie in [0, n/4]")

    @property
    def budget(self) -> float:
        """C_n + ln(1/delta)."""
        return budget_c_n(self.n, self.kl_post_prior) + math.log(1.0 / self.delta)


def bound_inputs(losses, weights, kl_post_prior: float, delta: float) -> BoundInputs:
    """Summarise a weighted loss matrix (atoms x samples) for the closed forms."""
    losses = np.asarray(losses, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if losses.ndim != 2 or losses.shape[0] != weights.shape[0]:
        raise ValueError("losses must be (atoms, n) and match weights")
    n = losses.shape[1]
    means = losses.mean(axis=1)
    var = ((losses - means[:, None]) ** 2).mean(axis=1)
    mu_bar = float(np.clip(weights @ means, 0.0, 1.0))
    return BoundInputs(n, float(kl_post_prior), float(delta), mu_bar, float(weights @ var))


def budget_c_n(n: int, kl_post_prior: float) -> float:
    """KL(P_n || P_0) plus the regret constant at n."""
    if kl_post_prior < 0:
        raise ValueError("kl_post_prior must be nonnegative")
    return kl_post_prior + regret_budget(n)


def mcallester_interval(inp: BoundInputs) -> ConfidenceInterval:
    half = 2.0 * math.sqrt(inp.budget / inp.n)
    return clipped_interval(inp.mu_hat_bar - half, inp.mu_hat_bar + half,
                            "mcallester", inp.n, inp.delta, half_width=half)


def _kl_interval(p: float, c: float, method: str, inp: BoundInputs) -> ConfidenceInterval:
    return ConfidenceInterval(kl_lower_inverse(p, c), kl_upper_inverse(p, c), method,
                              inp.n, inp.delta, {"kl_budget": c})


def maurer_relaxed_interval(inp: BoundInputs) -> ConfidenceInterval:
    """kl(mu_hat_bar, mu) <= (C_n + ln(1/delta)) / n, inverted on both sides."""
    return _kl_interval(inp.mu_hat_bar, inp.budget / inp.n, "maurer_relaxed", inp)


def maurer_original_interval(inp: BoundInputs) -> ConfidenceInterval:
    """Fixed-n baseline with the classical 2 sqrt(n) constant."""
    c = (inp.kl_post_prior + math.log(2.0 * math.sqrt(inp.n) / inp.delta)) / inp.n
    return _kl_interval(inp.mu_hat_bar, c, "maurer_original", inp)


def empirical_bernstein_interval(inp: BoundInputs) -> ConfidenceInterval:
    """Variance-adaptive interval; vacuous once C_{n,delta} >= n/2."""
    c = inp.budget
    n = inp.n
    den1 = math.sqrt(n) - 2.0 * c / math.sqrt(n)
    den2 = n - 2.0 * c
    if den1 <= 0.0 or den2 <= 0.0:
        return ConfidenceInterval(0.0, 1.0, "emp_bernstein", n, inp.delta,
                                  {"half_width": math.inf, "vacuous": True})
    half = math.sqrt(2.0 * c * inp.v_hat) / den1 + 2.0 * c / den2
    return clipped_interval(inp.mu_hat_bar - half, inp.mu_hat_bar + half,
                            "emp_bernstein", n, inp.delta, half_width=half)


def intersect_relaxations(inp: BoundInputs) -> ConfidenceInterval:
    parts = [mcallester_interval(inp), maurer_relaxed_interval(inp),
             empirical_bernstein_interval(inp)]
    lo = max(p.lower for p in parts)
    hi = min(p.upper for p in parts)
    return ConfidenceInterval(lo, hi, "intersection", inp.n, inp.delta,
                              {"parts": [p.method for p in parts]})

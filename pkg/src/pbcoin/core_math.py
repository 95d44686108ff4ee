"""Scalar kernels: log-wealth, optimal log-wealth, Bernoulli kl and its inverses.

All functions are pure. Losses are sequences of reals in [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class SolverError(RuntimeError):
    """A numerical solver failed to converge.

    ``bracket`` holds the last interval known to contain the solution.
    """

    def __init__(self, message: str, bracket: tuple[float, float] | None = None):
        super().__init__(message)
        self.bracket = bracket


class SchemaError(ValueError):
    """Inputs do not share the expected index set or shape."""


@dataclass(frozen=True)
class SolverTolerances:
    lambda_tol: float = 1e-10
    mu_tol: float = 1e-10
    budget_tol: float = 1e-9
    max_iters: int = 200
    # relative width at which the multiplier bisection stops
    multiplier_rtol: float = 1e-14

    def __post_init__(self):
        for name in ("lambda_tol", "mu_tol", "budget_tol", "multiplier_rtol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


DEFAULT_TOL = SolverTolerances()

_KL_BISECT_ITERS = 2000


@dataclass(frozen=True)
class PsiStarResult:
    value: float
    lambda_star: float
    iterations: int


def as_losses(losses: Sequence[float] | np.ndarray) -> np.ndarray:
    """Validate a loss vector and return it as a float array."""
    c = np.asarray(losses, dtype=float)
    if c.ndim != 1 or c.size < 1:
        raise ValueError("losses must be a non-empty 1-D sequence")
    if not np.all((c >= 0.0) & (c <= 1.0)):
        raise ValueError("losses must lie in [0, 1]")
    return c


def _check_mu(mu: float) -> float:
    mu = float(mu)
    if not 0.0 <= mu <= 1.0:
        raise ValueError(f"mu must lie in [0, 1], got {mu}")
    return mu


def log_wealth(losses, mu: float, lam: float) -> float:
    """Log of the wealth of a constant-fraction bettor.

    Returns ``sum(log(1 + lam * (c_i - mu)))``, or ``-inf`` as soon as one
    factor is non-positive.
    """
    c = as_losses(losses)
    mu = _check_mu(mu)
    factors = 1.0 + lam * (c - mu)
    if np.any(factors <= 0.0):
        return -math.inf
    return float(np.sum(np.log(factors)))


def _upward_bet(c: np.ndarray, mu: float, tol: SolverTolerances) -> tuple[float, float, int]:
    """Best upward bet as a fraction t of its range, lambda = t / mu.

    Works with q_i = mu + t (c_i - mu) = (1 - t) mu + t c_i, so nothing
    overflows for tiny ``mu``. Returns (value, t, iterations).
    """
    d = c - mu

    def deriv(t):
        # r*r can overflow for tiny mu; the bracket logic then bisects
        with np.errstate(over="ignore", divide="ignore"):
            q = mu + t * d
            r = d / q
            return float(np.sum(r)), -float(np.sum(r * r))

    def value(t):
        with np.errstate(over="ignore"):
            x = t * d / mu
        if np.all(np.isfinite(x)):
            return float(np.sum(np.log1p(x)))
        # ln((1 - t) + t c / mu) in log space, for mu so small that c / mu overflows
        with np.errstate(divide="ignore"):
            terms = np.logaddexp(math.log1p(-t) if t < 1 else -math.inf,
                                 math.log(t) + np.log(c) - math.log(mu))
        return float(np.sum(terms))

    # endpoint t = 1 is admissible unless some loss is 0
    if np.all(c > 0.0) and deriv(1.0)[0] >= 0.0:
        return value(1.0), 1.0, 0

    # invariant: derivative > 0 at lo, < 0 at hi
    lo, hi = 0.0, 1.0
    t = 0.0
    last_step = 1.0
    for it in range(1, tol.max_iters + 1):
        g, h = deriv(t)
        if g > 0.0:
            lo = max(lo, t)
        elif g < 0.0:
            hi = min(hi, t)
        else:
            break
        # an overflowed curvature gives a zero step, not convergence
        nxt = t - g / h if -math.inf < h < 0.0 else math.nan
        # bisect when Newton leaves the bracket or fails to halve its last step
        if not (lo <= nxt <= hi) or abs(nxt - t) > 0.5 * last_step:
            nxt = 0.5 * (lo + hi)
        last_step = abs(nxt - t)
        # tolerances are on the bet lambda = t / mu
        if abs(nxt - t) <= tol.lambda_tol * max(mu, t) or hi - lo <= tol.lambda_tol * mu:
            t = nxt
            break
        t = nxt
    else:
        raise SolverError("psi_star: bet search did not converge", (lo / mu, hi / mu))
    return max(value(t), 0.0), t, it


def psi_star(losses, mu: float, tol: SolverTolerances = DEFAULT_TOL) -> PsiStarResult:
    """Optimal log-wealth over bets in ``[-1/(1-mu), 1/mu]``.

    The objective is concave in the bet, so the maximiser is found by a
    bracketed Newton iteration on its derivative. An endpoint of the range is
    returned when the derivative keeps its sign up to it and the log-wealth
    there is finite. Downward bets are handled by mirroring c -> 1 - c.

    At ``mu`` in {0, 1} the range is unbounded on one side; the value is the
    limit of the supremum (0 for constant data equal to ``mu``, ``inf``
    otherwise).
    """
    c = as_losses(losses)
    mu = _check_mu(mu)
    if mu == 0.0:
        if np.all(c == 0.0):
            return PsiStarResult(0.0, 0.0, 0)
        return PsiStarResult(math.inf, math.inf, 0)
    if mu == 1.0:
        if np.all(c == 1.0):
            return PsiStarResult(0.0, 0.0, 0)
        return PsiStarResult(math.inf, -math.inf, 0)

    slope0 = float(np.sum(c - mu))
    if slope0 == 0.0:
        return PsiStarResult(0.0, 0.0, 0)
    if slope0 > 0.0:
        val, t, it = _upward_bet(c, mu, tol)
        return PsiStarResult(val, t / mu, it)
    val, t, it = _upward_bet(1.0 - c, 1.0 - mu, tol)
    return PsiStarResult(val, -t / (1.0 - mu), it)


def bernoulli_kl(p: float, q: float) -> float:
    """kl(p, q) = p ln(p/q) + (1-p) ln((1-p)/(1-q)), with 0 ln 0 = 0.

    Written with log1p of (p - q) ratios so it stays accurate when q is
    close to p, where the plain log form cancels.
    """
    if not (0.0 <= p <= 1.0 and 0.0 <= q <= 1.0):
        raise ValueError("p and q must lie in [0, 1]")
    diff = p - q
    out = 0.0
    if p > 0.0:
        if q == 0.0:
            return math.inf
        out += p * _log_ratio(p, q, diff)
    if p < 1.0:
        if q == 1.0:
            return math.inf
        out += (1.0 - p) * _log_ratio(1.0 - p, 1.0 - q, -diff)
    return max(out, 0.0)


def _log_ratio(a: float, b: float, a_minus_b: float) -> float:
    """ln(a / b), via log1p when a and b are close."""
    if abs(a_minus_b) < 0.5 * b:
        return math.log1p(a_minus_b / b)
    # separate logs: a / b can overflow for subnormal b
    return math.log(a) - math.log(b)


def kl_upper_inverse(p: float, c: float) -> float:
    """Largest mu in [p, 1] with kl(p, mu) <= c.

    Bisection runs until the bracket ends are adjacent doubles and returns the
    outer end, so the result never understates the inverse.
    """
    if c < 0:
        raise ValueError("budget c must be nonnegative")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if c == 0.0:
        return p
    if p == 1.0 or c == math.inf:
        return 1.0
    if p == 0.0:
        # kl(0, mu) = -ln(1 - mu) inverts in closed form; step out one ulp
        # if rounding landed inside
        mu = -math.expm1(-c)
        return mu if bernoulli_kl(0.0, mu) >= c else math.nextafter(mu, 1.0)
    # kl(p, mu) -> inf as mu -> 1 for p < 1, so the root is interior
    lo, hi = p, 1.0
    for _ in range(_KL_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        # stop once lo and hi are adjacent doubles
        if not lo < mid < hi:
            break
        if bernoulli_kl(p, mid) > c:
            hi = mid
        else:
            lo = mid
    # the outer end keeps the interval conservative
    return hi


def kl_lower_inverse(p: float, c: float) -> float:
    """Smallest mu in [0, p] with kl(p, mu) <= c."""
    if c < 0:
        raise ValueError("budget c must be nonnegative")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if c == 0.0:
        return p
    if p == 0.0 or c == math.inf:
        return 0.0
    if p == 1.0:
        mu = math.exp(-c)
        return mu if bernoulli_kl(1.0, mu) >= c else math.nextafter(mu, 0.0)
    lo, hi = 0.0, p
    for _ in range(_KL_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        if bernoulli_kl(p, mid) > c:
            lo = mid
        else:
            hi = mid
    return lo


# below this n the log-gamma difference is accurate; above it a Stirling
# difference avoids cancelling two large log-gammas
_STIRLING_FROM = 20

# Stirling series coefficients B_2k / (2k (2k - 1)), k = 1..6
_STIRLING = (1 / 12, -1 / 360, 1 / 1260, -1 / 1680, 1 / 1188, -691 / 360360)


def _stirling_tail(z: float) -> float:
    inv = 1.0 / z
    inv2 = inv * inv
    acc = 0.0
    for coef in reversed(_STIRLING):
        acc = acc * inv2 + coef
    return acc * inv


def regret_budget(n: int) -> float:
    """ln(sqrt(pi) * Gamma(n+1) / Gamma(n+1/2)), the regret constant at n."""
    if n < 1 or int(n) != n:
        raise ValueError("n must be a positive integer")
    n = int(n)
    if n == 1:
        return math.log(2.0)
    if n < _STIRLING_FROM:
        return 0.5 * math.log(math.pi) + math.lgamma(n + 1.0) - math.lgamma(n + 0.5)
    # ln G(n+1) - ln G(n+1/2) from Stirling's series, with the large terms
    # combined as n ln((n+1)/(n+1/2)) before they can cancel
    x = float(n)
    log_ratio = (x * math.log1p(0.5 / (x + 0.5)) + 0.5 * math.log(x + 1.0) - 0.5
                 + _stirling_tail(x + 1.0) - _stirling_tail(x + 0.5))
    return 0.5 * math.log(math.pi) + log_ratio


@dataclass(frozen=True)
class DiscreteDistribution:
    """Probability vector over a finite, labelled atom set."""

    atoms: tuple
    probs: tuple

    def __post_init__(self):
        if len(self.atoms) != len(self.probs) or not self.atoms:
            raise SchemaError("atoms and probs must be non-empty and of equal length")
        p = np.asarray(self.probs, dtype=float)
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("probs must be nonnegative and sum to 1")

    @property
    def weights(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)


def discrete_kl(posterior: DiscreteDistribution, prior: DiscreteDistribution) -> float:
    """KL(posterior || prior) over a shared finite support."""
    if tuple(posterior.atoms) != tuple(prior.atoms):
        raise SchemaError("posterior and prior must share the same atoms")
    total = 0.0
    for p, q in zip(posterior.probs, prior.probs):
        if p == 0.0:
            continue
        if q == 0.0:
            return math.inf
        total += p * math.log(p / q)
    return max(total, 0.0)

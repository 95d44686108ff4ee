"""Exact inversion of the coin-betting constraint on finite-support posteriors.

The program

    maximise   sum_t w_t mu_t
    subject to sum_t w_t g_t(mu_t) <= budget,   mu_t in [0, 1]

is solved by a bracketed search on the Lagrange multiplier ``eta``. Each g_t is convex,
so for fixed ``eta`` the problem splits into one concave scalar problem per
atom. For the coin-betting constraint, g_t'(mu) = -n * lambda*(mu), where
lambda*(mu) is the optimal bet, so every atom's stationarity condition asks
for the same bet ``-1 / (n * eta)``. Each inner solve is then a monotone
root-find in mu with the bet held fixed. The KL ablation has a closed-form
inner solution. Lower bounds run the same scheme with the direction reversed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bounds import ConfidenceInterval
from .core_math import DEFAULT_TOL, SolverError, SolverTolerances, bernoulli_kl, psi_star

COIN_BETTING = "coin_betting"
KL_VER = "kl_ver"
CONSTRAINT_KINDS = (COIN_BETTING, KL_VER)
UPPER = "upper"
LOWER = "lower"

# doubling/halving cap for the multiplier bracket
_MAX_DOUBLINGS = 60


@dataclass
class FiniteSupportProblem:
    """Weighted atoms, their loss rows, and the constraint budget.

    ``losses`` is an (atoms, n) array with entries in [0, 1].
    """

    weights: np.ndarray
    losses: np.ndarray
    budget: float
    constraint_kind: str = COIN_BETTING

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.losses = np.asarray(self.losses, dtype=float)
        if self.losses.ndim == 1:
            self.losses = self.losses[None, :]
        if self.weights.ndim != 1 or self.weights.size < 1:
            raise ValueError("weights must be a non-empty 1-D array")
        if self.losses.ndim != 2 or self.losses.shape[0] != self.weights.size:
            raise ValueError("losses must have one row per atom")
        if self.losses.shape[1] < 1:
            raise ValueError("loss rows must be non-empty")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1 within 1e-12")
        if not np.all((self.losses >= 0) & (self.losses <= 1)):
            raise ValueError("losses must lie in [0, 1]")
        if not self.budget >= 0:
            raise ValueError("budget must be nonnegative")
        if self.constraint_kind not in CONSTRAINT_KINDS:
            raise ValueError(f"unknown constraint kind {self.constraint_kind!r}")

    @property
    def n(self) -> int:
        return self.losses.shape[1]

    @property
    def empirical_means(self) -> np.ndarray:
        return self.losses.mean(axis=1)


@dataclass(frozen=True)
class BoundSolution:
    value: float
    mu: np.ndarray
    multiplier: float
    iterations: int


def _atom_term(losses: np.ndarray, mu: float, kind: str, tol: SolverTolerances) -> float:
    if kind == COIN_BETTING:
        return psi_star(losses, mu, tol).value
    return losses.size * bernoulli_kl(float(losses.mean()), float(mu))


def constraint_value(prob: FiniteSupportProblem, mu, tol: SolverTolerances = DEFAULT_TOL) -> float:
    """sum_t w_t g_t(mu_t), evaluated atom by atom from scratch."""
    mu = np.asarray(mu, dtype=float)
    if mu.shape != prob.weights.shape:
        raise ValueError("mu must have one entry per atom")
    if np.any((mu < 0) | (mu > 1)):
        raise ValueError("mu must lie in [0, 1]")
    total = 0.0
    for w, row, m in zip(prob.weights, prob.losses, mu):
        if w == 0.0:
            continue
        g = _atom_term(row, m, prob.constraint_kind, tol)
        if math.isinf(g):
            return math.inf
        total += w * g
    return total


# ---------------------------------------------------------------------------
# inner solves; s = n * eta is the scaled multiplier. ``sign`` is +1 when
# pushing means up and -1 when pushing them down. Working in the original
# coordinates keeps small means exact, which mirroring 1 - c would not.


def _coin_inner(losses: np.ndarray, means: np.ndarray, s: float, sign: int,
                tol: SolverTolerances):
    """Per-atom optimisers of sign * mu - eta * psi*(mu) on the far side of mu_hat.

    With d_i = sign * (c_i - mu), solves sum_i d_i / (1 + beta d_i) = 0 for
    mu, with the common bet beta = -1/s. The start point is where beta meets
    the end of the admissible bet range; before it the optimal bet is
    larger than beta.
    """
    beta = -1.0 / s
    a = np.maximum(means, 1.0 - s) if sign > 0 else np.minimum(means, s)
    mu = a.copy()

    def score(rows, x):
        # D(x) and dD/dx; D is infinite where some factor 1 + beta d <= 0
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            d = sign * (rows - x[:, None])
            den = 1.0 + beta * d
            ok = np.all(den > 0, axis=1)
            f = np.where(ok, (d / den).sum(axis=1), np.inf)
            fp = np.where(ok, -sign * (1.0 / den**2).sum(axis=1), -sign * np.inf)
        return f, fp

    f_a, _ = score(losses, a)
    active = f_a > 0.0
    if np.any(active):
        rows = losses[active]
        # D > 0 at pos and D < 0 at neg
        pos = a[active].copy()
        neg = np.full_like(pos, 1.0 if sign > 0 else 0.0)
        x = np.where(np.isfinite(f_a[active]), pos, 0.5 * (pos + neg))
        last = np.abs(neg - pos)
        # Newton steps after reaching mu_tol; quadratic convergence makes the
        # constraint value exact to rounding
        polish = 2
        for _ in range(tol.max_iters):
            f, fp = score(rows, x)
            pos = np.where(f > 0, x, pos)
            neg = np.where(f < 0, x, neg)
            with np.errstate(invalid="ignore"):
                nxt = x - f / fp
            # bisect when Newton leaves the bracket or fails to halve its last
            # step (it crawls near a pole of D); steps within mu_tol are polish
            bad = (~((nxt - pos) * (nxt - neg) <= 0)
                   | (np.abs(nxt - x) > np.maximum(0.5 * last, tol.mu_tol))
                   | ~np.isfinite(fp))
            nxt = np.where(bad, 0.5 * (pos + neg), nxt)
            nxt = np.where(f == 0, x, nxt)
            step = np.abs(nxt - x)
            last = np.where(bad, np.abs(neg - pos), step)
            x = nxt
            if np.all(step <= tol.mu_tol):
                # small steps alone can mislead near a pole: confirm a sign
                # change of D within mu_tol of x
                probe = np.clip(x + sign * np.sign(f) * tol.mu_tol,
                                np.minimum(pos, neg), np.maximum(pos, neg))
                f_probe, _ = score(rows, probe)
                open_ = ((np.sign(f_probe) == np.sign(f)) & (f != 0)
                         & (probe != pos) & (probe != neg))
                if np.any(open_):
                    pos = np.where(open_ & (f > 0), probe, pos)
                    neg = np.where(open_ & (f < 0), probe, neg)
                    x = np.where(open_, 0.5 * (pos + neg), x)
                    last = np.where(open_, np.abs(neg - pos), last)
                    polish = 2
                    continue
                polish -= 1
                if polish < 0:
                    break
        else:
            raise SolverError("inner mean solve did not converge",
                              (float(np.minimum(pos, neg).min()), float(np.maximum(pos, neg).max())))
        mu[active] = x

    with np.errstate(divide="ignore"):
        g = np.log1p(beta * sign * (losses - mu[:, None])).sum(axis=1)
    # atoms left at their empirical mean cost nothing; skip the rounding noise
    g = np.where(mu == means, 0.0, g)
    # a root within rounding of the end of [0, 1] lands on it, where the cost
    # is infinite unless the row is constant there; step back one ulp and
    # take the exact cost
    end = 1.0 if sign > 0 else 0.0
    for i in np.flatnonzero((mu == end) & np.any(losses != end, axis=1)):
        mu[i] = np.nextafter(end, 0.5)
        g[i] = psi_star(losses[i], float(mu[i]), tol).value
    return mu, np.maximum(g, 0.0)


def _log_ratio_vec(a: np.ndarray, b: np.ndarray, diff: np.ndarray) -> np.ndarray:
    """ln(a / b) given diff = a - b, via log1p when a and b are close."""
    with np.errstate(divide="ignore", invalid="ignore"):
        close = np.abs(diff) < 0.5 * b
        return np.where(close, np.log1p(diff / np.where(close, b, 1.0)), np.log(a) - np.log(b))


def _kl_vec(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Elementwise Bernoulli kl(p, q), computed as the scalar version is."""
    diff = p - q
    with np.errstate(invalid="ignore"):
        t1 = np.where(p > 0, p * _log_ratio_vec(p, q, diff), 0.0)
        t2 = np.where(p < 1, (1.0 - p) * _log_ratio_vec(1.0 - p, 1.0 - q, -diff), 0.0)
    return np.maximum(t1 + t2, 0.0)


# largest double below 1
_BELOW_ONE = 1.0 - 2.0**-53


def _kl_push_up(p: np.ndarray, p1: np.ndarray, s: float):
    """Closed-form maximiser of mu - (s / n) * n kl(p, mu), with p1 = 1 - p.

    Stationarity mu (1 - mu) = s (mu - p) is solved for the shift
    d = mu - p, which avoids cancelling large terms when s is large. When
    1 - mu would cancel in p1 - d it is recomputed from its own quadratic.
    Returns (mu, nu) with nu the complement of mu.
    """
    B = s - (p1 - p)
    R = p * p1
    root = np.sqrt(B * B + 4.0 * R)
    with np.errstate(invalid="ignore", divide="ignore"):
        d = np.where(B > 0, 2.0 * R / (B + root), 0.5 * (root - B))
    d = np.where(np.isfinite(d), d, 0.0)
    mu = np.minimum(p + d, 1.0)
    nu = p1 - d
    # nu^2 - (1 + s) nu + s p1 = 0, with (1 + s)^2 - 4 s p1 written without cancellation
    nu_root = 2.0 * s * p1 / ((1.0 + s) + np.sqrt((1.0 - s) ** 2 + 4.0 * s * p))
    cancel = nu < 0.5 * p1
    nu = np.clip(np.where(cancel, nu_root, nu), 0.0, 1.0)
    mu = np.where(cancel, 1.0 - nu, mu)
    return mu, nu


def _kl_inner(n: int, means: np.ndarray, s: float, sign: int):
    if sign > 0:
        mu, _ = _kl_push_up(means, 1.0 - means, s)
        mu = np.maximum(mu, means)
        # a mean below 1 has infinite cost at 1; stay one ulp short
        mu = np.where(means < 1.0, np.minimum(mu, _BELOW_ONE), mu)
    else:
        # push 1 - mu up; its complement is the original mean, kept exact
        _, mu = _kl_push_up(1.0 - means, means, s)
        mu = np.minimum(mu, means)
        mu = np.where(means > 0.0, np.maximum(mu, np.nextafter(0.0, 1.0)), mu)
    # evaluated exactly as the constraint is, from mu and 1 - mu
    return mu, n * _kl_vec(means, mu)


def _saturation_cost(losses: np.ndarray, means: np.ndarray, kind: str, end: float) -> np.ndarray:
    """g_t at the end of [0, 1]: zero for atoms already there, infinite otherwise."""
    if kind == COIN_BETTING:
        at_end = np.all(losses == end, axis=1)
    else:
        at_end = means == end
    return np.where(at_end, 0.0, np.inf)


def _solve(weights, losses, budget, kind, sign, tol):
    """Optimal means for the direction ``sign``, found by a bracketed search on s = n * eta."""
    n = losses.shape[1]
    means = losses.mean(axis=1)

    if budget == 0.0:
        return BoundSolution(float(weights @ means), means, math.inf, 0)
    end = 1.0 if sign > 0 else 0.0
    if float(weights @ _saturation_cost(losses, means, kind, end)) <= budget:
        return BoundSolution(end, np.full_like(means, end), 0.0, 0)

    def inner(s):
        if kind == COIN_BETTING:
            return _coin_inner(losses, means, s, sign, tol)
        return _kl_inner(n, means, s, sign)

    def total(s):
        mu, g = inner(s)
        return float(weights @ g), mu

    iters = 0
    s = 1.0
    G, mu = total(s)
    if G > budget:
        for _ in range(_MAX_DOUBLINGS):
            iters += 1
            s_lo, G_lo, s = s, G, 2.0 * s
            G, mu = total(s)
            if G <= budget:
                break
        else:
            # tiny budgets sit below the rounding noise of the constraint
            if G <= budget + tol.budget_tol:
                return BoundSolution(float(np.clip(weights @ mu, 0.0, 1.0)), mu, s / n, iters)
            raise SolverError("multiplier bracket not found", (s_lo / n, s / n))
        s_hi, G_hi, mu_hi = s, G, mu
    else:
        s_hi, G_hi, mu_hi = s, G, mu
        for _ in range(_MAX_DOUBLINGS):
            iters += 1
            s = 0.5 * s
            G, mu = total(s)
            if G > budget:
                s_lo, G_lo = s, G
                break
            s_hi, G_hi, mu_hi = s, G, mu
        else:
            # numerically saturated: every atom sits at the end up to rounding
            return BoundSolution(float(weights @ mu_hi), mu_hi, s_hi / n, iters)

    # G(s_lo) > budget >= G(s_hi); G is nonincreasing in s. Illinois steps on
    # ln s, with a bisection whenever two steps fail to halve the bracket.
    x_lo, x_hi = math.log(s_lo), math.log(s_hi)
    f_lo, f_hi = G_lo - budget, G_hi - budget
    side = 0
    width = x_hi - x_lo
    steps = 0
    while s_hi / s_lo - 1.0 > tol.multiplier_rtol:
        iters += 1
        steps += 1
        if steps > tol.max_iters:
            raise SolverError("multiplier search did not converge", (s_lo / n, s_hi / n))
        x = math.nan
        if math.isfinite(f_lo):
            x = x_hi - f_hi * (x_hi - x_lo) / (f_hi - f_lo)
        stalled = False
        if steps % 2 == 0:
            stalled = x_hi - x_lo > 0.5 * width
            width = x_hi - x_lo
        if stalled or not x_lo < x < x_hi or not s_lo < math.exp(x) < s_hi:
            x = 0.5 * (x_lo + x_hi)
        mid = math.exp(x)
        if not s_lo < mid < s_hi:
            # no representable multiplier left between the ends
            break
        G, mu = total(mid)
        if G > budget:
            s_lo, x_lo, f_lo = mid, x, G - budget
            if side == -1:
                f_hi *= 0.5
            side = -1
        else:
            s_hi, x_hi, f_hi, mu_hi = mid, x, G - budget, mu
            if side == 1 and math.isfinite(f_lo):
                f_lo *= 0.5
            side = 1
            if budget - G <= tol.budget_tol * 1e-6:
                break
    value = float(np.clip(weights @ mu_hi, 0.0, 1.0))
    return BoundSolution(value, mu_hi, s_hi / n, iters)


def solve_bound(prob: FiniteSupportProblem, direction: str = UPPER,
                tol: SolverTolerances = DEFAULT_TOL) -> BoundSolution:
    """Maximise (upper) or minimise (lower) the posterior mean over feasible means.

    Returns the optimal value, the per-atom means (zero-weight atoms report
    their empirical mean) and the Lagrange multiplier ``eta``.
    """
    if direction not in (UPPER, LOWER):
        raise ValueError(f"direction must be {UPPER!r} or {LOWER!r}")
    if prob.budget == 0.0:
        means = prob.empirical_means
        return BoundSolution(float(prob.weights @ means), means, math.inf, 0)
    keep = prob.weights > 0
    w = prob.weights[keep]
    w = w / w.sum()
    sign = 1 if direction == UPPER else -1
    sol = _solve(w, prob.losses[keep], float(prob.budget), prob.constraint_kind, sign, tol)

    mu_full = prob.empirical_means.copy()
    clamp = np.maximum if sign > 0 else np.minimum
    mu_full[keep] = clamp(sol.mu, mu_full[keep])
    return BoundSolution(float(np.clip(sol.value, 0.0, 1.0)), mu_full, sol.multiplier, sol.iterations)


def event_check(prob: FiniteSupportProblem, true_means,
                tol: SolverTolerances = DEFAULT_TOL) -> bool:
    """Whether the true per-atom means satisfy the constraint."""
    return constraint_value(prob, true_means, tol) <= prob.budget


def finite_interval(prob: FiniteSupportProblem, delta: float,
                    tol: SolverTolerances = DEFAULT_TOL) -> ConfidenceInterval:
    """[M_L, M_U] for the problem's constraint kind."""
    up = solve_bound(prob, UPPER, tol)
    lo = solve_bound(prob, LOWER, tol)
    lower = min(lo.value, up.value)
    return ConfidenceInterval(lower, up.value, prob.constraint_kind, prob.n, delta,
                              {"eta_upper": up.multiplier, "eta_lower": lo.multiplier})

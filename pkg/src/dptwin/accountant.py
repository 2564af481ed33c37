"""Rényi-DP accounting for the subsampled Gaussian mechanism.

Per-step Rényi bounds use the log-domain binomial expansion at integer orders
and stable numerical quadrature over the mixture densities at fractional
orders.  Composition is additive per order; conversion to (epsilon, delta)
offers the classic form eps = rdp + log(1/delta)/(alpha-1) and a tighter
variant, minimized over the order grid (optionally refined continuously).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize
from scipy.special import gammaln, logsumexp

__all__ = [
    "ALPHA_GRID",
    "PrivacySpec",
    "PrivacyLedger",
    "AccountantError",
    "rdp_subsampled_gaussian",
    "compose_and_convert",
    "calibrate_sigma",
    "delta_default",
]

ALPHA_GRID = (1.25, 1.5, 1.75, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0)

SIGMA_MAX_DEFAULT = 1e4


class AccountantError(ValueError):
    pass


def delta_default(n: int) -> float:
    """delta = 1 / (2 n) for a training set of n records."""
    if n < 1:
        raise AccountantError("dataset size must be >= 1")
    return 1.0 / (2.0 * n)


def _log_binom(a: int, k: int) -> float:
    return gammaln(a + 1) - gammaln(k + 1) - gammaln(a - k + 1)


def _rdp_integer(q: float, sigma: float, alpha: int) -> float:
    # log E_{x~N(0,s^2)} [((1-q) + q e^{(2x-1)/(2s^2)})^alpha] via binomial terms
    s2 = sigma * sigma
    terms = np.empty(alpha + 1)
    for k in range(alpha + 1):
        t = _log_binom(alpha, k) + k * (k - 1) / (2.0 * s2)
        if k > 0:
            t += k * math.log(q)
        if k < alpha:
            t += (alpha - k) * math.log1p(-q)
        terms[k] = t
    return float(logsumexp(terms)) / (alpha - 1)


def _rdp_fractional(q: float, sigma: float, alpha: float) -> float:
    # log-domain quadrature of  integral N(x;0,s^2) g(x)^alpha dx,
    # g(x) = (1-q) + q exp((2x-1)/(2 s^2))
    s2 = sigma * sigma
    log_q, log_1mq = math.log(q), math.log1p(-q)

    def phi(x: float) -> float:
        log_g = np.logaddexp(log_1mq, log_q + (2.0 * x - 1.0) / (2.0 * s2))
        log_pdf = -0.5 * x * x / s2 - 0.5 * math.log(2.0 * math.pi * s2)
        return alpha * log_g + log_pdf

    # the integrand peaks between 0 and roughly alpha; locate the max for shifting
    res = optimize.minimize_scalar(
        lambda x: -phi(x), bounds=(-10.0 * sigma, alpha + 10.0 * sigma), method="bounded"
    )
    peak = float(res.x)
    phi_max = phi(peak)
    # the shifted integrand decays at least as fast as a Gaussian around the peak
    lo = min(peak, 0.0) - 40.0 * sigma
    hi = max(peak, 1.0) + 40.0 * sigma
    val, _ = integrate.quad(
        lambda x: math.exp(phi(x) - phi_max),
        lo,
        hi,
        points=[0.0, peak, 1.0],
        limit=200,
    )
    return (phi_max + math.log(val)) / (alpha - 1.0)


def rdp_subsampled_gaussian(q: float, sigma: float, alpha: float) -> float:
    """Upper bound on the order-alpha Rényi divergence of one subsampled step."""
    if alpha <= 1:
        raise AccountantError("Rényi order alpha must be > 1")
    if not 0.0 <= q <= 1.0:
        raise AccountantError(f"sampling rate q={q} outside [0, 1]")
    if q == 0.0:
        return 0.0
    if sigma == 0.0:
        return math.inf
    if sigma < 0:
        raise AccountantError("sigma must be >= 0")
    if q == 1.0:
        return alpha / (2.0 * sigma * sigma)
    if abs(alpha - round(alpha)) < 1e-9:
        return _rdp_integer(q, sigma, int(round(alpha)))
    return _rdp_fractional(q, sigma, alpha)


def _eps_from_rdp(rdp: float, alpha: float, delta: float, conversion: str) -> float:
    if not math.isfinite(rdp):
        return math.inf
    if conversion == "simple":
        return rdp + math.log(1.0 / delta) / (alpha - 1.0)
    if conversion == "tight":
        # Balle et al. 2020 hypothesis-testing conversion
        eps = rdp + math.log((alpha - 1.0) / alpha) - (math.log(delta) + math.log(alpha)) / (
            alpha - 1.0
        )
        return max(eps, 0.0)
    raise AccountantError(f"unknown conversion {conversion!r}")


@dataclass
class PrivacySpec:
    """Target privacy budget and the mechanism schedule it governs."""

    epsilon: float
    delta: float
    n: int
    q: float
    steps: int

    def __post_init__(self):
        if self.epsilon <= 0:
            raise AccountantError("target epsilon must be > 0")
        if not 0.0 < self.delta < 1.0:
            raise AccountantError("delta must be in (0, 1)")
        if not 0.0 < self.q <= 1.0:
            raise AccountantError("q must be in (0, 1]")
        if self.steps < 0:
            raise AccountantError("steps must be >= 0")
        if self.n < 1:
            raise AccountantError("n must be >= 1")


@dataclass
class PrivacyLedger:
    """Append-only record of executed (sigma, q, steps) epochs with cached RDP."""

    entries: list[tuple[float, float, int]] = field(default_factory=list)
    _rdp_totals: dict[float, float] = field(default_factory=dict)

    def append(self, sigma: float, q: float, steps: int) -> None:
        if steps < 0:
            raise AccountantError("steps must be >= 0")
        if steps == 0:
            return
        self.entries.append((sigma, q, steps))
        for alpha in ALPHA_GRID:
            self._rdp_totals[alpha] = self._rdp_totals.get(alpha, 0.0) + steps * rdp_subsampled_gaussian(q, sigma, alpha)

    def total_rdp(self, alpha: float) -> float:
        if alpha in self._rdp_totals:
            return self._rdp_totals[alpha]
        return sum(
            steps * rdp_subsampled_gaussian(q, sigma, alpha)
            for sigma, q, steps in self.entries
        )

    @property
    def total_steps(self) -> int:
        return sum(s for _, _, s in self.entries)

    def spent_epsilon(self, delta: float, conversion: str = "simple", refine: bool = False) -> float:
        return compose_and_convert(self, delta, conversion=conversion, refine=refine)

    def snapshot(self, delta: float | None = None) -> dict:
        snap = {"entries": [list(e) for e in self.entries]}
        if delta is not None:
            snap["delta"] = delta
            snap["spent_epsilon"] = self.spent_epsilon(delta)
        return snap

    @classmethod
    def from_snapshot(cls, snap: dict) -> "PrivacyLedger":
        ledger = cls()
        for sigma, q, steps in snap.get("entries", []):
            ledger.append(sigma, q, int(steps))
        return ledger


def compose_and_convert(
    ledger: PrivacyLedger,
    delta: float,
    conversion: str = "simple",
    refine: bool = False,
) -> float:
    """Total spent epsilon at the given delta; 0 for an empty ledger.

    ``refine=True`` additionally optimizes the Rényi order continuously around
    the best grid point (the grid stays the cache granularity).
    """
    if not 0.0 < delta < 1.0:
        raise AccountantError("delta must be in (0, 1)")
    if not ledger.entries:
        return 0.0
    evals = {a: _eps_from_rdp(ledger.total_rdp(a), a, delta, conversion) for a in ALPHA_GRID}
    best_alpha = min(evals, key=lambda a: evals[a])
    best = evals[best_alpha]
    if refine and math.isfinite(best):
        grid = sorted(ALPHA_GRID)
        i = grid.index(best_alpha)
        lo = grid[i - 1] if i > 0 else 1.0 + 1e-6
        hi = grid[i + 1] if i + 1 < len(grid) else grid[-1] * 4.0

        def f(alpha: float) -> float:
            return _eps_from_rdp(ledger.total_rdp(alpha), alpha, delta, conversion)

        res = optimize.minimize_scalar(f, bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-4})
        if res.fun < best:
            best = float(res.fun)
    return best


def _ledger_for(sigma: float, spec: PrivacySpec) -> PrivacyLedger:
    ledger = PrivacyLedger()
    ledger.append(sigma, spec.q, spec.steps)
    return ledger


def calibrate_sigma(
    spec: PrivacySpec,
    sigma_max: float = SIGMA_MAX_DEFAULT,
    rel_tol: float = 1e-3,
    conversion: str = "simple",
    refine: bool = False,
) -> float:
    """Smallest noise multiplier meeting the (epsilon, delta) target over the plan."""
    if spec.steps == 0:
        raise AccountantError("cannot calibrate sigma for a plan with 0 steps")

    def eps_at(sigma: float) -> float:
        return compose_and_convert(_ledger_for(sigma, spec), spec.delta,
                                   conversion=conversion, refine=refine)

    if eps_at(sigma_max) > spec.epsilon:
        raise AccountantError(
            f"target epsilon={spec.epsilon} infeasible: even sigma={sigma_max} "
            f"spends {eps_at(sigma_max):.4g}"
        )
    lo = 1e-3
    while eps_at(lo) <= spec.epsilon:
        lo /= 4.0
        if lo < 1e-12:
            return lo  # target slack even with negligible noise
    hi = sigma_max
    # shrink hi towards lo before bisecting, for speed
    while hi / lo > 1.0 + rel_tol:
        mid = math.sqrt(lo * hi)
        if eps_at(mid) <= spec.epsilon:
            hi = mid
        else:
            lo = mid
    return hi

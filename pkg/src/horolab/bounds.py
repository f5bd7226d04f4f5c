"""Closed-form dimension bounds and exponent bookkeeping.

All formulas take the parameter tuple (alpha, beta, gamma, epsilon, kappa,
xi, rho): alpha the sub-divergence exponent, beta the sub-uniformity
dimension, gamma the mixing rate, epsilon the lacunarity, kappa and xi the
proof bookkeeping exponents, rho the time-change power.  Rates gamma >= 1
are accepted (the bounds use min{1, gamma}) with a warning.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class BoundParams:
    alpha: float
    beta: float
    gamma: float
    epsilon: float = 0.1
    kappa: float = 0.1
    xi: float = 0.0
    rho: float = 1.0

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "epsilon", "kappa", "rho"):
            if getattr(self, name) <= 0:
                raise DomainError(f"{name} must be positive")
        if self.xi < 0:
            raise DomainError("xi must be nonnegative")
        if self.gamma >= 1.0:
            warnings.warn(
                f"gamma = {self.gamma} >= 1: bounds clamp through min(1, gamma)",
                stacklevel=2,
            )


@dataclass(frozen=True)
class BoundResult:
    main_bound: float
    critical_eta: float
    intermediate: float
    time_change_bound: float
    sigma: float


def main_bound(p: BoundParams) -> float:
    """beta - min(1, gamma) / alpha."""
    return p.beta - min(1.0, p.gamma) / p.alpha


def teichmuller_bound(beta: float, gamma: float) -> float:
    """beta - gamma/2: the flow-specific case alpha = 2, gamma in (0, 1)."""
    if beta <= 0:
        raise DomainError("beta must be positive")
    if not 0.0 < gamma < 1.0:
        raise DomainError("gamma must lie in (0, 1)")
    return beta - gamma / 2.0


def critical_eta(p: BoundParams) -> float:
    """(alpha*beta + kappa*beta + 2*kappa + 2*xi - gamma) / (alpha + kappa)."""
    return (p.alpha * p.beta + p.kappa * p.beta + 2.0 * p.kappa + 2.0 * p.xi - p.gamma) / (
        p.alpha + p.kappa
    )


def time_change_bound(p: BoundParams) -> float:
    """beta - min(1, rho*gamma) / (rho*alpha); reduces to main_bound at rho = 1."""
    return p.beta - min(1.0, p.rho * p.gamma) / (p.rho * p.alpha)


def evaluate_bounds(p: BoundParams) -> BoundResult:
    mb = main_bound(p)
    return BoundResult(
        main_bound=mb,
        critical_eta=critical_eta(p),
        intermediate=(p.alpha * p.beta + p.kappa * p.beta + 2.0 * p.kappa - p.gamma)
        / (p.alpha + p.kappa),
        time_change_bound=time_change_bound(p),
        sigma=p.beta - mb,
    )


# ---------------------------------------------------------------------------
# Summability flip at the critical exponent
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SummabilityReport:
    eta: float
    exponent_rate: float
    log_partial_half: float
    log_partial_full: float
    converged: bool


def _log_partial_sum(c: float, m_max: int) -> float:
    """log of sum_{m=0}^{m_max} exp(c*m), computed stably."""
    m = np.arange(m_max + 1, dtype=float)
    terms = c * m
    peak = terms.max()
    return float(peak + np.log(np.sum(np.exp(terms - peak))))


def summability_check(p: BoundParams, eta: float, m_max: int = 10**4) -> SummabilityReport:
    """Partial-sum diagnostics for sum_m (1+eps)^((ab+kb+2k+2xi-g-(a+k)eta) m).

    The series converges exactly when the exponent rate is negative, i.e.
    when eta exceeds :func:`critical_eta`.  Convergence is decided by the
    growth of the log partial sum over the second half of the range: it is
    ~|rate|*m_max/2 on the divergent side and exponentially small on the
    convergent side, so the two regimes are separated by many orders of
    magnitude once |rate|*m_max is large.
    """
    rate = (
        p.alpha * p.beta + p.kappa * p.beta + 2.0 * p.kappa + 2.0 * p.xi - p.gamma
        - (p.alpha + p.kappa) * eta
    ) * math.log1p(p.epsilon)
    if abs(rate) * m_max < 10.0:
        raise DomainError(
            f"m_max = {m_max} cannot discriminate convergence at rate {rate:.3g}"
        )
    half = _log_partial_sum(rate, m_max // 2)
    full = _log_partial_sum(rate, m_max)
    converged = (full - half) < 0.01
    return SummabilityReport(eta, rate, half, full, converged)


def summability_flips_at_critical(p: BoundParams, delta: float = 0.01, m_max: int = 10**4) -> bool:
    """True when the series diverges at eta* - delta and converges at eta* + delta."""
    eta_star = critical_eta(p)
    below = summability_check(p, eta_star - delta, m_max)
    above = summability_check(p, eta_star + delta, m_max)
    return (not below.converged) and above.converged

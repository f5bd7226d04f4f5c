"""Orbit averages along the horocycle flow and the good/exceptional sets.

The time average A_T f(x) = (1/T) int_0^T f(u_t x) dt is computed by
composite midpoint quadrature along the exact flow, with a certified error
bound lip * speed * step: the integrand t -> f(u_t x) is Lipschitz with
constant lip_coord(f) times the coordinate speed bound of the flow on the
support of f, and f vanishes (is constant) whenever the orbit leaves that
box, so no chart-boundary jump can enter the bound.

Good/exceptional membership compares |A_T f| against the threshold T^-kappa
along the lacunary times T_m = (1+eps)^m; only finite-m indicators are
computable, and records whose margin is within the quadrature bound are
flagged boundary-uncertain rather than trusted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ViolationFound
from .lattice import LatticePoint, horocycle_matrices
from .observables import Observable, evaluate_matrices

_CHUNK_CELLS = 1 << 20  # max points*times evaluated per chunk


@dataclass(frozen=True)
class OrbitAverageRecord:
    point: LatticePoint
    T: float
    value: float
    quad_step: float
    quad_error_bound: float


@dataclass(frozen=True)
class LacunaryGrid:
    """Geometric time grid T_m = (1+epsilon)^m, m = 0..m_max."""

    epsilon: float
    m_max: int
    times: np.ndarray

    @staticmethod
    def build(epsilon: float, m_max: int) -> "LacunaryGrid":
        if epsilon <= 0:
            raise ValueError("epsilon must be positive")
        # Cumulative products keep consecutive ratios exactly 1+epsilon.
        times = np.multiply.accumulate(np.full(m_max + 1, 1.0 + epsilon)) / (1.0 + epsilon)
        return LacunaryGrid(epsilon, m_max, times)


@dataclass(frozen=True)
class SetMembership:
    """Membership record for the good set {|A_T f| <= T^-kappa}."""

    kappa: float
    T: float
    in_good: bool
    margin: float
    boundary_uncertain: bool

    @property
    def in_exceptional(self) -> bool:
        return not self.in_good


def m_index(T: float, epsilon: float) -> int:
    """The m with (1+eps)^m <= T < (1+eps)^(m+1)."""
    if T < 1.0:
        raise ValueError("T must be >= 1")
    m = int(math.floor(math.log(T) / math.log1p(epsilon)))
    # Guard the floating floor against edge rounding.
    while (1.0 + epsilon) ** (m + 1) <= T:
        m += 1
    while (1.0 + epsilon) ** m > T:
        m -= 1
    return m


def orbit_average_batch(
    f: Observable, mats: np.ndarray, T: float, step: float
) -> tuple[np.ndarray, float, float]:
    """Midpoint averages of f along the orbits of a (B, 2, 2) stack.

    Returns (values, actual_step, quad_error_bound).
    """
    if T <= 0:
        raise ValueError("T must be positive")
    if step > T / 10.0:
        raise ValueError("step must be at most T/10")
    mats = np.asarray(mats, dtype=float)
    squeeze = mats.ndim == 2
    if squeeze:
        mats = mats[None]
    n_steps = int(math.ceil(T / step))
    h = T / n_steps
    times = (np.arange(n_steps) + 0.5) * h
    batch = mats.shape[0]
    acc = np.zeros(batch)
    per_chunk = max(1, _CHUNK_CELLS // batch)
    for start in range(0, n_steps, per_chunk):
        ts = times[start : start + per_chunk]
        flowed = horocycle_matrices(mats[:, None], ts[None, :])
        acc += evaluate_matrices(f, flowed.reshape(-1, 2, 2)).reshape(batch, ts.size).sum(axis=1)
    values = acc / n_steps
    qbound = f.lip_coord * f.orbit_speed_bound * h
    return (values[0:1] if squeeze else values), h, qbound


def orbit_average(f: Observable, pt: LatticePoint, T: float, step: float) -> OrbitAverageRecord:
    """A_T f at one point with the certified quadrature error bound."""
    values, h, qbound = orbit_average_batch(f, pt.entries, T, step)
    return OrbitAverageRecord(pt, T, float(values[0]), h, qbound)


def lacunary_gap_check(
    f: Observable, pt: LatticePoint, T: float, epsilon: float, step: float
) -> float:
    """Gap |A_T f - A_{T_m} f| for the lacunary time below T; asserts the 2*sup*eps bound.

    The bound carries the quadrature slack of both averages; violation raises
    with the full record attached.
    """
    if T <= 1.0:
        raise ValueError("T must exceed 1")
    m = m_index(T, epsilon)
    t_m = (1.0 + epsilon) ** m
    rec_T = orbit_average(f, pt, T, step)
    rec_m = orbit_average(f, pt, t_m, step) if t_m != T else rec_T
    gap = abs(rec_T.value - rec_m.value)
    allowed = 2.0 * f.sup_norm * epsilon + rec_T.quad_error_bound + rec_m.quad_error_bound
    if gap > allowed + 1e-12:
        raise ViolationFound(
            f"lacunary gap {gap:.6g} exceeds {allowed:.6g}",
            record={"T": T, "T_m": t_m, "m": m, "epsilon": epsilon,
                    "value_T": rec_T.value, "value_m": rec_m.value},
        )
    return gap


def exceptional_indicator(
    f: Observable,
    pt: LatticePoint,
    grid: LacunaryGrid,
    kappa: float,
    m: int,
    step: float,
) -> SetMembership:
    """Good/exceptional membership at lacunary time T_m with threshold T_m^-kappa."""
    if not 0.0 < kappa < 1.0:
        raise ValueError("kappa must lie in (0, 1)")
    if not 0 <= m <= grid.m_max:
        raise ValueError("m out of range for the grid")
    T = float(grid.times[m])
    rec = orbit_average(f, pt, T, step)
    threshold = T ** (-kappa)
    margin = threshold - abs(rec.value)
    return SetMembership(
        kappa=kappa,
        T=T,
        in_good=margin >= 0.0,
        margin=margin,
        boundary_uncertain=abs(margin) <= rec.quad_error_bound,
    )


def exceptional_mask_batch(
    f: Observable,
    mats: np.ndarray,
    grid: LacunaryGrid,
    kappa: float,
    m: int,
    step: float,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Vectorized exceptional-set membership; returns (mask, values, threshold)."""
    if not 0.0 < kappa < 1.0:
        raise ValueError("kappa must lie in (0, 1)")
    T = float(grid.times[m])
    values, _, _ = orbit_average_batch(f, mats, T, step)
    threshold = T ** (-kappa)
    return np.abs(values) > threshold, values, threshold

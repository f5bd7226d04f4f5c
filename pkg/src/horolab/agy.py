"""The saddle-connection sup norm on period coordinates.

A tangent vector at a lattice is a complex pair w = (w1, w2) pairing with
integer vectors by v(p) = p1*w1 + p2*w2.  Its norm is the supremum over
saddle connections of |v(p)/hol(p)|; primitive directions are dense in the
projective line and the ratio depends only on the direction, so the sup is a
maximum over real directions.  Both quadratic forms involved are 2x2, which
makes the maximum the top generalized eigenvalue of the (numerator,
denominator) pencil; a dense-grid + golden-section maximizer is kept as an
independent cross-check route.

The horocycle flow acts on tangent vectors componentwise by
w -> Re(w) + t*Im(w) + i*Im(w), and the resulting growth of the norm is
bounded by 8 t^2 for t >= 1: the empirical side of that bound is what
:func:`check_subdivergence` certifies.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ChartViolation, DegenerateLattice, ViolationFound
from .lattice import LatticePoint, horocycle, systole

# Coefficient of the t^2 growth bound for the flow differential (t >= 1).
SUBDIV_COEFF = 8.0
SUBDIV_ALPHA = 2.0
_DEGENERATE_DEN = 1e-12


@dataclass(frozen=True)
class TangentVec:
    """Cohomology class w = (w1, w2) based at a lattice point."""

    w1: complex
    w2: complex
    basepoint: LatticePoint

    def pairing(self, p1: float, p2: float) -> complex:
        return p1 * self.w1 + p2 * self.w2


@dataclass(frozen=True)
class SubDivergenceCert:
    """Empirical certificate that the flow is (d, alpha)-sub-divergent on K."""

    K_systole: float
    alpha: float
    C: float
    n_samples: int
    max_ratio: float
    seed: Optional[int] = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "alpha": self.alpha,
                "C": self.C,
                "s": self.K_systole,
                "n_samples": self.n_samples,
                "max_ratio": self.max_ratio,
                "seed": self.seed,
            }
        )


def _direction_form(z1: complex, z2: complex) -> tuple[float, float, float]:
    """Coefficients (q11, q12, q22) of phi -> |cos(phi) z1 + sin(phi) z2|^2."""
    return (
        z1.real * z1.real + z1.imag * z1.imag,
        z1.real * z2.real + z1.imag * z2.imag,
        z2.real * z2.real + z2.imag * z2.imag,
    )


def _pencil_top(a11, a12, a22, b11, b12, b22):
    """Largest lambda with det(A - lambda*B) = 0 for 2x2 PSD A, PD B (vectorized)."""
    det_b = b11 * b22 - b12 * b12
    det_a = a11 * a22 - a12 * a12
    q = a11 * b22 + a22 * b11 - 2.0 * a12 * b12
    disc = np.maximum(q * q - 4.0 * det_a * det_b, 0.0)
    return (q + np.sqrt(disc)) / (2.0 * det_b)


def _min_direction_norm(b11, b12, b22):
    tr = b11 + b22
    det = b11 * b22 - b12 * b12
    lam_min = 0.5 * (tr - np.sqrt(np.maximum(tr * tr - 4.0 * det, 0.0)))
    return np.sqrt(np.maximum(lam_min, 0.0))


def agy_norm(v: TangentVec) -> float:
    """sup over unit directions of |v(direction)| / |hol(direction)|.

    Exact for the 2x2 pencil; agrees with the dense sup over primitive
    integer directions because those are dense in the projective line.
    """
    m1, m2 = v.basepoint.basis
    b11, b12, b22 = _direction_form(m1, m2)
    if _min_direction_norm(b11, b12, b22) < _DEGENERATE_DEN:
        raise DegenerateLattice("holonomy basis is numerically degenerate")
    a11, a12, a22 = _direction_form(v.w1, v.w2)
    return float(np.sqrt(_pencil_top(a11, a12, a22, b11, b12, b22)))


def agy_norm_grid(v: TangentVec, grid: int = 4096, rel_tol: float = 1e-10) -> float:
    """Cross-check route: dense grid over directions plus golden-section refinement.

    Reliable when the denominator form is moderately conditioned (grid spacing
    must resolve the peak); the pencil route in :func:`agy_norm` has no such
    restriction and is the production path.
    """
    m1, m2 = v.basepoint.basis
    b11, b12, b22 = _direction_form(m1, m2)
    if _min_direction_norm(b11, b12, b22) < _DEGENERATE_DEN:
        raise DegenerateLattice("holonomy basis is numerically degenerate")
    a11, a12, a22 = _direction_form(v.w1, v.w2)

    def ratio2(phi):
        c, s = np.cos(phi), np.sin(phi)
        num = a11 * c * c + 2.0 * a12 * c * s + a22 * s * s
        den = b11 * c * c + 2.0 * b12 * c * s + b22 * s * s
        return num / den

    phis = np.linspace(0.0, math.pi, grid, endpoint=False)
    vals = ratio2(phis)
    k = int(np.argmax(vals))
    h = math.pi / grid
    lo, hi = phis[k] - h, phis[k] + h
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - invphi * (hi - lo)
    x2 = lo + invphi * (hi - lo)
    f1, f2 = ratio2(x1), ratio2(x2)
    while hi - lo > rel_tol:
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + invphi * (hi - lo)
            f2 = ratio2(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - invphi * (hi - lo)
            f1 = ratio2(x1)
    return float(math.sqrt(max(f1, f2, vals[k])))


def agy_norm_enumeration(v: TangentVec, p_max: int = 200) -> float:
    """Independent oracle: max of |v(p)/hol(p)| over primitive |p|_inf <= p_max."""
    m1, m2 = v.basepoint.basis
    rng = np.arange(-p_max, p_max + 1)
    A, B = np.meshgrid(rng, rng, indexing="ij")
    prim = np.gcd(np.abs(A), np.abs(B)) == 1
    a, b = A[prim], B[prim]
    num = np.abs(a * v.w1 + b * v.w2)
    den = np.abs(a * m1 + b * m2)
    return float(np.max(num / den))


def flow_differential(v: TangentVec, t: float) -> TangentVec:
    """Derivative of the horocycle flow: componentwise Re(w) + t*Im(w) + i*Im(w).

    The basepoint advances by the raw (unreduced) flow so that the cocycle
    identity du_{s+t} = du_s o du_t holds exactly on components.
    """
    def push(z: complex) -> complex:
        return complex(z.real + t * z.imag, z.imag)

    return TangentVec(push(v.w1), push(v.w2), horocycle(v.basepoint, t))


def agy_distance_local(
    p: LatticePoint, q: LatticePoint, subdivisions: int, chart_radius: float = 0.1
) -> float:
    """Length of the straight period-coordinate segment from p to q.

    Midpoint sum of the norm of the (constant) segment velocity at
    ``subdivisions`` interpolation points; an upper bound for the path metric
    and convergent as subdivisions grow.  Both endpoints must be matrix
    representatives in the same chart (Frobenius distance <= chart_radius).
    """
    if subdivisions < 1:
        raise ValueError("subdivisions must be >= 1")
    Mp, Mq = p.entries, q.entries
    gap = float(np.linalg.norm(Mq - Mp))
    if gap > chart_radius:
        raise ChartViolation(f"endpoints {gap:.3g} apart exceed chart radius {chart_radius}")
    if gap == 0.0:
        return 0.0
    d1 = complex(Mq[0, 0] - Mp[0, 0], Mq[1, 0] - Mp[1, 0])
    d2 = complex(Mq[0, 1] - Mp[0, 1], Mq[1, 1] - Mp[1, 1])
    a11, a12, a22 = _direction_form(d1, d2)
    total = 0.0
    for k in range(subdivisions):
        s = (k + 0.5) / subdivisions
        M = (1.0 - s) * Mp + s * Mq
        m1 = complex(M[0, 0], M[1, 0])
        m2 = complex(M[0, 1], M[1, 1])
        b11, b12, b22 = _direction_form(m1, m2)
        if _min_direction_norm(b11, b12, b22) < _DEGENERATE_DEN:
            raise DegenerateLattice("degenerate basis along the segment")
        total += math.sqrt(_pencil_top(a11, a12, a22, b11, b12, b22))
    return total / subdivisions


# ---------------------------------------------------------------------------
# Batched norms and the sub-divergence check
# ---------------------------------------------------------------------------

def norms_batch(w1, w2, m1, m2) -> np.ndarray:
    """Vectorized norm for stacks of tangent components over basis holonomies."""
    w1, w2 = np.asarray(w1, dtype=complex), np.asarray(w2, dtype=complex)
    m1, m2 = np.asarray(m1, dtype=complex), np.asarray(m2, dtype=complex)
    a11 = w1.real**2 + w1.imag**2
    a22 = w2.real**2 + w2.imag**2
    a12 = w1.real * w2.real + w1.imag * w2.imag
    b11 = m1.real**2 + m1.imag**2
    b22 = m2.real**2 + m2.imag**2
    b12 = m1.real * m2.real + m1.imag * m2.imag
    if np.any(_min_direction_norm(b11, b12, b22) < _DEGENERATE_DEN):
        raise DegenerateLattice("degenerate basis in batch")
    return np.sqrt(_pencil_top(a11, a12, a22, b11, b12, b22))


def elementary_shear_bounds(x, y, t) -> tuple[np.ndarray, np.ndarray]:
    """Both sides of |x + iy| / (sqrt(2)(1+|t|)) <= |x + ty + iy| <= sqrt(2)(1+|t|)|x + iy|.

    Returns boolean arrays (upper_ok, lower_ok); inputs broadcast.
    """
    x, y, t = np.asarray(x, float), np.asarray(y, float), np.asarray(t, float)
    sheared = np.hypot(x + t * y, y)
    base = np.hypot(x, y)
    factor = math.sqrt(2.0) * (1.0 + np.abs(t))
    upper = sheared <= factor * base * (1.0 + 1e-12)
    lower = sheared * factor * (1.0 + 1e-12) >= base
    return upper, lower


def check_subdivergence(
    samples: Sequence[TangentVec],
    t_grid: Sequence[float],
    s: float,
    seed: Optional[int] = None,
    rel_slack: float = 1e-9,
) -> SubDivergenceCert:
    """Certify the 8 t^2 growth bound on every sample and flow time.

    For each tangent vector v and each t in ``t_grid`` (t >= 1), asserts
    ||du_t v|| <= 8 t^2 ||v|| within ``rel_slack``, and checks the elementary
    two-sided shear inequality on the basepoint holonomies.  Basepoints must
    lie in the compact set {systole >= s}.  Returns the certificate with
    C = max(1, max ratio / t^2) and alpha = 2.
    """
    t_grid = [float(t) for t in t_grid]
    if any(t < 1.0 for t in t_grid):
        raise ValueError("t_grid must lie in [1, inf)")
    w1 = np.array([v.w1 for v in samples], dtype=complex)
    w2 = np.array([v.w2 for v in samples], dtype=complex)
    m1 = np.array([v.basepoint.basis[0] for v in samples], dtype=complex)
    m2 = np.array([v.basepoint.basis[1] for v in samples], dtype=complex)
    for v in samples:
        if systole(v.basepoint) < s * (1.0 - 1e-9):
            raise ValueError("sample basepoint outside the compact set {systole >= s}")

    base = norms_batch(w1, w2, m1, m2)
    max_ratio = 0.0
    max_over_t2 = 0.0
    for t in t_grid:
        fw1 = w1.real + t * w1.imag + 1j * w1.imag
        fw2 = w2.real + t * w2.imag + 1j * w2.imag
        fm1 = m1.real + t * m1.imag + 1j * m1.imag
        fm2 = m2.real + t * m2.imag + 1j * m2.imag
        flowed = norms_batch(fw1, fw2, fm1, fm2)
        ratio = flowed / base
        bound = SUBDIV_COEFF * t * t
        worst = int(np.argmax(ratio))
        if ratio[worst] > bound * (1.0 + rel_slack):
            raise ViolationFound(
                f"growth ratio {ratio[worst]:.6g} exceeds {bound:.6g} at t={t}",
                record={"index": worst, "t": t, "ratio": float(ratio[worst])},
            )
        for hol_r, hol_i in ((m1.real, m1.imag), (m2.real, m2.imag)):
            up, low = elementary_shear_bounds(hol_r, hol_i, t)
            if not (up.all() and low.all()):
                raise ViolationFound(f"elementary shear bound failed at t={t}")
        max_ratio = max(max_ratio, float(ratio[worst]))
        max_over_t2 = max(max_over_t2, float(ratio[worst]) / (t * t))

    return SubDivergenceCert(
        K_systole=s,
        alpha=SUBDIV_ALPHA,
        C=max(1.0, max_over_t2),
        n_samples=len(samples),
        max_ratio=max_ratio,
        seed=seed,
    )

"""Unimodular plane lattices under the SL(2,Z) action.

A point of the space is a unit-determinant 2x2 real matrix M whose columns
span the lattice M*Z^2; right multiplication by an integer unimodular matrix
changes the basis but not the lattice.  The canonical representative is the
Gauss-reduced basis, with fundamental-domain coordinates (x, y, theta): the
lattice shape tau = x + i*y satisfies |x| <= 1/2, x^2 + y^2 >= 1, and theta
is the direction of the shortest vector.

Conventions
-----------
* Holonomy of the integer vector p is hol(p) = (M p)_1 + i (M p)_2.
* The horocycle flow acts by left multiplication with [[1, t], [0, 1]], so
  every holonomy transforms by (x, y) -> (x + t*y, y).
* Boundary ties: x = +1/2 is preferred over x = -1/2, and on the arc
  x^2 + y^2 = 1 the representative with x >= 0 is kept.
* Flows return unreduced points (entries are the exact flow image after
  determinant renormalization); call :func:`reduce` for canonical coords.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import CutoffTooLarge, Degenerate, NonUnimodular
from .rng import Stream

# Boundary-tie tolerance for the fundamental domain; points farther than
# this from a boundary are never remapped across it.
FUND_TOL = 1e-12
# Determinant tolerance accepted by reduce() before renormalization.
DET_TOL = 1e-9
_MAX_GAUSS_ITER = 64


@dataclass(frozen=True, eq=False)
class LatticePoint:
    """A unimodular lattice, optionally in canonical reduced form.

    ``entries`` is the 2x2 basis matrix.  ``x, y, theta`` are the
    fundamental-domain coordinates and are only meaningful when ``reduced``
    is true; unreduced points (e.g. raw flow images) carry None there.
    """

    entries: np.ndarray
    x: Optional[float] = None
    y: Optional[float] = None
    theta: Optional[float] = None
    reduced: bool = False

    @property
    def matrix(self) -> np.ndarray:
        return self.entries

    @property
    def basis(self) -> tuple[complex, complex]:
        """Holonomies of the two basis vectors as complex numbers."""
        m = self.entries
        return complex(m[0, 0], m[1, 0]), complex(m[0, 1], m[1, 1])

    @property
    def coords(self) -> tuple[float, float, float]:
        if not self.reduced:
            raise ValueError("coords are only defined on reduced points; call reduce() first")
        return self.x, self.y, self.theta

    def to_json(self) -> str:
        if not self.reduced:
            raise ValueError("only reduced points serialize; call reduce() first")
        m = self.entries
        return json.dumps(
            {
                "a": m[0, 0], "b": m[0, 1], "c": m[1, 0], "d": m[1, 1],
                "x": self.x, "y": self.y, "theta": self.theta,
            }
        )

    @staticmethod
    def from_json(text: str) -> "LatticePoint":
        obj = json.loads(text)
        m = np.array([[obj["a"], obj["b"]], [obj["c"], obj["d"]]], dtype=float)
        return LatticePoint(m, obj["x"], obj["y"], obj["theta"], reduced=True)


@dataclass(frozen=True)
class SaddleConnection:
    """Primitive integer vector p with its holonomy in the given basis."""

    p: tuple[int, int]
    hol: complex

    @property
    def length(self) -> float:
        return abs(self.hol)


@dataclass(frozen=True)
class HaarSample:
    """A Haar-distributed point with its RNG provenance."""

    point: LatticePoint
    seed: int
    stream_id: int
    index: int


def matrix_from_coords(x: float, y: float, theta: float) -> np.ndarray:
    """Basis matrix with shortest vector e^{i theta}/sqrt(y) and shape x+iy."""
    if y <= 0:
        raise ValueError("y must be positive")
    v1 = complex(math.cos(theta), math.sin(theta)) / math.sqrt(y)
    v2 = complex(x, y) * v1
    return np.array([[v1.real, v2.real], [v1.imag, v2.imag]], dtype=float)


def from_coords(x: float, y: float, theta: float, tol: float = 1e-9) -> LatticePoint:
    """Reduced point from fundamental-domain coordinates.

    Requires |x| <= 1/2 and x^2 + y^2 >= 1 (within ``tol``); theta may be any
    angle and is stored mod 2*pi.
    """
    if abs(x) > 0.5 + tol or x * x + y * y < 1.0 - tol:
        raise ValueError(f"({x}, {y}) is outside the fundamental domain")
    theta = theta % (2.0 * math.pi)
    return LatticePoint(matrix_from_coords(x, y, theta), x, y, theta, reduced=True)


def extract_coords(M: np.ndarray) -> tuple[float, float, float]:
    """Coordinates read off a matrix whose columns are already a reduced basis."""
    v1 = complex(M[0, 0], M[1, 0])
    v2 = complex(M[0, 1], M[1, 1])
    tau = v2 / v1
    return tau.real, tau.imag, math.atan2(v1.imag, v1.real) % (2.0 * math.pi)


# ---------------------------------------------------------------------------
# Reduction
# ---------------------------------------------------------------------------

def _reduce_basis_arrays(u: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-reduce basis pairs (vectorized) and canonicalize boundary ties.

    On return |u| <= |w| and tau = w/u lies in the fundamental domain with
    the x = +1/2 / arc-x >= 0 tie preferences applied.  Orientation
    Im(conj(u) w) > 0 is preserved throughout.
    """
    u = np.array(u, dtype=complex, copy=True)
    w = np.array(w, dtype=complex, copy=True)
    for _ in range(_MAX_GAUSS_ITER):
        nu = u.real * u.real + u.imag * u.imag
        nw = w.real * w.real + w.imag * w.imag
        swap = nu > nw
        if swap.any():
            u, w = np.where(swap, w, u), np.where(swap, -u, w)
            nu = np.where(swap, nw, nu)
        mu = np.rint((w * u.conj()).real / nu)
        shifted = mu != 0
        if not swap.any() and not shifted.any():
            break
        w = w - mu * u
    else:
        raise Degenerate("basis reduction did not converge; input too ill-conditioned")

    tau = w / u
    near_left = np.abs(tau.real + 0.5) <= FUND_TOL
    if near_left.any():
        w = np.where(near_left, w + u, w)
        tau = w / u
    on_arc = np.abs(np.abs(tau) - 1.0) <= FUND_TOL
    flip = on_arc & (tau.real < -FUND_TOL)
    if flip.any():
        u, w = np.where(flip, w, u), np.where(flip, -u, w)
    return u, w


def reduce_batch(mats: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Canonical coordinates (x, y, theta) for a (..., 2, 2) stack of matrices.

    Determinants are renormalized, not checked.  theta is canonicalized with
    the generic +/- symmetry only (theta mod pi); lattices with extra
    symmetry (square, hexagonal) form a measure-zero set on which the scalar
    :func:`reduce` applies the full tie-break.
    """
    mats = np.asarray(mats, dtype=float)
    u = mats[..., 0, 0] + 1j * mats[..., 1, 0]
    w = mats[..., 0, 1] + 1j * mats[..., 1, 1]
    det = (u.conj() * w).imag
    scale = 1.0 / np.sqrt(det)
    u, w = _reduce_basis_arrays(u * scale, w * scale)
    tau = w / u
    theta = np.angle(u) % math.pi
    return tau.real.astype(float), tau.imag.astype(float), theta


# Candidate integer combinations that can tie the shortest vector.
_SHORT_CANDIDATES = ((1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1), (1, 1), (-1, -1))


def reduce(point_or_matrix) -> LatticePoint:
    """Canonical reduced representative of a lattice.

    The output depends only on the lattice M*Z^2, not on the basis: the shape
    tau is Gauss-reduced with boundary ties broken as documented, and theta is
    the smallest direction in [0, 2*pi) among all shortest vectors generating
    a basis of the canonical shape (so symmetric lattices reduce uniquely).
    The returned basis equals M*U for an integer unimodular U.
    """
    if isinstance(point_or_matrix, LatticePoint):
        M = point_or_matrix.entries
    else:
        M = np.asarray(point_or_matrix, dtype=float)
    if M.shape != (2, 2):
        raise ValueError("expected a 2x2 matrix")
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    if not math.isfinite(det) or abs(det - 1.0) > DET_TOL:
        raise NonUnimodular(f"determinant {det!r} is not 1 within {DET_TOL}")
    if np.linalg.cond(M) > 1e12:
        raise Degenerate("columns are numerically collinear")
    M = M / math.sqrt(det)

    u0 = complex(M[0, 0], M[1, 0])
    w0 = complex(M[0, 1], M[1, 1])
    u_arr, w_arr = _reduce_basis_arrays(np.array([u0]), np.array([w0]))
    u, w = complex(u_arr[0]), complex(w_arr[0])
    tau = w / u

    # All shortest vectors c with c*tau still in the lattice give competing
    # representatives (c, c*tau); keep the one with the smallest direction.
    basis_mat = np.array([[u.real, w.real], [u.imag, w.imag]])
    norm_u = abs(u)
    best_theta = None
    best_pair = None
    for a, b in _SHORT_CANDIDATES:
        c = a * u + b * w
        if abs(c) > norm_u * (1.0 + 1e-9):
            continue
        target = c * tau
        n = np.linalg.solve(basis_mat, np.array([target.real, target.imag]))
        n_int = np.rint(n)
        if np.max(np.abs(n - n_int)) > 1e-6:
            continue
        theta_c = math.atan2(c.imag, c.real) % (2.0 * math.pi)
        if best_theta is None or theta_c < best_theta:
            c2 = n_int[0] * u + n_int[1] * w
            best_theta = theta_c
            best_pair = (c, c2)
    c, c2 = best_pair
    entries = np.array([[c.real, c2.real], [c.imag, c2.imag]], dtype=float)
    return LatticePoint(entries, tau.real, tau.imag, best_theta, reduced=True)


def _ensure_reduced(pt: LatticePoint) -> LatticePoint:
    return pt if pt.reduced else reduce(pt)


# ---------------------------------------------------------------------------
# Flows
# ---------------------------------------------------------------------------

def _renormalized(M: np.ndarray) -> np.ndarray:
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    return M / math.sqrt(det)


def horocycle(pt: LatticePoint, t: float) -> LatticePoint:
    """Horocycle flow image; holonomies map by (x, y) -> (x + t*y, y)."""
    M = pt.entries
    out = np.array(
        [[M[0, 0] + t * M[1, 0], M[0, 1] + t * M[1, 1]], [M[1, 0], M[1, 1]]]
    )
    return LatticePoint(_renormalized(out))


def horocycle_matrices(mats: np.ndarray, t) -> np.ndarray:
    """Vectorized horocycle flow on a (..., 2, 2) stack; t broadcasts."""
    mats = np.asarray(mats, dtype=float)
    t = np.asarray(t, dtype=float)
    out = np.empty(np.broadcast_shapes(t.shape, mats.shape[:-2]) + (2, 2))
    out[..., 0, 0] = mats[..., 0, 0] + t * mats[..., 1, 0]
    out[..., 0, 1] = mats[..., 0, 1] + t * mats[..., 1, 1]
    out[..., 1, 0] = mats[..., 1, 0]
    out[..., 1, 1] = mats[..., 1, 1]
    return out


def geodesic(pt: LatticePoint, s: float) -> LatticePoint:
    """Diagonal flow; holonomies map by (x, y) -> (e^s x, e^{-s} y)."""
    if abs(s) > 700.0:
        raise OverflowError("geodesic time exceeds the exp overflow guard (|s| <= 700)")
    es = math.exp(s)
    M = pt.entries
    out = np.array([[es * M[0, 0], es * M[0, 1]], [M[1, 0] / es, M[1, 1] / es]])
    return LatticePoint(_renormalized(out))


# ---------------------------------------------------------------------------
# Saddle connections and the systole
# ---------------------------------------------------------------------------

def systole(pt: LatticePoint) -> float:
    """Length of the shortest nonzero lattice vector (= 1/sqrt(y) reduced)."""
    pt = _ensure_reduced(pt)
    return 1.0 / math.sqrt(pt.y)


def systole_batch(mats: np.ndarray) -> np.ndarray:
    _, y, _ = reduce_batch(mats)
    return 1.0 / np.sqrt(y)


def enumerate_saddle_connections(
    pt: LatticePoint, L: float, limit: int = 10**7
) -> list[SaddleConnection]:
    """All primitive lattice vectors with |hol| <= L, sorted by length.

    Integer pairs refer to the canonical reduced basis of ``pt``.  Returns an
    empty list when L is below the systole.  Raises CutoffTooLarge when the
    predicted count 6 L^2 / pi exceeds ``limit``.
    """
    pt = _ensure_reduced(pt)
    if 6.0 * L * L / math.pi > limit:
        raise CutoffTooLarge(f"predicted count {6.0 * L * L / math.pi:.3g} exceeds limit {limit}")
    m1, m2 = pt.basis
    if L < systole(pt):
        return []
    # Ellipse bound: |a m1 + b m2| <= L forces |a| <= L |m2|, |b| <= L |m1|
    # (unit covolume).
    amax = int(math.floor(L * abs(m2) * (1.0 + 1e-12))) + 1
    bmax = int(math.floor(L * abs(m1) * (1.0 + 1e-12))) + 1
    if (2 * amax + 1) * (2 * bmax + 1) > 64 * limit:
        raise CutoffTooLarge("scan box exceeds the configured limit")
    a = np.arange(-amax, amax + 1)
    b = np.arange(-bmax, bmax + 1)
    A, B = np.meshgrid(a, b, indexing="ij")
    hol = A * m1 + B * m2
    keep = (np.abs(hol) <= L * (1.0 + 1e-12)) & ((A != 0) | (B != 0))
    keep &= np.gcd(np.abs(A), np.abs(B)) == 1
    As, Bs, hols = A[keep], B[keep], hol[keep]
    order = np.lexsort((Bs, As, np.abs(hols)))
    return [
        SaddleConnection((int(As[i]), int(Bs[i])), complex(hols[i])) for i in order
    ]


# ---------------------------------------------------------------------------
# Haar sampling
# ---------------------------------------------------------------------------

def sample_haar_coords(gen: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw (x, y, theta) arrays from normalized Haar measure.

    Density is proportional to y^{-2} dx dy dtheta on the fundamental domain
    times [0, 2*pi).  x uses rejection against its marginal 1/sqrt(1-x^2)
    (bounded by 2/sqrt(3) on |x| <= 1/2), y the exact inverse CDF
    y = sqrt(1-x^2)/(1-u), and theta is uniform.  The proposal-block policy
    is fixed, so output is fully determined by the generator state.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    x = np.empty(n)
    filled = 0
    while filled < n:
        want = n - filled
        block = max(64, int(1.3 * want) + 8)
        prop = gen.uniform(-0.5, 0.5, size=block)
        accept = gen.uniform(0.0, 1.0, size=block) <= np.sqrt(3.0 / (4.0 * (1.0 - prop * prop)))
        taken = prop[accept][:want]
        x[filled : filled + taken.size] = taken
        filled += taken.size
    u = gen.uniform(0.0, 1.0, size=n)
    y = np.sqrt(1.0 - x * x) / (1.0 - u)
    theta = gen.uniform(0.0, 2.0 * math.pi, size=n)
    return x, y, theta


def coords_to_matrices(x: np.ndarray, y: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Vectorized :func:`matrix_from_coords`."""
    inv_sqrt_y = 1.0 / np.sqrt(y)
    c, s = np.cos(theta) * inv_sqrt_y, np.sin(theta) * inv_sqrt_y
    out = np.empty(np.shape(x) + (2, 2))
    out[..., 0, 0] = c
    out[..., 1, 0] = s
    out[..., 0, 1] = x * c - y * s
    out[..., 1, 1] = x * s + y * c
    return out


def sample_haar(stream: Stream, n: int) -> list[HaarSample]:
    """n i.i.d. Haar samples with per-sample provenance, deterministic in the stream."""
    x, y, theta = sample_haar_coords(stream.generator, n)
    mats = coords_to_matrices(x, y, theta)
    return [
        HaarSample(
            LatticePoint(mats[i], float(x[i]), float(y[i]), float(theta[i]), reduced=True),
            stream.seed,
            stream.stream_id,
            i,
        )
        for i in range(n)
    ]


# ---------------------------------------------------------------------------
# Coordinate metric
# ---------------------------------------------------------------------------

def wrap_angle_pi(delta) -> np.ndarray:
    """Distance between directions identified mod pi."""
    d = np.abs(np.asarray(delta)) % math.pi
    return np.minimum(d, math.pi - d)


def coordinate_distance(p: LatticePoint, q: LatticePoint) -> float:
    """Euclidean distance on (x, y, theta) with theta wrapped mod pi."""
    p, q = _ensure_reduced(p), _ensure_reduced(q)
    dth = float(wrap_angle_pi(p.theta - q.theta))
    return math.sqrt((p.x - q.x) ** 2 + (p.y - q.y) ** 2 + dth * dth)


def coordinate_distance_arrays(c1, c2) -> np.ndarray:
    """Same metric on (..., 3) coordinate arrays."""
    c1, c2 = np.asarray(c1, dtype=float), np.asarray(c2, dtype=float)
    dth = wrap_angle_pi(c1[..., 2] - c2[..., 2])
    return np.sqrt((c1[..., 0] - c2[..., 0]) ** 2 + (c1[..., 1] - c2[..., 1]) ** 2 + dth * dth)

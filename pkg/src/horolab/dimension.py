"""Separated packings, box-counting dimension, and the clustering step.

Box-counting replaces Hausdorff dimension as the computable proxy: it upper
bounds Hausdorff dimension, and the dimension statements being verified are
themselves upper bounds.  Packings are greedy (maximality is what the cover
construction uses, not optimality).  The clustering check verifies, with
explicit quadrature margins, that a point close to a good point is good at
the shifted exponent kappa' = kappa - log_T(D) with

    D = 1 + 2 ||f||_inf + C ||f||_Lip / (alpha + 1),

together with the contrapositive form at distance D^-1 T^(-alpha-kappa).

Point clouds serialize as little-endian float64 triples behind a 16-byte
header (magic "HLAB", uint32 version, uint64 count).
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DegenerateScales, ViolationFound
from .lattice import (
    LatticePoint,
    coordinate_distance,
    coordinate_distance_arrays,
    sample_haar_coords,
)
from .observables import Observable
from .dynamics import LacunaryGrid, orbit_average_batch
from .rng import Stream
from .stats import fixed_slope_fit, linear_fit

CLOUD_MAGIC = b"HLAB"
CLOUD_VERSION = 1


@dataclass(frozen=True)
class PackingReport:
    delta: float
    count: int
    region: str
    member_indices: tuple[int, ...]


@dataclass(frozen=True)
class BoxDimEstimate:
    scales: tuple[float, ...]
    counts: tuple[int, ...]
    dim_hat: float
    r_squared: float


@dataclass(frozen=True)
class ClusteringCheck:
    D: float
    kappa: float
    T: float
    kappa_prime: float
    corollary: bool


def shifted_kappa(T: float, kappa: float, D: float, corollary: bool = False) -> ClusteringCheck:
    """kappa' = kappa -/+ log_T(D) (minus for the direct form, plus for the corollary)."""
    shift = math.log(D) / math.log(T)
    kp = kappa + shift if corollary else kappa - shift
    return ClusteringCheck(D, kappa, T, kp, corollary)


# ---------------------------------------------------------------------------
# Packings
# ---------------------------------------------------------------------------

def greedy_packing(
    points: Sequence, delta: float, metric: Optional[Callable] = None, region: str = ""
) -> PackingReport:
    """Maximal delta-separated subset by greedy insertion in input order.

    ``points`` may be LatticePoints (coordinate metric by default), coordinate
    triples, or anything the supplied metric accepts.  The output is
    delta-separated and every input point lies within delta of a member.
    """
    pts = list(points)
    if not pts:
        return PackingReport(delta, 0, region, ())
    if metric is None and isinstance(pts[0], LatticePoint):
        metric = coordinate_distance
    if metric is None:
        arr = np.asarray(pts, dtype=float).reshape(len(pts), -1)
        chosen: list[int] = []
        for i in range(arr.shape[0]):
            if not chosen:
                chosen.append(i)
                continue
            d = np.linalg.norm(arr[chosen] - arr[i], axis=1)
            if float(d.min()) >= delta:
                chosen.append(i)
        return PackingReport(delta, len(chosen), region, tuple(chosen))
    chosen = []
    for i, p in enumerate(pts):
        if all(metric(pts[j], p) >= delta for j in chosen):
            chosen.append(i)
    return PackingReport(delta, len(chosen), region, tuple(chosen))


# ---------------------------------------------------------------------------
# Clustering
# ---------------------------------------------------------------------------

def clustering_constant(sup_norm: float, lip: float, C_K: float, alpha: float) -> float:
    """D = 1 + 2 sup + C_K * lip / (alpha + 1)."""
    if alpha <= 0 or C_K <= 0 or sup_norm < 0 or lip < 0:
        raise ValueError("alpha and C_K must be positive; norms nonnegative")
    return 1.0 + 2.0 * sup_norm + C_K * lip / (alpha + 1.0)


@dataclass(frozen=True)
class ClusteringReport:
    T: float
    kappa: float
    D: float
    n_pairs: int
    n_direct: int
    n_contrapositive: int
    worst_direct_margin: float
    worst_contra_margin: float


def verify_clustering(
    f: Observable,
    pairs: Sequence[tuple[LatticePoint, LatticePoint]],
    T: float,
    kappa: float,
    alpha: float,
    C_K: float,
    step: float,
) -> ClusteringReport:
    """Check both clustering conclusions on nearby pairs, with quadrature margins.

    Direct form: x certified in the good set at kappa (estimate + quadrature
    below T^-kappa) and d(x, y) <= T^(-alpha-kappa) force the y estimate below
    D * T^-kappa + quadrature.  Contrapositive: x certified outside the good
    set and d(x, y) <= D^-1 T^(-alpha-kappa) force the y estimate above
    T^-kappa / D - quadrature.  Raises ViolationFound on any failing pair.
    """
    if not 0.0 < kappa < 1.0 or T <= 1.0:
        raise ValueError("need kappa in (0,1) and T > 1")
    D = clustering_constant(f.sup_norm, f.lip_coord, C_K, alpha)
    radius = T ** (-alpha - kappa)
    xs = np.stack([p.entries for p, _ in pairs])
    ys = np.stack([q.entries for _, q in pairs])
    dists = np.array([coordinate_distance(p, q) for p, q in pairs])
    ax, _, qb = orbit_average_batch(f, xs, T, step)
    ay, _, _ = orbit_average_batch(f, ys, T, step)
    thr = T ** (-kappa)

    direct = (dists <= radius) & (np.abs(ax) + qb <= thr)
    bad = direct & (np.abs(ay) - qb > D * thr)
    if bad.any():
        i = int(np.argmax(bad))
        raise ViolationFound(
            f"clustering failed: |A_T f(y)| = {abs(ay[i]):.6g} exceeds D*T^-kappa = {D * thr:.6g}",
            record={"pair": i, "ax": float(ax[i]), "ay": float(ay[i]), "dist": float(dists[i])},
        )

    contra = (dists <= radius / D) & (np.abs(ax) - qb > thr)
    bad_c = contra & (np.abs(ay) + qb <= thr / D)
    if bad_c.any():
        i = int(np.argmax(bad_c))
        raise ViolationFound(
            f"contrapositive clustering failed at pair {i}",
            record={"pair": i, "ax": float(ax[i]), "ay": float(ay[i]), "dist": float(dists[i])},
        )

    worst_direct = float(np.min(D * thr + qb - np.abs(ay)[direct])) if direct.any() else math.inf
    worst_contra = (
        float(np.min((np.abs(ay) + qb - thr / D)[contra])) if contra.any() else math.inf
    )
    return ClusteringReport(
        T, kappa, D, len(pairs), int(direct.sum()), int(contra.sum()), worst_direct, worst_contra
    )


def empirical_subdivergence_constant(
    pairs: Sequence[tuple[LatticePoint, LatticePoint]],
    t_grid: Sequence[float],
    alpha: float = 2.0,
    safety: float = 2.0,
) -> float:
    """Coordinate-metric sub-divergence constant over sampled pairs and times.

    Returns ``safety`` times the largest observed d(u_t x, u_t y) / (t^alpha
    d(x, y)); any upper bound is a valid constant for the definition, so the
    safety factor only loosens the derived clustering constant D.
    """
    from .lattice import horocycle, reduce

    worst = 0.0
    for p, q in pairs:
        d0 = coordinate_distance(p, q)
        if d0 == 0.0:
            continue
        for t in t_grid:
            dt = coordinate_distance(reduce(horocycle(p, t)), reduce(horocycle(q, t)))
            worst = max(worst, dt / (t**alpha * d0))
    return safety * max(worst, 1e-12)


# ---------------------------------------------------------------------------
# Box-counting dimension
# ---------------------------------------------------------------------------

def _occupied_boxes(cloud: np.ndarray, delta: float) -> int:
    # floor in absolute coordinates (boxes anchored at 0); shifting floats
    # before flooring would jitter points sitting near box edges
    idx = np.floor(cloud / delta).astype(np.int64)
    idx -= idx.min(axis=0)
    span = idx.max(axis=0) + 1
    code = idx[:, 0]
    for d in range(1, idx.shape[1]):
        code = code * span[d] + idx[:, d]
    return int(np.unique(code).size)


def box_dimension(
    cloud=None,
    scales: Sequence[float] = (),
    predicate: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    grid: Optional[np.ndarray] = None,
) -> BoxDimEstimate:
    """Slope of log N(delta) against log(1/delta) over the given scales.

    Input is a point cloud (n, d) or a membership predicate evaluated on a
    grid of candidate points.  Requires at least 4 scales spanning at least
    1.5 decades.  An empty cloud has dimension 0 by convention.
    """
    scales = sorted(float(s) for s in scales)
    if len(scales) < 4 or scales[0] <= 0:
        raise DegenerateScales("need at least 4 positive scales")
    if scales[-1] / scales[0] < 10**1.5:
        raise DegenerateScales("scales must span at least 1.5 decades")
    if predicate is not None:
        if grid is None:
            raise ValueError("predicate mode requires a grid")
        grid = np.asarray(grid, dtype=float)
        cloud = grid[np.asarray(predicate(grid), dtype=bool)]
    cloud = np.asarray(cloud, dtype=float)
    if cloud.ndim == 1:
        cloud = cloud[:, None]
    if cloud.shape[0] == 0:
        return BoxDimEstimate(tuple(scales), (0,) * len(scales), 0.0, 1.0)
    counts = [_occupied_boxes(cloud, s) for s in scales]
    fit = linear_fit(np.log(1.0 / np.array(scales)), np.log(counts))
    return BoxDimEstimate(tuple(scales), tuple(counts), max(fit.slope, 0.0), fit.r_squared)


@dataclass(frozen=True)
class ScanReport:
    estimate: BoxDimEstimate
    n_members: int
    n_grid: int
    threshold: float
    ceiling: Optional[float]


def exceptional_set_scan(
    f: Observable,
    grid_coords: np.ndarray,
    lacunary: LacunaryGrid,
    kappa: float,
    m: int,
    scales: Sequence[float],
    step: float,
    grid_resolution: float,
    gamma_hat: Optional[float] = None,
    alpha: float = 2.0,
    beta: float = 3.0,
) -> ScanReport:
    """Box dimension of the finite-m exceptional proxy set on a coordinate grid.

    Applies the membership threshold at lacunary time T_m to every grid point
    and box-counts the members, reporting the theoretical ceiling
    beta - min(1, gamma_hat)/alpha alongside when a rate is supplied.  The
    grid resolution must resolve the smallest scale.
    """
    if grid_resolution >= min(scales):
        raise ValueError("grid resolution must be finer than the smallest scale")
    from .lattice import coords_to_matrices
    from .dynamics import exceptional_mask_batch

    grid_coords = np.asarray(grid_coords, dtype=float)
    mats = coords_to_matrices(grid_coords[:, 0], grid_coords[:, 1], grid_coords[:, 2])
    mask, _, threshold = exceptional_mask_batch(f, mats, lacunary, kappa, m, step)
    members = grid_coords[mask]
    estimate = box_dimension(members, scales)
    ceiling = None if gamma_hat is None else beta - min(1.0, gamma_hat) / alpha
    return ScanReport(estimate, int(mask.sum()), len(grid_coords), threshold, ceiling)


# ---------------------------------------------------------------------------
# Sub-uniformity of Haar measure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SubUniformityReport:
    radii: tuple[float, ...]
    n_centers: int
    masses: np.ndarray  # (n_centers, n_radii)
    c_emp: float
    c_fit: float
    r_squared: float
    beta: float


def haar_centers_in_compact(
    stream: Stream, n: int, min_systole: float = 0.5, clearance: float = 0.0
) -> np.ndarray:
    """Haar-random coordinate triples conditioned on {systole >= min_systole}.

    ``clearance`` additionally keeps centers that far inside the fundamental
    domain, so small coordinate perturbations stay valid.
    """
    y_max = 1.0 / min_systole**2
    out = np.empty((0, 3))
    while out.shape[0] < n:
        x, y, th = sample_haar_coords(stream.generator, 4 * n)
        keep = (y <= y_max) & (np.abs(x) <= 0.5 - clearance)
        keep &= y >= np.sqrt(np.maximum(1.0 - x * x, 0.0)) + clearance
        out = np.vstack([out, np.column_stack([x[keep], y[keep], th[keep] % math.pi])])
    return out[:n]


def ball_mass_subuniformity(
    centers: np.ndarray,
    radii: Sequence[float],
    n_per_ball: int,
    stream: Stream,
    beta: float = 3.0,
) -> SubUniformityReport:
    """Monte Carlo Haar mass of coordinate balls, with the c * r^beta lower fit.

    Mass of B(center, r) is estimated by uniform importance sampling inside
    the Euclidean coordinate ball (theta folded mod pi), weighting by the
    Haar density y^-2 / (pi^2/3) and truncating outside the fundamental
    domain (truncation only lowers the mass, which is safe for a lower
    bound).  c_emp = min mass / r^beta over all balls; c_fit and r_squared
    come from the fixed-slope fit of log min-mass per radius against
    beta * log r.
    """
    gen = stream.generator
    centers = np.asarray(centers, dtype=float)
    radii = [float(r) for r in radii]
    norm = math.pi**2 / 3.0  # total mass of y^-2 dx dy dtheta, theta in [0, pi)
    masses = np.empty((centers.shape[0], len(radii)))
    for i, c in enumerate(centers):
        for j, r in enumerate(radii):
            direction = gen.normal(size=(n_per_ball, 3))
            direction /= np.linalg.norm(direction, axis=1)[:, None]
            radius = r * gen.uniform(0.0, 1.0, n_per_ball) ** (1.0 / 3.0)
            pts = c[None, :] + direction * radius[:, None]
            x, y = pts[:, 0], pts[:, 1]
            inside = (np.abs(x) <= 0.5) & (x * x + y * y >= 1.0) & (y > 0)
            weight = np.where(inside, 1.0 / np.maximum(y, 1e-9) ** 2, 0.0) / norm
            vol = 4.0 / 3.0 * math.pi * r**3
            masses[i, j] = vol * float(weight.mean())
    ratios = masses / np.power(radii, beta)[None, :]
    c_emp = float(ratios.min())
    min_mass = masses.min(axis=0)
    intercept, r2 = fixed_slope_fit(np.log(radii), np.log(min_mass), slope=beta)
    return SubUniformityReport(
        tuple(radii), centers.shape[0], masses, c_emp, math.exp(intercept), r2, beta
    )


# ---------------------------------------------------------------------------
# Binary point clouds
# ---------------------------------------------------------------------------

def write_point_cloud(path, cloud: np.ndarray) -> None:
    """Write float64 triples behind the 16-byte HLAB header."""
    cloud = np.ascontiguousarray(np.asarray(cloud, dtype="<f8").reshape(-1, 3))
    header = CLOUD_MAGIC + struct.pack("<I", CLOUD_VERSION) + struct.pack("<Q", cloud.shape[0])
    Path(path).write_bytes(header + cloud.tobytes())


def read_point_cloud(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != CLOUD_MAGIC:
        raise ValueError("bad magic; not a point-cloud file")
    version = struct.unpack("<I", raw[4:8])[0]
    if version != CLOUD_VERSION:
        raise ValueError(f"unsupported version {version}")
    count = struct.unpack("<Q", raw[8:16])[0]
    return np.frombuffer(raw[16:], dtype="<f8").reshape(count, 3).copy()

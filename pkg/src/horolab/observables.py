"""Compactly supported Lipschitz test functions on the lattice space.

Observables are box bumps in canonical coordinates (x, y, theta): a profile
of the scaled sup-distance u = max_i |coord_i - center_i| / radius_i, equal
to the amplitude at the center and exactly zero for u >= 1.  The support box
is required to sit strictly inside the fundamental domain and strictly above
the unit-circle arc, which makes every bump a continuous function of the
lattice (the canonical coordinates have no identification jumps there).
Subtracting the ``offset`` field turns a bump into a function constant
outside a compact set; the zero-average normalization stores the Monte Carlo
mean there.

Exact constants: the sup norm and the coordinate-metric Lipschitz constant
are closed-form in the descriptor, so they can feed the explicit proposition
constants downstream.  theta enters through distance mod pi (directions of a
lattice are only defined up to sign).
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from importlib import resources
from typing import Optional

import numpy as np

from .lattice import (
    LatticePoint,
    from_coords,
    reduce_batch,
    sample_haar_coords,
    wrap_angle_pi,
)
from .rng import Stream
from . import agy as _agy

_PROFILES = ("hat", "smoothstep")
_INTERIOR_MARGIN = 1e-9


@dataclass(frozen=True)
class Observable:
    """Bump descriptor with certified norms.

    ``plateau`` is the fraction of the scaled radius held flat at the peak
    (0 gives the plain hat/smoothstep).  ``offset`` is subtracted from the
    bump everywhere; ``mean``/``mean_stderr`` record the Monte Carlo
    zero-average bookkeeping, ``lip_agy`` the distortion-adjusted Lipschitz
    constant once certified.
    """

    center: tuple[float, float, float]
    radii: tuple[float, float, float]
    profile: str = "hat"
    amplitude: float = 1.0
    plateau: float = 0.0
    offset: float = 0.0
    mean: Optional[float] = None
    mean_stderr: Optional[float] = None
    lip_agy: Optional[float] = None
    zero_mean: bool = False

    @property
    def sup_norm(self) -> float:
        """Exact sup of |bump - offset| (the bump attains every value in [0, amp])."""
        return max(abs(self.amplitude - self.offset), abs(self.offset))

    @property
    def lip_coord(self) -> float:
        """Exact Lipschitz constant in the coordinate metric."""
        ramp = 1.5 if self.profile == "smoothstep" else 1.0
        return ramp * abs(self.amplitude) / ((1.0 - self.plateau) * min(self.radii))

    @property
    def support_systole(self) -> float:
        """s with support contained in {systole >= s} (systole = 1/sqrt(y))."""
        return 1.0 / math.sqrt(self.center[1] + self.radii[1])

    @property
    def orbit_speed_bound(self) -> float:
        """Coordinate speed bound of the horocycle flow on the support box."""
        y_max = self.center[1] + self.radii[1]
        return math.sqrt(y_max * y_max + 1.0)

    def to_json(self) -> str:
        return json.dumps(
            {
                "center": list(self.center),
                "radii": list(self.radii),
                "profile": self.profile,
                "amplitude": self.amplitude,
                "plateau": self.plateau,
                "offset": self.offset,
            }
        )

    @staticmethod
    def from_json(text: str) -> "Observable":
        obj = json.loads(text)
        return bump(
            tuple(obj["center"]),
            tuple(obj["radii"]),
            profile=obj.get("profile", "hat"),
            amplitude=obj.get("amplitude", 1.0),
            plateau=obj.get("plateau", 0.0),
            offset=obj.get("offset", 0.0),
        )


def bump(
    center,
    radii,
    profile: str = "hat",
    amplitude: float = 1.0,
    plateau: float = 0.0,
    offset: float = 0.0,
) -> Observable:
    """Validated bump constructor.

    Requires the support box strictly inside |x| < 1/2 and strictly above the
    unit circle, and a theta radius at most pi/2 (theta wraps mod pi).
    """
    x0, y0, th0 = (float(c) for c in center)
    rx, ry, rth = (float(r) for r in radii)
    if profile not in _PROFILES:
        raise ValueError(f"unknown profile {profile!r}")
    if min(rx, ry, rth) <= 0:
        raise ValueError("radii must be positive")
    if rth > math.pi / 2.0:
        raise ValueError("theta radius must be at most pi/2")
    if not 0.0 <= plateau < 1.0:
        raise ValueError("plateau must lie in [0, 1)")
    if abs(x0) + rx >= 0.5 - _INTERIOR_MARGIN:
        raise ValueError("x-support must stay strictly inside |x| < 1/2")
    x_near = 0.0 if abs(x0) <= rx else abs(x0) - rx
    if y0 - ry <= math.sqrt(1.0 - x_near * x_near) + _INTERIOR_MARGIN:
        raise ValueError("y-support must stay strictly above the unit circle")
    return Observable(
        (x0, y0, th0 % math.pi),
        (rx, ry, rth),
        profile=profile,
        amplitude=float(amplitude),
        plateau=float(plateau),
        offset=float(offset),
    )


def evaluate_coords(f: Observable, x, y, theta) -> np.ndarray:
    """Evaluate on canonical coordinate arrays (theta any representative)."""
    x = np.asarray(x, dtype=float)
    u = np.abs(x - f.center[0]) / f.radii[0]
    u = np.maximum(u, np.abs(np.asarray(y, float) - f.center[1]) / f.radii[1])
    u = np.maximum(u, wrap_angle_pi(np.asarray(theta, float) - f.center[2]) / f.radii[2])
    s = np.clip((1.0 - u) / (1.0 - f.plateau), 0.0, 1.0)
    if f.profile == "smoothstep":
        s = s * s * (3.0 - 2.0 * s)
    return f.amplitude * s - f.offset


def evaluate_matrices(f: Observable, mats: np.ndarray) -> np.ndarray:
    """Evaluate on a stack of (possibly unreduced) basis matrices."""
    x, y, theta = reduce_batch(mats)
    return evaluate_coords(f, x, y, theta)


def evaluate(f: Observable, pt: LatticePoint) -> float:
    """Evaluate at a lattice point (reduced internally when necessary)."""
    if pt.reduced:
        x, y, theta = pt.coords
    else:
        xs, ys, thetas = reduce_batch(pt.entries[None])
        x, y, theta = xs[0], ys[0], thetas[0]
    return float(evaluate_coords(f, x, y, theta))


def haar_mean(f: Observable, n: int, stream: Stream) -> tuple[float, float]:
    """Monte Carlo Haar average of f with its standard error."""
    x, y, theta = sample_haar_coords(stream.generator, n)
    vals = evaluate_coords(f, x, y, theta)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n))


def normalize_zero_mean(f: Observable, n: int, stream: Stream) -> Observable:
    """Shift f by its estimated Haar mean; records the residual bookkeeping.

    The returned observable has offset increased by the estimate, mean 0 by
    construction, and the standard error of the estimate recorded (always at
    most sup_norm / sqrt(n)).
    """
    if n < 10**4:
        raise ValueError("mean estimation requires n >= 1e4")
    shift, stderr = haar_mean(f, n, stream)
    return dataclasses.replace(
        f,
        offset=f.offset + shift,
        mean=0.0,
        mean_stderr=stderr,
        zero_mean=True,
    )


# ---------------------------------------------------------------------------
# Countable dense family
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DenseFamily:
    """Dyadic hat-bump family on the block x in (-1/2, 1/2), y in (1, 2], theta in [0, pi).

    Level k places 2^k centers per axis at spacing 2^-k (theta scaled by pi)
    with radii 0.45 * 2^-k; members are enumerated level by level, then in
    (x, y, theta) lexicographic order.  Total count is (8^(depth+1) - 1) / 7.
    """

    grid_depth: int

    def __len__(self) -> int:
        return (8 ** (self.grid_depth + 1) - 1) // 7

    def member(self, index: int) -> Observable:
        if not 0 <= index < len(self):
            raise IndexError(index)
        level, base = 0, 0
        while index >= base + 8**level:
            base += 8**level
            level += 1
        rem = index - base
        n = 2**level
        i, rem = divmod(rem, n * n)
        j, l = divmod(rem, n)
        h = 1.0 / n
        return bump(
            (-0.5 + (i + 0.5) * h, 1.0 + (j + 0.5) * h, (l + 0.5) * h * math.pi),
            (0.45 * h, 0.45 * h, 0.45 * h * math.pi),
        )

    def __iter__(self):
        return (self.member(i) for i in range(len(self)))


def dense_family(grid_depth: int) -> DenseFamily:
    if not 0 <= grid_depth <= 8:
        raise ValueError("grid_depth must lie in [0, 8]")
    return DenseFamily(grid_depth)


# ---------------------------------------------------------------------------
# Presets and the metric-distortion certificate
# ---------------------------------------------------------------------------

def get_preset(name: str) -> Observable:
    """Load a named bump from the shipped preset library."""
    text = resources.files("horolab").joinpath("presets.json").read_text()
    presets = json.loads(text)
    if name not in presets:
        raise KeyError(f"unknown preset {name!r}; have {sorted(presets)}")
    return Observable.from_json(json.dumps(presets[name]))


@dataclass(frozen=True)
class DistortionReport:
    """Sampled ratio coordinate-distance / local path distance on a support box."""

    min_ratio: float
    max_ratio: float
    n_pairs: int
    pair_scale: float


def certify_lip_agy(
    f: Observable, stream: Stream, n_pairs: int = 10**4, pair_scale: float = 1e-3
) -> tuple[Observable, DistortionReport]:
    """Attach the distortion-adjusted Lipschitz constant to f.

    Samples nearby pairs on the support box, measures the ratio of coordinate
    distance to local path distance, and multiplies lip_coord by the largest
    ratio seen: |f(p) - f(q)| <= lip_coord * d_coord <= lip_agy * d_path on
    the sampled scale.
    """
    gen = stream.generator
    x0, y0, th0 = f.center
    rx, ry, rth = f.radii
    if min(f.radii) <= pair_scale:
        raise ValueError("pair_scale must be smaller than every support radius")
    # Centers keep pair_scale clearance so the perturbed endpoint stays in the
    # support box, hence inside the fundamental domain.
    lo = np.array([x0 - rx, y0 - ry, th0 - rth]) + pair_scale
    hi = np.array([x0 + rx, y0 + ry, th0 + rth]) - pair_scale
    ratios = np.empty(n_pairs)
    for k in range(n_pairs):
        c = gen.uniform(lo, hi)
        direction = gen.normal(size=3)
        direction /= np.linalg.norm(direction)
        d = c + pair_scale * direction
        p = from_coords(c[0], c[1], c[2] % (2 * math.pi))
        q = from_coords(d[0], d[1], d[2] % (2 * math.pi))
        coord_dist = float(np.linalg.norm(d - c))
        path_dist = _agy.agy_distance_local(p, q, subdivisions=4)
        ratios[k] = coord_dist / path_dist
    report = DistortionReport(float(ratios.min()), float(ratios.max()), n_pairs, pair_scale)
    out = dataclasses.replace(f, lip_agy=f.lip_coord * report.max_ratio)
    return out, report

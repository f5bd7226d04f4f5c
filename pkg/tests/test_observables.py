"""Bump observables: exact constants, zero-mean normalization, dense family."""
import math

import numpy as np
import pytest

import horolab as hl
from horolab import lattice as lat, observables as obs
from horolab.rng import Stream


def _oracle_haar_integral(f, n_grid=180):
    """Direct midpoint quadrature of f against Haar measure over its support box."""
    x0, y0, th0 = f.center
    rx, ry, rth = f.radii
    xs = x0 - rx + (np.arange(n_grid) + 0.5) * (2 * rx / n_grid)
    ys = y0 - ry + (np.arange(n_grid) + 0.5) * (2 * ry / n_grid)
    ths = th0 - rth + (np.arange(n_grid) + 0.5) * (2 * rth / n_grid)
    X, Y, TH = np.meshgrid(xs, ys, ths, indexing="ij")
    vals = obs.evaluate_coords(f, X, Y, TH) + f.offset  # raw bump, no offset
    cell = (2 * rx / n_grid) * (2 * ry / n_grid) * (2 * rth / n_grid)
    dens = 1.0 / Y**2 / (math.pi**2 / 3.0)  # theta folded to [0, pi)
    return float(np.sum(vals * dens) * cell) - f.offset


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def test_peak_value(bulk):
    pt = lat.from_coords(*bulk.center)
    assert obs.evaluate(bulk, pt) == pytest.approx(bulk.sup_norm)


def test_zero_below_support_systole(bulk, haar_points_1k):
    for pt in haar_points_1k:
        if hl.systole(pt) < bulk.support_systole:
            assert obs.evaluate(bulk, pt) == 0.0


def test_hat_midpoint_half_height(bulk):
    x0, y0, th0 = bulk.center
    pt = lat.from_coords(x0 + bulk.radii[0] / 2.0, y0, th0)
    assert obs.evaluate(bulk, pt) == pytest.approx(bulk.sup_norm / 2.0, abs=1e-12)


def test_evaluate_unreduced_and_wrapped_theta(bulk):
    x0, y0, th0 = bulk.center
    direct = obs.evaluate(bulk, lat.from_coords(x0, y0, th0 + 0.1))
    wrapped = obs.evaluate(bulk, lat.from_coords(x0, y0, th0 + 0.1 + math.pi))
    assert direct == pytest.approx(wrapped, abs=1e-12)
    unreduced = lat.LatticePoint(lat.matrix_from_coords(x0, y0, th0 + 0.1))
    assert obs.evaluate(bulk, unreduced) == pytest.approx(direct, abs=1e-9)


def test_bounded_by_sup_everywhere(bulk, haar_points_1k):
    vals = [obs.evaluate(bulk, pt) for pt in haar_points_1k]
    assert max(abs(v) for v in vals) <= bulk.sup_norm + 1e-12


def test_lipschitz_certificate_sampled(bulk):
    gen = Stream(73, 0).generator
    x0, y0, th0 = bulk.center
    rx, ry, rth = bulk.radii
    lo = np.array([x0 - 1.2 * rx, y0 - ry * 0.9, th0 - 1.2 * rth])
    hi = np.array([x0 + 1.2 * rx, y0 + 1.2 * ry, th0 + 1.2 * rth])
    for _ in range(10**4):
        a = gen.uniform(lo, hi)
        b = a + gen.normal(size=3) * 0.01
        pa = lat.from_coords(*a)
        pb = lat.from_coords(*b)
        lhs = abs(obs.evaluate(bulk, pa) - obs.evaluate(bulk, pb))
        assert lhs <= bulk.lip_coord * lat.coordinate_distance(pa, pb) + 1e-12


def test_smoothstep_profile_and_constants():
    f = obs.get_preset("smooth")
    assert f.profile == "smoothstep"
    assert f.lip_coord == pytest.approx(1.5 * f.amplitude / min(f.radii))
    pt = lat.from_coords(f.center[0] + f.radii[0] / 2.0, f.center[1], f.center[2])
    s = 0.5
    assert obs.evaluate(f, pt) == pytest.approx(f.amplitude * (3 * s**2 - 2 * s**3))


def test_plateau_profile():
    f = obs.get_preset("plateau")
    inside = lat.from_coords(f.center[0] + 0.4 * f.radii[0], f.center[1], f.center[2])
    assert obs.evaluate(f, inside) == pytest.approx(f.amplitude)
    assert f.lip_coord == pytest.approx(f.amplitude / ((1 - f.plateau) * min(f.radii)))


def test_bump_validation_errors():
    with pytest.raises(ValueError):
        obs.bump((0.3, 1.5, 0.0), (0.25, 0.2, 0.5))  # x-box reaches 0.55
    with pytest.raises(ValueError):
        obs.bump((0.0, 1.1, 0.0), (0.2, 0.2, 0.5))  # dips below the unit circle
    with pytest.raises(ValueError):
        obs.bump((0.0, 1.5, 0.0), (0.2, 0.2, 2.0))  # theta radius > pi/2
    with pytest.raises(ValueError):
        obs.bump((0.0, 1.5, 0.0), (0.2, 0.2, 0.5), profile="box")
    obs.bump((0.44, 2.0, 0.0), (0.05, 0.3, 0.5))  # off-center but valid


def test_support_systole_positive_and_exact(bulk):
    assert bulk.support_systole > 0
    assert bulk.support_systole == pytest.approx(1.0 / math.sqrt(bulk.center[1] + bulk.radii[1]))


# ---------------------------------------------------------------------------
# zero-mean normalization
# ---------------------------------------------------------------------------

def test_normalize_shift_matches_quadrature_oracle(bulk):
    fz = obs.normalize_zero_mean(bulk, 10**5, Stream(79, 0))
    oracle = _oracle_haar_integral(bulk)
    assert fz.offset == pytest.approx(oracle, abs=4 * fz.mean_stderr)
    assert fz.zero_mean and fz.mean == 0.0
    assert fz.mean_stderr <= bulk.sup_norm / math.sqrt(10**5)


def test_normalize_already_zero_mean(bulk):
    fz = obs.normalize_zero_mean(bulk, 10**5, Stream(83, 0))
    again = obs.normalize_zero_mean(fz, 10**5, Stream(89, 0))
    assert abs(again.offset - fz.offset) <= 2.0 * again.mean_stderr


def test_normalize_big_plateau_bump_shift_near_amplitude():
    # nearly-indicator bump covering most of the mass: shift approaches c
    c = 0.7
    f = obs.bump((0.0, 10.55, 0.0), (0.449, 9.5, math.pi / 2), amplitude=c, plateau=0.9)
    fz = obs.normalize_zero_mean(f, 10**5, Stream(97, 0))
    oracle = _oracle_haar_integral(f, n_grid=220)
    assert fz.offset == pytest.approx(oracle, abs=4 * fz.mean_stderr)
    # the domain keeps half its mass below y = 2, so coverage tops out near c/2
    assert fz.offset > 0.4 * c


def test_normalize_clt_halving():
    f = obs.get_preset("bulk")
    ratios = []
    for seed in range(5):
        a = obs.normalize_zero_mean(f, 2 * 10**4, Stream(1000 + seed, 0))
        b = obs.normalize_zero_mean(f, 4 * 10**4, Stream(2000 + seed, 0))
        ratios.append(a.mean_stderr / b.mean_stderr)
    assert np.mean(ratios) == pytest.approx(math.sqrt(2.0), rel=0.2)


def test_normalize_requires_large_n(bulk):
    with pytest.raises(ValueError):
        obs.normalize_zero_mean(bulk, 100, Stream(1, 0))


# ---------------------------------------------------------------------------
# dense family
# ---------------------------------------------------------------------------

def test_dense_family_counts():
    assert len(obs.dense_family(0)) == 1
    assert len(obs.dense_family(1)) == 9
    assert len(obs.dense_family(3)) == (8**4 - 1) // 7


def test_dense_family_members_valid_and_deterministic():
    fam = obs.dense_family(2)
    members = list(fam)
    assert len(members) == 73
    for g in members:
        assert g.support_systole > 0
        assert abs(g.center[0]) + g.radii[0] < 0.5
        assert g.center[1] - g.radii[1] > 1.0
    again = obs.dense_family(2)
    assert [m.center for m in again] == [m.center for m in members]


def test_dense_family_approximation_property():
    # an off-grid bump is sup-approximated by the member sharing its cell
    fam = obs.dense_family(4)
    h = 1.0 / 16.0
    target = obs.bump(
        (-0.5 + 3.2 * h, 1.0 + 5.7 * h, 4.4 * h * math.pi),
        (0.45 * h, 0.45 * h, 0.45 * h * math.pi),
    )
    eps3 = target.lip_coord * h * math.sqrt(3.0) / 2.0
    gen = Stream(101, 0).generator
    best = math.inf
    for g in fam:
        if g.radii[0] != target.radii[0]:
            continue
        if max(abs(g.center[0] - target.center[0]), abs(g.center[1] - target.center[1])) > h:
            continue
        sup_diff = 0.0
        for _ in range(2000):
            c = gen.uniform(
                [target.center[0] - 2 * h, target.center[1] - 2 * h, target.center[2] - 2 * h],
                [target.center[0] + 2 * h, target.center[1] + 2 * h, target.center[2] + 2 * h],
            )
            sup_diff = max(sup_diff, abs(
                float(obs.evaluate_coords(target, *c)) - float(obs.evaluate_coords(g, *c))
            ))
        best = min(best, sup_diff)
    assert best <= eps3


def test_dense_family_depth_guard():
    with pytest.raises(ValueError):
        obs.dense_family(9)


# ---------------------------------------------------------------------------
# presets, serialization, distortion certificate
# ---------------------------------------------------------------------------

def test_presets_load_and_roundtrip():
    for name in ("bulk", "horizontal", "wide", "smooth", "plateau", "cusp"):
        f = obs.get_preset(name)
        again = obs.Observable.from_json(f.to_json())
        assert again == f
    with pytest.raises(KeyError):
        obs.get_preset("nope")


def test_certify_lip_agy(bulk):
    f, report = obs.certify_lip_agy(bulk, Stream(103, 0), n_pairs=500)
    assert f.lip_agy == pytest.approx(f.lip_coord * report.max_ratio)
    assert f.lip_agy >= f.lip_coord * report.min_ratio
    assert 0 < report.min_ratio <= report.max_ratio

"""Direction-sup norm, flow differential, local distance, sub-divergence."""
import math

import numpy as np
import pytest

import horolab as hl
from horolab import agy, lattice as lat
from horolab.errors import ChartViolation, DegenerateLattice, ViolationFound
from horolab.rng import Stream


def _unit_tangent(gen, pt):
    w = gen.normal(size=4)
    w /= np.linalg.norm(w)
    return agy.TangentVec(complex(w[0], w[1]), complex(w[2], w[3]), pt)


# ---------------------------------------------------------------------------
# agy_norm
# ---------------------------------------------------------------------------

def test_norm_identity_class(haar_points_1k):
    for pt in haar_points_1k[:20]:
        m1, m2 = pt.basis
        assert agy.agy_norm(agy.TangentVec(m1, m2, pt)) == pytest.approx(1.0, abs=1e-12)


def test_norm_square_lattice_closed_form(square):
    # w = (1, 1) over basis (1, i): sup |cos+sin| / |cos + i sin| = sqrt(2) at pi/4
    v = agy.TangentVec(1.0 + 0j, 1.0 + 0j, square)
    assert agy.agy_norm(v) == pytest.approx(math.sqrt(2.0), abs=1e-12)
    assert agy.agy_norm_grid(v) == pytest.approx(math.sqrt(2.0), abs=1e-9)
    assert agy.agy_norm_enumeration(v) == pytest.approx(math.sqrt(2.0), rel=1e-3)


def test_norm_zero_vector(square):
    assert agy.agy_norm(agy.TangentVec(0j, 0j, square)) == 0.0


def test_norm_axioms(haar_points_1k):
    gen = Stream(41, 0).generator
    for pt in haar_points_1k[:30]:
        u = _unit_tangent(gen, pt)
        v = _unit_tangent(gen, pt)
        c = complex(gen.normal(), gen.normal())
        scaled = agy.TangentVec(c * u.w1, c * u.w2, pt)
        assert agy.agy_norm(scaled) == pytest.approx(abs(c) * agy.agy_norm(u), rel=1e-12)
        added = agy.TangentVec(u.w1 + v.w1, u.w2 + v.w2, pt)
        assert agy.agy_norm(added) <= agy.agy_norm(u) + agy.agy_norm(v) + 1e-12


def test_norm_directional_sup_equals_enumeration_oracle():
    # compact region {systole >= 0.5}: primitive directions up to 200 resolve the peak
    gen = Stream(43, 0).generator
    count = 0
    while count < 1000:
        x, y, th = (g[0] for g in lat.sample_haar_coords(gen, 1))
        if y > 4.0:
            continue
        pt = lat.from_coords(x, y, th)
        v = _unit_tangent(gen, pt)
        exact = agy.agy_norm(v)
        enum = agy.agy_norm_enumeration(v)
        assert enum <= exact * (1.0 + 1e-9)
        assert exact == pytest.approx(enum, rel=1e-3)
        count += 1


def test_norm_grid_route_agrees_with_pencil(haar_points_1k):
    gen = Stream(47, 0).generator
    for pt in haar_points_1k[:50]:
        v = _unit_tangent(gen, pt)
        assert agy.agy_norm_grid(v) == pytest.approx(agy.agy_norm(v), rel=1e-8)


def test_norm_degenerate_lattice_error(square):
    bad = lat.LatticePoint(np.array([[1.0, 1.0], [1e-14, 1e-14]]))
    with pytest.raises(DegenerateLattice):
        agy.agy_norm(agy.TangentVec(1 + 0j, 0j, bad))


# ---------------------------------------------------------------------------
# flow differential
# ---------------------------------------------------------------------------

def test_flow_differential_examples(square):
    v = agy.TangentVec(1j, 0j, square)
    out = agy.flow_differential(v, 3.0)
    assert out.w1 == pytest.approx(3.0 + 1.0j)
    assert out.w2 == 0j
    ident = agy.flow_differential(v, 0.0)
    assert ident.w1 == v.w1 and ident.w2 == v.w2


def test_flow_differential_linearity_and_cocycle(haar_points_1k):
    gen = Stream(53, 0).generator
    for pt in haar_points_1k[:20]:
        v = _unit_tangent(gen, pt)
        t = float(gen.uniform(0.5, 5.0))
        doubled = agy.flow_differential(agy.TangentVec(2 * v.w1, 2 * v.w2, pt), t)
        single = agy.flow_differential(v, t)
        assert doubled.w1 == pytest.approx(2 * single.w1)
        assert doubled.w2 == pytest.approx(2 * single.w2)
        s = float(gen.uniform(0.5, 5.0))
        comp = agy.flow_differential(agy.flow_differential(v, t), s)
        direct = agy.flow_differential(v, s + t)
        assert comp.w1 == pytest.approx(direct.w1, rel=1e-12)
        assert comp.w2 == pytest.approx(direct.w2, rel=1e-12)
        assert np.allclose(comp.basepoint.entries, direct.basepoint.entries, atol=1e-10)


def test_flow_differential_transforms_holonomy_pairing(square):
    # pairing with a transported connection matches the sheared holonomy rule
    v = agy.TangentVec(0.3 + 0.7j, -0.2 + 0.4j, square)
    t = 2.5
    out = agy.flow_differential(v, t)
    for p in ((1, 0), (0, 1), (3, -2)):
        before = v.pairing(*p)
        after = out.pairing(*p)
        assert after == pytest.approx(complex(before.real + t * before.imag, before.imag))


# ---------------------------------------------------------------------------
# local distance
# ---------------------------------------------------------------------------

def test_local_distance_zero_and_symmetry(haar_points_1k):
    gen = Stream(59, 0).generator
    for pt in haar_points_1k[:10]:
        assert agy.agy_distance_local(pt, pt, 8) == 0.0
        q = lat.from_coords(pt.x + 1e-3 * gen.uniform(-1, 1),
                            pt.y + 1e-3 * gen.uniform(-1, 1), pt.theta)
        d_pq = agy.agy_distance_local(pt, q, 16)
        d_qp = agy.agy_distance_local(q, pt, 16)
        assert abs(d_pq - d_qp) <= 1e-12 * max(1.0, d_pq)


def test_local_distance_subdivision_convergence(haar_points_1k):
    for pt in haar_points_1k[:10]:
        q = lat.from_coords(pt.x + 7e-4, pt.y + 7e-4, pt.theta)
        d8 = agy.agy_distance_local(pt, q, 8)
        d16 = agy.agy_distance_local(pt, q, 16)
        d32 = agy.agy_distance_local(pt, q, 32)
        assert abs(d16 - d8) < 1e-6
        assert d32 <= d16 + 1e-9 and d16 <= d8 + 1e-9


def test_local_distance_chart_violation(square):
    far = hl.reduce(lat.matrix_from_coords(0.3, 2.5, 1.0))
    with pytest.raises(ChartViolation):
        agy.agy_distance_local(square, far, 4)


# ---------------------------------------------------------------------------
# sub-divergence certificate
# ---------------------------------------------------------------------------

def test_subdivergence_unit_time_bound(haar_points_1k):
    gen = Stream(61, 0).generator
    vecs = [_unit_tangent(gen, pt) for pt in haar_points_1k[:100]]
    s = min(hl.systole(pt) for pt in haar_points_1k[:100])
    cert = agy.check_subdivergence(vecs, [1.0], s)
    assert cert.max_ratio <= agy.SUBDIV_COEFF * (1.0 + 1e-9)
    assert cert.alpha == 2.0 and cert.C >= 1.0


def test_subdivergence_real_class_and_sweep(haar_points_1k):
    gen = Stream(67, 0).generator
    pts = haar_points_1k[:200]
    vecs = []
    for pt in pts:
        vecs.append(_unit_tangent(gen, pt))
        vecs.append(agy.TangentVec(complex(gen.normal(), 0), complex(gen.normal(), 0), pt))
    s = min(hl.systole(pt) for pt in pts)
    cert = agy.check_subdivergence(vecs, [2.0, 10.0, 100.0], s, seed=67)
    assert cert.max_ratio <= agy.SUBDIV_COEFF * 100.0**2 * (1.0 + 1e-9)
    assert cert.n_samples == len(vecs)


def test_subdivergence_certificate_json(haar_points_1k):
    gen = Stream(71, 0).generator
    vecs = [_unit_tangent(gen, pt) for pt in haar_points_1k[:10]]
    cert = agy.check_subdivergence(vecs, [2.0], 0.01, seed=5)
    import json

    blob = json.loads(cert.to_json())
    assert set(blob) == {"alpha", "C", "s", "n_samples", "max_ratio", "seed"}
    assert blob["alpha"] == 2.0 and blob["seed"] == 5


def test_subdivergence_rejects_bad_grid_and_region(square):
    v = agy.TangentVec(1 + 0j, 1j, square)
    with pytest.raises(ValueError):
        agy.check_subdivergence([v], [0.5], 0.1)
    with pytest.raises(ValueError):
        agy.check_subdivergence([v], [2.0], 2.0)  # square systole is 1 < 2


def test_elementary_shear_bounds_vectorized():
    phis = np.linspace(0, 2 * math.pi, 4096, endpoint=False)
    ts = np.linspace(-100, 100, 2001)
    up, low = agy.elementary_shear_bounds(np.cos(phis)[:, None], np.sin(phis)[:, None], ts[None, :])
    assert up.all() and low.all()


def test_violation_error_carries_record():
    with pytest.raises(ViolationFound) as info:
        raise ViolationFound("boom", record={"t": 1})
    assert info.value.record == {"t": 1}

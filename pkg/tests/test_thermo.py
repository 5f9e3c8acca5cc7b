import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from teichmix import thermo as th

GOLDEN = (1 + math.sqrt(5)) / 2


def affine_halves():
    """Two letters of the 1-simplex with equal column sums: affine halves
    with constant Jacobian 1/2."""
    return [np.array([[2.0, 1.0], [0.0, 1.0]]), np.array([[1.0, 0.0], [1.0, 2.0]])]


# ------------------------------------------------------- Perron-Frobenius
def test_identity_not_primitive():
    with pytest.raises(th.NotPrimitive):
        th.pf_eigen(np.eye(3))


def test_pf_known_values():
    assert th.pf_eigen(np.array([[2, 1], [1, 1]])).lam == pytest.approx((3 + math.sqrt(5)) / 2, abs=1e-10)
    assert th.pf_eigen(np.array([[1, 1], [1, 0]])).lam == pytest.approx(GOLDEN, abs=1e-10)
    assert np.roots([1, -3, 1]).max() == pytest.approx((3 + math.sqrt(5)) / 2, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(arrays(np.int64, st.tuples(st.integers(2, 30)).map(lambda t: (t[0], t[0])), elements=st.integers(1, 9)))
def test_pf_matches_dense_solver(B):
    pf = th.pf_eigen(B)
    assert pf.lam == pytest.approx(th.dense_lambda1(B), rel=1e-8)
    assert (pf.right > 0).all() and (pf.left > 0).all()
    assert np.allclose(B @ pf.right, pf.lam * pf.right, rtol=1e-8)
    assert pf.left @ pf.right == pytest.approx(1.0)
    assert pf.gap > 0


def test_pf_on_letter_matrices(flagship):
    for B in flagship.Bs:
        lam = th.pf_eigen(B).lam
        assert abs(lam - th.dense_lambda1(B)) <= 1e-8 * lam


def test_spectral_radius_product_identities(flagship):
    Bs = flagship.Bs[:15]
    for X in Bs:
        assert th.dense_lambda1(X @ X) == pytest.approx(th.dense_lambda1(X) ** 2, rel=1e-10)
        for Y in Bs:
            assert th.dense_lambda1(X @ Y) == pytest.approx(th.dense_lambda1(Y @ X), rel=1e-10)


def test_wielandt_primitivity():
    assert th.is_primitive(np.array([[0, 1], [1, 1]]))
    assert not th.is_primitive(np.array([[0, 1], [1, 0]]))


# ------------------------------------------------------------- eigen band
def test_band_is_one_at_pf_vector(flagship):
    for B in flagship.Bs[:20]:
        pf = th.pf_eigen(B)
        assert (B @ pf.right).sum() / pf.lam == pytest.approx(1.0, abs=1e-12)


def test_single_letter_band(flagship):
    full = th.eigen_band(flagship.Bs, flagship.cell, 200, np.random.default_rng(3))
    one = th.eigen_band(flagship.Bs[7:8], flagship.cell, 200, np.random.default_rng(3))
    assert one[0] == full[7] == one.max()


def test_band_has_no_length_trend(flagship):
    chi = th.eigen_band(flagship.Bs, flagship.cell, 400, np.random.default_rng(1))
    steps = [a.steps for a in flagship.A]
    assert len(chi) >= 50 and np.isfinite(chi).all() and (chi >= 1).all()
    s, _ = th.slope(steps, np.log(chi))
    assert abs(s) <= 0.05


# ----------------------------------------------------------------- volumes
def test_simplex_area():
    cell = th.simplex_cell(3)
    assert cell.exact_volume() == pytest.approx(math.sqrt(3) / 2, rel=1e-12)
    v, se = th.rejection_volume(cell, 40_000, np.random.default_rng(0))
    assert v == pytest.approx(math.sqrt(3) / 2, rel=0.02)
    est = th.cell_volume(np.eye(3) + 1.0, cell, 4000, np.random.default_rng(1))
    assert est.stderr / est.volume < 0.02


def test_cell_volume_matches_exact_image_volume(flagship):
    x = flagship.Bs[0]
    est = th.cell_volume(x, flagship.cell, 8000, np.random.default_rng(2))
    exact = flagship.cell.image(x).exact_volume()
    assert est.volume == pytest.approx(exact, rel=max(4 * est.stderr / est.volume, 1e-3))


def test_nested_letters_shrink(flagship):
    rng = np.random.default_rng(0)
    for B in flagship.Bs[:10]:
        v1 = th.cell_volume(B, flagship.cell, 2000, rng).volume
        v2 = th.cell_volume(B @ B, flagship.cell, 2000, rng).volume
        assert v2 < v1


def test_volume_scales_with_cone_dimension(flagship):
    """``vol(C(x)) * lambda_1^d`` is flat in ``lambda_1`` for the cone dimension ``d``."""
    est = th.cell_volumes(flagship.Bs, flagship.cell, 4000, np.random.default_rng(3))
    lam = np.array([e.lam for e in est])
    vol = np.array([e.volume for e in est])
    assert max(e.stderr / e.volume for e in est) <= 0.02
    d = flagship.cell.slice.d
    s, _ = th.slope(np.log(lam), np.log(vol) + d * np.log(lam))
    assert abs(s) <= 0.05


def test_image_cells_lie_in_base(flagship):
    for B in flagship.Bs[:30]:
        img = flagship.cell.image(B)
        assert flagship.cell.contains(img.vertices, tol=1e-9).all()


def test_cells_do_not_overlap(flagship):
    rng = np.random.default_rng(0)
    cells = [flagship.cell.image(B) for B in flagship.Bs]
    Zc = th.hit_and_run(flagship.cell, 5000, rng)
    hits = sum(c.contains(Zc, tol=0).astype(int) for c in cells)
    assert (hits <= 1).all()
    for i, c in enumerate(cells[:40]):
        Z = th.hit_and_run(c, 50, rng)
        assert c.contains(Z, tol=0).all()
        others = sum(o.contains(Z, tol=0).sum() for j, o in enumerate(cells) if j != i)
        assert others == 0


# --------------------------------------------------------------- Jacobians
def test_jacobian_bound_zero_for_permutation():
    cell = th.simplex_cell(3)
    P = 3.0 * np.eye(3)[[1, 2, 0]]
    assert th.jacobian_bound(P, cell, 100, np.random.default_rng(0)) == pytest.approx(0.0, abs=1e-6)


def test_jacobian_bound_projective(flagship):
    B = flagship.Bs[3]
    a = th.jacobian_bound(B, flagship.cell, 100, np.random.default_rng(5))
    b = th.jacobian_bound(2 * B, flagship.cell, 100, np.random.default_rng(5))
    assert a == pytest.approx(b, rel=1e-6)


def test_jacobian_bound_uniform(flagship):
    jb = [th.jacobian_bound(B, flagship.cell, 100, np.random.default_rng(2)) for B in flagship.Bs]
    steps = [a.steps for a in flagship.A]
    assert np.isfinite(jb).all()
    assert abs(th.slope(steps, jb)[0]) <= 0.05


def test_expansion(flagship):
    bounds = [th.expansion_bounds(B, flagship.cell, 100, np.random.default_rng(4)) for B in flagship.Bs]
    assert min(b[0] for b in bounds) > 1
    assert all(math.isfinite(b[1]) for b in bounds)


# ---------------------------------------------------------------- pressure
def test_full_shift_pressure():
    shift = th.RoofShift.full_constant(3, 2.0)
    for s in (0.0, 0.3, 0.5493, 1.2):
        assert th.gurevich_pressure(shift, s, 0, 12).P == pytest.approx(math.log(3) - 2 * s, abs=1e-6)


def test_single_letter_pressure():
    shift = th.RoofShift.full_constant(1, 1.0)
    for s in (0.0, 0.5, 2.0):
        assert th.gurevich_pressure(shift, s, 0, 12).P == pytest.approx(-s, abs=1e-12)


def test_anchor_missing():
    with pytest.raises(th.AnchorMissing):
        th.gurevich_pressure(th.RoofShift.full_constant(2, 1.0), 0.5, 5, 4)


def test_pressure_decreasing_on_fixture(flagship):
    shift = th.letter_shift(flagship.Bs)
    P = [th.gurevich_pressure(shift, s, 0, 12).P for s in np.linspace(0.0, 1.0, 11)]
    assert all(b < a for a, b in zip(P, P[1:]))


def test_pressure_matches_periodic_orbit_oracle(flagship):
    sub = flagship.Bs[:3]
    shift = th.letter_shift(sub)
    for s in (0.1, 0.3):
        logZ = th.pressure_exact(sub, s, 0, 7)
        assert th.gurevich_pressure(shift, s, 0, 10).P == pytest.approx(logZ[-1] - logZ[-2], abs=1e-4)


# ------------------------------------------------------------------- tails
def test_full_shift_tail_exponent():
    shift = th.RoofShift.full_constant(3, 2.0)
    assert th.tail_exponent(shift, [0, 1, 2]) == pytest.approx(math.log(3) / 2, abs=1e-5)


def test_single_letter_has_no_sign_change():
    shift = th.RoofShift.full_constant(3, 2.0)
    with pytest.raises(th.NoSignChange):
        th.tail_exponent(shift, [1])


def test_empty_restriction():
    with pytest.raises(th.EmptyRestriction):
        th.tail_exponent(th.RoofShift.full_constant(3, 2.0), [])


def test_tail_sums_geometric_series():
    om = np.repeat([1.0, 2.0, 3.0, 4.0], [1, 2, 4, 8])
    sizes = np.repeat([1, 2, 3, 4], [1, 2, 4, 8])
    rep = th.tail_sums(om, [1, 2, 3, 4], sizes, math.log(4))
    assert rep.ratios == pytest.approx([0.5, 0.5, 0.5])


# -------------------------------------------------------------------- acip
def test_acip_constant_for_affine_full_shift():
    cell = th.simplex_cell(2)
    dens = th.acip(affine_halves(), cell, rng=np.random.default_rng(0))
    Z = th.hit_and_run(cell, 200, np.random.default_rng(1))
    assert np.allclose(dens(Z) * cell.exact_volume(), 1.0, atol=1e-8)


def test_acip_normalized(flagship):
    dens = th.acip(flagship.Bs, flagship.cell, rng=np.random.default_rng(0))
    assert dens.integrals @ dens.coefficients == pytest.approx(1.0, abs=1e-12)
    Z = th.hit_and_run(flagship.cell, 4000, np.random.default_rng(9), thin=3)
    assert flagship.cell.exact_volume() * dens(Z).mean() == pytest.approx(1.0, rel=0.02)


def test_acip_fixture(flagship):
    dens = th.acip(flagship.Bs, flagship.cell, rng=np.random.default_rng(0))
    assert 0 < dens.lower <= dens.upper < math.inf
    assert dens.residual < 1e-8 and dens.iterations <= 200
    # one more step of the discretized operator moves the density by < 1e-8
    after = dataclasses.replace(dens, coefficients=dens.pushed())
    assert np.abs(after(dens.nodes) - dens(dens.nodes)).max() < 1e-8


def test_acip_pointwise_invariance(flagship):
    dens = th.acip(flagship.Bs, flagship.cell, rng=np.random.default_rng(0))
    Z = th.hit_and_run(flagship.cell, 300, np.random.default_rng(5))
    T = th.transfer_step(dens, flagship.Bs, Z, 1.0)
    ratio = T / dens(Z)
    # the truncated alphabet leaks mass; after renormalizing, the pointwise
    # step agrees up to the polynomial projection error
    assert ratio.max() / ratio.min() - 1 < 1e-3


def test_acip_no_convergence():
    cell = th.simplex_cell(2)
    with pytest.raises(th.NoConvergence):
        th.acip(affine_halves()[:1] + [np.array([[1.0, 1.0], [0.2, 3.0]])], cell, iterations=1,
                tol=1e-300, rng=np.random.default_rng(0))


# --------------------------------------------------------------- helpers
def test_slope_exact_line():
    s, r2 = th.slope([0, 1, 2, 3], [1, 3, 5, 7])
    assert s == pytest.approx(2.0) and r2 == pytest.approx(1.0)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from teichmix import mixlab as ml
from teichmix import pipeline as pl
from teichmix import thermo as th


def dense_chain(flow):
    """Explicit transition matrix of the discretized flow, built state by state."""
    n, k = flow.states, flow.k
    P = np.zeros((n, n))
    H = flow.heights
    start = flow.start.reshape(k, k)
    for x in range(k):
        for y in range(k):
            s0 = start[x, y]
            for j in range(H[x, y] - 1):
                P[s0 + j, s0 + j + 1] = 1.0
            for z in range(k):
                P[s0 + H[x, y] - 1, start[y, z]] = flow.weights[z]
    return P


def small_flow(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(2, 4))
    return ml.SuspensionFlow(rng.uniform(0.5, 2.0, (k, k)), rng.uniform(0.2, 1.0, k), 0.25)


# ------------------------------------------------------------------ chain
@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_koopman_matches_dense_chain(seed):
    flow = small_flow(seed)
    P = dense_chain(flow)
    u = np.random.default_rng(seed).standard_normal(flow.states)
    assert np.allclose(flow.koopman(u), P @ u, atol=1e-12)
    assert np.allclose(flow.pi @ P, flow.pi, atol=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_correlation_matches_dense_powers(seed):
    flow = small_flow(seed)
    P = dense_chain(flow)
    f = ml.Observable((0,)).values(flow)
    g = ml.Observable((flow.k - 1,), window=(0.2, 0.7)).values(flow)
    t, C = ml.correlation(flow, f, g, 5.0)
    u = g.copy()
    for n in range(len(C)):
        assert C[n] == pytest.approx(flow.pi @ (f * u), abs=1e-12)
        u = P @ u
    assert t[1] == pytest.approx(0.25)


def test_observables_mean_zero_and_supported(fixture_setup):
    flow = fixture_setup.flow
    cyl = pl.heaviest_cylinder(fixture_setup.weights)
    f = ml.Observable(cyl).values(flow)
    x, _, _ = flow.coordinates()
    assert abs(flow.integral(f)) < 1e-12
    assert np.all(f[~np.isin(x, cyl)] == 0)


def test_correlation_at_zero_is_covariance(fixture_setup):
    flow = fixture_setup.flow
    f = ml.Observable((0, 1)).values(flow)
    _, C = ml.correlation(flow, f, f, 1.0)
    assert C[0] == pytest.approx(flow.integral(f * f) - flow.integral(f) ** 2, rel=1e-12)


def test_disjoint_cylinders_start_uncorrelated(fixture_setup):
    flow = fixture_setup.flow
    _, C = ml.correlation(flow, ml.Observable((0,)), ml.Observable((1,)), 1.0)
    # disjoint supports on the same fiber; only the mean-zero constants interact
    f = ml.Observable((0,)).values(flow)
    g = ml.Observable((1,)).values(flow)
    assert np.all(f * g == 0)
    assert C[0] == pytest.approx(0.0, abs=1e-15)


def test_flow_preserves_measure(fixture_setup):
    flow = fixture_setup.flow
    g = np.random.default_rng(0).random(flow.states)
    I = ml.evolve_integral(flow, g, 200)
    assert np.abs(I - I[0]).max() < 1e-6 * abs(I[0])


def test_not_mean_zero(fixture_setup):
    flow = fixture_setup.flow
    with pytest.raises(ml.NotMeanZero):
        ml.correlation(flow, np.ones(flow.states), ml.Observable((0,)), 1.0)


def test_grid_too_fine():
    with pytest.raises(ml.GridTooFine):
        ml.constant_flow(3, 1.0, 1e-9)
    with pytest.raises(ml.GridTooFine):
        ml.constant_flow(1000, 100.0, 0.01)


# ------------------------------------------------------------ decay fits
def test_exponential_fit_recovers_rate():
    t = np.linspace(0, 20, 201)
    fit = ml.decay_rate_fit(t, np.exp(-0.7 * t) * np.cos(0.0 * t))
    assert fit.rate == pytest.approx(0.7, abs=1e-10)
    assert fit.r2 == pytest.approx(1.0)
    assert fit.mixing()


def test_polynomial_decay_fits_poorly():
    t = np.linspace(0, 200, 801)
    fit = ml.decay_rate_fit(t, 1 / (1 + t))
    assert fit.r2 < 0.9
    assert not fit.mixing()


def test_zero_series_rejected():
    with pytest.raises(ml.NonPositiveSeries):
        ml.decay_rate_fit(np.arange(30.0), np.zeros(30))


def test_envelope_is_nonincreasing():
    rng = np.random.default_rng(0)
    t = np.arange(200.0)
    C = np.exp(-0.05 * t) * np.cos(t) + 1e-3 * rng.standard_normal(200)
    te, ae = ml.envelope(t, C)
    assert np.all(np.diff(ae) <= 0) and np.all(np.diff(te) > 0)


def test_constant_roof_oscillates_without_decay():
    flow = ml.constant_flow(5, 2.0, 0.25)
    t, C = ml.correlation(flow, ml.Observable((0, 1)), ml.Observable((0, 1)), 60.0)
    period = int(round(2.0 / 0.25))
    # letters are resampled each period while the fiber phase never spreads
    later = C[period::period]
    assert np.allclose(later, later[0], rtol=1e-9) and later[0] > 0.1 * C[0]
    assert np.allclose(C[period:2 * period], C[-period - 1:-1], rtol=1e-9)
    assert not ml.decay_rate_fit(t, C).mixing()


def test_fixture_correlation_decays(fixture_setup):
    flow = fixture_setup.flow
    f = ml.Observable(pl.heaviest_cylinder(fixture_setup.weights))
    t, C = ml.correlation(flow, f, f, 30 * flow.min_roof)
    fit = ml.decay_rate_fit(t, C)
    assert fit.rate > 0 and fit.r2 >= 0.9
    assert abs(C[-1]) < abs(C[0])


# ------------------------------------------------------------- good roof
def test_constant_roof_is_cohomologous():
    rep = ml.good_roof_check(constant=2.0, letters=3)
    assert rep.verdicts[:2] == (True, True)
    assert not rep.not_cohomologous
    assert rep.periodic_residual < 1e-12


def test_proportional_letters_leave_eigendirections_inconclusive():
    B = np.array([[2.0, 1.0], [1.0, 1.0]])
    rep = ml.good_roof_check([B, 3 * B], th.simplex_cell(2))
    assert rep.eigen_status == "inconclusive"
    # log lambda(B^a (3B)^b) = (a+b) log lambda + b log 3 is locally constant
    assert not rep.not_cohomologous


def test_fixture_roof_is_good(flagship):
    rep = ml.good_roof_check(flagship.Bs, flagship.cell)
    assert rep.verdicts == (True, True, True)
    assert rep.eigen_status == "distinct"
    assert rep.r1 > 0 and math.isfinite(rep.r2)


def test_periodic_obstruction_detects_non_additive_sums():
    words = {(0,): 1.0, (1,): 2.0, (0, 1): 3.0}
    assert ml.periodic_obstruction(words, 2) < 1e-12
    words[(0, 1)] = 3.5
    assert ml.periodic_obstruction(words, 2) > 0.05


# ------------------------------------------------------ skew contraction
def test_hilbert_distance_basics():
    P = np.array([[1.0, 2.0, 3.0]])
    assert ml.hilbert_distance(P, 5 * P)[0] == pytest.approx(0.0, abs=1e-15)
    Q = np.array([[1.0, 1.0, 1.0]])
    assert ml.hilbert_distance(P, Q)[0] == pytest.approx(math.log(3))


def test_single_positive_letter_contracts():
    rep = ml.skew_contract_check([np.array([[2.0, 1.0], [1.0, 1.0]])], samples=2000)
    assert rep.kappa > 1
    assert rep.per_letter.shape == (1,)


def test_fixture_dual_contraction(flagship):
    rep = ml.skew_contract_check(flagship.Bs, samples=10_000)
    assert rep.kappa > 1 and rep.pairs == 10_000


# ------------------------------------------------------------------ output
def test_csv_and_svg(tmp_path):
    t = np.linspace(0, 5, 21)
    C = np.exp(-t)
    ml.write_csv(tmp_path / "c.csv", t, C)
    ml.write_svg(tmp_path / "c.svg", t, C)
    rows = (tmp_path / "c.csv").read_text().splitlines()
    assert rows[0] == "t,C" and len(rows) == 22
    assert float(rows[-1].split(",")[1]) == pytest.approx(math.exp(-5))
    assert (tmp_path / "c.svg").read_text().startswith("<svg")

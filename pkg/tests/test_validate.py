import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lroom.errors import ConfigurationError
from lroom.experiments import build_problem
from lroom.materials import ConstantImpedance, Rigid
from lroom.fom import solve_all
from lroom.operators import SourceConfig
from lroom.validate import (ModalOracle, advection_operator, analytic_rigid_pressure, analytic_rigid_transform,
                            band_error, dispersion_point, frequency_response, linear_dispersion_ratio,
                            modal_response, threshold_crossing, DispersionPoint)
from lroom.weeks import TimeSignal, WeeksParams, frequency_grid

SRC = SourceConfig(1.0, 1.0, 0.2)


@pytest.fixture(scope="module")
def oracle():
    return ModalOracle(2.0, 2.0, SRC)


# ---------------------------------------------------------------- modal oracle

def test_first_axial_mode(oracle):
    f = oracle.mode_frequencies()
    assert f[0] == 0.0
    assert f[1] == pytest.approx(343.0 / 4.0, abs=1e-9)
    assert f[1] == pytest.approx(85.75, abs=1e-9)


def test_cutoff_below_band_rejected():
    with pytest.raises(ConfigurationError):
        ModalOracle(2.0, 2.0, SRC, f_cut=1000.0)


def test_initial_condition_is_reproduced(oracle):
    pts = np.array([[1.0, 1.0], [1.1, 0.95], [1.3, 1.2], [0.2, 0.2], [1.0, 1.4]])
    got = oracle.pressure(pts, [0.0])[0]
    ref = np.exp(-np.sum((pts - [1.0, 1.0]) ** 2, axis=1) / 0.2 ** 2)
    assert np.max(np.abs(got - ref)) < 1e-6


def test_doubling_the_cutoff_leaves_the_band_unchanged(oracle):
    times = np.arange(3000) * 1e-4
    a = analytic_rigid_pressure(oracle, (0.2, 0.2), times)
    b = analytic_rigid_pressure(ModalOracle(2.0, 2.0, SRC, f_cut=10000.0), (0.2, 0.2), times)
    f = np.fft.rfftfreq(times.size, 1e-4)
    sel = (f >= 20) & (f <= 1200)
    fa, fb = np.fft.rfft(a.values)[sel], np.fft.rfft(b.values)[sel]
    assert np.max(np.abs(fa - fb)) < 1e-8 * np.max(np.abs(fa))


def test_oracle_satisfies_the_wave_equation(oracle):
    c = 343.0
    ht, hx = 2e-6, 7e-4
    pts = np.array([[0.3, 0.4], [1.2, 0.7], [1.7, 1.6]])
    for t in (0.002, 0.0047):
        p = lambda q, tt: oracle.pressure(q, [tt])[0]  # noqa: E731
        ptt = (p(pts, t + ht) - 2 * p(pts, t) + p(pts, t - ht)) / ht ** 2
        lap = sum((p(pts + d, t) - 2 * p(pts, t) + p(pts - d, t)) / hx ** 2
                  for d in (np.array([hx, 0]), np.array([0, hx])))
        assert np.max(np.abs(ptt - c * c * lap)) < 1e-4 * np.max(np.abs(ptt))


def test_laplace_form_matches_time_form(oracle):
    # numerically integrate exp(-s t) p(t) for a decaying s
    s = 400.0 + 300j
    t = np.linspace(0, 0.05, 200001)
    p = analytic_rigid_pressure(oracle, (0.2, 0.2), t).values
    from scipy.integrate import simpson
    ref = simpson(np.exp(-s * t) * p, x=t)
    assert abs(analytic_rigid_transform(oracle, (0.2, 0.2), [s])[0] - ref) < 1e-8 * abs(ref)


# ---------------------------------------------------------------- spectra

def test_band_error_examples():
    t = np.arange(2000) * 1e-4
    x = TimeSignal(t, np.sin(2 * np.pi * 300 * t) * np.exp(-3 * t))
    assert band_error(x, x) == 0.0
    assert band_error(x, TimeSignal(t, 2 * x.values)) == pytest.approx(20 * np.log10(2), abs=1e-12)
    assert band_error(x, TimeSignal(t, 2 * x.values)) == pytest.approx(6.02, abs=0.005)


def test_band_error_rejects_band_above_nyquist():
    t = np.arange(100) * 1e-3      # Nyquist 500 Hz
    x = TimeSignal(t, np.cos(t))
    with pytest.raises(ConfigurationError):
        band_error(x, x, 20.0, 1200.0)
    with pytest.raises(ConfigurationError):
        band_error(x, TimeSignal(t[:50], x.values[:50]))


def test_sine_at_bin_center_has_one_bin():
    n, dt = 1000, 1e-4
    t = np.arange(n) * dt
    f0 = 37 / (n * dt)
    f, db = frequency_response(TimeSignal(t, np.sin(2 * np.pi * f0 * t)))
    assert f[np.argmax(db)] == pytest.approx(f0)
    assert np.sum(db > -100) == 1
    assert f[1] - f[0] == pytest.approx(1 / (n * dt))


@settings(max_examples=25, deadline=None)
@given(st.integers(8, 500), st.integers(0, 2 ** 31 - 1))
def test_parseval(n, seed):
    x = np.random.default_rng(seed).normal(size=n)
    spec = np.fft.fft(x)
    assert abs(np.sum(x ** 2) - np.sum(np.abs(spec) ** 2) / n) < 1e-10 * np.sum(x ** 2)


@pytest.mark.slow
def test_rigid_room_peaks_sit_on_oracle_modes(table1_run, oracle):
    """Spectral peaks of the P=6 response lie within one bin of a mode of the oracle."""
    times = table1_run["times"]
    sig = TimeSignal(times, table1_run["signals"]["P6"])
    f, db = frequency_response(sig)
    df = f[1] - f[0]
    modes = oracle.mode_frequencies(600.0)
    sel = np.flatnonzero((f > 40) & (f < 500))
    peaks = [i for i in sel if db[i] > db[i - 1] and db[i] > db[i + 1] and db[i] > -30]
    assert len(peaks) >= 5
    for i in peaks:
        assert np.min(np.abs(modes - f[i])) <= df


# ---------------------------------------------------------------- modal surrogate

def test_modal_response_matches_fom_transform():
    prob = build_problem(n_el=3, order=2)
    grid = frequency_grid(WeeksParams(20.0, 2000.0, 16))
    for model in (Rigid(), ConstantImpedance(2500.0)):
        resp = modal_response(prob.ops, model, prob.p0, prob.rows)
        fom = solve_all(prob.ops, model, prob.p0, grid, prob.rows, store_field=False)
        ref = fom.receivers[:, 0]
        assert np.max(np.abs(resp.transform(grid.s)[:, 0] - ref)) < 1e-9 * np.max(np.abs(ref))


def test_modal_response_limits():
    prob = build_problem(n_el=3, order=2)
    with pytest.raises(ConfigurationError):
        modal_response(prob.ops, Rigid(), prob.p0, prob.rows, max_dofs=10)
    resp = modal_response(prob.ops, Rigid(), prob.p0, prob.rows)
    # t = 0 reproduces the interpolated initial condition at the receiver
    assert resp.pressure([0.0]).values[0, 0] == pytest.approx((prob.rows @ prob.p0)[0], abs=1e-10)


# ---------------------------------------------------------------- dispersion

def test_advection_operator_structure():
    op = advection_operator(3, 5)
    assert op.n_dofs == 15
    assert np.allclose(op.mass, op.mass.T) and np.linalg.eigvalsh(op.mass).min() > 0
    assert np.allclose(op.conv, -op.conv.T, atol=1e-13)      # periodic convection is skew
    assert op.mass.sum() == pytest.approx(1.0)
    assert np.max(np.abs(op.conv @ np.ones(15))) < 1e-13


def test_linear_elements_match_closed_form():
    for ppw in (4.0, 6.0, 10.0):
        pt = dispersion_point(1, ppw, method="exact")
        kh = 2 * np.pi / pt.ppw
        assert pt.ratio == pytest.approx(linear_dispersion_ratio(kh), abs=1e-6)


def test_resolved_limit_tends_to_one():
    pt = dispersion_point(4, 40.0)
    assert abs(pt.ratio - 1) < 1e-6
    assert pt.reliable


def test_weeks_and_exact_dispersion_agree():
    for order, ppw in ((2, 5.0), (3, 4.0)):
        a = dispersion_point(order, ppw, method="weeks")
        b = dispersion_point(order, ppw, method="exact")
        assert abs(a.ratio - b.ratio) < 1e-6


def test_rom_keeps_the_fom_dispersion():
    for order, ppw in ((1, 4.0), (2, 3.0), (4, 6.0)):
        a = dispersion_point(order, ppw, method="weeks")
        b = dispersion_point(order, ppw, method="rom")
        assert abs(a.ratio - b.ratio) < 1e-6


def test_unresolved_waves_are_flagged():
    assert not dispersion_point(1, 1.2, method="exact").reliable


def test_threshold_crossing_interpolates():
    pts = [DispersionPoint(1, p, p, r, True) for p, r in ((2, 0.9), (3, 0.97), (4, 0.99), (5, 0.995))]
    assert threshold_crossing(pts) == pytest.approx(3.5)
    assert threshold_crossing(pts[:1]) == np.inf



# ---------------------------------------------------------------- rigid room, N_el = 15

TABLE1_DB = {1: 22.5, 2: 20.1, 4: 1.3, 6: 0.2}


@pytest.mark.slow
def test_band_error_decreases_with_order(table1_run):
    err = table1_run["band_error_db"]
    assert all(a > b for a, b in zip(err, err[1:]))


@pytest.mark.slow
def test_p4_band_error_near_table_value(table1_run):
    err = dict(zip(table1_run["orders"], table1_run["band_error_db"]))
    assert err[4] <= 2.5


@pytest.mark.slow
def test_band_errors_within_half_of_table_values(table1_run):
    for p, e in zip(table1_run["orders"], table1_run["band_error_db"]):
        assert abs(e - TABLE1_DB[p]) <= 0.5 * TABLE1_DB[p], f"P={p}: {e:.2f} dB vs {TABLE1_DB[p]}"

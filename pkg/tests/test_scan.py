import dataclasses

import numpy as np
import pytest

from qpmshg.materials import DomainError, PolingSpec
from qpmshg.scan import (SENSITIVITY_TRIPLES, PROCESS_TABLE_TRIPLES, ModeBank, NoQPMSolutionError, NotPhaseMatchableError,
                         ScanResult, allowed_type_ii_triples, find_phase_matched_wavelength,
                         mismatch_slope, optimal_poling_period, period_slope_analytic, process_table,
                         sensitivity_scan, spectrum_vs_geometry, process_label, triples_by_name, uniform_pump)
from qpmshg.shg import BandTables, BetaTable, ProcessTriple, sh_spectrum

O = (0, 0)
FUND = ProcessTriple.type_ii(O, O, O)


def flat_tables(n=1.9):
    keys = [("TE", O), ("TM", O)]
    return BandTables(pump={k: BetaTable.dispersionless(n, (5.0, 10.0)) for k in keys},
                      sh={k: BetaTable.dispersionless(n, (10.0, 20.0)) for k in keys})


def test_cubic_fits_reproduce_samples(bank):
    res = bank.fit_residuals()
    # isolated modes are smooth in k; the SH (0,1)/(2,0) pair hybridizes inside the band
    hybrid = {("sh", "TE", (0, 1)), ("sh", "TE", (2, 0)), ("sh", "TM", (0, 1)), ("sh", "TM", (2, 0))}
    assert res and max(v for k, v in res.items() if k not in hybrid) < 2e-5
    assert max(res.values()) < 5e-5


def test_bank_samples_span_pump_band(bank):
    lo, hi = bank.sh_range_nm
    assert lo < 400.0 - 3 * 5.0 / 2 * 0.98 / 2 and hi > 400.0 + 3 * 5.0 / 2 * 0.98 / 2
    assert np.allclose(bank.sh_wavelengths, bank.pump_wavelengths / 2)
    k = 2 * np.pi / bank.pump_wavelengths
    assert np.allclose(np.diff(k), np.diff(k)[0])


def test_bank_tracks_low_order_modes(bank):
    for key in [("TE", O), ("TM", O), ("TE", (0, 1)), ("TM", (0, 1)), ("TE", (1, 0))]:
        assert key in bank.pump_modes and key in bank.sh_modes


def test_dispersionless_zero_order_is_degenerate():
    t = ProcessTriple.type_ii(O, O, O, harmonic=0)
    pm = find_phase_matched_wavelength(t, flat_tables(), PolingSpec(), (395.0, 405.0))
    assert pm.degenerate


def test_not_phase_matchable_outside_bracket(te_bank):
    with pytest.raises(NotPhaseMatchableError):
        find_phase_matched_wavelength(FUND, te_bank.tables, PolingSpec(3.0), te_bank.sh_range_nm)


def test_fundamental_root_and_residual(te_bank):
    pm = find_phase_matched_wavelength(FUND, te_bank.tables, te_bank.device.poling, te_bank.sh_range_nm)
    assert pm.residual < 1e-6
    assert pm.wavelength_nm == pytest.approx(398.6, abs=1.5)


def test_root_stable_when_samples_double(device, settings, te_bank):
    dense = ModeBank(device, 800.0, 10.0, dataclasses.replace(settings, samples=13),
                     sh_polarizations=("TE",)).build()
    for t in (FUND, ProcessTriple.type_ii(O, (0, 1), (0, 1))):
        a = find_phase_matched_wavelength(t, te_bank.tables, device.poling, te_bank.sh_range_nm).wavelength_nm
        b = find_phase_matched_wavelength(t, dense.tables, device.poling, dense.sh_range_nm).wavelength_nm
        assert abs(a - b) < 0.05


@pytest.mark.parametrize("kind,expected,tol", [("II", 7.62, 0.20), ("0", 3.08, 0.15), ("I", 1.83, 0.10)])
def test_optimal_periods(bank, kind, expected, tol):
    res = optimal_poling_period(kind, 800.0, bank.tables)
    assert res.period_um == pytest.approx(expected, abs=tol)
    assert res.harmonic_period_um == pytest.approx(res.harmonic * res.period_um)


def test_negative_mismatch_has_no_solution():
    tables = BandTables(pump={k: BetaTable.dispersionless(1.95, (5.0, 10.0)) for k in [("TE", O), ("TM", O)]},
                        sh={k: BetaTable.dispersionless(1.9, (10.0, 20.0)) for k in [("TE", O), ("TM", O)]})
    with pytest.raises(NoQPMSolutionError):
        optimal_poling_period("II", 800.0, tables)


def test_period_scan_matches_implicit_derivative(te_bank, device, settings):
    values = np.linspace(7.61, 7.63, 3)
    res = sensitivity_scan("period", values, [FUND], device, settings, bank=te_bank)
    lam = res.wavelengths_nm[1, 0]
    analytic = period_slope_analytic(FUND, te_bank.tables, device.poling, lam)
    assert res.slopes[0] == pytest.approx(analytic, rel=0.01)


def test_period_scan_triples_nearly_coincide(te_bank, device, settings):
    res = sensitivity_scan("Lambda", np.linspace(7.52, 7.72, 5), SENSITIVITY_TRIPLES, device, settings, bank=te_bank)
    spread = res.spread()
    assert np.all(np.isfinite(spread))
    assert np.all(np.abs(spread / spread.mean() - 1) < 0.1)
    assert res.shifts_nm[2].tolist() == [0.0] * len(SENSITIVITY_TRIPLES)


def test_scan_range_must_contain_nominal(device, settings, te_bank):
    with pytest.raises(DomainError):
        sensitivity_scan("period", [8.0, 8.1], [FUND], device, settings, bank=te_bank)
    with pytest.raises(DomainError):
        sensitivity_scan("duty", [0.5], [FUND], device, settings, bank=te_bank)


def test_scan_grid_monotone():
    with pytest.raises(ValueError):
        ScanResult("period", np.array([1.0, 1.0]), 1.0, [], np.zeros((2, 0)), np.zeros((2, 0)), np.zeros(0))


def test_scan_rows_export(te_bank, device, settings):
    res = sensitivity_scan("period", [7.62], [FUND], device, settings, bank=te_bank)
    assert list(res.rows()) == [("period", 7.62, FUND.name, 0.0)]


def test_mismatch_slope_matches_finite_difference(te_bank):
    from qpmshg.shg import degenerate_mismatch, wavenumber

    lam, h = 399.0, 1e-3
    fd = (degenerate_mismatch(FUND, wavenumber(lam + h), te_bank.tables)
          - degenerate_mismatch(FUND, wavenumber(lam - h), te_bank.tables)) / (2 * h)
    assert mismatch_slope(FUND, te_bank.tables, lam) == pytest.approx(fd, rel=1e-6)


def test_allowed_triples_exclude_parity_forbidden(te_bank):
    triples, d = allowed_type_ii_triples(te_bank)
    assert FUND in triples
    assert all(t.x_parity == 0 for t in triples)
    assert len(d) > len(triples)


def test_process_table_basics(te_bank):
    rows = process_table(te_bank, points=201)
    assert rows[0].triple == FUND and rows[0].rel_power == 1.0
    assert all(r.triple.x_parity == 0 for r in rows)
    assert all(0 <= r.rel_power <= 1 for r in rows if not r.flag)
    # lines whose pump band leaves the sampled range are kept but flagged
    assert all(np.isnan(r.rel_power) for r in rows if r.flag)
    names = {r.triple for r in rows}
    assert set(PROCESS_TABLE_TRIPLES) <= names
    with pytest.raises(DomainError):
        process_table(te_bank, power="area")


def test_process_labels():
    assert process_label(FUND) == "00 + 00 -> 00"
    assert process_label(ProcessTriple.type_ii((1, 0), (0, 1), O)) == "10 + 01 -> 00"


def test_triples_by_name_round_trip():
    for t in PROCESS_TABLE_TRIPLES + (ProcessTriple(("TM", O), ("TM", O), ("TM", (0, 1)), 2),):
        assert triples_by_name([t.name]) == [t]


def test_single_sample_geometry_spectrum_equals_direct(te_bank, device, settings):
    lam = np.linspace(396.0, 402.0, 61)
    out = spectrum_vs_geometry("width", [5.0], device, settings=settings, lambda2_nm=lam, pump_points=512)
    assert len(out) == 1
    triples, d = allowed_type_ii_triples(te_bank)
    direct = sh_spectrum(uniform_pump(te_bank), triples, te_bank.tables, d, device.geometry.length_um,
                         device.poling, lam, points=512)
    assert np.array_equal(out[0].ideal.intensity, direct.intensity)
    assert out[0].broadened.integrated() == pytest.approx(out[0].ideal.integrated(), rel=1e-3)


@pytest.mark.slow
def test_line_positions_monotone_in_width(device, settings):
    lam = np.linspace(392.0, 408.0, 11)
    out = spectrum_vs_geometry("width", [4.0, 5.0, 6.0], device, settings=settings, lambda2_nm=lam, pump_points=512)
    pos = [g.lines[FUND.name] for g in out]
    assert np.all(np.diff(pos) > 0) or np.all(np.diff(pos) < 0)

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qpmshg.materials import (REFERENCE_INCREMENT, REFERENCE_INDEX, ConfigurationError, DispersionModel,
                              DomainError, NonlinearTensor, PolingSpec, WaveguideGeometry, nonlinear_element,
                              poling_harmonic_amplitude, refractive_index)
from qpmshg.oracles import fft_poling_coefficients


def test_surface_index_on_axis(geometry):
    assert refractive_index("x", 800.0, 0.0, 1e-12, geometry) == pytest.approx(1.76619, abs=1e-4)


def test_outside_core_column_is_substrate(geometry):
    assert refractive_index("x", 800.0, 3.0, 5.0, geometry) == pytest.approx(1.75719, abs=1e-4)


def test_air_above_surface(geometry):
    assert refractive_index("y", 800.0, 0.0, -1.0, geometry) == 1.0


@pytest.mark.parametrize("nm", [400.0, 800.0])
@pytest.mark.parametrize("axis", ["x", "y"])
def test_reference_values_reproduced(dispersion, nm, axis):
    assert float(dispersion.substrate_index(axis, nm)) == pytest.approx(REFERENCE_INDEX[nm][axis], abs=1e-4)
    assert float(dispersion.increment(axis, nm)) == pytest.approx(REFERENCE_INCREMENT[nm][axis], abs=1e-4)


def test_indices_at_least_one_over_domain(dispersion):
    lam = np.linspace(350, 1100, 151)
    for axis in "xyz":
        assert np.all(dispersion.substrate_index(axis, lam) >= 1.0)
        assert np.all(dispersion.substrate_index(axis, lam) + dispersion.increment(axis, lam) >= 1.0)


def test_out_of_range_wavelength(geometry):
    with pytest.raises(DomainError):
        refractive_index("x", 300.0, 0.0, 1.0, geometry)
    with pytest.raises(DomainError):
        DispersionModel().substrate_index("x", 1200.0)


def test_profile_monotone_toward_substrate(geometry):
    y = np.linspace(0, 40, 400)
    for axis in "xyz":
        n = refractive_index(axis, 800.0, 0.0, y, geometry)
        assert np.all(np.diff(n) <= 0)
        assert n[0] == pytest.approx(float(DispersionModel().substrate_index(axis, 800.0)
                                           + DispersionModel().increment(axis, 800.0)))


def test_printed_profile_variant_grows_with_depth(geometry):
    d = DispersionModel(profile="printed")
    n = refractive_index("x", 800.0, 0.0, np.array([0.0, 5.0, 20.0]), geometry, d)
    assert n[0] < n[1] < n[2]


def test_geometry_validation():
    with pytest.raises(ConfigurationError):
        WaveguideGeometry(width=-1)
    with pytest.raises(ConfigurationError):
        WaveguideGeometry(window=(-2.0, 2.0, -5.0, 40.0))
    with pytest.raises(ConfigurationError):
        WaveguideGeometry(window=(-15.0, 15.0, 1.0, 40.0))


def test_poling_validation():
    with pytest.raises(ConfigurationError):
        PolingSpec(period=0)
    with pytest.raises(ConfigurationError):
        PolingSpec(duty_ratio=1.0)


@pytest.mark.parametrize("duty,m,expected", [(0.5, 1, 2 / np.pi), (0.5, 2, 0.0), (0.75, 2, 1 / np.pi)])
def test_harmonic_amplitude_examples(duty, m, expected):
    assert poling_harmonic_amplitude(duty, m) == pytest.approx(expected, abs=1e-12)
    assert fft_poling_coefficients(duty, [m])[0] == pytest.approx(expected, abs=1e-6)


def test_harmonic_amplitude_rejects_zero_order():
    with pytest.raises(DomainError):
        poling_harmonic_amplitude(0.5, 0)


@given(st.floats(0.01, 0.99), st.integers(1, 12))
def test_duty_symmetry(duty, m):
    assert poling_harmonic_amplitude(duty, m) == pytest.approx(poling_harmonic_amplitude(1 - duty, m), abs=1e-12)


@given(st.integers(1, 9), st.integers(1, 6))
def test_integer_product_kills_harmonic(num, m):
    duty = num / 10
    if abs(m * duty - round(m * duty)) < 1e-12:
        assert poling_harmonic_amplitude(duty, m) == 0.0


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 0.95))
def test_parseval_bound_and_fft_agreement(duty):
    orders = list(range(1, 8))
    closed = np.array([poling_harmonic_amplitude(duty, m) for m in orders])
    # |c_0|^2 + 2 sum |c_M|^2 / 4 over both signs is at most the unit power
    assert (2 * duty - 1) ** 2 + 2 * np.sum((closed / 2) ** 2) <= 1 + 1e-12
    assert np.max(np.abs(closed - fft_poling_coefficients(duty, orders))) <= 1e-6


def test_nonlinear_elements():
    assert nonlinear_element("0") == 10.7
    assert nonlinear_element("I") == 2.65
    assert nonlinear_element("II") == 2.65
    with pytest.raises(DomainError):
        nonlinear_element("III")
    assert NonlinearTensor().element("type II") == 2.65

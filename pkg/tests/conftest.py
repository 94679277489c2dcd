import pytest

from qpmshg.fem import build_mesh
from qpmshg.materials import DispersionModel, WaveguideGeometry
from qpmshg.modes import solve_modes
from qpmshg.scan import Device, ModeBank, SolverSettings


@pytest.fixture(scope="session")
def geometry():
    return WaveguideGeometry()


@pytest.fixture(scope="session")
def dispersion():
    return DispersionModel()


@pytest.fixture(scope="session")
def mesh(geometry):
    return build_mesh(geometry, 0.4, 2.0)


@pytest.fixture(scope="session")
def modes800(geometry, dispersion, mesh):
    return {pol: solve_modes(geometry, dispersion, 800.0, pol, mesh=mesh) for pol in ("TE", "TM")}


@pytest.fixture(scope="session")
def cache_dir(tmp_path_factory):
    return str(tmp_path_factory.mktemp("modecache"))


@pytest.fixture(scope="session")
def settings(cache_dir):
    return SolverSettings(cache_dir=cache_dir)


@pytest.fixture(scope="session")
def device():
    return Device()


@pytest.fixture(scope="session")
def bank(device, settings):
    """Default device, 800 nm / 10 nm pump, TE and TM in both bands."""
    return ModeBank(device, 800.0, 10.0, settings).build()


@pytest.fixture(scope="session")
def te_bank(device, settings):
    """Same as ``bank`` but with TE-only SH modes, as used by scans and spectra."""
    return ModeBank(device, 800.0, 10.0, settings, sh_polarizations=("TE",)).build()



ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

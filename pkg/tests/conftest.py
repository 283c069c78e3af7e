"""Session fixtures shared by the module tests and the acceptance suite.

The expensive reproduction runs are computed once per session.
"""
import pytest

from lroom import experiments as ex

_VERDICTS = []


@pytest.fixture(scope="session")
def verdict():
    """Record one PASS/FAIL line; the lines are repeated in the terminal summary."""
    def record(n, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
        print(line)
        _VERDICTS.append(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def table1_run(tmp_path_factory):
    return ex.run_table1(tmp_path_factory.mktemp("table1"))


@pytest.fixture(scope="session")
def fig6_run(tmp_path_factory):
    return ex.run_fig6(tmp_path_factory.mktemp("fig6"))


@pytest.fixture(scope="session")
def zs_study():
    return ex.zs_study()


@pytest.fixture(scope="session")
def fig7_run(tmp_path_factory, zs_study):
    return ex.run_fig7(tmp_path_factory.mktemp("fig7"), study=zs_study)


@pytest.fixture(scope="session")
def fig8_run(tmp_path_factory, zs_study):
    return ex.run_fig8(tmp_path_factory.mktemp("fig8"), study=zs_study, repeats=1)


@pytest.fixture(scope="session")
def porous_study():
    return ex.porous_study()


@pytest.fixture(scope="session")
def fig10_run(tmp_path_factory, porous_study):
    return ex.run_fig10(tmp_path_factory.mktemp("fig10"), study=porous_study)


@pytest.fixture(scope="session")
def fig11_run(tmp_path_factory, porous_study):
    return ex.run_fig11(tmp_path_factory.mktemp("fig11"), study=porous_study, repeats=3)


@pytest.fixture(scope="session")
def table2_run(tmp_path_factory):
    return ex.run_table2(tmp_path_factory.mktemp("table2"))


@pytest.fixture(scope="session")
def dispersion_run(tmp_path_factory):
    return ex.run_dispersion(tmp_path_factory.mktemp("dispersion"))

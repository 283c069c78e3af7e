import numpy as np
import pytest

from lroom.errors import ConfigurationError, MissingArtifactError
from lroom.experiments import build_problem
from lroom.fom import solve_all
from lroom.io import read_basis, read_csv, read_solution, write_basis, write_csv, write_signal_csv, write_solution
from lroom.materials import ConstantImpedance
from lroom.rom import compute_basis
from lroom.weeks import TimeSignal, WeeksParams, frequency_grid


@pytest.fixture(scope="module")
def solution():
    prob = build_problem(n_el=3, order=2, receivers=((0.2, 0.2), (1.5, 0.3)))
    return solve_all(prob.ops, ConstantImpedance(2000.0), prob.p0, frequency_grid(WeeksParams(30.0, 900.0, 8)),
                     prob.rows, mu=2000.0)


def test_solution_archive_round_trip(solution, tmp_path):
    write_solution(solution, tmp_path / "a.bin")
    back = read_solution(tmp_path / "a.bin")
    assert np.array_equal(back.p_sigma, solution.p_sigma) and np.array_equal(back.p_y, solution.p_y)
    assert np.array_equal(back.receivers, solution.receivers)
    assert np.array_equal(back.s, solution.s)
    assert back.params == solution.params and back.bc == solution.bc and back.mu == 2000.0
    write_solution(back, tmp_path / "b.bin")
    assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()


def test_solution_payload_is_little_endian_f64(solution, tmp_path):
    write_solution(solution, tmp_path / "a.bin")
    raw = (tmp_path / "a.bin").read_bytes()
    tail = np.frombuffer(raw[-8 * solution.p_y.size:], "<f8")
    assert np.array_equal(tail, solution.p_y.ravel(order="F"))


def test_basis_archive_round_trip(tmp_path):
    a = np.random.default_rng(0).normal(size=(40, 12))
    basis = compute_basis(a, eps_pod=1e-8)
    write_basis(basis, tmp_path / "b.bin")
    back = read_basis(tmp_path / "b.bin")
    assert np.array_equal(back.phi, basis.phi) and np.array_equal(back.singular_values, basis.singular_values)
    write_basis(back, tmp_path / "c.bin")
    assert (tmp_path / "b.bin").read_bytes() == (tmp_path / "c.bin").read_bytes()


def test_archive_errors(tmp_path, solution):
    with pytest.raises(MissingArtifactError):
        read_solution(tmp_path / "missing.bin")
    with pytest.raises(MissingArtifactError):
        read_basis(tmp_path / "missing.bin")
    (tmp_path / "junk.bin").write_bytes(b"nope" + bytes(40))
    with pytest.raises(ConfigurationError):
        read_solution(tmp_path / "junk.bin")
    with pytest.raises(ConfigurationError):
        read_basis(tmp_path / "junk.bin")
    write_solution(solution, tmp_path / "a.bin")
    (tmp_path / "cut.bin").write_bytes((tmp_path / "a.bin").read_bytes()[:-8])
    with pytest.raises(ConfigurationError):
        read_solution(tmp_path / "cut.bin")


def test_csv_is_deterministic_and_round_trips(tmp_path):
    rows = [(0.1, 1e-300, 3), (np.float64(2.5), -0.0, np.int64(7))]
    write_csv(tmp_path / "a.csv", ["x", "y", "n"], rows)
    write_csv(tmp_path / "b.csv", ["x", "y", "n"], rows)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    text = (tmp_path / "a.csv").read_text()
    assert text.splitlines()[1] == "0.1,1e-300,3"
    header, data = read_csv(tmp_path / "a.csv")
    assert header == ["x", "y", "n"] and data[1, 0] == 2.5


def test_signal_csv_exact_floats(tmp_path):
    t = np.arange(5) * 1e-4
    v = np.sin(np.arange(5) * 0.37)
    write_signal_csv(tmp_path / "s.csv", TimeSignal(t, v))
    _, data = read_csv(tmp_path / "s.csv")
    assert np.array_equal(data[:, 0], t) and np.array_equal(data[:, 1], v)

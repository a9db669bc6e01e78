import math

import numpy as np
import pytest

import fracspec


def first_mode(x, y):
    return 2.0 * np.sin(np.pi * x) * np.sin(np.pi * y)


@pytest.fixture(scope="module")
def problem():
    return fracspec.Problem(dim=2, elements=4, order=2)


@pytest.fixture(scope="module")
def basis(problem):
    return fracspec.eigensolve(problem, evaluators=2)


def test_basis_matches_dense_eigensolver(problem, basis):
    import scipy.linalg

    k, m = problem.stiffness(), problem.mass()
    ref = scipy.linalg.eigh(k, m, eigvals_only=True)
    assert len(basis) == problem.size == 49
    np.testing.assert_allclose(basis.values, ref, rtol=1e-8)
    phi = basis.vectors
    np.testing.assert_allclose(phi.T @ m @ phi, np.eye(len(basis)), atol=1e-8)
    assert basis.max_residual() <= 1e-8


def test_counts(problem, basis):
    values = basis.values
    k = int(np.argmax(np.diff(values[10:40]))) + 11
    shift = 0.5 * (values[k - 1] + values[k])
    expected = int(np.sum(values >= shift))
    assert fracspec.count_geq(problem, shift) == expected
    assert abs(fracspec.count_geq_kpm(problem, shift, degree=256, probes=64) - expected) < 3


@pytest.mark.parametrize("alpha", [0.0, 0.5, 1.0, 2.0])
def test_poisson_first_mode(problem, basis, alpha):
    f = problem.project(first_mode)
    u = fracspec.solve_poisson(basis, f, alpha)
    lam = 2.0 * math.pi**2
    exact = lambda x, y: first_mode(x, y) * lam ** (-alpha / 2)
    assert problem.l2_error(u, exact) < 5e-3


def test_operator_inverts_solve(problem, basis):
    f = problem.project(first_mode)
    u = fracspec.solve_poisson(basis, f, 1.2)
    np.testing.assert_allclose(fracspec.apply_fractional(basis, u, 1.2), f, atol=1e-9)


def test_diffusion_decays(problem, basis):
    u0 = problem.project(first_mode)
    norms = [np.linalg.norm(fracspec.solve_diffusion(basis, u0, 1.0, t)) for t in (0.0, 0.1, 0.5)]
    assert norms[0] > norms[1] > norms[2]


def test_save_and_load(tmp_path, problem, basis):
    basis.save(str(tmp_path / "b"))
    loaded = fracspec.load_basis(problem, str(tmp_path / "b"))
    np.testing.assert_array_equal(loaded.values, basis.values)
    other = fracspec.Problem(dim=2, elements=4, order=3)
    with pytest.raises(fracspec.FracspecError):
        fracspec.load_basis(other, str(tmp_path / "b"))


def test_invalid_arguments(problem, basis):
    with pytest.raises(ValueError):
        fracspec.solve_poisson(basis, np.zeros(3), 1.0)
    with pytest.raises(ValueError):
        fracspec.solve_poisson(basis, np.zeros(problem.size), 2.5)
    with pytest.raises(ValueError):
        fracspec.Problem(order=9)

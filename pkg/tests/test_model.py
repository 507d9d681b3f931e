import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kpochaos.classical import vector_field
from kpochaos.errors import ConfigError, ConvergenceError
from kpochaos.model import (FockDimension, ModelParams, PhaseState, annihilation,
                            apply_hamiltonian, build_hamiltonian, classical_energy,
                            find_potential_minimum, parity_signs, potential,
                            potential_gradient, potential_hessian)

DIM = FockDimension(30)


def test_fock_dimension():
    assert DIM.per_mode == 31 and DIM.total == 961
    assert DIM.index(2, 5) == 2 * 31 + 5
    with pytest.raises(ConfigError):
        FockDimension(1)


@pytest.mark.parametrize("bad", [{"K": 0.0}, {"K": -1.0}, {"p1": math.inf}, {"xi0": math.nan}])
def test_params_reject_invalid(bad):
    with pytest.raises(ConfigError):
        ModelParams(**bad)


def test_hamiltonian_elements():
    H0 = build_hamiltonian(ModelParams.paper(0.0), DIM)
    assert H0[DIM.index(2, 0), DIM.index(2, 0)] == pytest.approx(1.0, abs=1e-15)
    assert H0[DIM.index(2, 0), DIM.index(0, 0)] == pytest.approx(-3 * math.sqrt(2) / 2, abs=1e-14)
    H1 = build_hamiltonian(ModelParams.paper(1.0), DIM)
    assert H1[DIM.index(1, 0), DIM.index(0, 1)] == pytest.approx(-1.0, abs=1e-15)


@pytest.mark.parametrize("xi0", [0.0, 0.3, 1.0])
def test_hamiltonian_hermitian_and_real(xi0):
    H = build_hamiltonian(ModelParams.paper(xi0), DIM)
    assert np.array_equal(H, H.conj().T)
    assert np.all(H.imag == 0)


def test_decoupled_block_structure():
    H = build_hamiltonian(ModelParams.paper(0.0), DIM).reshape(31, 31, 31, 31)
    m1, m2, n1, n2 = np.indices(H.shape)
    assert np.all(H[(m1 != n1) & (m2 != n2)] == 0)


def test_hamiltonian_matches_operator_algebra():
    # independent route: H from ladder operators with explicit Kronecker products
    p = ModelParams(K=0.7, p1=1.3, p2=2.1, delta=0.4, xi0=0.25)
    d = 8
    a = annihilation(d)
    I = np.eye(d)
    a1, a2 = np.kron(a, I), np.kron(I, a)
    H = np.zeros((d * d, d * d), dtype=complex)
    for ai, pi in ((a1, p.p1), (a2, p.p2)):
        ad = ai.conj().T
        H += p.K / 2 * ad @ ad @ ai @ ai - pi / 2 * (ai @ ai + ad @ ad) + p.delta * ad @ ai
    H -= p.xi0 * (a1.conj().T @ a2 + a2.conj().T @ a1)
    np.testing.assert_allclose(build_hamiltonian(p, FockDimension(d - 1)), H, atol=1e-13)


@given(st.integers(0, 2**32 - 1), st.floats(-1.5, 1.5))
def test_matrix_free_apply_matches_dense(seed, xi0):
    p = ModelParams.paper(xi0)
    dim = FockDimension(6)
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=(7, 7)) + 1j * rng.normal(size=(7, 7))
    dense = (build_hamiltonian(p, dim) @ psi.ravel()).reshape(7, 7)
    np.testing.assert_allclose(apply_hamiltonian(psi, p), dense, atol=1e-12 * np.abs(dense).max())


def test_parity_signs():
    s = parity_signs(31)
    assert s.size == 961 and np.sum(s > 0) == 16 * 16 + 15 * 15


def test_classical_energy_examples():
    assert classical_energy(PhaseState(0, 0, 0, 0), ModelParams.paper(0.3)) == 0.0
    e = classical_energy(PhaseState(math.sqrt(3), math.sqrt(math.pi), 0, 0), ModelParams.paper(0))
    assert e == pytest.approx(-(9 + math.pi ** 2) / 4, abs=1e-13)
    # exact symbolic evaluation of the polynomial (sympy, 20 digits)
    e1 = classical_energy(PhaseState(2.0, 2.03, 0, 0), ModelParams.paper(1.0))
    assert e1 == pytest.approx(-8.2876403805890894782, abs=1e-12)


def test_potential_examples():
    assert potential(0.0, 0.0, ModelParams.paper(1.0)) == 0.0
    assert potential(math.sqrt(3), 0.0, ModelParams.paper(0.0)) == pytest.approx(-2.25, abs=1e-14)


@pytest.mark.parametrize("xi0,expected,value", [
    # Nelder-Mead minimisation of the polynomial (scipy, xatol 1e-12)
    (0.3, (1.81819764, 1.85360775), -5.683435171780403),
    (1.0, (2.00351188, 2.03168101), -8.287703198204515),
])
def test_minimum_against_direct_minimisation(xi0, expected, value):
    p = ModelParams.paper(xi0)
    m = find_potential_minimum(p)
    assert (m.X1, m.X2) == pytest.approx(expected, abs=1e-7)
    assert potential(m.X1, m.X2, p) == pytest.approx(value, abs=1e-12)


@pytest.mark.parametrize("xi0,shown", [(0.0, (1.73, 1.77)), (0.3, (1.82, 1.85)), (1.0, (2.0, 2.03))])
def test_minimum_matches_quoted_coordinates(xi0, shown):
    m = find_potential_minimum(ModelParams.paper(xi0))
    assert (m.X1, m.X2) == pytest.approx(shown, abs=0.005)
    assert np.linalg.norm(potential_gradient(m.X1, m.X2, ModelParams.paper(xi0))) <= 1e-10
    assert np.all(np.linalg.eigvalsh(potential_hessian(m.X1, m.X2, ModelParams.paper(xi0))) > 0)


def test_minimum_exact_when_decoupled():
    m = find_potential_minimum(ModelParams.paper(0.0), (-1, 1))
    assert (m.X1, m.X2) == pytest.approx((-math.sqrt(3), math.sqrt(math.pi)), abs=1e-14)
    assert m.quadrant == (-1, 1)


def test_minimum_nonconvergence_reports_error():
    # pumps below the detuning leave no off-origin minimum to find
    with pytest.raises((ConvergenceError, ConfigError)):
        find_potential_minimum(ModelParams(p1=-1.0, p2=-1.0))


@given(st.tuples(*[st.floats(-2.5, 2.5)] * 4), st.sampled_from([0.0, 0.3, 1.0]))
def test_energy_equals_potential_at_rest(x, xi0):
    p = ModelParams.paper(xi0)
    s = PhaseState(x[0], x[1], 0.0, 0.0)
    assert classical_energy(s, p) == pytest.approx(potential(x[0], x[1], p), abs=1e-12)


def test_hamiltonian_flow_matches_energy_gradient():
    rng = np.random.default_rng(11)
    h = 1e-6
    for xi0 in (0.0, 0.3, 1.0):
        p = ModelParams.paper(xi0)
        for _ in range(100 // 3 + 1):
            z = rng.uniform(-2.5, 2.5, 4)
            grad = np.empty(4)
            for k in range(4):
                e = np.zeros(4)
                e[k] = h
                grad[k] = (classical_energy(PhaseState.from_array(z + e), p)
                           - classical_energy(PhaseState.from_array(z - e), p)) / (2 * h)
            # x' = dH/dy, y' = -dH/dx
            flow = np.concatenate([grad[2:], -grad[:2]])
            f = vector_field(PhaseState.from_array(z), p)
            np.testing.assert_allclose(f, flow, rtol=1e-6, atol=1e-6 * np.abs(f).max())

import math

import numpy as np
import pytest
import scipy.linalg as sl
from hypothesis import given, strategies as st

from kpochaos import spectral as sp
from kpochaos.errors import ConfigError, FitError, ParityMixingError
from kpochaos.model import FockDimension, ModelParams, build_hamiltonian, parity_signs
from kpochaos.quantum import product_coherent_state


def test_two_by_two():
    eig = sp.eigendecompose(np.array([[0.0, -1.0], [-1.0, 0.0]]))
    np.testing.assert_allclose(eig.energies, [-1.0, 1.0], atol=1e-15)


def test_rejects_non_hermitian():
    with pytest.raises(ConfigError):
        sp.eigendecompose(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_kerr_only_spectrum_exact():
    dim = FockDimension(30)
    H = build_hamiltonian(ModelParams(p1=0.0, p2=0.0), dim)
    eig = sp.eigendecompose(H)
    n = np.arange(31)
    e = 0.5 * (n * (n - 1))
    want = np.sort((e[:, None] + e[None, :]).ravel())
    assert np.array_equal(eig.energies, want)
    even, odd = sp.parity_split(eig)
    # every eigenvector is a basis state with the right parity
    signs = parity_signs(31)
    for k in even:
        assert signs[np.argmax(np.abs(eig.vectors[:, k]))] == 1


@pytest.mark.parametrize("xi0", [0.0, 0.3, 1.0])
def test_eigensystem_invariants(eigensystems, xi0):
    H, eig = eigensystems(xi0)
    V, E = eig.vectors, eig.energies
    normH = np.linalg.norm(H, 2)
    assert np.all(np.diff(E) >= 0)
    assert np.abs(H @ V - V * E).max() <= 1e-8 * normH
    assert np.abs(V.conj().T @ V - np.eye(E.size)).max() <= 1e-10
    assert np.linalg.norm(V @ np.diag(E) @ V.conj().T - H) <= 1e-7 * np.linalg.norm(H)


def test_lowest_level_against_inverse_iteration(eigensystems):
    H, eig = eigensystems(1.0)
    Hr = H.real
    n = Hr.shape[0]
    lu = sl.lu_factor(Hr + 20 * np.eye(n))
    # even and odd sectors separately: their ground states are nearly degenerate
    lows = []
    for start in (0, 31):
        v = np.zeros(n)
        v[start] = 1.0
        for _ in range(300):
            v = sl.lu_solve(lu, v)
            v /= np.linalg.norm(v)
        e = v @ Hr @ v
        for _ in range(3):
            v = np.linalg.solve(Hr - e * np.eye(n) + 1e-13 * np.eye(n), v)
            v /= np.linalg.norm(v)
            e = v @ Hr @ v
        lows.append(e)
    assert eig.energies[0] == pytest.approx(min(lows), abs=1e-8)
    assert sorted(lows) == pytest.approx(list(eig.energies[:2]), abs=1e-8)
    # deeper than the classical double-well bottom
    assert eig.energies[0] < -(9 + math.pi ** 2) / 4


@pytest.mark.parametrize("xi0", [0.0, 0.3, 1.0])
def test_parity_partition(eigensystems, xi0):
    _, eig = eigensystems(xi0)
    eig = sp.resolve_parity_mixing(eig)
    even, odd = sp.parity_split(eig)
    assert len(even) == 481 and len(even) + len(odd) == 961


def test_parity_mixing_detected_and_resolved():
    # Kerr-only levels |0,0>, |1,0>, |0,1>, |1,1> are all at E = 0
    H = build_hamiltonian(ModelParams(p1=0.0, p2=0.0), FockDimension(3))
    eig = sp.eigendecompose(H)
    V = eig.vectors.copy()
    # rotate a degenerate even/odd pair into a mixture
    idx = [np.argmax(np.abs(V[:, k])) for k in range(V.shape[1])]
    even_k = next(k for k in range(16) if eig.energies[k] == 0 and parity_signs(4)[idx[k]] > 0)
    odd_k = next(k for k in range(16) if eig.energies[k] == 0 and parity_signs(4)[idx[k]] < 0)
    a, b = V[:, even_k].copy(), V[:, odd_k].copy()
    V[:, even_k], V[:, odd_k] = (a + b) / math.sqrt(2), (a - b) / math.sqrt(2)
    mixed = sp.Eigensystem(eig.energies, V)
    with pytest.raises(ParityMixingError):
        sp.parity_split(mixed)
    fixed = sp.resolve_parity_mixing(mixed)
    even, odd = sp.parity_split(fixed)
    assert len(even) == 8 and len(odd) == 8


# -- OTOC --------------------------------------------------------------------

def test_otoc_anchors_at_zero_time(eigensystems):
    _, eig = eigensystems(0.3)
    ev = sp.EigenbasisOTOC(eig)
    rng = np.random.default_rng(5)
    for _ in range(3):
        psi = np.zeros((31, 31), dtype=complex)
        psi[:6, :6] = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
        psi /= np.linalg.norm(psi)
        assert ev(psi, 1, 1, [0.0]).values[0] == pytest.approx(1.0, abs=1e-10)
        assert ev(psi, 2, 1, [0.0]).values[0] == pytest.approx(0.0, abs=1e-10)


def test_otoc_decoupled_cross_term_vanishes(eigensystems):
    _, eig = eigensystems(0.0)
    res = sp.quantum_otoc(eig, sp.otoc_initial_state(30), 2, 1, np.arange(0, 20.01, 0.5))
    assert np.abs(res.values).max() <= 1e-10


@pytest.mark.parametrize("xi0", [0.0, 0.3, 1.0])
def test_otoc_reality_on_default_grid(eigensystems, xi0):
    _, eig = eigensystems(xi0)
    res = sp.quantum_otoc(eig, sp.otoc_initial_state(30), 1, 1, np.round(np.arange(201) * 0.1, 12))
    assert res.max_imag <= 1e-8
    assert np.all(res.values >= 0)


def test_otoc_initial_state():
    psi = sp.otoc_initial_state(30)
    want = product_coherent_state(0.5j * math.cos(0.65 * math.pi), 0.5j * math.sin(0.65 * math.pi), 30)
    assert np.array_equal(psi, want)


def test_otoc_eigenbasis_matches_direct_evolution(eigensystems):
    _, eig = eigensystems(0.3)
    psi0 = sp.otoc_initial_state(30)
    t = [0.0, 0.5, 1.0]
    a = sp.quantum_otoc(eig, psi0, 1, 1, t).values
    b = sp.direct_otoc(ModelParams.paper(0.3), FockDimension(30), psi0, 1, 1, t).values
    np.testing.assert_allclose(a, b, rtol=1e-4)


# -- spacings and fit --------------------------------------------------------

def test_spacings_examples():
    np.testing.assert_array_equal(sp.level_spacings([0, 1, 3, 6], 3), [1, 2, 3])
    assert np.all(sp.level_spacings(np.arange(20.0), 10) == 1.0)
    with pytest.raises(ConfigError):
        sp.level_spacings([0, 1, 2], 3)
    with pytest.raises(ConfigError):
        sp.level_spacings([0, 2, 1], 1)
    np.testing.assert_array_equal(sp.level_spacings([0, 5, 6, 10], 2, smallest_values=True), [1, 4])


def test_decoupled_even_sector_has_near_degeneracies(eigensystems):
    _, eig = eigensystems(0.0)
    s = sp.level_spacings(sp.even_sector_energies(eig), 50)
    assert s.min() <= 0.05


@given(st.lists(st.floats(0, 10), min_size=1, max_size=40))
def test_cumulative_counts(values):
    xs, N = sp.cumulative_counts(values)
    assert np.all(np.diff(xs) >= 0)
    for x, n in zip(xs, N):
        assert n == sum(v <= x for v in values)


def test_brody_fit_synthetic_poisson():
    s = np.random.default_rng(7).exponential(size=500)
    fit = sp.brody_fit(s)
    assert -0.1 <= fit.omega <= 0.15
    assert fit.A > 0 and fit.beta > 0


def test_brody_fit_synthetic_wigner():
    u = np.random.default_rng(7).uniform(size=500)
    # inverse CDF of the Wigner surmise P(s) = 2 s exp(-s^2)
    s = np.sqrt(-np.log(u))
    fit = sp.brody_fit(s)
    assert 0.85 <= fit.omega <= 1.15


def test_brody_fit_recovers_generating_parameters():
    omega, beta = 0.4, 1.3
    u = (np.arange(200) + 0.5) / 200
    s = (-np.log(1 - u) / beta) ** (1 / (omega + 1))
    fit = sp.brody_fit(s)
    assert fit.omega == pytest.approx(omega, abs=0.05)


def test_brody_fit_degenerate_inputs():
    with pytest.raises(FitError):
        sp.brody_fit(np.ones(20))
    with pytest.raises(ConfigError):
        sp.brody_fit(np.arange(5.0))

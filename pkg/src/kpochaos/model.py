"""Two coupled Kerr parametric oscillators: parameters, Hamiltonians, potential.

Quantum Hamiltonian (photon-number basis, two modes)::

    H = sum_i [ hbar K/2 a_i^+2 a_i^2 - hbar p_i/2 (a_i^2 + a_i^+2) + hbar Delta a_i^+ a_i ]
        - hbar xi0 (a_1^+ a_2 + a_2^+ a_1)

Basis states |n1, n2> are flattened row-major, ``index = n1 * (n_max + 1) + n2``,
so a state vector reshaped to ``(n_max + 1, n_max + 1)`` is indexed ``psi[n1, n2]``.

The classical model replaces a_i by alpha_i = x_i + i y_i.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, ConvergenceError

BASIS_ORDER = "row-major (n1, n2): index = n1 * (n_max + 1) + n2"

PAPER_COUPLINGS = (0.0, 0.3, 1.0)


@dataclass(frozen=True)
class ModelParams:
    """Physical constants in units hbar = K = 1 by default."""

    hbar: float = 1.0
    K: float = 1.0
    p1: float = 3.0
    p2: float = math.pi
    delta: float = 0.0
    xi0: float = 0.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not math.isfinite(value):
                raise ConfigError(f"parameter {name} must be finite, got {value!r}")
        if self.K <= 0:
            raise ConfigError(f"Kerr coefficient K must be positive, got {self.K}")
        if self.hbar <= 0:
            raise ConfigError(f"hbar must be positive, got {self.hbar}")

    @classmethod
    def paper(cls, xi0: float = 0.0) -> "ModelParams":
        """Parameter set used throughout: hbar=K=1, p1=3, p2=pi, Delta=0."""
        return cls(xi0=xi0)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class FockDimension:
    n_max: int = 30

    def __post_init__(self):
        if int(self.n_max) != self.n_max or self.n_max < 2:
            raise ConfigError(f"n_max must be an integer >= 2, got {self.n_max!r}")

    @property
    def per_mode(self) -> int:
        return self.n_max + 1

    @property
    def total(self) -> int:
        return self.per_mode ** 2

    def index(self, n1: int, n2: int) -> int:
        return n1 * self.per_mode + n2


@dataclass(frozen=True)
class PhaseState:
    """Classical phase-space point; alpha_i = x_i + i y_i."""

    x1: float
    x2: float
    y1: float
    y2: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2, self.y1, self.y2], dtype=float)

    @classmethod
    def from_array(cls, arr) -> "PhaseState":
        x1, x2, y1, y2 = (float(v) for v in arr)
        return cls(x1, x2, y1, y2)

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in (self.x1, self.x2, self.y1, self.y2))


@dataclass(frozen=True)
class PotentialMinimum:
    X1: float
    X2: float
    quadrant: tuple[int, int]

    def __str__(self):
        return f"({self.X1:.2f}, {self.X2:.2f}) in quadrant {self.quadrant}"


# ---------------------------------------------------------------------------
# quantum operators


def annihilation(d: int) -> np.ndarray:
    """Single-mode annihilation operator truncated to ``d`` levels."""
    return np.diag(np.sqrt(np.arange(1, d, dtype=float)), k=1)


def _single_mode_hamiltonian(p: float, params: ModelParams, d: int) -> np.ndarray:
    n = np.arange(d, dtype=float)
    h = np.diag(params.hbar * (0.5 * params.K * n * (n - 1.0) + params.delta * n))
    pump = -0.5 * params.hbar * p * np.sqrt(n[:-2] + 1.0) * np.sqrt(n[:-2] + 2.0)
    h[np.arange(d - 2), np.arange(2, d)] = pump  # <n|a^2|n+2>
    h[np.arange(2, d), np.arange(d - 2)] = pump
    return h


def build_hamiltonian(params: ModelParams, dim: FockDimension) -> np.ndarray:
    """Dense Hermitian Hamiltonian matrix of shape ``(dim.total, dim.total)``.

    Only the upper triangle is computed; the lower triangle is its conjugate
    transpose, so Hermiticity holds bit-exactly.
    """
    d = dim.per_mode
    eye = np.eye(d)
    a = annihilation(d)
    h = np.kron(_single_mode_hamiltonian(params.p1, params, d), eye)
    h += np.kron(eye, _single_mode_hamiltonian(params.p2, params, d))
    h -= params.hbar * params.xi0 * (np.kron(a.T, a) + np.kron(a, a.T))
    upper = np.triu(h).astype(complex)
    return upper + np.triu(upper, k=1).conj().T


def apply_hamiltonian(psi: np.ndarray, params: ModelParams) -> np.ndarray:
    """Matrix-free ``H @ psi`` for ``psi`` shaped ``(d, d)`` (indices n1, n2)."""
    d = psi.shape[0]
    hb = params.hbar
    n = np.arange(d, dtype=float)
    diag1 = hb * (0.5 * params.K * n * (n - 1.0) + params.delta * n)
    out = (diag1[:, None] + diag1[None, :]) * psi

    # pump: <n|a^2|n+2> = sqrt((n+1)(n+2))
    s2 = np.sqrt((n[:-2] + 1.0) * (n[:-2] + 2.0))
    c1 = -0.5 * hb * params.p1
    c2 = -0.5 * hb * params.p2
    out[:-2, :] += c1 * s2[:, None] * psi[2:, :]
    out[2:, :] += c1 * s2[:, None] * psi[:-2, :]
    out[:, :-2] += c2 * s2[None, :] * psi[:, 2:]
    out[:, 2:] += c2 * s2[None, :] * psi[:, :-2]

    if params.xi0 != 0.0:
        # a1^+ a2 |n1-1, n2+1> = sqrt(n1) sqrt(n2+1) |n1, n2>
        s = np.sqrt(n[1:])[:, None] * np.sqrt(n[:-1] + 1.0)[None, :]
        g = -hb * params.xi0
        out[1:, :-1] += g * s * psi[:-1, 1:]
        out[:-1, 1:] += g * s * psi[1:, :-1]
    return out


def quadrature_operators(dim: FockDimension) -> dict[str, np.ndarray]:
    """x_i = (a_i + a_i^+)/2 and y_i = (a_i - a_i^+)/(2i) on the two-mode space."""
    d = dim.per_mode
    a = annihilation(d).astype(complex)
    eye = np.eye(d)
    x = 0.5 * (a + a.T)
    y = (a - a.T) / 2j
    return {
        "x1": np.kron(x, eye),
        "x2": np.kron(eye, x),
        "y1": np.kron(y, eye),
        "y2": np.kron(eye, y),
    }


def parity_signs(d: int) -> np.ndarray:
    """(-1)^(n1+n2) on the flattened basis."""
    n = np.arange(d)
    return np.where((n[:, None] + n[None, :]) % 2 == 0, 1.0, -1.0).ravel()


# ---------------------------------------------------------------------------
# classical model


def classical_energy(state: PhaseState, params: ModelParams) -> float:
    x = (state.x1, state.x2)
    y = (state.y1, state.y2)
    p = (params.p1, params.p2)
    energy = 0.0
    for xi, yi, pi in zip(x, y, p):
        r2 = xi * xi + yi * yi
        energy += 0.25 * params.K * r2 * r2 - 0.5 * pi * (xi * xi - yi * yi) + 0.5 * params.delta * r2
    return energy - params.xi0 * (state.x1 * state.x2 + state.y1 * state.y2)


def potential(x1: float, x2: float, params: ModelParams):
    """Classical potential (the y = 0 slice of the energy).

    Equals the minimum of the energy over momenta only when
    ``xi0 < min(p1, p2)``; the polynomial is returned regardless.
    Works elementwise on arrays.
    """
    K = params.K
    return (
        0.25 * K * x1**4 - 0.5 * (params.p1 - params.delta) * x1**2
        + 0.25 * K * x2**4 - 0.5 * (params.p2 - params.delta) * x2**2
        - params.xi0 * x1 * x2
    )


def potential_gradient(x1: float, x2: float, params: ModelParams) -> np.ndarray:
    K = params.K
    return np.array([
        K * x1**3 - (params.p1 - params.delta) * x1 - params.xi0 * x2,
        K * x2**3 - (params.p2 - params.delta) * x2 - params.xi0 * x1,
    ])


def potential_hessian(x1: float, x2: float, params: ModelParams) -> np.ndarray:
    K = params.K
    return np.array([
        [3 * K * x1**2 - (params.p1 - params.delta), -params.xi0],
        [-params.xi0, 3 * K * x2**2 - (params.p2 - params.delta)],
    ])


def find_potential_minimum(params: ModelParams, quadrant=(1, 1), *,
                           tol: float = 1e-10, max_iter: int = 100) -> PotentialMinimum:
    """Newton iteration from the decoupled minimum of the requested quadrant."""
    s1, s2 = (int(np.sign(q)) for q in quadrant)
    if s1 == 0 or s2 == 0:
        raise ConfigError(f"quadrant must be a pair of nonzero signs, got {quadrant!r}")
    seed_sq = [max(params.p1 - params.delta, 0.0) / params.K,
               max(params.p2 - params.delta, 0.0) / params.K]
    x = np.array([s1 * math.sqrt(seed_sq[0]), s2 * math.sqrt(seed_sq[1])])
    for _ in range(max_iter):
        g = potential_gradient(x[0], x[1], params)
        if np.linalg.norm(g) <= tol:
            break
        h = potential_hessian(x[0], x[1], params)
        try:
            step = np.linalg.solve(h, g)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(f"singular Hessian at {x}") from exc
        x = x - step
        if not np.all(np.isfinite(x)):
            raise ConvergenceError("Newton iteration diverged")
    else:
        raise ConvergenceError(
            f"no potential minimum found in quadrant {quadrant} after {max_iter} iterations"
        )
    if np.any(np.linalg.eigvalsh(potential_hessian(x[0], x[1], params)) <= 0):
        raise ConvergenceError(f"stationary point {x} is not a minimum")
    if np.sign(x[0]) != s1 or np.sign(x[1]) != s2:
        raise ConvergenceError(f"minimum {x} left quadrant {quadrant}")
    return PotentialMinimum(float(x[0]), float(x[1]), (s1, s2))


def potential_grid(params: ModelParams, x_range=(-3.0, 3.0), n: int = 121):
    """Potential sampled on an ``n x n`` grid (for external surface plots)."""
    xs = np.linspace(x_range[0], x_range[1], n)
    X1, X2 = np.meshgrid(xs, xs, indexing="ij")
    return xs, potential(X1, X2, params)

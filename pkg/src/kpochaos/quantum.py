"""Schroedinger evolution and time-integrated Wigner / Husimi diagnostics.

States are arrays ``psi[n1, n2]`` of shape ``(d, d)`` with ``d = n_max + 1``.
Phase-space points use alpha_i = x_i + i y_i; with x = (a + a^+)/2 the
vacuum Wigner function is ``(2/pi)^2 exp(-2|alpha1|^2 - 2|alpha2|^2)`` and
both quasi-probabilities integrate to one over dx1 dy1 dx2 dy2.

Parity is taken as (-1)^n, i.e. exp(i pi a^+ a).
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import ConfigError, ConsistencyError, NormDriftError
from .model import FockDimension, ModelParams, PotentialMinimum, apply_hamiltonian

WIGNER = "wigner"
HUSIMI = "husimi"
KINDS = (WIGNER, HUSIMI)

NORM_ABORT = 1e-3
IMAG_RESIDUE_MAX = 1e-10


class TruncationWarning(UserWarning):
    pass


# ---------------------------------------------------------------------------
# states


def coherent_state(alpha: complex, n_max: int) -> np.ndarray:
    """Truncated number-basis coefficients alpha^n / sqrt(n!) exp(-|alpha|^2/2)."""
    if abs(alpha) ** 2 > n_max / 2:
        warnings.warn(
            f"|alpha|^2 = {abs(alpha) ** 2:.3g} > n_max/2; coherent state is poorly truncated",
            TruncationWarning, stacklevel=2,
        )
    return coherent_coefficients(np.asarray([alpha]), n_max + 1)[0]


def coherent_coefficients(alphas, d: int) -> np.ndarray:
    """<n|alpha> for every alpha in ``alphas``; shape ``(len(alphas), d)``."""
    alphas = np.asarray(alphas, dtype=complex).ravel()
    out = np.empty((alphas.size, d), dtype=complex)
    out[:, 0] = np.exp(-0.5 * np.abs(alphas) ** 2)
    for n in range(1, d):
        out[:, n] = out[:, n - 1] * alphas / math.sqrt(n)
    return out


def vacuum(n_max: int) -> np.ndarray:
    psi = np.zeros((n_max + 1, n_max + 1), dtype=complex)
    psi[0, 0] = 1.0
    return psi


def product_coherent_state(alpha1: complex, alpha2: complex, n_max: int) -> np.ndarray:
    return np.outer(coherent_state(alpha1, n_max), coherent_state(alpha2, n_max))


def norm(psi: np.ndarray) -> float:
    return float(np.linalg.norm(psi))


def odd_parity_weight(psi: np.ndarray) -> float:
    n = np.arange(psi.shape[0])
    odd = (n[:, None] + n[None, :]) % 2 == 1
    return float(np.sum(np.abs(psi[odd]) ** 2))


def mean_photon_number(psi: np.ndarray) -> float:
    n = np.arange(psi.shape[0], dtype=float)
    prob = np.abs(psi) ** 2
    return float(np.sum((n[:, None] + n[None, :]) * prob))


def energy(psi: np.ndarray, params: ModelParams) -> float:
    return float(np.real(np.vdot(psi, apply_hamiltonian(psi, params))))


# ---------------------------------------------------------------------------
# displacement operator


def displacement_element(m: int, n: int, alpha: complex) -> complex:
    """<m|D(alpha)|n> from the finite double-factorial sum.

    Terms are scaled with log-factorials so nothing overflows. The sum
    alternates in sign, so for |alpha|^2 approaching min(m, n) and beyond it
    loses relative accuracy; bulk evaluation uses :func:`displacement_matrices`.
    """
    if m < 0 or n < 0:
        raise ValueError("photon numbers must be non-negative")
    alpha = complex(alpha)
    r2 = abs(alpha) ** 2
    total = 0j
    half_log = 0.5 * (math.lgamma(m + 1) + math.lgamma(n + 1))
    for k in range(min(m, n) + 1):
        log_mag = half_log - math.lgamma(k + 1) - math.lgamma(m - k + 1) - math.lgamma(n - k + 1)
        total += math.exp(log_mag - 0.5 * r2) * alpha ** (m - k) * (-alpha.conjugate()) ** (n - k)
    return total


def displacement_matrices(betas, d: int) -> np.ndarray:
    """Stack of truncated ``D(beta)`` matrices, shape ``(len(betas), d, d)``.

    Uses the associated-Laguerre form (m = n + l)::

        <m|D(beta)|n> = beta^l e^{-x/2} sqrt(n!/m!) L_n^(l)(x),   x = |beta|^2
        <n|D(beta)|m> = (-conj(beta))^l e^{-x/2} sqrt(n!/m!) L_n^(l)(x)

    with ``sqrt(n!/m!) L_n^(l)`` advanced by the three-term recurrence in n,
    rescaled at every step so no factorial is ever formed. The recurrence is
    accurate to rounding for |beta| up to ~10 at d = 31, unlike the
    power-sum form, which cancels catastrophically there.
    """
    betas = np.asarray(betas, dtype=complex).ravel()
    x = np.abs(betas) ** 2
    damp = np.exp(-0.5 * x)
    out = np.empty((betas.size, d, d), dtype=complex)
    for l in range(d):
        up = betas ** l * damp
        down = (-betas.conj()) ** l * damp
        g_prev = np.zeros_like(x)
        g = np.full_like(x, 1.0 / math.sqrt(math.factorial(l)))
        for n in range(d - l):
            out[:, n + l, n] = up * g
            out[:, n, n + l] = down * g
            if n + l + 1 >= d:
                break
            r1 = math.sqrt((n + 1) / (n + 1 + l))
            r0 = (n + l) * math.sqrt(n / (n + l)) if n > 0 else 0.0
            g_prev, g = g, r1 / (n + 1) * ((2 * n + 1 + l - x) * g - r0 * g_prev)
    return out


# ---------------------------------------------------------------------------
# point evaluation


def _parity_vector(d: int) -> np.ndarray:
    return np.where(np.arange(d) % 2 == 0, 1.0, -1.0)


def wigner(psi: np.ndarray, alpha1: complex, alpha2: complex) -> float:
    """Two-mode Wigner function at (alpha1, alpha2)."""
    d = psi.shape[0]
    par = _parity_vector(d)
    D1 = displacement_matrices([2 * alpha1], d)[0]
    D2 = displacement_matrices([2 * alpha2], d)[0]
    phi = par[:, None] * psi * par[None, :]
    value = (2 / np.pi) ** 2 * np.sum(psi.conj() * (D1 @ phi @ D2.T))
    if abs(value.imag) > IMAG_RESIDUE_MAX:
        raise ConsistencyError(f"Wigner value has imaginary residue {value.imag:.3g}")
    return float(value.real)


def husimi(psi: np.ndarray, alpha1: complex, alpha2: complex) -> float:
    """Two-mode Husimi function |<alpha1, alpha2|psi>|^2 / pi^2."""
    d = psi.shape[0]
    c1 = coherent_coefficients([alpha1], d)[0]
    c2 = coherent_coefficients([alpha2], d)[0]
    amp = c1.conj() @ psi @ c2.conj()
    return float(abs(amp) ** 2 / np.pi ** 2)


def _double_factorial(k: int) -> int:
    # (-1)!! = 1
    return math.prod(range(k, 0, -2)) if k > 0 else 1


def marginal_x2_wigner_matrix(n_max: int) -> np.ndarray:
    """``M[m, n] = integral over real x of <m|D(2x)|n>``.

    Evaluated with exact rational arithmetic; zero when m + n is odd.
    """
    d = n_max + 1
    out = np.zeros((d, d))
    for m in range(d):
        for n in range(d):
            if (m + n) % 2:
                continue
            s = Fraction(0)
            for k in range(min(m, n) + 1):
                term = Fraction(_double_factorial(m + n - 2 * k - 1),
                                math.factorial(k) * math.factorial(m - k) * math.factorial(n - k))
                s += -term if (n - k) % 2 else term
            out[m, n] = math.sqrt(math.pi / 2) * math.sqrt(math.factorial(m) * math.factorial(n)) * float(s)
    return out


def marginal_x2_husimi_matrix(n_max: int) -> np.ndarray:
    """``N[m, n] = integral over real x of <x|m><n|x>`` for coherent states |x>."""
    d = n_max + 1
    out = np.zeros((d, d))
    for m in range(d):
        for n in range(d):
            if (m + n) % 2:
                continue
            ratio = Fraction(_double_factorial(m + n - 1) ** 2,
                             math.factorial(m) * math.factorial(n) * 2 ** (m + n))
            out[m, n] = math.sqrt(math.pi * float(ratio))
    return out


def wigner_x2_marginal(psi: np.ndarray, x1: float, y1: float, M2=None) -> float:
    """Integral of W(x1, x2, y1, y2=0) over x2."""
    d = psi.shape[0]
    if M2 is None:
        M2 = marginal_x2_wigner_matrix(d - 1)
    ev = SOSEvaluator(d, np.array([x1]), np.array([y1]), WIGNER, M2=M2)
    return float(ev(psi)[0, 0])


def husimi_x2_marginal(psi: np.ndarray, x1: float, y1: float, N2=None) -> float:
    d = psi.shape[0]
    if N2 is None:
        N2 = marginal_x2_husimi_matrix(d - 1)
    ev = SOSEvaluator(d, np.array([x1]), np.array([y1]), HUSIMI, N2=N2)
    return float(ev(psi)[0, 0])


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class GridSpec:
    x_min: float
    x_max: float
    nx: int
    y_min: float
    y_max: float
    ny: int

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ConfigError("grid point counts must be >= 1")
        if not (self.x_max >= self.x_min and self.y_max >= self.y_min):
            raise ConfigError("grid ranges must be increasing")

    @classmethod
    def square(cls, half_width: float, n: int) -> "GridSpec":
        return cls(-half_width, half_width, n, -half_width, half_width, n)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    @property
    def y(self) -> np.ndarray:
        return np.linspace(self.y_min, self.y_max, self.ny)

    def to_dict(self) -> dict:
        return {"x_min": self.x_min, "x_max": self.x_max, "nx": self.nx,
                "y_min": self.y_min, "y_max": self.y_max, "ny": self.ny}


SOS_GRID = GridSpec.square(3.0, 81)
MPMP_GRID = GridSpec.square(2.5, 81)


@dataclass
class Grid2D:
    """Accumulated values on ``x`` (first axis) by ``y`` (second axis)."""

    x: np.ndarray
    y: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def cell_area(self) -> float:
        dx = self.x[1] - self.x[0] if len(self.x) > 1 else 1.0
        dy = self.y[1] - self.y[0] if len(self.y) > 1 else 1.0
        return float(dx * dy)

    def integral(self) -> float:
        return float(self.values.sum() * self.cell_area())


def _chunked(fn, n: int, threads: int, chunk: int = 1024):
    """Apply ``fn(slice)`` over ``range(n)`` in chunks, optionally on threads."""
    slices = [slice(i, min(i + chunk, n)) for i in range(0, n, chunk)]
    if threads <= 1 or len(slices) <= 1:
        return [fn(s) for s in slices]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, slices))


class SOSEvaluator:
    """x2-marginal of W or Q at y2 = 0 on an (x1, y1) grid.

    Per-point mode-1 factors and the mode-2 marginal matrix are cached; each
    call only depends on the current state.
    """

    def __init__(self, d: int, x1, y1, kind: str, *, M2=None, N2=None, threads: int = 1):
        if kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {kind!r}")
        self.d, self.kind, self.threads = d, kind, threads
        X, Y = np.meshgrid(np.asarray(x1, float), np.asarray(y1, float), indexing="ij")
        self.shape = X.shape
        alphas = (X + 1j * Y).ravel()
        if kind == WIGNER:
            self.M2 = marginal_x2_wigner_matrix(d - 1) if M2 is None else M2
            # (G, m, n) flattened so one matmul does the per-point traces
            self.factors = displacement_matrices(2 * alphas, d).reshape(alphas.size, d * d)
            self.parity = _parity_vector(d)
        else:
            self.N2 = marginal_x2_husimi_matrix(d - 1) if N2 is None else N2
            self.factors = coherent_coefficients(alphas, d)

    def __call__(self, psi: np.ndarray) -> np.ndarray:
        if self.kind == WIGNER:
            par = self.parity
            # S[n1, m1] = sum psi[n1, n2] (-1)^n2 M2[m2, n2] psi*[m1, m2]
            S = (psi * par[None, :]) @ self.M2.T @ psi.conj().T
            # value = sum_{m,n} D[m, n] (-1)^n S[n, m]
            B = (par[:, None] * S).T.ravel()
            pre = (2 / np.pi) ** 2

            def part(s):
                return self.factors[s] @ B
        else:
            R = psi @ self.N2.T @ psi.conj().T
            pre = 1 / np.pi ** 2

            def part(s):
                c = self.factors[s]
                return np.einsum("gn,nm,gm->g", c.conj(), R, c)

        vals = np.concatenate(_chunked(part, self.factors.shape[0], self.threads)) * pre
        if np.max(np.abs(vals.imag), initial=0.0) > IMAG_RESIDUE_MAX:
            raise ConsistencyError("quasi-probability marginal has an imaginary residue")
        return vals.real.reshape(self.shape)


class MPMPEvaluator:
    """W or Q at fixed positions (X1, X2) on a (y1, y2) momentum grid."""

    def __init__(self, d: int, X1: float, X2: float, y1, y2, kind: str, *, threads: int = 1):
        if kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {kind!r}")
        self.d, self.kind, self.threads = d, kind, threads
        a1 = X1 + 1j * np.asarray(y1, float)
        a2 = X2 + 1j * np.asarray(y2, float)
        self.n1, self.n2 = a1.size, a2.size
        self.shape = (self.n1, self.n2)
        if kind == WIGNER:
            self.D1 = displacement_matrices(2 * a1, d).reshape(a1.size, d * d)
            self.D2 = displacement_matrices(2 * a2, d)
            self.parity = _parity_vector(d)
        else:
            self.c1 = coherent_coefficients(a1, d)
            self.c2 = coherent_coefficients(a2, d)

    def __call__(self, psi: np.ndarray) -> np.ndarray:
        if self.kind == HUSIMI:
            amp = self.c1.conj() @ psi @ self.c2.conj().T
            return np.abs(amp) ** 2 / np.pi ** 2
        d = self.d
        par = self.parity
        phi = par[:, None] * psi * par[None, :]
        # contract mode 2 first: T[g2, n1, m2] = sum_n2 D2[g2, m2, n2] phi[n1, n2]
        T = np.einsum("bqn,kn->bkq", self.D2, phi)
        # U[g2, m1, n1] = sum_m2 T[g2, n1, m2] psi*[m1, m2]
        U = np.transpose(T @ psi.conj().T, (0, 2, 1)).reshape(self.n2, d * d)

        def part(s):
            return self.D1[s] @ U.T

        vals = np.concatenate(_chunked(part, self.n1, self.threads, chunk=64)) * (2 / np.pi) ** 2
        if np.max(np.abs(vals.imag), initial=0.0) > IMAG_RESIDUE_MAX:
            raise ConsistencyError("Wigner MPMP value has an imaginary residue")
        return vals.real


# ---------------------------------------------------------------------------
# evolution


@dataclass(frozen=True)
class EvolutionConfig:
    dt: float = 1e-3
    T: float = 20.0
    stride: int = 10
    # "vacuum" or a pair of coherent amplitudes
    initial: str | tuple = "vacuum"

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not (self.T >= 0 and math.isfinite(self.T)):
            raise ConfigError(f"T must be non-negative, got {self.T}")
        if int(self.stride) != self.stride or self.stride < 1:
            raise ConfigError(f"stride must be an integer >= 1, got {self.stride}")
        ratio = self.T / self.dt
        if abs(ratio - round(ratio)) > 1e-6 * max(1.0, ratio):
            raise ConfigError(f"T/dt = {ratio} is not an integer")
        if self.initial != "vacuum":
            try:
                a1, a2 = self.initial
                complex(a1), complex(a2)
            except (TypeError, ValueError) as exc:
                raise ConfigError("initial must be 'vacuum' or a pair of complex amplitudes") from exc

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))

    def initial_state(self, n_max: int) -> np.ndarray:
        if self.initial == "vacuum":
            return vacuum(n_max)
        a1, a2 = self.initial
        return product_coherent_state(complex(a1), complex(a2), n_max)


def _make_apply(hamiltonian, hbar: float | None):
    if isinstance(hamiltonian, ModelParams):
        params = hamiltonian
        return (lambda psi: apply_hamiltonian(psi, params)), params.hbar
    H = np.asarray(hamiltonian)

    def dense(psi):
        return (H @ psi.ravel()).reshape(psi.shape)

    return dense, (1.0 if hbar is None else hbar)


def rk4_propagate(psi: np.ndarray, hamiltonian, n_steps: int, dt: float, *,
                  hbar: float | None = None, observer=None, stride: int = 1,
                  check_norm: bool = True) -> np.ndarray:
    """``n_steps`` RK4 steps of d psi/dt = -(i/hbar) H psi (``dt`` may be negative).

    ``hamiltonian`` is either :class:`ModelParams` (matrix-free apply) or a
    dense matrix on the flattened basis. ``observer(t, psi)`` is called
    before steps 0, stride, 2*stride, ... (never at the final time).
    """
    apply, hb = _make_apply(hamiltonian, hbar)
    f = -1j / hb
    h = dt
    psi = np.array(psi, dtype=complex)
    n0 = norm(psi)
    for k in range(n_steps):
        if k % stride == 0:
            if observer is not None:
                observer(k * dt, psi)
            if check_norm and abs(norm(psi) - n0) > NORM_ABORT:
                raise NormDriftError(
                    f"norm drifted by {norm(psi) - n0:.3g} at t = {k * dt:g}; "
                    "reduce dt or increase n_max"
                )
        k1 = f * apply(psi)
        k2 = f * apply(psi + 0.5 * h * k1)
        k3 = f * apply(psi + 0.5 * h * k2)
        k4 = f * apply(psi + h * k3)
        psi = psi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if check_norm and abs(norm(psi) - n0) > NORM_ABORT:
        raise NormDriftError(f"norm drifted by {norm(psi) - n0:.3g} at the final time")
    return psi


def evolve(psi0: np.ndarray, hamiltonian, config: EvolutionConfig, observer=None, *,
           hbar: float | None = None) -> np.ndarray:
    """Evolve ``psi0`` over [0, T]; see :func:`rk4_propagate` for the observer contract."""
    return rk4_propagate(psi0, hamiltonian, config.n_steps, config.dt, hbar=hbar,
                         observer=observer, stride=config.stride)


def _accumulate(evaluator, params, dim, config, psi0, meta):
    psi0 = config.initial_state(dim.n_max) if psi0 is None else psi0
    acc = np.zeros(evaluator.shape)
    weight = config.dt * config.stride

    def observe(t, psi):
        acc[...] += weight * evaluator(psi)

    final = evolve(psi0, params, config, observe)
    meta = dict(meta, T=config.T, dt=config.dt, stride=config.stride, n_max=dim.n_max,
                params=params.to_dict(), initial=str(config.initial),
                final_norm=norm(final))
    return acc, meta


def accumulate_quantum_sos(params: ModelParams, dim: FockDimension, config: EvolutionConfig,
                           grid: GridSpec = SOS_GRID, kind: str = HUSIMI, *,
                           psi0=None, threads: int = 1) -> Grid2D:
    """Left-Riemann time integral of the x2-marginal at y2 = 0 over an (x1, y1) grid."""
    ev = SOSEvaluator(dim.per_mode, grid.x, grid.y, kind, threads=threads)
    acc, meta = _accumulate(ev, params, dim, config, psi0,
                            {"diagnostic": f"{kind}_sos", "axes": ["x1", "y1"],
                             "grid": grid.to_dict()})
    return Grid2D(grid.x, grid.y, acc, meta)


def accumulate_quantum_mpmp(params: ModelParams, dim: FockDimension, config: EvolutionConfig,
                            minimum: PotentialMinimum, grid: GridSpec = MPMP_GRID,
                            kind: str = HUSIMI, *, psi0=None, threads: int = 1) -> Grid2D:
    """Left-Riemann time integral of W or Q at (X1, X2) over a (y1, y2) grid."""
    ev = MPMPEvaluator(dim.per_mode, minimum.X1, minimum.X2, grid.x, grid.y, kind,
                       threads=threads)
    acc, meta = _accumulate(ev, params, dim, config, psi0,
                            {"diagnostic": f"{kind}_mpmp", "axes": ["y1", "y2"],
                             "grid": grid.to_dict(),
                             "minimum": [minimum.X1, minimum.X2]})
    return Grid2D(grid.x, grid.y, acc, meta)

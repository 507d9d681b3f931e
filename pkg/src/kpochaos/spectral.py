"""Eigendecomposition, OTOCs in the energy eigenbasis, level-spacing statistics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import ConfigError, ConsistencyError, ConvergenceError, FitError, ParityMixingError
from .model import FockDimension, ModelParams, parity_signs, quadrature_operators
from .quantum import product_coherent_state, rk4_propagate

PARITY_TOL = 1e-8


@dataclass(frozen=True)
class Eigensystem:
    """Ascending eigenvalues and eigenvectors (columns) on the flattened basis."""

    energies: np.ndarray
    vectors: np.ndarray
    hbar: float = 1.0

    @property
    def dim(self) -> int:
        return len(self.energies)

    @property
    def per_mode(self) -> int:
        d = math.isqrt(self.dim)
        if d * d != self.dim:
            raise ConfigError(f"dimension {self.dim} is not a two-mode square")
        return d


@dataclass
class OtocResult:
    i: int
    j: int
    t: np.ndarray
    values: np.ndarray
    max_imag: float = 0.0


@dataclass
class SpacingFit:
    spacings: np.ndarray
    omega: float
    A: float
    beta: float
    rss: float
    meta: dict = field(default_factory=dict)

    def cumulative(self, s):
        return brody_cumulative(s, self.A, self.beta, self.omega)


def eigendecompose(H: np.ndarray, *, hbar: float = 1.0, herm_tol: float = 1e-12) -> Eigensystem:
    """Full Hermitian eigendecomposition (LAPACK via numpy)."""
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ConfigError(f"expected a square matrix, got shape {H.shape}")
    scale = max(1.0, float(np.max(np.abs(H), initial=0.0)))
    if np.max(np.abs(H - H.conj().T), initial=0.0) > herm_tol * scale:
        raise ConfigError("matrix is not Hermitian")
    try:
        energies, vectors = np.linalg.eigh(H)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError("Hermitian eigensolver did not converge") from exc
    return Eigensystem(energies, vectors, hbar)


# ---------------------------------------------------------------------------
# parity


def _even_weights(eig: Eigensystem) -> np.ndarray:
    even = parity_signs(eig.per_mode) > 0
    return np.sum(np.abs(eig.vectors[even, :]) ** 2, axis=0)


def parity_split(eig: Eigensystem, tol: float = PARITY_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Indices of even and odd total-photon-number eigenstates.

    Raises :class:`ParityMixingError` if any eigenvector has parity weight
    strictly between ``tol`` and ``1 - tol``; :func:`resolve_parity_mixing`
    repairs such (degenerate) states.
    """
    w = _even_weights(eig)
    ambiguous = (w > tol) & (w < 1 - tol)
    if np.any(ambiguous):
        raise ParityMixingError(
            f"{int(ambiguous.sum())} eigenvectors mix parity sectors "
            f"(first index {int(np.flatnonzero(ambiguous)[0])})"
        )
    return np.flatnonzero(w >= 1 - tol), np.flatnonzero(w <= tol)


def resolve_parity_mixing(eig: Eigensystem, tol: float = PARITY_TOL,
                          degeneracy: float = 1e-9) -> Eigensystem:
    """Rotate parity-mixed degenerate eigenvectors back into parity sectors.

    Near-degenerate clusters containing a mixed vector are projected onto the
    even and odd subspaces and rediagonalised within each projection.
    """
    w = _even_weights(eig)
    mixed = np.flatnonzero((w > tol) & (w < 1 - tol))
    if mixed.size == 0:
        return eig
    E = eig.energies
    V = eig.vectors.copy()
    energies = E.copy()
    even_mask = parity_signs(eig.per_mode) > 0
    scale = max(1.0, float(np.max(np.abs(E))))
    done = set()
    for k in mixed:
        if k in done:
            continue
        members = np.flatnonzero(np.abs(E - E[k]) <= degeneracy * scale)
        done.update(members.tolist())
        sub = V[:, members]
        Hsub = sub @ np.diag(E[members]) @ sub.conj().T
        new_vecs, new_E = [], []
        for mask in (even_mask, ~even_mask):
            proj = np.where(mask[:, None], sub, 0.0)
            u, s, _ = np.linalg.svd(proj, full_matrices=False)
            basis = u[:, s > 1e-6]
            if basis.shape[1] == 0:
                continue
            e_small, vec_small = np.linalg.eigh(basis.conj().T @ Hsub @ basis)
            new_vecs.append(basis @ vec_small)
            new_E.append(e_small)
        new_vecs = np.hstack(new_vecs)
        new_E = np.concatenate(new_E)
        if new_vecs.shape[1] != members.size:
            raise ParityMixingError(
                f"could not separate parity in degenerate cluster at E = {E[k]:.6g}"
            )
        order = np.argsort(new_E)
        V[:, members] = new_vecs[:, order]
        energies[members] = new_E[order]
    return Eigensystem(energies, V, eig.hbar)


# ---------------------------------------------------------------------------
# OTOC


def otoc_initial_state(n_max: int, radius: float = 0.5, angle: float = 0.65 * math.pi) -> np.ndarray:
    """Coherent product state centred at x = 0, y = radius * (cos, sin)(angle)."""
    return product_coherent_state(1j * radius * math.cos(angle),
                                  1j * radius * math.sin(angle), n_max)


class EigenbasisOTOC:
    """Evaluates C_ij(t) = -4 <psi0|[x_i(t), y_j(0)]^2|psi0> in the energy eigenbasis.

    With B = [x_i(t), y_j] anti-Hermitian, C = 4 ||B psi0||^2; each time
    point costs a handful of matrix-vector products.
    """

    def __init__(self, eig: Eigensystem):
        self.eig = eig
        self._quads = None
        self._cache = {}

    def operator(self, name: str) -> np.ndarray:
        if name not in self._cache:
            if self._quads is None:
                self._quads = quadrature_operators(FockDimension(self.eig.per_mode - 1))
            V = self.eig.vectors
            self._cache[name] = V.conj().T @ self._quads[name] @ V
        return self._cache[name]

    def __call__(self, psi0: np.ndarray, i: int, j: int, times) -> OtocResult:
        for idx in (i, j):
            if idx not in (1, 2):
                raise ConfigError(f"mode index must be 1 or 2, got {idx}")
        psi0 = np.asarray(psi0, dtype=complex).ravel()
        if psi0.size != self.eig.dim:
            raise ConfigError(f"state has dimension {psi0.size}, eigensystem {self.eig.dim}")
        x = self.operator(f"x{i}")
        y = self.operator(f"y{j}")
        v = self.eig.vectors.conj().T @ psi0
        yv = y @ v
        E = self.eig.energies / self.eig.hbar
        times = np.asarray(times, dtype=float)
        values = np.empty(times.size)
        max_imag = 0.0
        for k, t in enumerate(times):
            ph = np.exp(-1j * E * t)

            def x_t(w):
                return ph.conj() * (x @ (ph * w))

            b = x_t(yv) - y @ x_t(v)
            bb = x_t(y @ b) - y @ x_t(b)
            c = -4.0 * np.vdot(v, bb)
            max_imag = max(max_imag, abs(c.imag))
            values[k] = 4.0 * np.vdot(b, b).real
        if max_imag > 1e-8:
            raise ConsistencyError(f"OTOC imaginary residue {max_imag:.3g} exceeds 1e-8")
        return OtocResult(i, j, times, values, max_imag)


def quantum_otoc(eig: Eigensystem, psi0: np.ndarray, i: int, j: int, times) -> OtocResult:
    return EigenbasisOTOC(eig)(psi0, i, j, times)


def direct_otoc(params: ModelParams, dim: FockDimension, psi0: np.ndarray, i: int, j: int,
                times, dt: float = 1e-3) -> OtocResult:
    """Same OTOC assembled from RK4 forward/backward propagation (no eigenbasis).

    ``times`` must be multiples of ``dt``; used to cross-check
    :class:`EigenbasisOTOC`.
    """
    quads = quadrature_operators(dim)
    X, Y = quads[f"x{i}"], quads[f"y{j}"]
    d = dim.per_mode
    psi0 = np.asarray(psi0, dtype=complex).reshape(d, d)
    times = np.asarray(times, dtype=float)
    values = np.empty(times.size)

    def op(M, psi):
        return (M @ psi.ravel()).reshape(d, d)

    def heisenberg_x(psi, n):
        # U^+ x U psi with U = exp(-i H t / hbar)
        fwd = rk4_propagate(psi, params, n, dt)
        return rk4_propagate(op(X, fwd), params, n, -dt)

    for k, t in enumerate(times):
        n = int(round(t / dt))
        if abs(n * dt - t) > 1e-9 * max(1.0, t):
            raise ConfigError(f"time {t} is not a multiple of dt = {dt}")
        b = heisenberg_x(op(Y, psi0), n) - op(Y, heisenberg_x(psi0, n))
        values[k] = 4.0 * np.vdot(b, b).real
    return OtocResult(i, j, times, values)


# ---------------------------------------------------------------------------
# level spacings


def level_spacings(energies, count: int = 50, *, smallest_values: bool = False) -> np.ndarray:
    """Nearest-neighbour spacings of the ``count + 1`` lowest levels.

    With ``smallest_values`` the ``count`` smallest spacings of the whole
    list are returned instead.
    """
    E = np.asarray(energies, dtype=float)
    if np.any(np.diff(E) < 0):
        raise ConfigError("energies must be sorted ascending")
    if count < 1:
        raise ConfigError("count must be >= 1")
    if count + 1 > E.size:
        raise ConfigError(f"need {count + 1} energies for {count} spacings, have {E.size}")
    if smallest_values:
        return np.sort(np.diff(E))[:count]
    return np.diff(E[: count + 1])


def brody_cumulative(s, A: float, beta: float, omega: float):
    s = np.asarray(s, dtype=float)
    return A * (1.0 - np.exp(-beta * s ** (omega + 1.0)))


def cumulative_counts(spacings) -> tuple[np.ndarray, np.ndarray]:
    """Sorted spacings and N(s) = number of spacings <= s at each of them."""
    s = np.sort(np.asarray(spacings, dtype=float))
    return s, np.searchsorted(s, s, side="right").astype(float)


def brody_fit(spacings, *, omega_starts=(0.0, 0.5, 1.0)) -> SpacingFit:
    """Least-squares fit of A (1 - exp(-beta s^(omega+1))) to the cumulative count.

    Nelder-Mead over (log A, log beta, omega), one start per entry of
    ``omega_starts`` with A = count and beta = 1 / mean spacing; each start is
    restarted once from its optimum. The lowest residual wins.
    """
    s = np.asarray(spacings, dtype=float)
    if s.size < 10:
        raise ConfigError(f"need at least 10 spacings, got {s.size}")
    if np.any(s < 0) or not np.all(np.isfinite(s)):
        raise ConfigError("spacings must be finite and non-negative")
    if np.ptp(s) == 0:
        raise FitError("spacings are all equal; the fit is undefined")
    xs, N = cumulative_counts(s)

    def rss(q):
        omega = q[2]
        if omega <= -1.0 or not np.all(np.isfinite(q)):
            return np.inf
        model = brody_cumulative(xs, math.exp(q[0]), math.exp(q[1]), omega)
        return float(np.sum((N - model) ** 2))

    opts = {"xatol": 1e-10, "fatol": 1e-12, "maxiter": 20000, "maxfev": 40000}
    best = None
    for w0 in omega_starts:
        q0 = np.array([math.log(s.size), math.log(1.0 / s.mean()), w0])
        for _ in range(2):
            res = minimize(rss, q0, method="Nelder-Mead", options=opts)
            q0 = res.x
        if best is None or res.fun < best.fun:
            best = res
    if best is None or not np.isfinite(best.fun):
        raise FitError("spacing fit failed")
    logA, logb, omega = best.x
    return SpacingFit(s, float(omega), math.exp(logA), math.exp(logb), float(best.fun),
                      {"n": int(s.size), "method": "nelder-mead", "starts": list(omega_starts)})


def even_sector_energies(eig: Eigensystem) -> np.ndarray:
    eig = resolve_parity_mixing(eig)
    even, _ = parity_split(eig)
    return np.sort(eig.energies[even])

"""Classical dynamics: RK4 trajectories, SOS crossings, MPMPs, sensitivity, OTOC.

Equations of motion (j != i)::

    dx_i/dt =  [K (x_i^2 + y_i^2) + p_i + Delta] y_i - xi0 y_j
    dy_i/dt = -[K (x_i^2 + y_i^2) - p_i + Delta] x_i + xi0 x_j

The inner loops are numba kernels (``nogil``), so iterations can be spread
over threads. Every iteration draws its random numbers from its own
``rng.substream(seed, k)``; outputs are identical for any thread count.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import rng as _rng
from .errors import ConfigError, IntegrationError
from .model import ModelParams, PhaseState, PotentialMinimum

# any |coordinate| above this is energetically impossible at the reference parameters
BLOWUP = 1e3

_OK, _BLOWN = 0, 1


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 1e-4
    T: float = 20.0
    method: str = "rk4"

    def __post_init__(self):
        if self.method != "rk4":
            raise ConfigError(f"only classical RK4 is supported, got {self.method!r}")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not (self.T >= 0 and math.isfinite(self.T)):
            raise ConfigError(f"T must be non-negative, got {self.T}")
        ratio = self.T / self.dt
        if abs(ratio - round(ratio)) > 1e-6 * max(1.0, ratio):
            raise ConfigError(f"T/dt = {ratio} is not an integer")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray  # (n, 4): x1, x2, y1, y2

    def __len__(self):
        return len(self.t)

    def __iter__(self):
        for t, s in zip(self.t, self.states):
            yield float(t), PhaseState.from_array(s)


@dataclass
class TimeSeries:
    """Sampled real quantity, e.g. a trajectory distance or an OTOC."""

    t: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SensitivityConfig:
    """Two trajectories started ``deviation`` apart in x1 (both at x = 0 otherwise)."""

    deviation: float = 1e-6
    y_radius: float = 0.5
    y_angle: float = 0.65 * math.pi
    dt: float = 1e-4
    T: float = 20.0
    stride: int = 100

    def __post_init__(self):
        if not self.deviation > 0:
            raise ConfigError("deviation must be positive")
        if self.stride < 1:
            raise ConfigError("stride must be >= 1")
        IntegratorConfig(self.dt, self.T)

    def initial_states(self) -> tuple[PhaseState, PhaseState]:
        y1 = self.y_radius * math.cos(self.y_angle)
        y2 = self.y_radius * math.sin(self.y_angle)
        return PhaseState(0.0, 0.0, y1, y2), PhaseState(self.deviation, 0.0, y1, y2)


def default_otoc_center() -> PhaseState:
    return PhaseState(0.0, 0.0, 0.5 * math.cos(0.65 * math.pi), 0.5 * math.sin(0.65 * math.pi))


@dataclass(frozen=True)
class OtocEnsembleConfig:
    spread_x: float = 0.5
    spread_y: float = 0.5
    probe: float = 0.5
    iterations: int = 1000
    seed: int = 0
    center: PhaseState = field(default_factory=default_otoc_center)
    dt: float = 1e-4
    T: float = 20.0

    def __post_init__(self):
        if not (self.spread_x > 0 and self.spread_y > 0 and self.probe > 0):
            raise ConfigError("spreads and probe offset must be positive")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        IntegratorConfig(self.dt, self.T)


# ---------------------------------------------------------------------------
# kernels


def _pack(params: ModelParams) -> np.ndarray:
    return np.array([params.K, params.p1, params.p2, params.delta, params.xi0])


@njit(cache=True, nogil=True, inline="always")
def _rhs(x1, x2, y1, y2, c):
    K, p1, p2, D, xi = c[0], c[1], c[2], c[3], c[4]
    r1 = x1 * x1 + y1 * y1
    r2 = x2 * x2 + y2 * y2
    return (
        (K * r1 + p1 + D) * y1 - xi * y2,
        (K * r2 + p2 + D) * y2 - xi * y1,
        -(K * r1 - p1 + D) * x1 + xi * x2,
        -(K * r2 - p2 + D) * x2 + xi * x1,
    )


@njit(cache=True, nogil=True)
def _step(x1, x2, y1, y2, dt, c):
    h = 0.5 * dt
    a0, a1, a2, a3 = _rhs(x1, x2, y1, y2, c)
    b0, b1, b2, b3 = _rhs(x1 + h * a0, x2 + h * a1, y1 + h * a2, y2 + h * a3, c)
    c0, c1, c2, c3 = _rhs(x1 + h * b0, x2 + h * b1, y1 + h * b2, y2 + h * b3, c)
    d0, d1, d2, d3 = _rhs(x1 + dt * c0, x2 + dt * c1, y1 + dt * c2, y2 + dt * c3, c)
    f = dt / 6.0
    return (
        x1 + f * (a0 + 2.0 * b0 + 2.0 * c0 + d0),
        x2 + f * (a1 + 2.0 * b1 + 2.0 * c1 + d1),
        y1 + f * (a2 + 2.0 * b2 + 2.0 * c2 + d2),
        y2 + f * (a3 + 2.0 * b3 + 2.0 * c3 + d3),
    )


@njit(cache=True, nogil=True, inline="always")
def _bad(x1, x2, y1, y2):
    m = max(abs(x1), abs(x2), abs(y1), abs(y2))
    # NaN compares false, so test the negation
    return not (m <= 1e3)


@njit(cache=True, nogil=True)
def _grow(buf, count):
    if count < buf.shape[0]:
        return buf
    bigger = np.empty((2 * buf.shape[0], buf.shape[1]))
    bigger[:count] = buf[:count]
    return bigger


@njit(cache=True, nogil=True)
def _trajectory_kernel(s0, n_steps, dt, c, stride):
    n_out = n_steps // stride + 1
    out = np.empty((n_out, 4))
    x1, x2, y1, y2 = s0[0], s0[1], s0[2], s0[3]
    out[0, 0], out[0, 1], out[0, 2], out[0, 3] = x1, x2, y1, y2
    for k in range(1, n_steps + 1):
        x1, x2, y1, y2 = _step(x1, x2, y1, y2, dt, c)
        if _bad(x1, x2, y1, y2):
            return out[: (k - 1) // stride + 1], _BLOWN
        if k % stride == 0:
            j = k // stride
            out[j, 0], out[j, 1], out[j, 2], out[j, 3] = x1, x2, y1, y2
    return out, _OK


@njit(cache=True, nogil=True)
def _sos_kernel(s0, n_steps, dt, c, interpolate):
    buf = np.empty((64, 2))
    count = 0
    x1, x2, y1, y2 = s0[0], s0[1], s0[2], s0[3]
    for _ in range(n_steps):
        px1, py1, py2 = x1, y1, y2
        x1, x2, y1, y2 = _step(x1, x2, y1, y2, dt, c)
        if _bad(x1, x2, y1, y2):
            return buf[:count], _BLOWN
        if y2 * py2 < 0.0:
            buf = _grow(buf, count)
            if interpolate:
                w = py2 / (py2 - y2)
                buf[count, 0] = px1 + w * (x1 - px1)
                buf[count, 1] = py1 + w * (y1 - py1)
            else:
                buf[count, 0] = x1
                buf[count, 1] = y1
            count += 1
    return buf[:count], _OK


@njit(cache=True, nogil=True)
def _mpmp_kernel(s0, n_steps, dt, c, X1, X2, tol, every_sample):
    buf = np.empty((16, 2))
    count = 0
    inside = False
    x1, x2, y1, y2 = s0[0], s0[1], s0[2], s0[3]
    tol2 = tol * tol
    for _ in range(n_steps):
        x1, x2, y1, y2 = _step(x1, x2, y1, y2, dt, c)
        if _bad(x1, x2, y1, y2):
            return buf[:count], _BLOWN
        d1 = x1 - X1
        d2 = x2 - X2
        if d1 * d1 + d2 * d2 < tol2:
            if every_sample or not inside:
                buf = _grow(buf, count)
                buf[count, 0] = y1
                buf[count, 1] = y2
                count += 1
            inside = True
        else:
            inside = False
    return buf[:count], _OK


@njit(cache=True, nogil=True)
def _pair_distance_kernel(s0, s1, n_steps, dt, c, stride):
    n_out = n_steps // stride + 1
    out = np.empty(n_out)
    a1, a2, a3, a4 = s0[0], s0[1], s0[2], s0[3]
    b1, b2, b3, b4 = s1[0], s1[1], s1[2], s1[3]
    out[0] = math.sqrt((a1 - b1) ** 2 + (a2 - b2) ** 2 + (a3 - b3) ** 2 + (a4 - b4) ** 2)
    for k in range(1, n_steps + 1):
        a1, a2, a3, a4 = _step(a1, a2, a3, a4, dt, c)
        b1, b2, b3, b4 = _step(b1, b2, b3, b4, dt, c)
        if _bad(a1, a2, a3, a4) or _bad(b1, b2, b3, b4):
            return out[: (k - 1) // stride + 1], _BLOWN
        if k % stride == 0:
            out[k // stride] = math.sqrt(
                (a1 - b1) ** 2 + (a2 - b2) ** 2 + (a3 - b3) ** 2 + (a4 - b4) ** 2
            )
    return out, _OK


@njit(cache=True, nogil=True)
def _otoc_kernel(starts, probe, record_steps, dt, c):
    """Position differences x'(t) - x(t) for each ensemble member at the recorded steps."""
    n = starts.shape[0]
    n_rec = record_steps.shape[0]
    out = np.zeros((n, n_rec, 2))
    status = np.zeros(n, dtype=np.int64)
    last = record_steps[n_rec - 1] if n_rec > 0 else 0
    for m in range(n):
        a1, a2, a3, a4 = starts[m, 0], starts[m, 1], starts[m, 2], starts[m, 3]
        b1, b2, b3, b4 = a1 + probe, a2, a3, a4
        r = 0
        while r < n_rec and record_steps[r] == 0:
            out[m, r, 0] = b1 - a1
            out[m, r, 1] = b2 - a2
            r += 1
        for k in range(1, last + 1):
            a1, a2, a3, a4 = _step(a1, a2, a3, a4, dt, c)
            b1, b2, b3, b4 = _step(b1, b2, b3, b4, dt, c)
            if _bad(a1, a2, a3, a4) or _bad(b1, b2, b3, b4):
                status[m] = _BLOWN
                break
            while r < n_rec and record_steps[r] == k:
                out[m, r, 0] = b1 - a1
                out[m, r, 1] = b2 - a2
                r += 1
    return out, status


# ---------------------------------------------------------------------------
# public API


def vector_field(state: PhaseState, params: ModelParams) -> np.ndarray:
    """Time derivative (dx1, dx2, dy1, dy2) at ``state``."""
    return np.array(_rhs(state.x1, state.x2, state.y1, state.y2, _pack(params)))


def step_rk4(state: PhaseState, params: ModelParams, dt: float) -> PhaseState:
    """One classical fourth-order Runge-Kutta step (negative ``dt`` runs backwards)."""
    out = _step(state.x1, state.x2, state.y1, state.y2, float(dt), _pack(params))
    new = PhaseState(*out)
    if not new.is_finite():
        raise IntegrationError(f"non-finite state after RK4 step from {state}")
    return new


def integrate(state: PhaseState, params: ModelParams, config: IntegratorConfig,
              stride: int = 1, backward: bool = False) -> Trajectory:
    """Integrate from ``state``; keep every ``stride``-th sample (t = 0 included)."""
    if stride < 1:
        raise ConfigError("stride must be >= 1")
    dt = -config.dt if backward else config.dt
    states, status = _trajectory_kernel(state.as_array(), config.n_steps, dt,
                                        _pack(params), int(stride))
    if status != _OK:
        raise IntegrationError(f"trajectory from {state} blew up (|coordinate| > {BLOWUP:g})")
    t = np.arange(len(states)) * stride * dt
    return Trajectory(t, states)


def iter_trajectory(state: PhaseState, params: ModelParams, config: IntegratorConfig):
    """Streaming version of :func:`integrate`, yielding ``(t, PhaseState)``."""
    yield 0.0, state
    for k in range(1, config.n_steps + 1):
        state = step_rk4(state, params, config.dt)
        if _bad(state.x1, state.x2, state.y1, state.y2):
            raise IntegrationError(f"trajectory blew up at step {k}")
        yield k * config.dt, state


def single_mode_invariant(x, y, K: float, p: float, delta: float = 0.0):
    """Energy of one decoupled oscillator; conserved when xi0 = 0."""
    r2 = x * x + y * y
    return 0.25 * K * r2 * r2 - 0.5 * p * (x * x - y * y) + 0.5 * delta * r2


def near_origin_start(seed: int, index: int, scale: float = 1e-6) -> PhaseState:
    """x = 0, y_i = scale * r_i with standard-normal r_i from the iteration's substream."""
    g = _rng.substream(seed, index)
    r1, r2 = g.normal(), g.normal()
    return PhaseState(0.0, 0.0, scale * r1, scale * r2)


def _map_iterations(fn, n: int, threads: int):
    if threads <= 1 or n <= 1:
        return [fn(k) for k in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n)))


def sos_crossings(params: ModelParams, config: IntegratorConfig, seed: int,
                  iterations: int = 200, *, interpolate: bool = False,
                  per_trajectory: bool = False, threads: int = 1):
    """(x1, y1) each time a trajectory crosses the plane y2 = 0.

    A crossing is flagged when y2(t) * y2(t - dt) < 0 and recorded at the
    sample t (or, with ``interpolate``, linearly interpolated to y2 = 0).
    Trajectories start at x = 0, y_i = 1e-6 r_i. Iterations that never cross
    simply contribute no points.

    Returns an ``(n, 2)`` array, or a list of per-trajectory arrays when
    ``per_trajectory`` is set.
    """
    if iterations < 0:
        raise ConfigError("iterations must be >= 0")
    c = _pack(params)
    n_steps = config.n_steps

    def run(k):
        s0 = near_origin_start(seed, k).as_array()
        pts, status = _sos_kernel(s0, n_steps, config.dt, c, interpolate)
        if status != _OK:
            raise IntegrationError(f"SOS iteration {k} blew up")
        return pts

    parts = _map_iterations(run, iterations, threads)
    if per_trajectory:
        return parts
    return np.concatenate(parts) if parts else np.empty((0, 2))


def mpmp_points(params: ModelParams, config: IntegratorConfig, minimum: PotentialMinimum,
                tol: float = 1e-3, seed: int = 0, iterations: int = 1000, *,
                every_sample: bool = False, threads: int = 1) -> np.ndarray:
    """Momenta (y1, y2) while positions are within ``tol`` of the potential minimum.

    By default one point is stored per entry into the ball (the first sample
    inside); ``every_sample`` records all samples inside instead.
    """
    if tol < 0:
        raise ConfigError("tol must be non-negative")
    if iterations < 0:
        raise ConfigError("iterations must be >= 0")
    if tol == 0 or iterations == 0:
        return np.empty((0, 2))
    c = _pack(params)
    n_steps = config.n_steps

    def run(k):
        s0 = near_origin_start(seed, k).as_array()
        pts, status = _mpmp_kernel(s0, n_steps, config.dt, c, minimum.X1, minimum.X2,
                                   float(tol), every_sample)
        if status != _OK:
            raise IntegrationError(f"MPMP iteration {k} blew up")
        return pts

    return np.concatenate(_map_iterations(run, iterations, threads))


def sensitivity_distance(params: ModelParams, config: SensitivityConfig) -> TimeSeries:
    """Phase-space (4-D Euclidean) distance between two nearby trajectories."""
    a, b = config.initial_states()
    n_steps = IntegratorConfig(config.dt, config.T).n_steps
    dist, status = _pair_distance_kernel(a.as_array(), b.as_array(), n_steps, config.dt,
                                         _pack(params), int(config.stride))
    if status != _OK:
        raise IntegrationError("sensitivity trajectories blew up")
    t = np.arange(len(dist)) * config.stride * config.dt
    return TimeSeries(t, dist, {"quantity": "distance", "deviation": config.deviation})


def _time_steps(times, dt: float, T: float) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1:
        raise ConfigError("times must be a 1-D sequence")
    if np.any(times < 0) or np.any(times > T * (1 + 1e-12)):
        raise ConfigError(f"requested times must lie in [0, {T}]")
    steps = np.rint(times / dt).astype(np.int64)
    if np.any(np.abs(steps * dt - times) > 1e-9 * np.maximum(1.0, times)):
        raise ConfigError(f"requested times must be multiples of dt = {dt}")
    return steps


def otoc_ensemble_starts(config: OtocEnsembleConfig) -> np.ndarray:
    """Gaussian ensemble of unprimed initial conditions, one row per member."""
    cx = config.center
    out = np.empty((config.iterations, 4))
    for k in range(config.iterations):
        r1, r2, r3, r4 = _rng.substream(config.seed, k).normals(4)
        out[k] = (cx.x1 + config.spread_x * r1, cx.x2 + config.spread_x * r2,
                  cx.y1 + config.spread_y * r3, cx.y2 + config.spread_y * r4)
    return out


def classical_otoc(params: ModelParams, config: OtocEnsembleConfig, i: int, times,
                   threads: int = 1) -> TimeSeries:
    """Ensemble mean of ((x'_i(t) - x_i(t)) / probe)^2.

    The primed trajectory differs from the unprimed one only by ``probe`` in
    x1, which makes this the finite-difference stand-in for
    (dx_i(t)/dx_1(0))^2; the second index is therefore always 1.
    """
    if i not in (1, 2):
        raise ConfigError(f"mode index must be 1 or 2, got {i}")
    times = np.asarray(times, dtype=float)
    steps = _time_steps(times, config.dt, config.T)
    order = np.argsort(steps, kind="stable")
    starts = otoc_ensemble_starts(config)
    c = _pack(params)

    chunks = np.array_split(np.arange(config.iterations), max(1, threads))
    chunks = [ch for ch in chunks if len(ch)]

    def run(j):
        return _otoc_kernel(starts[chunks[j]], config.probe, steps[order], config.dt, c)

    results = _map_iterations(run, len(chunks), threads)
    diffs = np.concatenate([r[0] for r in results])
    status = np.concatenate([r[1] for r in results])
    if np.any(status != _OK):
        bad = int(np.flatnonzero(status)[0])
        raise IntegrationError(f"OTOC ensemble member {bad} blew up")
    sq = (diffs[:, :, i - 1] / config.probe) ** 2
    values = np.empty(len(times))
    values[order] = sq.mean(axis=0)
    return TimeSeries(times, values, {"quantity": f"classical C~_{i},1",
                                      "i": i, "j": 1, "iterations": config.iterations})

"""Command-line runner: one subcommand per diagnostic, CSV out, manifest per run.

Config resolution order (later wins): built-in defaults, ``--preset``,
``--config`` file, ``--paper-scale`` ensemble sizes, then ``--set`` and the
dedicated flags. A run manifest can itself be passed as ``--config``.
"""
from __future__ import annotations

import argparse
import copy
import math
import os
import sys
import time
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import __version__, classical, io, quantum, spectral
from . import rng as _rng
from .errors import ConfigError, NumericalError
from .model import FockDimension, ModelParams, build_hamiltonian, find_potential_minimum, \
    potential_grid

ENV_OUTPUT_DIR = "KPOCHAOS_OUTPUT_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

DEFAULTS = {
    "model": {"hbar": 1.0, "K": 1.0, "p1": 3.0, "p2": math.pi, "delta": 0.0, "xi0": 0.0},
    "classical": {"dt": 1e-4, "T": 20.0},
    "quantum": {"dt": 1e-3, "T": 20.0, "stride": 10, "n_max": 30},
    "seed": 0,
    "threads": 1,
    "output_dir": None,
    "potential": {"x_min": -3.0, "x_max": 3.0, "n": 121},
    "sos": {"iterations": 200, "interpolate": False},
    "mpmp": {"iterations": 1000, "tol": 0.1, "quadrant": [1, 1], "every_sample": False},
    "sensitivity": {"deviation": 1e-6, "y_radius": 0.5, "y_angle": 0.65 * math.pi,
                    "stride": 100},
    "otoc": {"pairs": [[1, 1], [2, 1]], "t_max": 20.0, "t_step": 0.1,
             "radius": 0.5, "angle": 0.65 * math.pi, "emit_zero_series": False},
    "classical_otoc": {"iterations": 1000, "spread_x": 0.5, "spread_y": 0.5, "probe": 0.5},
    "quantum_sos": {"kinds": ["husimi", "wigner"], "grid": quantum.SOS_GRID.to_dict()},
    "quantum_mpmp": {"kinds": ["husimi", "wigner"], "quadrant": [1, 1],
                     "grid": quantum.MPMP_GRID.to_dict()},
    "spectrum": {"count": 50, "smallest_values": False},
}

PAPER_SCALE = {
    "mpmp": {"iterations": 100000, "tol": 1e-3},
    "classical_otoc": {"iterations": 10000},
}

EXPERIMENTS = ("potential", "classical-sos", "classical-mpmp", "sensitivity",
               "classical-otoc", "quantum-sos", "quantum-mpmp", "otoc", "spectrum")


# ---------------------------------------------------------------------------
# config


def merge(base: dict, override: dict, path: str = "") -> dict:
    """Recursive dict merge; keys absent from ``base`` are rejected."""
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        where = f"{path}{key}"
        if key not in out:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(out[key], dict) and key != "grid":
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where!r} must be a section")
            out[key] = merge(out[key], value, where + ".")
        elif isinstance(out[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where!r} must be a section")
            out[key] = dict(out[key], **value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_file(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path} must hold a mapping at top level")
    # a manifest carries its resolved config under "config"
    if "manifest_version" in doc:
        doc = doc.get("config", {})
    doc = dict(doc)
    doc.pop("experiment", None)
    return doc


def preset_names() -> list[str]:
    root = resources.files("kpochaos") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_preset(name: str) -> tuple[str | None, dict]:
    path = resources.files("kpochaos") / "presets" / f"{name}.yaml"
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    doc = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    experiment = doc.pop("experiment", None)
    return experiment, doc


def parse_assignment(text: str) -> dict:
    """``a.b.c=value`` as a nested dict; the value is parsed as YAML."""
    if "=" not in text:
        raise ConfigError(f"--set expects key=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse value in {text!r}") from exc
    out: dict = {}
    node = out
    parts = key.strip().split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value
    return out


def resolve_config(args) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if getattr(args, "preset", None):
        _, doc = load_preset(args.preset)
        cfg = merge(cfg, doc)
    if getattr(args, "config", None):
        cfg = merge(cfg, load_file(args.config))
    if getattr(args, "paper_scale", False):
        cfg = merge(cfg, PAPER_SCALE)
    for item in getattr(args, "set", None) or []:
        cfg = merge(cfg, parse_assignment(item))
    flags = {}
    if getattr(args, "xi0", None) is not None:
        flags["model"] = {"xi0": args.xi0}
    if getattr(args, "seed", None) is not None:
        flags["seed"] = args.seed
    if getattr(args, "threads", None) is not None:
        flags["threads"] = args.threads
    if getattr(args, "out", None) is not None:
        flags["output_dir"] = str(args.out)
    if getattr(args, "emit_zero_series", False):
        flags["otoc"] = {"emit_zero_series": True}
    return merge(cfg, flags)


def _build(kind, section: dict, where: str):
    try:
        return kind(**section)
    except TypeError as exc:
        raise ConfigError(f"invalid [{where}] section: {exc}") from exc


def _int(value, name: str, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < minimum:
        raise ConfigError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def _kinds(value) -> list[str]:
    kinds = [value] if isinstance(value, str) else list(value)
    bad = [k for k in kinds if k not in quantum.KINDS]
    if bad or not kinds:
        raise ConfigError(f"kinds must be drawn from {quantum.KINDS}, got {value!r}")
    return kinds


def _quadrant(value) -> tuple[int, int]:
    try:
        q = tuple(int(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"quadrant must be a sign pair, got {value!r}") from exc
    if len(q) != 2 or any(v not in (1, -1) for v in q):
        raise ConfigError(f"quadrant must be a sign pair, got {value!r}")
    return q


def _otoc_times(sec: dict) -> np.ndarray:
    t_max, t_step = float(sec["t_max"]), float(sec["t_step"])
    if not (t_step > 0 and t_max >= 0):
        raise ConfigError("otoc t_step must be positive and t_max non-negative")
    n = int(round(t_max / t_step))
    return np.round(np.arange(n + 1) * t_step, 12)


def _pairs(sec: dict) -> list[tuple[int, int]]:
    out = []
    for pair in sec["pairs"]:
        i, j = (int(v) for v in pair)
        if i not in (1, 2) or j not in (1, 2):
            raise ConfigError(f"otoc mode indices must be 1 or 2, got {pair!r}")
        out.append((i, j))
    return out


class Setup:
    """Validated module objects built from a resolved config (before any work)."""

    def __init__(self, cfg: dict, experiment: str):
        self.cfg = cfg
        self.experiment = experiment
        self.params = _build(ModelParams, cfg["model"], "model")
        self.seed = _int(cfg["seed"], "seed")
        self.threads = _int(cfg["threads"], "threads", 1)
        q = cfg["quantum"]
        self.dim = FockDimension(_int(q["n_max"], "quantum.n_max", 1))
        self.evolution = _build(quantum.EvolutionConfig,
                                {"dt": q["dt"], "T": q["T"], "stride": q["stride"]}, "quantum")
        self.integrator = _build(classical.IntegratorConfig, cfg["classical"], "classical")
        validate = getattr(self, "_check_" + experiment.replace("-", "_"), None)
        if validate is not None:
            validate()

    def _check_potential(self):
        sec = self.cfg["potential"]
        if not sec["x_max"] > sec["x_min"]:
            raise ConfigError("potential x range must be increasing")
        _int(sec["n"], "potential.n", 2)

    def _check_classical_sos(self):
        _int(self.cfg["sos"]["iterations"], "sos.iterations")

    def _check_classical_mpmp(self):
        sec = self.cfg["mpmp"]
        _int(sec["iterations"], "mpmp.iterations")
        if not float(sec["tol"]) >= 0:
            raise ConfigError("mpmp.tol must be non-negative")
        _quadrant(sec["quadrant"])

    def _check_sensitivity(self):
        self.sensitivity_config()

    def _check_classical_otoc(self):
        self.ensemble_config()
        _pairs(self.cfg["otoc"])
        classical._time_steps(_otoc_times(self.cfg["otoc"]), self.integrator.dt,
                              self.integrator.T)

    def _check_quantum_sos(self):
        _kinds(self.cfg["quantum_sos"]["kinds"])
        self.grid("quantum_sos")

    def _check_quantum_mpmp(self):
        _kinds(self.cfg["quantum_mpmp"]["kinds"])
        _quadrant(self.cfg["quantum_mpmp"]["quadrant"])
        self.grid("quantum_mpmp")

    def _check_otoc(self):
        _pairs(self.cfg["otoc"])
        _otoc_times(self.cfg["otoc"])

    def _check_spectrum(self):
        _int(self.cfg["spectrum"]["count"], "spectrum.count", 1)
        # one spacing more than the even sector can supply is caught here
        n_even = (self.dim.total + 1) // 2
        if self.cfg["spectrum"]["count"] + 1 > n_even:
            raise ConfigError(f"spectrum.count = {self.cfg['spectrum']['count']} needs "
                              f"{self.cfg['spectrum']['count'] + 1} even levels, "
                              f"only {n_even} exist at n_max = {self.dim.n_max}")

    def sensitivity_config(self) -> classical.SensitivityConfig:
        sec = dict(self.cfg["sensitivity"], dt=self.integrator.dt, T=self.integrator.T)
        return _build(classical.SensitivityConfig, sec, "sensitivity")

    def ensemble_config(self) -> classical.OtocEnsembleConfig:
        sec = dict(self.cfg["classical_otoc"], seed=self.seed, dt=self.integrator.dt,
                   T=self.integrator.T)
        _int(sec["iterations"], "classical_otoc.iterations", 1)
        sec["center"] = classical.PhaseState(
            0.0, 0.0,
            self.cfg["otoc"]["radius"] * math.cos(self.cfg["otoc"]["angle"]),
            self.cfg["otoc"]["radius"] * math.sin(self.cfg["otoc"]["angle"]))
        return _build(classical.OtocEnsembleConfig, sec, "classical_otoc")

    def grid(self, section: str) -> quantum.GridSpec:
        return _build(quantum.GridSpec, self.cfg[section]["grid"], section + ".grid")


# ---------------------------------------------------------------------------
# commands; each returns the list of files written


def cmd_potential(s: Setup, out: Path, written: list):
    sec = s.cfg["potential"]
    xs, V = potential_grid(s.params, (sec["x_min"], sec["x_max"]), sec["n"])
    X1, X2 = np.meshgrid(xs, xs, indexing="ij")
    written.append(io.write_csv(out / "potential.csv", ["x1", "x2", "V"],
                                zip(X1.ravel(), X2.ravel(), V.ravel())))


def cmd_classical_sos(s: Setup, out: Path, written: list):
    sec = s.cfg["sos"]
    pts = classical.sos_crossings(s.params, s.integrator, s.seed, sec["iterations"],
                                  interpolate=bool(sec["interpolate"]), threads=s.threads)
    written.append(io.write_csv(out / "sos.csv", ["x1", "y1"], pts))


def cmd_classical_mpmp(s: Setup, out: Path, written: list):
    sec = s.cfg["mpmp"]
    minimum = find_potential_minimum(s.params, _quadrant(sec["quadrant"]))
    pts = classical.mpmp_points(s.params, s.integrator, minimum, float(sec["tol"]), s.seed,
                                sec["iterations"], every_sample=bool(sec["every_sample"]),
                                threads=s.threads)
    written.append(io.write_csv(out / "mpmp.csv", ["y1", "y2"], pts))
    written.append(io.write_json(out / "mpmp.json", {
        "minimum": [minimum.X1, minimum.X2], "points": len(pts)}))


def cmd_sensitivity(s: Setup, out: Path, written: list):
    series = classical.sensitivity_distance(s.params, s.sensitivity_config())
    written.append(io.write_series(out / "sensitivity.csv", series.t, series.values,
                                   "distance"))


def cmd_classical_otoc(s: Setup, out: Path, written: list):
    times = _otoc_times(s.cfg["otoc"])
    config = s.ensemble_config()
    for i in sorted({i for i, _ in _pairs(s.cfg["otoc"])}):
        if i == 2 and s.params.xi0 == 0 and not s.cfg["otoc"]["emit_zero_series"]:
            continue
        series = classical.classical_otoc(s.params, config, i, times, threads=s.threads)
        written.append(io.write_series(out / f"classical_otoc_{i}1.csv", series.t,
                                       series.values, f"C{i}1"))


def _grids(s: Setup, out: Path, written: list, section: str, run):
    for kind in _kinds(s.cfg[section]["kinds"]):
        grid = run(kind)
        grid.meta["seed"] = s.seed
        written.extend(io.write_grid(out / f"{section}_{kind}.csv", grid))


def cmd_quantum_sos(s: Setup, out: Path, written: list):
    spec = s.grid("quantum_sos")
    _grids(s, out, written, "quantum_sos", lambda kind: quantum.accumulate_quantum_sos(
        s.params, s.dim, s.evolution, spec, kind, threads=s.threads))


def cmd_quantum_mpmp(s: Setup, out: Path, written: list):
    spec = s.grid("quantum_mpmp")
    minimum = find_potential_minimum(s.params, _quadrant(s.cfg["quantum_mpmp"]["quadrant"]))
    _grids(s, out, written, "quantum_mpmp", lambda kind: quantum.accumulate_quantum_mpmp(
        s.params, s.dim, s.evolution, minimum, spec, kind, threads=s.threads))


def _eigensystem(s: Setup) -> spectral.Eigensystem:
    H = build_hamiltonian(s.params, s.dim)
    return spectral.eigendecompose(H, hbar=s.params.hbar)


def cmd_otoc(s: Setup, out: Path, written: list):
    sec = s.cfg["otoc"]
    times = _otoc_times(sec)
    evaluator = spectral.EigenbasisOTOC(_eigensystem(s))
    psi0 = spectral.otoc_initial_state(s.dim.n_max, sec["radius"], sec["angle"])
    report = {}
    for i, j in _pairs(sec):
        if i != j and s.params.xi0 == 0 and not sec["emit_zero_series"]:
            continue
        res = evaluator(psi0, i, j, times)
        written.append(io.write_series(out / f"otoc_{i}{j}.csv", res.t, res.values,
                                       f"C{i}{j}"))
        report[f"C{i}{j}"] = {"max_imag": res.max_imag}
    written.append(io.write_json(out / "otoc.json", report))


def cmd_spectrum(s: Setup, out: Path, written: list):
    sec = s.cfg["spectrum"]
    eig = spectral.resolve_parity_mixing(_eigensystem(s))
    even, odd = spectral.parity_split(eig)
    parity = np.zeros(eig.energies.size, dtype=np.int64)
    parity[even], parity[odd] = 1, -1
    written.append(io.write_csv(out / "spectrum.csv", ["k", "E", "parity"],
                                zip(range(eig.energies.size), eig.energies, parity)))
    E_even = np.sort(eig.energies[even])
    gaps = spectral.level_spacings(E_even, sec["count"],
                                   smallest_values=bool(sec["smallest_values"]))
    xs, N = spectral.cumulative_counts(gaps)
    written.append(io.write_csv(out / "spacings.csv", ["spacing", "N"], zip(xs, N)))
    fit = spectral.brody_fit(gaps)
    written.append(io.write_csv(out / "fit.csv", ["omega", "A", "beta", "rss"],
                                [(fit.omega, fit.A, fit.beta, fit.rss)]))
    written.append(io.write_json(out / "fit.json", dict(fit.meta, params=s.params.to_dict(),
                                                        n_max=s.dim.n_max)))


COMMANDS = {
    "potential": cmd_potential,
    "classical-sos": cmd_classical_sos,
    "classical-mpmp": cmd_classical_mpmp,
    "sensitivity": cmd_sensitivity,
    "classical-otoc": cmd_classical_otoc,
    "quantum-sos": cmd_quantum_sos,
    "quantum-mpmp": cmd_quantum_mpmp,
    "otoc": cmd_otoc,
    "spectrum": cmd_spectrum,
}


# ---------------------------------------------------------------------------
# runner


def output_dir(cfg: dict, experiment: str) -> Path:
    if cfg.get("output_dir"):
        return Path(cfg["output_dir"])
    return Path(os.environ.get(ENV_OUTPUT_DIR, "kpochaos-output")) / experiment


def _file_entry(path: Path, root: Path) -> dict:
    return {"path": str(path.relative_to(root)), "sha256": io.sha256(path),
            "bytes": path.stat().st_size}


def write_manifest(out: Path, experiment: str, cfg: dict, written, status: str,
                   started: float, error: str | None = None) -> Path:
    payload = {
        "manifest_version": 1,
        "experiment": experiment,
        "status": status,
        "tool": {"name": "kpochaos", "version": __version__},
        "rng": {"name": _rng.NAME, "seed": cfg["seed"]},
        "config": cfg,
        "started": datetime.fromtimestamp(started, timezone.utc).isoformat(),
        "duration_s": time.time() - started,
        "files": [_file_entry(Path(p), out) for p in written if Path(p).exists()],
    }
    if error is not None:
        payload["error"] = error
    return io.write_json(out / "manifest.json", payload)


def run_experiment(experiment: str, cfg: dict) -> Path:
    """Validate ``cfg``, run ``experiment`` and return its output directory."""
    if experiment not in COMMANDS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    setup = Setup(cfg, experiment)
    out = output_dir(cfg, experiment)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    written: list = []
    try:
        COMMANDS[experiment](setup, out, written)
    except BaseException as exc:
        write_manifest(out, experiment, cfg, written, "failed", started,
                       f"{type(exc).__name__}: {exc}")
        raise
    write_manifest(out, experiment, cfg, written, "ok", started)
    return out


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="YAML config file (or a run manifest)")
    p.add_argument("--preset", help="named parameter set, e.g. fig2c")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one config value, e.g. classical.T=2 (repeatable)")
    p.add_argument("--xi0", type=float, help="coupling strength")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="parallel map width (results unchanged)")
    p.add_argument("--out", type=Path, help=f"output directory (default ${ENV_OUTPUT_DIR}"
                                            "/<experiment>)")
    p.add_argument("--paper-scale", action="store_true",
                   help="full ensemble sizes instead of desk-scale ones")
    p.add_argument("--emit-zero-series", action="store_true",
                   help="also write C21 when xi0 = 0 (identically zero)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kpochaos", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        _add_common(sub.add_parser(name, help=f"run the {name} diagnostic"))
    run = sub.add_parser("run", help="run a preset with its own experiment")
    run.add_argument("name")
    _add_common(run)
    sub.add_parser("presets", help="list presets")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "presets":
            for name in preset_names():
                print(f"{name}\t{load_preset(name)[0]}")
            return EXIT_OK
        experiment = args.command
        if experiment == "run":
            experiment, _ = load_preset(args.name)
            args.preset = args.name
            if experiment is None:
                raise ConfigError(f"preset {args.name!r} names no experiment")
        cfg = resolve_config(args)
        out = run_experiment(experiment, cfg)
    except ConfigError as exc:
        print(f"kpochaos: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"kpochaos: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())

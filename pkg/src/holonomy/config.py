"""Scenario configuration: parsing, validation, serialisation and curve construction.

A scenario is a JSON object::

    {"id": "bloch", "n": 2, "k": 2, "weights": [0.7, 0.3],
     "curve": {"generator": "bloch_circle", "params": {"theta": 1.047}, "seed": null, "steps": 2000},
     "surface": "cone" | {"file": "grid.json"} | null,
     "tolerances": {"phase_tol": 1e-6, "quad_tol": 1e-6, "orbit_tol": 1e-9, "residual_tol": 1e-4},
     "output": null, "sweep": null, "triangle": null}

``curve`` may instead be ``{"file": "path.json"}`` holding a serialised
:class:`DiscretizedPath`. Relative file names resolve against the
directory of the config file. Validation errors name the offending field
by its dotted path.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError
from .geometry import ParametrizedSurface, cone_surface
from .io import load_json, matrix_from_json
from .paths import DiscretizedPath
from .states import SpectralWeights

__all__ = [
    "GENERATORS",
    "DEFAULT_TOLERANCES",
    "CurveSpec",
    "ScenarioConfig",
    "load_config",
    "bundled_scenarios",
    "build_curve",
    "sweep_points",
    "schema",
]

DEFAULT_TOLERANCES = {"phase_tol": 1e-6, "quad_tol": 1e-6, "orbit_tol": 1e-9, "residual_tol": 1e-4}

# generator name -> (required params, optional params with defaults)
GENERATORS: dict[str, tuple[tuple[str, ...], dict]] = {
    "constant": ((), {}),
    "bloch_circle": (("theta",), {}),
    "random_orbit_loop": ((), {"modes": 3, "amplitude": 0.6}),
    "hamiltonian_loop": (("H", "T"), {}),
    "arc": (("angle",), {}),
    "geodesic": ((), {}),
}

_TOP_KEYS = {"id", "n", "k", "weights", "curve", "surface", "tolerances", "output", "sweep", "triangle"}
_SWEEP_ALIASES = {"theta": "curve.params.theta", "angle": "curve.params.angle", "modes": "curve.params.modes",
                  "amplitude": "curve.params.amplitude", "steps": "curve.steps", "seed": "curve.seed"}


@dataclass(frozen=True)
class CurveSpec:
    generator: str | None = None
    params: dict = field(default_factory=dict)
    seed: int | None = None
    steps: int = 2000
    file: str | None = None

    def to_dict(self) -> dict:
        if self.file is not None:
            return {"file": self.file}
        return {"generator": self.generator, "params": copy.deepcopy(self.params), "seed": self.seed,
                "steps": self.steps}


@dataclass(frozen=True)
class ScenarioConfig:
    id: str
    n: int
    k: int
    weights: SpectralWeights
    curve: CurveSpec
    surface: str | dict | None = None
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    output: str | None = None
    sweep: dict | None = None
    triangle: dict | None = None
    base_dir: str = field(default=".", compare=False)

    @classmethod
    def from_dict(cls, data, base_dir=".") -> "ScenarioConfig":
        if not isinstance(data, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        unknown = sorted(set(data) - _TOP_KEYS)
        if unknown:
            raise ConfigError(unknown[0], "unknown field")
        n = _int(data, "n", minimum=1)
        k = _int(data, "k", minimum=1)
        if k > n:
            raise ConfigError("k", f"need k <= n, got n={n}, k={k}")
        raw_w = data.get("weights")
        if not isinstance(raw_w, list) or not all(_is_number(w) for w in raw_w):
            raise ConfigError("weights", "must be a list of numbers")
        if len(raw_w) != k:
            raise ConfigError("weights", f"expected {k} values, got {len(raw_w)}")
        try:
            weights = SpectralWeights(tuple(raw_w))
        except ContractError as exc:
            raise ConfigError("weights", str(exc).removeprefix("weights: ")) from None
        curve = _parse_curve(data.get("curve"), n, k)
        surface = data.get("surface")
        if surface is not None and surface != "cone":
            if not (isinstance(surface, dict) and set(surface) == {"file"} and isinstance(surface["file"], str)):
                raise ConfigError("surface", 'must be "cone", {"file": path} or null')
        tolerances = dict(DEFAULT_TOLERANCES)
        raw_t = data.get("tolerances") or {}
        if not isinstance(raw_t, dict):
            raise ConfigError("tolerances", "must be an object")
        for key, val in raw_t.items():
            if key not in DEFAULT_TOLERANCES:
                raise ConfigError(f"tolerances.{key}", "unknown tolerance")
            if not _is_number(val) or not val > 0:
                raise ConfigError(f"tolerances.{key}", "must be a positive number")
            tolerances[key] = float(val)
        output = data.get("output")
        if output is not None and not isinstance(output, str):
            raise ConfigError("output", "must be a path string or null")
        sweep = _parse_sweep(data.get("sweep"))
        triangle = _parse_triangle(data.get("triangle"))
        ident = data.get("id", "scenario")
        if not isinstance(ident, str):
            raise ConfigError("id", "must be a string")
        return cls(id=ident, n=n, k=k, weights=weights, curve=curve, surface=copy.deepcopy(surface),
                   tolerances=tolerances, output=output, sweep=sweep, triangle=triangle, base_dir=str(base_dir))

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "n": self.n,
            "k": self.k,
            "weights": list(self.weights.values),
            "curve": self.curve.to_dict(),
            "surface": copy.deepcopy(self.surface),
            "tolerances": dict(self.tolerances),
            "output": self.output,
            "sweep": copy.deepcopy(self.sweep),
            "triangle": copy.deepcopy(self.triangle),
        }

    def with_overrides(self, *, steps: int | None = None, seed: int | None = None) -> "ScenarioConfig":
        data = self.to_dict()
        if "file" not in data["curve"]:
            if steps is not None:
                data["curve"]["steps"] = steps
            if seed is not None:
                data["curve"]["seed"] = seed
        return ScenarioConfig.from_dict(data, self.base_dir)

    def resolve(self, name: str) -> Path:
        p = Path(name)
        return p if p.is_absolute() else Path(self.base_dir) / p


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _int(data: dict, key: str, minimum: int, prefix: str = "") -> int:
    val = data.get(key)
    if not isinstance(val, int) or isinstance(val, bool):
        raise ConfigError(prefix + key, "must be an integer")
    if val < minimum:
        raise ConfigError(prefix + key, f"must be >= {minimum}")
    return val


def _parse_curve(raw, n: int, k: int) -> CurveSpec:
    if not isinstance(raw, dict):
        raise ConfigError("curve", "must be an object")
    if "file" in raw:
        if set(raw) != {"file"} or not isinstance(raw["file"], str):
            raise ConfigError("curve.file", "a file curve takes only a path string")
        return CurveSpec(file=raw["file"])
    unknown = sorted(set(raw) - {"generator", "params", "seed", "steps"})
    if unknown:
        raise ConfigError(f"curve.{unknown[0]}", "unknown field")
    gen = raw.get("generator")
    if gen not in GENERATORS:
        raise ConfigError("curve.generator", f"unknown generator {gen!r}; choose from {sorted(GENERATORS)}")
    params = raw.get("params") or {}
    if not isinstance(params, dict):
        raise ConfigError("curve.params", "must be an object")
    required, optional = GENERATORS[gen]
    for name in required:
        if name not in params:
            raise ConfigError(f"curve.params.{name}", f"required by generator {gen!r}")
    for name in params:
        if name not in required and name not in optional:
            raise ConfigError(f"curve.params.{name}", f"not a parameter of generator {gen!r}")
    for name, val in params.items():
        if name != "H" and not _is_number(val):
            raise ConfigError(f"curve.params.{name}", "must be a number")
    if gen == "random_orbit_loop" and "modes" in params:
        if not isinstance(params["modes"], int) or params["modes"] < 1:
            raise ConfigError("curve.params.modes", "must be an integer >= 1")
    if gen == "bloch_circle" and n != 2:
        raise ConfigError("n", "bloch_circle needs n = 2")
    if gen in ("arc", "geodesic") and k != 1:
        raise ConfigError("k", f"{gen} is a pure-state curve; needs k = 1")
    if gen == "hamiltonian_loop":
        try:
            matrix_from_json(params["H"], (n, n))
        except (ContractError, ValueError, TypeError):
            raise ConfigError("curve.params.H", f"must be an {n}x{n} matrix of [re, im] pairs") from None
    seed = raw.get("seed")
    if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool) or seed < 0):
        raise ConfigError("curve.seed", "must be a non-negative integer or null")
    steps = _int(raw, "steps", minimum=1, prefix="curve.") if "steps" in raw else 2000
    return CurveSpec(generator=gen, params=copy.deepcopy(params), seed=seed, steps=steps)


def _parse_sweep(raw) -> dict | None:
    if raw is None:
        return None
    if not isinstance(raw, dict) or not 1 <= len(raw) <= 2:
        raise ConfigError("sweep", "must map one or two parameter names to {start, stop, num}")
    out = {}
    for name, spec in raw.items():
        where = f"sweep.{name}"
        if not isinstance(spec, dict) or set(spec) != {"start", "stop", "num"}:
            raise ConfigError(where, "needs exactly start, stop and num")
        for key in ("start", "stop"):
            if not _is_number(spec[key]):
                raise ConfigError(f"{where}.{key}", "must be a number")
        if not isinstance(spec["num"], int) or isinstance(spec["num"], bool) or spec["num"] < 0:
            raise ConfigError(f"{where}.num", "must be a non-negative integer")
        out[name] = dict(spec)
    return out


def _parse_triangle(raw) -> dict | None:
    if raw is None:
        return None
    if not isinstance(raw, dict):
        raise ConfigError("triangle", "must be an object")
    allowed = {"seed": 0, "scale": 0.4, "steps": 200}
    for key, val in raw.items():
        if key not in allowed:
            raise ConfigError(f"triangle.{key}", "unknown field")
        if not _is_number(val) or val < 0:
            raise ConfigError(f"triangle.{key}", "must be a non-negative number")
    return {**allowed, **raw}


def load_config(path) -> ScenarioConfig:
    """Read a config file; a bare name without suffix also finds bundled scenarios."""
    p = Path(path)
    if not p.exists():
        bundled = bundled_scenarios()
        key = p.stem if p.suffix == ".json" else p.name
        if key in bundled and p.parent == Path("."):
            p = bundled[key]
        else:
            raise ConfigError("--config", f"no such file: {path}")
    try:
        data = load_json(p)
    except ValueError as exc:
        raise ConfigError("<root>", f"invalid JSON: {exc}") from None
    return ScenarioConfig.from_dict(data, base_dir=p.parent)


def bundled_scenarios() -> dict[str, Path]:
    root = resources.files("holonomy") / "scenarios"
    return {Path(str(f)).stem: Path(str(f)) for f in root.iterdir() if str(f).endswith(".json")}


def schema() -> dict:
    return load_json(Path(str(resources.files("holonomy") / "schema" / "scenario.schema.json")))


# -- curve construction -----------------------------------------------------------


def build_curve(config: ScenarioConfig) -> tuple[DiscretizedPath, ParametrizedSurface | None]:
    """The path described by ``config`` and, if requested, its spanning surface."""
    from . import npc, transport
    from .states import random_frame, random_orbit_loop

    spec, w, n = config.curve, config.weights, config.n
    surface = None
    if spec.file is not None:
        try:
            path = DiscretizedPath.from_json(load_json(config.resolve(spec.file)))
        except OSError as exc:
            raise ConfigError("curve.file", f"cannot read: {exc}") from None
        if path.n != n or path.weights != w:
            raise ConfigError("curve.file", "file disagrees with n/weights of the config")
    else:
        p, steps = spec.params, spec.steps
        rho0 = np.zeros((n, n), dtype=complex)
        rho0[np.arange(w.k), np.arange(w.k)] = w.values
        if spec.generator == "constant":
            path = DiscretizedPath.constant(rho0, w, steps, frame=np.eye(n, w.k, dtype=complex))
            if config.surface == "cone":
                surface = ParametrizedSurface(weights=w, n=n, map=lambda u, v: np.broadcast_to(
                    rho0, (len(u), len(v), n, n)).copy())
        elif spec.generator == "bloch_circle":
            path = transport.bloch_circle(float(p["theta"]), w.values, steps)
            if config.surface == "cone":
                surface = transport.bloch_cap(float(p["theta"]), w.values)
        elif spec.generator == "random_orbit_loop":
            path = random_orbit_loop(w, n, int(p.get("modes", 3)), spec.seed, steps=steps,
                                     amplitude=float(p.get("amplitude", 0.6)))
            if config.surface == "cone":
                surface = cone_surface(path.meta["loop_generator"], path.rho[0], w)
        elif spec.generator == "hamiltonian_loop":
            h = matrix_from_json(p["H"], (n, n))
            try:
                path = transport.hamiltonian_loop(h, rho0, float(p["T"]), steps, weights=w)
            except ContractError as exc:
                raise ConfigError("curve.params", str(exc)) from None
            if config.surface == "cone":
                raise ConfigError("surface", "no cone construction for hamiltonian_loop; use a surface file")
        elif spec.generator == "arc":
            a = float(p["angle"])
            s = np.linspace(0.0, 1.0, steps + 1)
            frames = np.zeros((steps + 1, n, 1), dtype=complex)
            frames[:, 0, 0], frames[:, 1, 0] = np.cos(a * s), np.sin(a * s)
            path = DiscretizedPath.from_frames(s, frames, w)
        else:  # geodesic
            rng = np.random.default_rng(spec.seed)
            path = npc.geodesic_path(random_frame(n, 1, rng), random_frame(n, 1, rng), steps)
    if isinstance(config.surface, dict):
        try:
            surface = ParametrizedSurface.from_json(load_json(config.resolve(config.surface["file"])))
        except OSError as exc:
            raise ConfigError("surface.file", f"cannot read: {exc}") from None
    path.check_orbit(config.tolerances["orbit_tol"])
    return path, surface


def sweep_points(config: ScenarioConfig) -> tuple[list[str], list[tuple[tuple[float, ...], ScenarioConfig]]]:
    """Parameter names and the grid of (values, config) in row-major order."""
    if not config.sweep:
        raise ConfigError("sweep", "config has no sweep section")
    names = list(config.sweep)
    axes = [np.linspace(spec["start"], spec["stop"], spec["num"]) for spec in config.sweep.values()]
    points = []
    for values in _product(axes):
        data = config.to_dict()
        data["sweep"] = None
        for name, val in zip(names, values):
            _assign(data, name, val)
        try:
            points.append((values, ScenarioConfig.from_dict(data, config.base_dir)))
        except ConfigError as exc:
            raise ConfigError(f"sweep.{names[0]}", f"grid point {values} is invalid ({exc})") from None
    return names, points


def _product(axes):
    if not axes:
        return [()]
    grids = np.meshgrid(*axes, indexing="ij")
    return [tuple(float(g.flat[i]) for g in grids) for i in range(grids[0].size)]


def _assign(data: dict, name: str, value: float) -> None:
    if name == "kappa1":
        if data["k"] != 2:
            raise ConfigError("sweep.kappa1", "kappa1 sweeps need k = 2")
        data["weights"] = [value, 1.0 - value]
        return
    dotted = _SWEEP_ALIASES.get(name, name)
    keys = dotted.split(".")
    node = data
    for key in keys[:-1]:
        if not isinstance(node, dict) or key not in node:
            raise ConfigError(f"sweep.{name}", f"{dotted} does not exist in the config")
        node = node[key]
    if keys[-1] in ("steps", "modes", "seed"):
        value = int(round(value))
    node[keys[-1]] = value

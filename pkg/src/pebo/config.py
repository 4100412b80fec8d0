"""Scenario files: TOML tables in, validated settings and built objects out.

A minimal file::

    [model]
    name = "example_sec6"

    [design]
    lambdas = [-1.0, -2.0, -3.0]

A polynomial plant lists ``(coef, exponents)`` terms per component::

    [model]
    name = "polynomial"
    n = 2
    p = 1
    f = [[{coef = -1.0, exp = [1, 0]}],
         [{coef = -1.0, exp = [0, 1]}, {coef = 1.0, exp = [2, 0]}]]
    h = [[{coef = 1.0, exp = [0, 1]}, {coef = 1.0, exp = [3, 0]}]]

Every other key has a default; :func:`dump_config` writes the effective
settings back out so a run can be repeated from its echo.
"""
from __future__ import annotations

import copy
import sys
from dataclasses import dataclass

import numpy as np
import tomli_w

from .errors import BadEigenvalue, ConfigError
from .estimation import EstimatorConfig
from .example import ExampleScenario, example_model
from .flows import IntegratorConfig
from .system import DomainBox, polynomial_model
from .transform import LeftInverseConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

MODES = ("batch", "expanding", "landscape")

DEFAULTS = {
    "model": {"name": "example_sec6"},
    "domain": {"lower": [-2.0, -2.0], "upper": [2.0, 2.0]},
    "horizon": {"t0": 0.1, "tf": 1.0},
    "initial": {"x0": [0.8, -0.5]},
    "design": {"rho": 0.0, "H": "identity", "jitter": 0.0},
    "integrator": {"step": 1e-4},
    "estimation": {"mode": "batch", "update_period": 0.1, "constrained": False,
                   "f_target": 1e-24, "seed": 0, "evaluator": "auto"},
    "left_inverse": {"starts": 16, "restarts": 2, "tol_cost": 1e-12},
    "landscape": {"t_prime": [0.2], "grid": 101, "span": 5.0},
    "analysis": {"order": 1, "time": 0.5, "sweep_axis": 0, "sweep_lower": -2.0,
                 "sweep_upper": 2.0, "sweep_points": 101, "base": [0.0, 0.5],
                 "gramian_x": [0.8, -0.5], "gramian_T": 1.0, "gramian_start": 0.1,
                 "t_grid": [0.0, 0.05, 0.1, 0.2, 0.5, 1.0], "injectivity_grid": 9},
    "output": {"dir": "out", "noise_std": 0.0, "table_stride": 10},
}

REQUIRED = (("design", "lambdas"),)

EXAMPLE_LAMBDAS = [-1.0, -2.0, -3.0]


def _merge(base, user):
    out = copy.deepcopy(base)
    for key, val in user.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


@dataclass
class ScenarioConfig:
    """Effective settings (defaults merged with a scenario file)."""

    data: dict

    def __getitem__(self, key):
        return self.data[key]

    @property
    def mode(self):
        return self.data["estimation"]["mode"]

    @property
    def seed(self):
        return int(self.data["estimation"]["seed"])

    @property
    def out_dir(self):
        return self.data["output"]["dir"]

    def set(self, section, key, value):
        self.data.setdefault(section, {})[key] = value

    # builders -------------------------------------------------------------
    def model(self):
        m = self.data["model"]
        name = m.get("name")
        if name == "example_sec6":
            return example_model()
        if name == "polynomial":
            try:
                f = [[(t["coef"], t["exp"]) for t in comp] for comp in m["f"]]
                h = [[(t["coef"], t["exp"]) for t in comp] for comp in m["h"]]
                return polynomial_model(int(m["n"]), int(m["p"]), f, h)
            except KeyError as exc:
                raise ConfigError(f"model.{exc.args[0]}: missing polynomial field") from None
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"model: {exc}") from None
        raise ConfigError(f"model.name: unknown model {name!r}")

    def box(self):
        d = self.data["domain"]
        try:
            return DomainBox(d["lower"], d["upper"])
        except ValueError as exc:
            raise ConfigError(f"domain: {exc}") from None

    def scenario(self):
        """:class:`~pebo.example.ExampleScenario` built from these settings."""
        d = self.data
        builtin = d["model"]["name"] == "example_sec6"
        ev = d["estimation"]["evaluator"]
        if ev == "auto":
            closed = (builtin and list(map(float, d["design"]["lambdas"])) == EXAMPLE_LAMBDAS
                      and d["design"]["rho"] == 0.0 and d["design"]["H"] == "identity")
            ev = "closed-form" if closed else "quadrature"
        n = self.model().n
        est = d["estimation"]
        x0 = d["initial"]["x0"]
        lam = d["design"]["lambdas"]
        jitter = float(d["design"].get("jitter", 0.0))
        if jitter:
            rng = np.random.default_rng(self.seed)
            lam = list(np.asarray(lam, dtype=float) * (1.0 + rng.uniform(-jitter, jitter, len(lam))))
            if ev == "closed-form":
                ev = "quadrature"
        n_z = len(lam) * self.model().p
        zeta0 = d["initial"].get("zeta0", [0.0] * n_z)
        theta0 = est.get("theta0")
        li = d["left_inverse"]
        return ExampleScenario(
            x0=tuple(x0), zeta0=tuple(zeta0), t0=float(d["horizon"]["t0"]),
            tf=float(d["horizon"]["tf"]), sample_period=float(d["integrator"]["step"]),
            box=self.box(), lambdas=tuple(float(v) for v in lam),
            noise_std=float(d["output"]["noise_std"]), seed=self.seed,
            update_period=float(est["update_period"]), evaluator=ev,
            linv=LeftInverseConfig(starts=int(li["starts"]), restarts=int(li["restarts"]),
                                   tol_cost=float(li["tol_cost"])),
            estimator=EstimatorConfig(theta0=None if theta0 is None else np.asarray(theta0, float),
                                      constrained=bool(est["constrained"]),
                                      max_evals=est.get("max_evals"),
                                      f_target=float(est["f_target"])),
            table_stride=int(d["output"]["table_stride"]),
            model=None if builtin else self.model(), rho=float(d["design"]["rho"]),
            H=str(d["design"]["H"]))

    def integrator(self):
        return IntegratorConfig(float(self.data["integrator"]["step"]))


def validate(cfg):
    """Raise :class:`ConfigError` naming the first offending field."""
    d = cfg.data
    for sec, key in REQUIRED:
        if key not in d.get(sec, {}):
            raise ConfigError(f"{sec}.{key}: required field is missing")
    model = cfg.model()
    n = model.n
    lam = d["design"]["lambdas"]
    if not isinstance(lam, list) or len(lam) != n + 1:
        raise ConfigError(f"design.lambdas: need n + 1 = {n + 1} values")
    if any(not float(v) < 0 for v in lam):
        raise ConfigError("design.lambdas: eigenvalues must be strictly negative")
    box = cfg.box()
    if box.dim != n:
        raise ConfigError(f"domain: bounds must have n = {n} entries")
    if len(d["initial"]["x0"]) != n:
        raise ConfigError(f"initial.x0: need n = {n} entries")
    if "zeta0" in d["initial"] and len(d["initial"]["zeta0"]) != (n + 1) * model.p:
        raise ConfigError(f"initial.zeta0: need n_z = {(n + 1) * model.p} entries")
    if d["estimation"]["mode"] not in MODES:
        raise ConfigError(f"estimation.mode: one of {', '.join(MODES)}")
    if d["design"]["H"] not in ("identity", "exp_decay"):
        raise ConfigError("design.H: 'identity' or 'exp_decay'")
    if not float(d["integrator"]["step"]) > 0:
        raise ConfigError("integrator.step: must be positive")
    t0, tf = float(d["horizon"]["t0"]), float(d["horizon"]["tf"])
    if not 0 <= t0 < tf:
        raise ConfigError("horizon: need 0 <= t0 < tf")
    if float(d["output"]["noise_std"]) < 0:
        raise ConfigError("output.noise_std: must be nonnegative")
    try:
        cfg.scenario().design()
    except BadEigenvalue as exc:
        raise ConfigError(f"design.lambdas: {exc}") from None
    return cfg


def from_dict(user):
    """Merge ``user`` over the defaults and validate."""
    if not isinstance(user, dict):
        raise ConfigError("configuration must be a table")
    return validate(ScenarioConfig(_merge(DEFAULTS, user)))


def load_config(path):
    """Read and validate a scenario file."""
    try:
        with open(path, "rb") as fh:
            user = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return from_dict(user)


def default_config():
    """Settings of the built-in example scenario."""
    return from_dict({"design": {"lambdas": list(EXAMPLE_LAMBDAS)}})


def dump_config(cfg, path):
    """Write the effective settings as TOML."""
    with open(path, "wb") as fh:
        tomli_w.dump(cfg.data, fh)
    return path

"""Run configuration: TOML (or JSON) files with flat keys.

Example::

    formulation = "wentzell"
    geometry = "interval"
    n = 8
    data = "wentzell_1d_trig"
    scheme = "radau_iia_2"
    tau = 0.01
    t_end = 1.0

    [outputs]
    directory = "out"
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
import tomli

from .problems import FORMULATIONS
from .timestepping import SCHEMES
from .verification.manufactured import PRESETS, make_manufactured_case

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "KAPPA_PRESETS", "ALPHA_PRESETS"]

OUTPUT_ENV = "DYNBC_OUTPUT_DIR"

KAPPA_PRESETS = {
    "linear_x": (lambda X: 1.0 + X[:, 0], 1.0),
    "bump": (lambda X: 1.0 + 0.5 * np.exp(-np.sum((X - 0.5) ** 2, axis=1) * 10.0), 1.0),
}
ALPHA_PRESETS = {
    "sin_arc": lambda s: np.sin(2 * np.pi * s / 4.0),
}


class ConfigError(ValueError):
    """Malformed or inconsistent configuration; ``field`` names the offending key(s)."""

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        super().__init__(message)
        self.field = field
        self.line = line

    def to_dict(self) -> dict:
        doc = {"error": "config", "message": str(self)}
        if self.field is not None:
            doc["field"] = self.field
        if self.line is not None:
            doc["line"] = self.line
        return doc


@dataclass
class RunConfig:
    formulation: str
    geometry: str = "interval"
    n: int = 8
    multiplier_mesh: Union[str, dict] = "matching"
    kappa: Union[float, str, None] = None
    alpha: Union[float, str, None] = None
    beta: Optional[float] = None
    data: str = "zero"
    u0: float = 0.0
    scheme: str = "implicit_euler"
    tau: float = 0.01
    t_end: float = 1.0
    solver_tol: float = 1e-12
    study: str = "space"
    levels: list = field(default_factory=lambda: [4, 8, 16, 32])
    taus: list = field(default_factory=lambda: [0.1, 0.05, 0.025, 0.0125])
    output_dir: str = "out"
    formats: list = field(default_factory=lambda: ["csv", "json"])

    def to_dict(self) -> dict:
        return asdict(self)

    def content_hash(self) -> str:
        doc = self.to_dict()
        doc.pop("output_dir")
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    @property
    def case(self):
        return None if self.data == "zero" else make_manufactured_case(self.data)

    def coefficients(self):
        """``CoefficientSet`` plus whether ``alpha`` is parametrized by arc length."""
        from .assembly import CoefficientSet

        case = self.case
        if case is not None:
            return case.coeffs, False
        kappa, c_kappa = 1.0, 1.0
        if isinstance(self.kappa, str):
            kappa, c_kappa = KAPPA_PRESETS[self.kappa]
        elif self.kappa is not None:
            kappa = c_kappa = float(self.kappa)
        alpha, arc = 0.0, False
        if isinstance(self.alpha, str):
            alpha, arc = ALPHA_PRESETS[self.alpha], True
        elif self.alpha is not None:
            alpha = float(self.alpha)
        beta = 0.0 if self.beta is None else float(self.beta)
        return CoefficientSet(kappa=kappa, c_kappa=c_kappa, alpha=alpha, beta=beta), arc


_KEYS = {f for f in RunConfig.__dataclass_fields__} | {"outputs"}


def _check_type(doc, key, types, what):
    if key in doc and not isinstance(doc[key], types):
        raise ConfigError("field %r must be %s, got %r" % (key, what, doc[key]), field=key)


def parse_config(doc: dict) -> RunConfig:
    unknown = sorted(set(doc) - _KEYS)
    if unknown:
        raise ConfigError("unknown field(s): %s" % ", ".join(unknown), field=unknown[0])
    if "formulation" not in doc:
        raise ConfigError("missing required field 'formulation'", field="formulation")
    doc = dict(doc)
    outputs = doc.pop("outputs", {}) or {}
    if not isinstance(outputs, dict):
        raise ConfigError("'outputs' must be a table", field="outputs")
    if "directory" in outputs:
        doc["output_dir"] = outputs["directory"]
    if "formats" in outputs:
        doc["formats"] = outputs["formats"]

    _check_type(doc, "n", int, "an integer")
    for key in ("tau", "t_end", "solver_tol", "u0"):
        _check_type(doc, key, (int, float), "a number")
    _check_type(doc, "beta", (int, float), "a number")
    _check_type(doc, "kappa", (int, float, str), "a number or preset id")
    _check_type(doc, "alpha", (int, float, str), "a number or preset id")
    _check_type(doc, "levels", list, "a list of integers")
    _check_type(doc, "taus", list, "a list of numbers")
    cfg = RunConfig(**doc)

    if cfg.formulation not in FORMULATIONS:
        raise ConfigError("unknown formulation %r; choose from %s"
                          % (cfg.formulation, ", ".join(FORMULATIONS)), field="formulation")
    if cfg.geometry not in ("interval", "square"):
        raise ConfigError("geometry must be 'interval' or 'square'", field="geometry")
    if cfg.formulation == "nonlocal" and cfg.geometry != "square":
        raise ConfigError("beta>0 requires square", field="beta,geometry")
    if cfg.n < 1:
        raise ConfigError("n must be >= 1", field="n")
    if cfg.scheme not in SCHEMES:
        raise ConfigError("unknown scheme %r" % cfg.scheme, field="scheme")
    if cfg.study not in ("space", "time"):
        raise ConfigError("study must be 'space' or 'time'", field="study")
    if not cfg.tau > 0 or not cfg.t_end > 0 or cfg.tau > cfg.t_end:
        raise ConfigError("need 0 < tau <= t_end", field="tau,t_end")
    if cfg.data != "zero" and cfg.data not in PRESETS:
        raise ConfigError("unknown data preset %r" % cfg.data, field="data")
    if isinstance(cfg.kappa, str) and cfg.kappa not in KAPPA_PRESETS:
        raise ConfigError("unknown kappa preset %r" % cfg.kappa, field="kappa")
    if isinstance(cfg.alpha, str) and cfg.alpha not in ALPHA_PRESETS:
        raise ConfigError("unknown alpha preset %r" % cfg.alpha, field="alpha")
    for fmt in cfg.formats:
        if fmt not in ("csv", "json"):
            raise ConfigError("unknown output format %r" % fmt, field="outputs.formats")

    mm = cfg.multiplier_mesh
    if isinstance(mm, dict):
        if mm.get("kind") != "independent" or "m" not in mm:
            raise ConfigError("multiplier_mesh table needs kind='independent' and m",
                              field="multiplier_mesh")
        if cfg.geometry != "square":
            raise ConfigError("independent multiplier mesh requires square geometry",
                              field="multiplier_mesh,geometry")
    elif mm != "matching":
        raise ConfigError("multiplier_mesh must be 'matching' or an independent table",
                          field="multiplier_mesh")

    case = cfg.case
    if case is not None:
        if case.formulation != cfg.formulation:
            raise ConfigError("data preset %r is for formulation %r, not %r"
                              % (cfg.data, case.formulation, cfg.formulation), field="data,formulation")
        want = "interval" if case.dim == 1 else "square"
        if cfg.geometry != want:
            raise ConfigError("data preset %r needs geometry %r" % (cfg.data, want),
                              field="data,geometry")
        for key in ("kappa", "alpha", "beta"):
            val = getattr(cfg, key)
            if val is not None and (isinstance(val, str) or float(val) != float(getattr(case.coeffs, key))):
                raise ConfigError("%s=%r conflicts with data preset %r (%s=%r)"
                                  % (key, val, cfg.data, key, getattr(case.coeffs, key)),
                                  field="%s,data" % key)
    coeffs, _ = cfg.coefficients()
    beta = coeffs.beta
    if cfg.formulation == "wentzell" and beta != 0:
        raise ConfigError("wentzell requires beta=0", field="formulation,beta")
    if cfg.formulation == "nonlocal" and not beta > 0:
        raise ConfigError("nonlocal requires beta>0", field="formulation,beta")

    env = os.environ.get(OUTPUT_ENV)
    if env:
        cfg.output_dir = env
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("cannot read config %s: %s" % (path, exc.strerror), field="path") from None
    if path.suffix == ".json":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("JSON parse error: %s" % exc.msg, line=exc.lineno) from None
    else:
        try:
            doc = tomli.loads(text)
        except tomli.TOMLDecodeError as exc:
            line = getattr(exc, "lineno", None)
            raise ConfigError("TOML parse error: %s" % exc, line=line) from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a table/object")
    return parse_config(doc)

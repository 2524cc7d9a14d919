"""Project configuration: INI sections with strict keys and typed defaults.

Every key has a default below; a config file or ``--set section.key=value``
may override it.  Unknown sections or keys are rejected, and values are
converted to the type of the default.
"""
from __future__ import annotations

import configparser
import copy
from pathlib import Path

from .model import ModelParams
from .orbit import QClosure


class ConfigError(ValueError):
    """Malformed or unknown configuration entry."""


DEFAULTS: dict[str, dict[str, object]] = {
    "model": {"F": 6.0, "nu": 0.1, "r": 2.0, "s": 0.0},
    "family": {
        "closure": "endstate",  # endstate | affine
        "u_minus": 0.96,
        "q0": 1.0,
        "q1": 0.0,
        "amplitude": 1e-3,
        "x_max": 30.0,
        "ds": 0.05,
        "seg_len": 2.0,
    },
    "orbit": {"n": 256, "tol": 1e-10, "maxiter": 50},
    "spectrum": {
        "n_xi": 201,
        "N": "64",  # integer or "auto"
        "re_min": -1.0,
        "re_max": 1.0,
        "im_max": 10.0,
        "tol_stab": 5e-4,
        "origin_xi": 0.05,
        "origin_radius": 0.1,
        "zero_radius": 1e-3,
        "sv_tol": 1e-7,
        "conv_tol": 1e-6,
        "check": True,
        "fit_range": 0.3,
        "whitham": True,
    },
    "whitham": {"h": 1e-4, "tol_nd": 1e-6, "n_xi": 41},
    "evans": {"re_min": -0.05, "re_max": 0.05, "im_max": 0.5, "n_re": 3, "n_im": 11,
              "n_phase": 16, "n_cross": 20},
    "simulate": {
        "mode": "probe",  # probe | metastability
        "eps": 1e-3,
        "T": 200.0,
        "periods": 8,
        "n_per": 64,
        "n": 1024,
        "amplitude": 0.05,
        "width": 0.0,  # 0 means the width of the gradient-active region
        "scheme": "spectral",
        "n_diag": 200,
        "snapshots": "0,5,10,20",
        "stop_on_growth": False,
    },
    "output": {"dir": "out"},
}

POSITIVE = {
    ("model", "F"), ("model", "nu"), ("family", "amplitude"), ("family", "x_max"), ("family", "ds"),
    ("family", "seg_len"), ("orbit", "n"), ("orbit", "tol"), ("orbit", "maxiter"),
    ("spectrum", "n_xi"), ("spectrum", "im_max"), ("spectrum", "tol_stab"), ("spectrum", "origin_xi"),
    ("spectrum", "origin_radius"), ("spectrum", "zero_radius"), ("spectrum", "sv_tol"),
    ("spectrum", "conv_tol"), ("spectrum", "fit_range"), ("whitham", "h"), ("whitham", "tol_nd"),
    ("whitham", "n_xi"), ("evans", "n_re"), ("evans", "n_im"), ("evans", "n_phase"),
    ("simulate", "T"), ("simulate", "periods"), ("simulate", "n_per"), ("simulate", "n"),
    ("simulate", "n_diag"),
}
CHOICES = {
    ("family", "closure"): ("endstate", "affine"),
    ("simulate", "mode"): ("probe", "metastability"),
    ("simulate", "scheme"): ("spectral", "central"),
}


def _convert(section, key, raw, default):
    try:
        if isinstance(default, bool):
            low = str(raw).strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return str(raw).strip()
    except ValueError:
        raise ConfigError(f"{section}.{key}: cannot parse {raw!r} as {type(default).__name__}") from None


class ProjectConfig:
    """Resolved configuration; ``cfg[section][key]``."""

    def __init__(self, values: dict[str, dict[str, object]]):
        self.values = values
        self.validate()

    @classmethod
    def load(cls, path=None, overrides=()) -> "ProjectConfig":
        values = copy.deepcopy(DEFAULTS)
        if path is not None:
            parser = configparser.ConfigParser(interpolation=None)
            parser.optionxform = str
            try:
                with open(path) as fh:
                    parser.read_file(fh)
            except (OSError, configparser.Error) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from None
            for section in parser.sections():
                for key, raw in parser.items(section):
                    cls._set(values, section, key, raw)
        for item in overrides:
            name, sep, raw = item.partition("=")
            section, dot, key = name.strip().partition(".")
            if not sep or not dot:
                raise ConfigError(f"override {item!r} must look like section.key=value")
            cls._set(values, section, key.strip(), raw)
        return cls(values)

    @staticmethod
    def _set(values, section, key, raw):
        if section not in DEFAULTS:
            raise ConfigError(f"unknown config section [{section}]")
        if key not in DEFAULTS[section]:
            raise ConfigError(f"unknown config key {section}.{key}")
        values[section][key] = _convert(section, key, raw, DEFAULTS[section][key])

    def validate(self):
        for section, key in POSITIVE:
            if not self.values[section][key] > 0:
                raise ConfigError(f"{section}.{key} must be positive")
        for (section, key), allowed in CHOICES.items():
            if self.values[section][key] not in allowed:
                raise ConfigError(f"{section}.{key} must be one of {', '.join(allowed)}")
        n = str(self.values["spectrum"]["N"])
        if n != "auto" and not (n.isdigit() and int(n) >= 1):
            raise ConfigError("spectrum.N must be a positive integer or 'auto'")
        try:
            self.params()
        except ValueError as exc:
            raise ConfigError(f"model: {exc}") from None

    def __getitem__(self, section):
        return self.values[section]

    def params(self) -> ModelParams:
        m = self.values["model"]
        return ModelParams(F=m["F"], nu=m["nu"], r=m["r"], s=m["s"])

    def closure(self) -> QClosure:
        f = self.values["family"]
        if f["closure"] == "endstate":
            return QClosure.endstate(f["u_minus"])
        return QClosure(q0=f["q0"], q1=f["q1"])

    def truncation(self):
        n = str(self.values["spectrum"]["N"])
        return None if n == "auto" else int(n)

    def as_dict(self) -> dict:
        return copy.deepcopy(self.values)

    def dumps(self) -> str:
        """INI text of the full resolved configuration."""
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        for section, kv in self.values.items():
            parser[section] = {k: str(v) for k, v in kv.items()}
        from io import StringIO
        buf = StringIO()
        parser.write(buf)
        return buf.getvalue()


def write_default(path) -> Path:
    path = Path(path)
    path.write_text(ProjectConfig(copy.deepcopy(DEFAULTS)).dumps())
    return path

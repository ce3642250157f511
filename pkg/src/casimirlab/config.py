"""Pipeline configuration: sectioned key/value text (INI).

Every section and key is optional; omitted values take the defaults in
:data:`SCHEMA`. Unknown sections or keys are rejected. The schema is
documented in ``docs/config.md``.
"""
from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass, field

import numpy as np

from .io import config_hash
from .lifshitz import ZERO_FREQ_POLICIES, MatsubaraGrid, QuadratureSpec
from .materials import MaterialLibrary
from .rig import RigConfig, paper_scale

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Invalid pipeline configuration."""


def _names(text):
    return [v.strip() for v in str(text).split(",") if v.strip()]


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text):
    return None if str(text).strip().lower() in ("", "none") else float(text)


# section -> key -> (parser, default)
SCHEMA = {
    "pipeline": {
        "schema": (int, SCHEMA_VERSION),
        "seed": (int, 0),
        "threads": (int, 1),
    },
    "geometry": {
        "radius": (float, 100e-6),
        "sphere": (str, "gold"),
        "ito_thickness": (float, 190e-9),
    },
    "lifshitz": {
        "temperature": (float, 300.0),
        "zero_frequency": (str, "drude"),
        "rel_tol": (float, 1e-8),
        "l_max_cap": (int, 2000),
        "nodes": (int, 16),
        "max_nodes": (int, 128),
        "tolerance": (float, 1e-6),
    },
    "sweep": {
        "d_min": (float, 50e-9),
        "d_max": (float, 1100e-9),
        "points": (int, 50),
        "spacing": (str, "geometric"),
        "pairs": (_names, ["gold:gold", "gold:ito"]),
    },
    "rig": {"preset": (str, "none"), "plate": (str, "gold")},
    "analysis": {
        "probe_d": (float, 80e-9),
        "window": (float, 10e-9),
        "exponent": (float, 3.0),
        "weighting": (str, "uniform"),
        "min_curves": (int, 30),
        "background_limit": (float, 0.5),
    },
}

# rig keys that come from other sections
_RIG_DERIVED = {"R", "sphere", "set_points", "temperature", "zero_frequency", "ito_thickness", "plate"}
for _f in dataclasses.fields(RigConfig):
    if _f.name in _RIG_DERIVED:
        continue
    default = _f.default if _f.default is not dataclasses.MISSING else None
    if _f.name == "slip_length":
        parser = _opt_float
    elif isinstance(default, bool):
        parser = _bool
    elif isinstance(default, int) and not isinstance(default, bool):
        parser = int
    elif isinstance(default, float):
        parser = float
    else:
        parser = str
    SCHEMA["rig"][_f.name] = (parser, None)  # None: RigConfig or preset default


@dataclass
class PipelineConfig:
    """Resolved configuration shared by all commands."""

    sections: dict = field(default_factory=dict)
    material_text: str = ""
    base_dir: str | None = None

    @classmethod
    def from_text(cls, text: str = "", base_dir: str | None = None) -> "PipelineConfig":
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from None
        values = {sec: {k: d for k, (_, d) in keys.items()} for sec, keys in SCHEMA.items()}
        mat = configparser.ConfigParser(interpolation=None)
        mat.optionxform = str
        for section in parser.sections():
            if section.startswith("material."):
                mat[section] = dict(parser[section])
                continue
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]")
            for key, raw in parser[section].items():
                if key not in SCHEMA[section]:
                    raise ConfigError(f"unknown key {key!r} in [{section}]")
                conv = SCHEMA[section][key][0]
                try:
                    values[section][key] = conv(raw)
                except ValueError as exc:
                    raise ConfigError(f"[{section}] {key}: {exc}") from None
        lines = []
        for section in mat.sections():
            lines.append(f"[{section}]")
            lines.extend(f"{k} = {v}" for k, v in mat[section].items())
        cfg = cls(values, "\n".join(lines), base_dir)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        return cls.from_text(text, os.path.dirname(os.path.abspath(path)))

    def override(self, section: str, **values) -> "PipelineConfig":
        """Copy with command-line overrides applied (``None`` values ignored)."""
        secs = {s: dict(v) for s, v in self.sections.items()}
        for k, v in values.items():
            if v is None:
                continue
            if k not in SCHEMA[section]:
                raise ConfigError(f"unknown key {k!r} in [{section}]")
            secs[section][k] = v
        out = PipelineConfig(secs, self.material_text, self.base_dir)
        out.validate()
        return out

    def validate(self):
        s = self.sections
        if s["pipeline"]["schema"] != SCHEMA_VERSION:
            raise ConfigError(f"unsupported config schema {s['pipeline']['schema']}")
        if s["pipeline"]["threads"] < 1:
            raise ConfigError("threads must be >= 1")
        if s["lifshitz"]["zero_frequency"] not in ZERO_FREQ_POLICIES:
            raise ConfigError(f"zero_frequency must be one of {ZERO_FREQ_POLICIES}")
        sw = s["sweep"]
        if not 1e-9 <= sw["d_min"] <= sw["d_max"] <= 10e-6:
            raise ConfigError("sweep requires 1 nm <= d_min <= d_max <= 10 um")
        if sw["points"] < 1:
            raise ConfigError("sweep points must be >= 1")
        if sw["spacing"] not in ("geometric", "linear"):
            raise ConfigError("sweep spacing must be 'geometric' or 'linear'")
        for pair in sw["pairs"]:
            if pair.count(":") != 1:
                raise ConfigError(f"pair {pair!r} must read 'sphere:plate'")
        if s["rig"]["preset"] not in ("none", "paper"):
            raise ConfigError("rig preset must be 'none' or 'paper'")
        if s["analysis"]["weighting"] not in ("uniform", "relative"):
            raise ConfigError("analysis weighting must be 'uniform' or 'relative'")
        if s["analysis"]["window"] <= 0 or s["analysis"]["probe_d"] <= 0:
            raise ConfigError("analysis probe_d and window must be positive")
        try:
            self.library()
            self.grid()
            self.quadrature()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    # -- derived objects ----------------------------------------------------
    def library(self) -> MaterialLibrary:
        if not self.material_text:
            return MaterialLibrary()
        return MaterialLibrary.from_config(self.material_text, self.base_dir)

    def grid(self) -> MatsubaraGrid:
        lf = self.sections["lifshitz"]
        return MatsubaraGrid(lf["temperature"], lf["zero_frequency"], lf["rel_tol"], lf["l_max_cap"])

    def quadrature(self) -> QuadratureSpec:
        lf = self.sections["lifshitz"]
        return QuadratureSpec(nodes=lf["nodes"], tolerance=lf["tolerance"], max_nodes=lf["max_nodes"])

    def separations(self) -> np.ndarray:
        """Sweep separations in descending order (the rig approaches the plate)."""
        sw = self.sections["sweep"]
        if sw["points"] == 1:
            return np.array([sw["d_max"]])
        if sw["spacing"] == "geometric":
            return np.geomspace(sw["d_max"], sw["d_min"], sw["points"])
        return np.linspace(sw["d_max"], sw["d_min"], sw["points"])

    def pairs(self) -> list[tuple[str, str]]:
        return [tuple(p.split(":")) for p in self.sections["sweep"]["pairs"]]

    def rig_config(self) -> RigConfig:
        r = self.sections["rig"]
        explicit = {k: v for k, v in r.items() if k not in ("preset", "plate") and v is not None}
        base = RigConfig().d0 if "d0" not in explicit else explicit["d0"]
        explicit.update(
            plate=r["plate"],
            R=self.sections["geometry"]["radius"],
            sphere=self.sections["geometry"]["sphere"],
            ito_thickness=self.sections["geometry"]["ito_thickness"],
            temperature=self.sections["lifshitz"]["temperature"],
            zero_frequency=self.sections["lifshitz"]["zero_frequency"],
            set_points=tuple(base - self.separations()),
        )
        try:
            if r["preset"] == "paper":
                return paper_scale(**explicit)
            return RigConfig(**explicit)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"rig: {exc}") from None

    def to_dict(self) -> dict:
        """Resolved configuration; ``threads`` is omitted since it never changes results."""
        out = {s: dict(v) for s, v in self.sections.items()}
        del out["pipeline"]["threads"]
        out["materials"] = self.material_text
        return out

    def hash(self) -> str:
        return config_hash(self.to_dict())

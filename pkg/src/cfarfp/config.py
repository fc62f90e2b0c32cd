"""Run configuration: TOML files with dotted keys plus ``key=value`` overrides.

Everything is validated when the config is loaded, before any simulation
starts. The config hash covers every resolved setting except the output
directory and worker count, so it identifies the numbers a run produces.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass, field
from typing import Optional, Tuple

from . import detectors as det
from .errors import CfarFpError, ConfigError, FileFormatError
from .scenario import ClutterModel, ScenarioConfig, SIGMA_F_DEFAULT, clutter_covariance

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

OUTPUT_ENV = "CFARFP_OUTPUT_DIR"
DEFAULT_OUTPUT = "cfarfp-out"
CONDITIONS = ("H0", "H1-matched", "H1-mismatched")

DEFAULT_DETECTORS = ("KELLY", "AMF", "ACE", "ED", "KALSON:0.5", "ABORT", "WABORT", "KWA:0.4", "RAO",
                     "CAD:0.5", "CARD:0.5", "ROB:0.2", "NAT:10dB", "NAT:20dB", "MPI")

DEFAULTS = {
    "scenario.n": 16,
    "scenario.k": 32,
    "scenario.fd": 0.08,
    "scenario.delta_f": 0.3 / 16,
    "scenario.clutter": "gaussian",
    "scenario.sigma_f": SIGMA_F_DEFAULT,
    "scenario.cnr_db": 10.0,
    "scenario.covariance_path": "",
    "scenario.snr_db": 15.0,
    "scenario.seed": 0,
    "detectors": list(DEFAULT_DETECTORS),
    "pfa": 1e-3,
    "trials_calib": 100_000,
    "trials_pd": 1000,
    "gamma_grid_db": [float(g) for g in range(0, 31)],
    "cos2theta_list": [1.0, 0.65],
    "output_dir": "",
    "cloud_count": 5000,
    "cloud_cos2theta": -1.0,
    "conditions": list(CONDITIONS),
    "beta_points": 199,
    "t_max": 20.0,
    "ellipse_points": 100,
}

_INT_KEYS = {"scenario.n", "scenario.k", "scenario.seed", "trials_calib", "trials_pd", "cloud_count",
             "beta_points", "ellipse_points"}
_STR_KEYS = {"scenario.clutter", "scenario.covariance_path", "output_dir"}
_LIST_KEYS = {"detectors", "gamma_grid_db", "cos2theta_list", "conditions"}


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioConfig
    detectors: Tuple[det.DetectorSpec, ...]
    pfa: float
    trials_calib: int
    trials_pd: int
    gamma_grid_db: Tuple[float, ...]
    cos2theta_list: Tuple[float, ...]
    output_dir: str
    cloud_count: int = 5000
    cloud_cos2theta: Optional[float] = None
    conditions: Tuple[str, ...] = CONDITIONS
    beta_points: int = 199
    t_max: float = 20.0
    ellipse_points: int = 100
    resolved: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def seed(self) -> int:
        return self.scenario.seed

    @property
    def sha256(self) -> str:
        return config_hash(self.resolved)


def _flatten(tree, prefix=""):
    out = {}
    for key, value in tree.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(_flatten(value, name + "."))
        else:
            out[name] = value
    return out


def parse_value(text: str):
    """Interpret an override value as a TOML literal, falling back to a bare string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def parse_overrides(items):
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override {item!r} is not of the form key=value")
        out[key.strip()] = parse_value(value.strip())
    return out


def read_config_file(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return _flatten(tomllib.load(fh))
    except OSError as exc:
        raise FileFormatError(f"cannot read config {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _coerce(key, value):
    if key in _INT_KEYS:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return int(value)
    if key in _STR_KEYS:
        if not isinstance(value, str):
            raise ConfigError(f"{key} must be a string")
        return value
    if key in _LIST_KEYS:
        if isinstance(value, (str, int, float)):
            value = [value]
        if not isinstance(value, list):
            raise ConfigError(f"{key} must be a list")
        if key in ("gamma_grid_db", "cos2theta_list"):
            try:
                return [float(v) for v in value]
            except (TypeError, ValueError):
                raise ConfigError(f"{key} must be a list of numbers") from None
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key} must be a number, got {value!r}")
    return float(value)


def _parse_eps(text: str) -> float:
    text = text.strip()
    if text.lower().endswith("db"):
        return 10.0 ** (float(text[:-2]) / 10.0)
    return float(text)


def parse_detector(entry, n: int, k: int) -> det.DetectorSpec:
    """Detector from ``"KIND"``, ``"KIND:eps"`` (``eps`` may carry a ``dB`` suffix),
    ``["KIND", eps]`` or ``{kind=..., eps=...}``.

    ``ISO-SNR:<gamma>`` and ``PERP-ISO-SNR:<gamma>`` build LIN detectors along
    and across the iso-SNR line at that SNR (in dB).
    """
    try:
        if isinstance(entry, dict):
            kind, eps = str(entry["kind"]), entry.get("eps", 0.0)
        elif isinstance(entry, (list, tuple)) and len(entry) == 2:
            kind, eps = str(entry[0]), entry[1]
        elif isinstance(entry, str):
            kind, _, eps = entry.partition(":")
            eps = eps or "0"
        else:
            raise ConfigError(f"cannot read detector entry {entry!r}")
        kind = kind.strip().upper()
        if kind in ("ISO-SNR", "PERP-ISO-SNR"):
            g = str(eps).lower().removesuffix("db")
            return det.lin_from_iso_snr(n, k, float(g), orthogonal=kind.startswith("PERP"))
        eps = _parse_eps(eps) if isinstance(eps, str) else float(eps)
        spec = det.make(det.Kind(kind), eps, n=n, k=k)
        if spec.kind is det.Kind.NAT and isinstance(entry, str) and entry.lower().endswith("db"):
            spec = det.make(spec.kind, spec.eps, n=n, k=k, label=f"NAT({entry.partition(':')[2].strip()})")
        return spec
    except ConfigError:
        raise
    except (ValueError, KeyError, TypeError, CfarFpError) as exc:
        raise ConfigError(f"bad detector entry {entry!r}: {exc}") from None


def config_hash(resolved: dict) -> str:
    payload = {k: v for k, v in resolved.items() if k != "output_dir"}
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode()).hexdigest()


def _file_digest(path: str) -> str:
    try:
        with open(path, "rb") as fh:
            return hashlib.sha256(fh.read()).hexdigest()
    except OSError as exc:
        raise FileFormatError(f"cannot read covariance file {path}: {exc}") from None


def build(values: dict) -> RunConfig:
    """Validate a flat mapping of dotted keys into a :class:`RunConfig`."""
    unknown = sorted(set(values) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    r = dict(DEFAULTS)
    r.update({k: _coerce(k, v) for k, v in values.items()})

    path = r["scenario.covariance_path"]
    clutter = ClutterModel(kind=r["scenario.clutter"], sigma_f=r["scenario.sigma_f"], cnr_db=r["scenario.cnr_db"],
                           path=path or None)
    if path and clutter.kind == "custom":
        r["covariance_sha256"] = _file_digest(path)
    scen = ScenarioConfig(n=r["scenario.n"], k=r["scenario.k"], fd=r["scenario.fd"], delta_f=r["scenario.delta_f"],
                          clutter=clutter, snr_db=r["scenario.snr_db"], seed=r["scenario.seed"])
    if clutter.kind == "custom":
        clutter_covariance(scen)

    pfa = r["pfa"]
    if not 0.0 < pfa < 0.5:
        raise ConfigError("pfa must lie in (0, 0.5)")
    if r["trials_calib"] * pfa < 10:
        raise ConfigError(f"trials_calib={r['trials_calib']} gives fewer than 10 expected false alarms")
    if r["trials_pd"] < 1:
        raise ConfigError("trials_pd must be positive")
    if r["cloud_count"] < 0:
        raise ConfigError("cloud_count must be nonnegative")
    if r["beta_points"] < 2 or r["ellipse_points"] < 3:
        raise ConfigError("beta_points must be >= 2 and ellipse_points >= 3")
    if not r["t_max"] > 0:
        raise ConfigError("t_max must be positive")
    for g in r["gamma_grid_db"]:
        if not math.isfinite(g):
            raise ConfigError("gamma_grid_db entries must be finite")
    for c in r["cos2theta_list"]:
        if not 0.0 <= c <= 1.0:
            raise ConfigError(f"cos2theta {c} outside [0, 1]")
    cloud_c = r["cloud_cos2theta"]
    if cloud_c != -1.0 and not 0.0 <= cloud_c <= 1.0:
        raise ConfigError("cloud_cos2theta must lie in [0, 1] (or -1 to use delta_f)")
    bad = [c for c in r["conditions"] if c not in CONDITIONS]
    if bad:
        raise ConfigError(f"unknown conditions {bad}; choose from {', '.join(CONDITIONS)}")
    specs = tuple(parse_detector(e, scen.n, scen.k) for e in r["detectors"])
    r["detectors"] = [[s.name, s.kind.value, s.eps] for s in specs]

    return RunConfig(scenario=scen, detectors=specs, pfa=pfa, trials_calib=r["trials_calib"],
                     trials_pd=r["trials_pd"], gamma_grid_db=tuple(r["gamma_grid_db"]),
                     cos2theta_list=tuple(r["cos2theta_list"]), output_dir=r["output_dir"],
                     cloud_count=r["cloud_count"], cloud_cos2theta=None if cloud_c == -1.0 else cloud_c,
                     conditions=tuple(r["conditions"]), beta_points=r["beta_points"], t_max=r["t_max"],
                     ellipse_points=r["ellipse_points"], resolved=r)


def load(path=None, overrides=None) -> RunConfig:
    values = read_config_file(path) if path else {}
    values.update(parse_overrides(overrides))
    return build(values)


def resolve_output_dir(cfg_dir: str, flag: Optional[str]) -> str:
    """Command-line flag, then config, then ``$CFARFP_OUTPUT_DIR``, then ``./cfarfp-out``."""
    return flag or cfg_dir or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT

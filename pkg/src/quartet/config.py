"""Configuration files: loading, validation and conversion to internal units.

Files are YAML (JSON is accepted as a subset). Frequencies and rates are given
in GHz, energies in GHz*h, inductances in pH; everything is converted to rad/s.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .circuit import (ChainSpec, CircuitParams, FluxBias, ModeSpec, SquidParams,
                      inductive_energy)
from .errors import ValidationError
from .filters import LineProfile

TWO_PI = 2 * np.pi
GHZ = TWO_PI * 1e9

DEFAULTS = {
    "modes": {
        "a": {"frequency": 4.13, "phi_zpf": 0.405, "dim": 16},
        "b": {"frequency": 6.94, "phi_zpf": 0.312, "dim": 8},
        "r": {"frequency": 7.45, "phi_zpf": 0.044, "dim": 3},
    },
    "squid": {"E_J": 17.7, "E_delta": 0.35e-3, "eps_L": 1920.0, "delta_sign": 1},
    "chains": {"inductance_pH": 28500.0, "N": 25, "participation": None, "enabled": True},
    "bias": {"saddle": "SP2"},
    "dynamics": {
        "kappa_b": 2.05e-3, "kappa_phi": 32e-6, "gamma1": None, "gammas": None,
        "xi_b": 175e-6, "Delta": 0.0, "include_readout": False,
        "rwa_dims": [8, 3], "g4_list": [0.0, 20e-6, 50e-6, 100e-6, 150e-6, 185e-6],
    },
    "filter": {"period_mm": 14.0, "n_periods": 5, "z_min": 20.0, "z_max": 100.0,
               "center": 4.5, "Z0": 50.0, "cells_per_period": 64,
               "sweep": [1.0, 9.0, 1601], "band": [4.0, 5.0]},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "modes":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class Config:
    raw: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    # ---------------------------------------------------------------- circuit
    def circuit(self, readout: bool = True, bump: int = 0) -> CircuitParams:
        modes = []
        for label, spec in self.raw["modes"].items():
            if label == "r" and not readout:
                continue
            try:
                modes.append(ModeSpec(label, float(spec["frequency"]) * GHZ, float(spec["phi_zpf"]),
                                      int(spec.get("dim", 8)) + bump))
            except KeyError as exc:
                raise ValidationError(f"mode {label}: missing field {exc}") from None
        sq = self.raw["squid"]
        if "E_sigma" in sq:
            e_sigma = float(sq["E_sigma"]) * GHZ
        else:
            e_sigma = 2 * float(sq["E_J"]) * GHZ
        if "series_inductance_pH" in sq:
            eps_l = inductive_energy(float(sq["series_inductance_pH"]) * 1e-12)
        else:
            eps_l = float(sq.get("eps_L", np.inf)) * GHZ
        squid = SquidParams(e_sigma, float(sq.get("E_delta", 0.0)) * GHZ, eps_l)
        ch = self.raw.get("chains") or {}
        chains = None
        if ch and ch.get("enabled", True):
            if "E_L" in ch:
                e_l = float(ch["E_L"]) * GHZ
            else:
                e_l = inductive_energy(float(ch["inductance_pH"]) * 1e-12)
            part = ch.get("participation") or ()
            chains = ChainSpec(e_l, int(ch.get("N", 25)), tuple(tuple(r) for r in part))
        sign = int(sq.get("delta_sign", 1))
        if sign not in (1, -1):
            raise ValidationError("squid.delta_sign must be +1 or -1")
        return CircuitParams(tuple(modes), squid, chains, sign)

    def bias(self) -> FluxBias:
        b = self.raw.get("bias") or {}
        if "saddle" in b:
            return FluxBias.saddle(b["saddle"], float(b.get("eps_sigma", 0.0)),
                                   float(b.get("eps_delta", 0.0)))
        return FluxBias(float(b["phi_sigma"]), float(b["phi_delta"]))

    # ---------------------------------------------------------------- dynamics
    def rate(self, key: str) -> float:
        return float(self.raw["dynamics"][key]) * GHZ

    def gammas(self) -> tuple:
        from .lindblad import default_gammas

        dyn = self.raw["dynamics"]
        if dyn.get("gammas"):
            return tuple(float(g) * GHZ for g in dyn["gammas"])
        if dyn.get("gamma1"):
            return default_gammas(float(dyn["gamma1"]) * GHZ)
        return default_gammas()

    def g4_list(self) -> list:
        return [float(g) * GHZ for g in self.raw["dynamics"]["g4_list"]]

    # ---------------------------------------------------------------- filter
    def line_profile(self, n_periods: int | None = None, uniform: bool = False) -> LineProfile:
        f = self.raw["filter"]
        n = int(f["n_periods"] if n_periods is None else n_periods)
        z_min, z_max = (float(f["Z0"]),) * 2 if uniform else (float(f["z_min"]), float(f["z_max"]))
        return LineProfile.for_center(float(f["center"]) * 1e9, float(f["period_mm"]) * 1e-3, n,
                                      z_min, z_max, Z0=float(f["Z0"]),
                                      cells_per_period=int(f["cells_per_period"]))

    def sweep_omega(self) -> np.ndarray:
        lo, hi, n = self.raw["filter"]["sweep"]
        return TWO_PI * 1e9 * np.linspace(float(lo), float(hi), int(n))

    # ---------------------------------------------------------------- validation
    def validate(self) -> "Config":
        """Reject out-of-range parameters before any computation."""
        for label, spec in self.raw["modes"].items():
            phi = float(spec.get("phi_zpf", -1))
            if not 0 <= phi < 1.5:
                raise ValidationError(f"mode {label}: phi_zpf {phi} outside [0, 1.5)")
            if float(spec.get("frequency", 0)) <= 0:
                raise ValidationError(f"mode {label}: frequency must be positive")
        dyn = self.raw["dynamics"]
        for key in ("kappa_b", "kappa_phi", "gamma1"):
            if dyn.get(key) is not None and float(dyn[key]) < 0:
                raise ValidationError(f"dynamics.{key} must be non-negative")
        if any(float(g) < 0 for g in (dyn.get("gammas") or [])):
            raise ValidationError("dynamics.gammas must be non-negative")
        if any(float(g) < 0 for g in dyn.get("g4_list", [])):
            raise ValidationError("dynamics.g4_list must be non-negative")
        self.circuit()
        self.bias()
        prof = self.line_profile()
        w = self.sweep_omega()
        if w.max() > prof.max_resolved_omega():
            raise ValidationError("filter sweep is not resolved by the line discretization")
        return self


def load_config(path: str | Path | None) -> Config:
    if path is None:
        return Config().validate()
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read config {p}: {exc}") from None
    try:
        data = json.loads(text) if p.suffix == ".json" else yaml.safe_load(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot parse config {p}: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ValidationError("config root must be a mapping")
    unknown = set(data) - set(DEFAULTS)
    if unknown:
        raise ValidationError(f"unknown config sections: {sorted(unknown)}")
    return Config(_merge(DEFAULTS, data)).validate()

"""Project configuration: schema, tool defaults, and resolved echo.

Configs are YAML (or JSON) key-value documents.  Unknown keys are
rejected; any key the user omits falls back to a tool default and is
reported back in ``defaults_used`` so runs can record which values are
uncalibrated placeholders rather than measured device data.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass

import yaml

from .errors import InputError
from .aod import Deflector
from .linkbudget import LinkBudget, collection_fraction, db_to_fraction
from .optics import WaveguideSpec
from .routing import RouteConstraints

DEFAULT_NOTE = "tool default (uncalibrated placeholder; replace with a measured value)"

DEFAULTS: dict = {
    "waveguide": {
        "core_radius_um": 3.0,
        "delta_n": 3e-3,
        "cladding_index": 1.45,
        "loss_table_db_per_cm": [
            [420.0, 0.12],
            [700.0, 0.055],
            [780.0, 0.05],
            [1013.0, 0.04],
            [1550.0, 0.03],
        ],
    },
    "route": {
        "n_channels": 49,
        "input_pitch_um": 127.0,
        "grid_rows": 7,
        "grid_cols": 7,
        "output_pitch_um": 50.0,
        "d_min_um": 30.0,
        "r_min_mm": 15.0,
        "chip_length_mm": 15.0,
        "max_depth_mm": 1.0,
        "transition_start_mm": 0.0,
        "transition_length_mm": None,
        "cost_mode": "path-length",
    },
    "coupling": {
        "fit_d_min_um": 15.0,
        "fit_d_max_um": 50.0,
        "fit_points": 15,
    },
    "deflector": {
        "acoustic_velocity_mps": 650.0,
        "center_frequency_mhz": 100.0,
        "bandwidth_mhz": 60.0,
        "focal_length_mm": 200.0,
        "wavelength_nm": 420.0,
        "beam_diameter_mm": 1.0,
        "total_power_budget": 1.0,
        "third_order_coeff": 0.0,
        "efficiency_curve": [[70.0, 1.0], [130.0, 1.0]],
    },
    "budget": {
        "numerical_aperture": 0.5,
        "medium_index": 1.0,
        "chip_transmission": 0.98,
        "chip_fiber_loss_db": 2.5,
        "detector_efficiency": 0.7,
        "scattering_rate_hz": 1.2e7,
        "readout_window_us": 100.0,
        "dark_rate_hz": 200.0,
        "threshold": None,
    },
    "output_dir": "ocmkit-out",
    "seed": 20250809,
}

_NUMBER = (int, float)
_SCHEMA_TYPES: dict = {
    "waveguide.core_radius_um": _NUMBER,
    "waveguide.delta_n": _NUMBER,
    "waveguide.cladding_index": _NUMBER,
    "waveguide.loss_table_db_per_cm": list,
    "route.n_channels": int,
    "route.input_pitch_um": _NUMBER,
    "route.grid_rows": int,
    "route.grid_cols": int,
    "route.output_pitch_um": _NUMBER,
    "route.d_min_um": _NUMBER,
    "route.r_min_mm": _NUMBER,
    "route.chip_length_mm": _NUMBER,
    "route.max_depth_mm": _NUMBER,
    "route.transition_start_mm": _NUMBER,
    "route.transition_length_mm": (_NUMBER, type(None)),
    "route.cost_mode": str,
    "coupling.fit_d_min_um": _NUMBER,
    "coupling.fit_d_max_um": _NUMBER,
    "coupling.fit_points": int,
    "deflector.acoustic_velocity_mps": _NUMBER,
    "deflector.center_frequency_mhz": _NUMBER,
    "deflector.bandwidth_mhz": _NUMBER,
    "deflector.focal_length_mm": _NUMBER,
    "deflector.wavelength_nm": _NUMBER,
    "deflector.beam_diameter_mm": _NUMBER,
    "deflector.total_power_budget": _NUMBER,
    "deflector.third_order_coeff": _NUMBER,
    "deflector.efficiency_curve": list,
    "budget.numerical_aperture": _NUMBER,
    "budget.medium_index": _NUMBER,
    "budget.chip_transmission": _NUMBER,
    "budget.chip_fiber_loss_db": _NUMBER,
    "budget.detector_efficiency": _NUMBER,
    "budget.scattering_rate_hz": _NUMBER,
    "budget.readout_window_us": _NUMBER,
    "budget.dark_rate_hz": _NUMBER,
    "budget.threshold": (int, type(None)),
    "output_dir": str,
    "seed": int,
}


def _merge(defaults: dict, user: dict, prefix: str,
           defaults_used: list[str]) -> dict:
    out = {}
    for key, default_value in defaults.items():
        path = f"{prefix}{key}"
        if key not in user:
            out[key] = copy.deepcopy(default_value)
            if not isinstance(default_value, dict):
                defaults_used.append(path)
            else:
                nested: list[str] = []
                _merge(default_value, {}, f"{path}.", nested)
                defaults_used.extend(nested)
            continue
        value = user[key]
        if isinstance(default_value, dict):
            if not isinstance(value, dict):
                raise InputError(f"config key {path!r} must be a mapping")
            out[key] = _merge(default_value, value, f"{path}.", defaults_used)
        else:
            expected = _SCHEMA_TYPES[path]
            if isinstance(value, bool) or not isinstance(value, expected):
                raise InputError(
                    f"config key {path!r} has invalid type {type(value).__name__}"
                )
            out[key] = value
    for key in user:
        if key not in defaults:
            raise InputError(f"unknown config key {prefix}{key!r}")
    return out


@dataclass(frozen=True)
class ProjectConfig:
    """Resolved configuration plus the list of defaulted keys."""

    raw: dict
    defaults_used: tuple[str, ...]
    source_path: str | None = None

    def waveguide_spec(self) -> WaveguideSpec:
        w = self.raw["waveguide"]
        return WaveguideSpec(
            core_radius_um=float(w["core_radius_um"]),
            delta_n=float(w["delta_n"]),
            cladding_index=float(w["cladding_index"]),
            loss_table=tuple((float(a), float(b)) for a, b in w["loss_table_db_per_cm"]),
        )

    def route_constraints(self) -> RouteConstraints:
        r = self.raw["route"]
        return RouteConstraints(
            d_min_um=float(r["d_min_um"]),
            r_min_mm=float(r["r_min_mm"]),
            chip_length_mm=float(r["chip_length_mm"]),
            max_depth_mm=float(r["max_depth_mm"]),
        )

    def deflector(self) -> Deflector:
        d = self.raw["deflector"]
        return Deflector(
            acoustic_velocity_mps=float(d["acoustic_velocity_mps"]),
            center_frequency_mhz=float(d["center_frequency_mhz"]),
            bandwidth_mhz=float(d["bandwidth_mhz"]),
            focal_length_mm=float(d["focal_length_mm"]),
            wavelength_nm=float(d["wavelength_nm"]),
            beam_diameter_mm=float(d["beam_diameter_mm"]),
            efficiency_curve=tuple(
                (float(a), float(b)) for a, b in d["efficiency_curve"]
            ),
            total_power_budget=float(d["total_power_budget"]),
            third_order_coeff=float(d["third_order_coeff"]),
        )

    def link_budget(self) -> LinkBudget:
        b = self.raw["budget"]
        stages = (
            ("collection", collection_fraction(
                float(b["numerical_aperture"]), float(b["medium_index"]))),
            ("chip", float(b["chip_transmission"])),
            ("chip_fiber_coupling", db_to_fraction(float(b["chip_fiber_loss_db"]))),
            ("detector", float(b["detector_efficiency"])),
        )
        return LinkBudget(
            stages=stages,
            scattering_rate_hz=float(b["scattering_rate_hz"]),
            readout_window_us=float(b["readout_window_us"]),
            dark_rate_hz=float(b["dark_rate_hz"]),
            threshold=b["threshold"],
        )

    def sha256(self) -> str:
        return hashlib.sha256(
            json.dumps(self.raw, sort_keys=True).encode()
        ).hexdigest()

    def resolved_document(self) -> dict:
        """Effective config plus annotations for every defaulted key."""
        return {
            "config": copy.deepcopy(self.raw),
            "defaults_used": {key: DEFAULT_NOTE for key in self.defaults_used},
        }


def load_config(path: str | None = None) -> ProjectConfig:
    """Load and validate a config file; no path means all defaults."""
    user: dict = {}
    if path is not None:
        with open(path) as fh:
            loaded = yaml.safe_load(fh)
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise InputError(f"config root of {path!r} must be a mapping")
        user = loaded
    defaults_used: list[str] = []
    raw = _merge(DEFAULTS, user, "", defaults_used)
    return ProjectConfig(raw=raw, defaults_used=tuple(defaults_used),
                         source_path=path)

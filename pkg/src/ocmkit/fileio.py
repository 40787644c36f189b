"""File formats: CSV tables, route-plan documents, masks, manifests.

Numeric CSV cells use 12 significant digits; route coordinates are
written at fixed decimal precision (nm resolution), which makes every
export/import round trip byte-stable.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .errors import InputError
from .crosstalk import CrosstalkMatrix
from .routing import FacetLayout, RoutePlan

ROUTE_SCHEMA = "ocmkit-route/1"
MATRIX_SCHEMA = "ocmkit-xtalk/1"


def fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.12g}"


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_json(path, document: dict) -> None:
    with open(path, "w") as fh:
        json.dump(document, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


# -- crosstalk matrices ----------------------------------------------


def layout_hash(input_layout: FacetLayout, output_layout: FacetLayout,
                assignment) -> str:
    doc = {
        "input": _layout_doc(input_layout),
        "output": _layout_doc(output_layout),
        "assignment": [int(i) for i in assignment],
    }
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def save_matrix(matrix: CrosstalkMatrix, csv_path, meta_path,
                metrics: dict | None = None,
                layout_digest: str | None = None) -> None:
    """Matrix CSV (row = input channel) plus companion metadata."""
    with open(csv_path, "w", newline="") as fh:
        for row in matrix.power:
            fh.write(",".join(fmt(v) for v in row) + "\n")
    meta = {
        "schema": MATRIX_SCHEMA,
        "n_channels": matrix.n_channels,
        "wavelength_nm": matrix.wavelength_nm,
        "lossless": matrix.lossless,
        "layout_hash": layout_digest,
        "metrics": metrics,
    }
    write_json(meta_path, meta)


def load_matrix(csv_path, meta_path) -> tuple[CrosstalkMatrix, dict]:
    meta = read_json(meta_path)
    if meta.get("schema") != MATRIX_SCHEMA:
        raise InputError(f"unexpected matrix schema {meta.get('schema')!r}")
    power = np.loadtxt(csv_path, delimiter=",", ndmin=2)
    if power.shape[0] != meta["n_channels"]:
        raise InputError("matrix CSV row count disagrees with metadata")
    matrix = CrosstalkMatrix(power=power, wavelength_nm=float(meta["wavelength_nm"]),
                             lossless=bool(meta["lossless"]))
    return matrix, meta


# -- route plans ------------------------------------------------------


def _layout_doc(layout: FacetLayout) -> dict:
    return {
        "facet_id": layout.facet_id,
        "pattern": layout.pattern,
        "pitch_um": None if layout.pitch_um is None else round(layout.pitch_um, 6),
        "grid_shape": None if layout.grid_shape is None else list(layout.grid_shape),
        "ports_um": [[round(x, 3), round(y, 3)] for x, y in layout.ports_um],
    }


def _layout_from_doc(doc: dict) -> FacetLayout:
    return FacetLayout(
        facet_id=doc["facet_id"],
        ports_um=tuple((float(x), float(y)) for x, y in doc["ports_um"]),
        pitch_um=None if doc["pitch_um"] is None else float(doc["pitch_um"]),
        pattern=doc["pattern"],
        grid_shape=None if doc["grid_shape"] is None else tuple(doc["grid_shape"]),
    )


def save_route(route: RoutePlan, path) -> None:
    """Versioned route document; coordinates quantized to nm."""
    clearance = route.min_clearance_um
    radius = route.min_bend_radius_mm
    doc = {
        "schema": ROUTE_SCHEMA,
        "chip_length_mm": round(route.chip_length_mm, 9),
        "input": _layout_doc(route.input_layout),
        "output": _layout_doc(route.output_layout),
        "assignment": [int(i) for i in route.assignment],
        "z_mm": [round(float(z), 6) for z in route.z_mm],
        "paths_um": [
            [[round(float(x), 3), round(float(y), 3)] for x, y in channel]
            for channel in route.paths_um
        ],
        "stats": {
            "min_clearance_um": None if math.isinf(clearance) else round(clearance, 6),
            "min_bend_radius_mm": None if math.isinf(radius) else round(radius, 9),
            "path_lengths_mm": [round(float(v), 9) for v in route.path_lengths_mm],
        },
    }
    write_json(path, doc)


def load_route(path) -> RoutePlan:
    doc = read_json(path)
    if doc.get("schema") != ROUTE_SCHEMA:
        raise InputError(f"unexpected route schema {doc.get('schema')!r}")
    stats = doc["stats"]
    clearance = stats["min_clearance_um"]
    radius = stats["min_bend_radius_mm"]
    return RoutePlan(
        input_layout=_layout_from_doc(doc["input"]),
        output_layout=_layout_from_doc(doc["output"]),
        assignment=tuple(int(i) for i in doc["assignment"]),
        z_mm=np.asarray(doc["z_mm"], float),
        paths_um=np.asarray(doc["paths_um"], float),
        chip_length_mm=float(doc["chip_length_mm"]),
        min_clearance_um=math.inf if clearance is None else float(clearance),
        min_bend_radius_mm=math.inf if radius is None else float(radius),
        path_lengths_mm=tuple(float(v) for v in stats["path_lengths_mm"]),
    )


# -- masks and tone plans ---------------------------------------------


def read_mask(path) -> np.ndarray:
    """Plain-text on/off grid: '#' lights a site, '.' leaves it dark."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line.strip():
                continue
            bad = set(line) - {"#", "."}
            if bad:
                raise InputError(
                    f"mask {path!r} contains invalid characters {sorted(bad)!r}"
                )
            rows.append([c == "#" for c in line])
    if not rows:
        raise InputError(f"mask {path!r} is empty")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise InputError(f"mask {path!r} rows have unequal widths")
    return np.asarray(rows, dtype=bool)


def save_tone_plan_csv(plan, path) -> None:
    write_csv(
        path,
        ["frequency_mhz", "amplitude", "phase_rad"],
        [(t.frequency_mhz, t.amplitude, t.phase_rad) for t in plan.tones],
    )


def save_readout_csv(readout, path) -> None:
    write_csv(
        path,
        ["channel", "site", "intensity"],
        zip(readout.channel_ids, readout.site_ids, readout.intensities),
    )


# -- run manifests -----------------------------------------------------


def write_manifest(out_dir, command: str, version: str, config_hash: str,
                   seed: int, outputs: list[str]) -> Path:
    """Record the run inputs and a content hash for every output file."""
    out_dir = Path(out_dir)
    manifest = {
        "command": command,
        "tool_version": version,
        "config_sha256": config_hash,
        "seed": seed,
        "outputs": {name: sha256_file(out_dir / name) for name in sorted(outputs)},
    }
    path = out_dir / "manifest.json"
    write_json(path, manifest)
    return path

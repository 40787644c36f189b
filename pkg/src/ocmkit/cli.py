"""Command-line surface tying the modules into reproducible pipelines.

One command per run; every command resolves the config, writes its
output files into ``--out`` and finishes with a manifest listing a
content hash per file, so identical config and seed reproduce identical
bytes.  Exit codes: 0 success, 1 usage, 2 validation failure, 3 numeric
failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import InputError, NumericError
from .units import parse_length
from . import aod, crosstalk, fileio, linkbudget, optics, routing
from .config import ProjectConfig, load_config

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3

CONFIG_ENV = "OCMKIT_CONFIG"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _length(target):
    def convert(text):
        try:
            return parse_length(text, target)
        except InputError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
    return convert


def _wavelength_list(text):
    return [parse_length(part, "nm") for part in text.split(",") if part]


def build_parser() -> _Parser:
    parser = _Parser(prog="ocmkit", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", default=None, metavar="FILE",
                        help=f"config file (or ${CONFIG_ENV})")
    parser.add_argument("--out", default=None, metavar="DIR",
                        help="output directory (default from config)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mode", help="MFD and Gaussian-overlap sweep CSV")
    p.add_argument("--lambda-min", type=_length("nm"), default=300.0)
    p.add_argument("--lambda-max", type=_length("nm"), default=1550.0)
    p.add_argument("--points", type=int, default=26)
    p.add_argument("--resolution", type=int, default=256)

    p = sub.add_parser("kappa", help="coupling-rate sweep and exponential fit")
    p.add_argument("--wavelength", type=_length("nm"), default=780.0)

    p = sub.add_parser("xtalk-pair", help="two-guide crosstalk vs distance and wavelength")
    p.add_argument("--length", type=_length("mm"), default=5.0)
    p.add_argument("--wavelengths", type=_wavelength_list,
                   default=[420.0, 780.0, 1013.0])
    p.add_argument("--d-min", type=_length("um"), default=20.0)
    p.add_argument("--d-max", type=_length("um"), default=60.0)
    p.add_argument("--points", type=int, default=9)

    p = sub.add_parser("route", help="facets, assignment, centerlines, validation")
    p.add_argument("--n", type=int, default=None, help="override channel count")

    p = sub.add_parser("xtalk-matrix", help="propagate a route or ingest a matrix CSV")
    p.add_argument("--route", dest="route_file", default=None, metavar="FILE")
    p.add_argument("--matrix", dest="matrix_file", default=None, metavar="FILE",
                   help="ingest an existing matrix CSV (with .meta.json) instead "
                        "of propagating")
    p.add_argument("--wavelength", type=_length("nm"), default=None)
    p.add_argument("--lossy", action="store_true", help="apply per-channel loss")

    p = sub.add_parser("address", help="tone plan and rendered grid for a mask")
    p.add_argument("--mask", required=True, metavar="FILE")
    p.add_argument("--route", dest="route_file", default=None, metavar="FILE")
    p.add_argument("--base-frequency", type=float, default=None, metavar="MHZ")
    p.add_argument("--spacing", type=float, default=None, metavar="MHZ")

    p = sub.add_parser("calibrate", help="simulated uniformity calibration")
    p.add_argument("--target", type=float, default=0.955)
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("--tilt", type=float, default=0.1,
                   help="fractional efficiency tilt across the tone band")

    p = sub.add_parser("budget", help="collection link budget and readout errors")

    p = sub.add_parser("capacity", help="channel-capacity scaling law")
    p.add_argument("--chip-length", type=_length("cm"), required=True)
    p.add_argument("--spacing", type=_length("um"), required=True)
    p.add_argument("--depth", type=_length("mm"), required=True)

    return parser


# -- shared pipeline pieces -------------------------------------------


def _default_route(config: ProjectConfig, n_override: int | None = None):
    r = config.raw["route"]
    n = int(r["n_channels"]) if n_override is None else n_override
    input_layout, output_layout = routing.make_facets(
        n, float(r["input_pitch_um"]), int(r["grid_rows"]), int(r["grid_cols"]),
        float(r["output_pitch_um"]),
    )
    constraints = config.route_constraints()
    perm = routing.assign(input_layout, output_layout,
                          cost_mode=str(r["cost_mode"]), constraints=constraints)
    transition_length = r["transition_length_mm"]
    plan = routing.generate_paths(
        input_layout, output_layout, perm, constraints,
        transition_start_mm=float(r["transition_start_mm"]),
        transition_length_mm=None if transition_length is None else float(transition_length),
    )
    return plan, constraints


def _fit_model(config: ProjectConfig, wavelength_nm: float) -> optics.CouplingModel:
    spec = config.waveguide_spec()
    c = config.raw["coupling"]
    separations = np.linspace(float(c["fit_d_min_um"]), float(c["fit_d_max_um"]),
                              int(c["fit_points"]))
    samples = [
        (d, optics.coupling_constant(spec, wavelength_nm, d)) for d in separations
    ]
    return optics.fit_exponential(samples, wavelength_nm)


def _tone_grid(config: ProjectConfig, deflector: aod.Deflector,
               n: int, base=None, spacing=None) -> tuple[float, float]:
    pitch = float(config.raw["route"]["input_pitch_um"])
    if spacing is None:
        spacing = (
            pitch * 1e-6 * deflector.acoustic_velocity_mps
            / (deflector.focal_length_mm * 1e-3 * deflector.wavelength_nm * 1e-9)
            / 1e6
        )
    if base is None:
        base = deflector.center_frequency_mhz - (n - 1) / 2.0 * spacing
    return base, spacing


# -- subcommand implementations ---------------------------------------


def _cmd_mode(args, config, out_dir):
    spec = config.waveguide_spec()
    lams = np.linspace(args.lambda_min, args.lambda_max, args.points)
    rows = []
    for lam in lams:
        profile = optics.solve_mode(spec, lam, resolution=args.resolution)
        eta = optics.gaussian_coupling_efficiency(profile, profile.mfd_um)
        rows.append((lam, profile.v_number, profile.mfd_um, eta))
    fileio.write_csv(out_dir / "mode_sweep.csv",
                     ["wavelength_nm", "v_number", "mfd_um", "gaussian_overlap"],
                     rows)
    return ["mode_sweep.csv"]


def _cmd_kappa(args, config, out_dir):
    spec = config.waveguide_spec()
    c = config.raw["coupling"]
    seps = np.linspace(float(c["fit_d_min_um"]), float(c["fit_d_max_um"]),
                       int(c["fit_points"]))
    samples = [(d, optics.coupling_constant(spec, args.wavelength, d)) for d in seps]
    model = optics.fit_exponential(samples, args.wavelength)
    fileio.write_csv(out_dir / "kappa.csv", ["separation_um", "kappa_per_mm"], samples)
    fileio.write_json(out_dir / "kappa_fit.json", {
        "wavelength_nm": model.wavelength_nm,
        "kappa0_per_mm": model.kappa0_per_mm,
        "d0_um": model.d0_um,
        "fit_r2": model.fit_r2,
        "valid_range_um": list(model.valid_range_um),
    })
    return ["kappa.csv", "kappa_fit.json"]


def _cmd_xtalk_pair(args, config, out_dir):
    spec = config.waveguide_spec()
    seps = np.linspace(args.d_min, args.d_max, args.points)
    header = ["separation_um"] + [f"xtalk_{lam:g}nm" for lam in args.wavelengths]
    rows = []
    for d in seps:
        row = [d]
        for lam in args.wavelengths:
            kappa = optics.coupling_constant(spec, lam, d)
            row.append(crosstalk.two_guide_crosstalk(kappa, args.length))
        rows.append(row)
    fileio.write_csv(out_dir / "xtalk_pair.csv", header, rows)
    return ["xtalk_pair.csv"]


def _cmd_route(args, config, out_dir):
    plan, constraints = _default_route(config, args.n)
    report = routing.validate(plan, constraints)
    fileio.save_route(plan, out_dir / "route.json")
    (out_dir / "route_validation.txt").write_text(str(report) + "\n")
    if not report.ok:
        raise InputError(f"route validation failed:\n{report}")
    return ["route.json", "route_validation.txt"]


def _load_or_build_route(args, config):
    if args.route_file is not None:
        return fileio.load_route(args.route_file)
    plan, _ = _default_route(config)
    return plan


def _cmd_xtalk_matrix(args, config, out_dir):
    route = _load_or_build_route(args, config)
    spec = config.waveguide_spec()
    if args.matrix_file is not None:
        meta_path = Path(args.matrix_file).with_suffix(".meta.json")
        matrix, meta = fileio.load_matrix(args.matrix_file, meta_path)
    else:
        wavelength = args.wavelength if args.wavelength is not None else float(
            config.raw["deflector"]["wavelength_nm"]
        )
        model = _fit_model(config, wavelength)
        matrix = crosstalk.propagate(route, model, spec=spec,
                                     wavelength_nm=wavelength,
                                     apply_loss=args.lossy)
    metrics = crosstalk.matrix_metrics(matrix, route.input_layout,
                                       route.output_layout, route.assignment)
    digest = fileio.layout_hash(route.input_layout, route.output_layout,
                                route.assignment)
    fileio.save_matrix(matrix, out_dir / "xtalk_matrix.csv",
                       out_dir / "xtalk_matrix.meta.json",
                       metrics=metrics.as_dict(), layout_digest=digest)
    return ["xtalk_matrix.csv", "xtalk_matrix.meta.json"]


def _cmd_address(args, config, out_dir):
    route = _load_or_build_route(args, config)
    mask = fileio.read_mask(args.mask)
    channels, text = aod.render_pattern(mask, route)
    deflector = config.deflector()
    base, spacing = _tone_grid(config, deflector, route.n_channels,
                               args.base_frequency, args.spacing)
    plan = aod.plan_tones(channels, base, spacing, deflector,
                          input_pitch_um=route.input_layout.pitch_um)
    fileio.save_tone_plan_csv(plan, out_dir / "toneplan.csv")
    (out_dir / "pattern.txt").write_text(text + "\n")
    fileio.write_json(out_dir / "address_summary.json", {
        "selected_channels": list(channels),
        "n_tones": len(plan.tones),
        "base_frequency_mhz": base,
        "spacing_mhz": spacing,
        "switching_latency_us": deflector.switching_latency_us,
    })
    return ["toneplan.csv", "pattern.txt", "address_summary.json"]


def _tilted(deflector: aod.Deflector, tilt: float, base: float, spacing: float,
            n: int) -> aod.Deflector:
    f_lo = base
    f_hi = base + (n - 1) * spacing
    curve = ((f_lo, 1.0 - tilt), (f_hi, 1.0 + tilt))
    return aod.Deflector(
        acoustic_velocity_mps=deflector.acoustic_velocity_mps,
        center_frequency_mhz=deflector.center_frequency_mhz,
        bandwidth_mhz=deflector.bandwidth_mhz,
        focal_length_mm=deflector.focal_length_mm,
        wavelength_nm=deflector.wavelength_nm,
        beam_diameter_mm=deflector.beam_diameter_mm,
        efficiency_curve=curve,
        total_power_budget=deflector.total_power_budget,
        third_order_coeff=deflector.third_order_coeff,
    )


def _cmd_calibrate(args, config, out_dir):
    route, _ = _default_route(config)
    spec = config.waveguide_spec()
    deflector = config.deflector()
    n = route.n_channels
    base, spacing = _tone_grid(config, deflector, n)
    if args.tilt:
        deflector = _tilted(deflector, args.tilt, base, spacing, n)
    wavelength = deflector.wavelength_nm
    model = _fit_model(config, wavelength)
    matrix = crosstalk.propagate(route, model, spec=spec, wavelength_nm=wavelength)
    trans = np.array([
        optics.propagation_transmission(spec, wavelength, length / 10.0)
        for length in route.path_lengths_mm
    ])
    plan = aod.plan_tones(range(n), base, spacing, deflector,
                          input_pitch_um=route.input_layout.pitch_um)

    def system(p):
        return aod.simulate_intensities(p, route, matrix, channel_transmissions=trans)

    result = aod.calibrate_uniformity(plan, system, args.target, args.max_iter)
    fileio.write_csv(out_dir / "calibration_history.csv",
                     ["iteration", "rsd", "uniformity"],
                     [(i, r, 1.0 - r) for i, r in enumerate(result.rsd_history)])
    fileio.write_json(out_dir / "calibration.json", {
        "converged": result.converged,
        "iterations": result.iterations,
        "final_rsd": result.final_rsd,
        "final_uniformity": result.final_uniformity,
        "target_uniformity": args.target,
        "dead_channels": list(result.dead_channels),
    })
    return ["calibration_history.csv", "calibration.json"]


def _cmd_budget(args, config, out_dir):
    budget = config.link_budget()
    result = linkbudget.readout_error(budget)
    lines = ["stage efficiencies:"]
    for name, eff in budget.stages:
        lines.append(f"  {name:<22s} {eff:.6f}")
    lines.append(f"  {'total':<22s} {budget.total_efficiency:.6f}")
    lines.append("")
    lines.append(f"scattering rate        {budget.scattering_rate_hz:.6g} /s")
    lines.append(f"readout window         {budget.readout_window_us:g} us")
    lines.append(f"dark rate              {budget.dark_rate_hz:g} /s")
    lines.append(f"mean bright counts     {result.mu_bright:.4f}")
    lines.append(f"mean dark counts       {result.mu_dark:.4f}")
    lines.append(f"recommended threshold  {result.recommended_threshold}")
    lines.append(f"p(miss bright)         {result.p_miss_bright:.3e}")
    lines.append(f"p(false dark)          {result.p_false_dark:.3e}")
    if not result.distinguishable:
        lines.append("warning: bright and dark count distributions are "
                     "indistinguishable")
    (out_dir / "budget_report.txt").write_text("\n".join(lines) + "\n")
    fileio.write_csv(out_dir / "threshold_scan.csv",
                     ["threshold", "p_miss_bright", "p_false_dark"], result.scan)
    return ["budget_report.txt", "threshold_scan.csv"]


def _cmd_capacity(args, config, out_dir):
    count = routing.capacity(args.chip_length, args.spacing, args.depth)
    print(count)
    (out_dir / "capacity.txt").write_text(f"{count}\n")
    return ["capacity.txt"]


_COMMANDS = {
    "mode": _cmd_mode,
    "kappa": _cmd_kappa,
    "xtalk-pair": _cmd_xtalk_pair,
    "route": _cmd_route,
    "xtalk-matrix": _cmd_xtalk_matrix,
    "address": _cmd_address,
    "calibrate": _cmd_calibrate,
    "budget": _cmd_budget,
    "capacity": _cmd_capacity,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_OK
    config_path = args.config or os.environ.get(CONFIG_ENV) or None
    try:
        config = load_config(config_path)
        out_dir = Path(args.out or config.raw["output_dir"])
        out_dir.mkdir(parents=True, exist_ok=True)
        np.random.default_rng(int(config.raw["seed"]))
        fileio.write_json(out_dir / "config_resolved.json",
                          config.resolved_document())
        outputs = _COMMANDS[args.command](args, config, out_dir)
        fileio.write_manifest(out_dir, args.command, __version__,
                              config.sha256(), int(config.raw["seed"]),
                              ["config_resolved.json"] + outputs)
    except InputError as exc:
        print(f"ocmkit {args.command}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericError as exc:
        print(f"ocmkit {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()

"""Facet layouts, channel assignment, 3D centerline synthesis, capacity.

The chip maps a 1D input port array onto a 2D output lattice.  Each
channel follows a raised-cosine lateral transition between its facet
coordinates; that curve family has a closed-form curvature maximum
(at the window edges, where the lateral velocity vanishes):

    kappa_max = |displacement| * pi^2 / (2 * window_length^2)

which makes the bend-radius feasibility check analytic.  Clearance is
checked at common-z cross sections; paths are z-graphs, so this is the
relevant metric for shallow bend angles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import InputError

# Sampling ceiling along the propagation axis.
MAX_Z_SPACING_UM = 50.0

# Tolerances used by the independent validator.
ENDPOINT_TOL_UM = 1e-3
CLEARANCE_TOL_UM = 1e-3
# Curvature statistics tolerate nm coordinate quantization from file
# round trips plus finite-difference noise.
CURVATURE_REL_TOL = 0.02


@dataclass(frozen=True)
class FacetLayout:
    """Transverse port positions on one chip facet.

    ``pattern`` is "linear" (collinear, equally spaced), "grid"
    (row-major rectangular lattice) or "custom".
    """

    facet_id: str
    ports_um: tuple[tuple[float, float], ...]
    pitch_um: float | None
    pattern: str
    grid_shape: tuple[int, int] | None = None

    def __post_init__(self):
        if self.facet_id not in ("input", "output"):
            raise InputError("facet_id must be 'input' or 'output'")
        if self.pattern not in ("linear", "grid", "custom"):
            raise InputError("pattern must be linear, grid or custom")
        ports = tuple((float(x), float(y)) for x, y in self.ports_um)
        object.__setattr__(self, "ports_um", ports)
        if len(ports) == 0:
            raise InputError("layout needs at least one port")
        pts = np.asarray(ports)
        if len(ports) > 1:
            diff = pts[:, None, :] - pts[None, :, :]
            dist = np.sqrt((diff**2).sum(-1))
            np.fill_diagonal(dist, np.inf)
            if dist.min() <= 0.0:
                raise InputError("port coordinates must be distinct")
        if self.pattern == "linear" and len(ports) > 1:
            steps = np.diff(pts, axis=0)
            if np.abs(np.cross(steps[:-1], steps[1:])).max(initial=0.0) > 1e-6:
                raise InputError("linear layout ports must be collinear")
            lengths = np.sqrt((steps**2).sum(-1))
            if np.abs(lengths - lengths[0]).max() > 1e-6:
                raise InputError("linear layout ports must be equally spaced")

    @property
    def n_ports(self) -> int:
        return len(self.ports_um)


@dataclass(frozen=True)
class RouteConstraints:
    """Fabrication limits a route plan must respect."""

    d_min_um: float = 30.0
    r_min_mm: float = 15.0
    chip_length_mm: float = 15.0
    max_depth_mm: float = 1.0

    def __post_init__(self):
        for name in ("d_min_um", "r_min_mm", "chip_length_mm", "max_depth_mm"):
            if getattr(self, name) <= 0:
                raise InputError(f"{name} must be > 0")


@dataclass(frozen=True, eq=False)
class RoutePlan:
    """A complete 1D-to-2D mapping with sampled 3D centerlines.

    ``paths_um`` has shape (n_channels, n_samples, 2) holding the
    transverse (x, y) of every channel on the shared ``z_mm`` grid.
    Channel i starts at input port i and ends at output port
    ``assignment[i]``.
    """

    input_layout: FacetLayout
    output_layout: FacetLayout
    assignment: tuple[int, ...]
    z_mm: np.ndarray = field(repr=False)
    paths_um: np.ndarray = field(repr=False)
    chip_length_mm: float
    min_clearance_um: float
    min_bend_radius_mm: float
    path_lengths_mm: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "assignment", tuple(int(i) for i in self.assignment))
        z = np.asarray(self.z_mm, float)
        p = np.asarray(self.paths_um, float)
        object.__setattr__(self, "z_mm", z)
        object.__setattr__(self, "paths_um", p)
        n = self.input_layout.n_ports
        if sorted(self.assignment) != list(range(max(self.assignment) + 1)) or len(
            self.assignment
        ) != n:
            raise InputError("assignment must be a permutation of output indices")
        if p.shape != (n, len(z), 2):
            raise InputError("paths array shape disagrees with layouts and z grid")

    @property
    def n_channels(self) -> int:
        return self.input_layout.n_ports


@dataclass(frozen=True)
class Violation:
    kind: str
    channels: tuple[int, ...]
    z_mm: float | None
    measured: float
    limit: float

    def __str__(self):
        where = "" if self.z_mm is None else f" at z = {self.z_mm:.4g} mm"
        chans = ",".join(str(c) for c in self.channels)
        return (
            f"{self.kind}: channels [{chans}]{where}: measured {self.measured:.6g}, "
            f"limit {self.limit:.6g}"
        )


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self):
        if self.ok:
            return "no violations"
        return "\n".join(str(v) for v in self.violations)


def make_facets(n: int, input_pitch_um: float, grid_rows: int, grid_cols: int,
                output_pitch_um: float) -> tuple[FacetLayout, FacetLayout]:
    """Centered 1D input array and row-major-filled 2D output lattice."""
    if n < 1:
        raise InputError("need at least one channel")
    if grid_rows * grid_cols < n:
        raise InputError(
            f"grid {grid_rows}x{grid_cols} cannot hold {n} output ports"
        )
    if input_pitch_um <= 0 or output_pitch_um <= 0:
        raise InputError("pitches must be > 0")
    in_ports = tuple(
        ((i - (n - 1) / 2.0) * input_pitch_um, 0.0) for i in range(n)
    )
    out_ports = []
    for s in range(n):
        row, col = divmod(s, grid_cols)
        out_ports.append(
            (
                (col - (grid_cols - 1) / 2.0) * output_pitch_um,
                ((grid_rows - 1) / 2.0 - row) * output_pitch_um,
            )
        )
    input_layout = FacetLayout(
        "input", in_ports, input_pitch_um, "linear" if n > 1 else "custom"
    )
    output_layout = FacetLayout(
        "output", tuple(out_ports), output_pitch_um, "grid" if n > 1 else "custom",
        grid_shape=(grid_rows, grid_cols),
    )
    return input_layout, output_layout


def _raised_cosine_profile(z_um: np.ndarray, start_um: float, length_um: float) -> np.ndarray:
    """Smooth-step lateral blend: 0 before the window, 1 after."""
    t = np.clip((z_um - start_um) / length_um, 0.0, 1.0)
    return 0.5 * (1.0 - np.cos(math.pi * t))


def _sample_paths(input_layout: FacetLayout, output_layout: FacetLayout,
                  assignment, chip_length_mm: float,
                  transition_start_mm: float, transition_length_mm: float,
                  n_samples: int) -> tuple[np.ndarray, np.ndarray]:
    length_um = chip_length_mm * 1e3
    z_um = np.linspace(0.0, length_um, n_samples)
    g = _raised_cosine_profile(z_um, transition_start_mm * 1e3, transition_length_mm * 1e3)
    p0 = np.asarray(input_layout.ports_um, float)
    p1 = np.asarray([output_layout.ports_um[s] for s in assignment], float)
    paths = p0[:, None, :] + (p1 - p0)[:, None, :] * g[None, :, None]
    return z_um / 1e3, paths


def _min_clearance(paths_um: np.ndarray) -> tuple[float, tuple[int, int], int]:
    """Minimum pairwise distance over all common-z cross sections."""
    n, m, _ = paths_um.shape
    if n < 2:
        return math.inf, (0, 0), 0
    best = math.inf
    best_pair, best_k = (0, 1), 0
    iu, ju = np.triu_indices(n, k=1)
    for k in range(m):
        pts = paths_um[:, k, :]
        d = np.sqrt(((pts[iu] - pts[ju]) ** 2).sum(-1))
        idx = int(np.argmin(d))
        if d[idx] < best:
            best = float(d[idx])
            best_pair = (int(iu[idx]), int(ju[idx]))
            best_k = k
    return best, best_pair, best_k


def _discrete_curvature(z_mm: np.ndarray, paths_um: np.ndarray) -> np.ndarray:
    """Curvature samples [1/mm] at interior points, per channel.

    Central differences on the uniform z grid; the 3D curve is
    (x(z), y(z), z) so the cross-product magnitude uses z' = 1, z'' = 0.
    """
    z_um = z_mm * 1e3
    h = z_um[1] - z_um[0]
    x = paths_um[:, :, 0]
    y = paths_um[:, :, 1]
    x1 = (x[:, 2:] - x[:, :-2]) / (2 * h)
    y1 = (y[:, 2:] - y[:, :-2]) / (2 * h)
    x2 = (x[:, 2:] - 2 * x[:, 1:-1] + x[:, :-2]) / (h * h)
    y2 = (y[:, 2:] - 2 * y[:, 1:-1] + y[:, :-2]) / (h * h)
    cross = np.sqrt(y2**2 + x2**2 + (x1 * y2 - y1 * x2) ** 2)
    speed = (x1**2 + y1**2 + 1.0) ** 1.5
    return cross / speed * 1e3  # 1/um -> 1/mm


def raised_cosine_max_curvature_per_mm(displacement_um: float,
                                       transition_length_mm: float) -> float:
    """Closed-form curvature peak of a raised-cosine transition [1/mm]."""
    length_um = transition_length_mm * 1e3
    return displacement_um * math.pi**2 / (2.0 * length_um**2) * 1e3


def generate_paths(input_layout: FacetLayout, output_layout: FacetLayout,
                   assignment, constraints: RouteConstraints,
                   transition_start_mm: float = 0.0,
                   transition_length_mm: float | None = None) -> RoutePlan:
    """Synthesize raised-cosine centerlines for every channel.

    The transition window defaults to the whole chip; paths are straight
    outside it.  Fails with the offending channel list if any required
    transition exceeds the bend-radius limit, and with the violating
    pair and z position if the generated geometry breaks clearance.
    """
    n = input_layout.n_ports
    assignment = tuple(int(i) for i in assignment)
    if sorted(assignment) != list(range(n)):
        raise InputError("assignment must be a permutation of 0..n-1")
    if output_layout.n_ports < n:
        raise InputError("output layout has fewer ports than channels")
    if transition_length_mm is None:
        transition_length_mm = constraints.chip_length_mm - transition_start_mm
    if transition_start_mm < 0 or transition_length_mm <= 0 or (
        transition_start_mm + transition_length_mm > constraints.chip_length_mm + 1e-12
    ):
        raise InputError("transition window must lie within the chip length")

    p0 = np.asarray(input_layout.ports_um, float)
    p1 = np.asarray([output_layout.ports_um[s] for s in assignment], float)
    disp = np.sqrt(((p1 - p0) ** 2).sum(-1))
    kappa_limit = 1.0 / constraints.r_min_mm
    kappa_peak = np.array(
        [raised_cosine_max_curvature_per_mm(d, transition_length_mm) for d in disp]
    )
    bad = [i for i in range(n) if kappa_peak[i] > kappa_limit]
    if bad:
        worst = max(bad, key=lambda i: kappa_peak[i])
        raise InputError(
            f"unreachable transition for channels {bad}: channel {worst} needs "
            f"bend radius {1.0 / kappa_peak[worst]:.3g} mm < r_min "
            f"{constraints.r_min_mm:g} mm"
        )

    depth_span_um = max(
        p0[:, 1].max(), p1[:, 1].max()
    ) - min(p0[:, 1].min(), p1[:, 1].min())
    if depth_span_um > constraints.max_depth_mm * 1e3:
        raise InputError(
            f"layout spans {depth_span_um:.3g} um of depth, beyond the "
            f"{constraints.max_depth_mm:g} mm writing limit"
        )

    n_samples = int(math.ceil(constraints.chip_length_mm * 1e3 / MAX_Z_SPACING_UM)) + 1
    z_mm, paths = _sample_paths(
        input_layout, output_layout, assignment, constraints.chip_length_mm,
        transition_start_mm, transition_length_mm, n_samples,
    )

    clearance, pair, k = _min_clearance(paths)
    if clearance < constraints.d_min_um:
        raise InputError(
            f"clearance violation after generation: channels {pair} at "
            f"z = {z_mm[k]:.4g} mm are {clearance:.4g} um apart "
            f"(d_min {constraints.d_min_um:g} um)"
        )

    curv = _discrete_curvature(z_mm, paths)
    curv_max = float(curv.max()) if curv.size else 0.0
    seg = np.diff(paths, axis=1)
    dz_um = np.diff(z_mm) * 1e3
    seg_len = np.sqrt((seg**2).sum(-1) + dz_um[None, :] ** 2)
    lengths_mm = tuple(float(s) / 1e3 for s in seg_len.sum(axis=1))

    return RoutePlan(
        input_layout=input_layout,
        output_layout=output_layout,
        assignment=assignment,
        z_mm=z_mm,
        paths_um=paths,
        chip_length_mm=constraints.chip_length_mm,
        min_clearance_um=clearance,
        min_bend_radius_mm=(math.inf if curv_max == 0.0 else 1.0 / curv_max),
        path_lengths_mm=lengths_mm,
    )


def _clearance_penalty(input_layout: FacetLayout, output_layout: FacetLayout,
                       assignment, constraints: RouteConstraints,
                       d0_um: float | None) -> float:
    """Trial-geometry penalty for the assignment local search."""
    z_mm, paths = _sample_paths(
        input_layout, output_layout, assignment, constraints.chip_length_mm,
        0.0, constraints.chip_length_mm, 51,
    )
    n = paths.shape[0]
    if n < 2:
        return 0.0
    iu, ju = np.triu_indices(n, k=1)
    min_pair = np.full(len(iu), np.inf)
    for k in range(paths.shape[1]):
        pts = paths[:, k, :]
        d = np.sqrt(((pts[iu] - pts[ju]) ** 2).sum(-1))
        np.minimum(min_pair, d, out=min_pair)
    penalty = float(np.sum(np.maximum(constraints.d_min_um - min_pair, 0.0)) * 1e6)
    if d0_um is not None:
        penalty += float(np.sum(np.exp(-min_pair / d0_um)))
    return penalty


def assign(input_layout: FacetLayout, output_layout: FacetLayout,
           cost_mode: str = "path-length",
           constraints: RouteConstraints | None = None,
           d0_um: float | None = None, max_passes: int = 2) -> tuple[int, ...]:
    """Choose the input-to-output channel mapping.

    Solves the linear assignment problem exactly on the pairwise cost
    (squared transverse displacement), then, when constraints are given,
    runs a bounded 2-swap local search whose objective adds a clearance
    penalty from trial path generation (and, in "crosstalk-weighted"
    mode, an exp(-d/d0) accumulation over trial pair distances).
    Deterministic: swap candidates are scanned in index order and only
    strict improvements are taken.
    """
    if cost_mode not in ("path-length", "crosstalk-weighted"):
        raise InputError("cost_mode must be 'path-length' or 'crosstalk-weighted'")
    n = input_layout.n_ports
    if output_layout.n_ports != n:
        raise InputError("port counts must match")
    if cost_mode == "crosstalk-weighted" and d0_um is None:
        raise InputError("crosstalk-weighted mode needs d0_um")
    p_in = np.asarray(input_layout.ports_um, float)
    p_out = np.asarray(output_layout.ports_um, float)
    cost = ((p_in[:, None, :] - p_out[None, :, :]) ** 2).sum(-1)
    rows, cols = linear_sum_assignment(cost)
    perm = [int(cols[i]) for i in np.argsort(rows)]

    if constraints is None:
        return tuple(perm)

    pen_d0 = d0_um if cost_mode == "crosstalk-weighted" else None

    def objective(p):
        base = float(sum(cost[i, p[i]] for i in range(n)))
        return base + _clearance_penalty(input_layout, output_layout, p,
                                         constraints, pen_d0)

    # With a zero penalty the LAP solution is already a global optimum of
    # the search objective: swaps cannot lower the (optimal) base cost and
    # penalties are nonnegative, so no strict improvement exists.
    if _clearance_penalty(input_layout, output_layout, perm, constraints,
                          pen_d0) == 0.0:
        return tuple(perm)

    best = objective(perm)
    for _ in range(max_passes):
        improved = False
        for i in range(n):
            for j in range(i + 1, n):
                perm[i], perm[j] = perm[j], perm[i]
                trial = objective(perm)
                if trial < best:
                    best = trial
                    improved = True
                else:
                    perm[i], perm[j] = perm[j], perm[i]
        if not improved:
            break
    return tuple(perm)


def capacity(chip_length_cm: float, spacing_um: float, depth_mm: float) -> int:
    """Channel-count scaling law: lateral columns times stacked layers."""
    if chip_length_cm <= 0 or spacing_um <= 0 or depth_mm <= 0:
        raise InputError("capacity arguments must be > 0")
    columns = math.floor(chip_length_cm * 1e4 / spacing_um + 1e-9)
    layers = math.floor(depth_mm * 1e3 / spacing_um + 1e-9)
    return columns * layers


def validate(route: RoutePlan, constraints: RouteConstraints) -> ValidationReport:
    """Independently recheck a plan against constraints and its own stats.

    Clearance and curvature are recomputed from the stored samples, so a
    plan whose statistics were tampered with is reported even when the
    geometry itself is fine.  The report is empty exactly when the plan
    satisfies the constraints.
    """
    violations: list[Violation] = []
    z = np.asarray(route.z_mm, float)
    paths = np.asarray(route.paths_um, float)
    n = route.n_channels

    if np.any(np.diff(z) <= 0):
        violations.append(Violation("z-monotonicity", tuple(range(n)), None, 0.0, 0.0))
        return ValidationReport(tuple(violations))
    if abs(z[0]) > 1e-9 or abs(z[-1] - route.chip_length_mm) > 1e-9:
        violations.append(
            Violation("z-extent", tuple(range(n)), float(z[-1]), float(z[-1]),
                      route.chip_length_mm)
        )

    p_in = np.asarray(route.input_layout.ports_um, float)
    p_out = np.asarray(
        [route.output_layout.ports_um[s] for s in route.assignment], float
    )
    start_err = np.sqrt(((paths[:, 0, :] - p_in) ** 2).sum(-1))
    end_err = np.sqrt(((paths[:, -1, :] - p_out) ** 2).sum(-1))
    for i in range(n):
        if start_err[i] > ENDPOINT_TOL_UM:
            violations.append(
                Violation("endpoint", (i,), float(z[0]), float(start_err[i]),
                          ENDPOINT_TOL_UM)
            )
        if end_err[i] > ENDPOINT_TOL_UM:
            violations.append(
                Violation("endpoint", (i,), float(z[-1]), float(end_err[i]),
                          ENDPOINT_TOL_UM)
            )

    # Clearance, reported per offending pair at its worst z.
    if n >= 2:
        iu, ju = np.triu_indices(n, k=1)
        worst_val = np.full(len(iu), np.inf)
        worst_k = np.zeros(len(iu), dtype=int)
        for k in range(paths.shape[1]):
            pts = paths[:, k, :]
            d = np.sqrt(((pts[iu] - pts[ju]) ** 2).sum(-1))
            closer = d < worst_val
            worst_val[closer] = d[closer]
            worst_k[closer] = k
        for idx in np.nonzero(worst_val < constraints.d_min_um - CLEARANCE_TOL_UM)[0]:
            violations.append(
                Violation(
                    "clearance", (int(iu[idx]), int(ju[idx])),
                    float(z[worst_k[idx]]), float(worst_val[idx]),
                    constraints.d_min_um,
                )
            )
        clearance = float(worst_val.min())
    else:
        clearance = math.inf
    if np.isfinite(route.min_clearance_um) or np.isfinite(clearance):
        if not np.isclose(clearance, route.min_clearance_um,
                          rtol=1e-3, atol=CLEARANCE_TOL_UM):
            violations.append(
                Violation("stat-mismatch-clearance", tuple(range(n)), None,
                          clearance, route.min_clearance_um)
            )

    curv = _discrete_curvature(z, paths)
    for i in range(n):
        k = int(np.argmax(curv[i]))
        peak = float(curv[i, k])
        if peak > (1.0 + CURVATURE_REL_TOL) / constraints.r_min_mm:
            violations.append(
                Violation("curvature", (i,), float(z[k + 1]), 1.0 / peak,
                          constraints.r_min_mm)
            )
    curv_max = float(curv.max()) if curv.size else 0.0
    radius = math.inf if curv_max == 0.0 else 1.0 / curv_max
    stored = route.min_bend_radius_mm
    if math.isfinite(radius) != math.isfinite(stored) or (
        math.isfinite(radius)
        and not math.isclose(radius, stored, rel_tol=CURVATURE_REL_TOL)
    ):
        violations.append(
            Violation("stat-mismatch-bend-radius", tuple(range(n)), None,
                      radius if math.isfinite(radius) else -1.0,
                      stored if math.isfinite(stored) else -1.0)
        )
    return ValidationReport(tuple(violations))

"""Coupled-mode propagation through routed waveguides and crosstalk metrics.

Amplitudes evolve along the propagation axis as dA/dz = -i C(z) A, with
C symmetric, off-diagonal entries given by the exponential coupling law
evaluated at the instantaneous pairwise separations, and an optional
diagonal detuning vector for fabrication disorder.  Integration uses an
exponential-midpoint stepper (matrix exponential via eigendecomposition)
so lossless transfer matrices are unitary to machine precision; step
subdivision is tied to the coupling-matrix norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericError
from .optics import KAPPA_FLOOR_PER_MM, CouplingModel, WaveguideSpec, propagation_transmission
from .routing import FacetLayout, RoutePlan

# Largest per-sample separation change, as a fraction of the model decay
# length, before the sampling is considered too coarse.
MAX_SEPARATION_STEP_FRACTION = 0.2


@dataclass(frozen=True, eq=False)
class CrosstalkMatrix:
    """Power-fraction transfer matrix between channels.

    ``power[i, j]`` is the power arriving at channel j's output site for
    unit power launched into channel i.  Rows sum to 1 (within 1e-9) in
    the lossless case and to at most 1 with loss applied.
    """

    power: np.ndarray
    wavelength_nm: float
    lossless: bool

    def __post_init__(self):
        p = np.asarray(self.power, float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise InputError("power must be a square matrix")
        object.__setattr__(self, "power", p)
        if np.any(p < -1e-12) or np.any(p > 1.0 + 1e-9):
            raise InputError("power entries must lie in [0, 1]")
        sums = p.sum(axis=1)
        if self.lossless:
            if np.any(np.abs(sums - 1.0) > 1e-9):
                raise InputError("lossless rows must sum to 1 within 1e-9")
        elif np.any(sums > 1.0 + 1e-9):
            raise InputError("lossy rows must sum to <= 1")

    @property
    def n_channels(self) -> int:
        return self.power.shape[0]


@dataclass(frozen=True)
class CrosstalkMetrics:
    """Summary statistics of a crosstalk matrix (fractions, not percent)."""

    max_offdiag: float
    avg_nearest_input: float
    avg_nearest_output: float
    avg_non_nearest: float

    def as_dict(self) -> dict:
        return {
            "max_offdiag": self.max_offdiag,
            "avg_nearest_input": self.avg_nearest_input,
            "avg_nearest_output": self.avg_nearest_output,
            "avg_non_nearest": self.avg_non_nearest,
        }


def two_guide_crosstalk(kappa_per_mm: float, length_mm: float,
                        detuning_per_mm: float = 0.0) -> float:
    """Closed-form crosstalk of two parallel guides over a fixed length.

    X = kappa^2 / (kappa^2 + (dbeta/2)^2) * sin^2(sqrt(kappa^2 + (dbeta/2)^2) L)

    reducing to sin^2(kappa L) for matched guides.  Total function on
    kappa >= 0, length >= 0.
    """
    if kappa_per_mm < 0:
        raise InputError("kappa must be >= 0")
    if length_mm < 0:
        raise InputError("length must be >= 0")
    g2 = kappa_per_mm**2 + (detuning_per_mm / 2.0) ** 2
    if g2 == 0.0 or kappa_per_mm == 0.0:
        return 0.0
    g = math.sqrt(g2)
    return kappa_per_mm**2 / g2 * math.sin(g * length_mm) ** 2


def _coupling_matrix(sep_um: np.ndarray, model: CouplingModel,
                     detuning_per_mm: np.ndarray | None) -> np.ndarray:
    kappa = model.kappa0_per_mm * np.exp(-sep_um / model.d0_um)
    kappa[kappa < KAPPA_FLOOR_PER_MM] = 0.0
    np.fill_diagonal(kappa, 0.0)
    if detuning_per_mm is not None:
        kappa[np.diag_indices_from(kappa)] = detuning_per_mm
    return kappa


def _pairwise_separations(points_um: np.ndarray) -> np.ndarray:
    diff = points_um[:, None, :] - points_um[None, :, :]
    return np.sqrt(np.sum(diff**2, axis=-1))


def _expm_step(c: np.ndarray, h_mm: float) -> np.ndarray:
    vals, vecs = np.linalg.eigh(c)
    return (vecs * np.exp(-1j * vals * h_mm)) @ vecs.T


def transfer_matrix(route: RoutePlan, model: CouplingModel,
                    detuning_per_mm=None, rtol: float = 1e-10) -> np.ndarray:
    """Complex amplitude transfer matrix U of the routed guide array.

    Column i of U is the output amplitude vector for unit input in
    channel i.  The path sampling is densified until adjacent-sample
    separation changes of coupled pairs stay below 20 percent of the
    model decay length; each interval is stepped with the midpoint
    matrix exponential, subdividing so the rotation per substep stays
    below a budget derived from ``rtol``.
    """
    z_mm = np.asarray(route.z_mm, float)
    if np.any(np.diff(z_mm) <= 0):
        raise InputError("path samples must have strictly increasing z")
    pos = np.asarray(route.paths_um, float)  # (n, m, 2)
    n = pos.shape[0]
    if detuning_per_mm is not None:
        detuning_per_mm = np.asarray(detuning_per_mm, float)
        if detuning_per_mm.shape != (n,):
            raise InputError("detuning vector length must match channel count")

    # Densify where separations of non-negligible pairs move too fast.
    sep = np.stack([_pairwise_separations(pos[:, k, :]) for k in range(pos.shape[1])])
    relevant = model.predict(np.minimum(sep[:-1], sep[1:])) >= KAPPA_FLOOR_PER_MM
    dsep = np.abs(np.diff(sep, axis=0))
    worst = float(np.max(dsep[relevant])) if np.any(relevant) else 0.0
    factor = max(1, math.ceil(worst / (MAX_SEPARATION_STEP_FRACTION * model.d0_um)))
    if factor > 64:
        raise NumericError(
            f"path sampling too coarse: separation steps need x{factor} refinement"
        )
    if factor > 1:
        fine = np.linspace(0.0, 1.0, (len(z_mm) - 1) * factor + 1)
        coarse = np.linspace(0.0, 1.0, len(z_mm))
        z_fine = np.interp(fine, coarse, z_mm)
        pos = np.stack(
            [
                np.stack(
                    [np.interp(z_fine, z_mm, pos[i, :, c]) for c in range(2)], axis=-1
                )
                for i in range(n)
            ]
        )
        z_mm = z_fine
        sep = np.stack([_pairwise_separations(pos[:, k, :]) for k in range(pos.shape[1])])

    # Rotation budget per substep, tied to the requested tolerance.
    theta = max(rtol ** (1.0 / 3.0), 1e-8)
    u_mat = np.eye(n, dtype=complex)
    for k in range(len(z_mm) - 1):
        h = z_mm[k + 1] - z_mm[k]
        s0, s1 = sep[k], sep[k + 1]
        if np.array_equal(s0, s1):
            c = _coupling_matrix(s0.copy(), model, detuning_per_mm)
            u_mat = _expm_step(c, h) @ u_mat
            continue
        c_bound = _coupling_matrix(np.minimum(s0, s1), model, detuning_per_mm)
        norm = float(np.max(np.sum(np.abs(c_bound), axis=1)))
        subdiv = max(1, math.ceil(norm * h / theta))
        for j in range(subdiv):
            frac = (j + 0.5) / subdiv
            c = _coupling_matrix(s0 + frac * (s1 - s0), model, detuning_per_mm)
            u_mat = _expm_step(c, h / subdiv) @ u_mat
    return u_mat


def propagate(route: RoutePlan, model: CouplingModel,
              spec: WaveguideSpec | None = None,
              wavelength_nm: float | None = None,
              apply_loss: bool = False,
              detuning_per_mm=None, rtol: float = 1e-10) -> CrosstalkMatrix:
    """Propagate unit power through every channel of a route.

    Returns the crosstalk matrix with entry (i, j) the power at channel
    j's output for unit power into channel i.  With ``apply_loss`` the
    per-channel propagation transmission (from the spec's loss table and
    each channel's stored path length) multiplies the output columns.
    """
    wavelength = wavelength_nm if wavelength_nm is not None else model.wavelength_nm
    u_mat = transfer_matrix(route, model, detuning_per_mm=detuning_per_mm, rtol=rtol)
    power = np.abs(u_mat.T) ** 2
    if apply_loss:
        if spec is None:
            raise InputError("apply_loss requires a WaveguideSpec for the loss table")
        trans = np.array(
            [
                propagation_transmission(spec, wavelength, length_mm / 10.0)
                for length_mm in route.path_lengths_mm
            ]
        )
        power = power * trans[None, :]
    return CrosstalkMatrix(power=power, wavelength_nm=float(wavelength),
                           lossless=not apply_loss)


def _nearest_pair_mask(points_um: np.ndarray) -> np.ndarray:
    """Boolean mask of the pairs at minimal mutual distance."""
    n = points_um.shape[0]
    if n < 2:
        return np.zeros((n, n), dtype=bool)
    dist = _pairwise_separations(points_um)
    off = ~np.eye(n, dtype=bool)
    dmin = dist[off].min()
    return (np.abs(dist - dmin) <= max(1e-9 * dmin, 1e-6)) & off


def matrix_metrics(matrix: CrosstalkMatrix, input_layout: FacetLayout,
                   output_layout: FacetLayout, assignment) -> CrosstalkMetrics:
    """Crosstalk summary metrics for a routed channel set.

    Nearest-input pairs are channels whose input ports sit at the
    minimal port spacing of the 1D facet; nearest-output pairs are
    channels whose assigned sites sit at the minimal lattice distance.
    A pair can belong to both classes and then contributes to both
    averages; everything else off-diagonal is "non-nearest".
    """
    n = matrix.n_channels
    assignment = tuple(int(i) for i in assignment)
    if len(assignment) != n or len(input_layout.ports_um) != n:
        raise InputError("matrix, layouts and assignment dimensions disagree")
    if max(assignment) >= len(output_layout.ports_um):
        raise InputError("assignment points outside the output layout")

    in_pts = np.asarray(input_layout.ports_um, float)
    site_pts = np.asarray([output_layout.ports_um[s] for s in assignment], float)
    near_in = _nearest_pair_mask(in_pts)
    near_out = _nearest_pair_mask(site_pts)
    off = ~np.eye(n, dtype=bool)

    p = matrix.power

    def _avg(mask):
        return float(p[mask].mean()) if np.any(mask) else 0.0

    return CrosstalkMetrics(
        max_offdiag=float(p[off].max()) if n > 1 else 0.0,
        avg_nearest_input=_avg(near_in),
        avg_nearest_output=_avg(near_out),
        avg_non_nearest=_avg(off & ~near_in & ~near_out),
    )

"""Step-index waveguide mode physics for laser-written channel waveguides.

Scalar (weak-guidance) treatment of the fundamental mode of a circular
step-index guide, plus the derived quantities the rest of the toolkit
consumes: normalized frequency, Marcuse mode field diameter, sampled 2D
mode profiles, Gaussian-overlap coupling efficiency, the evanescent
coupling rate between two parallel guides, exponential-law fits of that
rate, and propagation loss.

The scalar approximation is justified for the index contrasts handled
here (delta_n / n below 1 percent).  Radial solutions are the usual
Bessel pair: oscillatory J0 inside the core, decaying K0 in the
cladding, matched in value and slope at the core boundary.

Unit conventions: transverse lengths in um, coupling rates per mm,
wavelengths in nm, attenuation in dB/cm.  All functions are pure, so
wavelength and separation sweeps are safe to parallelize.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.special import j0, j1, k0, k1, k0e, k1e

from .errors import InputError, NumericError

# First zero of J0; a step-index guide is single-mode below this V.
SINGLE_MODE_V = 2.405
# Fundamental-mode regime accepted by the solver.
V_MIN = 0.8
V_MAX = 3 * SINGLE_MODE_V

# Fraction of mode power allowed outside the sampling window.
WINDOW_TRUNCATION_LIMIT = 1e-4

# Sparsity floor for predicted coupling rates (per mm).
KAPPA_FLOOR_PER_MM = 1e-12


@dataclass(frozen=True)
class WaveguideSpec:
    """Geometry, index step and loss of one written waveguide.

    Parameters
    ----------
    core_radius_um : float
        Core radius [um].
    delta_n : float
        Core-cladding index step (dimensionless, > 0).
    cladding_index : float
        Cladding refractive index (> 1 for glass substrates).
    loss_table : tuple of (wavelength_nm, db_per_cm)
        Propagation attenuation samples, wavelengths strictly increasing.
    """

    core_radius_um: float
    delta_n: float
    cladding_index: float
    loss_table: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.core_radius_um <= 0:
            raise InputError("core_radius_um must be > 0")
        if self.delta_n <= 0:
            raise InputError("delta_n must be > 0")
        if self.cladding_index <= 1:
            raise InputError("cladding_index must be > 1")
        table = tuple((float(w), float(a)) for w, a in self.loss_table)
        object.__setattr__(self, "loss_table", table)
        wavelengths = [w for w, _ in table]
        if any(b <= a for a, b in zip(wavelengths, wavelengths[1:])):
            raise InputError("loss_table wavelengths must be strictly increasing")
        if any(a < 0 for _, a in table):
            raise InputError("loss_table attenuations must be >= 0")

    @property
    def core_index(self) -> float:
        return self.cladding_index + self.delta_n

    @property
    def numerical_aperture(self) -> float:
        return math.sqrt(self.core_index**2 - self.cladding_index**2)


@dataclass(frozen=True, eq=False)
class ModeProfile:
    """Sampled fundamental-mode field on a square transverse window.

    ``field`` holds real amplitude samples on a node-centered grid of
    shape (resolution, resolution) spanning ``extent_um`` in both axes,
    normalized so that sum(field**2) * pixel_area == 1.
    """

    wavelength_nm: float
    v_number: float
    mfd_um: float
    extent_um: float
    core_radius_um: float
    field: np.ndarray = field(repr=False)

    @property
    def resolution(self) -> int:
        return self.field.shape[0]

    def axis_um(self) -> np.ndarray:
        return np.linspace(-self.extent_um / 2, self.extent_um / 2, self.resolution)

    @property
    def pixel_um(self) -> float:
        return self.extent_um / (self.resolution - 1)

    def core_power_fraction(self) -> float:
        """Fraction of mode power inside the core, from the sampled grid."""
        ax = self.axis_um()
        xx, yy = np.meshgrid(ax, ax, indexing="xy")
        inside = np.hypot(xx, yy) <= self.core_radius_um
        return float(np.sum(self.field[inside] ** 2) * self.pixel_um**2)


@dataclass(frozen=True)
class CouplingModel:
    """Exponential coupling law kappa(d) = kappa0 * exp(-d / d0).

    ``kappa0`` is the extrapolated rate at zero separation [1/mm], ``d0``
    the characteristic decay length of the evanescent field [um], and
    ``fit_r2`` the goodness of the log-space fit that produced them.
    """

    wavelength_nm: float
    kappa0_per_mm: float
    d0_um: float
    fit_r2: float
    valid_range_um: tuple[float, float]

    def __post_init__(self):
        if self.kappa0_per_mm <= 0:
            raise InputError("kappa0_per_mm must be > 0")
        if self.d0_um <= 0:
            raise InputError("d0_um must be > 0")
        if not 0.0 <= self.fit_r2 <= 1.0:
            raise InputError("fit_r2 must lie in [0, 1]")

    def predict(self, separation_um) -> np.ndarray | float:
        """Predicted coupling rate [1/mm] at the given separation [um]."""
        return self.kappa0_per_mm * np.exp(-np.asarray(separation_um, float) / self.d0_um)


def v_number(spec: WaveguideSpec, wavelength_nm: float) -> float:
    """Normalized frequency V = (2 pi a / lambda) * NA.

    Deterministic closed form; V below ``SINGLE_MODE_V`` means the guide
    supports only the fundamental mode.
    """
    if wavelength_nm <= 0:
        raise InputError("wavelength must be > 0")
    lam_um = wavelength_nm * 1e-3
    return 2.0 * math.pi * spec.core_radius_um / lam_um * spec.numerical_aperture


def mode_field_diameter(spec: WaveguideSpec, wavelength_nm: float) -> float:
    """Mode field diameter from the Marcuse polynomial [um].

    MFD / 2a = 0.65 + 1.619 V^(-3/2) + 2.879 V^(-6)

    Monotonically increasing in wavelength for a fixed guide.  The
    closed form is unreliable for V <= 0.8; such inputs are rejected
    rather than silently returned.
    """
    v = v_number(spec, wavelength_nm)
    if v <= V_MIN:
        raise InputError(
            f"weakly-guided out-of-model: V = {v:.4g} <= {V_MIN} at "
            f"{wavelength_nm:g} nm"
        )
    ratio = 0.65 + 1.619 * v**-1.5 + 2.879 * v**-6
    return 2.0 * spec.core_radius_um * ratio


@lru_cache(maxsize=512)
def _lp01_params(core_radius_um: float, delta_n: float, cladding_index: float,
                 wavelength_nm: float) -> tuple[float, float, float]:
    """Solve the fundamental-mode characteristic equation.

    Returns (u, w, v) with u the core transverse parameter, w the
    cladding decay parameter, u**2 + w**2 = v**2.  Root of

        u J1(u) / J0(u) = w K1(w) / K0(w)

    bracketed in (0, min(V, j01)).
    """
    spec = WaveguideSpec(core_radius_um, delta_n, cladding_index)
    v = v_number(spec, wavelength_nm)

    def mismatch(u):
        w = math.sqrt(max(v * v - u * u, 0.0))
        lhs = u * j1(u) / j0(u)
        if w == 0.0:
            return lhs
        return lhs - w * k1(w) / k0(w)

    lo = 1e-9
    hi = min(v, 2.404825557695773) - 1e-12
    f_lo, f_hi = mismatch(lo), mismatch(hi)
    if f_lo * f_hi > 0:
        raise NumericError(
            f"mode-solve failed: no root in bracket for V = {v:.4g} at "
            f"{wavelength_nm:g} nm"
        )
    u = brentq(mismatch, lo, hi, xtol=1e-14, rtol=8.9e-16)
    w = math.sqrt(max(v * v - u * u, 0.0))
    return u, w, v


def _norm_factor(u: float, w: float) -> float:
    """Dimensionless power integral N with total power = 2 pi A^2 a^2 N.

    Closed form from the Bessel integrals
    int_0^b J0(t)^2 t dt = (b^2/2)(J0^2 + J1^2) and
    int_b^inf K0(t)^2 t dt = (b^2/2)(K1^2 - K0^2).
    """
    core = 0.5 * (j0(u) ** 2 + j1(u) ** 2)
    clad = (j0(u) / k0(w)) ** 2 * 0.5 * (k1(w) ** 2 - k0(w) ** 2)
    return core + clad


def _cladding_tail_fraction(u: float, w: float, rho: float) -> float:
    """Fraction of mode power beyond radius rho * a (rho > 1)."""
    b = w * rho
    # Scaled Bessels keep the difference representable at large b.
    scale = math.exp(-2.0 * b)
    tail = (j0(u) / k0(w)) ** 2 * 0.5 * rho * rho * scale * (k1e(b) ** 2 - k0e(b) ** 2)
    return tail / _norm_factor(u, w)


def core_confinement(spec: WaveguideSpec, wavelength_nm: float) -> float:
    """Closed-form fraction of fundamental-mode power inside the core."""
    u, w, _ = _lp01_params(spec.core_radius_um, spec.delta_n,
                           spec.cladding_index, wavelength_nm)
    core = 0.5 * (j0(u) ** 2 + j1(u) ** 2)
    return core / _norm_factor(u, w)


def solve_mode(spec: WaveguideSpec, wavelength_nm: float,
               window_um: float | None = None, resolution: int = 256) -> ModeProfile:
    """Sample the normalized fundamental mode on a square window.

    Parameters
    ----------
    spec, wavelength_nm
        Guide and operating wavelength.  V must lie in (0.8, 7.215).
    window_um : float, optional
        Full window extent; defaults to 6 x MFD and must be >= 4 x MFD.
    resolution : int
        Samples per axis (node-centered grid including both edges).

    Raises
    ------
    NumericError
        If the characteristic equation has no root in the bracket, or if
        more than 1e-4 of the mode power falls outside the window.
    """
    v = v_number(spec, wavelength_nm)
    if not V_MIN < v < V_MAX:
        raise InputError(
            f"V = {v:.4g} outside fundamental-mode regime ({V_MIN}, {V_MAX:.3f})"
        )
    if resolution < 16:
        raise InputError("resolution must be >= 16 samples")
    mfd = mode_field_diameter(spec, wavelength_nm)
    if window_um is None:
        window_um = 6.0 * mfd
    if window_um < 4.0 * mfd:
        raise InputError(
            f"window {window_um:.3g} um smaller than 4 x MFD = {4 * mfd:.3g} um"
        )
    a = spec.core_radius_um
    u, w, _ = _lp01_params(a, spec.delta_n, spec.cladding_index, wavelength_nm)

    # Conservative truncation check on the inscribed circle.
    rho = (window_um / 2.0) / a
    if _cladding_tail_fraction(u, w, rho) > WINDOW_TRUNCATION_LIMIT:
        raise NumericError(
            f"window truncation: more than {WINDOW_TRUNCATION_LIMIT:g} of mode "
            f"power outside {window_um:.3g} um window"
        )

    ax = np.linspace(-window_um / 2.0, window_um / 2.0, resolution)
    xx, yy = np.meshgrid(ax, ax, indexing="xy")
    r = np.hypot(xx, yy)
    fld = np.empty_like(r)
    inside = r <= a
    fld[inside] = j0(u * r[inside] / a)
    fld[~inside] = (j0(u) / k0(w)) * k0(w * r[~inside] / a)

    h = window_um / (resolution - 1)
    fld /= math.sqrt(np.sum(fld**2)) * h
    return ModeProfile(
        wavelength_nm=float(wavelength_nm),
        v_number=v,
        mfd_um=mfd,
        extent_um=float(window_um),
        core_radius_um=a,
        field=fld,
    )


def field_overlap(field_a: np.ndarray, field_b: np.ndarray) -> float:
    """Power overlap |<a|b>|^2 / (<a|a> <b|b>) of two co-sampled fields.

    Symmetric in its arguments and independent of either field's
    normalization.  Grids must already be aligned.
    """
    fa = np.asarray(field_a, float)
    fb = np.asarray(field_b, float)
    if fa.shape != fb.shape:
        raise InputError(f"field grids differ: {fa.shape} vs {fb.shape}")
    num = float(np.sum(fa * fb)) ** 2
    den = float(np.sum(fa * fa)) * float(np.sum(fb * fb))
    if den == 0.0:
        return 0.0
    return num / den


def gaussian_coupling_efficiency(profile: ModeProfile, gaussian_mfd_um: float) -> float:
    """Overlap efficiency of the mode with a centered Gaussian beam.

    The Gaussian uses the 1/e field-amplitude diameter convention, so a
    beam of the same MFD as a truly Gaussian mode gives efficiency 1.
    Result lies in [0, 1].
    """
    if gaussian_mfd_um <= 0:
        raise InputError("gaussian_mfd_um must be > 0")
    waist = gaussian_mfd_um / 2.0
    # Gaussian window truncation: power beyond the inscribed circle.
    r_edge = profile.extent_um / 2.0
    if math.exp(-2.0 * (r_edge / waist) ** 2) > WINDOW_TRUNCATION_LIMIT:
        raise NumericError(
            f"window truncation: Gaussian with MFD {gaussian_mfd_um:.3g} um "
            f"not contained in {profile.extent_um:.3g} um window"
        )
    ax = profile.axis_um()
    xx, yy = np.meshgrid(ax, ax, indexing="xy")
    gauss = np.exp(-(xx**2 + yy**2) / waist**2)
    return field_overlap(profile.field, gauss)


def coupling_constant(spec: WaveguideSpec, wavelength_nm: float,
                      separation_um: float) -> float:
    """Coupling rate between two identical parallel guides [1/mm].

    Evaluates the weakly-coupled overlap integral

        kappa = k0^2 / (2 beta) * int (n^2 - n_clad^2) psi1 psi2 dA

    with normalized scalar modes; the index perturbation restricts the
    integral to the neighbor's core disk, which is integrated in polar
    coordinates (Gauss-Legendre radially, trapezoid azimuthally).
    Strictly decreasing in separation.
    """
    a = spec.core_radius_um
    if separation_um <= 2.0 * a:
        raise InputError(
            f"separation {separation_um:g} um must exceed the core diameter "
            f"{2 * a:g} um"
        )
    v = v_number(spec, wavelength_nm)
    if not V_MIN < v < V_MAX:
        raise InputError(
            f"V = {v:.4g} outside fundamental-mode regime ({V_MIN}, {V_MAX:.3f})"
        )
    u, w, _ = _lp01_params(a, spec.delta_n, spec.cladding_index, wavelength_nm)
    amp2 = 1.0 / (math.pi * a * a * 2.0 * _norm_factor(u, w))  # A^2 of psi

    # Polar quadrature over the displaced core: 32 radial Gauss nodes,
    # 256 azimuthal trapezoid nodes (spectrally accurate for periodic
    # integrands).
    n_rad, n_azi = 32, 256
    nodes, weights = np.polynomial.legendre.leggauss(n_rad)
    rho = 0.5 * a * (nodes + 1.0)
    w_rho = 0.5 * a * weights
    phi = np.linspace(0.0, 2.0 * math.pi, n_azi, endpoint=False)
    d = separation_um
    s = np.sqrt(d * d + rho[:, None] ** 2 + 2.0 * d * rho[:, None] * np.cos(phi)[None, :])
    psi_far = (j0(u) / k0(w)) * k0(w * s / a)
    azi = psi_far.sum(axis=1) * (2.0 * math.pi / n_azi)
    integral = amp2 * float(np.sum(w_rho * rho * j0(u * rho / a) * azi))

    lam_um = wavelength_nm * 1e-3
    k_free = 2.0 * math.pi / lam_um
    beta = math.sqrt((spec.core_index * k_free) ** 2 - (u / a) ** 2)
    kappa_per_um = k_free**2 / (2.0 * beta) * (
        spec.core_index**2 - spec.cladding_index**2
    ) * integral
    return kappa_per_um * 1e3


def fit_exponential(samples, wavelength_nm: float) -> CouplingModel:
    """Least-squares fit of kappa(d) = kappa0 * exp(-d / d0).

    The fit is linear regression of log kappa against separation, which
    matches the exponential law exactly and is deterministic.  Requires
    at least three samples with distinct separations and positive rates.
    """
    pts = [(float(d), float(k)) for d, k in samples]
    if len(pts) < 3:
        raise InputError("fit requires at least 3 (separation, kappa) samples")
    if any(k <= 0 for _, k in pts):
        raise InputError("fit requires all kappa > 0")
    d = np.array([p[0] for p in pts])
    if len(np.unique(d)) != len(d):
        raise InputError("fit requires distinct separations")
    logk = np.log([p[1] for p in pts])
    slope, intercept = np.polyfit(d, logk, 1)
    if slope >= 0:
        raise InputError("samples do not decay with separation; no exponential fit")
    resid = logk - (slope * d + intercept)
    ss_tot = float(np.sum((logk - logk.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(np.sum(resid**2)) / ss_tot
    return CouplingModel(
        wavelength_nm=float(wavelength_nm),
        kappa0_per_mm=float(np.exp(intercept)),
        d0_um=float(-1.0 / slope),
        fit_r2=min(max(r2, 0.0), 1.0),
        valid_range_um=(float(d.min()), float(d.max())),
    )


def propagation_transmission(spec: WaveguideSpec, wavelength_nm: float,
                             path_length_cm: float) -> float:
    """Power transmission 10^(-alpha L / 10) over a path [cm].

    Attenuation is linearly interpolated inside the spec's loss table;
    wavelengths outside the tabulated range are refused rather than
    extrapolated.
    """
    if path_length_cm < 0:
        raise InputError("path_length_cm must be >= 0")
    if not spec.loss_table:
        raise InputError("spec has no loss table")
    wl = np.array([p[0] for p in spec.loss_table])
    db = np.array([p[1] for p in spec.loss_table])
    if not wl[0] <= wavelength_nm <= wl[-1]:
        raise InputError(
            f"wavelength {wavelength_nm:g} nm outside loss table range "
            f"[{wl[0]:g}, {wl[-1]:g}] nm; extrapolation refused"
        )
    alpha = float(np.interp(wavelength_nm, wl, db))
    return 10.0 ** (-alpha * path_length_cm / 10.0)


def export_mode_csv(profile: ModeProfile, path) -> None:
    """Write a mode profile as a plot-ready CSV grid of amplitudes."""
    ax = profile.axis_um()
    with open(path, "w", newline="") as fh:
        fh.write("x_um\\y_um," + ",".join(f"{x:.12g}" for x in ax) + "\n")
        for y, row in zip(ax, profile.field):
            fh.write(f"{y:.12g}," + ",".join(f"{val:.12g}" for val in row) + "\n")

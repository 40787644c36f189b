"""Multi-tone acousto-optic addressing of the chip's 1D input facet.

An acousto-optic deflector driven with several RF tones splits one beam
into one beam per tone; the deflection angle is linear in drive
frequency (theta = lambda f / v), so a focal lens maps frequency to
transverse position on the input facet.  This module plans tone sets
for channel subsets, enumerates third-order intermodulation products,
simulates per-site intensities through the chip's crosstalk matrix, and
iteratively flattens the site intensities by amplitude feedback.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError
from .crosstalk import CrosstalkMatrix
from .routing import RoutePlan


@dataclass(frozen=True)
class Deflector:
    """Deflector and relay-optics constants; placeholder defaults live in
    the project config and are calibration inputs, not device data."""

    acoustic_velocity_mps: float = 650.0
    center_frequency_mhz: float = 100.0
    bandwidth_mhz: float = 60.0
    focal_length_mm: float = 200.0
    wavelength_nm: float = 420.0
    beam_diameter_mm: float = 1.0
    efficiency_curve: tuple[tuple[float, float], ...] = ((0.0, 1.0), (1e9, 1.0))
    total_power_budget: float = 1.0
    third_order_coeff: float = 0.0

    def __post_init__(self):
        if self.acoustic_velocity_mps <= 0 or self.focal_length_mm <= 0:
            raise InputError("deflector constants must be positive")
        if self.bandwidth_mhz <= 0 or self.center_frequency_mhz <= 0:
            raise InputError("deflector band must be positive")
        freqs = [f for f, _ in self.efficiency_curve]
        if any(b <= a for a, b in zip(freqs, freqs[1:])):
            raise InputError("efficiency_curve frequencies must be increasing")

    @property
    def band_mhz(self) -> tuple[float, float]:
        half = self.bandwidth_mhz / 2.0
        return (self.center_frequency_mhz - half, self.center_frequency_mhz + half)

    def efficiency(self, frequency_mhz) -> np.ndarray | float:
        f = np.array([p[0] for p in self.efficiency_curve])
        e = np.array([p[1] for p in self.efficiency_curve])
        return np.interp(frequency_mhz, f, e)

    def position_um(self, frequency_mhz) -> np.ndarray | float:
        """Beam position on the facet, relative to the center frequency.

        x = F * theta with theta = lambda (f - f_center) / v; affine in
        frequency, proportional to focal length.
        """
        df_hz = (np.asarray(frequency_mhz, float) - self.center_frequency_mhz) * 1e6
        theta = self.wavelength_nm * 1e-9 * df_hz / self.acoustic_velocity_mps
        return self.focal_length_mm * 1e3 * theta

    @property
    def switching_latency_us(self) -> float:
        """Acoustic fill time of the beam aperture (reported, not simulated)."""
        return self.beam_diameter_mm * 1e-3 / self.acoustic_velocity_mps * 1e6


@dataclass(frozen=True)
class Tone:
    frequency_mhz: float
    amplitude: float
    phase_rad: float = 0.0


@dataclass(frozen=True)
class TonePlan:
    """RF drive plan: one tone per addressed channel.

    ``channels[k]`` is the input-channel index served by ``tones[k]``.
    ``base_frequency_mhz``/``spacing_mhz`` record the frequency grid when
    the plan came from :func:`plan_tones` (None for hand-built plans).
    """

    tones: tuple[Tone, ...]
    channels: tuple[int, ...]
    deflector: Deflector
    base_frequency_mhz: float | None = None
    spacing_mhz: float | None = None

    def __post_init__(self):
        if len(self.tones) != len(self.channels):
            raise InputError("one channel index per tone required")
        freqs = [t.frequency_mhz for t in self.tones]
        if any(b <= a for a, b in zip(freqs, freqs[1:])):
            raise InputError("tone frequencies must be strictly increasing")
        lo, hi = self.deflector.band_mhz
        for t, ch in zip(self.tones, self.channels):
            if not lo <= t.frequency_mhz <= hi:
                raise InputError(
                    f"channel {ch}: tone {t.frequency_mhz:g} MHz outside "
                    f"deflector band [{lo:g}, {hi:g}] MHz"
                )
        power = sum(t.amplitude**2 for t in self.tones)
        if power > self.deflector.total_power_budget + 1e-9:
            raise InputError(
                f"sum of squared amplitudes {power:.6g} exceeds power budget "
                f"{self.deflector.total_power_budget:g}"
            )

    @property
    def total_power(self) -> float:
        return float(sum(t.amplitude**2 for t in self.tones))

    def with_amplitudes(self, amplitudes) -> "TonePlan":
        amplitudes = np.asarray(amplitudes, float)
        if amplitudes.shape != (len(self.tones),):
            raise InputError("amplitude vector length must match tone count")
        tones = tuple(
            Tone(t.frequency_mhz, float(a), t.phase_rad)
            for t, a in zip(self.tones, amplitudes)
        )
        return TonePlan(tones, self.channels, self.deflector,
                        self.base_frequency_mhz, self.spacing_mhz)


@dataclass(frozen=True, eq=False)
class IntensityReadout:
    """Per-site intensities after the chip, indexed by channel.

    ``site_ids[k]`` is the output-lattice port fed by ``channel_ids[k]``.
    RSD is the population sigma/mu over the stored intensities (0 for an
    all-dark readout); uniformity = 1 - RSD.
    """

    channel_ids: tuple[int, ...]
    site_ids: tuple[int, ...]
    intensities: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.asarray(self.intensities, float)
        object.__setattr__(self, "intensities", vals)
        if np.any(vals < -1e-15):
            raise InputError("intensities must be >= 0")

    @property
    def rsd(self) -> float:
        mean = float(self.intensities.mean())
        if mean == 0.0:
            return 0.0
        return float(self.intensities.std()) / mean

    @property
    def uniformity(self) -> float:
        return 1.0 - self.rsd


@dataclass(frozen=True)
class IntermodProduct:
    frequency_mhz: float
    amplitude: float
    colliding_channel: int | None
    in_band: bool


@dataclass(frozen=True, eq=False)
class CalibrationResult:
    """Outcome of iterative amplitude flattening."""

    iterations: int
    amplitude_history: tuple[np.ndarray, ...]
    rsd_history: tuple[float, ...]
    final_plan: TonePlan
    final_readout: IntensityReadout
    converged: bool
    dead_channels: tuple[int, ...] = ()

    @property
    def final_rsd(self) -> float:
        return self.rsd_history[-1]

    @property
    def final_uniformity(self) -> float:
        return 1.0 - self.final_rsd


def plan_tones(selected_channels, base_frequency_mhz: float, spacing_mhz: float,
               deflector: Deflector, input_pitch_um: float | None = None,
               power_budget: float | None = None) -> TonePlan:
    """Plan one tone per selected channel on an equally spaced grid.

    Channel k is driven at base + k * spacing so a site always maps to
    the same frequency regardless of which subset is active.  Amplitudes
    are equal and fill the power budget.  When ``input_pitch_um`` is
    given, the beam spacing F lambda spacing / v must match it within
    5 percent, otherwise the error reports the spacing that would.
    """
    channels = sorted(set(int(c) for c in selected_channels))
    if spacing_mhz <= 0:
        raise InputError("spacing must be > 0")
    if not channels:
        return TonePlan((), (), deflector, base_frequency_mhz, spacing_mhz)
    lo, hi = deflector.band_mhz
    freqs = [base_frequency_mhz + k * spacing_mhz for k in channels]
    for ch, f in zip(channels, freqs):
        if not lo <= f <= hi:
            raise InputError(
                f"channel {ch} needs {f:g} MHz, outside deflector band "
                f"[{lo:g}, {hi:g}] MHz"
            )
    if input_pitch_um is not None:
        dx = (
            deflector.focal_length_mm * 1e3 * deflector.wavelength_nm * 1e-9
            * spacing_mhz * 1e6 / deflector.acoustic_velocity_mps
        )
        if abs(dx - input_pitch_um) > 0.05 * input_pitch_um:
            required = (
                input_pitch_um * 1e-6 * deflector.acoustic_velocity_mps
                / (deflector.focal_length_mm * 1e-3 * deflector.wavelength_nm * 1e-9)
                / 1e6
            )
            raise InputError(
                f"beam spacing {dx:.4g} um misses facet pitch "
                f"{input_pitch_um:g} um by more than 5%; required tone "
                f"spacing is {required:.4g} MHz"
            )
    budget = deflector.total_power_budget if power_budget is None else power_budget
    amp = math.sqrt(budget / len(channels))
    tones = tuple(Tone(f, amp, 0.0) for f in freqs)
    return TonePlan(tones, tuple(channels), deflector,
                    base_frequency_mhz, spacing_mhz)


def intermod_spectrum(plan: TonePlan, third_order_coeff: float) -> list[IntermodProduct]:
    """Enumerate third-order intermodulation products of the plan.

    Products 2 f_i - f_j (amplitude g3 a_i^2 a_j) and f_i + f_j - f_k
    (amplitude g3 a_i a_j a_k, i < j, k distinct).  A product colliding
    with a planned tone, i.e. landing within half the minimum tone
    spacing of it, is tagged with that tone's channel.  With equal
    spacing every in-band product lands exactly on the channel grid, so
    uniformity must be recovered by amplitude calibration rather than by
    frequency choice.
    """
    if third_order_coeff < 0:
        raise InputError("third_order_coeff must be >= 0")
    tones = plan.tones
    freqs = np.array([t.frequency_mhz for t in tones])
    amps = np.array([t.amplitude for t in tones])
    products: list[tuple[float, float]] = []
    n = len(tones)
    for i in range(n):
        for j in range(n):
            if i != j:
                products.append(
                    (2 * freqs[i] - freqs[j], third_order_coeff * amps[i] ** 2 * amps[j])
                )
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(n):
                if k != i and k != j:
                    products.append(
                        (
                            freqs[i] + freqs[j] - freqs[k],
                            third_order_coeff * amps[i] * amps[j] * amps[k],
                        )
                    )
    half_gap = np.diff(freqs).min() / 2.0 if n > 1 else 0.0
    lo, hi = plan.deflector.band_mhz
    out = []
    for f, a in products:
        ch = None
        if n > 1:
            idx = int(np.argmin(np.abs(freqs - f)))
            if abs(freqs[idx] - f) <= half_gap:
                ch = plan.channels[idx]
        out.append(IntermodProduct(float(f), float(a), ch, bool(lo <= f <= hi)))
    return out


def simulate_intensities(plan: TonePlan, route: RoutePlan, xmatrix: CrosstalkMatrix,
                         channel_transmissions=None,
                         launch_efficiencies=None) -> IntensityReadout:
    """Per-site intensities for a tone plan driven through the chip.

    Input power per channel is the deflector efficiency at the tone
    frequency times amplitude squared, plus any intermodulation power
    landing on the channel grid (incoherent sum); it is then scaled by
    the launch efficiency, mixed by the crosstalk matrix and attenuated
    by the per-channel transmission.
    """
    n = route.n_channels
    if xmatrix.n_channels != n:
        raise InputError("crosstalk matrix size disagrees with route")
    trans = np.ones(n) if channel_transmissions is None else np.asarray(
        channel_transmissions, float
    )
    launch = np.ones(n) if launch_efficiencies is None else np.asarray(
        launch_efficiencies, float
    )
    if trans.shape != (n,) or launch.shape != (n,):
        raise InputError("transmission and launch vectors must match channel count")

    power_in = np.zeros(n)
    for tone, ch in zip(plan.tones, plan.channels):
        if ch >= n:
            raise InputError(f"plan channel {ch} outside route with {n} channels")
        power_in[ch] += float(plan.deflector.efficiency(tone.frequency_mhz)) * tone.amplitude**2

    g3 = plan.deflector.third_order_coeff
    if g3 > 0 and len(plan.tones) > 1:
        for prod in intermod_spectrum(plan, g3):
            if not prod.in_band:
                continue
            ch = prod.colliding_channel
            if ch is None and plan.spacing_mhz:
                k = round((prod.frequency_mhz - plan.base_frequency_mhz) / plan.spacing_mhz)
                if 0 <= k < n and math.isclose(
                    plan.base_frequency_mhz + k * plan.spacing_mhz,
                    prod.frequency_mhz, rel_tol=0.0,
                    abs_tol=plan.spacing_mhz / 2.0,
                ):
                    ch = int(k)
            if ch is not None:
                power_in[ch] += float(plan.deflector.efficiency(prod.frequency_mhz)) * prod.amplitude**2

    out = (power_in * launch) @ xmatrix.power * trans
    return IntensityReadout(
        channel_ids=tuple(range(n)),
        site_ids=tuple(route.assignment),
        intensities=out,
    )


def calibrate_uniformity(initial: TonePlan, system, target_uniformity: float,
                         max_iter: int = 50) -> CalibrationResult:
    """Flatten site intensities by iterative amplitude feedback.

    Each accepted step applies a_k <- a_k * sqrt(I_target / I_k) with
    I_target the median intensity over the addressed channels (robust to
    a single dead channel), then rescales so the total tone power equals
    the initial plan's power.  Steps that would raise the RSD are
    rejected and retried at half the exponent; RSD over accepted steps
    is therefore non-increasing.  Non-convergence is reported in the
    result, not raised.
    """
    if not 0.0 < target_uniformity <= 1.0:
        raise InputError("target uniformity must lie in (0, 1]")
    if not initial.tones:
        raise InputError("cannot calibrate an empty tone plan")
    active = np.array(initial.channels, dtype=int)
    budget = initial.total_power

    def active_rsd(readout):
        vals = readout.intensities[active]
        mean = float(vals.mean())
        return math.inf if mean == 0.0 else float(vals.std()) / mean

    plan = initial
    readout = system(plan)
    rsd = active_rsd(readout)
    amps = np.array([t.amplitude for t in plan.tones])
    history = [amps.copy()]
    rsd_hist = [rsd]

    intensities = readout.intensities[active]
    dead = tuple(int(c) for c, v in zip(active, intensities) if v <= 0.0)
    if dead:
        return CalibrationResult(0, tuple(history), tuple(rsd_hist), plan, readout,
                                 converged=False, dead_channels=dead)
    if 1.0 - rsd >= target_uniformity:
        return CalibrationResult(0, tuple(history), tuple(rsd_hist), plan, readout,
                                 converged=True)

    accepted = 0
    gamma = 1.0
    attempts = 0
    while accepted < max_iter and attempts < 4 * max_iter:
        attempts += 1
        vals = readout.intensities[active]
        target = float(np.median(vals))
        factors = np.sqrt(target / vals) ** gamma
        trial_amps = amps * factors
        trial_amps *= math.sqrt(budget / float(np.sum(trial_amps**2)))
        trial_plan = plan.with_amplitudes(trial_amps)
        trial_readout = system(trial_plan)
        trial_rsd = active_rsd(trial_readout)
        if trial_rsd <= rsd:
            plan, readout, rsd, amps = trial_plan, trial_readout, trial_rsd, trial_amps
            accepted += 1
            gamma = 1.0
            history.append(amps.copy())
            rsd_hist.append(rsd)
            if 1.0 - rsd >= target_uniformity:
                return CalibrationResult(accepted, tuple(history), tuple(rsd_hist),
                                         plan, readout, converged=True)
        else:
            gamma *= 0.5
            if gamma < 1e-3:
                break
    return CalibrationResult(accepted, tuple(history), tuple(rsd_hist), plan,
                             readout, converged=False)


def render_pattern(mask, route: RoutePlan) -> tuple[tuple[int, ...], str]:
    """Channels to drive for an on/off mask over the output lattice.

    Inverts the route assignment for every lit lattice site and returns
    the channel subset plus a printable grid ('#' on, '.' off).  A lit
    site with no routed channel is an error.
    """
    grid = np.asarray(mask, dtype=bool)
    shape = route.output_layout.grid_shape
    if shape is None:
        raise InputError("route output layout is not a grid")
    if grid.shape != tuple(shape):
        raise InputError(f"mask shape {grid.shape} differs from output grid {shape}")
    rows, cols = shape
    inverse = {site: ch for ch, site in enumerate(route.assignment)}
    selected = []
    for r in range(rows):
        for c in range(cols):
            if grid[r, c]:
                site = r * cols + c
                if site not in inverse:
                    raise InputError(
                        f"mask site ({r}, {c}) has no routed channel"
                    )
                selected.append(inverse[site])
    text = "\n".join(
        "".join("#" if grid[r, c] else "." for c in range(cols)) for r in range(rows)
    )
    return tuple(sorted(selected)), text

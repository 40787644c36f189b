"""Photon-collection link budget and readout-error estimates.

The collection chain from an emitter to its detector is a multiplicative
stack of stage efficiencies; photon counting over a readout window is
Poissonian, and counts are small, so error probabilities use exact
Poisson tail sums rather than Gaussian approximations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InputError


@dataclass(frozen=True)
class LinkBudget:
    """Efficiency chain plus counting parameters for one readout channel."""

    stages: tuple[tuple[str, float], ...]
    scattering_rate_hz: float
    readout_window_us: float
    dark_rate_hz: float
    threshold: int | None = None

    def __post_init__(self):
        stages = tuple((str(n), float(e)) for n, e in self.stages)
        object.__setattr__(self, "stages", stages)
        for name, eff in stages:
            if not 0.0 < eff <= 1.0:
                raise InputError(f"stage {name!r} efficiency {eff:g} not in (0, 1]")
        if self.scattering_rate_hz < 0 or self.dark_rate_hz < 0:
            raise InputError("rates must be >= 0")
        if self.readout_window_us < 0:
            raise InputError("readout window must be >= 0")

    @property
    def total_efficiency(self) -> float:
        total = 1.0
        for _, eff in self.stages:
            total *= eff
        return total


@dataclass(frozen=True)
class ReadoutError:
    """Bright/dark discrimination errors at the recommended threshold."""

    p_miss_bright: float
    p_false_dark: float
    recommended_threshold: int
    distinguishable: bool
    mu_bright: float
    mu_dark: float
    scan: tuple[tuple[int, float, float], ...]


def collection_fraction(numerical_aperture: float, medium_index: float) -> float:
    """Solid-angle fraction collected from an isotropic emitter.

    (1 - cos theta) / 2 with sin theta = NA / n.  NA approaching the
    medium index collects the full hemisphere (1/2).
    """
    if medium_index <= 0:
        raise InputError("medium_index must be > 0")
    if numerical_aperture < 0 or numerical_aperture >= medium_index:
        raise InputError("need 0 <= NA < medium_index")
    sin_t = numerical_aperture / medium_index
    return (1.0 - math.sqrt(1.0 - sin_t * sin_t)) / 2.0


def db_to_fraction(loss_db: float) -> float:
    """Power fraction transmitted through a loss of ``loss_db`` dB."""
    if loss_db < 0:
        raise InputError("loss_db must be >= 0")
    return 10.0 ** (-loss_db / 10.0)


def fraction_to_db(fraction: float) -> float:
    """Inverse of :func:`db_to_fraction`; exact round trip."""
    if not 0.0 < fraction <= 1.0:
        raise InputError("fraction must lie in (0, 1]")
    return -10.0 * math.log10(fraction)


def _poisson_cdf(k: int, mu: float) -> float:
    """P(X <= k) for X ~ Poisson(mu), by direct stable summation."""
    if k < 0:
        return 0.0
    if mu == 0.0:
        return 1.0
    terms = []
    for n in range(k + 1):
        terms.append(math.exp(n * math.log(mu) - mu - math.lgamma(n + 1)))
    return min(math.fsum(terms), 1.0)


def readout_error(budget: LinkBudget) -> ReadoutError:
    """Bright/dark readout errors with an exact Poisson threshold scan.

    Bright counts ~ Poisson(rate * efficiency * window + dark * window),
    dark counts ~ Poisson(dark * window).  Integer thresholds t in
    [0, ceil(mu_b + 6 sqrt(mu_b))] are scanned; counts >= t call the
    state bright.  The recommended threshold minimizes
    max(p_miss_bright, p_false_dark), ties resolved to the lowest t.
    If the budget pins a threshold, the reported errors are evaluated
    there instead.
    """
    window_s = budget.readout_window_us * 1e-6
    mu_d = budget.dark_rate_hz * window_s
    mu_b = budget.scattering_rate_hz * budget.total_efficiency * window_s + mu_d

    t_max = int(math.ceil(mu_b + 6.0 * math.sqrt(mu_b))) + 1 if mu_b > 0 else 1
    scan = []
    best_t, best_err = 0, math.inf
    for t in range(t_max + 1):
        p_miss = _poisson_cdf(t - 1, mu_b)
        p_false = 1.0 - _poisson_cdf(t - 1, mu_d)
        scan.append((t, p_miss, p_false))
        err = max(p_miss, p_false)
        if err < best_err:
            best_err = err
            best_t = t

    report_t = best_t if budget.threshold is None else int(budget.threshold)
    p_miss = _poisson_cdf(report_t - 1, mu_b)
    p_false = 1.0 - _poisson_cdf(report_t - 1, mu_d)
    return ReadoutError(
        p_miss_bright=p_miss,
        p_false_dark=p_false,
        recommended_threshold=best_t,
        distinguishable=mu_b > mu_d,
        mu_bright=mu_b,
        mu_dark=mu_d,
        scan=tuple(scan),
    )

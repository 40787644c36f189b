"""ocmkit: design and simulation toolkit for optical channel mapping chips.

Models a 3D-waveguide photonic chip that routes a 1D array of optical
ports onto an arbitrary 2D lattice of target sites: fundamental-mode
physics of the written waveguides, evanescent coupling and crosstalk,
route synthesis under clearance and bend constraints, multi-tone
acousto-optic addressing, and photon-collection link budgets.
"""

__version__ = "0.1.0"

from .errors import InputError, NumericError, OcmkitError
from .optics import (
    CouplingModel,
    ModeProfile,
    WaveguideSpec,
    coupling_constant,
    field_overlap,
    fit_exponential,
    gaussian_coupling_efficiency,
    mode_field_diameter,
    propagation_transmission,
    solve_mode,
    v_number,
)
from .crosstalk import (
    CrosstalkMatrix,
    CrosstalkMetrics,
    matrix_metrics,
    propagate,
    transfer_matrix,
    two_guide_crosstalk,
)
from .routing import (
    FacetLayout,
    RouteConstraints,
    RoutePlan,
    ValidationReport,
    assign,
    capacity,
    generate_paths,
    make_facets,
    validate,
)
from .aod import (
    CalibrationResult,
    Deflector,
    IntensityReadout,
    Tone,
    TonePlan,
    calibrate_uniformity,
    intermod_spectrum,
    plan_tones,
    render_pattern,
    simulate_intensities,
)
from .linkbudget import (
    LinkBudget,
    ReadoutError,
    collection_fraction,
    db_to_fraction,
    fraction_to_db,
    readout_error,
)

__all__ = [
    "CalibrationResult",
    "CouplingModel",
    "CrosstalkMatrix",
    "CrosstalkMetrics",
    "Deflector",
    "FacetLayout",
    "InputError",
    "IntensityReadout",
    "LinkBudget",
    "ModeProfile",
    "NumericError",
    "OcmkitError",
    "ReadoutError",
    "RouteConstraints",
    "RoutePlan",
    "Tone",
    "TonePlan",
    "ValidationReport",
    "WaveguideSpec",
    "assign",
    "calibrate_uniformity",
    "capacity",
    "collection_fraction",
    "coupling_constant",
    "db_to_fraction",
    "field_overlap",
    "fit_exponential",
    "fraction_to_db",
    "gaussian_coupling_efficiency",
    "generate_paths",
    "intermod_spectrum",
    "make_facets",
    "matrix_metrics",
    "mode_field_diameter",
    "plan_tones",
    "propagate",
    "propagation_transmission",
    "readout_error",
    "render_pattern",
    "simulate_intensities",
    "solve_mode",
    "transfer_matrix",
    "two_guide_crosstalk",
    "v_number",
    "validate",
]

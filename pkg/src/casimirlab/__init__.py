"""Casimir-force computation and virtual sphere-plate force experiments."""

__version__ = "0.1.0"

from .materials import (  # noqa: E402
    EV_TO_RAD_S,
    IDEAL_METAL,
    VACUUM,
    Composite,
    Drude,
    LorentzPole,
    LorentzPoles,
    MaterialLibrary,
    TabulatedLoss,
    eval_epsilon,
    ingest_nk_table,
    kk_to_imag_axis,
    static_response,
)
from .lifshitz import (  # noqa: E402
    LayeredMirror,
    Layer,
    MatsubaraGrid,
    QuadratureSpec,
    half_space,
    plate_plate_free_energy,
    plate_plate_pressure,
    reflection_coefficients,
    sphere_plate_force,
    sphere_plate_force_gradient,
)
from .rig import RigConfig, paper_scale, simulate_run, simulate_series  # noqa: E402
from .analysis import compare_pairs, ensemble_statistics, fit_calibration  # noqa: E402

__all__ = [
    "__version__",
    "EV_TO_RAD_S",
    "IDEAL_METAL",
    "VACUUM",
    "Composite",
    "Drude",
    "LorentzPole",
    "LorentzPoles",
    "MaterialLibrary",
    "TabulatedLoss",
    "eval_epsilon",
    "ingest_nk_table",
    "kk_to_imag_axis",
    "static_response",
    "LayeredMirror",
    "Layer",
    "MatsubaraGrid",
    "QuadratureSpec",
    "half_space",
    "plate_plate_free_energy",
    "plate_plate_pressure",
    "reflection_coefficients",
    "sphere_plate_force",
    "sphere_plate_force_gradient",
    "RigConfig",
    "paper_scale",
    "simulate_run",
    "simulate_series",
    "compare_pairs",
    "ensemble_statistics",
    "fit_calibration",
]

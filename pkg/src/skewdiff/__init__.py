"""Skew-product diffusion over translation and Euclidean groups driven by
Pomeau-Manneville intermittency maps."""

__version__ = "0.1.0"

from .dynamics import ObservableSpec, PMParams, eval_observable, pm_orbit, pm_step  # noqa: E402
from .ensemble import (  # noqa: E402
    EnsembleResult,
    SimulationConfig,
    TrajectoryRecord,
    derive_seed,
    run_ensemble,
    run_trajectory,
    sample_initial_condition,
)
from .groups import (  # noqa: E402
    SO2,
    SO3,
    SkewProductState,
    regular_translation_even,
    regular_translation_odd,
    renormalize_rotation,
    so3_exp,
    step_anisotropic,
    step_e2,
    step_e3,
)
from .stats import (  # noqa: E402
    clt_normality,
    detrend,
    estimate_drift,
    hill_estimator,
    laminar_segments,
    scaling_exponent,
)

__all__ = [
    "__version__",
    "PMParams",
    "ObservableSpec",
    "pm_step",
    "pm_orbit",
    "eval_observable",
    "SO2",
    "SO3",
    "SkewProductState",
    "step_anisotropic",
    "step_e2",
    "step_e3",
    "so3_exp",
    "renormalize_rotation",
    "regular_translation_even",
    "regular_translation_odd",
    "SimulationConfig",
    "TrajectoryRecord",
    "EnsembleResult",
    "derive_seed",
    "sample_initial_condition",
    "run_trajectory",
    "run_ensemble",
    "estimate_drift",
    "detrend",
    "scaling_exponent",
    "hill_estimator",
    "laminar_segments",
    "clt_normality",
]

"""Numerics for the conformally invariant logarithmic energy on the n-sphere:
spectral multipliers, conformal-map machinery, the log-Sobolev deficit, and
moving-spheres diagnostics."""

from .conformal import (
    ConformalMap,
    ExtremizerParams,
    LiftedInversion,
    LiftedReflection,
    Moebius,
    PoleError,
    SigmaRegion,
    antisymmetry_defect,
    apply_map,
    bubble_to_zeta,
    extremizer,
    in_sigma,
    inverse,
    inverse_stereographic,
    jacobian,
    kernel_l,
    map_from_json,
    map_to_json,
    pullback,
    pullback_to_plane,
    region_of,
    sample_region,
    stereographic,
    zeta_to_bubble,
)
from .dynamics import (
    FitResult,
    FlowConfig,
    FlowResult,
    MovingSphereReport,
    critical_alpha,
    critical_lambda,
    deficit_gradient,
    deficit_value,
    fit_extremizer,
    minimize_deficit,
    moving_sphere_profile,
    random_positive_init,
)
from .energy import (
    DeficitReport,
    ELResidual,
    beckner_deficit,
    beckner_rhs,
    constant_Cn,
    el_residual,
    energy_direct,
    energy_direct_extrapolated,
    energy_spectral,
    gibbs_gap,
    verify_conf_E,
    verify_conf_H,
)
from .harmonics import (
    HarmonicCoeffs,
    MultiplierTable,
    analyze,
    apply_H,
    apply_P2s,
    as_evaluable,
    evaluate_at,
    h_multiplier_table,
    multiplier_A2s,
    multiplier_H,
    multiplier_P2s,
    pv_apply_H,
    random_coeffs,
    synthesize,
)
from .specfun import digamma, gamma, ln_gamma, zonal_basis
from .sphere import (
    GridFunction,
    QuadratureGrid,
    build_grid,
    chordal_distance,
    integrate,
    north_pole,
    south_pole,
    sphere_area,
    sphere_point,
)

__version__ = "0.1.0"

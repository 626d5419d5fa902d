"""Heat-equation layer potentials on parametrized planar boundaries.

Nystrom discretization of the single and double layer heat potentials
pulled back to a fixed reference circle, with exact-in-time slab
integration, off-boundary field evaluation, collar-chart (tubular
neighborhood) machinery for weak-form and transmission verification,
and finite-difference probes of the smooth dependence of the boundary
operators on the parametrization.
"""

from .analysis import (
    HolderEstimate,
    ShapeDerivativeResult,
    ShapePath,
    parabolic_norm,
    shape_derivative,
    smoothness_report,
    superpose,
)
from .geometry import (
    BoundaryMap,
    GeometryError,
    ReferenceCircle,
    ShapeFileError,
    TubularExtension,
    classify_point,
    curvature_ratio,
    extend,
    load_shape,
    normal_of_map,
    pullback_normal,
    save_shape,
    sigma_tilde,
)
from .kernels import (
    KernelParams,
    eval_grad_s,
    eval_s,
    expint_e1,
    flatness_probe,
    slab_integral_s,
)
from .potentials import (
    BoundaryOperatorMatrix,
    ExtrapolationError,
    NearBoundaryWarning,
    OPERATOR_KINDS,
    SpaceTimeDensity,
    assemble,
    boundary_value_extrapolate,
    double_layer_eval,
    field_at_points,
    identity_crosscheck,
    jump_probe,
    single_layer_eval,
    single_layer_grad,
)
from .pullback import (
    AnnulusField,
    TransmissionResiduals,
    WeakPair,
    b_omega,
    energy_monitor,
    layer_annulus_fields,
    shell_operator,
    transmission_verify,
    weak_heat_residual,
)
from .quadrature import (
    NonUniformTimeGrid,
    SpaceGrid,
    TimeGrid,
    convolve,
    norm_bound_probe,
    toeplitz_check,
)

__version__ = "0.1.0"

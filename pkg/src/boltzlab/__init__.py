"""boltzlab: desk-scale numerics for the cutoff Boltzmann equation near a
travelling local Maxwellian -- mild-form evolution, L^p diagnostics over the
whole exponent range, and numerical verification of the stability estimates.
"""

__version__ = "0.1.0"

from .phase import (
    DistributionField,
    KernelSpec,
    MaxwellianParams,
    PhaseGrid,
    SandwichReport,
    constant_kernel,
    cos_power_kernel,
    lp_norm,
    maxwellian_eval,
    maxwellian_field,
    random_sandwiched_field,
    sandwich_check,
    weighted_lp_norm,
)
from .collision import (
    CollisionPair,
    DiagonalSingularityError,
    QuadratureScheme,
    RegularizedKernelParams,
    collide_pair,
    kernel_eval,
    q_full,
    q_gain,
    q_loss,
    regularized_kernel_eval,
)
from .transport import (
    MildIntegratorConfig,
    evolve,
    g_transform,
    mild_step,
    sharp_transform,
    unsharp_transform,
)
from .estimates import (
    BoundCheckRecord,
    ExponentPlan,
    FieldTrajectory,
    EstimateConstants,
    compute_constants,
    exponent_plan,
    g_infinity,
    verify_difference_stability,
    verify_gronwall,
    verify_kernel_maxwellian_decay,
    verify_gain_functional_bound,
    verify_sup_functional_bound,
    verify_ray_gaussian_bound,
)

__all__ = [name for name in dir() if not name.startswith("_")]

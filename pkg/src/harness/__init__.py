"""Heat-bath lattice dynamics with external data.

Forward simulation of the continuous-time single-site update process on
finite boxes, exact backward reconstruction of the same trajectories,
solvers for the pinned harmonic profile, closed-form Gaussian laws of the
box measures, and a verification harness that checks all of them against
each other.
"""

__version__ = "0.1.0"

from .errors import (
    AbsorptionOccurred,
    AsymmetricKernel,
    BoundViolated,
    CheckFailed,
    ConfigInvalid,
    DomainMismatch,
    FactorizationFailure,
    HarnessError,
    NoConvergence,
    NonStochastic,
    RangeViolation,
    SelfLoop,
    SiteOutsideBox,
    SizeLimit,
    WalkCapExceeded,
)
from .lattice import (
    Box,
    BoxAdjacency,
    HeightField,
    Kernel,
    ModelParams,
    boundary_shell,
    field_from_json,
    field_to_json,
    kernel_from_json,
    kernel_to_json,
    validate_kernel,
    weighted_norm,
)
from .hamiltonian import (
    EnergyBreakdown,
    conditional_law,
    energy,
    energy_delta,
    gradient,
    local_mean,
)
from .ground_state import (
    GroundStateResult,
    KernelRow,
    decay_bound_check,
    ground_state_infinite,
    kernel_row_exact,
    kernel_row_mc,
    solve_exact,
    solve_jacobi,
)
from .dynamics import (
    Epoch,
    EpochList,
    generate_epochs,
    heat_bath_step,
    run_epochs,
    sample_stationary,
    simulate,
    trajectory,
)
from .dual import (
    WeightTable,
    backward_weights,
    noise_variance_accumulator,
    reconstruct,
    reconstruct_all,
    survival_mass,
)
from .gibbs import (
    GaussianSpec,
    build_gaussian,
    conditional_check,
    log_density,
    sample_exact,
)
from .verify import (
    CheckReport,
    check_beta_scaling,
    check_ergodic_forgetting,
    check_stationary_law,
    check_thermo_limit,
    check_variance_bound,
)

"""Numerical laboratory for the prescribed Q-curvature problem in four dimensions.

Two exactly known model geometries (the flat unit torus and the round
4-sphere with zonal fields) carry spectral discretizations of the Paneitz
operator.  On top of them the package evaluates the functionals II and
II_eps, their minimizers, Green function expansions, bubble and capacity
energies, the threshold Lambda and the existence criteria.
"""

__version__ = "0.1.0"

from .geometry import (  # noqa: E402
    Field,
    ManifoldModel,
    integrate,
    make_model,
    random_field,
    s3_moment,
    s3_quadrature,
)
from .paneitz import (  # noqa: E402
    K_CRITICAL,
    apply_paneitz,
    conformal_q,
    energy_pairing,
    paneitz_multiplier,
    q_field,
    solve_paneitz,
)
from .greenfn import GreenExpansion, expansion_fit, green_conformal_check, green_function  # noqa: E402
from .variational import (  # noqa: E402
    II_eps_gradient,
    II_eps_value,
    II_value,
    MinimizeResult,
    adams_check,
    blowup_diagnostics,
    minimize_II_eps,
)
from .blowup import (  # noqa: E402
    CapacityProblem,
    TaylorData,
    TestFnParams,
    bubble_energy,
    bubble_mass,
    bubble_profile,
    capacity_oracle,
    capacity_solve,
    criterion_conformal,
    criterion_main2,
    lambda_const,
    lambda_map,
    test_function,
    testfn_mass_expansion,
)

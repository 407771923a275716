"""Log-gas equilibrium measures, crowding rate functions and samplers."""

__version__ = "0.1.0"

from .errors import LogGasError
from .measures import (
    EmpiricalMeasure,
    Grid,
    GridMeasure,
    Potential,
    bl_distance,
    empirical_from_sample,
    measure_from_density,
    measure_of_region,
    uniform_measure,
)
from .energy import (
    EnergyReport,
    gaussian_smooth,
    log_energy,
    log_potential,
    rate_i_beta,
)
from .geometry import (
    Disk,
    EmptyRegion,
    IntervalUnion,
    Polygon,
    default_delta0,
    m1_star_check,
    minkowski_content,
    tube_area,
)
from .equilibrium import (
    EquilibriumSolution,
    RateProfile,
    gamma_profile,
    obstacle_identity_check,
    solve_constrained,
    solve_equilibrium,
    verify_euler_lagrange,
)
from .construction import (
    ConstructedPoints,
    SquareDensity,
    construct_points,
    empirical_energy,
    verify_separation,
    weak_convergence_check,
)
from .sampler import (
    CrowdingStats,
    EnsembleSample,
    crowding_count,
    crowding_distribution,
    log_density,
    mh_sample,
    tridiagonal_sample,
    tridiagonal_stream,
)
from .harness import (
    LdpExperiment,
    partition_asymptote_report,
    run_ldp_experiment,
)

__all__ = [name for name in dir() if not name.startswith("_")]

"""levykin: simulation and verification toolkit for kinetic processes
driven by rotationally invariant alpha-stable noise.

The state is (position, velocity); noise enters the velocity only, and the
process can be killed on leaving a spatial domain O. Modules:

  stable_noise     increments, tail/threshold decomposition, CF checks
  drift_models     drift fields, structural assumptions, (a, b) admissibility
  integrator       jump-adapted trajectory scheme, envelopes, exports
  killed_process   domains, exit times, survival, velocity escape
  lyapunov         coercive Lyapunov functions and generator evaluation
  reachability     jump-cascade planning and hitting-probability estimates
  qsd_estimation   Fleming-Viot, conditioned laws, decay rate, eigenfunction
  spectral_ulam    Ulam matrices, eigen data, Duhamel consistency check
  cli              the `levykin` command-line runner

All randomness flows from a master seed through named substreams,
SeedSequence(entropy=seed, spawn_key=path) -> Philox, with string keys
hashed by crc32; see levykin.rng.
"""

__version__ = "0.1.0"

from .drift_models import (
    AdmissibleAB,
    AssumptionReport,
    DriftModel,
    GridSpec,
    PGradParams,
    admissible_ab,
    builtin_drift,
    check_assumptions,
)
from .grids import PhaseGrid
from .integrator import (
    TrajectoryBatch,
    box_probe_points,
    displacement_probe,
    effective_envelope_constant,
    euler_jump_step,
    gronwall_envelope,
    simulate,
)
from .killed_process import (
    Domain,
    ExitRecord,
    empirical_marginal,
    exit_time,
    killed_expectation,
    stream_killed,
    survival_curve,
    velocity_escape,
)
from .lyapunov import (
    GeneratorProbe,
    LyapunovFunction,
    QuadSpec,
    apply_generator,
    build_lyapunov,
    drift_condition_report,
    fit_growth_rate,
    supermartingale_probe,
)
from .qsd_estimation import (
    ConditionedLaw,
    FlemingViotResult,
    LambdaFit,
    ParticleEnsemble,
    PhiEstimate,
    conditioned_law,
    estimate_lambda,
    estimate_phi,
    fleming_viot,
    push_through_killed,
    tv_distance,
)
from .reachability import (
    CascadeBound,
    CascadePlan,
    GeometrySpec,
    ReachEstimate,
    cascade_probability,
    plan_cascade,
    reach_probability,
)
from .rng import RandomStream
from .spectral_ulam import (
    CompactnessDiagnostic,
    DuhamelReport,
    EigenTriple,
    UlamOperator,
    build_ulam,
    compactness_diagnostic,
    duhamel_residual,
    eigen_triple,
    lambda_ulam,
)
from .stable_noise import (
    StableNoiseSpec,
    decompose,
    empirical_cf_error,
    levy_ball_mass,
    levy_density,
    sample_increment,
    sample_increment_decomposed,
    small_second_moment,
    standard_increment,
    sup_process_tail,
    tail_mass,
)

__all__ = [name for name in dir() if not name.startswith("_")]

"""Large deviations of CEV and CIR diffusions: rate functions, tail constants,
small-noise simulation and importance-sampled tail estimation."""

__version__ = "0.1.0"

from .errors import (
    DomainError,
    NegativeControlWarning,
    ParameterError,
    SimulationError,
    UnsupportedCaseError,
    WeakConvergenceWarning,
    WeightDegeneracyWarning,
)
from .paths import (
    ControlPath,
    GridPath,
    ModelParams,
    TabulatedAlpha,
    cameron_martin_energy,
    control_from_path,
    holder_norm,
    lamperti,
)
from .rate import RateReason, RateValue, dual_optimal_control, functional_F, rate_I, rate_script_I
from .sde import (
    EnsembleSummary,
    PathEnsemble,
    SimConfig,
    check_weak_convergence_conditions,
    mean_path_ladder,
    particular_solution,
    simulate,
    simulate_functionals,
    solve_controlled_ode,
)
from .variational import (
    ConstraintKind,
    ConstraintSpec,
    VariationalConstants,
    VariationalResult,
    constant_cT,
    constant_nuT,
    minimize_rate,
    omega_root,
    terminal_minimizer,
    variational_constants,
)
from .oracles import (
    CriticalExponentResult,
    DensityPoint,
    cev_log_density,
    cev_log_survival,
    cir_critical_exponent,
    consistency_suite,
    log_bessel_I,
)
from .montecarlo import (
    Estimator,
    TailEstimate,
    TailQuery,
    append_ledger,
    entropy_lower_bound,
    estimate_tail,
    fit_tail_slope,
    girsanov_entropy,
    importance_control,
)

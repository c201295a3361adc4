"""Monte Carlo estimation of gradient outer-product matrices and their
dominant subspaces, with explicit error and sample-size certificates."""

__version__ = "0.1.0"

from .bounds import (
    BoundCertificate,
    GapInfo,
    ProblemParams,
    angle_certificate,
    bernstein_tail,
    estimate_nu,
    expectation_markov_bound,
    prior_work_samples,
    relative_error_bound,
    required_samples,
)
from .errors import (
    ArgumentError,
    ConfigError,
    DomainError,
    EigenConvergenceError,
    MatrixFormatError,
    ModelViolationError,
    TheoremViolation,
    UnsupportedSizeError,
)
from .harness import (
    ExperimentConfig,
    ExperimentReport,
    run_comparison,
    run_coverage,
    run_experiment,
    run_tightness_sweep,
)
from .perturbation import f_partition, interlacing_check, theorem_t1_check
from .sampling import (
    SampleBatch,
    SampledFunction,
    builtin_linear,
    builtin_quadratic,
    builtin_ridge_sum,
    draw_batch,
    estimate,
)
from .spectral import (
    EigenSystem,
    SubspaceBasis,
    SymmetricMatrix,
    eig_sym,
    intrinsic_dimension,
    principal_angle_sin,
    projector,
    spectral_norm,
)

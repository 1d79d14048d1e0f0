"""Matrix completion with kernel prior information, plus the transductive
complexity machinery that bounds each solver's generalization error."""

from .errors import DataError, KermitError, NumericalError
from .kernels import (
    DftKernelSpec,
    FeatureFactorization,
    KernelMatrix,
    KroneckerKernel,
    build_dft_kernel,
    factorize,
    harmonic_weights,
    kronecker_kernel,
    psd_repair,
)
from .sampling import (
    ObservationVector,
    SampleSplit,
    apply_mask,
    gather,
    scatter,
    uniform_split,
    unvec,
    vec,
)
from .solvers import (
    AlsConfig,
    CompletionEstimate,
    FactorModel,
    KkmcexModel,
    kkmcex_fit,
    kkmcex_predict,
    kmc_als_fit,
    mc_als_fit,
    objective_eval,
)
from .complexity import (
    GeBoundParams,
    HypothesisClassSpec,
    RademacherDraw,
    TrcResult,
    ge_bound,
    generalization_error,
    loss_class_trc,
    sup_correlation,
    trc_bound,
    trc_monte_carlo,
)
from .experiments import (
    ExperimentConfig,
    ExperimentResult,
    ExperimentRow,
    SyntheticInstance,
    build_experiment_kernel,
    cross_validate_mu,
    generate_synthetic,
    run_experiment,
    scale_mu,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]

"""Compressed sensing with sparse integer-valued seeded matrices.

Message-passing recovery of sparse signals from undersampled linear
measurements, built around matrices with O(1) nonzeros per row. Includes
homogeneous, block-seeded and striped ensembles, a solver with on-line
prior learning, a population-dynamics threshold analysis, and the
experiment protocols (thresholds, scaling fits, stability, timing).
"""

from .density_evolution import (
    CoupledDEResult,
    CoupledProfile,
    DEResult,
    Population,
    de_sweep,
    de_sweep_coupled,
    de_threshold,
    make_population,
    run_de,
    run_de_coupled,
)
from .embp import (
    MessageState,
    RecoveryResult,
    SolverConfig,
    em_update,
    empirical_prior,
    fa_fc,
    measurement_update,
    recover,
    recover_perturbed,
    signal_update,
)
from .ensembles import (
    EnsembleSpec,
    SparseMatrix,
    deserialize_matrix,
    generate,
    generate_block,
    generate_dense,
    generate_homogeneous,
    generate_striped,
    serialize_matrix,
)
from .errors import (
    DimensionMismatch,
    FitDegenerate,
    GridExhausted,
    InfeasibleGraph,
    InvalidPrior,
    NeverRecovered,
    NonIntegerDegree,
    ParseError,
    SizeLimit,
    SparseCSError,
    SupportFull,
    WindowTooSmall,
)
from .experiments import (
    BenchResult,
    BenchRow,
    RecoveryCurve,
    ScalingFit,
    StabilityRecord,
    ThresholdRecord,
    critical_threshold,
    perturbed_success_rate,
    recovery_probability,
    stability_limit,
    striped_spec,
    threshold_scaling,
    timing_benchmark,
)
from .signals import (
    Measurement,
    PriorParams,
    Signal,
    densify,
    load_vector,
    measure,
    sample_signal,
    sample_signal_fixed,
    save_vector,
)

__version__ = "0.1.0"

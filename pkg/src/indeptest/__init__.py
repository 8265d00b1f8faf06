"""Multivariate independence testing toolkit.

Five tests behind one result type: QHSIC (quadratic-time HSIC, permutation
null), NyHSIC and FoHSIC (linear-time feature-map HSIC, simulated eigen
null), NFSIC (adaptive witness features, permutation null), and MultiFIT
(multiscale Fisher exact tests on dyadic rank rectangles). The bench module
estimates power and runtime over repeated simulations; the cli module wraps
everything in a command-line tool.
"""

from .dataset import Dataset
from .result import TestResult
from .kernels import (
    FeatureMap,
    KernelConfig,
    gram_matrix,
    median_heuristic,
    nystrom_features,
    rff_features,
)
from .hsic import (
    ApproxNullConfig,
    NfsicConfig,
    NullSpectrum,
    approx_hsic_test,
    eigen_null_spectrum,
    feature_hsic_statistic,
    hsic_v_statistic,
    nfsic_statistic,
    nfsic_test,
    optimize_features,
    permutation_pvalue,
    qhsic_test,
    sample_eigen_null,
)
from .multifit import (
    Cuboid,
    MultiFitConfig,
    MultiFitReport,
    Table2x2,
    fisher_midp,
    holm_reject,
    multifit_test,
    rank_transform,
    table_counts,
)
from .synth import (
    GaussianSignConfig,
    SinusoidConfig,
    sample_gaussian_sign,
    sample_independent_null,
    sample_sinusoid,
)
from .bench import (
    PowerEstimate,
    RuntimeEstimate,
    estimate_power,
    load_csv,
    measure_runtime,
    run_test,
    wilson_interval,
    write_plotdata,
    write_results,
)

__version__ = "0.1.0"

__all__ = [
    "ApproxNullConfig",
    "Cuboid",
    "Dataset",
    "FeatureMap",
    "GaussianSignConfig",
    "KernelConfig",
    "MultiFitConfig",
    "MultiFitReport",
    "NfsicConfig",
    "NullSpectrum",
    "PowerEstimate",
    "RuntimeEstimate",
    "SinusoidConfig",
    "Table2x2",
    "TestResult",
    "approx_hsic_test",
    "eigen_null_spectrum",
    "estimate_power",
    "feature_hsic_statistic",
    "fisher_midp",
    "gram_matrix",
    "holm_reject",
    "hsic_v_statistic",
    "load_csv",
    "measure_runtime",
    "median_heuristic",
    "multifit_test",
    "nfsic_statistic",
    "nfsic_test",
    "nystrom_features",
    "optimize_features",
    "permutation_pvalue",
    "qhsic_test",
    "rank_transform",
    "rff_features",
    "run_test",
    "sample_eigen_null",
    "sample_gaussian_sign",
    "sample_independent_null",
    "sample_sinusoid",
    "table_counts",
    "wilson_interval",
    "write_plotdata",
    "write_results",
]

"""Rate vs generalization-error analysis for coded polynomial regression.

A source X = beta' [1, Y, ..., Y^(k-1)] + N is compressed with decoder side
information Y through the Gaussian test channel U = alpha (X + Phi); the
decoder fits the polynomial by least squares on the coded observations.  The
package provides the source and channel models, the closed-form error and
rate expressions, the information-loss density machinery for
finite-blocklength frontiers, and a reproducible experiment harness.
"""

from .errors import (
    ConfigError,
    IllConditionedDesignError,
    InfeasibleDistortionError,
    InsufficientDataError,
    InsufficientSamplesError,
    InvalidInputError,
    NumericalFailureError,
    RateLossError,
    UnsupportedModelError,
)
from .finite_blocklength import (
    GaussianCache,
    InfoLossSample,
    InfoLossSamples,
    MomentSummary,
    RateLossPoint,
    RegionConfig,
    dispersion_prob,
    estimate_moments,
    log_density_ratios,
    rate_loss_bound,
    region_curve,
    sample_info_loss,
)
from .regression import (
    GenErrorReport,
    ReplicateBatch,
    TrainedPredictor,
    conditional_cov,
    eigenvalue_margin,
    expected_gen_error,
    gen_error_conditional,
    gen_error_report,
    gen_error_upper_bound,
    min_eig_bound_check,
    ols_fit,
    ruhe_check,
    simulate_replicates,
)
from .source_model import (
    GaussianSideInfo,
    PolynomialSource,
    SampleBatch,
    UDensityRule,
    UniformSymmetric,
    density_u,
    density_v,
    design_matrix,
    features,
    moment_matrix,
    sample_pairs,
    v_support,
)
from .streams import master_stream, substream
from .test_channel import (
    RateSummary,
    TestChannelParams,
    apply,
    params_from_distortion,
    params_from_noise,
    raginsky_sqrt_bound,
    rates,
    reconstruct,
)

try:
    from importlib.metadata import version as _version

    __version__ = _version("rateloss")
except Exception:  # pragma: no cover - metadata missing in source checkouts
    __version__ = "0.1.0"

"""selectree: top-k screening of high-order interaction features over an
implicit itemset tree, with exact post-selection inference for the selected
coefficients."""

from .itemsets import (
    Dataset,
    Itemset,
    ModelConfig,
    NodeStats,
    TraversalMetrics,
    children,
    descend_stats,
    feature_column,
    node_stats,
    total_feature_count,
)
from .screening import ScreeningResult, marginal_screen, ms_bound
from .experiments import (
    PerfRow,
    StudySummary,
    SyntheticSpec,
    TrialOutcome,
    gen_synthetic,
    naive_ols_inference,
    psi_inference,
    run_fpr_study,
    run_perf_study,
    run_tpr_study,
    split_inference,
    trial_rng,
)
from .inference import (
    ActiveConstraint,
    Contrast,
    DegenerateTruncationError,
    FeatureInference,
    InferenceReport,
    InternalConsistencyError,
    SingularGramError,
    TruncationInterval,
    beta_hat,
    contrast_for_coefficient,
    infer,
    selective_interval,
    selective_pvalue,
    trunc_norm_cdf,
    truncation_points,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "Itemset",
    "ModelConfig",
    "NodeStats",
    "TraversalMetrics",
    "children",
    "descend_stats",
    "feature_column",
    "node_stats",
    "total_feature_count",
    "ScreeningResult",
    "marginal_screen",
    "ms_bound",
    "PerfRow",
    "StudySummary",
    "SyntheticSpec",
    "TrialOutcome",
    "gen_synthetic",
    "naive_ols_inference",
    "psi_inference",
    "run_fpr_study",
    "run_perf_study",
    "run_tpr_study",
    "split_inference",
    "trial_rng",
    "ActiveConstraint",
    "Contrast",
    "DegenerateTruncationError",
    "FeatureInference",
    "InferenceReport",
    "InternalConsistencyError",
    "SingularGramError",
    "TruncationInterval",
    "beta_hat",
    "contrast_for_coefficient",
    "infer",
    "selective_interval",
    "selective_pvalue",
    "trunc_norm_cdf",
    "truncation_points",
    "__version__",
]

"""Difficulty-aware calibration toolkit for embedding-space classifiers."""

from .classifier import (
    ClassifierModel,
    LossConfig,
    OptimConfig,
    entropy,
    init_model,
    load_model,
    loss_and_grad,
    predict,
    save_model,
    train,
)
from .difficulty import (
    DifficultyScores,
    average_scores,
    import_scores,
    kmeans_difficulty,
    normalize_weights,
    rank_report,
    rmd_score,
    save_scores,
    score_dataset,
)
from .embedding_store import (
    EmbeddingDataset,
    export_csv,
    import_csv,
    load_dataset,
    make_dataset,
    save_dataset,
    validate_dataset,
)
from .errors import (
    ConfigError,
    CorruptionError,
    DifficalibError,
    FitError,
    FormatError,
    ParseError,
    SingularCovarianceError,
    ValidationError,
)
from .gaussian import (
    GaussianBank,
    fit_gaussian_bank,
    load_bank,
    mahalanobis_agnostic,
    mahalanobis_class,
    save_bank,
)
from .metrics import (
    DetectionResult,
    EvalReport,
    accuracy,
    bucket_error,
    detection_metrics,
    ece,
    eval_report,
    risk_coverage,
    uncertainty_scores,
)
from .synthetic import (
    MixtureSpec,
    generate_mixture,
    inject_feature_noise,
    inject_label_noise,
)

__version__ = "0.1.0"

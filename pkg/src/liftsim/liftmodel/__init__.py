"""Action-rate lift prediction: samples, features, boosted trees, calibration."""

from .features import (  # noqa: F401
    MOST_RECENT_BUCKET,
    NEVER_BUCKET,
    FeatureExtractor,
    FeatureSchema,
    UserHistory,
    counterfactual_features,
    extract_features,
    fold_context,
)
from .sampling import SamplingConfig, TrainingSample, generate_samples  # noqa: F401
from .gbdt import GBDTModel, GBDTParams, train_gbdt  # noqa: F401
from .isotonic import IsotonicMap, fit_isotonic  # noqa: F401
from .pipeline import (  # noqa: F401
    CalibratedModel,
    CalibrationReport,
    ModelBidEstimator,
    ModelParams,
    predict_lift,
    train_calibrated_model,
)

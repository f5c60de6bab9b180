"""End-to-end lift-model training and prediction.

Training splits samples by user into a fit set and a holdout, trains
the boosted ensemble on the fit set with negatives downsampled to a
configured ratio, corrects the score back to the full prior, and fits
the isotonic calibration on the untouched holdout. The calibrated
model predicts an action rate for any feature vector; the lift estimate
for an ad is the predicted rate with one extra impression folded in
minus the predicted rate as-is.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..events import TimelineEvent
from ..fileio import atomic_write_text
from ..market import BidRequest, GroundTruthUser
from ..seeds import rng_for
from .features import (
    FeatureSchema, UserHistory, counterfactual_features, extract_from_history,
    fold_context,
)
from .gbdt import GBDTModel, GBDTParams, TrainingError, train_gbdt
from .isotonic import IsotonicMap, fit_isotonic
from .sampling import TrainingSample, samples_to_matrix

MODEL_FORMAT = "liftsim.model"
MODEL_VERSION = 1


class SchemaMismatch(ValueError):
    """Raised when features do not match the model's training schema."""


@dataclass(frozen=True)
class ModelParams:
    gbdt: GBDTParams = field(default_factory=GBDTParams)
    neg_per_pos: float = 4.0
    holdout_fraction: float = 0.35

    def __post_init__(self) -> None:
        if self.neg_per_pos <= 0:
            raise ValueError("neg_per_pos must be positive")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ValueError("holdout_fraction must be in (0, 1)")


@dataclass
class CalibratedModel:
    """Tree ensemble plus isotonic map plus training provenance."""

    schema: FeatureSchema
    gbdt: GBDTModel
    isotonic: IsotonicMap
    prior_logit_shift: float
    feature_window_seconds: int
    metadata: dict = field(default_factory=dict)

    @property
    def schema_digest(self) -> str:
        return self.schema.digest()

    def _check(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.schema.n_features:
            raise SchemaMismatch(
                f"expected {self.schema.n_features} features "
                f"(schema {self.schema_digest}), got {X.shape[1]}")
        return X

    def predict_ar(self, X: np.ndarray) -> np.ndarray:
        """Calibrated action-rate predictions in [0, 1]."""
        X = self._check(X)
        raw = self.gbdt.raw_score(X) + self.prior_logit_shift
        prob = 1.0 / (1.0 + np.exp(-raw))
        return np.asarray(self.isotonic.apply(prob))

    def predict_ar_one(self, features: np.ndarray) -> float:
        return float(self.predict_ar(features[None, :])[0])

    def predict_lift_one(self, features: np.ndarray, advertiser: str) -> float:
        """Estimated rate change from one more impression of ``advertiser``.

        May be negative; clamping is a bidding decision, not a modeling
        one.
        """
        shown = counterfactual_features(features, advertiser, self.schema)
        pair = self.predict_ar(np.stack([shown, features]))
        return float(pair[0] - pair[1])

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "schema": self.schema.to_dict(),
            "schema_digest": self.schema_digest,
            "feature_window_seconds": self.feature_window_seconds,
            "prior_logit_shift": self.prior_logit_shift,
            "gbdt": self.gbdt.to_dict(),
            "isotonic": self.isotonic.to_dict(),
            "metadata": self.metadata,
        }

    def save(self, path: str | Path) -> None:
        atomic_write_text(path, json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "CalibratedModel":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if data.get("format") != MODEL_FORMAT or data.get("version") != MODEL_VERSION:
            raise ValueError(f"not a {MODEL_FORMAT} v{MODEL_VERSION} file")
        schema = FeatureSchema.from_dict(data["schema"])
        model = cls(
            schema=schema,
            gbdt=GBDTModel.from_dict(data["gbdt"]),
            isotonic=IsotonicMap.from_dict(data["isotonic"]),
            prior_logit_shift=float(data["prior_logit_shift"]),
            feature_window_seconds=int(data["feature_window_seconds"]),
            metadata=data.get("metadata", {}),
        )
        if model.schema_digest != data["schema_digest"]:
            raise SchemaMismatch("stored schema digest does not match schema")
        return model


def predict_lift(model: CalibratedModel, features: np.ndarray, advertiser: str) -> float:
    """Module-level convenience for :meth:`CalibratedModel.predict_lift_one`."""
    return model.predict_lift_one(features, advertiser)


@dataclass
class CalibrationReport:
    """Equal-count decile calibration of predicted vs empirical rates."""

    deciles: list[dict]
    n_holdout: int
    isotonic_degenerate: bool

    def all_within(self, rel: float = 0.10, se_mult: float = 2.0) -> bool:
        return all(d["within"] for d in self.deciles)

    def as_dict(self) -> dict:
        return {"deciles": self.deciles, "n_holdout": self.n_holdout,
                "isotonic_degenerate": self.isotonic_degenerate}


def build_calibration_report(
    predictions: np.ndarray,
    labels: np.ndarray,
    rel: float = 0.10,
    se_mult: float = 2.0,
    bins: int = 10,
) -> CalibrationReport:
    order = np.argsort(predictions, kind="stable")
    edges = np.linspace(0, len(order), bins + 1).astype(int)
    deciles = []
    for b in range(bins):
        idx = order[edges[b]:edges[b + 1]]
        if idx.size == 0:
            continue
        mean_pred = float(predictions[idx].mean())
        rate = float(labels[idx].mean())
        se = math.sqrt(max(rate * (1.0 - rate), 1e-12) / idx.size)
        bound = rel * rate + se_mult * se
        deciles.append({
            "decile": b,
            "n": int(idx.size),
            "mean_predicted": mean_pred,
            "action_rate": rate,
            "abs_error": abs(mean_pred - rate),
            "bound": bound,
            "within": abs(mean_pred - rate) <= bound,
        })
    return CalibrationReport(deciles=deciles, n_holdout=len(labels),
                             isotonic_degenerate=False)


def train_calibrated_model(
    samples: list[TrainingSample],
    schema: FeatureSchema,
    params: ModelParams | None = None,
    seed: int = 0,
    feature_window_seconds: int = 7 * 86_400,
) -> tuple[CalibratedModel, CalibrationReport]:
    """Train, prior-correct and calibrate; returns the model and its report.

    The holdout is split by user, not by sample, so no user contributes
    to both the ensemble fit and the calibration.
    """
    params = params or ModelParams()
    if not samples:
        raise TrainingError("no samples to train on")
    users = sorted({s.user_id for s in samples})
    rng = rng_for(seed, "model-split")
    shuffled = list(users)
    rng.shuffle(shuffled)
    n_holdout = max(1, int(round(params.holdout_fraction * len(shuffled))))
    holdout_users = set(shuffled[:n_holdout])

    fit_samples = [s for s in samples if s.user_id not in holdout_users]
    holdout_samples = [s for s in samples if s.user_id in holdout_users]
    if not fit_samples or not holdout_samples:
        raise TrainingError("user split left an empty side; need more users")

    X_fit, y_fit = samples_to_matrix(fit_samples)
    pos_idx = np.nonzero(y_fit > 0)[0]
    neg_idx = np.nonzero(y_fit <= 0)[0]
    if pos_idx.size == 0 or neg_idx.size == 0:
        raise TrainingError("training needs both positive and negative samples")

    keep_neg = min(neg_idx.size, int(round(params.neg_per_pos * pos_idx.size)))
    ds_rng = rng_for(seed, "model-downsample")
    kept_neg = np.sort(ds_rng.choice(neg_idx, size=keep_neg, replace=False))
    rows = np.sort(np.concatenate([pos_idx, kept_neg]))
    # Correcting the downsampled prior back to the full one is a constant
    # logit shift of log(kept / all) on the negatives' side.
    prior_shift = float(np.log(keep_neg / neg_idx.size)) if keep_neg < neg_idx.size else 0.0

    gbdt = train_gbdt(X_fit[rows], y_fit[rows], params.gbdt, seed=seed)

    X_cal, y_cal = samples_to_matrix(holdout_samples)
    raw = gbdt.raw_score(X_cal) + prior_shift
    prob = 1.0 / (1.0 + np.exp(-raw))
    isotonic = fit_isotonic(prob, y_cal)

    model = CalibratedModel(
        schema=schema,
        gbdt=gbdt,
        isotonic=isotonic,
        prior_logit_shift=prior_shift,
        feature_window_seconds=feature_window_seconds,
        metadata={
            "seed": seed,
            "n_samples": len(samples),
            "n_fit": len(fit_samples),
            "n_holdout_samples": len(holdout_samples),
            "n_holdout_users": len(holdout_users),
            "holdout_users": sorted(holdout_users),
            "positives_fit": int(pos_idx.size),
            "negatives_kept": int(keep_neg),
            "gbdt_params": params.gbdt.to_dict(),
        },
    )
    report = build_calibration_report(model.predict_ar(X_cal), y_cal)
    report.isotonic_degenerate = isotonic.degenerate
    return model, report


class ModelBidEstimator:
    """Streaming (p, lift) estimates for model-driven bidding.

    Observes the simulator's events as they happen, maintains rolling
    per-user histories, and prices each request from calibrated
    predictions: the action rate assuming the impression is shown, and
    the counterfactual lift of showing it.
    """

    def __init__(
        self,
        model: CalibratedModel,
        population: list[GroundTruthUser],
        advertiser: str,
    ) -> None:
        self.model = model
        self.advertiser = advertiser
        self._population = population
        self._histories = [UserHistory() for _ in population]
        self._index = {u.user_id: i for i, u in enumerate(population)}

    def observe(self, event: TimelineEvent) -> None:
        idx = self._index.get(event.user_id)
        if idx is not None:
            self._histories[idx].observe(event)

    def estimate(self, user_index: int, ts: int, topic_id: int) -> tuple[float, float]:
        user = self._population[user_index]
        features = extract_from_history(
            self._histories[user_index], user.behavior_profile, ts,
            self.model.feature_window_seconds, self.model.schema)
        request = BidRequest(request_id="", user_id=user.user_id,
                             timestamp=ts, topic_id=topic_id)
        folded = fold_context(features, request, self.model.schema)
        shown = counterfactual_features(folded, self.advertiser, self.model.schema)
        pair = self.model.predict_ar(np.stack([shown, folded]))
        return float(pair[0]), float(pair[0] - pair[1])


def lift_recovery_spearman(
    model: CalibratedModel,
    features_by_user: dict[str, np.ndarray],
    true_lift_by_user: dict[str, float],
    advertiser: str,
) -> float:
    """Spearman rank correlation of predicted vs true lift across users."""
    from scipy.stats import spearmanr

    users = sorted(features_by_user)
    base = np.stack([features_by_user[u] for u in users])
    shown = np.stack([
        counterfactual_features(features_by_user[u], advertiser, model.schema)
        for u in users
    ])
    predicted = model.predict_ar(shown) - model.predict_ar(base)
    truth = np.array([true_lift_by_user[u] for u in users])
    rho = spearmanr(predicted, truth).statistic
    return float(rho)

"""scikit-learn style facade over the training and inference pipeline.

MattingEstimator(...).fit(samples).predict(inputs) wraps preset/config
handling, the trainer and the inference engine in the familiar estimator
protocol, so the model slots into sklearn tooling (cloning, grid search
over hyperparameters, pipelines that end in a predictor).
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator

from . import checkpoint as ckpt
from .config import preset as load_preset
from .data import MattingSample, generate_trimap
from .decoder import build_model
from .inference import GRID_SAMPLE, NORMAL, infer_alpha
from .metrics import UNKNOWN_ONLY, evaluate
from .planes import MattingInput, Plane, make_rng
from .train import Trainer


class MattingEstimator(BaseEstimator):
    """Trimap-based alpha matting as a fit/predict estimator.

    Parameters mirror RunConfig; None means "use the preset value". X for
    fit is a list of MattingSample (or a dataset root path); X for predict
    is a MattingInput / (image, trimap) pair or a list of them.
    """

    def __init__(self, preset: str = "tiny", steps: int = 200,
                 batch_size: int | None = None, crop_size: int | None = None,
                 base_lr: float | None = None, weight_decay: float | None = None,
                 augment: bool = True, seed: int = 0):
        self.preset = preset
        self.steps = steps
        self.batch_size = batch_size
        self.crop_size = crop_size
        self.base_lr = base_lr
        self.weight_decay = weight_decay
        self.augment = augment
        self.seed = seed

    def _resolved_config(self):
        cfg = load_preset(self.preset)
        overrides = {}
        for field in ("batch_size", "crop_size", "base_lr", "weight_decay"):
            value = getattr(self, field)
            if value is not None:
                overrides[field] = value
        return replace(cfg, seed=self.seed, **overrides)

    def fit(self, X, y=None):
        """Trains from scratch on matting samples; y is ignored."""
        samples = self._as_samples(X)
        cfg = self._resolved_config()
        model = build_model(cfg.backbone, seed=cfg.seed)
        trainer = Trainer(model, cfg)
        trainer.run(samples, steps=self.steps, do_augment=self.augment)
        self.config_ = cfg
        self.trainer_ = trainer
        self.model_ = model
        return self

    def predict(self, X, strategy: str = NORMAL) -> list[np.ndarray]:
        """Returns one (H, W) float32 alpha array per input."""
        self._check_fitted()
        if strategy == "grid":
            strategy = GRID_SAMPLE
        out = []
        for item in self._as_inputs(X):
            alpha = infer_alpha(self.model_, item.image, item.trimap, strategy)
            out.append(alpha.data[..., 0])
        return out

    def score(self, X, y=None) -> float:
        """Negative mean unknown-region SAD over samples (higher is better)."""
        self._check_fitted()
        samples = self._as_samples(X)
        rng = make_rng(self.seed)
        total = 0.0
        for sample in samples:
            trimap = sample.trimap or generate_trimap(sample.alpha, rng=rng)
            pred = self.predict(MattingInput(sample.composite(), trimap))[0]
            total += evaluate(pred, sample.alpha.data[..., 0],
                              trimap.data[..., 0], UNKNOWN_ONLY).sad
        return -total / max(1, len(samples))

    def save(self, path) -> None:
        self._check_fitted()
        ckpt.save_model(path, self.model_, self.config_)

    @classmethod
    def from_checkpoint(cls, path) -> "MattingEstimator":
        model, cfg, _ = ckpt.load_model(path)
        est = cls(seed=cfg.seed)
        est.config_ = cfg
        est.model_ = model
        est.trainer_ = None
        return est

    def _check_fitted(self) -> None:
        if not hasattr(self, "model_"):
            raise RuntimeError("estimator is not fitted; call fit() or "
                               "from_checkpoint() first")

    @staticmethod
    def _as_samples(X) -> list[MattingSample]:
        if isinstance(X, (str,)) or hasattr(X, "__fspath__"):
            from .data import ingest_dataset
            return list(ingest_dataset(X))
        if isinstance(X, MattingSample):
            return [X]
        return list(X)

    @staticmethod
    def _as_inputs(X) -> list[MattingInput]:
        def one(item) -> MattingInput:
            if isinstance(item, MattingInput):
                return item
            if isinstance(item, tuple) and len(item) == 2:
                image, trimap = item
                if isinstance(image, np.ndarray):
                    image = Plane(image)
                if isinstance(trimap, np.ndarray):
                    trimap = Plane(trimap)
                return MattingInput(image, trimap)
            raise TypeError("predict expects MattingInput or (image, trimap)")

        if isinstance(X, (MattingInput, tuple)):
            return [one(X)]
        return [one(item) for item in X]

"""Trimap-driven image matting with a windowed/global vision transformer.

Public surface: core planes and configs, the matting model, losses,
metrics, the analytical cost model, inference, training, checkpoints, the
sklearn-style estimator, the CLI and the HTTP service.
"""

from .config import (
    AugmentConfig,
    BackboneConfig,
    RunConfig,
    attention_schedule,
    load_toml,
    preset,
    schedule_with_globals,
)
from .costmodel import (
    CostReport,
    MemoryReport,
    attention_flops,
    attention_memory,
    inference_memory,
    model_flops,
    model_params,
)
from .data import (
    MattingSample,
    augment,
    build_synthetic_dataset,
    composite,
    generate_trimap,
    ingest_dataset,
    synthetic_samples,
)
from .decoder import MattingModel, build_model
from .estimator import MattingEstimator
from .inference import GRID_SAMPLE, NORMAL, InferenceRequest, infer, infer_alpha
from .losses import (
    LossBreakdown,
    gradient_penalty_loss,
    laplacian_loss,
    laplacian_pyramid,
    separate_l1,
    total_loss,
)
from .metrics import MetricsReport, conn_metric, evaluate, grad_metric, mse, sad
from .planes import MattingInput, Plane, make_rng, validate_matting_input
from .train import GradCheckResult, Trainer, grad_check, layerwise_multipliers, lr_at
from .checkpoint import init_from_pretrained, load_model, save_model

__version__ = "0.1.0"

__all__ = [
    "AugmentConfig", "BackboneConfig", "RunConfig", "attention_schedule",
    "load_toml", "preset", "schedule_with_globals",
    "CostReport", "MemoryReport", "attention_flops", "attention_memory",
    "inference_memory", "model_flops", "model_params",
    "MattingSample", "augment", "build_synthetic_dataset", "composite",
    "generate_trimap", "ingest_dataset", "synthetic_samples",
    "MattingModel", "build_model", "MattingEstimator",
    "GRID_SAMPLE", "NORMAL", "InferenceRequest", "infer", "infer_alpha",
    "LossBreakdown", "gradient_penalty_loss", "laplacian_loss",
    "laplacian_pyramid", "separate_l1", "total_loss",
    "MetricsReport", "conn_metric", "evaluate", "grad_metric", "mse", "sad",
    "MattingInput", "Plane", "make_rng", "validate_matting_input",
    "GradCheckResult", "Trainer", "grad_check", "layerwise_multipliers", "lr_at",
    "init_from_pretrained", "load_model", "save_model",
]

"""Instance-segmentation evaluation metrics and panoptic mask-fusion toolkit."""

from .bilinear import resize_bilinear
from .core import (
    MASK_RES,
    BinaryMask,
    BoundingBox,
    DimensionMismatchError,
    FeatureMap,
    InstanceMap,
    InstancePrediction,
    dice_pair,
    extract_instances,
    iou,
)
from .fusion import (
    LossComponents,
    LossWeights,
    RoiPrediction,
    confidence,
    consistency_loss,
    consistency_loss_grad,
    mask_quality_target,
    quality_input_fusion,
    raff,
    raff_attention_grad,
    sigmoid_map,
    total_loss,
)
from .inference import (
    InferenceConfig,
    ScoredMask,
    filter_by_score,
    paste_mask,
    resolve_overlaps,
    run_inference_fusion,
)
from .io_formats import (
    DatasetPair,
    PredictionSet,
    read_label_png,
    read_predictions_json,
    write_label_png,
    write_predictions_json,
    write_report,
)
from .metrics import (
    AggregateMetrics,
    ImageMetrics,
    MatchCounts,
    MetricSummary,
    PqResult,
    aggregate,
    aji,
    best_dice,
    compute_image_metrics,
    object_f1,
    panoptic_quality,
    pixel_dice,
    sbd,
)

__version__ = "0.1.0"

__all__ = [
    "MASK_RES",
    "AggregateMetrics",
    "BinaryMask",
    "BoundingBox",
    "DatasetPair",
    "DimensionMismatchError",
    "FeatureMap",
    "ImageMetrics",
    "InferenceConfig",
    "InstanceMap",
    "InstancePrediction",
    "LossComponents",
    "LossWeights",
    "MatchCounts",
    "MetricSummary",
    "PqResult",
    "PredictionSet",
    "RoiPrediction",
    "ScoredMask",
    "aggregate",
    "aji",
    "best_dice",
    "compute_image_metrics",
    "confidence",
    "consistency_loss",
    "consistency_loss_grad",
    "dice_pair",
    "extract_instances",
    "filter_by_score",
    "iou",
    "mask_quality_target",
    "object_f1",
    "panoptic_quality",
    "paste_mask",
    "pixel_dice",
    "quality_input_fusion",
    "raff",
    "raff_attention_grad",
    "read_label_png",
    "read_predictions_json",
    "resize_bilinear",
    "resolve_overlaps",
    "run_inference_fusion",
    "sbd",
    "sigmoid_map",
    "total_loss",
    "write_label_png",
    "write_predictions_json",
    "write_report",
]

from .classifier import ClassifierGuardError, ContentClassifier, init_classifier, train_content_classifier
from .diversity import calibrate_rho, distinct_count, diversity, pairwise_distances
from .metrics import (
    MetricError,
    MetricReport,
    calibrated_detector,
    content_accuracy,
    evaluate_generator,
    evaluate_images,
    stroke_error,
)

__all__ = [
    "ClassifierGuardError", "ContentClassifier", "MetricError", "MetricReport", "calibrate_rho",
    "calibrated_detector", "content_accuracy", "distinct_count", "diversity", "evaluate_generator",
    "evaluate_images", "init_classifier", "pairwise_distances", "stroke_error", "train_content_classifier",
]

"""Laser-speckle texture classification.

Segmentation-guided sample extraction, neighbourhood and co-occurrence
texture features, k-NN classification and a grid optimizer, plus a
synthetic speckle generator to drive them.
"""

__version__ = "0.1.0"

__all__ = [
    "SpeckleLabError", "ValidationError",
    "histogram", "load_image", "save_gray", "to_grayscale",
    "KnnConfig", "fit_predict",
    "GridSpec", "report_tables", "run_grid",
    "best_match", "extract_samples", "ncc_score", "ssd_score",
    "detect_valleys", "kmeans_segment", "segment", "threshold_segment",
    "SpeckleParams", "generate_speckle", "make_corpus", "measure_contrast",
    "feature_vector", "glcm", "haralick_five",
]

from .errors import SpeckleLabError, ValidationError  # noqa: E402
from .image_core import histogram, load_image, save_gray, to_grayscale  # noqa: E402
from .knn import KnnConfig, fit_predict  # noqa: E402
from .optimizer import GridSpec, report_tables, run_grid  # noqa: E402
from .sampling import best_match, extract_samples, ncc_score, ssd_score  # noqa: E402
from .segmentation import detect_valleys, kmeans_segment, segment, threshold_segment  # noqa: E402
from .speckle_synth import SpeckleParams, generate_speckle, make_corpus, measure_contrast  # noqa: E402
from .texture import feature_vector, glcm, haralick_five  # noqa: E402

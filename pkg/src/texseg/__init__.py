"""Texture segmentation via patch autocovariance features and clustering."""

from .clustering import (
    ClusterResult,
    KMeansParams,
    LinkageParams,
    agglomerative,
    eval_linf_objective,
    kmeans,
    labels_to_membership,
    membership_to_labels,
    single_linkage_threshold,
    theoretical_threshold,
)
from .evaluation import (
    MatchReport,
    SeparationReport,
    best_permutation_match,
    boundary_sets,
    concentration_experiment,
    consistency_experiment,
    lemma3_experiment,
    separation_delta,
    theorem2_experiment,
)
from .features import (
    FeatureField,
    PatchParams,
    all_features,
    default_half_width,
    extract_patch,
    feature_vector,
    sample_autocov,
    subsample_grid,
)
from .fields import (
    KernelSizeField,
    MAModel,
    MAVariant,
    kernel_covariance,
    kernel_size_metric,
    ma_true_autocov,
    pixel_distance,
    sample_ma_field,
    sample_nonstationary_field,
    sample_white_noise,
    true_kernel_feature,
)
from .mosaic import (
    RegionGeometry,
    compose_mosaic,
    load_grayscale_image,
    region_mask,
    standardize_texture,
)

__version__ = "0.1.0"

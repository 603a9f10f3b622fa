"""Differentiable edge-preserving smoothing via recursive domain-transform filtering.

The package filters multi-channel score maps along rows and columns with
edge-dependent recursion weights, exposes exact reverse-mode gradients with
respect to both the scores and the edge map, and includes a small trainable
edge predictor, segmentation metrics, bit-exact file formats, and a CLI.
"""

from .edgenet import (
    EdgeModel,
    FeatureStack,
    ToySample,
    extract_features,
    init_edge_model,
    make_toy_dataset,
    predict_edges,
    softmax_xent_loss,
    train,
)
from .errors import (
    DomainViolationError,
    FilterError,
    FormatError,
    InvalidDimensionError,
    InvalidParameterError,
    LabelError,
    ShapeMismatchError,
    TapeError,
)
from .filtering import (
    DtTape,
    PassRecord,
    density_from_edges,
    filter_1d_pass,
    filter_2d,
    gradient_magnitude_edges,
    sigma_schedule,
    weights_from_density,
)
from .gradients import (
    DtGradients,
    backward_1d_pass,
    backward_2d,
    finite_difference_oracle,
    gradient_check_suite,
    relative_error,
    unrolled_reference_gradients,
)
from .grids import (
    DensityMap,
    DtParams,
    EdgeMap,
    ScoreMap,
    WeightMap,
    assert_shapes_compatible,
    new_score_map,
)
from .gru import (
    GruCorrespondence,
    activation_to_edge,
    gru_scan,
    softplus,
    verify_gate_equivalence,
    weight_to_gate,
)
from .io_formats import (
    read_checkpoint,
    read_pgm,
    read_ppm,
    read_tensor,
    write_checkpoint,
    write_pgm,
    write_ppm,
    write_tensor,
)
from .metrics import (
    IouReport,
    TrimapCurve,
    boundary_band,
    iou_report_csv,
    mean_iou,
    trimap_csv,
    trimap_curve,
)

__all__ = [
    "DensityMap",
    "DomainViolationError",
    "DtGradients",
    "DtParams",
    "DtTape",
    "EdgeMap",
    "EdgeModel",
    "FeatureStack",
    "FilterError",
    "FormatError",
    "GruCorrespondence",
    "InvalidDimensionError",
    "InvalidParameterError",
    "IouReport",
    "LabelError",
    "PassRecord",
    "ScoreMap",
    "ShapeMismatchError",
    "TapeError",
    "ToySample",
    "TrimapCurve",
    "WeightMap",
    "activation_to_edge",
    "assert_shapes_compatible",
    "backward_1d_pass",
    "backward_2d",
    "boundary_band",
    "density_from_edges",
    "extract_features",
    "filter_1d_pass",
    "filter_2d",
    "finite_difference_oracle",
    "gradient_check_suite",
    "gradient_magnitude_edges",
    "gru_scan",
    "init_edge_model",
    "iou_report_csv",
    "make_toy_dataset",
    "mean_iou",
    "new_score_map",
    "predict_edges",
    "read_checkpoint",
    "read_pgm",
    "read_ppm",
    "read_tensor",
    "relative_error",
    "sigma_schedule",
    "softmax_xent_loss",
    "softplus",
    "train",
    "trimap_csv",
    "trimap_curve",
    "unrolled_reference_gradients",
    "verify_gate_equivalence",
    "weight_to_gate",
    "weights_from_density",
    "write_checkpoint",
    "write_pgm",
    "write_ppm",
    "write_tensor",
    "__version__",
]

__version__ = "1.0.0"

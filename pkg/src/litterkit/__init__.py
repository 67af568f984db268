"""litterkit: dataset engineering and evaluation for litter detection.

Taxonomy remapping, dataset statistics, seeded splits, soft-mask
transplant augmentation, training-time augmentations, and mask-AP
evaluation with pluggable prediction scores, plus a local transplanter
service.
"""

from .dataset import (
    Annotation,
    Category,
    Dataset,
    DatasetError,
    ImageRecord,
    IntegrityError,
    ParseError,
    SceneTag,
    ValidationReport,
    Violation,
    parse_dataset,
    serialize_dataset,
    validate,
)
from .evaluation import (
    Detection,
    EvalConfig,
    EvalError,
    EvalReport,
    ScoreKind,
    average_precision,
    confusion_matrix,
    cross_validation_summary,
    match_detections,
    predicted_class,
    score,
)
from .masks import (
    MaskError,
    Polygons,
    Rle,
    blend,
    decode_rle,
    distance_transform,
    encode_rle,
    mask_iou,
    rasterize,
    soft_mask,
)
from .splits import Split, SplitError, kfold_splits
from .taxonomy import TaxonomyError, TaxonomyMapping, build_top_k_mapping, classless_mapping, remap
from .transplant import BatchResult, Placement, TransplantError, transplant_batch, transplant_one

__version__ = "0.1.0"

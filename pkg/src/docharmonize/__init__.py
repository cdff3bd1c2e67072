"""docharmonize: harmonize heterogeneous document-layout annotation corpora
into one target standard, with dataset diagnostics, evaluation metrics, and
representation-geometry analysis."""

from .dataset_model import Annotation, BBox, LayoutDataset, PageRecord, load_coco, save_coco
from .errors import DocharmonizeError
from .taxonomy import (
    Taxonomy,
    TaxonomyMapping,
    builtin_heron_remap,
    builtin_target_taxonomy,
    builtin_unstructured_remap,
    remap_dataset,
)

__all__ = [
    "Annotation",
    "BBox",
    "LayoutDataset",
    "PageRecord",
    "Taxonomy",
    "TaxonomyMapping",
    "DocharmonizeError",
    "builtin_heron_remap",
    "builtin_target_taxonomy",
    "builtin_unstructured_remap",
    "load_coco",
    "remap_dataset",
    "save_coco",
]

__version__ = "0.1.0"

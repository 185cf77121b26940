"""Evaluation toolkit for fetal brain MRI segmentation and biometry."""

from .datamodel import (
    CaseMetadata,
    DEFAULT_SCHEMA,
    LabelSchema,
    LabelVolume,
    Point3,
    TissueLabel,
    binary_mask,
    default_schema,
    read_metadata_csv,
    world_coords,
)
from .nifti import read_volume, write_volume
from .segmetrics import MetricRecord, dice, edt, evaluate_case, hd95, surface_voxels, volume_similarity
from .topology import TopologySummary, betti_numbers, euler_characteristic, euler_difference

__version__ = "0.1.0"

__all__ = [
    "CaseMetadata",
    "DEFAULT_SCHEMA",
    "LabelSchema",
    "LabelVolume",
    "MetricRecord",
    "Point3",
    "TissueLabel",
    "TopologySummary",
    "__version__",
    "betti_numbers",
    "binary_mask",
    "default_schema",
    "dice",
    "edt",
    "euler_characteristic",
    "euler_difference",
    "evaluate_case",
    "hd95",
    "read_metadata_csv",
    "read_volume",
    "surface_voxels",
    "volume_similarity",
    "world_coords",
    "write_volume",
]

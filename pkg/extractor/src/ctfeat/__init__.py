"""Frozen ResNet-50 feature extractor.

Runs preprocessed CT images through a frozen ResNet-50 backbone, takes
the 2048-dim global-average-pool output, and writes a binary QCNF
feature file. The feature file and the `id,path,label` manifest CSV are
the only contracts shared with the training toolkit; the two packages
never import each other.
"""

from .codec import FeatureRecord, read_features, write_features
from .extract import ExtractorConfig, extract, load_backbone

__all__ = [
    "ExtractorConfig",
    "FeatureRecord",
    "extract",
    "load_backbone",
    "read_features",
    "write_features",
]

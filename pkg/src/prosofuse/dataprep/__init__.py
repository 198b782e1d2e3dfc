"""Corpus handling: manifests, MAT1 feature files, statistics, filtering, alignment, synthetic data."""

from .alignment import ingest_alignment, intervals_to_durations, read_alignment_tsv
from .manifest import Manifest, UtteranceRecord, load_manifest, materialize, save_manifest
from .matfile import decode_matrix, encode_matrix, load_matrix, save_matrix
from .split import split_manifest, split_sizes
from .stats import (
    DatasetStats,
    FilterConfig,
    Moments,
    PhoneStats,
    Removal,
    compute_stats,
    denormalize_targets,
    filter_outliers,
    normalization_from_stats,
    normalize_targets,
)
from .synth import SynthConfig, analytic_floors, phone_symbol, style_variance, synth_dataset

__all__ = [
    "DatasetStats",
    "FilterConfig",
    "Manifest",
    "Moments",
    "PhoneStats",
    "Removal",
    "SynthConfig",
    "UtteranceRecord",
    "analytic_floors",
    "compute_stats",
    "decode_matrix",
    "denormalize_targets",
    "encode_matrix",
    "filter_outliers",
    "ingest_alignment",
    "intervals_to_durations",
    "load_manifest",
    "load_matrix",
    "materialize",
    "normalization_from_stats",
    "normalize_targets",
    "phone_symbol",
    "read_alignment_tsv",
    "save_manifest",
    "save_matrix",
    "split_manifest",
    "split_sizes",
    "style_variance",
    "synth_dataset",
]

"""Dataset plumbing: tensor files, instance records, synthetic data,
and the command-line pipeline."""

from .records import InstanceRecord, RecordError, load_distribution, load_features, read_records, write_records
from .synth import SynthConfig, synth_generate
from .tensorfile import (
    BadMagicError,
    DimensionOverflowError,
    TensorFileError,
    TrailingDataError,
    TruncatedFileError,
    read_tensor,
    write_tensor,
)

__all__ = [
    "BadMagicError",
    "DimensionOverflowError",
    "InstanceRecord",
    "RecordError",
    "SynthConfig",
    "TensorFileError",
    "TrailingDataError",
    "TruncatedFileError",
    "load_distribution",
    "load_features",
    "read_records",
    "read_tensor",
    "synth_generate",
    "write_records",
    "write_tensor",
]

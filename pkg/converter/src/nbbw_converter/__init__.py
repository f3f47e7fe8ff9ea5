"""VGG-19 checkpoint to NBBW weight-file converter."""

from .convert import CheckpointSchemaError, convert, random_layers, write_nbbw

__all__ = ["CheckpointSchemaError", "convert", "random_layers", "write_nbbw"]

"""Verified pseudo-labeling for class-incremental object detection datasets.

The pipeline: slice a dataset into incremental task views, turn detector
outputs into pseudo ground truths for previously learned classes, verify
each one with a yes/no prompt against a vision-language verification
backend, merge survivors with the current task's real labels, and score the
result with AP metrics. A seeded synthetic world plus a ground-truth oracle
backend make the whole thing runnable and testable without any model.
"""

__version__ = "0.1.0"

from verilabel.errors import BackendError, InputError, TransientBackendError, VerilabelError
from verilabel.model import (
    Annotation,
    BBox,
    BoxFormat,
    Category,
    Dataset,
    ImageRecord,
    convert_box,
    iou,
)

__all__ = [
    "__version__",
    "Annotation",
    "BBox",
    "BackendError",
    "BoxFormat",
    "Category",
    "Dataset",
    "ImageRecord",
    "InputError",
    "TransientBackendError",
    "VerilabelError",
    "convert_box",
    "iou",
]

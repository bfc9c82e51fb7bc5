"""Joint deep dictionary learning and sparse subspace clustering for
hyperspectral pixel segmentation."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DdlSscError,
    DegenerateData,
    FormatError,
    InvalidInput,
    IoError,
    SingularSylvester,
)
from .pipeline import PipelineConfig, run_joint, run_piecemeal  # noqa: E402

__all__ = [
    "DdlSscError",
    "DegenerateData",
    "FormatError",
    "InvalidInput",
    "IoError",
    "SingularSylvester",
    "PipelineConfig",
    "run_joint",
    "run_piecemeal",
]

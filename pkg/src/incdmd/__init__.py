"""Streaming identification of time-varying linear dynamics.

Tracks DMD/DMDc operators over high-dimensional snapshot streams by keeping
an incrementally updated SVD of the (discounted or sliding-window) data
matrix, with rank truncation, spectral analysis, prediction, and an
experiment harness.
"""

from .errors import (
    BufferOverflow,
    BufferUnderflow,
    ConditioningError,
    DegenerateData,
    DegenerateRange,
    DriftTooLarge,
    IncdmdError,
    InvalidInput,
    MissingRightFactors,
    MissingState,
    ModeError,
    NumericalError,
    ParseError,
    ShapeError,
    WindowSizeMismatch,
)
from .linalg import (
    Factorization,
    TruncationPolicy,
    broken_arrow_svd,
    reduced_svd,
    reorthonormalize,
    truncate,
)
from .incsvd import SvdState, UpdateResult, init_from_batch
from .dmd import DmdModel, Spectrum, StreamConfig, batch_dmd, free_run_reconstruct
from .dmdc import DmdcModel, batch_dmdc
from .online import OnlineState, online_init, online_init_from_batch, online_step
from .harness import (
    Dataset,
    LtvSpec,
    LtvTruth,
    StepRecord,
    StreamReport,
    compare,
    emit_comparison,
    emit_report,
    frob_pred_error,
    gen_ltv,
    ingest_csv,
    load_report,
    nrmse,
    run_stream,
    write_matrix_csv,
)

__version__ = "0.1.0"

__all__ = [
    "BufferOverflow", "BufferUnderflow", "ConditioningError", "DegenerateData",
    "DegenerateRange", "DriftTooLarge", "IncdmdError", "InvalidInput",
    "MissingRightFactors", "MissingState", "ModeError", "NumericalError",
    "ParseError", "ShapeError", "WindowSizeMismatch",
    "Factorization", "TruncationPolicy", "broken_arrow_svd", "reduced_svd",
    "reorthonormalize", "truncate",
    "SvdState", "UpdateResult", "init_from_batch",
    "DmdModel", "Spectrum", "StreamConfig", "batch_dmd", "free_run_reconstruct",
    "DmdcModel", "batch_dmdc",
    "OnlineState", "online_init", "online_init_from_batch", "online_step",
    "Dataset", "LtvSpec", "LtvTruth", "StepRecord", "StreamReport", "compare",
    "emit_comparison", "emit_report", "frob_pred_error", "gen_ltv", "ingest_csv",
    "load_report", "nrmse", "run_stream", "write_matrix_csv",
    "__version__",
]

"""Python interface to the flowmob C++ library."""

from ._flowmob import (
    Checkpoint,
    Dataset,
    FlowmobError,
    __version__,
    evaluate,
    gradcheck,
    ingest,
    load_checkpoint,
    load_dataset,
    log_pdf,
    predict,
    synthesize,
    train,
    without_distances,
)

__all__ = [
    "Checkpoint",
    "Dataset",
    "FlowmobError",
    "__version__",
    "evaluate",
    "gradcheck",
    "ingest",
    "load_checkpoint",
    "load_dataset",
    "log_pdf",
    "predict",
    "synthesize",
    "train",
    "without_distances",
]

"""Reference vision adapter for the phenoflow wire protocol.

Answers ``capabilities``, ``infer``, ``train`` and ``job_status`` requests
over newline-delimited JSON (stdio) or HTTP POST ``/rpc``. Segmentation is a
classical green-threshold fallback, so the adapter works without a GPU or
model downloads; training is a deterministic stub behind the same job
protocol real trainers would use.
"""
from .protocol import ReferenceAdapter
from .segmenter import plant_mask, segment_entries, split_instances

__version__ = "0.1.0"

__all__ = [
    "ReferenceAdapter",
    "plant_mask",
    "segment_entries",
    "split_instances",
    "__version__",
]

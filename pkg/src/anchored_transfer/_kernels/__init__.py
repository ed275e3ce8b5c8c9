"""Hot kernels with a compiled backend and a pure-Python fallback.

The compiled module is used when it imports cleanly; setting the environment
variable ``ANCHORED_TRANSFER_PURE_PYTHON=1`` forces the fallback.
"""
import os

from . import _pykernels as pure

compiled = None
if not os.environ.get("ANCHORED_TRANSFER_PURE_PYTHON"):
    try:
        from . import _ckernels as compiled
    except ImportError:
        compiled = None

_impl = compiled if compiled is not None else pure
BACKEND = "cython" if compiled is not None else "python"

simulate_chain = _impl.simulate_chain
count_transitions = _impl.count_transitions
topk_flat_indices = _impl.topk_flat_indices

__all__ = ["BACKEND", "compiled", "pure", "simulate_chain", "count_transitions",
           "topk_flat_indices"]

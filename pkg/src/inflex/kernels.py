"""Edit-distance backend selection.

The compiled core is used when importable; setting ``INFLEX_PURE_PYTHON=1``
forces the fallback.  ``BACKEND`` names the one in use.
"""
import os

from . import _levenshtein_py as python_backend

try:
    if os.environ.get("INFLEX_PURE_PYTHON"):
        raise ImportError("pure-python backend requested")
    from . import _levenshtein as compiled_backend
except ImportError:
    compiled_backend = None

_impl = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if compiled_backend is not None else "python"

distance = _impl.distance
cost_matrix = _impl.cost_matrix
alignment = _impl.alignment
cross_distance = _impl.cross_distance
GAP = -1

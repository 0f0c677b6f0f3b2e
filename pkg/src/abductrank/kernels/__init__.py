"""Hot per-query loss kernels with two interchangeable backends.

The numba backend is used when numba imports cleanly. Setting the environment
variable ``ABDUCTRANK_NO_NUMBA=1`` (or ``ABDUCTRANK_BACKEND=numpy``) forces the
pure-numpy path. Both backends expose ``batch_loss(kind, labels, scores,
offsets, option) -> (values, grad)`` and must agree to float64 round-off.
"""

import importlib
import logging
import os

import numpy as np

logger = logging.getLogger(__name__)

# integer codes understood by batch_loss
HINGE, LOGISTIC, LAMBDARANK, LISTNET, LISTMLE, APPROX_NDCG = range(6)

_BACKENDS = {}


def _numba_available():
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


def _requested_backend():
    if os.environ.get("ABDUCTRANK_NO_NUMBA", "").strip() not in ("", "0"):
        return "numpy"
    name = os.environ.get("ABDUCTRANK_BACKEND", "").strip().lower()
    if name in ("numpy", "numba"):
        return name
    if name:
        logger.warning("unknown ABDUCTRANK_BACKEND=%r, falling back to auto", name)
    return "numba" if _numba_available() else "numpy"


def get_backend(name):
    """Return the kernel module for ``name`` ("numba" or "numpy")."""
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown kernel backend {name!r}")
    if name not in _BACKENDS:
        _BACKENDS[name] = importlib.import_module(f"{__name__}._{name}")
    return _BACKENDS[name]


BACKEND = _requested_backend()
_active = get_backend(BACKEND)


def batch_loss(kind, labels, scores, offsets, option=1.0, backend=None):
    """Evaluate one loss kind over a ragged batch of queries.

    ``labels`` and ``scores`` are the concatenated per-query vectors and
    ``offsets`` holds the ``n_queries + 1`` boundaries. Returns per-query loss
    values and the concatenated gradient with respect to ``scores``.
    """
    mod = _active if backend is None else get_backend(backend)
    labels = np.ascontiguousarray(labels, dtype=np.float64)
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    offsets = np.ascontiguousarray(offsets, dtype=np.int64)
    return mod.batch_loss(int(kind), labels, scores, offsets, float(option))

"""Kernel backend selection: numba-compiled kernels with a numpy fallback.

The backend is picked once at import from the ``MBREC_BACKEND`` environment
variable (``auto``, ``numba`` or ``numpy``; default ``auto``, which uses
numba when it imports cleanly). ``set_backend`` switches at runtime, which
the tests and the kernel benchmark rely on.
"""

import contextlib
import logging
import os

from . import _np_kernels

log = logging.getLogger(__name__)

_impl = _np_kernels
_name = "numpy"


def _load_numba_kernels():
    from . import _nb_kernels

    return _nb_kernels


def set_backend(name):
    """Select the kernel implementation; returns the active backend name."""
    global _impl, _name
    if name == "auto":
        try:
            _impl = _load_numba_kernels()
            _name = "numba"
        except ImportError:
            log.debug("numba unavailable, falling back to numpy kernels")
            _impl = _np_kernels
            _name = "numpy"
    elif name == "numba":
        try:
            _impl = _load_numba_kernels()
        except ImportError as exc:
            raise RuntimeError("MBREC_BACKEND=numba but numba is not importable") from exc
        _name = "numba"
    elif name == "numpy":
        _impl = _np_kernels
        _name = "numpy"
    else:
        raise ValueError(f"unknown backend {name!r} (expected auto, numba or numpy)")
    return _name


def active_backend():
    return _name


@contextlib.contextmanager
def use_backend(name):
    """Temporarily switch backends (tests, benchmarks)."""
    prev = _name
    set_backend(name)
    try:
        yield
    finally:
        set_backend(prev)


def spmm(indptr, indices, data, x):
    return _impl.spmm(indptr, indices, data, x)


def scatter_add_rows(out, rows, vals):
    _impl.scatter_add_rows(out, rows, vals)


def row_members(indptr, indices, rows, queries):
    return _impl.row_members(indptr, indices, rows, queries)


def adam_update_rows(param, m, v, rows, grad, lr, beta1, beta2, eps, bc1, bc2):
    _impl.adam_update_rows(param, m, v, rows, grad, lr, beta1, beta2, eps, bc1, bc2)


def rank_of_target(scores, excluded_sorted, target):
    return _impl.rank_of_target(scores, excluded_sorted, target)


set_backend(os.environ.get("MBREC_BACKEND", "auto"))

"""Numeric kernels with a compiled fast path and a pure-Python fallback.

The compiled extension is preferred when importable; set the environment
variable ``STREAMRCA_PURE_PY`` to any non-empty value to force the
pure-numpy implementation. Both expose the same three callables with
identical semantics, so everything above this package is backend-agnostic.
"""

from __future__ import annotations

import os

from . import pykernels as _py

if os.environ.get("STREAMRCA_PURE_PY"):
    _impl = _py
else:
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _py

BACKEND: str = _impl.BACKEND_NAME
lstm_forward = _impl.lstm_forward
lstm_backward = _impl.lstm_backward
cusum_scan = _impl.cusum_scan

__all__ = ["BACKEND", "lstm_forward", "lstm_backward", "cusum_scan"]

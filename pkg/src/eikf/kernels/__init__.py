"""Predict-kernel backend selection.

The compiled Cython kernel is used when importable; the pure-numpy fallback
is selected otherwise, or when EIKF_PURE_PYTHON=1 is set. Both expose the
same predict_window signature and are compared by tests and `eikf bench-core`.
"""

import os

from . import pycore

if os.environ.get("EIKF_PURE_PYTHON"):
    _impl = pycore
else:
    try:
        from . import _fastcore as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = pycore

BACKEND = _impl.BACKEND
predict_window = _impl.predict_window

predict_window_py = pycore.predict_window
try:
    from ._fastcore import predict_window as predict_window_compiled
except ImportError:
    predict_window_compiled = None

"""Recurrent kernel backends.

The compiled Cython extension is preferred; the pure NumPy reference
implementation is the fallback.  Selection happens once at import time and
can be forced with MTSDVGAN_BACKEND=numpy|compiled (useful for the parity
tests and the benchmark).
"""

import os

from . import reference

_forced = os.environ.get("MTSDVGAN_BACKEND", "").strip().lower()

if _forced == "numpy":
    _impl = reference
    BACKEND = "numpy"
else:
    try:
        from . import _lstm_ext as _impl  # type: ignore[attr-defined]
        BACKEND = "compiled"
    except ImportError:
        if _forced == "compiled":
            raise ImportError(
                "MTSDVGAN_BACKEND=compiled but the extension is not built; "
                "run `pip install -e .` with a C compiler available"
            )
        _impl = reference
        BACKEND = "numpy"

lstm_stack_forward = _impl.lstm_stack_forward
lstm_stack_backward = _impl.lstm_stack_backward
decoder_forward = _impl.decoder_forward
decoder_backward = _impl.decoder_backward

"""Backend selection for the conv kernels.

The compiled Cython extension is preferred; the numpy fallback is used when
the extension is unavailable or PADLAB_NO_EXTENSION is set. Both expose the
same im2col/col2im contract.
"""

import os

if os.environ.get("PADLAB_NO_EXTENSION"):
    from . import _conv_np as _impl

    BACKEND = "numpy"
else:
    try:
        from . import _conv_cy as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        from . import _conv_np as _impl

        BACKEND = "numpy"

im2col = _impl.im2col
col2im = _impl.col2im

__all__ = ["BACKEND", "im2col", "col2im"]

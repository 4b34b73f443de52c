"""Backend selection for the operator-norm kernel.

The compiled extension ``fdcstar._kernels`` is used when it was built;
otherwise the numpy fallback in ``fdcstar._fallback`` is used. Setting
``FDCSTAR_PURE=1`` forces the fallback.
"""

import os

import numpy as np

from . import _fallback

if os.environ.get("FDCSTAR_PURE") == "1":
    _impl = None
else:
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = None

BACKEND = "compiled" if _impl is not None else "python"


def opnorms(mats):
    """Operator norms of a ``(n, k, k)`` complex stack, as a float array."""
    a = np.ascontiguousarray(mats, dtype=np.complex128)
    if a.ndim != 3:
        raise ValueError("expected a (n, k, k) stack")
    if a.shape[1] == 1:
        return np.abs(a[:, 0, 0])
    if _impl is None:
        return _fallback.opnorms(a)
    return _impl.opnorms(a)


def fallback_opnorms(mats):
    return _fallback.opnorms(np.ascontiguousarray(mats, dtype=np.complex128))

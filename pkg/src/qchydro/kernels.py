"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise the numpy fallback.
``QCHYDRO_BACKEND=python`` forces the fallback.
"""

import os

from . import _kernels_py

_choice = os.environ.get("QCHYDRO_BACKEND", "auto").lower()

if _choice == "python":
    _impl = _kernels_py
else:
    try:
        from . import _core as _impl
    except ImportError:
        if _choice == "cython":
            raise
        _impl = _kernels_py

BACKEND = _impl.BACKEND
fd4 = _impl.fd4
matmul2 = getattr(_impl, "matmul2", _kernels_py.matmul2)
inner_re2 = getattr(_impl, "inner_re2", _kernels_py.inner_re2)
qc_pointwise = getattr(_impl, "qc_pointwise", _kernels_py.qc_pointwise)
hermitize2 = getattr(_impl, "hermitize2", _kernels_py.hermitize2)
outer2 = getattr(_impl, "outer2", _kernels_py.outer2)
renormalize2 = getattr(_impl, "renormalize2", _kernels_py.renormalize2)
spinor_rhs2 = getattr(_impl, "spinor_rhs2", _kernels_py.spinor_rhs2)

"""Backend selection for the operator kernel.

The compiled extension is used when importable; setting the environment
variable ``AFSPIN_PURE_PYTHON=1`` forces the numpy fallback.
"""

from __future__ import annotations

import logging
import os

import numpy as np

from . import _kernels_py

log = logging.getLogger(__name__)

BACKEND = "numpy"
_impl = _kernels_py.apply_operator

if not os.environ.get("AFSPIN_PURE_PYTHON"):
    try:
        from . import _ckernels  # type: ignore[attr-defined]
    except ImportError:  # pragma: no cover - depends on the build
        log.debug("compiled kernel unavailable, using numpy fallback")
    else:
        BACKEND = "cython"
        _impl = _ckernels.apply_operator


def apply_operator(psi, nodes, coef, strides, inv_h, perm, phase, backend: str | None = None):
    """Dispatch to the selected backend (``backend`` overrides the default)."""
    psi = np.ascontiguousarray(psi, dtype=np.complex128)
    nodes = np.ascontiguousarray(nodes, dtype=np.int64)
    coef = np.ascontiguousarray(coef, dtype=np.float64)
    perm = np.ascontiguousarray(perm, dtype=np.int64)
    phase = np.ascontiguousarray(phase, dtype=np.complex128)
    if backend is None:
        fn = _impl
    elif backend == "numpy":
        fn = _kernels_py.apply_operator
    elif backend == "cython":
        from . import _ckernels  # type: ignore[attr-defined]

        fn = _ckernels.apply_operator
    else:
        raise ValueError(f"unknown backend {backend!r}")
    return fn(psi, nodes, coef, tuple(int(s) for s in strides), float(inv_h), perm, phase)

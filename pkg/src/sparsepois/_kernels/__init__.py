"""Hot inner-loop kernels with a compiled core and a numpy fallback.

The compiled module ``_ckernels`` is preferred. Set ``SPARSEPOIS_PURE_PYTHON=1``
to force the numpy implementations (also used automatically when the
extension has not been built).
"""
import os

from . import _pykernels as pykernels

ckernels = None
if os.environ.get("SPARSEPOIS_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as ckernels
    except ImportError:  # extension not built
        ckernels = None

_impl = ckernels if ckernels is not None else pykernels

BACKEND = _impl.BACKEND
# numpy's vectorized exp beats the scalar libm loop (see benchmarks/bench_kernels.py)
poisson_terms = pykernels.poisson_terms
waterfill_theta = _impl.waterfill_theta
persp_prox = _impl.persp_prox
rh_prox = _impl.rh_prox
ar1_fill = _impl.ar1_fill

__all__ = [
    "BACKEND",
    "ar1_fill",
    "ckernels",
    "persp_prox",
    "poisson_terms",
    "pykernels",
    "rh_prox",
    "waterfill_theta",
]

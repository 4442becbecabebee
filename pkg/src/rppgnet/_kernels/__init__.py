"""Hot kernels with a compiled backend and a numpy fallback.

The compiled extension is used when it was built and imports cleanly.
Setting ``RPPGNET_PURE_PYTHON=1`` in the environment forces the numpy
versions. ``BACKEND`` names whichever one is active.
"""

import os

from . import _pykernels

BACKEND = "python"

if os.environ.get("RPPGNET_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
else:
    _impl = _pykernels

pyr_down = _impl.pyr_down
dw_conv_forward = _impl.dw_conv_forward
dw_conv_backward = _impl.dw_conv_backward
bn_forward_train = _impl.bn_forward_train
bn_backward = _impl.bn_backward

__all__ = ["BACKEND", "pyr_down", "dw_conv_forward", "dw_conv_backward",
           "bn_forward_train", "bn_backward"]

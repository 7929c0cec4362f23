"""Backend selection for the codec hot loops.

The compiled extension is used when it imports; set ``CQGGADMM_PURE_PYTHON=1``
to force the numpy fallback.
"""

from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("CQGGADMM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

counter_uniforms = _impl.counter_uniforms
stochastic_round = _impl.stochastic_round
pack_codes = _impl.pack_codes
unpack_codes = _impl.unpack_codes

"""Selects the compiled kernels when importable, else the Python fallback.

Set ``MCVD_PURE_PYTHON=1`` to force the fallback.
"""

import os

kernels = None
NAME = "python"

if not os.environ.get("MCVD_PURE_PYTHON"):
    try:
        from mcvd import _kernels as kernels

        NAME = "cython"
    except ImportError:
        kernels = None

if kernels is None:
    from mcvd import _fallback as kernels

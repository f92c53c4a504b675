"""Kernel backend selection.

The hot numeric kernels exist twice: a pure-numpy vectorized implementation
and numba @njit loop implementations.  ``DCSIM_NUMBA=0`` (or numba being
unavailable) selects the numpy path; anything else uses numba.  Both paths
implement the same arithmetic in the same order.
"""

import os

_flag = os.environ.get("DCSIM_NUMBA", "").strip().lower()

if _flag in ("0", "false", "off", "no"):
    NUMBA_ENABLED = False
else:
    try:
        import numba  # noqa: F401

        NUMBA_ENABLED = True
    except ImportError:
        NUMBA_ENABLED = False


def backend_name():
    return "numba" if NUMBA_ENABLED else "numpy"

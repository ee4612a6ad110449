"""Backend selection for the hot kernels.

The compiled ``_core`` extension is used when it imports; otherwise, or when
``COINFECT_PURE_PYTHON=1`` is set, the pure-Python ``_pycore`` module is used.
Both expose the same functions and status codes.
"""

import os

from . import _pycore

if os.environ.get("COINFECT_PURE_PYTHON") == "1":
    _impl = _pycore
    BACKEND = "python"
else:
    try:
        from . import _core as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _pycore
        BACKEND = "python"

rhs5 = _impl.rhs5
jac4 = _impl.jac4
newton_one = _impl.newton_one
newton_batch = _impl.newton_batch
dopri5 = _impl.dopri5

NEWTON_CONVERGED = _pycore.NEWTON_CONVERGED
NEWTON_DIVERGED = _pycore.NEWTON_DIVERGED
NEWTON_LEFT_ORTHANT = _pycore.NEWTON_LEFT_ORTHANT
NEWTON_SINGULAR = _pycore.NEWTON_SINGULAR

ODE_MAX_TIME = _pycore.ODE_MAX_TIME
ODE_CONVERGED = _pycore.ODE_CONVERGED
ODE_BLOWUP = _pycore.ODE_BLOWUP
ODE_STEP_UNDERFLOW = _pycore.ODE_STEP_UNDERFLOW
ODE_MAX_STEPS = _pycore.ODE_MAX_STEPS


def backends():
    """Return ``{name: module}`` for every importable backend."""
    out = {"python": _pycore}
    try:
        from . import _core
    except ImportError:
        pass
    else:
        out["cython"] = _core
    return out

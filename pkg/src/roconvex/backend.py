"""Kernel backend selection: compiled extension if built, pure Python otherwise.

Set ``ROCONVEX_FORCE_PYTHON=1`` to force the fallback (used by the kernel
benchmark and the backend-equivalence tests).
"""

import os

from roconvex import _sweep_py

_FORCED = os.environ.get("ROCONVEX_FORCE_PYTHON", "") not in ("", "0")

try:
    from roconvex import _sweep_cy
except ImportError:
    _sweep_cy = None

if _sweep_cy is not None and not _FORCED:
    lower_hull_sweep = _sweep_cy.lower_hull_sweep
    BACKEND = "compiled"
else:
    lower_hull_sweep = _sweep_py.lower_hull_sweep
    BACKEND = "python"


def available_backends():
    """Mapping backend name -> sweep callable, for benchmarks and tests."""
    out = {"python": _sweep_py.lower_hull_sweep}
    if _sweep_cy is not None:
        out["compiled"] = _sweep_cy.lower_hull_sweep
    return out

"""Path-engine backend selection.

The compiled extension is preferred; the pure-Python fallback implements
identical semantics (bit-for-bit) and is selected automatically when the
extension is unavailable, or explicitly via HJBLAB_FORCE_FALLBACK=1.
"""

import os

import numpy as np

from ..errors import SimulationError
from . import fallback as _fallback
from .tables import alloc_out, build_plan

if os.environ.get("HJBLAB_FORCE_FALLBACK", "") == "1":
    _impl = _fallback
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _fallback

BACKEND = _impl.BACKEND

__all__ = ["BACKEND", "run_paths", "build_plan", "alloc_out", "backend_module"]


def backend_module(name: str):
    """Explicit backend lookup ('compiled' or 'python'); used by tests/benchmarks."""
    if name == "python":
        return _fallback
    if name == "compiled":
        from . import _core  # noqa: F401

        return _core
    raise ValueError(f"unknown backend {name!r}")


def run_paths(plan: dict, impl=None) -> dict:
    """Run the path engine for ``plan`` and return its output arrays."""
    out = alloc_out(plan)
    (impl or _impl).run(plan, out)
    bad = np.nonzero(out["err_idx"] >= 0)[0]
    if bad.size:
        p = int(bad[0])
        raise SimulationError(int(out["err_idx"][p]), plan["path0"] + p)
    return out

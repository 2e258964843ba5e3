"""Kernel backend selection.

The compiled ``_core`` extension is used when it imports; otherwise the
pure-Python ``_pycore`` module. Set ``STOPGO_PURE_PYTHON=1`` to force the
fallback.
"""
import os

from . import _pycore

if os.environ.get("STOPGO_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pycore
else:
    try:
        from . import _core as _impl
    except ImportError:  # extension not built
        _impl = _pycore

BACKEND = _impl.BACKEND
krauss_safe_speed = _impl.krauss_safe_speed
human_sweep = _impl.human_sweep
rolling_stats = _impl.rolling_stats

__all__ = ["BACKEND", "krauss_safe_speed", "human_sweep", "rolling_stats"]

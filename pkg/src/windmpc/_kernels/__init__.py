"""Backend selection for the plant integration kernels.

The compiled Cython core is preferred; the pure-Python mirror is used when
the extension is unavailable or when ``WINDMPC_BACKEND=python`` is set.
Both expose the same functions and produce bit-identical results.
"""

from __future__ import annotations

import os

if os.environ.get("WINDMPC_BACKEND", "").lower() == "python":
    from . import _purepy as _impl

    BACKEND = "python"
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        from . import _purepy as _impl

        BACKEND = "python"

cp_value = _impl.cp_value
turbine_step_raw = _impl.turbine_step_raw
turbine_sim = _impl.turbine_sim
grid_step_raw = _impl.grid_step_raw

"""Backend selection for the joint-table kernel.

Prefers the compiled extension; falls back to the numpy implementation
when the extension was not built or ECHELON_PURE_PYTHON=1 is set.
``BACKEND`` records which one is active.
"""

from __future__ import annotations

import os

import numpy as np

if os.environ.get("ECHELON_PURE_PYTHON") == "1":
    from echelon import _joint_py as _impl

    BACKEND = "python"
else:
    try:
        from echelon import _joint as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        from echelon import _joint_py as _impl

        BACKEND = "python"


def fill_joint(
    n: int,
    parent_offset: np.ndarray,
    parent_flat: np.ndarray,
    table_offset: np.ndarray,
    p_true: np.ndarray,
) -> np.ndarray:
    """Joint probability of every one of the 2**n binary states.

    See ``_joint.pyx`` for the packed-array layout.  Allocates and
    returns the table; dispatch goes to the active backend.
    """
    out = np.empty(1 << n, dtype=np.float64)
    _impl.fill_joint(
        int(n),
        np.ascontiguousarray(parent_offset, dtype=np.int32),
        np.ascontiguousarray(parent_flat, dtype=np.int32),
        np.ascontiguousarray(table_offset, dtype=np.int32),
        np.ascontiguousarray(p_true, dtype=np.float64),
        out,
    )
    return out

"""Pure-Python (numpy) fallback for the compiled joint-table kernel.

Performs the exact floating-point operation sequence of ``_joint.pyx``:
for each state, table factors are multiplied in ascending variable
order, and the bit-0 branch uses ``1.0 - p``.  IEEE-754 multiplication
is deterministic, so the two backends agree bit for bit.
"""

import numpy as np


def fill_joint(n, parent_offset, parent_flat, table_offset, p_true, out):
    """Vectorized over states; loop over variables preserves factor order."""
    size = 1 << n
    states = np.arange(size, dtype=np.int64)
    acc = np.ones(size, dtype=np.float64)
    for v in range(n):
        base = parent_offset[v]
        row = np.zeros(size, dtype=np.int64)
        for j in range(base, parent_offset[v + 1]):
            row |= ((states >> int(parent_flat[j])) & 1) << (j - base)
        p = p_true[table_offset[v] + row]
        bit = (states >> v) & 1
        acc *= np.where(bit == 1, p, 1.0 - p)
    out[:] = acc

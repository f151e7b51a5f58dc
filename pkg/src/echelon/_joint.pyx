# cython: boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled joint-table kernel for binary-variable networks.

State s encodes variable v in bit v.  The per-state probability is the
product over variables, in ascending variable order, of the variable's
table entry (or its complement when the bit is 0).  The multiplication
order is part of the contract: the pure-Python fallback performs the
identical sequence, so both backends produce bit-identical tables.
"""


def fill_joint(int n,
               int[::1] parent_offset,
               int[::1] parent_flat,
               int[::1] table_offset,
               double[::1] p_true,
               double[::1] out):
    """Fill ``out`` (length 2**n) with the joint probability of each state.

    ``parent_flat[parent_offset[v]:parent_offset[v+1]]`` lists variable
    v's parents; parent j of v contributes bit j of the row index into
    ``p_true[table_offset[v]:]``, which stores P(v=1 | parent row).
    """
    cdef Py_ssize_t size = (<Py_ssize_t>1) << n
    cdef Py_ssize_t s
    cdef int v, j, base
    cdef Py_ssize_t row
    cdef double acc, p

    for s in range(size):
        acc = 1.0
        for v in range(n):
            base = parent_offset[v]
            row = 0
            for j in range(base, parent_offset[v + 1]):
                row |= ((s >> parent_flat[j]) & 1) << (j - base)
            p = p_true[table_offset[v] + row]
            if (s >> v) & 1:
                acc *= p
            else:
                acc *= 1.0 - p
        out[s] = acc

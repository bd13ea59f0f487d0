# cython: language_level=3
"""Compiled backend: stack programs interpreted point by point in C.

Semantics match :mod:`afmass._kernels.pure` instruction for instruction;
domain violations produce non-finite values diagnosed by the caller.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp as c_exp
from libc.math cimport log as c_log
from libc.math cimport pow as c_pow
from libc.math cimport sqrt as c_sqrt

cnp.import_array()

NAME = "compiled"

# Keep in sync with ops.py.
DEF OP_CONST = 0
DEF OP_XVAR = 1
DEF OP_ADD = 2
DEF OP_SUB = 3
DEF OP_MUL = 4
DEF OP_DIV = 5
DEF OP_NEG = 6
DEF OP_POW = 7
DEF OP_POWI = 8
DEF OP_SQRT = 9
DEF OP_EXP = 10
DEF OP_LOG = 11

DEF MAX_STACK = 64


cdef inline double int_pow(double base, int k) noexcept nogil:
    cdef double acc = 1.0
    cdef double sq = base
    cdef int n = k if k > 0 else -k
    while n:
        if n & 1:
            acc *= sq
        n >>= 1
        if n:
            sq *= sq
    if k < 0:
        acc = 1.0 / acc
    return acc


def eval_program(code, consts, int stack_depth, x):
    """Run one stack program over an array of abscissae."""
    cdef cnp.int32_t[::1] code_v = np.ascontiguousarray(code, dtype=np.int32)
    cdef double[::1] consts_v = np.ascontiguousarray(consts, dtype=np.float64)
    cdef double[::1] x_v = np.ascontiguousarray(x, dtype=np.float64)
    if stack_depth > MAX_STACK:
        raise ValueError("stack depth exceeds compiled limit")

    cdef Py_ssize_t n = x_v.shape[0]
    cdef Py_ssize_t ncode = code_v.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr

    cdef double stack[MAX_STACK]
    cdef Py_ssize_t j, k
    cdef int op, arg, top

    with nogil:
        for j in range(n):
            top = -1
            k = 0
            while k < ncode:
                op = code_v[k]
                arg = code_v[k + 1]
                k += 2
                if op == OP_CONST:
                    top += 1
                    stack[top] = consts_v[arg]
                elif op == OP_XVAR:
                    top += 1
                    stack[top] = x_v[j]
                elif op == OP_ADD:
                    stack[top - 1] += stack[top]
                    top -= 1
                elif op == OP_SUB:
                    stack[top - 1] -= stack[top]
                    top -= 1
                elif op == OP_MUL:
                    stack[top - 1] *= stack[top]
                    top -= 1
                elif op == OP_DIV:
                    stack[top - 1] /= stack[top]
                    top -= 1
                elif op == OP_NEG:
                    stack[top] = -stack[top]
                elif op == OP_POW:
                    stack[top - 1] = c_pow(stack[top - 1], stack[top])
                    top -= 1
                elif op == OP_POWI:
                    stack[top] = int_pow(stack[top], arg)
                elif op == OP_SQRT:
                    stack[top] = c_sqrt(stack[top])
                elif op == OP_EXP:
                    stack[top] = c_exp(stack[top])
                elif op == OP_LOG:
                    stack[top] = c_log(stack[top])
            out[j] = stack[0]
    return out_arr


def hyp2f1_series(double a, double b, double c, double z, double rtol, int max_terms):
    """Gauss series by term recurrence; returns (sum, terms, converged)."""
    cdef double total = 1.0
    cdef double term = 1.0
    cdef int n = 0
    while n < max_terms:
        term *= (a + n) * (b + n) / ((c + n) * (n + 1.0)) * z
        total += term
        n += 1
        if term < 0.0:
            if -term <= rtol * (total if total >= 0.0 else -total):
                return total, n, True
        elif term <= rtol * (total if total >= 0.0 else -total):
            return total, n, True
    return total, n, False

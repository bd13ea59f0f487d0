"""Reference backend: stack programs interpreted with numpy.

Vectorizes over evaluation points, one instruction at a time. Domain
violations (division by zero, sqrt/log of a negative, overflow) are not
raised here; they surface as non-finite entries that the caller diagnoses.
"""

from __future__ import annotations

import numpy as np

from . import ops

NAME = "pure"


def eval_program(code, consts, stack_depth, x):
    """Run one stack program over an array of abscissae."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    stack = np.empty((stack_depth, x.size), dtype=np.float64)
    top = -1
    with np.errstate(all="ignore"):
        for k in range(0, len(code), 2):
            op = code[k]
            arg = code[k + 1]
            if op == ops.CONST:
                top += 1
                stack[top] = consts[arg]
            elif op == ops.XVAR:
                top += 1
                stack[top] = x
            elif op == ops.ADD:
                stack[top - 1] += stack[top]
                top -= 1
            elif op == ops.SUB:
                stack[top - 1] -= stack[top]
                top -= 1
            elif op == ops.MUL:
                stack[top - 1] *= stack[top]
                top -= 1
            elif op == ops.DIV:
                stack[top - 1] /= stack[top]
                top -= 1
            elif op == ops.NEG:
                np.negative(stack[top], out=stack[top])
            elif op == ops.POW:
                np.power(stack[top - 1], stack[top], out=stack[top - 1])
                top -= 1
            elif op == ops.POWI:
                stack[top] = _int_power(stack[top], int(arg))
            elif op == ops.SQRT:
                np.sqrt(stack[top], out=stack[top])
            elif op == ops.EXP:
                np.exp(stack[top], out=stack[top])
            elif op == ops.LOG:
                np.log(stack[top], out=stack[top])
            else:
                raise ValueError(f"unknown opcode {op}")
    return stack[0].copy()


def _int_power(base, k):
    # Exponentiation by squaring keeps integer powers exact for negative
    # bases, where a float pow would produce nan.
    if k == 0:
        return np.ones_like(base)
    n = abs(k)
    acc = None
    sq = base.copy()
    while n:
        if n & 1:
            acc = sq.copy() if acc is None else acc * sq
        n >>= 1
        if n:
            sq = sq * sq
    if k < 0:
        with np.errstate(all="ignore"):
            acc = 1.0 / acc
    return acc


def hyp2f1_series(a, b, c, z, rtol, max_terms):
    """Gauss series by term recurrence.

    Returns (partial sum, terms used, converged flag). The caller is
    responsible for parameter validation and argument reduction.
    """
    total = 1.0
    term = 1.0
    n = 0
    while n < max_terms:
        term *= (a + n) * (b + n) / ((c + n) * (n + 1.0)) * z
        total += term
        n += 1
        if abs(term) <= rtol * abs(total):
            return total, n, True
    return total, n, False

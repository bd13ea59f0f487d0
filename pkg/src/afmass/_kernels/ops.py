"""Opcode table for profile stack programs.

Mirrored as an enum in ``_fast.pyx``; keep the two in sync. Programs are
flat ``int32`` arrays of (opcode, argument) pairs. The argument is a
constant-pool index for CONST, a signed integer exponent for POWI, and 0
otherwise.
"""

CONST = 0
XVAR = 1
ADD = 2
SUB = 3
MUL = 4
DIV = 5
NEG = 6
POW = 7
POWI = 8
SQRT = 9
EXP = 10
LOG = 11

# POWI exponents outside this range compile to general POW.
POWI_MAX = 8

MAX_STACK = 64

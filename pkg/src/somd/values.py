"""Java primitive semantics shared by the interpreter and the generated code.

Integers are Python ints kept inside the two's-complement range of their
declared width; doubles are Python floats with IEEE division semantics.
Arrays are plain lists (2D arrays are lists of row lists).
"""
from __future__ import annotations

import math

INT_MIN, INT_MAX = -(1 << 31), (1 << 31) - 1
LONG_MIN, LONG_MAX = -(1 << 63), (1 << 63) - 1

_B32 = 1 << 32
_H32 = 1 << 31
_B64 = 1 << 64
_H64 = 1 << 63


def wrap32(x: int) -> int:
    return ((x + _H32) & (_B32 - 1)) - _H32


def wrap64(x: int) -> int:
    return ((x + _H64) & (_B64 - 1)) - _H64


def wrap(x: int, base: str) -> int:
    return wrap64(x) if base == "long" else wrap32(x)


def idiv(a: int, b: int, long: bool = False) -> int:
    """Java integer division: truncates toward zero; raises on zero divisor."""
    if b == 0:
        raise ZeroDivisionError("integer division by zero")
    q = abs(a) // abs(b)
    if (a < 0) != (b < 0):
        q = -q
    return wrap64(q) if long else wrap32(q)


def irem(a: int, b: int) -> int:
    """Java integer remainder: result takes the sign of the dividend."""
    if b == 0:
        raise ZeroDivisionError("integer remainder by zero")
    r = abs(a) % abs(b)
    return -r if a < 0 else r


def fdiv(a: float, b: float) -> float:
    try:
        return a / b
    except ZeroDivisionError:
        a = float(a)
        if a == 0.0 or a != a:
            return math.nan
        return math.copysign(math.inf, a) * math.copysign(1.0, b)


def frem(a: float, b: float) -> float:
    a, b = float(a), float(b)
    if b == 0.0 or math.isinf(a) or a != a or b != b:
        return math.nan
    if math.isinf(b):
        return a
    return math.fmod(a, b)


def d2i(x: float) -> int:
    """(int) cast of a double: NaN -> 0, saturating, truncating toward zero."""
    if x != x:
        return 0
    if x >= INT_MAX:
        return INT_MAX
    if x <= INT_MIN:
        return INT_MIN
    return int(x)


def d2l(x: float) -> int:
    if x != x:
        return 0
    if x >= LONG_MAX:
        return LONG_MAX
    if x <= LONG_MIN:
        return LONG_MIN
    return int(x)


def shl(a: int, n: int, long: bool = False) -> int:
    if long:
        return wrap64(a << (n & 63))
    return wrap32(a << (n & 31))


def shr(a: int, n: int, long: bool = False) -> int:
    return a >> (n & (63 if long else 31))


def ushr(a: int, n: int, long: bool = False) -> int:
    if long:
        return wrap64((a & (_B64 - 1)) >> (n & 63))
    return wrap32((a & (_B32 - 1)) >> (n & 31))


def coerce(value, base: str):
    """Convert a scalar to the representation of primitive type ``base``."""
    if base == "double":
        return float(value)
    if base == "int":
        if isinstance(value, float):
            return d2i(value)
        return wrap32(int(value))
    if base == "long":
        if isinstance(value, float):
            return d2l(value)
        return wrap64(int(value))
    if base == "boolean":
        return bool(value)
    raise TypeError(f"not a primitive type: {base}")


def default_value(base: str):
    return {"int": 0, "long": 0, "double": 0.0, "boolean": False}[base]


def new_array(base: str, dims: list):
    if any(d < 0 for d in dims):
        raise ValueError(f"negative array size {min(dims)}")
    fill = default_value(base)
    if len(dims) == 1:
        return [fill] * dims[0]
    if len(dims) == 2:
        return [[fill] * dims[1] for _ in range(dims[0])]
    raise ValueError("arrays of more than two dimensions are not supported")


def copy_array(a):
    if a and isinstance(a[0], list):
        return [list(r) for r in a]
    return list(a)


# -- java.lang.Math --------------------------------------------------------------


def m_sqrt(x: float) -> float:
    x = float(x)
    if x < 0 or x != x:
        return math.nan
    return math.sqrt(x)


def m_log(x: float) -> float:
    x = float(x)
    if x != x or x < 0:
        return math.nan
    if x == 0:
        return -math.inf
    return math.log(x)


def m_exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def m_pow(a: float, b: float) -> float:
    a, b = float(a), float(b)
    try:
        return math.pow(a, b)
    except OverflowError:
        if a < 0 and b == int(b) and int(b) % 2 == 1:
            return -math.inf
        return math.inf
    except ValueError:
        # zero to a negative power, or a negative base with a fractional exponent
        if a == 0.0:
            if b == int(b) and int(b) % 2 == 1:
                return math.copysign(math.inf, a)
            return math.inf
        return math.nan


def _trig(fn):
    def f(x):
        x = float(x)
        if math.isinf(x) or x != x:
            return math.nan
        return fn(x)
    return f


m_sin = _trig(math.sin)
m_cos = _trig(math.cos)
m_tan = _trig(math.tan)


def m_atan2(y: float, x: float) -> float:
    return math.atan2(float(y), float(x))


def m_floor(x: float) -> float:
    x = float(x)
    if math.isinf(x) or x != x:
        return x
    return float(math.floor(x))


def m_ceil(x: float) -> float:
    x = float(x)
    if math.isinf(x) or x != x:
        return x
    r = float(math.ceil(x))
    return -0.0 if r == 0.0 and x < 0 else r


def m_abs(x, base: str = "double"):
    if base == "double":
        return abs(float(x))
    return wrap(abs(x), base)


def m_max(a, b, base: str = "double"):
    if base != "double":
        return a if a >= b else b
    a, b = float(a), float(b)
    if a != a or b != b:
        return math.nan
    if a == b == 0.0:
        return b if math.copysign(1.0, a) < 0 else a
    return a if a >= b else b


def m_min(a, b, base: str = "double"):
    if base != "double":
        return a if a <= b else b
    a, b = float(a), float(b)
    if a != a or b != b:
        return math.nan
    if a == b == 0.0:
        return a if math.copysign(1.0, a) < 0 else b
    return a if a <= b else b


MATH_CONSTANTS = {"PI": math.pi, "E": math.e}

# math functions whose result is always double
DOUBLE_MATH = {
    "sqrt": m_sqrt, "sin": m_sin, "cos": m_cos, "tan": m_tan, "exp": m_exp,
    "log": m_log, "floor": m_floor, "ceil": m_ceil, "pow": m_pow, "atan2": m_atan2,
}


def to_f32(x: float) -> float:
    """Round a double to the nearest single-precision value."""
    import struct

    try:
        return struct.unpack("f", struct.pack("f", x))[0]
    except OverflowError:
        return math.copysign(math.inf, x)

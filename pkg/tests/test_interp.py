import math

import pytest

from somd.errors import SomdRuntimeError
from somd.frontend.parser import parse
from somd.interp import Interpreter

from conftest import engine, parsed


def run(src, name, *args):
    return Interpreter(parse(src)).call(name, list(args))


def gauss_seidel_stencil(G, iterations, c=0.25):
    """In-place sweep in source order, the sequential meaning of the stencil program."""
    G = [row[:] for row in G]
    for _ in range(iterations):
        for i in range(1, len(G) - 1):
            for j in range(1, len(G[0]) - 1):
                G[i][j] = (G[i - 1][j] + G[i + 1][j] + G[i][j - 1] + G[i][j + 1]) + c * G[i][j]
    return sum(G[i][j] for i in range(1, len(G) - 1) for j in range(1, len(G[0]) - 1))


def test_vector_add():
    assert Interpreter(parsed("vector_add.somd")).call("vectorAdd", [[1], [2]]) == [3]


def test_array_sum():
    assert Interpreter(parsed("array_sum.somd")).call("sum", [list(range(1, 11))]) == 55


def test_stencil_matches_hand_oracle():
    G = [[float(4 * i + j + 1) for j in range(4)] for i in range(4)]
    assert gauss_seidel_stencil(G, 2) == 1373.0  # frozen from the plain-Python sweep
    assert Interpreter(parsed("stencil.somd")).call("stencil", [G, 2]) == 1373.0


def test_int_arithmetic_wraps_like_java():
    src = """
    int add(int a, int b) { return a + b; }
    int div(int a, int b) { return a / b; }
    int mod(int a, int b) { return a % b; }
    int ushr(int a, int s) { return a >>> s; }
    long ladd(long a, long b) { return a + b; }
    int narrow(long a) { return (int) a; }
    """
    assert run(src, "add", 2**31 - 1, 1) == -(2**31)
    assert run(src, "div", -7, 2) == -3
    assert run(src, "mod", -7, 2) == -1
    assert run(src, "ushr", -1, 28) == 15
    assert run(src, "ladd", 2**63 - 1, 1) == -(2**63)
    assert run(src, "narrow", 2**32 + 5) == 5


def test_double_semantics():
    src = """
    double q(double a, double b) { return a / b; }
    int trunc(double a) { return (int) a; }
    """
    assert run(src, "q", 1.0, 0.0) == math.inf
    assert math.isnan(run(src, "q", 0.0, 0.0))
    assert run(src, "trunc", -2.7) == -2


def test_out_of_bounds_has_location():
    src = "int f(int[] a) {\n  return a[3];\n}"
    with pytest.raises(SomdRuntimeError) as info:
        run(src, "f", [1, 2])
    assert info.value.loc.line == 2


def test_integer_division_by_zero():
    with pytest.raises(SomdRuntimeError):
        run("int f(int a) { return 1 / a; }", "f", 0)


def test_parallel_qualifiers_are_ignored():
    prog = parsed("normalize.somd")
    assert Interpreter(prog).call("normalize", [[3, 4]]) == [0, 0]  # int division truncates


def test_determinism():
    e = engine("stencil.somd")
    G = [[(i * 7 + j * 3) % 5 + 0.5 for j in range(6)] for i in range(5)]
    first = e.run("stencil", [G, 3], "seq")
    assert all(repr(e.run("stencil", [G, 3], "seq")) == repr(first) for _ in range(3))


def test_arguments_are_not_mutated():
    a = [1.0, 2.0]
    e = engine("norm.somd")
    e.run("norm", [a], "seq")
    assert a == [1.0, 2.0]

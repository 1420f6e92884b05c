import random

import pytest

from somd import corpus
from somd.errors import SomdRuntimeError

from conftest import source_engine


@pytest.mark.parametrize("name", sorted(corpus.PROGRAMS))
def test_compiled_sequential_code_equals_the_interpreter(name):
    prog = corpus.get(name)
    e = prog.load()
    small = corpus.SMALL_PARAMS.get(name, {})
    rng = random.Random(11)
    for _ in range(5):
        args = prog.make_args(rng, rng.randint(prog.min_size, prog.small_size), **small)
        assert repr(e.run_compiled_seq(prog.entry, args)) == repr(e.run(prog.entry, args, "seq"))


@pytest.mark.parametrize("check", [False, True])
def test_runtime_errors_carry_the_source_line(check):
    src = "int f(int[] a) {\n  int s = 0;\n  s = a[5];\n  return s;\n}"
    e = source_engine(src, check=check)
    with pytest.raises(SomdRuntimeError) as info:
        e.run_compiled_seq("f", [[1, 2]])
    assert info.value.loc.line == 3


def test_division_by_zero_is_translated():
    e = source_engine("int f(int a) {\n  return 7 / a;\n}")
    with pytest.raises(SomdRuntimeError) as info:
        e.run_compiled_seq("f", [0])
    assert info.value.loc.line == 2


def test_int_overflow_wraps_in_compiled_code():
    e = source_engine("int f(int a) { return a * a + 1; }")
    assert e.run_compiled_seq("f", [65536]) == 1

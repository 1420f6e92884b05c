import json
import os

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from somd import corpus
from somd.cli import main
from somd.errors import CompileError, ParseError
from somd.frontend import ast as A
from somd.frontend.checker import check_program, validate
from somd.frontend.lexer import tokenize
from somd.frontend.parser import parse, parse_expression
from somd.frontend.printer import expr as print_expr, format_program

from conftest import PROGRAMS, parsed, program_source


def codes(src):
    return [d.code for d in check_program(parse(src)) if d.severity == "error"]


def test_vector_add_has_two_dist_params_and_assembly_reduce():
    prog = parsed("vector_add.somd")
    m = prog.method("vectorAdd")
    assert [p.dist is not None for p in m.params] == [True, True]
    assert m.reduce is None
    assert m.effective_reduce().kind == "assembly"


def test_minimal_method_parses():
    prog = parse("int f(){return 0;}")
    m = prog.methods[0]
    assert m.name == "f" and m.params == [] and m.reduce is None
    validate(prog)
    assert not m.info.somd


def test_stencil_view_reduce_and_sync():
    m = parsed("stencil.somd").method("stencil")
    assert m.params[0].dist.view == ((1, 1), (1, 1))
    assert m.reduce.kind == "prim" and m.reduce.op == "+"
    syncs = [s for s in A.walk_stmts(m.body) if isinstance(s, A.Sync)]
    assert len(syncs) == 1


def test_vector_add_loop_rank_and_induction_variable():
    m = parsed("vector_add.somd").method("vectorAdd")
    loops = [s for s in A.walk_stmts(m.body) if isinstance(s, A.For)]
    assert len(loops) == 1
    assert loops[0].info.rank == 0 and loops[0].info.iv == "i"
    assert loops[0].info.driver == ("a", 0)


def test_write_to_plain_parameter_is_input_only_violation():
    assert "INPUT_ONLY_VIOLATION" in codes("int f(int[] a){ a[0] = 1; return 0; }")


def test_dist_parameter_may_be_written():
    assert codes("int[] f(dist int[] a){ for (int i = 0; i < a.length; i++) a[i] = 1; return a; }") == []


def test_conditional_nested_reduction_rejected():
    src = program_source("norm.somd").replace(
        "double norm  = Math.sqrt(sumProd(a));",
        "double norm = 1; if (a.length > 0) norm = Math.sqrt(sumProd(a));")
    assert "CONDITIONAL_NESTED_REDUCTION" in codes(src)


def test_loop_bound_on_local_rejected():
    src = """int[] f(dist int[] a) {
      int n = 3;
      n = n + 1;
      for (int i = 0; i < n; i++) a[i] = 0;
      return a;
    }"""
    assert "LOOP_BOUND_LOCAL" in codes(src)


def test_unknown_strategy_rejected():
    assert "UNKNOWN_STRATEGY" in codes("int[] f(dist(Nope) int[] a){ return a; }")


def test_view_and_polyview_are_exclusive():
    src = "double f(dist(view = <1,1>, polyview = <1,1>) double[] a){ return 0; }"
    assert "VIEW_POLYVIEW_EXCLUSIVE" in codes(src)


def test_polyview_is_accepted():
    prog = parse("double f(dist(polyview = <1,1>, <1,1>) double[][] a){ return 0; }")
    assert prog.methods[0].params[0].dist.polyview == ((1, 1), (1, 1))


def test_dim_out_of_range_rejected():
    assert "DIM_OUT_OF_RANGE" in codes("int[] f(dist(dim = 2) int[] a){ return a; }")


def test_shared_write_without_sync_reduce_rejected():
    src = """double f(dist double[] a) {
      shared double s = 0;
      for (int i = 0; i < a.length; i++) s += a[i];
      return s;
    }"""
    assert "SHARED_WITHOUT_REDUCE" in codes(src)


def test_syntax_error_reports_line_and_column():
    with pytest.raises(ParseError) as info:
        parse("int f() {\n  return 0\n}")
    assert info.value.loc.line in (2, 3) and info.value.loc.col > 0


def test_unknown_qualifier_is_a_syntax_error():
    with pytest.raises(ParseError):
        parse("int f(distributed int[] a){ return 0; }")


def test_validate_raises_with_every_diagnostic():
    with pytest.raises(CompileError) as info:
        validate(parse("int f(int[] a){ a[0] = 1; b = 2; return 0; }"))
    got = {d.code for d in info.value.diagnostics}
    assert {"INPUT_ONLY_VIOLATION", "UNKNOWN_VARIABLE"} <= got


def test_diag_json_output(tmp_path, capsys):
    bad = tmp_path / "bad.somd"
    bad.write_text("int f(int[] a){\n  a[0] = 1;\n  return 0;\n}\n")
    assert main(["check", str(bad), "--diag-json"]) == 1
    diags = json.loads(capsys.readouterr().out)
    assert diags[0]["code"] == "INPUT_ONLY_VIOLATION"
    assert diags[0]["line"] == 2 and diags[0]["column"] > 0


def _all_sources():
    out = [(n, program_source(n)) for n in sorted(os.listdir(PROGRAMS)) if n.endswith(".somd")]
    out += [(p.name, p.source()) for p in corpus.PROGRAMS.values()]
    return out


@pytest.mark.parametrize("name,src", _all_sources(), ids=[n for n, _ in _all_sources()])
def test_print_then_parse_round_trip(name, src):
    prog = parse(src, "P")
    again = parse(format_program(prog), "P")
    assert again == prog


@pytest.mark.parametrize("name,src", _all_sources(), ids=[n for n, _ in _all_sources()])
def test_loop_ranks_are_consecutive_from_zero(name, src):
    prog = parse(src, "P")
    validate(prog)
    for m in prog.methods:
        ranks = [s.info.rank for s in A.walk_stmts(m.body) if isinstance(s, A.For)]
        assert ranks == list(range(len(ranks)))


def test_lexer_locations():
    toks = tokenize("int x;\n  x = 1;")
    xs = [t for t in toks if t.text == "x"]
    assert [(t.loc.line, t.loc.col) for t in xs] == [(1, 5), (2, 3)]


# -- random expressions survive printing -------------------------------------------------

_leaf = st.one_of(
    st.integers(0, 1000).map(str),
    st.sampled_from(["a", "b", "c", "x[i]", "m[i][j]", "a.length", "1.5", "0.25"]),
)


def _combine(children):
    binop = st.sampled_from(["+", "-", "*", "/", "%", "<<", ">>", ">>>", "&", "|", "^", "<", "==", "&&"])
    return st.one_of(
        st.tuples(children, binop, children).map(lambda t: f"({t[0]} {t[1]} {t[2]})"),
        children.map(lambda c: f"-({c})"),
        st.tuples(children, children).map(lambda t: f"Math.max({t[0]}, {t[1]})"),
        st.tuples(children, children, children).map(lambda t: f"({t[0]} ? {t[1]} : {t[2]})"),
    )


@settings(max_examples=300, deadline=None)
@given(st.recursive(_leaf, _combine, max_leaves=12))
def test_expression_print_parse_round_trip(text):
    e = parse_expression(text)
    assert parse_expression(print_expr(e)) == e

import pytest
from hypothesis import given
from hypothesis import strategies as st

from somd import corpus
from somd.codegen import eval_constants
from somd.errors import LoweringError
from somd.frontend.checker import validate
from somd.frontend.parser import parse
from somd.planner_gpu import grid_config, lower_gpu

from conftest import parsed


def plan_for(prog, name, max_group=256):
    return lower_gpu(prog, prog.method(name), eval_constants(prog), max_group)


def plan_src(src, name, max_group=256):
    prog = parse(src)
    validate(prog)
    return plan_for(prog, name, max_group)


# -- grid -------------------------------------------------------------------------------


def test_grid_million_threads_in_groups_of_512():
    g = grid_config(1_000_000, 512)
    assert (g.n_groups, g.group_size, g.total_threads) == (1954, 512, 1_000_448)


def test_grid_exact_fit():
    g = grid_config(512, 512)
    assert (g.n_groups, g.group_size, g.total_threads) == (1, 512, 512)


def test_grid_rounds_up():
    g = grid_config(1000, 256)
    assert (g.n_groups, g.total_threads) == (4, 1024)


def test_grid_rejects_bad_arguments():
    with pytest.raises(ValueError):
        grid_config(-1, 4)
    with pytest.raises(ValueError):
        grid_config(10, 0)


@given(st.integers(0, 10**7), st.integers(1, 1024))
def test_grid_invariants(size, group):
    g = grid_config(size, group)
    assert g.total_threads == g.n_groups * g.group_size
    assert g.total_threads >= size
    assert g.total_threads - size < g.group_size
    assert g.group_size == group


# -- kernels ----------------------------------------------------------------------------


def test_vector_add_is_one_guarded_kernel():
    plan = plan_for(parsed("vector_add.somd"), "vectorAdd")
    assert len(plan.kernels) == 1
    k = plan.kernels[0]
    assert k.kind == "map" and k.guard_text() == "if (i >= 0 && i < a.length)"
    assert plan.transfers_in == ["a", "b"]
    assert plan.transfers_out == ["c"]
    assert plan.launches() == [("K1", "once")]


def test_stencil_splits_into_update_and_reduction_kernels():
    plan = plan_for(parsed("stencil.somd"), "stencil")
    assert [k.kind for k in plan.kernels] == ["map", "reduce"]
    assert plan.launches() == [("K1", "for p < num_iterations"), ("K2", "once")]
    assert plan.transfers_in == ["G"]
    assert plan.transfers_out == ["K2.partials0"]
    assert plan.host_reduction.op == "+"
    acc = plan.kernels[1].accumulators[0]
    assert (acc.name, acc.op) == ("Gtotal", "+")
    assert "globalId / " in plan.kernels[0].mapping_text()
    assert "flattened row-major" in plan.to_text()


def test_sor_has_one_kernel_per_parallel_loop():
    prog = corpus.get("sor").load().prog
    plan = plan_for(prog, "sor")
    assert [k.kind for k in plan.kernels] == ["map", "map", "reduce"]
    assert plan.launches() == [("K1", "for p < iterations"), ("K2", "for p < iterations"), ("K3", "once")]
    assert plan.transfers_in == ["G"]


def test_sum_reduces_on_device_then_self_on_host():
    plan = plan_for(parsed("array_sum.somd"), "sum")
    assert [k.kind for k in plan.kernels] == ["reduce"]
    assert plan.host_reduction.kind == "self"


def test_method_without_loops_becomes_a_single_thread_kernel():
    plan = plan_src("int[] f(dist int[] a) { a[0] = 7; return a; }", "f")
    assert [k.kind for k in plan.kernels] == ["serial"]
    k = plan.kernels[0]
    assert k.guard_text() == "if (globalId == 0)"
    assert [k.thread_index(g, ()) for g in range(3)] == [(), None, None]


def test_user_strategy_is_ignored_with_a_warning():
    src = """reduce(+)
    double total(dist(RowDisjoint(row)) double[] val, int[] row) {
      double s = 0;
      for (int i = 0; i < val.length; i++) s += val[i];
      return s;
    }"""
    plan = plan_src(src, "total")
    assert any("GPU_STRATEGY_IGNORED" in w for w in plan.warnings)


def test_indirect_write_is_rejected():
    prog = corpus.get("sparsematmult").load().prog
    with pytest.raises(LoweringError, match="indirect write"):
        plan_for(prog, "multiply")


def test_shared_scalar_non_reduction_write_is_rejected():
    src = """double f(dist double[] a) {
      shared double s = 0;
      sync reduce(+) (s) {
        for (int i = 0; i < a.length; i++) s = a[i];
      }
      return s;
    }"""
    with pytest.raises(LoweringError):
        plan_src(src, "f")


@pytest.mark.parametrize("lb,ub,step,n", [(0, 10, 1, 10), (3, 10, 1, 7), (0, 21, 8, 3), (5, 5, 1, 0),
                                          (0, 16, 8, 2)])
def test_one_dimensional_guard_matches_the_loop(lb, ub, step, n):
    src = f"""int[] f(dist int[] a) {{
      for (int i = {lb}; i < a.length - {30 - ub}; i += {step}) a[i] = 1;
      return a;
    }}"""
    k = plan_src(src, "f").kernels[0]
    bounds = (lb, ub)
    size = k.size(bounds)
    assert size == n
    grid = grid_config(size, 4)
    got = [k.thread_index(g, bounds) for g in range(grid.total_threads)]
    assert [t[0] for t in got if t is not None] == list(range(lb, ub, step))


@given(st.integers(0, 6), st.integers(0, 6), st.integers(0, 6), st.integers(0, 6), st.integers(1, 8))
def test_two_dimensional_guard_matches_the_nest(lb0, span0, lb1, span1, group):
    k = plan_for(parsed("stencil.somd"), "stencil").kernels[0]
    bounds = (lb0, lb0 + span0, lb1, lb1 + span1)
    size = k.size(bounds)
    grid = grid_config(size, group)
    got = [k.thread_index(g, bounds) for g in range(grid.total_threads)]
    want = [(i, j) for i in range(lb0, lb0 + span0) for j in range(lb1, lb1 + span1)]
    assert [t for t in got if t is not None] == want


def test_every_gpu_eligible_corpus_method_lowers():
    for prog in corpus.PROGRAMS.values():
        p = prog.load().prog
        for m in p.methods:
            if not m.info.somd:
                continue
            if prog.gpu_eligible:
                assert plan_for(p, m.name).kernels

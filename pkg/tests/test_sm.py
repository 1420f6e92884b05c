import random
import threading

import pytest

from somd import corpus
from somd.engine import Options
from somd.errors import DeadlockError, MIFailure, SomdRuntimeError
from somd.frontend import ast as A
from somd.planner_sm import lower_master_sm
from somd.runtime_sm import Phaser, ResultsVector, WorkerPool, execute_sm

from conftest import engine, parsed, source_engine

PRODUCT = """
int[] fill(dist int[] a) {
  int p = prod(a);
  for (int i = 0; i < a.length; i++)
    a[i] = p;
  return a;
}

reduce(*)
int prod(int[] a) {
  int p = 1;
  for (int i = 0; i < a.length; i++)
    p *= a[i];
  return p;
}
"""


# -- planner ----------------------------------------------------------------------------


def test_vector_add_plan():
    prog = parsed("vector_add.somd")
    plan = lower_master_sm(prog.method("vectorAdd"), 4, prog)
    assert [pc.value for pc in plan.partition_calls] == ["a", "b"]
    assert plan.fence_parties == 4 and plan.completed_parties == 5
    assert plan.reduce_spec.kind == "assembly"


def test_sum_plan_with_one_slave():
    prog = parsed("array_sum.somd")
    plan = lower_master_sm(prog.method("sum"), 1, prog)
    assert plan.n_slaves == 1 and plan.reduce_spec.kind == "self"
    assert [pc.parts for pc in plan.partition_calls] == [1]


def test_stencil_plan_partitions_both_dimensions_with_views():
    prog = parsed("stencil.somd")
    plan = lower_master_sm(prog.method("stencil"), 8, prog)
    assert [(pc.value, pc.dim, pc.view) for pc in plan.partition_calls] == [("G", 0, (1, 1)), ("G", 1, (1, 1))]
    assert plan.grid["G"] == (2, 4)
    assert plan.reduce_spec.op == "+"


def test_slave_body_rewrites_returns_and_clamps_loops():
    prog = parsed("stencil.somd")
    plan = lower_master_sm(prog.method("stencil"), 4, prog)
    stmts = [s for top in plan.slave.body for s in A.walk_stmts(top)]
    assert not any(isinstance(s, A.Return) for s in stmts)
    assert sum(isinstance(s, A.ResultStore) for s in stmts) == 1
    assert sum(isinstance(s, A.Fence) for s in stmts) == 1
    text = plan.to_text()
    assert "for (int i = Math.max(1, G_1[0]); i < Math.min(G.length - 1, G_1[1]); i++)" in text
    assert "for (int j = Math.max(1, G_2[0]); j < Math.min(G[0].length - 1, G_2[1]); j++)" in text


def test_full_extent_loop_takes_the_range_bounds():
    prog = parsed("vector_add.somd")
    text = lower_master_sm(prog.method("vectorAdd"), 2, prog).to_text()
    assert "for (int i = a_1[0]; i < a_1[1]; i++)" in text


def test_plan_is_deterministic():
    prog = parsed("stencil.somd")
    m = prog.method("stencil")
    assert lower_master_sm(m, 6, prog).to_text() == lower_master_sm(m, 6, prog).to_text()


def test_shared_declarations_leave_the_slave_body():
    prog = corpus.get("normalize").load().prog
    plan = lower_master_sm(prog.method("normalize"), 3, prog)
    assert [name for name, _, _ in plan.shared_decls] == ["norm"]
    decls = [s for top in plan.slave.body for s in A.walk_stmts(top) if isinstance(s, A.VarDecl)]
    assert all(not d.shared for d in decls)


# -- runtime ----------------------------------------------------------------------------


def test_vector_add_two_slaves():
    e = engine("vector_add.somd", n_slaves=2)
    assert e.run("vectorAdd", [[1, 2, 3, 4], [10, 20, 30, 40]], "sm") == [11, 22, 33, 44]


def test_sum_four_slaves():
    e = engine("array_sum.somd", n_slaves=4)
    assert e.run("sum", [list(range(1, 101))], "sm") == 5050


def test_normalize_two_slaves():
    e = corpus.get("normalize").load(options=Options(n_slaves=2))
    out = e.run("normalize", [[3.0, 4.0]], "sm")
    assert out == pytest.approx([0.6, 0.8], rel=1e-15)


def test_nested_reduction_gives_every_instance_the_total():
    e = corpus.get("norm").load(options=Options(n_slaves=3))
    assert e.run("norm", [[1.0, 2.0, 2.0]], "sm") == pytest.approx([1 / 3, 2 / 3, 2 / 3], rel=1e-15)


def test_product_reduction_with_zero_operand():
    e = source_engine(PRODUCT, n_slaves=3)
    assert e.run("fill", [[1, 2, 0, 3]], "sm") == [0, 0, 0, 0]
    assert e.run("fill", [[1, 2, 3, 4]], "sm") == [24, 24, 24, 24]


def test_more_slaves_than_elements():
    e = engine("array_sum.somd", n_slaves=8)
    assert e.run("sum", [[1, 2]], "sm") == 3
    assert e.run("sum", [[]], "sm") == 0


def test_execute_sm_entry_point():
    e = engine("vector_add.somd")
    assert execute_sm(e.module, "vectorAdd", [[1, 2, 3], [1, 1, 1]], n_slaves=2, workers=2) == [2, 3, 4]


def test_mi_failure_reports_the_source_location():
    src = """int[] f(dist int[] a) {
      for (int i = 0; i < a.length; i++)
        a[i] = a[i] / (a[i] - 2);
      return a;
    }"""
    e = source_engine(src, n_slaves=3)
    with pytest.raises((MIFailure, SomdRuntimeError)) as info:
        e.run("f", [[1, 2, 3]], "sm")
    assert info.value.loc.line == 3


@pytest.mark.parametrize("name", ["sum", "normalize", "sor", "crypt"])
def test_schedule_independence_under_stress(name):
    prog = corpus.get(name)
    args = prog.make_args(random.Random(3), prog.small_size, **corpus.SMALL_PARAMS.get(name, {}))
    outs = set()
    for seed in range(100):
        e = prog.load(options=Options(n_slaves=4, workers=3, stress_seed=seed))
        outs.add(repr(e.run(prog.entry, args, "sm")))
    assert len(outs) == 1


@pytest.mark.parametrize("name", sorted(corpus.PROGRAMS))
def test_edge_specialization_gives_identical_outputs(name):
    prog = corpus.get(name)
    args = prog.make_args(random.Random(5), prog.small_size, **corpus.SMALL_PARAMS.get(name, {}))
    plain = prog.load(options=Options(n_slaves=3)).run(prog.entry, args, "sm")
    special = prog.load(options=Options(n_slaves=3, specialize=True)).run(prog.entry, args, "sm")
    assert repr(plain) == repr(special)


def test_concurrent_invocations_are_independent():
    e = engine("array_sum.somd", n_slaves=3, workers=2)
    inputs = [list(range(k)) for k in range(20)]
    results = [None] * len(inputs)

    def work(k):
        results[k] = e.run("sum", [inputs[k]], "sm")

    threads = [threading.Thread(target=work, args=(k,)) for k in range(len(inputs))]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert results == [sum(x) for x in inputs]


# -- primitives -------------------------------------------------------------------------


def test_phaser_advances_when_the_last_party_arrives():
    ph = Phaser(3)
    ph.arrive()
    ph.arrive()
    assert ph.phase == 0 and ph.arrived == 2
    ph.arrive()
    assert ph.phase == 1 and ph.arrived == 0


def test_phaser_blocks_until_all_arrive():
    ph = Phaser(3)
    passed = []

    def party(k):
        ph.arrive_and_await_advance(timeout=5)
        passed.append((k, ph.phase))

    threads = [threading.Thread(target=party, args=(k,)) for k in range(2)]
    for t in threads:
        t.start()
    threads[0].join(0.05)
    assert passed == []  # nobody passes with one party missing
    ph.arrive_and_await_advance(timeout=5)
    for t in threads:
        t.join()
    assert sorted(k for k, _ in passed) == [0, 1]
    assert all(phase >= 1 for _, phase in passed)


def test_phaser_timeout_reports_state():
    ph = Phaser(2)
    with pytest.raises(DeadlockError) as info:
        ph.arrive_and_await_advance(timeout=0.05)
    assert "arrived" in str(info.value)


def test_results_cell_is_write_once():
    rv = ResultsVector(2, check=True)
    rv.store(0, 1)
    with pytest.raises(SomdRuntimeError):
        rv.store(0, 2)


def test_worker_pool_runs_queued_tasks():
    pool = WorkerPool(2, seed=1)
    done = threading.Semaphore(0)
    out = []
    for k in range(10):
        pool.submit(lambda k=k: (out.append(k), done.release()))
    for _ in range(10):
        assert done.acquire(timeout=5)
    pool.shutdown()
    assert sorted(out) == list(range(10))

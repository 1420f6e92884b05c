import json
import struct

import pytest

from somd import corpus
from somd.device_sim import DeviceState, GPURunner
from somd.engine import Options
from somd.errors import DeviceFault, HazardError, LedgerViolation

from conftest import engine, source_engine

# group g writes a[4g..4g+3] and reads a[4g+4..4g+7], which group g+1 writes
HAZARD = """int[] shift(dist int[] a) {
  for (int i = 0; i < a.length; i++)
    a[i] = a[(i + 4) % a.length] + 1;
  return a;
}"""


def sor_oracle(G, iterations, omega=0.9):
    """Two-buffer damped relaxation written out by hand."""
    G = [row[:] for row in G]
    for _ in range(iterations):
        B = [row[:] for row in G]
        for i in range(1, len(G) - 1):
            for j in range(1, len(G[0]) - 1):
                B[i][j] = omega * 0.25 * (G[i - 1][j] + G[i + 1][j] + G[i][j - 1] + G[i][j + 1]) \
                    + (1.0 - omega) * G[i][j]
        G = B
    return sum(G[i][j] for i in range(1, len(G) - 1) for j in range(1, len(G[0]) - 1))


def test_vector_add_masks_the_overhanging_thread():
    e = engine("vector_add.somd", gpu_max_group=4)
    assert e.run("vectorAdd", [[1, 2, 3], [4, 5, 6]], "gpu-sim") == [5, 7, 9]
    (launch,) = e.last_device_state().launches
    assert (launch.size, launch.n_groups, launch.group_size) == (3, 1, 4)


def test_empty_vector_add():
    e = engine("vector_add.somd", gpu_max_group=4)
    assert e.run("vectorAdd", [[], []], "gpu-sim") == []
    (launch,) = e.last_device_state().launches
    assert launch.size == 0 and launch.n_groups == 0


def test_sum_folds_group_partials_on_the_host():
    e = engine("array_sum.somd", gpu_max_group=4)
    assert e.run("sum", [list(range(1, 17))], "gpu-sim") == 136
    dev = e.last_device_state()
    assert dev.buffers["K1.partials0"] == [10, 26, 42, 58]
    gets = [r for r in dev.ledger.records if r.direction == "d2h"]
    assert [(r.buffer, r.nbytes) for r in gets] == [("K1.partials0", 16)]


def test_sor_two_sweeps_match_the_hand_oracle():
    G = [[float((4 * i + j) ** 2) for j in range(4)] for i in range(4)]
    assert sor_oracle(G, 2) == pytest.approx(289.43, rel=1e-15)  # frozen from the hand oracle
    e = corpus.get("sor").load(options=Options(gpu_max_group=2, gpu_strict_hazards=True))
    assert e.run("sor", [G, 2], "gpu-sim") == pytest.approx(289.43, rel=1e-12)


def test_stencil_ledger_shape():
    e = engine("stencil.somd", gpu_max_group=256)
    G = [[float(4 * i + j) for j in range(4)] for i in range(4)]
    e.run("stencil", [G, 3], "gpu-sim")
    s = e.last_device_state().summary()
    assert s["launches"] == {"K1": 3, "K2": 1}
    assert s["transfers"] == {"G": {"put": 1, "get": 0}, "K2.partials0": {"put": 0, "get": 1}}


def test_cross_group_hazard_is_recorded_and_strict_mode_fails():
    data = list(range(8))
    lenient = source_engine(HAZARD, gpu_max_group=4)
    lenient.run("shift", [data], "gpu-sim")
    dev = lenient.last_device_state()
    assert dev.hazard_count > 0
    h = dev.hazards[0]
    assert h.buffer == "a" and h.writer != h.reader
    strict = source_engine(HAZARD, gpu_max_group=4, gpu_strict_hazards=True)
    with pytest.raises(HazardError):
        strict.run("shift", [data], "gpu-sim")


def test_single_group_has_no_cross_group_hazard():
    e = source_engine(HAZARD, gpu_max_group=8, gpu_strict_hazards=True)
    e.run("shift", [list(range(8))], "gpu-sim")
    assert e.last_device_state().hazard_count == 0


def test_out_of_bounds_is_a_device_fault_with_global_id():
    src = """int[] f(dist int[] a) {
      int[] c = new int[a.length];
      for (int i = 0; i < a.length; i++)
        c[i] = a[i + 1];
      return c;
    }"""
    e = source_engine(src, gpu_max_group=2)
    with pytest.raises(DeviceFault) as info:
        e.run("f", [[1, 2, 3]], "gpu-sim")
    assert "global id 2" in str(info.value)
    assert info.value.loc.line == 4


def test_get_of_a_buffer_never_transferred():
    e = engine("vector_add.somd")
    runner = e.gpu
    dev = DeviceState(runner.compiled("vectorAdd"))
    with pytest.raises(LedgerViolation):
        dev.get("a")


def test_fresh_state_reproduces_outputs():
    prog = corpus.get("normalize")
    args = [[0.1 * k - 0.7 for k in range(13)]]
    runs = [prog.load(options=Options(gpu_max_group=4, gpu_seed=7)).run(prog.entry, args, "gpu-sim")
            for _ in range(2)]
    assert repr(runs[0]) == repr(runs[1])


def test_force_f32_rounds_to_single_precision():
    e = corpus.get("norm").load(options=Options(force_f32=True, gpu_max_group=4))
    out = e.run("norm", [[1.0, 2.0, 2.0, 0.1]], "gpu-sim")
    for x in out:
        assert struct.unpack("f", struct.pack("f", x))[0] == x
    exact = corpus.get("norm").load().run("norm", [[1.0, 2.0, 2.0, 0.1]], "seq")
    assert out == pytest.approx(exact, rel=1e-6)


def test_ledger_json_dump():
    e = engine("vector_add.somd")
    e.run("vectorAdd", [[1], [2]], "gpu-sim")
    doc = json.loads(e.last_device_state().ledger_json())
    assert [t["direction"] for t in doc["transfers"]] == ["h2d", "h2d", "d2h"]
    assert doc["hazards"] == []


def test_runner_reports_ineligible_methods():
    runner = GPURunner(corpus.get("sparsematmult").load().module)
    assert "indirect write" in runner.ineligible("multiply")
    assert runner.ineligible("spmv") is None or isinstance(runner.ineligible("spmv"), str)

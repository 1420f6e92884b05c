import random

import pytest

from somd import corpus
from somd.bench import BenchError, bench, middle_tier_mean


@pytest.mark.parametrize("length", [0, 1, 7, 8, 10, 100_000])
def test_crypt_round_trip(length):
    prog = corpus.get("crypt")
    data, key = prog.make_args(random.Random(length), length)
    e = prog.load()
    assert e.run_compiled_seq("roundTrip", [data, key]) == data
    if length <= 10:
        assert e.run("roundTrip", [data, key], "sm") == data
        assert e.run("roundTrip", [data, key], "seq") == data


def test_cipher_changes_the_data():
    prog = corpus.get("crypt")
    data, key = prog.make_args(random.Random(2), 64)
    assert prog.load().run("cipher", [data, key], "sm") != data


def test_lufact_solves_a_64_by_64_system():
    prog = corpus.get("lufact")
    cols, b = prog.make_args(random.Random(4), 64)
    x = prog.load().run("luSolve", [cols, b], "sm")
    residual = max(abs(sum(cols[j][i] * x[j] for j in range(64)) - b[i]) for i in range(64))
    assert residual <= 1e-8


def test_sparse_matrix_is_sorted_by_row():
    val, row, col = corpus.sparse_matrix(random.Random(1), 10, 50)
    assert row == sorted(row) and len(val) == len(col) == 50
    assert corpus.sparse_matrix(random.Random(1), 0, 50) == ([], [], [])


def test_output_comparison():
    assert corpus.outputs_match([1, 2], [1, 2])
    assert not corpus.outputs_match([1, 2], [1.0, 2.0])  # exact mode compares types too
    assert corpus.outputs_match([1.0, 1e-20], [1.0, 2e-20], rel=1e-12)  # scale is the largest element
    assert not corpus.outputs_match([1.0, 2.0], [1.0, 2.1], rel=1e-3)
    assert not corpus.outputs_match([1.0], [1.0, 2.0], rel=1.0)


def test_checksum_weights_position():
    assert corpus.checksum([1, 2]) != corpus.checksum([2, 1])
    assert corpus.checksums_match(1.0, 1.0 + 1e-13, 1e-12)
    assert not corpus.checksums_match(1.0, 1.1, 1e-3)


def test_middle_tier_mean_drops_the_outer_thirds():
    assert middle_tier_mean([100.0, 1.0, 2.0, 3.0, 4.0, 5.0, 0.0, 6.0, 50.0]) == 4.0
    assert middle_tier_mean([2.0]) == 2.0


@pytest.mark.parametrize("backend", ["sm", "gpu-sim", "seq"])
def test_bench_smoke(backend):
    r = bench("sum", backend, size=200, reps=3, n_slaves=2, workers=2)
    assert r.checksum == r.oracle_checksum and len(r.times) == 3
    assert r.baseline_seq > 0
    assert (r.ledger is not None) == (backend == "gpu-sim")


def test_bench_rejects_a_wrong_result(monkeypatch):
    monkeypatch.setattr(corpus, "checksum", lambda v, _calls=iter(range(10)): float(next(_calls)))
    with pytest.raises(BenchError, match="differs"):
        bench("sum", "sm", size=10, reps=1, baseline=False, speedup=False)


def test_bench_rejects_a_size_below_the_minimum():
    with pytest.raises(BenchError):
        bench("sor", "sm", size=0, reps=1)

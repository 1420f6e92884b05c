"""Benchmark driver: timed repetitions of a corpus program on one backend.

Each report carries the middle-tier average of the repetitions, the output
checksum validated against the sequential interpreter, and baselines: the
compiled sequential code and, on sm, the same backend with a single slave.
"""
from __future__ import annotations

import json
import logging
import os
import random
import time
from dataclasses import asdict, dataclass, field
from typing import Optional

from . import corpus
from .engine import Options
from .errors import SomdError
from .runtime_sm import default_workers

log = logging.getLogger("somd")


class BenchError(SomdError):
    code = "BENCH_ERROR"


@dataclass
class BenchReport:
    program: str
    backend: str
    size: int
    reps: int
    n_slaves: Optional[int]  # sm only
    grid: Optional[dict]  # gpu-sim only: max group size and seed
    cores: int
    times: list
    middle_tier_mean: float
    checksum: float
    oracle_checksum: float
    baseline_seq: Optional[float] = None  # compiled sequential code, middle-tier mean
    overhead_vs_seq: Optional[float] = None  # middle_tier_mean / baseline_seq
    one_slave_mean: Optional[float] = None
    speedup_vs_1: Optional[float] = None
    invocations: int = 0  # SOMD invocations per run
    per_invocation_overhead: Optional[float] = None  # seconds, (mean - baseline) / invocations
    ledger: Optional[dict] = None  # gpu-sim: summary of the last device invocation
    warnings: list = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)

    def lines(self) -> list:
        out = [f"{self.program} on {self.backend}, size {self.size}, {self.reps} reps: "
               f"{self.middle_tier_mean:.6f} s (middle tier)",
               f"  checksum {self.checksum!r} (oracle {self.oracle_checksum!r})"]
        if self.baseline_seq is not None:
            out.append(f"  compiled sequential {self.baseline_seq:.6f} s, ratio {self.overhead_vs_seq:.3f}")
        if self.speedup_vs_1 is not None:
            out.append(f"  1 slave {self.one_slave_mean:.6f} s, speedup {self.speedup_vs_1:.3f}x "
                       f"with {self.n_slaves} slaves on {self.cores} core(s)")
        if self.per_invocation_overhead is not None:
            out.append(f"  {self.invocations} SOMD invocations per run, "
                       f"{self.per_invocation_overhead * 1e6:.1f} us overhead each")
        if self.ledger is not None:
            out.append(f"  device: {json.dumps(self.ledger, sort_keys=True)}")
        return out


def middle_tier_mean(times) -> float:
    """Mean of the measurements left after dropping the fastest and slowest thirds."""
    if not times:
        raise ValueError("no measurements")
    ordered = sorted(times)
    k = len(ordered) // 3
    mid = ordered[k:len(ordered) - k] or ordered
    return sum(mid) / len(mid)


def _timed(fn, reps: int) -> tuple:
    times, out = [], None
    for _ in range(reps):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return times, out


def tolerance(prog: corpus.CorpusProgram, backend: str, force_f32: bool = False) -> float:
    if prog.integer:
        return 0.0
    if force_f32:
        return 1e-3
    return 1e-6 if backend == "gpu-sim" else 1e-9


def bench(name: str, backend: str = "sm", size: Optional[int] = None, reps: int = 10, n_slaves: int = 0,
          workers: int = 0, gpu_max_group: int = 256, gpu_seed: int = 0, force_f32: bool = False,
          seed: int = 0, params: Optional[dict] = None, baseline: bool = True,
          speedup: bool = True) -> BenchReport:
    """Time ``reps`` runs of corpus program ``name``; raise BenchError on a checksum mismatch."""
    prog = corpus.get(name)
    if reps < 1:
        raise BenchError("reps must be at least 1")
    size = prog.desk_size if size is None else size
    if size < prog.min_size:
        raise BenchError(f"{name} needs size >= {prog.min_size}")
    args = prog.make_args(random.Random(seed), size, **(params or {}))
    cores = os.cpu_count() or 1
    workers = workers or default_workers()
    n = n_slaves or workers
    opts = Options(workers=workers, n_slaves=n, watchdog=None, gpu_max_group=gpu_max_group, gpu_seed=gpu_seed,
                   force_f32=force_f32)
    engine = prog.load(options=opts)

    oracle = engine.run(prog.entry, args, "seq")
    oracle_sum = corpus.checksum(oracle)
    times, out = _timed(lambda: engine.run(prog.entry, args, backend), reps)
    got = corpus.checksum(out)
    if not corpus.checksums_match(got, oracle_sum, tolerance(prog, backend, force_f32)):
        raise BenchError(f"{name} on {backend}: checksum {got!r} differs from the oracle's {oracle_sum!r}")
    runs = reps if backend != "seq" else 0
    report = BenchReport(
        program=name, backend=backend, size=size, reps=reps,
        n_slaves=n if backend == "sm" else None,
        grid={"max_group": gpu_max_group, "seed": gpu_seed} if backend == "gpu-sim" else None,
        cores=cores, times=times, middle_tier_mean=middle_tier_mean(times), checksum=got,
        oracle_checksum=oracle_sum, invocations=engine.dispatches // runs if runs else 0,
        warnings=list(engine.runtime_warnings))
    if baseline:
        base, _ = _timed(lambda: engine.run_compiled_seq(prog.entry, args), reps)
        report.baseline_seq = middle_tier_mean(base)
        if report.baseline_seq > 0:
            report.overhead_vs_seq = report.middle_tier_mean / report.baseline_seq
        if report.invocations:
            report.per_invocation_overhead = (report.middle_tier_mean - report.baseline_seq) / report.invocations
    if speedup and backend == "sm" and n != 1:
        one = prog.load(options=Options(workers=workers, n_slaves=1, watchdog=None))
        t1, _ = _timed(lambda: one.run(prog.entry, args, "sm"), reps)
        report.one_slave_mean = middle_tier_mean(t1)
        report.speedup_vs_1 = report.one_slave_mean / report.middle_tier_mean
    if backend == "gpu-sim" and engine.gpu.history:
        report.ledger = dict(engine.gpu.history[-1], invocations_recorded=len(engine.gpu.history))
    return report


__all__ = ["BenchReport", "BenchError", "bench", "middle_tier_mean", "tolerance"]

"""Worker-pool execution of shared-memory plans.

Method instances (MIs) are generator functions: every ``yield`` is an arrival
at the ``fence`` phaser.  A parked MI is resumed by the phaser callback that
fires when the last party arrives, so pool threads never block and any
number of MIs can run on any number of workers.  The master thread only
coordinates: it partitions, spawns, waits on ``completed`` and reduces.
"""
from __future__ import annotations

import os
import random
import threading
from collections import deque
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Optional

from . import codegen
from . import values as V
from .errors import DeadlockError, MIFailure, ReductionError, SomdRuntimeError
from .frontend import ast as A
from .partition import IndexRange, apply_reduction, index_partition, registry as default_registry
from .planner_sm import ExecutionPlanSM, lower_master_sm


class Phaser:
    """Reusable counting barrier.

    ``arrive`` registers an arrival without blocking; ``arrive_and_await_advance``
    blocks until every party of the current phase has arrived; ``arrive_then``
    registers a callback run (outside the lock) when the current phase completes.
    """

    def __init__(self, parties: int):
        if parties < 1:
            raise ValueError("a phaser needs at least one party")
        self.parties = parties
        self.phase = 0
        self.arrived = 0
        self._cond = threading.Condition()
        self._callbacks: list = []
        self._broken: Optional[BaseException] = None

    def _arrive_locked(self):
        phase = self.phase
        self.arrived += 1
        if self.arrived == self.parties:
            self.arrived = 0
            self.phase += 1
            cbs, self._callbacks = self._callbacks, []
            self._cond.notify_all()
            return phase, cbs
        return phase, []

    def arrive(self) -> int:
        with self._cond:
            phase, cbs = self._arrive_locked()
        for cb in cbs:
            cb()
        return phase

    def arrive_then(self, callback: Callable) -> int:
        with self._cond:
            self._callbacks.append(callback)
            phase, cbs = self._arrive_locked()
        for cb in cbs:
            cb()
        return phase

    def arrive_and_await_advance(self, timeout: Optional[float] = None) -> int:
        with self._cond:
            phase, cbs = self._arrive_locked()
        for cb in cbs:
            cb()
        with self._cond:
            ok = self._cond.wait_for(lambda: self.phase != phase or self._broken is not None, timeout)
            if self._broken is not None:
                raise self._broken
            if not ok:
                raise DeadlockError(f"phaser timed out waiting in phase {phase}: {self.state()}")
        return phase + 1

    def break_(self, exc: BaseException):
        """Wake every waiter with ``exc``."""
        with self._cond:
            self._broken = exc
            self._cond.notify_all()

    def state(self) -> dict:
        return {"parties": self.parties, "phase": self.phase, "arrived": self.arrived}


class WorkerPool:
    """Fixed set of daemon threads draining a queue of callables.

    With a ``seed`` the next task is picked at random from the ready queue,
    which shuffles the interleaving of method instances (stress mode).
    """

    def __init__(self, size: int, seed: Optional[int] = None):
        if size < 1:
            raise ValueError("pool size must be positive")
        self.size = size
        self._rng = random.Random(seed) if seed is not None else None
        self._queue: deque = deque()
        self._cond = threading.Condition()
        self._closed = False
        self._threads = [threading.Thread(target=self._run, daemon=True, name=f"somd-worker-{i}")
                         for i in range(size)]
        for t in self._threads:
            t.start()

    def submit(self, fn: Callable):
        with self._cond:
            if self._closed:
                raise RuntimeError("pool is shut down")
            self._queue.append(fn)
            self._cond.notify()

    def _next(self):
        with self._cond:
            while not self._queue and not self._closed:
                self._cond.wait()
            if not self._queue:
                return None
            if self._rng is not None and len(self._queue) > 1:
                k = self._rng.randrange(len(self._queue))
                self._queue.rotate(-k)
                fn = self._queue.popleft()
                self._queue.rotate(k)
                return fn
            return self._queue.popleft()

    def _run(self):
        while True:
            fn = self._next()
            if fn is None:
                return
            fn()

    def shutdown(self):
        with self._cond:
            self._closed = True
            self._cond.notify_all()
        for t in self._threads:
            t.join()


_pools: dict = {}
_pools_lock = threading.Lock()


def default_workers() -> int:
    return os.cpu_count() or 1


def shared_pool(size: int) -> WorkerPool:
    with _pools_lock:
        pool = _pools.get(size)
        if pool is None:
            pool = _pools[size] = WorkerPool(size)
        return pool


class ResultsVector:
    """One cell per rank; each written once, by its own rank."""

    def __init__(self, n: int, check: bool = False):
        self.cells = [None] * n
        self.written = [False] * n
        self.check = check

    def store(self, rank: int, value):
        if self.check and self.written[rank]:
            raise SomdRuntimeError(f"results[{rank}] written twice", code="RESULT_REWRITE")
        self.cells[rank] = value
        self.written[rank] = True


class AccessChecker:
    """Debug-mode view/ownership checks for distributed values of one MI.

    Writes must fall inside the owned block and must not touch a cell another
    MI wrote in the same invocation; reads must fall inside the visible window.
    """

    def __init__(self, rank: int, owned: dict, windows: dict, writes: dict, lock: threading.Lock):
        self.rank = rank
        self.owned = owned  # value -> per-dim (lo, hi) or None
        self.windows = windows  # value -> predicate(idx tuple) -> bool
        self.writes = writes  # (value, idx) -> rank
        self.lock = lock

    def _bounds(self, a, idx):
        row = a
        for i in idx:
            if not 0 <= i < len(row):
                raise SomdRuntimeError(f"index {i} out of bounds for length {len(row)}")
            last = row
            row = row[i]
        return last

    def _owns(self, name, idx) -> bool:
        for d, i in enumerate(idx):
            r = self.owned[name][d]
            if r is not None and not r[0] <= i < r[1]:
                return False
        return True

    def rd1(self, name, a, i):
        self._bounds(a, (i,))
        if not self.windows[name]((i,)):
            raise SomdRuntimeError(f"method instance {self.rank} reads {name}[{i}] outside its view",
                                   code="VIEW_VIOLATION")
        return a[i]

    def rd2(self, name, a, i, j):
        self._bounds(a, (i, j))
        if not self.windows[name]((i, j)):
            raise SomdRuntimeError(f"method instance {self.rank} reads {name}[{i}][{j}] outside its view",
                                   code="VIEW_VIOLATION")
        return a[i][j]

    def _note_write(self, name, idx):
        if not self._owns(name, idx):
            raise SomdRuntimeError(f"method instance {self.rank} writes {name}{list(idx)} outside its "
                                   "partition", code="OWNERSHIP_VIOLATION")
        with self.lock:
            prev = self.writes.setdefault((name, idx), self.rank)
        if prev != self.rank:
            raise SomdRuntimeError(f"{name}{list(idx)} written by method instances {prev} and {self.rank}",
                                   code="WRITE_CONFLICT")

    def wr1(self, name, a, i, v):
        self._bounds(a, (i,))
        self._note_write(name, (i,))
        a[i] = v

    def wr2(self, name, a, i, j, v):
        self._bounds(a, (i, j))
        self._note_write(name, (i, j))
        a[i][j] = v


def _window(ranges: tuple, polyview: bool):
    """Visibility predicate for one MI: cross-shaped for views, rectangular for polyviews."""
    dims = [d for d, r in enumerate(ranges) if r is not None]

    def sees(idx):
        inside_view = []
        inside_owned = []
        for d in dims:
            r = ranges[d]
            inside_view.append(r.view_lo <= idx[d] < r.view_hi)
            inside_owned.append(r.lo <= idx[d] < r.hi)
        if not all(inside_view):
            return False
        if polyview or len(dims) < 2:
            return True
        # the halo of one dimension is only visible alongside owned indices of the others
        return sum(1 for v, o in zip(inside_view, inside_owned) if v and not o) <= 1

    return sees


class Invocation:
    """Cross-MI state of one call: phasers, results, staging and broadcast slots."""

    def __init__(self, n: int, pool: WorkerPool, module: codegen.CompiledModule, combiners: list,
                 check: bool):
        self.n = n
        self.pool = pool
        self.module = module
        self.combiners = combiners
        self.fence = Phaser(n)
        self.completed = Phaser(n + 1)
        self.results = ResultsVector(n, check)
        self.stage = [None] * n
        self.bcast = None
        self.ranges: list = [dict() for _ in range(n)]
        self.owned: list = [dict() for _ in range(n)]
        self.checkers: list = [None] * n
        self.lock = threading.Lock()
        self.finished = 0
        self.error: Optional[BaseException] = None

    # helpers called from slave code
    def store(self, rank: int, value):
        self.results.store(rank, value)

    def combine(self, k: int):
        return self.combiners[k](list(self.stage))

    # scheduling
    def step(self, rank: int, gen):
        if self.error is not None:
            return
        try:
            next(gen)
        except StopIteration:
            self._finish(rank)
            return
        except BaseException as exc:  # noqa: BLE001 - every MI failure aborts the call
            self.fail(MIFailure(rank, self.module.translate(exc)))
            return
        resume = partial(self.pool.submit, partial(self.step, rank, gen))
        with self.lock:
            self.fence.arrive_then(resume)
            self._check_deadlock()

    def _finish(self, rank: int):
        with self.lock:
            self.finished += 1
            self._check_deadlock()
        self.completed.arrive()

    def _check_deadlock(self):
        f = self.fence
        if f.arrived and f.arrived + self.finished == self.n:
            self.fail(DeadlockError(
                f"{f.arrived} method instance(s) wait at the fence in phase {f.phase} while "
                f"{self.finished} already finished; fence {f.state()}, completed {self.completed.state()}"))

    def fail(self, exc: BaseException):
        if self.error is None:
            self.error = exc
        self.completed.break_(self.error)
        self.fence.break_(self.error)


def _ireduce(ctx: Invocation, rank: int, k: int, value):
    """Two-phase intermediate reduction: stage, fence, rank 0 combines, fence, read."""
    ctx.stage[rank] = value
    yield
    if rank == 0:
        ctx.bcast = ctx.combine(k)
    yield
    out = ctx.bcast
    return V.copy_array(out) if isinstance(out, list) else out


@dataclass
class SlaveCode:
    plan: ExecutionPlanSM
    fn: Callable
    ireduces: list  # IReduce nodes by site number
    source: str


@dataclass
class SMRunner:
    """Runs SOMD methods of one compiled program on the shared-memory backend."""

    module: codegen.CompiledModule
    workers: int = 0
    n_slaves: int = 0
    check: bool = False
    stress_seed: Optional[int] = None
    watchdog: Optional[float] = 30.0
    specialize: bool = False
    registry: object = None
    _cache: dict = field(default_factory=dict)
    _lambdas: dict = field(default_factory=dict)
    _lock: threading.Lock = field(default_factory=threading.Lock)

    def __post_init__(self):
        self.workers = self.workers or default_workers()
        self.n_slaves = self.n_slaves or self.workers
        self.registry = self.registry or default_registry
        self._stress_rng = random.Random(self.stress_seed) if self.stress_seed is not None else None

    @property
    def prog(self) -> A.Program:
        return self.module.prog

    # -- compilation -------------------------------------------------------------------

    def slave(self, m: A.MethodDecl, n: int, spec_key: Optional[tuple] = None) -> SlaveCode:
        key = (m.name, n, spec_key)
        with self._lock:
            got = self._cache.get(key)
            if got is not None:
                return got
            plan = lower_master_sm(m, n, self.prog, spec_key)
            em = codegen.Emitter(self.prog, mode="mi", checked=self.check, dist=m.info.dist,
                                 consts=self.module.consts)
            pyname = f"_mi_{m.name}_{len(self._cache)}"
            params = ["_ctx", "_rank"] + [codegen.vname(p) for p in plan.slave.params]
            prologue = [f"{pc.slot} = _ctx.ranges[_rank][{pc.slot!r}]" for pc in plan.partition_calls]
            if plan.ireduces or any(isinstance(x, A.OwnedSlice) for s in plan.slave.body
                                    for x in A.all_exprs(s)):
                prologue += [f"_own_{name} = _ctx.owned[_rank][{name!r}]" for name in m.info.dist]
            if self.check:
                prologue.append("_ck = _ctx.checkers[_rank]")
            fn_src = em.function(pyname, m, params, plan.slave.body, prologue, generator=True)
            self.module.add([fn_src], {"_ireduce": _ireduce})
            code = SlaveCode(plan, self.module[pyname], list(em.ireduce_specs), "\n".join(fn_src.lines))
            self._cache[key] = code
            return code

    def master_fn(self, m: A.MethodDecl, e: A.Expr, names: tuple):
        key = (id(e), names)
        fn = self._lambdas.get(key)
        if fn is None:
            fn = self._lambdas[key] = codegen.master_lambda(self.prog, self.module.consts, e, list(names))
        return fn

    # -- invocation ---------------------------------------------------------------------

    def combiner(self, node: A.IReduce) -> Callable:
        spec = node.spec
        if node.callee is not None:
            callee = self.prog.method(node.callee)
            base = callee.ret.base
            runner = self.module[f"_seq_{callee.name}"]
        else:
            base = node.ty.base
            runner = None
        reg = self.registry

        def combine(partials):
            return apply_reduction(spec, partials, runner, base, args=(), reg=reg)

        return combine

    def invoke(self, name: str, args: list, n_slaves: Optional[int] = None):
        m = self.prog.method(name)
        n = n_slaves or self.n_slaves
        if not m.info.somd:
            # reduce-only method called from the host: a single instance, combined with itself
            res = self.module[f"_seq_{m.name}"](*args)
            spec = m.effective_reduce()
            if spec is None or spec.kind in ("prim", "assembly"):
                return res
            runner = self.module[f"_seq_{m.name}"] if spec.kind == "self" else None
            return apply_reduction(spec, [res], runner, m.ret.base, reg=self.registry)
        return self.execute(m, args, n)

    def execute(self, m: A.MethodDecl, args: list, n: int):
        info = m.info
        names = tuple(p.name for p in m.params)
        env = dict(zip(names, args))
        for pname in [p.name for p in m.params if p.name in info.dist and info.dist[p.name].written]:
            env[pname] = V.copy_array(env[pname])
        for name, dv in info.dist.items():
            if not dv.is_param:
                env[name] = self.master_fn(m, dv.decl.init, tuple(env))(*env.values())
        base_plan = self.slave(m, n).plan
        ranges = [dict() for _ in range(n)]
        owned = [dict() for _ in range(n)]
        per_value: dict = {}
        for pc in base_plan.partition_calls:
            vals = tuple(env)
            extent = self.master_fn(m, pc.extent, vals)(*env.values())
            if pc.strategy is not None:
                sargs = [self.master_fn(m, a, vals)(*env.values()) for a in pc.args]
                parts = self.registry.partition(pc.strategy, extent, pc.parts, sargs)
            else:
                parts = index_partition(max(extent, 0), pc.parts, pc.view, pc.align)
            per_value.setdefault(pc.value, {})[pc.dim] = (pc, parts)
        for value, dims in per_value.items():
            nd = info.dist[value].ndims
            for r in range(n):
                rs = [None] * nd
                for d, (pc, parts) in dims.items():
                    if pc.rank_expr == "rank":
                        k = r
                    elif pc.rank_expr.startswith("rank /"):
                        k = r // base_plan.grid[value][1]
                    else:
                        k = r % base_plan.grid[value][1]
                    rs[d] = parts[k]
                    ranges[r][pc.slot] = parts[k].as_pair()
                owned[r][value] = tuple(rs)
        codes = []
        for r in range(n):
            key = None
            if self.specialize:
                first = frozenset(pc.slot for pc in base_plan.partition_calls
                                  if ranges[r][pc.slot][0] == 0 and pc.strategy is None)
                last = frozenset(pc.slot for pc in base_plan.partition_calls
                                 if pc.strategy is None and ranges[r][pc.slot][1] ==
                                 per_value[pc.value][pc.dim][1][-1].hi and ranges[r][pc.slot][1] > 0)
                key = (first, last)
            codes.append(self.slave(m, n, key))
        shared_vals = [self.master_fn(m, init, names)(*args) if init is not None
                       else V.default_value(ty.base) for _, ty, init in base_plan.shared_decls]
        shared_vals = [V.coerce(v, ty.base) for v, (_, ty, _) in zip(shared_vals, base_plan.shared_decls)]
        slave_args = [env[p.name] for p in m.params] + shared_vals + [env[nm] for nm, _, _ in base_plan.dist_locals]

        pool_owned = None
        if self.stress_seed is not None:
            pool = pool_owned = WorkerPool(self.workers, self._stress_rng.randrange(1 << 30))
        else:
            pool = shared_pool(self.workers)
        inv = Invocation(n, pool, self.module, [self.combiner(x) for x in codes[0].ireduces], self.check)
        inv.ranges = ranges
        inv.owned = [{v: tuple(None if x is None else x.as_pair() for x in rs) for v, rs in o.items()}
                     for o in owned]
        if self.check:
            writes: dict = {}
            lock = threading.Lock()
            for r in range(n):
                windows = {v: _window(rs, info.dist[v].spec.polyview is not None) for v, rs in owned[r].items()}
                inv.checkers[r] = AccessChecker(r, inv.owned[r], windows, writes, lock)
        try:
            gens = [codes[r].fn(inv, r, *slave_args) for r in range(n)]
            for r in range(n):
                pool.submit(partial(inv.step, r, gens[r]))
            try:
                inv.completed.arrive_and_await_advance(timeout=self.watchdog)
            except DeadlockError as exc:
                if inv.error is None:
                    inv.fail(DeadlockError(f"{exc.message}; fence {inv.fence.state()}, "
                                           f"{inv.finished} of {n} method instances finished"))
            if inv.error is not None:
                raise inv.error
        finally:
            if pool_owned is not None:
                pool_owned.shutdown()
        return self.reduce(m, inv.results.cells, owned, env)

    def reduce(self, m: A.MethodDecl, cells: list, owned: list, env: dict):
        spec = m.effective_reduce()
        if m.ret == A.VOID:
            return None
        if spec is None:
            return cells[0]
        if spec.kind == "assembly":
            return self.assemble(m, cells, owned)
        runner = self.module[f"_seq_{m.name}"] if spec.kind == "self" else None
        rargs = ()
        if spec.kind == "user" and spec.args:
            names = tuple(env)
            rargs = [self.master_fn(m, a, names)(*env.values()) for a in spec.args]
        return apply_reduction(spec, cells, runner, m.ret.base, args=rargs, reg=self.registry)

    def assemble(self, m: A.MethodDecl, cells: list, owned: list):
        seg = m.info.segment
        if seg is None:
            # every MI returned a whole array of its own: concatenate them
            return apply_reduction(A.ASSEMBLY, cells)
        value, vd, _arr, axis = seg
        first = cells[0]
        if first is None:
            raise ReductionError("method instance 0 returned null")
        rs0 = owned[0][value]
        other = [d for d, r in enumerate(rs0) if r is not None and d != vd]
        if other and len(first) and m.ret.dims == 2:
            # blocks cut along both dimensions: copy each MI's owned block in place
            out = V.copy_array(first)
            for r, cell in enumerate(cells):
                (lo0, hi0), (lo1, hi1) = _pair(owned[r][value][0]), _pair(owned[r][value][1])
                for i in range(lo0, hi0):
                    out[i][lo1:hi1] = cell[i][lo1:hi1]
            return out
        parts = []
        for r, cell in enumerate(cells):
            lo, hi = _pair(owned[r][value][vd])
            if axis == 0:
                parts.append(cell[lo:hi])
            else:
                parts.append([row[lo:hi] for row in cell])
        expected = len(first) if axis == 0 else (len(first[0]) if first else 0)
        return apply_reduction(A.ASSEMBLY, parts, axis=axis, expected=expected)


def _pair(r: IndexRange) -> tuple:
    return (r.lo, r.hi)


def execute_sm(module: codegen.CompiledModule, method: str, args: list, n_slaves: int = 0,
               workers: int = 0, **opts):
    """Run one SOMD method on the shared-memory backend."""
    return SMRunner(module, workers=workers, n_slaves=n_slaves, **opts).invoke(method, args)

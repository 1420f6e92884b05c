"""A simulator of the GPU execution model for plans made by the GPU planner.

Device memory is a dictionary of flat buffers that host code can only reach
through ``put``/``get`` calls recorded in a transfer ledger.  A launch runs
every group of the grid, in an order shuffled by a seed, each group's threads
one after the other; a reduction kernel then folds each group's per-thread
values in lockstep tree rounds into one partial per group.  Launches are
synchronous, so the only global synchronization is the return to the host.

Kernels and host code are generated Python.  In checked mode (the default)
every buffer access goes through the device, which bounds-checks it and
records which group read or wrote which cell; a cell written by one group and
touched by another within the same launch is a cross-group hazard.
"""
from __future__ import annotations

import json
import logging
import random
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Optional

from . import values as V
from .codegen import Emitter, FnSource, vname, wrap_src, _lower_bound
from .errors import DeviceFault, HazardError, LedgerViolation, LoweringError, SomdError
from .frontend import ast as A
from .partition import apply_reduction, fold_prim
from .partition import registry as default_registry
from .planner_gpu import (Alloc, ExecutionPlanGPU, Fold, HostReturn, KernelIR, Launch, Put, grid_config,
                          lower_gpu)

log = logging.getLogger("somd")

_CELL_BYTES = {"int": 4, "long": 8, "double": 8, "boolean": 1}
MAX_HAZARD_RECORDS = 1000  # per launch; the total is still counted
MAX_HISTORY = 1000  # invocation summaries kept by a runner


# -- records -----------------------------------------------------------------------------


@dataclass(frozen=True)
class TransferRecord:
    direction: str  # h2d | d2h
    buffer: str
    nbytes: int
    launch_index: int  # launches issued before this transfer


@dataclass
class TransferLedger:
    records: list = field(default_factory=list)

    def add(self, rec: TransferRecord):
        self.records.append(rec)

    def puts(self, buffer: Optional[str] = None) -> int:
        return sum(1 for r in self.records if r.direction == "h2d" and buffer in (None, r.buffer))

    def gets(self, buffer: Optional[str] = None) -> int:
        return sum(1 for r in self.records if r.direction == "d2h" and buffer in (None, r.buffer))

    def counts(self) -> dict:
        """buffer -> {"put": n, "get": n}"""
        out: dict = {}
        for r in self.records:
            c = out.setdefault(r.buffer, {"put": 0, "get": 0})
            c["put" if r.direction == "h2d" else "get"] += 1
        return out

    def to_json(self) -> list:
        return [asdict(r) for r in self.records]


@dataclass(frozen=True)
class HazardRecord:
    launch: int
    kernel: str
    buffer: str
    index: int  # flat cell index
    writer: int  # group that wrote the cell
    reader: int  # other group that read or wrote it

    def __str__(self) -> str:
        return (f"launch {self.launch} ({self.kernel}): group {self.writer} wrote {self.buffer}[{self.index}] "
                f"which group {self.reader} also accessed")


@dataclass(frozen=True)
class LaunchRecord:
    index: int
    kernel: str
    size: int
    n_groups: int
    group_size: int


# -- Python emission ------------------------------------------------------------------------


class GPUEmitter(Emitter):
    """Emitter whose buffer accesses go to flat device buffers."""

    def __init__(self, prog, consts, plan: ExecutionPlanGPU, side: str, checked: bool, names: dict):
        super().__init__(prog, mode="seq", checked=checked, consts=consts)
        self.plan = plan
        self.buffers = {b: info.dims for b, info in plan.buffers.items()}
        self.side = side  # kernel | host
        self.names = names  # kernel id -> Python function name
        self.serial_body = False

    # buffers ----------------------------------------------------------------------------

    def expr(self, e: A.Expr, nowrap: bool = False) -> str:
        if isinstance(e, A.Length):
            name, idxs = A.index_chain(e.base)
            if name in self.buffers:
                if self.side == "host":
                    return f"_dev.extent({name!r}, {len(idxs)})"
                return f"_ext_{name}_{len(idxs)}"
        return super().expr(e, nowrap)

    def _buffer_chain(self, e: A.Expr):
        name, idxs = A.index_chain(e)
        if name not in self.buffers:
            return None
        if self.side == "host":
            raise LoweringError(f"host code reads device array {name}", self.cur_loc)
        if len(idxs) != self.buffers[name]:
            raise LoweringError(f"row of flattened device array {name} used as a value", self.cur_loc)
        return name, [self.index_src(i) for i in idxs]

    def index_read(self, e: A.Index) -> str:
        bc = self._buffer_chain(e)
        if bc is None:
            return super().index_read(e)
        name, ix = bc
        if self.checked:
            extra = f", _ext_{name}_1" if len(ix) == 2 else ""
            return f"_D.rd{len(ix)}({vname(name)}, {name!r}, {', '.join(ix)}{extra})"
        if len(ix) == 1:
            return f"{vname(name)}[{ix[0]}]"
        return f"{vname(name)}[{ix[0]} * _ext_{name}_1 + {ix[1]}]"

    def store(self, depth: int, target: A.Expr, value_src: str):
        bc = None if isinstance(target, A.Name) else self._buffer_chain(target)
        if bc is None:
            return super().store(depth, target, value_src)
        name, ix = bc
        if self.checked:
            extra = f", _ext_{name}_1" if len(ix) == 2 else ""
            self.line(depth, f"_D.wr{len(ix)}({vname(name)}, {name!r}, {', '.join(ix)}{extra}, {value_src})")
        elif len(ix) == 1:
            self.line(depth, f"{vname(name)}[{ix[0]}] = {value_src}")
        else:
            self.line(depth, f"{vname(name)}[{ix[0]} * _ext_{name}_1 + {ix[1]}] = {value_src}")

    def inplace_ok(self, tgt: A.Expr) -> bool:
        return super().inplace_ok(tgt) and A.root_name(tgt) not in self.buffers

    # statements -------------------------------------------------------------------------

    def stmt(self, s: A.Stmt, depth: int):
        if isinstance(s, A.Return) and self.side == "host":
            v = s.value
            if isinstance(v, A.Name) and v.id in self.buffers:
                s = HostReturn(None, v.id, loc=s.loc)
            else:
                s = HostReturn(v, loc=s.loc)
        if isinstance(s, A.Return) and self.serial_body:
            if s.loc != A.NOLOC:
                self.cur_loc = s.loc
            v = s.value
            if isinstance(v, A.Name) and v.id in self.buffers:
                self.line(depth, f"return (2, {v.id!r}, ())")
            elif v is None:
                self.line(depth, "return (1, None, ())")
            else:
                self.line(depth, f"return (1, {self.conv(self.expr(v), v.ty, self.current_ret)}, ())")
            return
        if isinstance(s, Put):
            self.line(depth, f"_dev.put({s.buffer!r}, {vname(s.buffer)})")
        elif isinstance(s, Alloc):
            dims = ", ".join(self.expr(d) for d in s.dims)
            self.line(depth, f"_dev.alloc({s.buffer!r}, [{dims}])")
        elif isinstance(s, Launch):
            self.launch(s, depth)
        elif isinstance(s, Fold):
            a, k = s.acc, s.kernel
            if s.mode == "self":
                part = f"_seq_{self.plan.method}(_dev.partials({k.id}, {a.slot}))"
            else:
                part = f"_dev.fold({k.id}, {a.slot})"
            combined = wrap_src(f"{vname(a.name)} {a.op} {part}", a.base)
            self.line(depth, f"{vname(a.name)} = {combined}")
        elif isinstance(s, HostReturn):
            if s.loc != A.NOLOC:
                self.cur_loc = s.loc
            if s.buffer is not None:
                self.line(depth, f"return _dev.get({s.buffer!r})")
            elif s.value is None:
                self.line(depth, "return None")
            else:
                v = self.conv(self.expr(s.value), s.value.ty, self.current_ret)
                self.line(depth, f"return _dev.finish({v})")
        else:
            super().stmt(s, depth)

    def launch(self, s: Launch, depth: int):
        k = s.kernel
        if s.loc != A.NOLOC:
            self.cur_loc = s.loc
        bounds = []
        for _, lb, ub, _ in k.ivs:
            bounds += [self.expr(lb, nowrap=True), self.expr(ub, nowrap=True)]
        scal = "".join(f"{vname(x)}, " for x in k.scalars)
        b = "".join(f"{x}, " for x in bounds)
        call = f"_dev.launch({k.id}, ({b}), ({scal}))"
        if k.kind != "serial":
            self.line(depth, call)
            return
        self.line(depth, f"_r = {call}")
        if k.returns:
            self.line(depth, "if _r[0] == 1:")
            self.line(depth + 1, "return _dev.finish(_r[1])")
            self.line(depth, "if _r[0] == 2:")
            self.line(depth + 1, "return _dev.get(_r[1])")
        if k.writeback:
            self.line(depth, f"{''.join(vname(w) + ', ' for w in k.writeback)}= _r[2]")


def _prologue(em: GPUEmitter, k: KernelIR, depth: int):
    for b in k.buffers:
        em.line(depth, f"{vname(b)} = _D.buf({b!r})")
        for d in range(em.buffers[b]):
            em.line(depth, f"_ext_{b}_{d} = _D.extent({b!r}, {d})")


def emit_kernel(em: GPUEmitter, k: KernelIR, pyname: str, ret: A.Type) -> list:
    em.current_ret = ret
    em.cur_loc = k.loc
    em.nonneg = {}
    if k.kind == "serial":
        body_name = pyname + "_body"
        em.fn = FnSource(pyname)
        scal = ", ".join(vname(x) for x in k.scalars)
        em.line(0, f"def {pyname}(_D, _g, _gs{', ' + scal if scal else ''}):")
        em.line(1, "for _gid in range(_g * _gs, _g * _gs + _gs):")
        em.line(2, "if _gid == 0:")
        em.line(3, "_D.gid = 0")
        em.line(3, f"return {body_name}(_D{', ' + scal if scal else ''})")
        em.line(1, "return None")
        outer = em.fn
        em.fn = FnSource(body_name)
        em.line(0, f"def {body_name}(_D{', ' + scal if scal else ''}):")
        _prologue(em, k, 1)
        em.serial_body = True
        try:
            em.block(k.body, 1)
        finally:
            em.serial_body = False
        wb = "".join(vname(w) + ", " for w in k.writeback)
        em.line(1, f"return (0, None, ({wb}))")
        return [outer, em.fn]
    em.fn = FnSource(pyname)
    bounds = []
    for d in range(len(k.ivs)):
        bounds += [f"_lb{d}", f"_ub{d}"]
    params = ["_D", "_g", "_gs"] + bounds + [vname(x) for x in k.scalars] + \
        [f"_loc{a.slot}" for a in k.accumulators]
    em.line(0, f"def {pyname}({', '.join(params)}):")
    _prologue(em, k, 1)
    if len(k.ivs) == 2:
        em.line(1, "_w1 = _ub1 - _lb1")
    em.line(1, "_base = _g * _gs")
    em.line(1, "for _t in range(_gs):")
    em.line(2, "_gid = _base + _t")
    if em.checked:
        em.line(2, "_D.gid = _gid")
    for a in k.accumulators:
        em.line(2, f"{vname(a.name)} = {a.identity()!r}")
    if len(k.ivs) == 1:
        iv, lb, _, step = k.ivs[0]
        em.line(2, f"{vname(iv)} = _lb0 + _gid" + (f" * {step}" if step != 1 else ""))
    else:
        iv, lb = k.ivs[0][0], k.ivs[0][1]
        em.line(2, f"{vname(iv)} = _lb0 + _gid // _w1")
        em.line(2, f"{vname(k.ivs[1][0])} = _lb1 + _gid % _w1")
    for name, lo, _, _ in k.ivs:
        low = _lower_bound(lo, {})
        if low is not None:
            em.nonneg[name] = low
    # the thread index never falls below lb; the upper bound is the live guard
    em.line(2, f"if {vname(iv)} < _ub0:")
    em.block(k.body, 3)
    for a in k.accumulators:
        em.line(2, f"_loc{a.slot}[_t] = {vname(a.name)}")
    return [em.fn]


def emit_host(em: GPUEmitter, plan: ExecutionPlanGPU, pyname: str, m: A.MethodDecl) -> FnSource:
    params = ["_dev"] + [vname(p.name) for p in m.params]
    return em.function(pyname, m, params, plan.host)


@dataclass
class CompiledPlan:
    plan: ExecutionPlanGPU
    host: object
    kernels: dict  # id -> Python function
    finish: object  # applies the method-level reduction to the single instance's result


def compile_plan(module, plan: ExecutionPlanGPU, checked: bool, registry=None) -> CompiledPlan:
    prog = module.prog
    m = prog.method(plan.method)
    tag = "c" if checked else "f"
    names = {k.id: f"_gk{tag}_{m.name}_{k.id}" for k in plan.kernels}
    fns = []
    for k in plan.kernels:
        em = GPUEmitter(prog, module.consts, plan, "kernel", checked, names)
        fns.extend(emit_kernel(em, k, names[k.id], m.ret))
    hem = GPUEmitter(prog, module.consts, plan, "host", checked, names)
    host_name = f"_gh{tag}_{m.name}"
    fns.append(emit_host(hem, plan, host_name, m))
    module.add(fns)
    return CompiledPlan(plan, module[host_name], {k.id: module[names[k.id]] for k in plan.kernels},
                        _finisher(module, m, registry or default_registry))


def _finisher(module, m: A.MethodDecl, reg):
    spec = m.effective_reduce()
    if spec is None or spec.kind in ("prim", "assembly"):
        return lambda v: v
    if spec.kind == "self":
        runner = module[f"_seq_{m.name}"]
        return lambda v: apply_reduction(spec, [v], runner, m.ret.base)
    if spec.args:
        # user reducer arguments come from the entry arguments; bound per invocation
        return None
    return lambda v: apply_reduction(spec, [v], None, m.ret.base, reg=reg)


# -- device ------------------------------------------------------------------------------------


def _combiner(op: str, base: str):
    if op == "+":
        if base == "int":
            return lambda a, b: V.wrap32(a + b)
        if base == "long":
            return lambda a, b: V.wrap64(a + b)
        return lambda a, b: a + b
    if base == "int":
        return lambda a, b: V.wrap32(a * b)
    if base == "long":
        return lambda a, b: V.wrap64(a * b)
    return lambda a, b: a * b


class DeviceState:
    """Device memory, transfer ledger and launch machinery for one plan invocation."""

    def __init__(self, compiled: CompiledPlan, max_group: int = 256, seed: Optional[int] = 0,
                 strict: bool = False, check: bool = True, force_f32: bool = False, module=None):
        self.compiled = compiled
        self.plan = compiled.plan
        self.max_group = max_group
        self.rng = random.Random(seed)
        self.strict = strict
        self.check = check
        self.force_f32 = force_f32
        self.module = module
        self.buffers: dict = {}
        self.shapes: dict = {}
        self.bases: dict = {}
        self.ledger = TransferLedger()
        self.hazards: list = []
        self.hazard_count = 0
        self.launches: list = []
        self.group = 0
        self.gid = 0
        self.current: Optional[KernelIR] = None
        self._r: set = set()
        self._w: set = set()
        self.finish = compiled.finish or (lambda v: v)

    # transfers --------------------------------------------------------------------------

    def _base(self, name: str) -> str:
        return self.plan.buffers[name].type.base

    def put(self, name: str, value):
        base = self._base(name)
        dims = self.plan.buffers[name].dims
        if value is None:
            raise SomdError(f"cannot copy null array {name} to the device")
        if dims == 2:
            cols = {len(r) for r in value}
            if len(cols) > 1:
                raise SomdError(f"{name}: ragged 2D array cannot be flattened")
            shape = (len(value), cols.pop() if cols else 0)
            flat = [x for row in value for x in row]
        else:
            shape = (len(value),)
            flat = list(value)
        if self.force_f32 and base == "double":
            flat = [V.to_f32(x) for x in flat]
        self.buffers[name], self.shapes[name], self.bases[name] = flat, shape, base
        self.ledger.add(TransferRecord("h2d", name, len(flat) * _CELL_BYTES[base], len(self.launches)))

    def alloc(self, name: str, dims: list):
        base = self._base(name)
        for d in dims:
            if d < 0:
                raise SomdError(f"negative array size {d} for {name}")
        n = 1
        for d in dims:
            n *= d
        self.buffers[name] = [V.default_value(base)] * n
        self.shapes[name] = tuple(dims)
        self.bases[name] = base

    def get(self, name: str):
        if name not in self.buffers:
            raise LedgerViolation(f"get of {name}, which is not on the device")
        flat, shape = self.buffers[name], self.shapes[name]
        base = self.bases[name]
        self.ledger.add(TransferRecord("d2h", name, len(flat) * _CELL_BYTES[base], len(self.launches)))
        if len(shape) == 2:
            cols = shape[1]
            return [flat[r * cols:(r + 1) * cols] for r in range(shape[0])]
        return list(flat)

    def partials(self, kid: int, slot: int) -> list:
        return self.get(f"K{kid}.partials{slot}")

    def fold(self, kid: int, slot: int):
        k = self.plan.kernel(kid)
        acc = k.accumulators[slot]
        parts = self.partials(kid, slot)
        if not parts:
            return acc.identity()
        return fold_prim(acc.op, parts, acc.base)

    # kernel-side accessors ----------------------------------------------------------------

    def buf(self, name: str) -> list:
        try:
            return self.buffers[name]
        except KeyError:
            raise LedgerViolation(f"{self.current.name if self.current else 'kernel'} reads {name}, which was "
                                  "never copied to or allocated on the device") from None

    def extent(self, name: str, dim: int) -> int:
        try:
            return self.shapes[name][dim]
        except KeyError:
            raise LedgerViolation(f"extent of {name}, which is not on the device") from None

    def _fault(self, name: str, idx, n):
        k = self.current.name if self.current else "kernel"
        raise DeviceFault(f"{k}: global id {self.gid}: index {idx} out of bounds for {name}[{n}]")

    def rd1(self, a, name, i):
        if not 0 <= i < len(a):
            self._fault(name, i, len(a))
        self._r.add((name, i))
        return a[i]

    def rd2(self, a, name, i, j, cols):
        rows = len(a) // cols if cols else 0
        if not (0 <= i < rows and 0 <= j < cols):
            self._fault(name, (i, j), f"{rows}][{cols}")
        k = i * cols + j
        self._r.add((name, k))
        return a[k]

    def wr1(self, a, name, i, v):
        if not 0 <= i < len(a):
            self._fault(name, i, len(a))
        self._w.add((name, i))
        a[i] = v

    def wr2(self, a, name, i, j, cols, v):
        rows = len(a) // cols if cols else 0
        if not (0 <= i < rows and 0 <= j < cols):
            self._fault(name, (i, j), f"{rows}][{cols}")
        k = i * cols + j
        self._w.add((name, k))
        a[k] = v

    # launches ---------------------------------------------------------------------------

    def launch(self, kid: int, bounds: tuple, scalars: tuple):
        k = self.plan.kernel(kid)
        fn = self.compiled.kernels[kid]
        for b in k.buffers:
            if b not in self.buffers:
                raise LedgerViolation(f"{k.name} uses {b}, which was never copied to or allocated on the device")
        size = k.size(bounds)
        grid = grid_config(size, self.max_group)
        index = len(self.launches)
        self.launches.append(LaunchRecord(index, k.name, size, grid.n_groups, grid.group_size))
        gs = grid.group_size
        order = list(range(grid.n_groups))
        self.rng.shuffle(order)
        accs = k.accumulators
        partials = [[None] * grid.n_groups for _ in accs]
        combine = [_combiner(a.op, a.base) for a in accs]
        readers: dict = {}
        writers: dict = {}
        result = None
        self.current = k
        try:
            for g in order:
                self.group = g
                self._r, self._w = set(), set()
                locs = [[a.identity()] * gs for a in accs]
                if k.kind == "serial":
                    r = fn(self, g, gs, *scalars)
                    if r is not None:
                        result = r
                else:
                    fn(self, g, gs, *bounds, *scalars, *locs)
                for j, loc in enumerate(locs):
                    partials[j][g] = _tree_reduce(loc, combine[j])
                if self.check:
                    for key in self._r:
                        readers.setdefault(key, set()).add(g)
                    for key in self._w:
                        writers.setdefault(key, set()).add(g)
        except SomdError as exc:
            raise self._locate(exc)
        except IndexError as exc:
            raise self._locate(DeviceFault(f"{k.name}: global id {_frame_gid(exc)}: {exc}"), exc)
        except Exception as exc:  # noqa: BLE001 - runtime errors inside generated kernels
            if self.module is not None:
                raise self.module.translate(exc) from exc
            raise
        finally:
            self.current = None
        for j, a in enumerate(accs):
            parts = partials[j]
            if self.force_f32 and a.base == "double":
                parts = [V.to_f32(x) for x in parts]
            name = f"K{kid}.{a.partials}"
            self.buffers[name], self.shapes[name], self.bases[name] = parts, (len(parts),), a.base
        if self.force_f32:
            for b in k.buffers:
                if self.bases[b] == "double":
                    buf = self.buffers[b]
                    buf[:] = [V.to_f32(x) for x in buf]
        if writers:
            self._hazards(index, k, readers, writers)
        return result

    def _locate(self, exc: SomdError, cause: Optional[BaseException] = None) -> SomdError:
        src = cause if cause is not None else exc
        if self.module is not None and exc.loc == A.NOLOC:
            loc = self.module.locate(src.__traceback__)
            if loc is not None:
                exc.loc = loc
        return exc

    def _hazards(self, index: int, k: KernelIR, readers: dict, writers: dict):
        found = []
        for key, wg in writers.items():
            others = readers.get(key, set()) | wg
            if len(others) < 2:
                continue
            for w in sorted(wg):
                for r in sorted(others - {w}):
                    found.append(HazardRecord(index, k.name, key[0], key[1], w, r))
        if not found:
            return
        found.sort(key=lambda h: (h.writer, h.buffer, h.index, h.reader))
        self.hazard_count += len(found)
        self.hazards.extend(found[:MAX_HAZARD_RECORDS])
        msg = f"{len(found)} cross-group hazard(s) in {k.name}; first: {found[0]}"
        if self.strict:
            raise HazardError(msg, k.loc)
        log.warning(msg)

    # reporting ----------------------------------------------------------------------------

    def summary(self) -> dict:
        per_kernel: dict = {}
        for rec in self.launches:
            per_kernel[rec.kernel] = per_kernel.get(rec.kernel, 0) + 1
        return {
            "launches": per_kernel,
            "transfers": self.ledger.counts(),
            "hazards": self.hazard_count,
        }

    def ledger_json(self) -> str:
        return json.dumps({"transfers": self.ledger.to_json(),
                           "launches": [asdict(r) for r in self.launches],
                           "hazards": [asdict(h) for h in self.hazards]}, indent=2)


def _tree_reduce(loc: list, combine):
    """Lockstep tree rounds within one group; returns the value left in slot 0."""
    n = len(loc)
    stride = 1
    while stride < n:
        stride <<= 1
    stride >>= 1
    while stride >= 1:
        for t in range(stride):
            if t + stride < n:
                loc[t] = combine(loc[t], loc[t + stride])
        stride >>= 1
    return loc[0]


def _frame_gid(exc: BaseException):
    tb = exc.__traceback__
    gid = "?"
    while tb is not None:
        if "_gid" in tb.tb_frame.f_locals:
            gid = tb.tb_frame.f_locals["_gid"]
        tb = tb.tb_next
    return gid


# -- runner -----------------------------------------------------------------------------------


class GPURunner:
    """Plans, compiles and runs SOMD methods on the simulated device."""

    def __init__(self, module, max_group: int = 256, seed: Optional[int] = 0, strict: bool = False,
                 force_f32: bool = False, registry=None, check: bool = True):
        self.module = module
        self.prog = module.prog
        self.max_group = max_group
        self.seed = seed
        self.strict = strict
        self.force_f32 = force_f32
        self.registry = registry or default_registry
        self.check = check
        self._compiled: dict = {}
        self.last: Optional[DeviceState] = None
        self.history: deque = deque(maxlen=MAX_HISTORY)  # summaries of recent invocations

    def plan(self, name: str) -> ExecutionPlanGPU:
        return self.compiled(name).plan

    def compiled(self, name: str) -> CompiledPlan:
        got = self._compiled.get(name)
        if got is None:
            m = self.prog.method(name)
            if m is None:
                raise SomdError(f"no method named {name!r}")
            try:
                plan = lower_gpu(self.prog, m, self.module.consts, self.max_group)
                for w in plan.warnings:
                    log.warning(w)
                got = compile_plan(self.module, plan, self.check, self.registry)
            except LoweringError as exc:
                got = exc
            self._compiled[name] = got
        if isinstance(got, LoweringError):
            raise got
        return got

    def ineligible(self, name: str) -> Optional[str]:
        """Why ``name`` cannot run on the device, or None."""
        try:
            self.compiled(name)
        except LoweringError as exc:
            return str(exc)
        return None

    def invoke(self, name: str, args: list):
        cp = self.compiled(name)
        dev = DeviceState(cp, self.max_group, self.seed, self.strict, self.check, self.force_f32, self.module)
        m = self.prog.method(name)
        spec = m.effective_reduce()
        if cp.finish is None:
            from .codegen import master_lambda

            names = [p.name for p in m.params]
            rargs = [master_lambda(self.prog, self.module.consts, a, names)(*args) for a in spec.args]
            dev.finish = lambda v: apply_reduction(spec, [v], None, m.ret.base, args=rargs, reg=self.registry)
        self.last = dev
        try:
            result = cp.host(dev, *args)
        except SomdError:
            raise
        except Exception as exc:  # noqa: BLE001
            raise self.module.translate(exc) from exc
        finally:
            self.history.append(dev.summary())
        return result


__all__ = ["DeviceState", "TransferLedger", "TransferRecord", "HazardRecord", "LaunchRecord", "GPURunner",
           "compile_plan", "CompiledPlan"]

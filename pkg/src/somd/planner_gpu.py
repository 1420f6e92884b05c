"""Lowering of a SOMD method to GPU kernels plus the host code that drives them.

The whole method becomes one logical instance whose parallel loops are
refactored into kernels: each thread of the grid runs one iteration, selected
by its global id and masked by a guard on the loop bounds.  Everything else
stays on the host, which allocates and copies device buffers, issues the
launches (inside its own loops when the source loops around a sync block) and
folds the per-group partial sums that reduction kernels leave on the device.

Rules the lowering follows:

* one kernel per parallel loop; a perfect nest of two parallel loops with unit
  steps becomes a single kernel over the flattened iteration space;
* 2D buffers are flattened row-major, indices become ``i * cols + j``;
* a host scalar written in a kernel only as ``acc op= e`` (op in ``+ - *``) and
  never read there is an accumulator: each thread starts from the identity,
  the group folds its threads in a tree, the host folds the group partials;
* other statements that touch device buffers run as a serial kernel whose
  single live thread is global id 0; the same happens to a whole loop whose
  scalar updates cannot be folded (with a warning);
* calls that reduce across instances are inlined when the callee has the
  ``decls; accumulation loops; return acc`` shape.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Optional

from .errors import LoweringError
from .frontend import ast as A
from .frontend.checker import canonical_loop
from .frontend.printer import expr as fmt_expr
from .frontend.printer import format_stmt

DEFAULT_MAX_GROUP = 256


# -- grid -------------------------------------------------------------------------------


@dataclass(frozen=True)
class GridConfig:
    n_groups: int
    group_size: int
    total_threads: int


def grid_config(problem_size: int, max_group_size: int) -> GridConfig:
    """Groups of ``max_group_size`` threads, enough of them to cover ``problem_size``."""
    if problem_size < 0:
        raise ValueError(f"problem size must be >= 0, got {problem_size}")
    if max_group_size < 1:
        raise ValueError(f"group size must be >= 1, got {max_group_size}")
    groups = -(-problem_size // max_group_size)
    return GridConfig(groups, max_group_size, groups * max_group_size)


# -- kernels -----------------------------------------------------------------------------


IDENTITY = {"+": 0, "*": 1}


@dataclass
class Accumulator:
    name: str
    op: str  # how partials combine: + (for += and -=) or *
    base: str  # int | long | double
    slot: int

    @property
    def partials(self) -> str:
        return f"partials{self.slot}"

    def identity(self):
        v = IDENTITY[self.op]
        return float(v) if self.base == "double" else v


@dataclass
class BufferInfo:
    name: str
    type: A.Type
    origin: str  # param | local

    @property
    def dims(self) -> int:
        return self.type.dims


@dataclass
class KernelIR:
    id: int
    method: str
    kind: str  # map | reduce | serial
    ivs: list  # [(iv, lb Expr, ub Expr, step)], one or two entries; empty for serial
    buffers: list  # device buffers the body touches
    scalars: list  # host scalars passed by value, in parameter order
    body: list  # statements each thread runs once its guard passes
    accumulators: list = field(default_factory=list)
    writeback: list = field(default_factory=list)  # serial: host scalars copied back
    returns: bool = False  # serial: the body contains a return
    loc: A.Loc = A.NOLOC
    pyname: str = ""

    @property
    def name(self) -> str:
        return f"K{self.id}"

    def size(self, bounds: tuple) -> int:
        """Logical thread count for concrete bounds ``(lb0, ub0[, lb1, ub1])``."""
        if self.kind == "serial":
            return 1
        n0 = _trip(bounds[0], bounds[1], self.ivs[0][3])
        if len(self.ivs) == 1:
            return n0
        return n0 * _trip(bounds[2], bounds[3], 1)

    def thread_index(self, gid: int, bounds: tuple) -> Optional[tuple]:
        """Loop indices thread ``gid`` works on, or None where the guard masks it."""
        if self.kind == "serial":
            return () if gid == 0 else None
        if len(self.ivs) == 1:
            lb, ub = bounds[0], bounds[1]
            i = lb + gid * self.ivs[0][3]
            return (i,) if lb <= i < ub else None
        lb0, ub0, lb1, ub1 = bounds
        w = ub1 - lb1
        if w <= 0:
            return None
        i, j = lb0 + gid // w, lb1 + gid % w
        return (i, j) if lb0 <= i < ub0 and lb1 <= j < ub1 else None

    def mapping_text(self) -> str:
        if self.kind == "serial":
            return "single thread"
        if len(self.ivs) == 1:
            iv, lb, _, step = self.ivs[0]
            st = f" * {step}" if step != 1 else ""
            return f"{iv} = {fmt_expr(lb)} + globalId{st}"
        (i, lb0, _, _), (j, lb1, ub1, _) = self.ivs
        w = f"({fmt_expr(ub1)} - {fmt_expr(lb1)})"
        return f"{i} = {fmt_expr(lb0)} + globalId / {w}; {j} = {fmt_expr(lb1)} + globalId % {w}"

    def guard_text(self) -> str:
        if self.kind == "serial":
            return "if (globalId == 0)"
        parts = []
        for iv, lb, ub, _ in self.ivs:
            parts.append(f"{iv} >= {fmt_expr(lb)} && {iv} < {fmt_expr(ub)}")
        return "if (" + " && ".join(parts) + ")"

    def to_text(self) -> list:
        head = f"kernel {self.name} {self.kind}"
        if self.accumulators:
            head += " " + ", ".join(f"{a.name} {a.op}-> {self.name}.{a.partials}" for a in self.accumulators)
        out = [head]
        out.append(f"  params: {', '.join(self.buffers + self.scalars) or '-'}")
        out.append(f"  thread: {self.mapping_text()}")
        out.append(f"  guard: {self.guard_text()}")
        if self.writeback:
            out.append(f"  copies back: {', '.join(self.writeback)}")
        out.append("  body:")
        for s in self.body:
            out.append(format_stmt(s, 2))
        return out


def _trip(lb: int, ub: int, step: int) -> int:
    return max(0, -(-(ub - lb) // step))


# -- host operations ---------------------------------------------------------------------
#
# Statements of the host program that are not SOMD-mini source.  The printer asks them for
# their text; the GPU emitter asks them for Python.


class HostOp(A.Stmt):
    loc = A.NOLOC


@dataclass
class Put(HostOp):
    buffer: str

    def text_lines(self):
        return [f"device.put({self.buffer});"]


@dataclass
class Alloc(HostOp):
    buffer: str
    elem: A.Type
    dims: list

    def text_lines(self):
        return [f"device.alloc({self.buffer}, new {self.elem}{''.join(f'[{fmt_expr(d)}]' for d in self.dims)});"]


@dataclass
class Launch(HostOp):
    kernel: KernelIR
    loc: A.Loc = A.NOLOC

    def text_lines(self):
        k = self.kernel
        if k.kind == "serial":
            rng = "1"
        else:
            rng = " x ".join(f"[{fmt_expr(lb)}, {fmt_expr(ub)})" + (f" step {st}" if st != 1 else "")
                             for _, lb, ub, st in k.ivs)
        args = ", ".join(k.scalars)
        line = f"device.launch({k.name}, {rng}{', ' + args if args else ''});"
        out = [line]
        if k.writeback:
            out.append(f"{', '.join(k.writeback)} = {k.name}.copied_back;")
        if k.returns:
            out.append(f"if ({k.name}.returned) return {k.name}.value;")
        return out


@dataclass
class Fold(HostOp):
    kernel: KernelIR
    acc: Accumulator
    mode: str = "op"  # op: fold with the accumulator's operator; self: re-apply the method

    def text_lines(self):
        k, a = self.kernel, self.acc
        how = f"fold({a.op}" if self.mode == "op" else "fold(self"
        return [f"{a.name} = {a.name} {a.op} {how}, device.get({k.name}.{a.partials}));"]


@dataclass
class HostReturn(HostOp):
    value: Optional[A.Expr]
    buffer: Optional[str] = None
    loc: A.Loc = A.NOLOC

    def text_lines(self):
        if self.buffer is not None:
            return [f"return device.get({self.buffer});"]
        return ["return" + (f" {fmt_expr(self.value)}" if self.value is not None else "") + ";"]


# -- plans -------------------------------------------------------------------------------------


@dataclass
class ExecutionPlanGPU:
    method: str
    kernels: list
    host: list  # statements of the host program (AST plus host operations)
    buffers: dict  # name -> BufferInfo
    transfers_in: list
    transfers_out: list
    host_reduction: Optional[A.ReduceSpec]
    max_group: int = DEFAULT_MAX_GROUP
    warnings: list = field(default_factory=list)
    params: list = field(default_factory=list)
    ret: A.Type = A.VOID

    def grid(self, problem_size: int) -> GridConfig:
        return grid_config(problem_size, self.max_group)

    def kernel(self, kid: int) -> KernelIR:
        return self.kernels[kid - 1]

    def launches(self) -> list:
        """(kernel name, binding) in program order; binding names the enclosing host loops."""
        out: list = []

        def walk(stmts, ctx):
            for s in stmts:
                if isinstance(s, Launch):
                    out.append((s.kernel.name, " / ".join(ctx) if ctx else "once"))
                elif isinstance(s, A.For):
                    hdr = f"for {fmt_expr(s.cond)}" if s.cond is not None else "for"
                    walk(_stmts(s.body), ctx + [hdr])
                elif isinstance(s, A.While):
                    walk(_stmts(s.body), ctx + [f"while {fmt_expr(s.cond)}"])
                elif isinstance(s, A.If):
                    walk(_stmts(s.then), ctx + [f"if {fmt_expr(s.cond)}"])
                    if s.other is not None:
                        walk(_stmts(s.other), ctx + [f"else of {fmt_expr(s.cond)}"])
                elif isinstance(s, (A.Block, A.Sync)):
                    walk(_stmts(s.body if isinstance(s, A.Sync) else s), ctx)

        walk(self.host, [])
        return out

    def to_text(self) -> str:
        out = [f"gpu plan {self.method} (max group {self.max_group})"]
        out.append("buffers:")
        for b in self.buffers.values():
            flat = ", flattened row-major" if b.dims == 2 else ""
            out.append(f"  {b.name} {b.type} {b.origin}{flat}")
        out.append(f"transfers in: {', '.join(self.transfers_in) or '-'}")
        for k in self.kernels:
            out.extend(k.to_text())
        out.append("host:")
        for s in self.host:
            out.append(format_stmt(s, 1))
        out.append("launches:")
        for name, binding in self.launches():
            out.append(f"  {name} {binding}")
        out.append(f"transfers out: {', '.join(self.transfers_out) or '-'}")
        red = self.host_reduction.label() if self.host_reduction is not None else "-"
        out.append(f"host reduction: {red}")
        for w in self.warnings:
            out.append(f"warning: {w}")
        return "\n".join(out) + "\n"


def _stmts(s: A.Stmt) -> list:
    return list(s.stmts) if isinstance(s, A.Block) else [s]


# -- analysis helpers -----------------------------------------------------------------------


def declared_names(stmts: list) -> set:
    out = set()
    for s in stmts:
        for st in A.walk_stmts(s):
            if isinstance(st, A.VarDecl):
                out.add(st.name)
    return out


def _names_in(stmts: list):
    for s in stmts:
        for e in A.all_exprs(s):
            if isinstance(e, A.Name):
                yield e


def _writes(stmts: list):
    for s in stmts:
        for st in A.walk_stmts(s):
            if isinstance(st, (A.Assign, A.IncDec)):
                yield st


def rename(stmts: list, mapping: dict) -> list:
    """Deep copy of ``stmts`` with names (uses and declarations) renamed."""
    out = copy.deepcopy(stmts)
    for s in out:
        for st in A.walk_stmts(s):
            if isinstance(st, A.VarDecl) and st.name in mapping:
                st.name = mapping[st.name]
        for e in A.all_exprs(s):
            if isinstance(e, A.Name) and e.id in mapping:
                e.id = mapping[e.id]
    return out


# -- lowering ----------------------------------------------------------------------------------


class _Lowering:
    def __init__(self, prog: A.Program, m: A.MethodDecl, consts: dict, max_group: int):
        self.prog = prog
        self.m = m
        self.info = m.info
        self.consts = consts
        self.max_group = max_group
        self.kernels: list = []
        self.warnings: list = []
        self.buffers: dict = {}
        self.inline_count = 0
        self.forced = False  # inside an inlined callee: canonical loops over buffers are parallel

    # -- buffers --

    def is_parallel(self, f: A.For) -> bool:
        if f.info is not None and f.info.driver is not None:
            return True
        if not self.forced:
            return False
        canon = canonical_loop(f)
        if canon is None:
            return False
        iv = canon[0]
        for e in A.all_exprs(f.body):
            if isinstance(e, A.Index):
                name, idxs = A.index_chain(e)
                if name in self.buffers and any(
                        isinstance(x, A.Name) and x.id == iv for i in idxs for x in A.walk_expr(i)):
                    return True
        return False

    def touches(self, node) -> bool:
        """True if a statement or expression reads or writes device buffer cells."""
        if isinstance(node, A.Stmt):
            if isinstance(node, A.VarDecl) and node.name in self.buffers:
                return True
            return any(_array_refs(e) & set(self.buffers) for st in A.walk_stmts(node)
                       for e in A.stmt_exprs(st))
        return bool(_array_refs(node) & set(self.buffers))

    def host_evaluable(self, e: A.Expr) -> bool:
        for x in _walk_data(e):
            if isinstance(x, A.IReduce):
                return False
            if isinstance(x, A.Index) and A.root_name(x) in self.buffers:
                return False
            if isinstance(x, A.Call):
                if any(a.ty is not None and a.ty.is_array and A.root_name(a) in self.buffers for a in x.args):
                    return False
                if x in self.info.ireduce_calls:
                    return False
        return True

    def find_buffers(self):
        m = self.m
        arrays = {p.name: p.type for p in m.params if p.type.is_array}
        for s in A.walk_stmts(m.body):
            if isinstance(s, A.VarDecl) and s.type.is_array:
                arrays.setdefault(s.name, s.type)
        bufs = set(self.info.dist)

        def arrays_in(stmts, exclude=()):
            found = set()
            for n in _names_in(stmts):
                if n.id in arrays and n.id not in exclude:
                    found.add(n.id)
            return found

        for f in self.info.parallel_loops:
            bufs |= arrays_in([f.body], declared_names([f.body]))
        for call in self.info.ireduce_calls:
            for a in call.args:
                if isinstance(a, A.Name) and a.id in arrays:
                    bufs.add(a.id)
        # statements that touch a buffer pull every array they mention onto the device
        changed = True
        while changed:
            changed = False
            for s in A.walk_stmts(m.body):
                if isinstance(s, (A.Block, A.For, A.While, A.If, A.Sync)):
                    continue
                names = {n for e in A.stmt_exprs(s) for n in _array_refs(e) if n in arrays}
                if isinstance(s, A.VarDecl) and s.type.is_array:
                    names.add(s.name)
                if names & bufs and not names <= bufs:
                    bufs |= names
                    changed = True
        for name in sorted(bufs, key=lambda n: list(arrays).index(n) if n in arrays else 0):
            if name not in arrays:
                continue
            ty = arrays[name]
            if ty.dims > 2:
                raise LoweringError(f"{name}: arrays of rank {ty.dims} cannot be flattened", m.loc)
            origin = "param" if m.param(name) is not None else "local"
            self.buffers[name] = BufferInfo(name, ty, origin)

    # -- driver --

    def run(self) -> ExecutionPlanGPU:
        m = self.m
        for dv in self.info.dist.values():
            if not dv.spec.is_builtin:
                self.warnings.append(f"GPU_STRATEGY_IGNORED: {m.name}: partitioning strategy "
                                     f"{dv.spec.strategy} of {dv.name} does not apply on the device")
        self.find_buffers()
        if self.info.parallel_loops or self.info.ireduce_calls:
            body = self.block(m.body.stmts)
        else:
            body = self.serial(m.body.stmts, m.loc)
        puts = [Put(b.name) for b in self.buffers.values() if b.origin == "param"]
        host = puts + body
        outs = []
        for s in _walk_host(host):
            if isinstance(s, Fold):
                outs.append(f"{s.kernel.name}.{s.acc.partials}")
            elif isinstance(s, HostReturn) and s.buffer is not None and s.buffer not in outs:
                outs.append(s.buffer)
        red = m.effective_reduce()
        return ExecutionPlanGPU(m.name, self.kernels, host, self.buffers, [p.buffer for p in puts], outs,
                                red, self.max_group, self.warnings, [p.name for p in m.params], m.ret)

    def block(self, stmts: list) -> list:
        out: list = []
        pending: list = []  # consecutive statements headed for one serial kernel

        def flush():
            if pending:
                out.extend(self.serial(list(pending), pending[0].loc))
                pending.clear()

        for s in stmts:
            ops = self.stmt(s)
            if ops is None:
                pending.append(s)
            else:
                flush()
                out.extend(ops)
        flush()
        return out

    def stmt(self, s: A.Stmt) -> Optional[list]:
        """Host operations for ``s``, or None if it has to run in a serial kernel."""
        if isinstance(s, A.For) and self.is_parallel(s):
            return self.parallel_loop(s)
        if isinstance(s, A.Sync):
            return self.block(s.body.stmts)
        if isinstance(s, A.Block):
            return [A.Block(self.block(s.stmts), loc=s.loc)]
        if isinstance(s, (A.For, A.While, A.If)):
            return self.control(s)
        if isinstance(s, A.VarDecl) and s.name in self.buffers:
            if not isinstance(s.init, A.NewArray) or len(s.init.dims) != s.type.dims:
                raise LoweringError(f"{s.name}: device arrays must be created with a full "
                                    f"'new {s.type.base}[..]' expression", s.loc)
            if not all(self.host_evaluable(d) for d in s.init.dims):
                raise LoweringError(f"{s.name}: array extents read device data", s.loc)
            return [Alloc(s.name, A.Type(s.type.base), list(s.init.dims))]
        if isinstance(s, A.Assign) and isinstance(s.target, A.Name) and s.target.id in self.buffers:
            raise LoweringError(f"device array {s.target.id} cannot be reassigned", s.loc)
        pre, s = self.hoist(s)
        if isinstance(s, A.Return):
            v = s.value
            if isinstance(v, A.Name) and v.id in self.buffers:
                return pre + [HostReturn(None, v.id, loc=s.loc)]
            if v is None or not self.touches(v):
                return pre + [HostReturn(v, loc=s.loc)]
            return pre + self.serial([s], s.loc) if pre else None
        if self.touches(s):
            return pre + self.serial([s], s.loc) if pre else None
        return pre + [s]

    def control(self, s: A.Stmt) -> Optional[list]:
        contains = any(isinstance(x, A.For) and self.is_parallel(x) for x in A.walk_stmts(s)) or any(
            isinstance(x, A.Call) and x in self.info.ireduce_calls for x in A.all_exprs(s))
        if not contains:
            return None if self.touches(s) else [s]
        if isinstance(s, A.For):
            hdr = [x for x in (s.init, s.update) if x is not None]
            ok = all(not self.touches(h) for h in hdr) and (s.cond is None or self.host_evaluable(s.cond))
            if ok:
                new = A.For(s.init, s.cond, s.update, A.Block(self.block(_stmts(s.body))), loc=s.loc)
                new.info = s.info
                return [new]
        elif isinstance(s, A.While):
            if self.host_evaluable(s.cond):
                return [A.While(s.cond, A.Block(self.block(_stmts(s.body))), loc=s.loc)]
        elif isinstance(s, A.If):
            if self.host_evaluable(s.cond):
                other = None
                if s.other is not None:
                    other = A.Block(self.block(_stmts(s.other)))
                return [A.If(s.cond, A.Block(self.block(_stmts(s.then))), other, loc=s.loc)]
        self.warnings.append(f"GPU_SERIAL_REGION: {self.m.name} line {s.loc.line}: control flow depends on "
                             "device data; the whole statement runs in one device thread")
        return None

    # -- cross-instance reductions --

    def hoist(self, s: A.Stmt):
        """Replace reducing calls in ``s`` by temporaries computed by inlined reduction kernels."""
        calls = [e for e in A.all_exprs(s) if isinstance(e, A.Call) and e in self.info.ireduce_calls]
        if not calls:
            return [], s
        ops: list = []
        results = {}
        for c in calls:
            got = self.inline(c)
            if got is None:
                return [], s
            pre, name = got
            ops.extend(pre)
            results[id(c)] = A.Name(name, loc=c.loc, ty=c.ty)
        s = _replace_calls(s, results)
        return ops, s

    def inline(self, call: A.Call):
        callee = self.prog.method(call.name)
        body = callee.body.stmts
        if not body or not isinstance(body[-1], A.Return) or not isinstance(body[-1].value, A.Name):
            return None
        self.inline_count += 1
        k = self.inline_count
        pre: list = []
        mapping = {}
        for p, a in zip(callee.params, call.args):
            if p.type.is_array:
                if not isinstance(a, A.Name):
                    return None
                mapping[p.name] = a.id
            else:
                tmp = f"_in{k}_{p.name}"
                mapping[p.name] = tmp
                pre.append(A.VarDecl(p.type, tmp, a, loc=call.loc))
        for name in declared_names(body):
            mapping[name] = f"_in{k}_{name}"
        stmts = rename(body, mapping)
        result = stmts[-1].value.id
        saved = self.forced
        self.forced = True
        try:
            for s in stmts[:-1]:
                if isinstance(s, A.For) and self.is_parallel(s):
                    pre.extend(self.parallel_loop(s))
                elif isinstance(s, A.VarDecl) and not s.type.is_array and not self.touches(s):
                    pre.append(s)
                else:
                    return None
        finally:
            self.forced = saved
        return pre, result

    # -- kernels --

    def new_kernel(self, **kw) -> KernelIR:
        k = KernelIR(id=len(self.kernels) + 1, method=self.m.name, **kw)
        self.kernels.append(k)
        return k

    def free_scalars(self, stmts: list, bound: set) -> list:
        local = declared_names(stmts) | bound
        out: list = []
        for n in _names_in(stmts):
            if n.id in local or n.id in self.consts or n.id in self.buffers or n.id in out:
                continue
            if n.ty is not None and n.ty.is_array:
                raise LoweringError(f"array {n.id} is used on the device but was not planned as a buffer", n.loc)
            out.append(n.id)
        return out

    def parallel_loop(self, f: A.For) -> list:
        canon = canonical_loop(f)
        if canon is None:
            raise LoweringError("parallel loop is not in canonical form", f.loc)
        iv, lb, ub, step, _ = canon
        ivs = [(iv, lb, ub, step)]
        body = _stmts(f.body)
        inner = body[0] if len(body) == 1 else None
        while isinstance(inner, A.Block) and len(inner.stmts) == 1:
            inner = inner.stmts[0]
        if step == 1 and isinstance(inner, A.For) and self.is_parallel(inner):
            c2 = canonical_loop(inner)
            if c2 is not None and c2[3] == 1 and not any(
                    isinstance(x, A.Name) and x.id == iv for e in (c2[1], c2[2]) for x in A.walk_expr(e)):
                ivs.append((c2[0], c2[1], c2[2], 1))
                body = _stmts(inner.body)
        for _, lo, hi, _ in ivs:
            if not (self.host_evaluable(lo) and self.host_evaluable(hi)):
                raise LoweringError("parallel loop bounds read device data", f.loc)
        bound = {v for v, _, _, _ in ivs}
        scalars = self.free_scalars(body, bound)
        written: dict = {}
        for st in _writes(body):
            t = st.target
            if isinstance(t, A.Name):
                if t.id in scalars:
                    written.setdefault(t.id, []).append(st)
            elif A.root_name(t) in self.buffers:
                _, idxs = A.index_chain(t)
                for ix in idxs:
                    if any(isinstance(x, (A.Index, A.Call)) for x in A.walk_expr(ix)):
                        raise LoweringError(f"indirect write to {A.root_name(t)}: threads of different "
                                            "groups could write the same cell", st.loc)
        for x in A.all_exprs(A.Block(body)):
            if isinstance(x, A.Call):
                for a in x.args:
                    if a.ty is not None and a.ty.is_array and A.root_name(a) in self.buffers:
                        raise LoweringError(f"call to {x.name} passes device array {A.root_name(a)}", x.loc)
            if isinstance(x, A.Call) and x in self.info.ireduce_calls:
                raise LoweringError(f"reducing call to {x.name} inside a parallel loop", x.loc)
        accs: list = []
        for name, sites in written.items():
            op = _accumulation_op(name, sites, body)
            if op is None:
                if name in self.info.shared:
                    raise LoweringError(f"shared scalar {name} is written on the device outside a "
                                        "reduction", sites[0].loc)
                self.warnings.append(f"GPU_SERIAL_REGION: {self.m.name} line {f.loc.line}: updates of {name} "
                                     "cannot be folded; the loop runs in one device thread")
                return self.serial([f], f.loc)
            ty = _scalar_type(name, body, self)
            accs.append(Accumulator(name, op, ty.base, len(accs)))
        acc_names = {a.name for a in accs}
        k = self.new_kernel(kind="reduce" if accs else "map", ivs=ivs,
                            buffers=self.buffers_in(body),
                            scalars=[s for s in scalars if s not in acc_names], body=body,
                            accumulators=accs, loc=f.loc)
        ops: list = [Launch(k, loc=f.loc)]
        red = self.m.effective_reduce()
        for a in accs:
            mode = "op"
            if red is not None and red.kind == "self" and self.info.returned == a.name:
                mode = "self"
            ops.append(Fold(k, a, mode))
        return ops

    def buffers_in(self, stmts: list) -> list:
        seen = {n.id for n in _names_in(stmts)}
        return [b for b in self.buffers if b in seen]

    def serial(self, stmts: list, loc: A.Loc) -> list:
        scalars = self.free_scalars(stmts, set())
        wb = [st.target.id for st in _writes(stmts) if isinstance(st.target, A.Name)
              and st.target.id in scalars]
        top = [s.name for s in stmts if isinstance(s, A.VarDecl) and not s.type.is_array]
        writeback = list(dict.fromkeys(wb + top))
        returns = any(isinstance(x, A.Return) for s in stmts for x in A.walk_stmts(s))
        for x in A.all_exprs(A.Block(stmts)):
            if isinstance(x, A.Call):
                for a in x.args:
                    if a.ty is not None and a.ty.is_array and A.root_name(a) in self.buffers \
                            and self.buffers[A.root_name(a)].dims > 1:
                        raise LoweringError(f"call to {x.name} passes flattened device array "
                                            f"{A.root_name(a)}", x.loc)
        for s in stmts:
            for st in A.walk_stmts(s):
                if isinstance(st, A.VarDecl) and st.name in self.buffers:
                    raise LoweringError(f"device array {st.name} declared inside device code", st.loc)
        k = self.new_kernel(kind="serial", ivs=[], buffers=self.buffers_in(stmts), scalars=scalars,
                            body=stmts, writeback=writeback, returns=returns, loc=loc)
        return [Launch(k, loc=loc)]


def _walk_data(e: A.Expr):
    """Like walk_expr, but skips the array operand of ``.length`` (reading a length reads no data)."""
    stack = [e]
    while stack:
        x = stack.pop()
        if isinstance(x, A.Length):
            # only the index expressions of a row reference can read data
            b = x.base
            while isinstance(b, A.Index):
                stack.append(b.index)
                b = b.base
            continue
        yield x
        stack.extend(A.child_exprs(x))


def _array_refs(e: A.Expr) -> set:
    """Names whose contents ``e`` reads or hands on."""
    return {x.id for x in _walk_data(e) if isinstance(x, A.Name)}


def _walk_host(stmts: list):
    for s in stmts:
        yield s
        if isinstance(s, (A.Block, A.For, A.While, A.If)):
            for c in A.child_stmts(s):
                yield from _walk_host([c])


def _accumulation_op(name: str, sites: list, body: list) -> Optional[str]:
    """Combining operator if ``name`` is only updated as ``name op= e`` and never read otherwise."""
    ops = set()
    for st in sites:
        if isinstance(st, A.IncDec):
            ops.add("+")
        elif st.op in ("+=", "-="):
            ops.add("+")
        elif st.op == "*=":
            ops.add("*")
        else:
            return None
        if st.op in ("+=", "-=", "*=") and any(
                isinstance(x, A.Name) and x.id == name for x in A.walk_expr(st.value)):
            return None
    if len(ops) != 1:
        return None
    uses = sum(1 for n in _names_in(body) if n.id == name)
    if uses != len(sites):
        return None
    return ops.pop()


def _scalar_type(name: str, body: list, low: _Lowering) -> A.Type:
    for n in _names_in(body):
        if n.id == name and n.ty is not None:
            if n.ty.base not in ("int", "long", "double"):
                raise LoweringError(f"{name}: only numeric scalars can be reduced on the device", n.loc)
            return n.ty
    return low.info.locals.get(name, A.DOUBLE)


def _replace_calls(s: A.Stmt, results: dict) -> A.Stmt:
    """Copy of ``s`` where the Call nodes keyed in ``results`` (by id) are replaced."""
    import dataclasses

    def fix(e):
        if e is None:
            return None
        if id(e) in results:
            return results[id(e)]
        if not dataclasses.is_dataclass(e):
            return e
        changes = {}
        for f in dataclasses.fields(e):
            v = getattr(e, f.name)
            if isinstance(v, A.Expr):
                nv = fix(v)
                if nv is not v:
                    changes[f.name] = nv
            elif isinstance(v, list) and v and isinstance(v[0], A.Expr):
                nv = [fix(x) for x in v]
                if any(a is not b for a, b in zip(nv, v)):
                    changes[f.name] = nv
        return dataclasses.replace(e, **changes) if changes else e

    return fix(s)


def lower_gpu(prog: A.Program, m: A.MethodDecl, consts: Optional[dict] = None,
              max_group: int = DEFAULT_MAX_GROUP) -> ExecutionPlanGPU:
    """Kernel sequence, host program and transfer schedule for ``m``; LoweringError if ineligible."""
    if consts is None:
        from .codegen import eval_constants

        consts = eval_constants(prog)
    return _Lowering(prog, m, consts, max_group).run()


__all__ = ["GridConfig", "grid_config", "KernelIR", "Accumulator", "BufferInfo", "ExecutionPlanGPU",
           "lower_gpu", "Put", "Alloc", "Launch", "Fold", "HostReturn", "DEFAULT_MAX_GROUP"]

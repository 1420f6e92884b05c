"""Shared-memory lowering: master plan plus the slave body run by each method instance.

The master evaluates partition extents, allocates dist locals and copies of
written dist parameters, partitions every distributed value, spawns one task
per rank and folds the results vector.  The slave body is the method body with
returns turned into result stores, sync blocks turned into fence arrivals (or
intermediate reductions) and parallel loops clamped to the rank's index range.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Optional

from .errors import LoweringError
from .frontend import ast as A
from .frontend import printer as P
from .frontend.checker import iv_offset
from .partition import factor_grid


@dataclass
class PartitionCall:
    value: str
    dim: int  # 0-based dimension of the value
    extent: A.Expr
    parts: int  # divisions along this dimension
    view: tuple  # (before, after)
    slot: str  # e.g. G_1
    rank_expr: str  # how a rank selects its range: rank, rank / c, rank % c
    strategy: Optional[str] = None
    args: list = field(default_factory=list)
    align: int = 1


@dataclass
class SlaveIR:
    params: list  # slave parameter names in order
    body: list  # transformed statements
    env: dict  # completed/fence/results/rank and per-array range slots


@dataclass
class ExecutionPlanSM:
    method: A.MethodDecl
    n_slaves: int
    shared_decls: list  # (name, Type, init Expr or None)
    dist_locals: list  # (name, Type, NewArray)
    copies: list  # written dist params the master copies once
    partition_calls: list
    slave: SlaveIR
    reduce_spec: Optional[A.ReduceSpec]
    reduce_args: list
    segment: Optional[tuple]
    grid: dict = field(default_factory=dict)  # value -> (r, c) for 2D block partitions
    ireduces: list = field(default_factory=list)  # IReduce nodes in emission order
    specialized: Optional[tuple] = None  # (first slots, last slots) for edge variants

    @property
    def fence_parties(self) -> int:
        return self.n_slaves

    @property
    def completed_parties(self) -> int:
        return self.n_slaves + 1

    def to_text(self) -> str:
        return format_plan(self)


def _slot(value: str, dim: int) -> str:
    return f"{value}_{dim + 1}"


def _align_for(m: A.MethodDecl, value: str, dim: int) -> int:
    steps = set()
    for f in m.info.parallel_loops:
        if f.info.driver == (value, dim):
            steps.add(f.info.step)
            continue
        # a strided loop driven by another array may still walk this one in the same blocks
        for e in A.all_exprs(f.body):
            name, idxs = A.index_chain(e) if isinstance(e, A.Index) else (None, [])
            if name == value and len(idxs) > dim and iv_offset(idxs[dim], f.info.iv) is not None:
                steps.add(f.info.step)
                break
    out = 1
    for s in steps:
        if s and s > 1:
            a, b = out, s
            while b:
                a, b = b, a % b
            out = out * s // a
    return out


def lower_master_sm(m: A.MethodDecl, n_slaves: int, prog: A.Program,
                    specialize: Optional[tuple] = None) -> ExecutionPlanSM:
    """Build the master plan and the slave IR for ``m`` run by ``n_slaves`` instances.

    ``specialize`` = (slots whose range starts the dimension, slots whose range
    ends it) drops the corresponding max/min clamps in the slave body.
    """
    if n_slaves < 1:
        raise LoweringError("n_slaves must be positive", m.loc)
    info = m.info
    if info is None:
        raise LoweringError(f"method {m.name!r} was not validated", m.loc)
    calls, grid = [], {}
    for name, dv in info.dist.items():
        pdims = dv.pdims
        if dv.spec.strategy is not None and len(pdims) > 1:
            raise LoweringError(f"{name!r}: a user strategy partitions a single dimension", dv.spec.loc)
        if len(pdims) == 2:
            r, c = factor_grid(n_slaves)
            grid[name] = (r, c)
            parts = {pdims[0]: (r, "rank / " + str(c)), pdims[1]: (c, "rank % " + str(c))}
        else:
            parts = {pdims[0]: (n_slaves, "rank")}
        for d in pdims:
            if (name, d) not in info.extents:
                raise LoweringError(f"no partition extent for {name!r} dimension {d + 1}", dv.spec.loc)
            count, rank_expr = parts[d]
            calls.append(PartitionCall(
                name, d, info.extents[(name, d)], count, dv.spec.halo(d), _slot(name, d), rank_expr,
                dv.spec.strategy, list(dv.spec.args), _align_for(m, name, d)))
    shared = [(n, d.type, d.init) for n, d in info.shared.items()]
    dist_locals = [(n, dv.type, dv.decl.init) for n, dv in info.dist.items() if not dv.is_param]
    copies = [n for n, dv in info.dist.items() if dv.is_param and dv.written]
    env = {"completed": "completed", "fence": "fence", "results": "results", "rank": "rank"}
    for c in calls:
        env[f"{c.value}[{c.dim}]"] = c.slot
    xf = _SlaveTransform(m, prog, calls, specialize)
    body = xf.block(copy.deepcopy(m.body.stmts))
    params = [p.name for p in m.params] + [n for n, _, _ in shared] + [n for n, _, _ in dist_locals]
    slave = SlaveIR(params, body, env)
    spec = m.effective_reduce()
    return ExecutionPlanSM(
        m, n_slaves, shared, dist_locals, copies, calls, slave, spec,
        list(spec.args) if spec is not None else [], info.segment, grid, xf.ireduces, specialize)


class _SlaveTransform:
    """The translation function from method body to slave body."""

    def __init__(self, m: A.MethodDecl, prog: A.Program, calls: list, specialize: Optional[tuple]):
        self.m = m
        self.prog = prog
        self.info = m.info
        self.calls = {(c.value, c.dim): c for c in calls}
        self.first, self.last = specialize or (frozenset(), frozenset())
        self.ireduces: list = []

    def block(self, stmts: list) -> list:
        out = []
        for s in stmts:
            out.extend(self.stmt(s))
        return out

    def wrap(self, s: A.Stmt) -> A.Stmt:
        """Transform a nested statement, keeping a Block wherever one was."""
        got = self.stmt(s)
        if isinstance(s, A.Block) or len(got) != 1:
            return A.Block(got, loc=s.loc)
        return got[0]

    def stmt(self, s: A.Stmt) -> list:
        info = self.info
        if isinstance(s, A.VarDecl):
            if s.shared:
                return []
            if s.dist is not None and s.name in info.dist:
                return []
            if s.init is not None:
                s.init = self.expr(s.init)
            return [s]
        if isinstance(s, A.Return):
            return [A.ResultStore(self.expr(s.value) if s.value is not None else None, loc=s.loc)]
        if isinstance(s, A.Sync):
            body = self.block(s.body.stmts)
            if s.reduce is not None:
                red = A.IReduce(s.reduce, A.Name(s.target, ty=info.shared[s.target].type),
                                ty=info.shared[s.target].type, loc=s.loc)
                self.ireduces.append(red)
                return body + [A.Assign(A.Name(s.target, ty=red.ty), "=", red, loc=s.loc)]
            return body + [A.Fence(loc=s.loc)]
        if isinstance(s, A.Block):
            return [A.Block(self.block(s.stmts), loc=s.loc)]
        if isinstance(s, A.If):
            s.cond = self.expr(s.cond)
            s.then = self.wrap(s.then)
            if s.other is not None:
                s.other = self.wrap(s.other)
            return [s]
        if isinstance(s, A.While):
            s.cond = self.expr(s.cond)
            s.body = self.wrap(s.body)
            return [s]
        if isinstance(s, A.For):
            return [self.for_loop(s)]
        if isinstance(s, A.Assign):
            s.target = self.expr(s.target)
            s.value = self.expr(s.value)
            return [s]
        if isinstance(s, A.ExprStmt):
            s.expr = self.expr(s.expr)
            return [s]
        return [s]

    def for_loop(self, f: A.For) -> A.Stmt:
        li = f.info
        if li is None or li.driver is None:
            if f.init is not None:
                f.init = self.wrap(f.init)
            if f.cond is not None:
                f.cond = self.expr(f.cond)
            f.body = self.wrap(f.body)
            return f
        pc = self.calls.get(li.driver)
        if pc is None:
            raise LoweringError(f"loop over {li.driver[0]!r} has no partition call", f.loc)
        extent = pc.extent
        lo_ref = A.RangeRef(pc.value, pc.dim, 0, pc.slot, ty=A.INT)
        hi_ref = A.RangeRef(pc.value, pc.dim, 1, pc.slot, ty=A.INT)
        full = isinstance(li.lb, A.IntLit) and li.lb.value == 0 and li.ub == extent
        if full:
            lb, ub = lo_ref, hi_ref
            if pc.slot in self.first:
                lb = A.IntLit(0, ty=A.INT)
            if pc.slot in self.last:
                ub = li.ub
        else:
            lb = A.MathCall("max", [li.lb, lo_ref], ty=A.INT)
            ub = A.MathCall("min", [li.ub, hi_ref], ty=A.INT)
            if pc.slot in self.first and isinstance(li.lb, A.IntLit) and li.lb.value >= 0:
                lb = li.lb
            if pc.slot in self.last and li.ub == extent:
                ub = li.ub
        iv_ty = f.init.type if isinstance(f.init, A.VarDecl) else A.INT
        iv = A.Name(li.iv, ty=iv_ty)
        init = A.VarDecl(iv_ty, li.iv, lb, loc=f.init.loc if f.init else f.loc)
        cond = A.Binary("<", iv, ub, ty=A.BOOLEAN, opty=A.INT, loc=f.cond.loc if f.cond else f.loc)
        body = self.wrap(f.body)
        out = A.For(init, cond, f.update, body, loc=f.loc)
        out.info = A.LoopInfo(li.rank, li.iv, lb, ub, li.step, li.driver)
        return out

    def expr(self, e: A.Expr) -> A.Expr:
        if isinstance(e, A.Call):
            args = [self.expr(a) for a in e.args]
            callee = self.prog.method(e.name)
            if callee is not None and callee.reduce is not None:
                owned = [A.OwnedSlice(a.id, ty=a.ty, loc=a.loc)
                         if isinstance(a, A.Name) and a.id in self.info.dist else a for a in args]
                call = A.Call(e.name, owned, loc=e.loc, ty=e.ty)
                red = A.IReduce(callee.reduce, call, e.name, loc=e.loc, ty=e.ty)
                self.ireduces.append(red)
                return red
            e.args = args
            return e
        for fname in ("base", "index", "operand", "left", "right", "cond", "then", "other", "expr"):
            if hasattr(e, fname) and isinstance(getattr(e, fname), A.Expr):
                setattr(e, fname, self.expr(getattr(e, fname)))
        if isinstance(e, (A.MathCall, A.NewArray)):
            if isinstance(e, A.MathCall):
                e.args = [self.expr(a) for a in e.args]
            else:
                e.dims = [self.expr(d) for d in e.dims]
        return e


# -- plan dump ----------------------------------------------------------------------


def _java_type(t: A.Type) -> str:
    return str(t)


def format_plan(plan: ExecutionPlanSM) -> str:
    m = plan.method
    out = []
    emit = out.append
    spec = plan.reduce_spec
    ret = m.ret
    emit(f"// master for {m.name}: {plan.n_slaves} slaves")
    if spec is not None and spec is not A.ASSEMBLY:
        emit(P.reduce_spec(spec))
    params = ", ".join(f"{_java_type(p.type)} {p.name}" for p in m.params)
    emit(f"{ret} {m.name}({params}) {{")
    emit(f"  int nSlaves = {plan.n_slaves};")
    emit("  Phaser fence = new Phaser(nSlaves);")
    emit("  Phaser completed = new Phaser(nSlaves + 1);")
    if ret != A.VOID:
        emit(f"  {A.Type(ret.base, ret.dims + 1)} results = new {ret.base}[nSlaves]{'[]' * ret.dims};")
    for name, ty, init in plan.shared_decls:
        init_s = P.expr(init) if init is not None else "0"
        emit(f"  {ty} {name} = {init_s};")
    for name, ty, init in plan.dist_locals:
        emit(f"  {ty} {name} = {P.expr(init)};")
    for name in plan.copies:
        emit(f"  {name} = copy({name});")
    for pc in plan.partition_calls:
        view = "{" + f"{pc.view[0]},{pc.view[1]}" + "}"
        if pc.strategy is not None:
            args = "".join(", " + P.expr(a) for a in pc.args)
            emit(f"  int[][] {pc.slot} = {pc.strategy}({P.expr(pc.extent)}, {pc.parts}{args});")
        elif pc.align > 1:
            emit(f"  int[][] {pc.slot} = IndexPartitioner({P.expr(pc.extent)}, {pc.parts}, {view}, {pc.align});")
        else:
            emit(f"  int[][] {pc.slot} = IndexPartitioner({P.expr(pc.extent)}, {pc.parts}, {view});")
    args = [p.name for p in m.params] + [n for n, _, _ in plan.shared_decls] + [n for n, _, _ in plan.dist_locals]
    args += [f"{pc.slot}[{pc.rank_expr}]" for pc in plan.partition_calls]
    args += ["fence", "completed", "results", "rank"]
    emit("  for (int rank = 0; rank < nSlaves; rank++)")
    emit(f"    spawn({m.name}_slave({', '.join(args)}));")
    emit("  completed.advanceAndWait();")
    if ret != A.VOID and spec is not None:
        if spec.kind == "assembly":
            if plan.segment is not None:
                v, vd, arr, axis = plan.segment
                emit(f"  {ret} result = assemble(results, {v}_{vd + 1}, {axis + 1});")
            else:
                emit(f"  {ret} result = assemble(results);")
        else:
            emit(f"  {ret} result = {P.reduce_spec(spec)}(results);")
        emit("  return result;")
    elif ret != A.VOID:
        emit(f"  return results[0];")
    emit("}")
    emit("")
    sp = [f"{_java_type(p.type)} {p.name}" for p in m.params]
    sp += [f"{ty} {n}" for n, ty, _ in plan.shared_decls]
    sp += [f"{ty} {n}" for n, ty, _ in plan.dist_locals]
    sp += [f"int[] {pc.slot}" for pc in plan.partition_calls]
    results_ty = A.Type(ret.base, ret.dims + 1) if ret != A.VOID else "Object[]"
    sp += ["Phaser fence", "Phaser completed", f"{results_ty} results", "int rank"]
    emit(f"void {m.name}_slave({', '.join(sp)}) {{")
    for s in plan.slave.body:
        emit(P.format_stmt(s, 1).rstrip("\n"))
    emit("}")
    return "\n".join(out) + "\n"

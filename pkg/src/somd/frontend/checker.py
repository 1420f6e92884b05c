"""Type checking and SOMD validation.

``check_program`` annotates the AST in place (expression types, loop ranks
and induction variables, per-method :class:`MethodInfo`) and returns every
diagnostic found.  ``validate`` raises :class:`CompileError` when any of them
is an error.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..errors import CompileError, Diagnostic
from ..values import INT_MAX, INT_MIN, LONG_MAX, LONG_MIN
from . import ast as A
from .printer import expr as show

ERR = A.Type("?")

_RANK = {"int": 1, "long": 2, "double": 3}
_ARITH = ("+", "-", "*", "/", "%")
_BITWISE = ("&", "|", "^")
_SHIFTS = ("<<", ">>", ">>>")
_COMPARE = ("<", ">", "<=", ">=")
_EQUALITY = ("==", "!=")


def promote(a: A.Type, b: A.Type) -> A.Type:
    return a if _RANK[a.base] >= _RANK[b.base] else b


@dataclass
class DistValue:
    name: str
    type: A.Type
    spec: A.DistSpec
    is_param: bool
    decl: object = None
    written: bool = False

    @property
    def ndims(self) -> int:
        return self.type.dims

    @property
    def pdims(self) -> tuple:
        return self.spec.partitioned_dims(self.type.dims)


@dataclass
class MethodInfo:
    """What the backends need to know about one method."""

    somd: bool = False
    dist: dict = field(default_factory=dict)  # name -> DistValue, declaration order
    shared: dict = field(default_factory=dict)  # name -> VarDecl
    sync_reduce: dict = field(default_factory=dict)  # shared name -> ReduceSpec
    loops: list = field(default_factory=list)  # every For, by rank
    ireduce_calls: list = field(default_factory=list)  # Call nodes reduced across MIs
    syncs: list = field(default_factory=list)
    written: set = field(default_factory=set)  # root names written anywhere
    returned: Optional[str] = None  # name of the returned variable, if a plain name
    extents: dict = field(default_factory=dict)  # (value, dim) -> Expr partition extent
    full_extent: dict = field(default_factory=dict)  # (value, dim) -> bool
    # (dist value, dim) whose ranges cut the returned array, then (array, axis) being cut
    segment: Optional[tuple] = None
    calls: set = field(default_factory=set)
    locals: dict = field(default_factory=dict)  # name -> Type (last declaration)
    has_fences: bool = False

    @property
    def parallel_loops(self) -> list:
        return [f for f in self.loops if f.info.driver is not None]


@dataclass
class _Sym:
    kind: str  # const | param | local
    type: A.Type
    decl: object = None
    shared: bool = False


@dataclass
class _Registry:
    strategies: set
    reducers: set


def _default_registry() -> _Registry:
    from ..partition import registry

    return _Registry(set(registry.strategies), set(registry.reducers))


def iv_offset(idx: A.Expr, iv: str) -> Optional[int]:
    """Offset ``c`` if ``idx`` is ``iv``, ``iv + c`` or ``iv - c``; else None."""
    if isinstance(idx, A.Name) and idx.id == iv:
        return 0
    if isinstance(idx, A.Binary) and idx.op in ("+", "-"):
        l, r = idx.left, idx.right
        if isinstance(l, A.Name) and l.id == iv and isinstance(r, A.IntLit):
            return r.value if idx.op == "+" else -r.value
        if idx.op == "+" and isinstance(r, A.Name) and r.id == iv and isinstance(l, A.IntLit):
            return l.value
    return None


def canonical_loop(f: A.For):
    """(iv, lb, ub exclusive, step, declared) for ``for (iv = lb; iv < ub; iv += c)``."""
    init, cond, upd = f.init, f.cond, f.update
    if isinstance(init, A.VarDecl) and init.init is not None and init.type in (A.INT, A.LONG):
        iv, lb, declared = init.name, init.init, True
    elif (isinstance(init, A.Assign) and init.op == "=" and isinstance(init.target, A.Name)):
        iv, lb, declared = init.target.id, init.value, False
    else:
        return None
    ub = None
    if isinstance(cond, A.Binary):
        l, r = cond.left, cond.right
        one = A.IntLit(1, loc=cond.loc)
        if cond.op == "<" and isinstance(l, A.Name) and l.id == iv:
            ub = r
        elif cond.op == "<=" and isinstance(l, A.Name) and l.id == iv:
            ub = A.Binary("+", r, one, loc=cond.loc)
        elif cond.op == ">" and isinstance(r, A.Name) and r.id == iv:
            ub = l
        elif cond.op == ">=" and isinstance(r, A.Name) and r.id == iv:
            ub = A.Binary("+", l, one, loc=cond.loc)
    if ub is None:
        return None
    step = None
    if isinstance(upd, A.IncDec) and upd.op == "++" and isinstance(upd.target, A.Name) \
            and upd.target.id == iv:
        step = 1
    elif isinstance(upd, A.Assign) and isinstance(upd.target, A.Name) and upd.target.id == iv:
        if upd.op == "+=" and isinstance(upd.value, A.IntLit):
            step = upd.value.value
        elif upd.op == "=" and isinstance(upd.value, A.Binary) and upd.value.op == "+":
            step = iv_offset(upd.value, iv)
    if step is None or step <= 0:
        return None
    return iv, lb, ub, step, declared


def loop_vars(f: A.For) -> set:
    names = set()
    for s in (f.init, f.update):
        if isinstance(s, A.VarDecl):
            names.add(s.name)
        elif isinstance(s, (A.Assign, A.IncDec)):
            r = A.root_name(s.target)
            if r:
                names.add(r)
    return names


def assigned_names(s: A.Stmt) -> set:
    out = set()
    for st in A.walk_stmts(s):
        if isinstance(st, (A.Assign, A.IncDec)):
            r = A.root_name(st.target)
            if r and isinstance(st.target, A.Name):
                out.add(r)
        elif isinstance(st, A.VarDecl):
            out.add(st.name)
    return out


def definitely_returns(s: A.Stmt) -> bool:
    if isinstance(s, A.Return):
        return True
    if isinstance(s, A.Block):
        return any(definitely_returns(x) for x in s.stmts)
    if isinstance(s, A.If):
        return s.other is not None and definitely_returns(s.then) and definitely_returns(s.other)
    if isinstance(s, A.Sync):
        return definitely_returns(s.body)
    return False


class _MethodChecker:
    def __init__(self, prog: A.Program, m: A.MethodDecl, consts: dict, reg: _Registry, diags: list):
        self.prog = prog
        self.m = m
        self.reg = reg
        self.diags = diags
        self.info = MethodInfo()
        self.scopes = [consts, {}]
        self.rank = 0
        # context counters
        self.cond_depth = 0  # if / while / ternary / short-circuit
        self.par_depth = 0  # enclosing parallel loops
        self.nonuniform_depth = 0  # sequential loops whose trip count may differ per MI
        self.sync_depth = 0
        self.ret_depth = 0  # nesting below the method's top-level statement list
        self.aliases = {}  # local array name -> param/dist root it aliases
        self.fence_sites = []
        self.returns_below_top = []  # returns nested below the top-level statement list
        self.shared_writes = set()
        self.enclosing_parallel = []
        self._warned_init = set()

    # -- diagnostics ---------------------------------------------------------------

    def err(self, code, msg, loc, severity="error"):
        self.diags.append(Diagnostic(code, msg, loc or self.m.loc, severity, self.m.name))

    def warn(self, code, msg, loc):
        self.err(code, msg, loc, "warning")

    # -- scopes --------------------------------------------------------------------

    def lookup(self, name: str) -> Optional[_Sym]:
        for sc in reversed(self.scopes):
            if name in sc:
                return sc[name]
        return None

    def declare(self, name: str, sym: _Sym, loc):
        for sc in self.scopes[1:]:
            if name in sc:
                self.err("DUPLICATE_VARIABLE", f"variable {name!r} is already defined", loc)
                break
        self.scopes[-1][name] = sym

    # -- entry ----------------------------------------------------------------------

    def run(self) -> MethodInfo:
        m, info = self.m, self.info
        for p in m.params:
            self.declare(p.name, _Sym("param", p.type, p), p.loc)
        # strategy arguments may name any parameter, including later ones
        for p in m.params:
            if p.type.base == "void":
                self.err("TYPE_ERROR", f"parameter {p.name!r} cannot be void", p.loc)
            if p.dist is not None:
                if not p.type.is_array:
                    self.err("DIST_ON_NON_ARRAY", f"dist parameter {p.name!r} is not an array", p.loc)
                else:
                    self.check_dist_spec(p.dist, p.type, p.name)
                    info.dist[p.name] = DistValue(p.name, p.type, p.dist, True, p)
        self.check_reduce_clause()
        self.block(m.body, new_scope=False)
        info.somd = bool(info.dist)
        if m.ret != A.VOID and not definitely_returns(m.body):
            self.err("MISSING_RETURN", f"method {m.name!r} may finish without returning a value", m.loc)
        self.finish()
        return info

    def check_reduce_clause(self):
        m, r = self.m, self.m.reduce
        if r is None:
            return
        if m.ret == A.VOID:
            self.err("REDUCE_TYPE_MISMATCH", "a void method cannot declare a reduction", r.loc)
        elif r.kind == "prim":
            if not m.ret.is_numeric:
                self.err("REDUCE_TYPE_MISMATCH",
                         f"reduce({r.op}) needs a numeric scalar return type, not {m.ret}", r.loc)
        elif r.kind == "self":
            dists = [p for p in m.params if p.dist is not None]
            if len(dists) != 1 or dists[0].type.dims != 1 or dists[0].type.elem() != m.ret:
                self.err("REDUCE_TYPE_MISMATCH",
                         "reduce(self) needs exactly one dist 1D array parameter whose element "
                         f"type equals the return type {m.ret}", r.loc)
            elif len(m.params) != 1:
                self.err("REDUCE_TYPE_MISMATCH",
                         "reduce(self) re-invokes the method on the partial results, so it may "
                         "take no parameter besides the distributed array", r.loc)
        elif r.kind == "user":
            if r.name not in self.reg.reducers:
                self.err("UNKNOWN_STRATEGY", f"no reducer registered under {r.name!r}", r.loc)
            for a in r.args:
                self.expr(a)

    def check_dist_spec(self, d: A.DistSpec, ty: A.Type, name: str):
        if d.view is not None and d.polyview is not None:
            self.err("VIEW_POLYVIEW_EXCLUSIVE", f"{name!r}: view and polyview are mutually exclusive", d.loc)
        for table in (d.view, d.polyview):
            if table is None:
                continue
            if len(table) > ty.dims:
                self.err("DIM_OUT_OF_RANGE",
                         f"{name!r}: view has {len(table)} entries for a {ty.dims}D array", d.loc)
            if any(x < 0 for pair in table for x in pair):
                self.err("NEGATIVE_VIEW", f"{name!r}: view counts must be non-negative", d.loc)
        if d.dims is not None:
            bad = [x for x in d.dims if not 1 <= x <= ty.dims]
            if bad:
                self.err("DIM_OUT_OF_RANGE",
                         f"{name!r}: dim {bad[0]} outside 1..{ty.dims}", d.loc)
            if len(set(d.dims)) != len(d.dims):
                self.err("DIM_OUT_OF_RANGE", f"{name!r}: repeated dim", d.loc)
            if len(d.dims) > 2:
                self.err("DIM_OUT_OF_RANGE", f"{name!r}: at most two dims can be partitioned", d.loc)
        if d.strategy is not None:
            if d.strategy not in self.reg.strategies:
                self.err("UNKNOWN_STRATEGY", f"no partitioning strategy registered under {d.strategy!r}", d.loc)
            for a in d.args:
                self.expr(a)
                bad = self.master_computable(a, allow_arrays=True)
                if bad:
                    self.err("LOOP_BOUND_LOCAL",
                             f"strategy argument depends on {bad!r}, which the master cannot evaluate", a.loc)

    def finish(self):
        m, info = self.m, self.info
        info.has_fences = bool(self.fence_sites)
        if info.has_fences:
            for s in self.returns_below_top:
                self.err("RETURN_DIVERGENCE",
                         "a method with sync blocks or nested reductions may only return at its top level",
                         s.loc)
        if not info.somd:
            for s in info.syncs:
                self.warn("SYNC_OUTSIDE_SOMD", "sync in a method without distributed data has no effect", s.loc)
        # shared scalars must be reduced if written
        for name, decl in info.shared.items():
            if name in self.shared_writes and name not in info.sync_reduce:
                self.err("SHARED_WITHOUT_REDUCE",
                         f"shared variable {name!r} is written but never combined by a sync reduce", decl.loc)
        self.compute_extents()

    def compute_extents(self):
        info, m = self.info, self.m
        ret_name = info.returned
        seg = None
        if m.ret.is_array and m.effective_reduce() is not None and m.effective_reduce().kind == "assembly":
            if ret_name in info.dist:
                dv = info.dist[ret_name]
                seg = (ret_name, dv.pdims[0], ret_name, dv.pdims[0])
            elif ret_name is not None:
                # private array: cut it along the ranges of the loops that write it
                cands = []
                for f in info.parallel_loops:
                    for st in A.walk_stmts(f.body):
                        if isinstance(st, (A.Assign, A.IncDec)) and A.root_name(st.target) == ret_name:
                            _, idxs = A.index_chain(st.target)
                            for d, ix in enumerate(idxs):
                                if iv_offset(ix, f.info.iv) is not None and (f.info.driver, d) not in cands:
                                    cands.append((f.info.driver, d))
                if len(cands) >= 1:
                    (v, vd), d = cands[0]
                    if all(c == cands[0] for c in cands):
                        seg = (v, vd, ret_name, d)
            info.segment = seg
        full = set()
        if seg is not None:
            full.add((seg[0], seg[1]))
        for name, dv in info.dist.items():
            for d in dv.pdims:
                ubs = [f.info.ub for f in info.parallel_loops if f.info.driver == (name, d)]
                length = _length_expr(name, d)
                if (name, d) in full or not ubs or name == ret_name or self.indexed_elsewhere(name, d):
                    info.extents[(name, d)] = length
                    info.full_extent[(name, d)] = True
                elif all(u == ubs[0] for u in ubs) and not self.master_computable(ubs[0]) \
                        and not _contains_length_of_other(ubs[0], name):
                    info.extents[(name, d)] = ubs[0]
                    info.full_extent[(name, d)] = ubs[0] == length
                else:
                    info.extents[(name, d)] = length
                    info.full_extent[(name, d)] = True

    def indexed_elsewhere(self, name: str, d: int) -> bool:
        """Whether a parallel loop driven by another value indexes ``name`` at ``d`` with its iv.

        Such a loop walks the other value's ranges, so ``name`` must be cut over its
        full length for the two partitions to line up.
        """
        for f in self.info.parallel_loops:
            if f.info.driver == (name, d):
                continue
            for e in A.all_exprs(f.body):
                if isinstance(e, A.Index) and A.root_name(e) == name:
                    _, idxs = A.index_chain(e)
                    if d < len(idxs) and iv_offset(idxs[d], f.info.iv) is not None:
                        return True
        return False

    # -- master-computable expressions ----------------------------------------------

    def master_computable(self, e: A.Expr, allow_arrays: bool = False) -> Optional[str]:
        """Name of the first thing ``e`` depends on that the master cannot evaluate."""
        if isinstance(e, (A.IntLit, A.DoubleLit, A.BoolLit, A.MathConst)):
            return None
        if isinstance(e, A.Name):
            sym = self.lookup(e.id)
            if sym is None:
                return None  # reported elsewhere
            if sym.kind == "const":
                return None
            if sym.kind == "param" and (not sym.type.is_array or allow_arrays):
                return None
            if sym.kind == "param":
                return e.id
            if allow_arrays and e.id in self.info.dist:
                return None
            return e.id
        if isinstance(e, A.Length):
            base = e.base
            while isinstance(base, A.Index):
                bad = self.master_computable(base.index)
                if bad:
                    return bad
                base = base.base
            if isinstance(base, A.Name):
                sym = self.lookup(base.id)
                if sym is not None and (sym.kind == "param" or base.id in self.info.dist):
                    return None
                return base.id
            return show(e)
        if isinstance(e, (A.Binary, A.Unary, A.Cast, A.Ternary)):
            for c in A.child_exprs(e):
                bad = self.master_computable(c, allow_arrays)
                if bad:
                    return bad
            return None
        if isinstance(e, A.MathCall) and e.fn in ("max", "min", "abs"):
            for c in e.args:
                bad = self.master_computable(c, allow_arrays)
                if bad:
                    return bad
            return None
        return show(e)

    # -- statements --------------------------------------------------------------------

    def block(self, b: A.Block, new_scope: bool = True):
        if new_scope:
            self.scopes.append({})
        for s in b.stmts:
            self.stmt(s)
        if new_scope:
            self.scopes.pop()

    def nested(self, s: A.Stmt):
        self.ret_depth += 1
        if isinstance(s, A.Block):
            self.block(s)
        else:
            self.scopes.append({})
            self.stmt(s)
            self.scopes.pop()
        self.ret_depth -= 1

    def stmt(self, s: A.Stmt):
        info = self.info
        if isinstance(s, A.VarDecl):
            self.var_decl(s)
        elif isinstance(s, A.Assign):
            tt = self.lvalue(s.target)
            vt = self.expr(s.value)
            self.check_assign(tt, vt, s.op, s.value.loc or s.loc)
            self.note_write(s.target, s.loc)
            if s.op == "=" and isinstance(s.target, A.Name) and tt.is_array:
                self.note_alias(s.target.id, s.value)
        elif isinstance(s, A.IncDec):
            tt = self.lvalue(s.target)
            if tt is not ERR and not tt.is_numeric:
                self.err("TYPE_ERROR", f"{s.op} needs a numeric operand, not {tt}", s.loc)
            self.note_write(s.target, s.loc)
        elif isinstance(s, A.ExprStmt):
            self.expr(s.expr)
        elif isinstance(s, A.Block):
            self.ret_depth += 1
            self.block(s)
            self.ret_depth -= 1
        elif isinstance(s, A.If):
            self.cond_expr(s.cond)
            self.cond_depth += 1
            self.nested(s.then)
            if s.other is not None:
                self.nested(s.other)
            self.cond_depth -= 1
        elif isinstance(s, A.While):
            self.cond_depth += 1
            self.cond_expr(s.cond)
            self.nested(s.body)
            self.cond_depth -= 1
        elif isinstance(s, A.For):
            self.for_loop(s)
        elif isinstance(s, A.Sync):
            self.sync(s)
        elif isinstance(s, A.Return):
            if self.ret_depth > 0:
                self.returns_below_top.append(s)
            if s.value is None:
                if self.m.ret != A.VOID:
                    self.err("TYPE_ERROR", f"method {self.m.name!r} must return a {self.m.ret}", s.loc)
            else:
                vt = self.expr(s.value)
                if self.m.ret == A.VOID:
                    self.err("TYPE_ERROR", "a void method cannot return a value", s.loc)
                else:
                    self.check_assign(self.m.ret, vt, "=", s.value.loc or s.loc)
                if isinstance(s.value, A.Name):
                    if info.returned not in (None, s.value.id):
                        info.returned = "?"
                    else:
                        info.returned = s.value.id
                else:
                    info.returned = "?"
        else:
            raise TypeError(type(s).__name__)

    def cond_expr(self, e: A.Expr):
        t = self.expr(e)
        if t is not ERR and t != A.BOOLEAN:
            self.err("TYPE_ERROR", f"condition must be boolean, not {t}", e.loc)

    def var_decl(self, s: A.VarDecl):
        info = self.info
        if s.type.base == "void":
            self.err("TYPE_ERROR", f"variable {s.name!r} cannot be void", s.loc)
        if s.init is not None:
            vt = self.expr(s.init)
            self.check_assign(s.type, vt, "=", s.init.loc or s.loc)
        if s.shared:
            if s.type.is_array:
                self.err("TYPE_ERROR", f"shared variable {s.name!r} must be a scalar", s.loc)
            if s.dist is not None:
                self.err("TYPE_ERROR", f"{s.name!r} cannot be both shared and dist", s.loc)
            if self.ret_depth > 0:
                self.err("SHARED_DECL_PLACEMENT",
                         f"shared variable {s.name!r} must be declared at the top level of the method", s.loc)
            if s.init is not None:
                bad = self.master_computable(s.init)
                if bad:
                    self.err("SHARED_DECL_PLACEMENT",
                             f"initial value of shared {s.name!r} depends on {bad!r}; "
                             "the master must be able to evaluate it", s.init.loc)
            info.shared[s.name] = s
        if s.dist is not None:
            if not s.type.is_array:
                self.err("DIST_ON_NON_ARRAY", f"dist variable {s.name!r} is not an array", s.loc)
            else:
                self.check_dist_spec(s.dist, s.type, s.name)
                ok = isinstance(s.init, A.NewArray) and self.ret_depth == 0
                if ok:
                    for d in s.init.dims:
                        bad = self.master_computable(d)
                        if bad:
                            ok = False
                if not ok:
                    self.err("DIST_LOCAL_INIT",
                             f"dist local {s.name!r} must be allocated with 'new' at the method's top "
                             "level with a size the master can compute", s.loc)
                info.dist[s.name] = DistValue(s.name, s.type, s.dist, False, s)
        info.locals[s.name] = s.type
        self.declare(s.name, _Sym("local", s.type, s, shared=s.shared), s.loc)
        if s.type.is_array and s.init is not None:
            self.note_alias(s.name, s.init)

    def note_alias(self, name: str, value: A.Expr):
        root = A.root_name(value)
        if root is None:
            return
        sym = self.lookup(root)
        target = self.aliases.get(root)
        if target is None and sym is not None and sym.kind == "param":
            target = root
        if target is None and root in self.info.dist:
            target = root
        if target is not None:
            self.aliases[name] = target

    def note_write(self, target: A.Expr, loc):
        root = A.root_name(target)
        if root is None:
            return
        self.info.written.add(root)
        if isinstance(target, A.Name) and root in self.info.shared:
            self.shared_writes.add(root)
        origin = self.aliases.get(root, root)
        sym = self.lookup(origin)
        if origin in self.info.dist:
            self.info.dist[origin].written = True
            return
        if sym is not None and sym.kind == "param":
            via = f" (through alias {root!r})" if origin != root else ""
            self.err("INPUT_ONLY_VIOLATION",
                     f"parameter {origin!r} is not distributed and may only be read{via}", loc)
        elif sym is not None and sym.kind == "const":
            self.err("TYPE_ERROR", f"cannot assign to constant {root!r}", loc)

    def sync(self, s: A.Sync):
        info = self.info
        info.syncs.append(s)
        if self.cond_depth or self.par_depth or self.nonuniform_depth:
            self.err("SYNC_DIVERGENCE",
                     "sync must be reached by every method instance the same number of times; "
                     "it cannot sit under a condition, a parallel loop or a data-dependent loop", s.loc)
        if s.reduce is not None:
            if s.target is None:
                self.err("SYNC_REDUCE_TARGET", "sync reduce needs a target variable: sync reduce(op) (v)", s.loc)
            if s.reduce.kind == "self":
                self.err("SYNC_REDUCE_TARGET", "reduce(self) cannot be applied to a sync block", s.loc)
            elif s.reduce.kind == "user" and s.reduce.name not in self.reg.reducers:
                self.err("UNKNOWN_STRATEGY", f"no reducer registered under {s.reduce.name!r}", s.loc)
        if s.target is not None:
            sym = self.lookup(s.target)
            if sym is None:
                self.err("UNKNOWN_VARIABLE", f"unknown variable {s.target!r}", s.loc)
            elif s.reduce is not None:
                if s.target not in info.shared:
                    self.err("SYNC_REDUCE_TARGET",
                             f"sync reduce target {s.target!r} must be a shared scalar", s.loc)
                else:
                    ty = info.shared[s.target].type
                    if s.reduce.kind == "prim" and not ty.is_numeric:
                        self.err("REDUCE_TYPE_MISMATCH", f"reduce({s.reduce.op}) on non-numeric {s.target!r}", s.loc)
                    prev = info.sync_reduce.get(s.target)
                    if prev is not None and prev.label() != s.reduce.label():
                        self.err("SYNC_REDUCE_TARGET",
                                 f"{s.target!r} is combined with two different reductions", s.loc)
                    info.sync_reduce[s.target] = s.reduce
                    init = info.shared[s.target].init
                    ident = {"+": 0, "-": 0, "*": 1}.get(s.reduce.op) if s.reduce.kind == "prim" else None
                    if ident is not None and not (
                        isinstance(init, (A.IntLit, A.DoubleLit)) and init.value == ident
                    ) and s.target not in self._warned_init:
                        self._warned_init.add(s.target)
                        self.warn("SHARED_NONIDENTITY_INIT",
                                  f"shared {s.target!r} starts from a value other than {ident}; every "
                                  "method instance's copy is combined as-is", info.shared[s.target].loc)
        self.fence_sites.append(s)
        self.sync_depth += 1
        self.ret_depth += 1
        self.block(s.body)
        self.ret_depth -= 1
        self.sync_depth -= 1

    def for_loop(self, f: A.For):
        info = self.info
        f.info = A.LoopInfo(self.rank, None)
        self.rank += 1
        info.loops.append(f)
        self.scopes.append({})
        if f.init is not None:
            self.stmt(f.init)
        if f.cond is not None:
            self.cond_expr(f.cond)
        canon = canonical_loop(f)
        driver = None
        if canon is not None:
            iv, lb, ub, step, declared = canon
            f.info = A.LoopInfo(f.info.rank, iv, lb, ub, step)
            if ub.ty is None:
                self.expr(ub)
            driver = self.find_driver(f.body, iv) if info.dist else None
        else:
            for v in loop_vars(f):
                if info.dist and self.find_driver(f.body, v) is not None:
                    self.err("LOOP_FORM",
                             f"loop over distributed data must have the form "
                             f"for (int {v} = lb; {v} < ub; {v}++) (or a positive constant stride)", f.loc)
                    break
        uniform = True
        if driver is not None:
            f.info.driver = driver
            for what, e in (("lower", f.info.lb), ("upper", f.info.ub)):
                bad = self.master_computable(e)
                if bad:
                    self.err("LOOP_BOUND_LOCAL",
                             f"{what} bound of a parallel loop depends on {bad!r}; bounds may only use "
                             "parameters, constants, array lengths and literals", e.loc or f.loc)
            if f.info.iv in assigned_names(f.body):
                self.err("LOOP_IV_ASSIGNED", f"induction variable {f.info.iv!r} of a parallel loop is "
                                             "assigned in the loop body", f.loc)
            if self.par_depth and any(
                p.info.driver == driver for p in self.enclosing_parallel
            ):
                self.err("LOOP_FORM", f"nested loops both distribute {driver[0]!r} along the same dimension", f.loc)
        elif info.dist:
            if canon is None:
                uniform = False
            else:
                uniform = not (self.master_computable(f.info.lb) or self.master_computable(f.info.ub))
        if f.update is not None:
            self.stmt(f.update)
        if driver is not None:
            self.par_depth += 1
            self.enclosing_parallel.append(f)
        if not uniform:
            self.nonuniform_depth += 1
        self.nested(f.body)
        if not uniform:
            self.nonuniform_depth -= 1
        if driver is not None:
            self.par_depth -= 1
            self.enclosing_parallel.pop()
        self.scopes.pop()

    def find_driver(self, body: A.Stmt, iv: str) -> Optional[tuple]:
        dist = self.info.dist
        for e in A.all_exprs(body):
            if isinstance(e, A.Index):
                name, idxs = A.index_chain(e)
                if name in dist and self.lookup(name) is not None \
                        and self.lookup(name).decl is dist[name].decl:
                    pd = dist[name].pdims
                    for d, ix in enumerate(idxs):
                        if d in pd and iv_offset(ix, iv) is not None:
                            return (name, d)
        for st in A.walk_stmts(body):
            if isinstance(st, (A.Assign, A.IncDec)):
                name, idxs = A.index_chain(st.target)
                if name in dist:
                    pd = dist[name].pdims
                    for d, ix in enumerate(idxs):
                        if d in pd and iv_offset(ix, iv) is not None:
                            return (name, d)
        return None

    # -- expressions -------------------------------------------------------------------

    def lvalue(self, e: A.Expr) -> A.Type:
        t = self.expr(e)
        if isinstance(e, A.Name):
            sym = self.lookup(e.id)
            if sym is not None and sym.kind == "const":
                pass  # reported by note_write
        return t

    def check_assign(self, target: A.Type, value: A.Type, op: str, loc):
        if target is ERR or value is ERR:
            return
        if op != "=":
            if op in ("&=", "|=", "^=") and target == A.BOOLEAN and value == A.BOOLEAN:
                return
            if op in ("&=", "|=", "^=", "<<=", ">>=", ">>>="):
                if not (target.is_integral and value.is_integral):
                    self.err("TYPE_ERROR", f"{op} needs integral operands", loc)
                return
            if not (target.is_numeric and value.is_numeric):
                self.err("TYPE_ERROR", f"{op} needs numeric operands, not {target} and {value}", loc)
            return
        if target == value:
            return
        if target.is_numeric and value.is_numeric:
            if _RANK[value.base] > _RANK[target.base]:
                self.warn("IMPLICIT_NARROWING",
                          f"{value} value narrowed to {target} (Java would require a cast)", loc)
            return
        self.err("TYPE_ERROR", f"cannot assign {value} to {target}", loc)

    def expr(self, e: A.Expr) -> A.Type:
        t = self._expr(e)
        e.ty = t
        return t

    def _expr(self, e: A.Expr) -> A.Type:
        if isinstance(e, A.IntLit):
            lo, hi = (LONG_MIN, LONG_MAX) if e.long else (INT_MIN, INT_MAX)
            if not lo <= e.value <= hi:
                self.err("TYPE_ERROR", f"integer literal {e.value} out of range", e.loc)
            return A.LONG if e.long else A.INT
        if isinstance(e, A.DoubleLit):
            return A.DOUBLE
        if isinstance(e, A.BoolLit):
            return A.BOOLEAN
        if isinstance(e, A.MathConst):
            return A.DOUBLE
        if isinstance(e, A.Name):
            sym = self.lookup(e.id)
            if sym is None:
                self.err("UNKNOWN_VARIABLE", f"unknown variable {e.id!r}", e.loc)
                return ERR
            return sym.type
        if isinstance(e, A.Index):
            bt = self.expr(e.base)
            it = self.expr(e.index)
            if it is not ERR and not it.is_integral:
                self.err("TYPE_ERROR", f"array index must be integral, not {it}", e.index.loc)
            if bt is ERR:
                return ERR
            if not bt.is_array:
                self.err("TYPE_ERROR", f"cannot index a value of type {bt}", e.loc)
                return ERR
            return bt.elem()
        if isinstance(e, A.Length):
            bt = self.expr(e.base)
            if bt is not ERR and not bt.is_array:
                self.err("TYPE_ERROR", f".length of non-array type {bt}", e.loc)
            return A.INT
        if isinstance(e, A.Unary):
            t = self.expr(e.operand)
            if t is ERR:
                return ERR
            if e.op == "!":
                if t != A.BOOLEAN:
                    self.err("TYPE_ERROR", f"! needs a boolean operand, not {t}", e.loc)
                return A.BOOLEAN
            if e.op == "~":
                if not t.is_integral:
                    self.err("TYPE_ERROR", f"~ needs an integral operand, not {t}", e.loc)
                    return ERR
                return t
            if not t.is_numeric:
                self.err("TYPE_ERROR", f"unary {e.op} needs a numeric operand, not {t}", e.loc)
                return ERR
            return t
        if isinstance(e, A.Binary):
            return self.binary(e)
        if isinstance(e, A.Ternary):
            self.cond_expr_nested(e.cond)
            self.cond_depth += 1
            a = self.expr(e.then)
            b = self.expr(e.other)
            self.cond_depth -= 1
            if a is ERR or b is ERR:
                return ERR
            if a == b:
                return a
            if a.is_numeric and b.is_numeric:
                return promote(a, b)
            self.err("TYPE_ERROR", f"ternary branches have incompatible types {a} and {b}", e.loc)
            return ERR
        if isinstance(e, A.Cast):
            t = self.expr(e.expr)
            if t is ERR:
                return e.to
            if not (t.is_numeric and e.to.is_numeric) and t != e.to:
                self.err("TYPE_ERROR", f"cannot cast {t} to {e.to}", e.loc)
            return e.to
        if isinstance(e, A.NewArray):
            for d in e.dims:
                t = self.expr(d)
                if t is not ERR and not t.is_integral:
                    self.err("TYPE_ERROR", f"array size must be integral, not {t}", d.loc)
            if len(e.dims) > 2:
                self.err("TYPE_ERROR", "arrays have at most two dimensions", e.loc)
            return A.Type(e.elem.base, len(e.dims))
        if isinstance(e, A.MathCall):
            ts = [self.expr(a) for a in e.args]
            from .parser import MATH_FUNCS

            if len(ts) != MATH_FUNCS[e.fn]:
                self.err("TYPE_ERROR", f"Math.{e.fn} takes {MATH_FUNCS[e.fn]} argument(s)", e.loc)
                return ERR
            if any(t is ERR for t in ts):
                return ERR
            for t, a in zip(ts, e.args):
                if not t.is_numeric:
                    self.err("TYPE_ERROR", f"Math.{e.fn} needs numeric arguments, not {t}", a.loc)
                    return ERR
            if e.fn in ("abs",):
                return ts[0]
            if e.fn in ("max", "min"):
                return promote(ts[0], ts[1])
            return A.DOUBLE
        if isinstance(e, A.Call):
            return self.call(e)
        raise TypeError(type(e).__name__)

    def cond_expr_nested(self, e: A.Expr):
        t = self.expr(e)
        if t is not ERR and t != A.BOOLEAN:
            self.err("TYPE_ERROR", f"condition must be boolean, not {t}", e.loc)

    def binary(self, e: A.Binary) -> A.Type:
        op = e.op
        a = self.expr(e.left)
        if op in ("&&", "||"):
            self.cond_depth += 1
            b = self.expr(e.right)
            self.cond_depth -= 1
        else:
            b = self.expr(e.right)
        if a is ERR or b is ERR:
            return ERR
        if op in ("&&", "||"):
            if a != A.BOOLEAN or b != A.BOOLEAN:
                self.err("TYPE_ERROR", f"{op} needs boolean operands", e.loc)
            return A.BOOLEAN
        if op in _ARITH:
            if not (a.is_numeric and b.is_numeric):
                self.err("TYPE_ERROR", f"{op} needs numeric operands, not {a} and {b}", e.loc)
                return ERR
            e.opty = promote(a, b)
            return e.opty
        if op in _BITWISE:
            if a == A.BOOLEAN and b == A.BOOLEAN:
                e.opty = A.BOOLEAN
                return A.BOOLEAN
            if not (a.is_integral and b.is_integral):
                self.err("TYPE_ERROR", f"{op} needs integral operands, not {a} and {b}", e.loc)
                return ERR
            e.opty = promote(a, b)
            return e.opty
        if op in _SHIFTS:
            if not (a.is_integral and b.is_integral):
                self.err("TYPE_ERROR", f"{op} needs integral operands, not {a} and {b}", e.loc)
                return ERR
            e.opty = a
            return a
        if op in _COMPARE:
            if not (a.is_numeric and b.is_numeric):
                self.err("TYPE_ERROR", f"{op} needs numeric operands, not {a} and {b}", e.loc)
                return ERR
            e.opty = promote(a, b)
            return A.BOOLEAN
        if op in _EQUALITY:
            if a.is_numeric and b.is_numeric:
                e.opty = promote(a, b)
            elif a == b and a == A.BOOLEAN:
                e.opty = a
            else:
                self.err("TYPE_ERROR", f"cannot compare {a} with {b}", e.loc)
            return A.BOOLEAN
        raise TypeError(op)

    def call(self, e: A.Call) -> A.Type:
        info = self.info
        info.calls.add(e.name)
        ts = [self.expr(a) for a in e.args]
        callee = self.prog.method(e.name)
        if callee is None:
            self.err("UNKNOWN_METHOD", f"unknown method {e.name!r}", e.loc)
            return ERR
        if len(ts) != len(callee.params):
            self.err("TYPE_ERROR", f"{e.name} takes {len(callee.params)} argument(s), got {len(ts)}", e.loc)
        else:
            for t, p, a in zip(ts, callee.params, e.args):
                if t is ERR:
                    continue
                if p.type.is_array or t.is_array:
                    if t != p.type:
                        self.err("TYPE_ERROR", f"argument {p.name!r} of {e.name} expects {p.type}, got {t}", a.loc)
                elif not (t == p.type or (t.is_numeric and p.type.is_numeric
                                          and _RANK[t.base] <= _RANK[p.type.base])):
                    self.err("TYPE_ERROR", f"argument {p.name!r} of {e.name} expects {p.type}, got {t}", a.loc)
        if callee.reduce is not None and info.dist:
            # a reduction over the partial results of every method instance
            if self.cond_depth or self.par_depth or self.nonuniform_depth:
                self.err("CONDITIONAL_NESTED_REDUCTION",
                         f"call to {e.name!r}, which reduces across method instances, must be reached "
                         "unconditionally by every method instance", e.loc)
            body_stmts = list(A.walk_stmts(callee.body))
            if any(isinstance(s, A.Sync) for s in body_stmts) or any(
                isinstance(s, A.VarDecl) and (s.shared or s.dist) for s in body_stmts
            ):
                self.err("NESTED_REDUCTION_IN_HELPER",
                         f"{e.name!r} is reduced across method instances, so it may not contain sync, "
                         "shared or dist locals", e.loc)
            if not any(A.root_name(a) in info.dist for a in e.args if A.root_name(a)):
                self.warn("REDUCE_WITHOUT_DIST_ARG",
                          f"{e.name!r} receives no distributed data; every method instance computes the "
                          "same value and the copies are combined", e.loc)
            info.ireduce_calls.append(e)
            self.fence_sites.append(e)
        if callee.ret == A.VOID:
            return A.VOID
        return callee.ret


def _length_expr(name: str, dim: int) -> A.Expr:
    base: A.Expr = A.Name(name, ty=None)
    for _ in range(dim):
        base = A.Index(base, A.IntLit(0))
    return A.Length(base)


def _contains_length_of_other(e: A.Expr, name: str) -> bool:
    for x in A.walk_expr(e):
        if isinstance(x, A.Length) and A.root_name(x.base) not in (name, None):
            return True
    return False


def _check_constants(prog: A.Program, diags: list) -> dict:
    consts: dict = {}
    for c in prog.constants:
        if c.name in consts:
            diags.append(Diagnostic("DUPLICATE_VARIABLE", f"constant {c.name!r} is already defined", c.loc))
        if c.type.is_array or c.type.base == "void":
            diags.append(Diagnostic("TYPE_ERROR", f"constant {c.name!r} must be a scalar", c.loc))
        chk = _MethodChecker(prog, A.MethodDecl("<constants>", [], A.VOID, A.Block([])), consts,
                             _Registry(set(), set()), diags)
        t = chk.expr(c.value)
        for x in A.walk_expr(c.value):
            if isinstance(x, (A.Call, A.Index, A.NewArray, A.Length)):
                diags.append(Diagnostic("TYPE_ERROR", f"constant {c.name!r} must be a constant expression", c.loc))
                break
        chk.check_assign(c.type, t, "=", c.loc)
        consts[c.name] = _Sym("const", c.type, c)
    return consts


def check_program(prog: A.Program, registry=None) -> list:
    """Annotate ``prog`` in place and return all diagnostics (errors first by position)."""
    reg = registry if registry is not None else _default_registry()
    if not isinstance(reg, _Registry):
        reg = _Registry(set(reg.strategies), set(reg.reducers))
    diags: list = []
    seen = set()
    for m in prog.methods:
        if m.name in seen:
            diags.append(Diagnostic("DUPLICATE_METHOD", f"method {m.name!r} is already defined", m.loc,
                                    method=m.name))
        seen.add(m.name)
        pnames = set()
        for p in m.params:
            if p.name in pnames:
                diags.append(Diagnostic("DUPLICATE_VARIABLE", f"parameter {p.name!r} repeated", p.loc,
                                        method=m.name))
            pnames.add(p.name)
    consts = _check_constants(prog, diags)
    for m in prog.methods:
        chk = _MethodChecker(prog, m, consts, reg, diags)
        m.info = chk.run()
    diags.sort(key=lambda d: (d.loc.line, d.loc.col))
    return diags


def validate(prog: A.Program, registry=None) -> list:
    """Check ``prog``; raise CompileError on errors, else return the warnings."""
    diags = check_program(prog, registry)
    if any(d.severity == "error" for d in diags):
        raise CompileError(diags)
    return diags

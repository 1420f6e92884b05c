"""Python source emission for SOMD-mini methods.

Every method is compiled to a plain Python function (``_seq_<name>``); host
methods additionally get a variant whose calls to SOMD methods go through the
backend dispatcher (``_host_<name>``).  Slave code produced by the
shared-memory planner is emitted as a generator function whose ``yield``
points are fence arrivals.

Two emission modes exist.  The fast mode relies on Python list indexing and
only guards indices that might be negative.  The checked mode routes every
array access through helpers that bounds-check with source locations and,
for distributed values in slave code, verify the view/ownership rules.
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from typing import Optional

from . import values as V
from .errors import SomdRuntimeError
from .frontend import ast as A
from .frontend.checker import assigned_names, canonical_loop

_W32 = "((({0}) + 2147483648 & 4294967295) - 2147483648)"
_W64 = "((({0}) + 9223372036854775808 & 18446744073709551615) - 9223372036854775808)"


def py_float(v: float) -> str:
    if v != v:
        return "_NAN"
    if v in (math.inf, -math.inf):
        return "_INF" if v > 0 else "(-_INF)"
    return repr(float(v))


def wrap_src(src: str, base: str) -> str:
    if base == "int":
        return _W32.format(src)
    if base == "long":
        return _W64.format(src)
    return src


def vname(name: str) -> str:
    return "v_" + name


def _oob(i, n):
    raise IndexError(f"index {i} out of bounds for length {n}")


def _nn(i: int) -> int:
    if i < 0:
        raise IndexError(f"index {i} out of bounds")
    return i


def _rd(a, i):
    if not 0 <= i < len(a):
        _oob(i, len(a))
    return a[i]


def _wr(a, i, v):
    if not 0 <= i < len(a):
        _oob(i, len(a))
    a[i] = v


def _align(lb: int, lo: int, step: int) -> int:
    """First ``lb + k*step`` (k >= 0) that is >= ``lo``."""
    if lo <= lb:
        return lb
    return lb + -(-(lo - lb) // step) * step


def _owned(a, ranges):
    """Copy of the block of ``a`` owned by one method instance."""
    if len(ranges) == 1 or ranges[1] is None:
        lo, hi = ranges[0] if ranges[0] is not None else (0, len(a))
        if len(ranges) > 1:
            return [list(r) for r in a[lo:hi]]
        return a[lo:hi]
    r0, r1 = ranges
    lo0, hi0 = r0 if r0 is not None else (0, len(a))
    lo1, hi1 = r1
    return [row[lo1:hi1] for row in a[lo0:hi0]]


HELPERS = {
    "_INF": math.inf,
    "_NAN": math.nan,
    "_idiv": V.idiv,
    "_irem": V.irem,
    "_fdiv": V.fdiv,
    "_frem": V.frem,
    "_d2i": V.d2i,
    "_d2l": V.d2l,
    "_w32": V.wrap32,
    "_w64": V.wrap64,
    "_shl": V.shl,
    "_shr": V.shr,
    "_ushr": V.ushr,
    "_newarr": V.new_array,
    "_copy": V.copy_array,
    "_dmax": V.m_max,
    "_dmin": V.m_min,
    "_nn": _nn,
    "_rd": _rd,
    "_wr": _wr,
    "_align": _align,
    "_owned": _owned,
    "_SomdRuntimeError": SomdRuntimeError,
}
for _fn, _impl in V.DOUBLE_MATH.items():
    HELPERS["_m_" + _fn] = _impl


class _Src(A.Expr):
    """Pre-rendered Python source posing as an expression node."""

    def __init__(self, src: str, ty: A.Type):
        self.src = src
        self.ty = ty


@dataclass
class FnSource:
    name: str
    lines: list = field(default_factory=list)
    locs: list = field(default_factory=list)  # SOMD location of each emitted line


class Emitter:
    """Translate AST statements and expressions into Python source."""

    def __init__(self, prog: A.Program, mode: str = "seq", checked: bool = False,
                 dist: Optional[dict] = None, consts: Optional[dict] = None, edge: Optional[str] = None):
        self.prog = prog
        self.mode = mode  # seq | host | mi
        self.checked = checked
        self.dist = dist or {}  # slave code: name -> DistValue whose accesses are checked
        self.consts = consts or {}
        self.edge = edge
        self.nonneg: dict = {}  # name -> known lower bound >= 0
        self.fn: Optional[FnSource] = None
        self.cur_loc = A.NOLOC
        self.tmp = 0
        self.ireduce_specs: list = []  # (ReduceSpec, base) per IReduce site, slave mode

    # -- plumbing ------------------------------------------------------------------

    def line(self, depth: int, text: str):
        self.fn.lines.append("    " * depth + text)
        self.fn.locs.append(self.cur_loc)

    def fresh(self, stem: str = "t") -> str:
        self.tmp += 1
        return f"_{stem}{self.tmp}"

    # -- expressions ------------------------------------------------------------------

    def conv(self, src: str, frm: Optional[A.Type], to: Optional[A.Type]) -> str:
        if frm is None or to is None or frm == to or to.is_array or frm.is_array:
            return src
        if to.base == "double":
            if frm.base == "double":
                return src
            lit = src[1:-1] if src.startswith("(") and src.endswith(")") else src
            if lit.lstrip("-").isdigit():
                return repr(float(int(lit)))
            return f"float({src})"
        if to.base == "int":
            if frm.base == "double":
                return f"_d2i({src})"
            if frm.base == "long":
                return wrap_src(src, "int")
            return src
        if to.base == "long":
            if frm.base == "double":
                return f"_d2l({src})"
            return src
        return src

    def is_nonneg(self, e: A.Expr) -> bool:
        if isinstance(e, A.IntLit):
            return e.value >= 0
        if isinstance(e, A.Name):
            return e.id in self.nonneg
        if isinstance(e, A.Length):
            return True
        if isinstance(e, A.Binary) and e.op in ("+", "-"):
            if isinstance(e.left, A.Name) and e.left.id in self.nonneg and isinstance(e.right, A.IntLit):
                off = e.right.value if e.op == "+" else -e.right.value
                return self.nonneg[e.left.id] + off >= 0
            if e.op == "+":
                return self.is_nonneg(e.left) and self.is_nonneg(e.right)
        if isinstance(e, A.Binary) and e.op in ("*", "/", "%") and e.opty is not None \
                and e.opty.is_integral and e.op != "%":
            return self.is_nonneg(e.left) and self.is_nonneg(e.right)
        return False

    def index_src(self, e: A.Expr) -> str:
        """Index expression; sums of names and literals skip overflow wrapping."""
        src = self.expr(e, nowrap=_simple_sum(e))
        if self.checked or self.is_nonneg(e):
            return src
        return f"_nn({src})"

    def expr(self, e: A.Expr, nowrap: bool = False) -> str:
        if isinstance(e, _Src):
            return e.src
        if isinstance(e, A.IntLit):
            return str(e.value) if e.value >= 0 else f"({e.value})"
        if isinstance(e, A.DoubleLit):
            s = py_float(e.value)
            return s if e.value >= 0 else f"({s})"
        if isinstance(e, A.BoolLit):
            return "True" if e.value else "False"
        if isinstance(e, A.MathConst):
            return repr(V.MATH_CONSTANTS[e.name])
        if isinstance(e, A.Name):
            if e.id in self.consts:
                v = self.consts[e.id]
                if isinstance(v, float):
                    s = py_float(v)
                    return s if v >= 0 else f"({s})"
                if isinstance(v, bool):
                    return "True" if v else "False"
                return str(v) if v >= 0 else f"({v})"
            return vname(e.id)
        if isinstance(e, A.Index):
            return self.index_read(e)
        if isinstance(e, A.Length):
            return f"len({self.expr(e.base)})"
        if isinstance(e, A.Unary):
            x = self.expr(e.operand)
            if e.op == "!":
                return f"(not {x})"
            if e.op == "+":
                return x
            if e.op == "~":
                return f"(~{x})"
            if e.ty == A.DOUBLE:
                return f"(-{x})"
            return wrap_src(f"-{x}", e.ty.base) if not nowrap else f"(-{x})"
        if isinstance(e, A.Binary):
            return self.binary(e, nowrap)
        if isinstance(e, A.Ternary):
            c = self.expr(e.cond)
            t = self.conv(self.expr(e.then), e.then.ty, e.ty)
            o = self.conv(self.expr(e.other), e.other.ty, e.ty)
            return f"({t} if {c} else {o})"
        if isinstance(e, A.Cast):
            return self.conv(self.expr(e.expr), e.expr.ty, e.to)
        if isinstance(e, A.NewArray):
            dims = ", ".join(self.expr(d) for d in e.dims)
            return f"_newarr({e.elem.base!r}, [{dims}])"
        if isinstance(e, A.MathCall):
            return self.math(e, nowrap)
        if isinstance(e, A.Call):
            return self.call(e)
        if isinstance(e, A.RangeRef):
            return f"{e.slot}[{e.which}]"
        if isinstance(e, A.OwnedSlice):
            return f"_owned({vname(e.value)}, _own_{e.value})"
        if isinstance(e, A.IReduce):
            k = len(self.ireduce_specs)
            self.ireduce_specs.append(e)
            return f"(yield from _ireduce(_ctx, _rank, {k}, {self.expr(e.expr)}))"
        raise TypeError(f"cannot emit {type(e).__name__}")

    def binary(self, e: A.Binary, nowrap: bool) -> str:
        op = e.op
        if op in ("&&", "||"):
            py = "and" if op == "&&" else "or"
            return f"({self.expr(e.left)} {py} {self.expr(e.right)})"
        base = e.opty.base
        l = self.expr(e.left, nowrap and op in ("+", "-"))
        r = self.expr(e.right, nowrap and op in ("+", "-"))
        if op in ("<", ">", "<=", ">=", "==", "!="):
            return f"({l} {op} {r})"
        if base == "boolean":
            return f"({l} {op} {r})"
        if base == "double":
            l = self.conv(l, e.left.ty, A.DOUBLE)
            r = self.conv(r, e.right.ty, A.DOUBLE)
            if op in ("+", "-", "*"):
                return f"({l} {op} {r})"
            if op == "/":
                if isinstance(e.right, (A.DoubleLit, A.IntLit)) and e.right.value != 0:
                    return f"({l} / {r})"
                return f"_fdiv({l}, {r})"
            return f"_frem({l}, {r})"
        long = base == "long"
        if op in ("+", "-"):
            s = f"{l} {op} {r}"
            return f"({s})" if nowrap else wrap_src(s, base)
        if op == "*":
            return wrap_src(f"{l} * {r}", base)
        if op == "/":
            return f"_idiv({l}, {r}{', True' if long else ''})"
        if op == "%":
            return f"_irem({l}, {r})"
        if op in ("&", "|", "^"):
            return f"({l} {op} {r})"
        mask = 63 if e.left.ty.base == "long" else 31
        lb = e.left.ty.base
        if isinstance(e.right, A.IntLit):
            n = e.right.value & mask
            if op == ">>":
                return f"({l} >> {n})"
            if op == "<<":
                return wrap_src(f"{l} << {n}", lb)
            if n > 0:
                full = (1 << (mask + 1)) - 1
                return f"(({l} & {full}) >> {n})"
        fn = {"<<": "_shl", ">>": "_shr", ">>>": "_ushr"}[op]
        return f"{fn}({l}, {r}{', True' if lb == 'long' else ''})"

    def math(self, e: A.MathCall, nowrap: bool = False) -> str:
        args = [self.expr(a, nowrap and e.fn in ("max", "min")) for a in e.args]
        if e.fn in ("max", "min"):
            if e.ty.base == "double":
                a = [self.conv(x, y.ty, A.DOUBLE) for x, y in zip(args, e.args)]
                return f"_d{e.fn}({a[0]}, {a[1]})"
            return f"{e.fn}({args[0]}, {args[1]})"
        if e.fn == "abs":
            if e.ty.base == "double":
                return f"abs({self.conv(args[0], e.args[0].ty, A.DOUBLE)})"
            return wrap_src(f"abs({args[0]})", e.ty.base)
        a = [self.conv(x, y.ty, A.DOUBLE) for x, y in zip(args, e.args)]
        return f"_m_{e.fn}({', '.join(a)})"

    def call_args(self, e: A.Call) -> list:
        callee = self.prog.method(e.name)
        out = []
        for a, p in zip(e.args, callee.params):
            if isinstance(a, A.OwnedSlice):
                out.append(self.expr(a))
            else:
                out.append(self.conv(self.expr(a), a.ty, p.type))
        return out

    def call(self, e: A.Call) -> str:
        callee = self.prog.method(e.name)
        args = ", ".join(self.call_args(e))
        if self.mode == "host" and (callee.info.somd or callee.reduce is not None):
            return f"_invoke({e.name!r}, [{args}])"
        prefix = "_host_" if self.mode == "host" else "_seq_"
        return f"{prefix}{e.name}({args})"

    # -- array accesses --------------------------------------------------------------------

    def _dist_chain(self, e: A.Expr):
        """(name, indices) if ``e`` indexes every dimension of a checked dist value."""
        name, idxs = A.index_chain(e)
        if self.mode == "mi" and name in self.dist and len(idxs) == self.dist[name].ndims:
            return name, idxs
        return None

    def index_read(self, e: A.Index) -> str:
        if self.checked:
            dc = self._dist_chain(e)
            if dc is not None:
                name, idxs = dc
                ix = ", ".join(self.index_src(i) for i in idxs)
                return f"_ck.rd{len(idxs)}({name!r}, {vname(name)}, {ix})"
            return f"_rd({self.expr(e.base)}, {self.index_src(e.index)})"
        return f"{self.expr(e.base)}[{self.index_src(e.index)}]"

    def store(self, depth: int, target: A.Expr, value_src: str):
        if isinstance(target, A.Name):
            self.line(depth, f"{vname(target.id)} = {value_src}")
            return
        if self.checked:
            dc = self._dist_chain(target)
            if dc is not None:
                name, idxs = dc
                ix = ", ".join(self.index_src(i) for i in idxs)
                self.line(depth, f"_ck.wr{len(idxs)}({name!r}, {vname(name)}, {ix}, {value_src})")
                return
            self.line(depth, f"_wr({self.expr(target.base)}, {self.index_src(target.index)}, {value_src})")
            return
        self.line(depth, f"{self.expr(target.base)}[{self.index_src(target.index)}] = {value_src}")

    # -- statements ----------------------------------------------------------------------

    def block(self, stmts: list, depth: int):
        n = len(self.fn.lines)
        for s in stmts:
            self.stmt(s, depth)
        if len(self.fn.lines) == n:
            self.line(depth, "pass")

    def body(self, s: A.Stmt, depth: int):
        self.block(s.stmts if isinstance(s, A.Block) else [s], depth)

    def stmt(self, s: A.Stmt, depth: int):
        if s.__dict__.get("loc") and s.loc != A.NOLOC:
            self.cur_loc = s.loc
        if isinstance(s, A.VarDecl):
            if s.init is None:
                init = "None" if s.type.is_array else repr(V.default_value(s.type.base))
            else:
                init = self.conv(self.expr(s.init), s.init.ty, s.type)
            self.nonneg.pop(s.name, None)
            self.line(depth, f"{vname(s.name)} = {init}")
        elif isinstance(s, A.Assign):
            self.assign(s, depth)
        elif isinstance(s, A.IncDec):
            one = A.IntLit(1, ty=A.INT)
            self.assign(A.Assign(s.target, "+=" if s.op == "++" else "-=", one, loc=s.loc), depth)
        elif isinstance(s, A.ExprStmt):
            self.line(depth, self.expr(s.expr))
        elif isinstance(s, A.Block):
            self.block(s.stmts, depth)
        elif isinstance(s, A.If):
            self.line(depth, f"if {self.expr(s.cond)}:")
            self.body(s.then, depth + 1)
            other = s.other
            while other is not None:
                if isinstance(other, A.If):
                    self.line(depth, f"elif {self.expr(other.cond)}:")
                    self.body(other.then, depth + 1)
                    other = other.other
                else:
                    self.line(depth, "else:")
                    self.body(other, depth + 1)
                    other = None
        elif isinstance(s, A.While):
            self.line(depth, f"while {self.expr(s.cond)}:")
            self.body(s.body, depth + 1)
        elif isinstance(s, A.For):
            self.for_loop(s, depth)
        elif isinstance(s, A.Sync):
            # sequential variants: the block runs inline
            self.block(s.body.stmts, depth)
        elif isinstance(s, A.Return):
            if s.value is None:
                self.line(depth, "return None")
            else:
                ret = self.current_ret
                self.line(depth, f"return {self.conv(self.expr(s.value), s.value.ty, ret)}")
        elif isinstance(s, A.Fence):
            self.line(depth, "yield")
        elif isinstance(s, A.ResultStore):
            v = "None" if s.value is None else self.conv(self.expr(s.value), s.value.ty, self.current_ret)
            self.line(depth, f"_ctx.store(_rank, {v})")
            self.line(depth, "return")
        else:
            raise TypeError(f"cannot emit {type(s).__name__}")

    current_ret: A.Type = A.VOID

    def assign(self, s: A.Assign, depth: int):
        tgt, tty = s.target, s.target.ty
        if s.op == "=":
            self.store(depth, tgt, self.conv(self.expr(s.value), s.value.ty, tty))
            if isinstance(tgt, A.Name):
                self.nonneg.pop(tgt.id, None)
            return
        op = s.op[:-1]
        vty = s.value.ty
        if isinstance(tgt, A.Name):
            self.nonneg.pop(tgt.id, None)
        # a[i] op= v: read the cell through the same path as any other read
        cur = self.expr(tgt)
        val = self.expr(s.value)
        if tty == A.BOOLEAN:
            self.store(depth, tgt, f"({cur} {op} {val})")
            return
        if op in ("<<", ">>", ">>>"):
            base = tty.base
        else:
            base = tty.base if _rank(tty) >= _rank(vty) else vty.base
        fake = A.Binary(op, _Src(cur, tty), _Src(val, vty), opty=A.Type(base), ty=A.Type(base))
        combined = self.conv(self.binary(fake, False), A.Type(base), tty)
        if tty == A.DOUBLE and op in ("+", "-", "*") and self.inplace_ok(tgt):
            rhs = self.conv(val, vty, A.DOUBLE)
            if isinstance(tgt, A.Name):
                self.line(depth, f"{vname(tgt.id)} {op}= {rhs}")
            else:
                self.line(depth, f"{self.expr(tgt.base)}[{self.index_src(tgt.index)}] {op}= {rhs}")
            return
        self.store(depth, tgt, combined)

    def inplace_ok(self, tgt: A.Expr) -> bool:
        """True if ``tgt op= v`` may be emitted as a Python augmented assignment."""
        return not self.checked and isinstance(tgt, (A.Name, A.Index)) and self._dist_chain(tgt) is None

    def range_ok(self, f: A.For, canon) -> bool:
        """True if the loop can run as ``for iv in range(lb, ub, step)``."""
        iv, lb, ub, step, declared = canon
        if not declared:
            return False
        written = assigned_names(f.body)
        if iv in written:
            return False
        replaced, elems = set(), set()
        for st in A.walk_stmts(f.body):
            if isinstance(st, (A.Assign, A.IncDec)) and not isinstance(st.target, A.Name):
                root = A.root_name(st.target)
                (replaced if st.target.ty is not None and st.target.ty.is_array else elems).add(root)
            elif isinstance(st, A.Assign) and st.target.ty is not None and st.target.ty.is_array:
                replaced.add(st.target.id)
        for x in A.walk_expr(ub):
            if isinstance(x, A.Call) or isinstance(x, A.IReduce):
                return False
            if isinstance(x, A.Name) and x.id in written:
                return False
            if isinstance(x, A.Length) and A.root_name(x.base) in replaced | written:
                return False
            if isinstance(x, A.Index) and A.root_name(x) in (
                    replaced if x.ty is not None and x.ty.is_array else elems):
                return False
        return True

    def for_loop(self, f: A.For, depth: int):
        canon = canonical_loop(f)
        if canon is not None and self.range_ok(f, canon):
            iv, lb, ub, step, _ = canon
            lo = self.expr(lb, nowrap=True)
            hi = self.expr(ub, nowrap=True)
            st = f", {step}" if step != 1 else ""
            if step != 1 and isinstance(lb, A.MathCall) and lb.fn == "max" and \
                    isinstance(lb.args[1], A.RangeRef):
                # a clamped strided loop keeps the original phase lb + k*step
                base = self.expr(lb.args[0], nowrap=True)
                lo = f"_align({base}, {self.expr(lb.args[1])}, {step})"
            self.line(depth, f"for {vname(iv)} in range({lo}, {hi}{st}):")
            saved = self.nonneg.get(iv)
            low = _lower_bound(lb, self.nonneg)
            if low is not None:
                self.nonneg[iv] = low
            self.body(f.body, depth + 1)
            if saved is None:
                self.nonneg.pop(iv, None)
            else:
                self.nonneg[iv] = saved
            return
        if f.init is not None:
            self.stmt(f.init, depth)
        cond = self.expr(f.cond) if f.cond is not None else "True"
        self.line(depth, f"while {cond}:")
        self.body(f.body, depth + 1)
        if f.update is not None:
            self.stmt(f.update, depth + 1)

    # -- functions ----------------------------------------------------------------------------

    def function(self, pyname: str, m: A.MethodDecl, params: list, body: list,
                 prologue: Optional[list] = None, generator: bool = False) -> FnSource:
        self.fn = FnSource(pyname)
        self.current_ret = m.ret
        self.cur_loc = m.loc
        self.nonneg = {}
        self.line(0, f"def {pyname}({', '.join(params)}):")
        for text in prologue or []:
            self.line(1, text)
        self.block(body, 1)
        if generator:
            self.line(1, "return")
            self.line(1, "yield")
        return self.fn


def _rank(t: A.Type) -> int:
    return {"int": 1, "long": 2, "double": 3}.get(t.base, 0)


def _simple_sum(e: A.Expr) -> bool:
    if isinstance(e, (A.Name, A.IntLit, A.RangeRef)):
        return True
    if isinstance(e, A.Binary) and e.op in ("+", "-"):
        return _simple_sum(e.left) and _simple_sum(e.right)
    return False


def _lower_bound(lb: A.Expr, nonneg: dict) -> Optional[int]:
    if isinstance(lb, A.IntLit) and lb.value >= 0:
        return lb.value
    if isinstance(lb, A.RangeRef):
        return 0
    if isinstance(lb, A.MathCall) and lb.fn == "max":
        vals = [_lower_bound(a, nonneg) for a in lb.args]
        vals = [v for v in vals if v is not None]
        return max(vals) if vals else None
    if isinstance(lb, A.Name) and lb.id in nonneg:
        return nonneg[lb.id]
    if isinstance(lb, A.Length):
        return 0
    return None


# -- modules ---------------------------------------------------------------------------------


class CompiledModule:
    """Namespace holding the generated functions plus the line -> location map."""

    def __init__(self, prog: A.Program, consts: dict, tag: str):
        self.prog = prog
        self.consts = consts
        self.tag = tag
        self.ns: dict = dict(HELPERS)
        self.sources: list = []
        self._locmap: dict = {}
        self._count = 0

    def add(self, fns: list, extra_globals: Optional[dict] = None):
        self._count += 1
        filename = f"<somd:{self.tag}:{self._count}>"
        lines, locs = [], []
        for f in fns:
            lines.extend(f.lines)
            locs.extend(f.locs)
            lines.append("")
            locs.append(A.NOLOC)
        src = "\n".join(lines) + "\n"
        self.sources.append(src)
        self._locmap[filename] = locs
        if extra_globals:
            self.ns.update(extra_globals)
        exec(compile(src, filename, "exec"), self.ns)

    def locate(self, tb) -> Optional[A.Loc]:
        """SOMD location of the innermost generated frame in a traceback."""
        loc = None
        while tb is not None:
            fname = tb.tb_frame.f_code.co_filename
            if fname in self._locmap:
                locs = self._locmap[fname]
                ln = tb.tb_lineno - 1
                if 0 <= ln < len(locs) and locs[ln] != A.NOLOC:
                    loc = locs[ln]
            tb = tb.tb_next
        return loc

    def translate(self, exc: BaseException) -> BaseException:
        """Turn a Python exception raised by generated code into a SomdRuntimeError."""
        if isinstance(exc, SomdRuntimeError) and exc.loc != A.NOLOC:
            return exc
        loc = self.locate(exc.__traceback__) or A.NOLOC
        if isinstance(exc, SomdRuntimeError):
            return SomdRuntimeError(exc.message, loc, exc.code)
        if isinstance(exc, IndexError):
            msg = str(exc)
            if "out of bounds" not in msg:
                msg = "array index out of bounds"
            return SomdRuntimeError(msg, loc)
        if isinstance(exc, ZeroDivisionError):
            return SomdRuntimeError(str(exc) or "division by zero", loc)
        if isinstance(exc, ValueError) and "array size" in str(exc):
            return SomdRuntimeError(str(exc), loc)
        if isinstance(exc, RecursionError):
            return SomdRuntimeError("stack overflow", loc)
        return exc

    def __getitem__(self, name: str):
        return self.ns[name]


def eval_constants(prog: A.Program) -> dict:
    from .interp import Interpreter

    return dict(Interpreter(prog, check=False).consts)


def compile_program(prog: A.Program, checked: bool = False, tag: str = "prog") -> CompiledModule:
    """Compile the sequential and host variants of every method."""
    consts = eval_constants(prog)
    mod = CompiledModule(prog, consts, tag)
    fns = []
    for mode in ("seq", "host"):
        for m in prog.methods:
            em = Emitter(prog, mode=mode, checked=checked, consts=consts)
            params = [vname(p.name) for p in m.params]
            prologue = []
            for p in m.params:
                dv = m.info.dist.get(p.name)
                if dv is not None and dv.written:
                    prologue.append(f"{vname(p.name)} = _copy({vname(p.name)})")
            fns.append(em.function(f"_{mode}_{m.name}", m, params, m.body.stmts, prologue))
    mod.add(fns)
    return mod


def master_lambda(prog: A.Program, consts: dict, e: A.Expr, names: list):
    """Compile a master-computable expression into ``f(*values_of_names)``."""
    em = Emitter(prog, mode="seq", consts=consts)
    em.fn = FnSource("<master>")
    src = em.expr(e, nowrap=True)
    args = ", ".join(vname(n) for n in names)
    ns = dict(HELPERS)
    return eval(compile(f"lambda {args}: {src}", "<somd:master>", "eval"), ns)


sys.setrecursionlimit(max(sys.getrecursionlimit(), 10000))

"""Sequential reference interpreter: the oracle every backend is compared to.

All parallel qualifiers are ignored: ``dist`` and ``shared`` variables are
ordinary variables, ``sync`` blocks run inline and methods carrying a
reduction are plain calls.  The only SOMD rule kept is that distributed
parameters a method writes are copied on entry, so a call never mutates the
caller's arrays.

The AST is compiled once into nested closures; evaluation order is source
order and arithmetic follows Java.
"""
from __future__ import annotations

from typing import Callable

from . import values as V
from .errors import SomdRuntimeError
from .frontend import ast as A
from .frontend.checker import validate


class _Return(Exception):
    def __init__(self, value):
        self.value = value


def binop(op: str, base: str) -> Callable:
    """Python function computing ``a op b`` for operands already promoted to ``base``."""
    if base in ("int", "long"):
        w = V.wrap64 if base == "long" else V.wrap32
        long = base == "long"
        table = {
            "+": lambda a, b: w(a + b),
            "-": lambda a, b: w(a - b),
            "*": lambda a, b: w(a * b),
            "/": lambda a, b: V.idiv(a, b, long),
            "%": V.irem,
            "&": lambda a, b: a & b,
            "|": lambda a, b: a | b,
            "^": lambda a, b: a ^ b,
            "<<": lambda a, b: V.shl(a, b, long),
            ">>": lambda a, b: V.shr(a, b, long),
            ">>>": lambda a, b: V.ushr(a, b, long),
        }
    elif base == "double":
        table = {
            "+": lambda a, b: a + b,
            "-": lambda a, b: a - b,
            "*": lambda a, b: a * b,
            "/": V.fdiv,
            "%": V.frem,
        }
    else:
        table = {
            "&": lambda a, b: a and b,
            "|": lambda a, b: a or b,
            "^": lambda a, b: a != b,
        }
    table.update({
        "<": lambda a, b: a < b,
        ">": lambda a, b: a > b,
        "<=": lambda a, b: a <= b,
        ">=": lambda a, b: a >= b,
        "==": lambda a, b: a == b,
        "!=": lambda a, b: a != b,
    })
    return table[op]


def _converter(src: A.Type, dst: A.Type):
    """Function converting a value of type ``src`` to ``dst``, or None if identical."""
    if src is None or dst is None or src == dst or dst.is_array or src.is_array:
        return None
    if dst.base == "double":
        return float
    if dst.base in ("int", "long"):
        return lambda v, b=dst.base: V.coerce(v, b)
    return None


class Interpreter:
    def __init__(self, prog: A.Program, check: bool = True):
        if check and prog.methods and prog.methods[0].info is None:
            validate(prog)
        self.prog = prog
        self._methods: dict = {}
        self.consts: dict = {}
        for c in prog.constants:
            fn = self._expr(c.value)
            conv = _converter(c.value.ty, c.type)
            v = fn({})
            self.consts[c.name] = conv(v) if conv else v
        self.calls = 0

    # -- public ------------------------------------------------------------------------

    def call(self, name: str, args: list):
        m = self.prog.method(name)
        if m is None:
            raise SomdRuntimeError(f"no method named {name!r}")
        if len(args) != len(m.params):
            raise SomdRuntimeError(f"{name} takes {len(m.params)} argument(s), got {len(args)}")
        return self._method(name)(list(args))

    # -- methods -------------------------------------------------------------------------

    def _method(self, name: str) -> Callable:
        fn = self._methods.get(name)
        if fn is None:
            m = self.prog.method(name)
            # placeholder so recursive calls resolve while compiling
            self._methods[name] = lambda args: fn_real(args)
            fn_real = self._compile_method(m)
            self._methods[name] = fn = fn_real
        return fn

    def _compile_method(self, m: A.MethodDecl) -> Callable:
        names = [p.name for p in m.params]
        copies = [n for n, dv in m.info.dist.items() if dv.is_param and dv.written]
        body = self._block(m.body.stmts)
        ret_conv = m.ret

        def run(args):
            self.calls += 1
            env = dict(zip(names, args))
            for p in m.params:
                if not p.type.is_array:
                    env[p.name] = V.coerce(env[p.name], p.type.base)
            for n in copies:
                env[n] = V.copy_array(env[n])
            try:
                body(env)
            except _Return as r:
                v = r.value
                if not ret_conv.is_array and ret_conv != A.VOID:
                    v = V.coerce(v, ret_conv.base)
                return v
            if m.ret != A.VOID:
                raise SomdRuntimeError(f"method {m.name!r} finished without returning", m.loc)
            return None

        return run

    # -- statements ------------------------------------------------------------------------

    def _block(self, stmts: list) -> Callable:
        fns = [self._stmt(s) for s in stmts]
        if len(fns) == 1:
            return fns[0]

        def run(env):
            for f in fns:
                f(env)

        return run

    def _stmt(self, s: A.Stmt) -> Callable:
        if isinstance(s, A.VarDecl):
            name = s.name
            if s.init is None:
                default = V.default_value(s.type.base) if not s.type.is_array else None

                def decl(env):
                    env[name] = default
                return decl
            val = self._coerced(s.init, s.type)

            def decl_init(env):
                env[name] = val(env)
            return decl_init
        if isinstance(s, A.Assign):
            return self._assign(s)
        if isinstance(s, A.IncDec):
            one = A.IntLit(1, ty=A.INT)
            fake = A.Assign(s.target, "+=" if s.op == "++" else "-=", one, loc=s.loc)
            return self._assign(fake)
        if isinstance(s, A.ExprStmt):
            f = self._expr(s.expr)
            return lambda env: (f(env), None)[1]
        if isinstance(s, A.Block):
            return self._block(s.stmts)
        if isinstance(s, A.Sync):
            return self._block(s.body.stmts)
        if isinstance(s, A.If):
            c = self._expr(s.cond)
            t = self._stmt(s.then)
            o = self._stmt(s.other) if s.other is not None else None
            if o is None:
                def if_(env):
                    if c(env):
                        t(env)
                return if_

            def ifelse(env):
                if c(env):
                    t(env)
                else:
                    o(env)
            return ifelse
        if isinstance(s, A.While):
            c = self._expr(s.cond)
            b = self._stmt(s.body)

            def while_(env):
                while c(env):
                    b(env)
            return while_
        if isinstance(s, A.For):
            init = self._stmt(s.init) if s.init is not None else (lambda env: None)
            c = self._expr(s.cond) if s.cond is not None else (lambda env: True)
            upd = self._stmt(s.update) if s.update is not None else (lambda env: None)
            b = self._stmt(s.body)

            def for_(env):
                init(env)
                while c(env):
                    b(env)
                    upd(env)
            return for_
        if isinstance(s, A.Return):
            if s.value is None:
                def ret_none(env):
                    raise _Return(None)
                return ret_none
            v = self._expr(s.value)

            def ret(env):
                raise _Return(v(env))
            return ret
        raise TypeError(f"cannot execute {type(s).__name__}")

    def _compound(self, s: A.Assign):
        """(binop, promoted base) for ``target op= value``."""
        tty, vty = s.target.ty, s.value.ty
        op = s.op[:-1]
        if tty == A.BOOLEAN:
            base = "boolean"
        elif op in ("<<", ">>", ">>>"):
            base = tty.base
        else:
            base = tty.base if _rank(tty) >= _rank(vty) else vty.base
        return binop(op, base), base

    def _assign(self, s: A.Assign) -> Callable:
        tgt = s.target
        back = tgt.ty.base
        loc = s.loc
        if s.op == "=":
            val = self._coerced(s.value, tgt.ty)
            f = base = None
        else:
            f, base = self._compound(s)
            rhs = self._expr(s.value)
            to_float = base == "double"

            def combine(x, y):
                if to_float:
                    x, y = float(x), float(y)
                try:
                    r = f(x, y)
                except ZeroDivisionError as e:
                    raise SomdRuntimeError(str(e), loc) from None
                return V.coerce(r, back) if back != "boolean" else r

        if isinstance(tgt, A.Name):
            name = tgt.id
            if f is None:
                def set_name(env):
                    env[name] = val(env)
                return set_name

            def update_name(env):
                env[name] = combine(env[name], rhs(env))
            return update_name

        arr = self._expr(tgt.base)
        idx = self._expr(tgt.index)
        iloc = tgt.loc
        if f is None:
            def set_index(env):
                a = arr(env)
                i = idx(env)
                v = val(env)
                if not 0 <= i < len(a):
                    raise SomdRuntimeError(f"index {i} out of bounds for length {len(a)}", iloc)
                a[i] = v
            return set_index

        def update_index(env):
            a = arr(env)
            i = idx(env)
            if not 0 <= i < len(a):
                raise SomdRuntimeError(f"index {i} out of bounds for length {len(a)}", iloc)
            a[i] = combine(a[i], rhs(env))
        return update_index

    # -- expressions -------------------------------------------------------------------------

    def _coerced(self, e: A.Expr, to: A.Type) -> Callable:
        f = self._expr(e)
        conv = _converter(e.ty, to)
        if conv is None:
            return f
        return lambda env: conv(f(env))

    def _expr(self, e: A.Expr) -> Callable:
        if isinstance(e, (A.IntLit, A.DoubleLit, A.BoolLit)):
            v = float(e.value) if isinstance(e, A.DoubleLit) else e.value
            return lambda env: v
        if isinstance(e, A.MathConst):
            v = V.MATH_CONSTANTS[e.name]
            return lambda env: v
        if isinstance(e, A.Name):
            if e.id in self.consts:
                v = self.consts[e.id]
                return lambda env: v
            name = e.id

            def load(env):
                return env[name]
            return load
        if isinstance(e, A.Index):
            arr = self._expr(e.base)
            idx = self._expr(e.index)
            loc = e.loc

            def index(env):
                a = arr(env)
                i = idx(env)
                if not 0 <= i < len(a):
                    raise SomdRuntimeError(f"index {i} out of bounds for length {len(a)}", loc)
                return a[i]
            return index
        if isinstance(e, A.Length):
            arr = self._expr(e.base)
            return lambda env: len(arr(env))
        if isinstance(e, A.Unary):
            f = self._expr(e.operand)
            if e.op == "!":
                return lambda env: not f(env)
            if e.op == "+":
                return f
            if e.op == "~":
                return lambda env: ~f(env)
            if e.ty == A.DOUBLE:
                return lambda env: -f(env)
            w = V.wrap64 if e.ty == A.LONG else V.wrap32
            return lambda env: w(-f(env))
        if isinstance(e, A.Binary):
            return self._binary(e)
        if isinstance(e, A.Ternary):
            c = self._expr(e.cond)
            t = self._coerced(e.then, e.ty)
            o = self._coerced(e.other, e.ty)
            return lambda env: t(env) if c(env) else o(env)
        if isinstance(e, A.Cast):
            f = self._expr(e.expr)
            base = e.to.base
            return lambda env: V.coerce(f(env), base)
        if isinstance(e, A.NewArray):
            dims = [self._expr(d) for d in e.dims]
            base = e.elem.base
            loc = e.loc

            def new(env):
                try:
                    return V.new_array(base, [d(env) for d in dims])
                except ValueError as ex:
                    raise SomdRuntimeError(str(ex), loc) from None
            return new
        if isinstance(e, A.MathCall):
            args = [self._expr(a) for a in e.args]
            if e.fn in ("abs", "max", "min"):
                base = e.ty.base
                conv = [(_converter(a.ty, e.ty) or (lambda v: v)) for a in e.args]
                fn = {"abs": V.m_abs, "max": V.m_max, "min": V.m_min}[e.fn]
                if e.fn == "abs":
                    return lambda env: fn(args[0](env), base)
                return lambda env: fn(conv[0](args[0](env)), conv[1](args[1](env)), base)
            fn = V.DOUBLE_MATH[e.fn]
            if len(args) == 1:
                a0 = args[0]
                return lambda env: fn(float(a0(env)))
            a0, a1 = args
            return lambda env: fn(float(a0(env)), float(a1(env)))
        if isinstance(e, A.Call):
            callee = self.prog.method(e.name)
            convs = [_converter(a.ty, p.type) or (lambda v: v) for a, p in zip(e.args, callee.params)]
            args = [self._expr(a) for a in e.args]
            name = e.name

            def call(env):
                return self._method(name)([c(a(env)) for c, a in zip(convs, args)])
            return call
        raise TypeError(f"cannot evaluate {type(e).__name__}")

    def _binary(self, e: A.Binary) -> Callable:
        op = e.op
        left = self._expr(e.left)
        right = self._expr(e.right)
        if op == "&&":
            return lambda env: left(env) and right(env)
        if op == "||":
            return lambda env: left(env) or right(env)
        base = e.opty.base
        f = binop(op, base)
        if base == "double":
            lf = left if e.left.ty == A.DOUBLE else (lambda env, g=left: float(g(env)))
            rf = right if e.right.ty == A.DOUBLE else (lambda env, g=right: float(g(env)))
        else:
            lf, rf = left, right
        if op in ("/", "%") and base != "double":
            loc = e.loc

            def div(env):
                try:
                    return f(lf(env), rf(env))
                except ZeroDivisionError as ex:
                    raise SomdRuntimeError(str(ex), loc) from None
            return div
        return lambda env: f(lf(env), rf(env))


def _rank(t: A.Type) -> int:
    return {"int": 1, "long": 2, "double": 3}.get(t.base, 0)


def interpret(prog: A.Program, entry: str, args: list):
    """Run ``entry`` sequentially and return its result."""
    return Interpreter(prog).call(entry, args)

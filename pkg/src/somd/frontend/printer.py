"""Pretty printer producing SOMD-mini source that reparses to the same AST."""
from __future__ import annotations

from . import ast as A

_PREC = {
    "||": 1, "&&": 2, "|": 3, "^": 4, "&": 5,
    "==": 6, "!=": 6, "<": 7, ">": 7, "<=": 7, ">=": 7,
    "<<": 8, ">>": 8, ">>>": 8, "+": 9, "-": 9, "*": 10, "/": 10, "%": 10,
}
_UNARY_PREC = 11
_POSTFIX_PREC = 12


def _prec(e: A.Expr) -> int:
    if isinstance(e, A.Binary):
        return _PREC[e.op]
    if isinstance(e, A.Ternary):
        return 0
    if isinstance(e, (A.Unary, A.Cast)):
        return _UNARY_PREC
    if isinstance(e, (A.IntLit, A.DoubleLit)) and e.value < 0:
        return _UNARY_PREC
    return _POSTFIX_PREC


def fmt_double(v: float) -> str:
    s = repr(float(v))
    if "e" in s or "E" in s:
        mant, exp = s.split("e")
        if "." not in mant:
            mant += ".0"
        return f"{mant}e{exp}"
    return s


def expr(e: A.Expr) -> str:
    if isinstance(e, A.IntLit):
        return f"{e.value}{'L' if e.long else ''}"
    if isinstance(e, A.DoubleLit):
        return fmt_double(e.value)
    if isinstance(e, A.BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, A.Name):
        return e.id
    if isinstance(e, A.Index):
        return f"{_wrap(e.base, _POSTFIX_PREC)}[{expr(e.index)}]"
    if isinstance(e, A.Length):
        return f"{_wrap(e.base, _POSTFIX_PREC)}.length"
    if isinstance(e, A.Call):
        return f"{e.name}({', '.join(expr(a) for a in e.args)})"
    if isinstance(e, A.MathCall):
        return f"Math.{e.fn}({', '.join(expr(a) for a in e.args)})"
    if isinstance(e, A.MathConst):
        return f"Math.{e.name}"
    if isinstance(e, A.Unary):
        inner = _wrap(e.operand, _UNARY_PREC)
        # keep "-(5)" distinct from the literal -5 and avoid lexing "- -x" as "--x"
        if e.op in "+-" and (
            isinstance(e.operand, (A.IntLit, A.DoubleLit)) or inner.startswith(("-", "+"))
        ):
            inner = f"({expr(e.operand)})"
        return f"{e.op}{inner}"
    if isinstance(e, A.Binary):
        p = _PREC[e.op]
        left = _wrap(e.left, p)
        right = _wrap(e.right, p + 1)
        return f"{left} {e.op} {right}"
    if isinstance(e, A.Ternary):
        return f"{_wrap(e.cond, 1)} ? {_wrap(e.then, 1)} : {_wrap(e.other, 1)}"
    if isinstance(e, A.Cast):
        return f"({e.to}) {_wrap(e.expr, _UNARY_PREC)}"
    if isinstance(e, A.NewArray):
        return f"new {e.elem.base}" + "".join(f"[{expr(d)}]" for d in e.dims)
    if isinstance(e, A.RangeRef):
        return f"{e.slot or e.value + '_' + str(e.dim + 1)}[{e.which}]"
    if isinstance(e, A.OwnedSlice):
        return f"owned({e.value})"
    if isinstance(e, A.IReduce):
        return f"ireduce[{e.spec.label()}]({expr(e.expr)})"
    raise TypeError(f"cannot print {type(e).__name__}")


def _wrap(e: A.Expr, min_prec: int) -> str:
    s = expr(e)
    return f"({s})" if _prec(e) < min_prec else s


def dist_spec(d: A.DistSpec) -> str:
    args = []
    if d.strategy is not None:
        a = d.strategy
        if d.args:
            a += "(" + ", ".join(expr(x) for x in d.args) + ")"
        args.append(a)
    if d.view is not None:
        args.append("view = " + ", ".join(f"<{a},{b}>" for a, b in d.view))
    if d.polyview is not None:
        args.append("polyview = " + ", ".join(f"<{a},{b}>" for a, b in d.polyview))
    if d.dims is not None:
        args.append("dim = " + ", ".join(str(x) for x in d.dims))
    return "dist" + (f"({', '.join(args)})" if args else "")


def reduce_spec(r: A.ReduceSpec) -> str:
    if r.kind == "user" and r.args:
        return f"reduce({r.name}({', '.join(expr(a) for a in r.args)}))"
    return f"reduce({r.label()})"


class _Printer:
    def __init__(self, indent: str = "  "):
        self.lines: list = []
        self.unit = indent

    def emit(self, depth: int, text: str):
        self.lines.append(self.unit * depth + text)

    def simple(self, s: A.Stmt) -> str:
        """Statements that fit on one line without the trailing semicolon."""
        if isinstance(s, A.VarDecl):
            quals = ("shared " if s.shared else "") + (dist_spec(s.dist) + " " if s.dist else "")
            init = f" = {expr(s.init)}" if s.init is not None else ""
            return f"{quals}{s.type} {s.name}{init}"
        if isinstance(s, A.Assign):
            return f"{expr(s.target)} {s.op} {expr(s.value)}"
        if isinstance(s, A.IncDec):
            t = expr(s.target)
            return f"{s.op}{t}" if s.prefix else f"{t}{s.op}"
        if isinstance(s, A.ExprStmt):
            return expr(s.expr)
        if isinstance(s, A.Return):
            return "return" + (f" {expr(s.value)}" if s.value is not None else "")
        raise TypeError(type(s).__name__)

    def body(self, head: str, s: A.Stmt, depth: int, tail: bool = True):
        """Emit ``head`` followed by a loop/branch body, braced only if it was a block."""
        if isinstance(s, A.Block):
            self.emit(depth, head + " {")
            for st in s.stmts:
                self.stmt(st, depth + 1)
            if tail:
                self.emit(depth, "}")
            return True
        self.emit(depth, head)
        self.stmt(s, depth + 1)
        return False

    def stmt(self, s: A.Stmt, depth: int):
        if isinstance(s, A.Block):
            self.emit(depth, "{")
            for st in s.stmts:
                self.stmt(st, depth + 1)
            self.emit(depth, "}")
        elif isinstance(s, A.For):
            init = self.simple(s.init) if s.init is not None else ""
            cond = expr(s.cond) if s.cond is not None else ""
            upd = self.simple(s.update) if s.update is not None else ""
            self.body(f"for ({init}; {cond}; {upd})", s.body, depth)
        elif isinstance(s, A.While):
            self.body(f"while ({expr(s.cond)})", s.body, depth)
        elif isinstance(s, A.If):
            then = s.then
            if s.other is not None and _dangles(then):
                # an else would bind to the inner if; only braces keep it outside
                then = A.Block([then])
            braced = self.body(f"if ({expr(s.cond)})", then, depth, tail=False)
            if s.other is None:
                if braced:
                    self.emit(depth, "}")
                return
            head = "} else" if braced else "else"
            if isinstance(s.other, A.If):
                self.lines.append(self.unit * depth + head + " ")
                sub = _Printer(self.unit)
                sub.stmt(s.other, depth)
                self.lines[-1] += sub.lines[0].lstrip()
                self.lines.extend(sub.lines[1:])
            else:
                self.body(head, s.other, depth)
        elif isinstance(s, A.Sync):
            head = "sync"
            if s.reduce is not None:
                head += " " + reduce_spec(s.reduce)
            if s.target is not None:
                head += f" ({s.target})"
            self.body(head, s.body, depth)
        elif isinstance(s, A.Fence):
            self.emit(depth, "fence.advanceAndWait();")
        elif hasattr(s, "text_lines"):
            # planner-specific statements render themselves
            for line in s.text_lines():
                self.emit(depth, line)
        elif isinstance(s, A.ResultStore):
            v = expr(s.value) if s.value is not None else "null"
            self.emit(depth, f"results[rank] = {v};")
            self.emit(depth, "completed.advance();")
        else:
            self.emit(depth, self.simple(s) + ";")

    def method(self, m: A.MethodDecl, depth: int):
        if m.reduce is not None:
            self.emit(depth, reduce_spec(m.reduce))
        params = []
        for p in m.params:
            q = dist_spec(p.dist) + " " if p.dist else ""
            params.append(f"{q}{p.type} {p.name}")
        self.emit(depth, f"{m.ret} {m.name}({', '.join(params)}) {{")
        for st in m.body.stmts:
            self.stmt(st, depth + 1)
        self.emit(depth, "}")


def _dangles(s: A.Stmt) -> bool:
    """True if ``s`` ends in an if without else that would capture a following else."""
    while True:
        if isinstance(s, A.If):
            if s.other is None:
                return True
            s = s.other
        elif isinstance(s, (A.For, A.While)):
            s = s.body
        else:
            return False


def format_stmt(s: A.Stmt, depth: int = 0) -> str:
    p = _Printer()
    p.stmt(s, depth)
    return "\n".join(p.lines)


def format_method(m: A.MethodDecl) -> str:
    p = _Printer()
    p.method(m, 0)
    return "\n".join(p.lines)


def format_program(prog: A.Program) -> str:
    p = _Printer()
    depth = 0
    if prog.wrapped:
        p.emit(0, f"class {prog.name} {{")
        depth = 1
    for c in prog.constants:
        p.emit(depth, f"static final {c.type} {c.name} = {expr(c.value)};")
    for i, m in enumerate(prog.methods):
        if i or prog.constants:
            p.lines.append("")
        p.method(m, depth)
    if prog.wrapped:
        p.emit(0, "}")
    return "\n".join(p.lines) + "\n"

"""Recursive-descent parser for SOMD-mini.

The grammar is the Java statement/expression subset needed by numeric
array kernels, extended with the ``dist``, ``reduce``, ``shared`` and ``sync``
qualifiers.  A source file holds methods and ``static final`` constants,
optionally wrapped in a single ``class Name { ... }``.
"""
from __future__ import annotations

from typing import Optional

from ..errors import ParseError
from . import ast as A
from .lexer import TYPE_KEYWORDS, Token, tokenize

_ASSIGN_OPS = ("=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>=", ">>>=")

# binary precedence levels, loosest first
_BINARY_LEVELS = [
    ("||",),
    ("&&",),
    ("|",),
    ("^",),
    ("&",),
    ("==", "!="),
    ("<", ">", "<=", ">="),
    ("<<", ">>", ">>>"),
    ("+", "-"),
    ("*", "/", "%"),
]

MATH_FUNCS = {
    "sqrt": 1, "sin": 1, "cos": 1, "tan": 1, "exp": 1, "log": 1,
    "floor": 1, "ceil": 1, "abs": 1, "pow": 2, "max": 2, "min": 2, "atan2": 2,
}
MATH_CONSTS = ("PI", "E")

_QUALIFIERS = ("dist", "shared", "final", "static")


class Parser:
    def __init__(self, source: str, name: str = "Main"):
        self.toks = tokenize(source)
        self.pos = 0
        self.default_name = name

    # -- token helpers ---------------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.toks[self.pos]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.pos + k, len(self.toks) - 1)]

    def advance(self) -> Token:
        t = self.toks[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def error(self, msg: str, tok: Optional[Token] = None):
        t = tok or self.tok
        found = t.text if t.kind != "eof" else "end of input"
        raise ParseError(f"{msg} (found {found!r})", t.loc)

    def expect_op(self, op: str) -> Token:
        if not self.tok.is_op(op):
            self.error(f"expected {op!r}")
        return self.advance()

    def expect_kw(self, kw: str) -> Token:
        if not self.tok.is_kw(kw):
            self.error(f"expected {kw!r}")
        return self.advance()

    def expect_ident(self) -> Token:
        if self.tok.kind != "ident":
            self.error("expected identifier")
        return self.advance()

    def accept_op(self, op: str) -> bool:
        if self.tok.is_op(op):
            self.advance()
            return True
        return False

    def _unknown_qualifier_check(self):
        """An identifier directly followed by a type or qualifier is a bad qualifier."""
        t, nxt = self.tok, self.peek()
        if t.kind == "ident" and (
            nxt.is_kw(*TYPE_KEYWORDS) or nxt.is_kw(*_QUALIFIERS) or nxt.is_kw("reduce")
        ):
            raise ParseError(f"unknown qualifier {t.text!r}", t.loc, code="UNKNOWN_QUALIFIER")

    # -- program ---------------------------------------------------------------

    def parse_program(self) -> A.Program:
        start = self.tok.loc
        name = self.default_name
        wrapped = False
        if self.tok.is_kw("class"):
            self.advance()
            name = self.expect_ident().text
            self.expect_op("{")
            wrapped = True
        methods, consts = [], []
        while True:
            if wrapped and self.tok.is_op("}"):
                self.advance()
                break
            if self.tok.kind == "eof":
                if wrapped:
                    self.error("expected '}' closing class")
                break
            item = self.parse_member()
            if isinstance(item, A.ConstDecl):
                consts.append(item)
            else:
                methods.append(item)
        if self.tok.kind != "eof":
            self.error("unexpected trailing input")
        return A.Program(name, methods, consts, wrapped, loc=start)

    def parse_member(self):
        self._unknown_qualifier_check()
        start = self.tok.loc
        is_const = False
        while self.tok.is_kw("static", "final"):
            is_const = is_const or self.tok.text == "final"
            self.advance()
        if is_const:
            ty = self.parse_type()
            name = self.expect_ident().text
            self.expect_op("=")
            value = self.parse_expr()
            self.expect_op(";")
            return A.ConstDecl(ty, name, value, loc=start)
        reduce = None
        if self.tok.is_kw("reduce"):
            reduce = self.parse_reduce_clause()
            self._unknown_qualifier_check()
        ty = self.parse_type(allow_void=True)
        name_tok = self.expect_ident()
        self.expect_op("(")
        params = []
        if not self.tok.is_op(")"):
            while True:
                params.append(self.parse_param())
                if not self.accept_op(","):
                    break
        self.expect_op(")")
        body = self.parse_block()
        return A.MethodDecl(name_tok.text, params, ty, body, reduce, loc=start if reduce else name_tok.loc)

    def parse_reduce_clause(self) -> A.ReduceSpec:
        start = self.expect_kw("reduce").loc
        self.expect_op("(")
        t = self.tok
        if t.is_op("+", "-", "*"):
            self.advance()
            spec = A.ReduceSpec("prim", op=t.text, loc=start)
        elif t.kind == "ident" and t.text == "self":
            self.advance()
            spec = A.ReduceSpec("self", loc=start)
        elif t.kind == "ident":
            self.advance()
            args = self.parse_call_args() if self.tok.is_op("(") else []
            spec = A.ReduceSpec("user", name=t.text, args=args, loc=start)
        else:
            self.error("expected reduction operator, 'self' or strategy name")
        self.expect_op(")")
        return spec

    def parse_param(self) -> A.Param:
        self._unknown_qualifier_check()
        start = self.tok.loc
        dist = None
        if self.tok.is_kw("dist"):
            dist = self.parse_dist_clause()
        self._unknown_qualifier_check()
        ty = self.parse_type()
        name = self.expect_ident().text
        return A.Param(name, ty, dist, loc=start)

    def parse_dist_clause(self) -> A.DistSpec:
        start = self.expect_kw("dist").loc
        spec = A.DistSpec(loc=start)
        if not self.tok.is_op("("):
            return spec
        self.advance()
        while True:
            t = self.tok
            if t.kind != "ident":
                self.error("expected dist argument")
            if t.text in ("view", "polyview") and self.peek().is_op("="):
                self.advance()
                self.advance()
                table = self.parse_view_table()
                if t.text == "view":
                    spec.view = table
                else:
                    spec.polyview = table
            elif t.text == "dim" and self.peek().is_op("="):
                self.advance()
                self.advance()
                dims = [self.parse_int_literal()]
                while self.tok.is_op(",") and self.peek().kind == "int":
                    self.advance()
                    dims.append(self.parse_int_literal())
                spec.dims = tuple(dims)
            else:
                self.advance()
                spec.strategy = t.text
                if self.tok.is_op("("):
                    spec.args = self.parse_call_args()
            if not self.accept_op(","):
                break
        self.expect_op(")")
        return spec

    def parse_view_table(self) -> tuple:
        rows = [self.parse_view_pair()]
        while self.tok.is_op(",") and self.peek().is_op("<"):
            self.advance()
            rows.append(self.parse_view_pair())
        return tuple(rows)

    def parse_view_pair(self) -> tuple:
        self.expect_op("<")
        before = self.parse_int_literal()
        self.expect_op(",")
        after = self.parse_int_literal()
        self.expect_op(">")
        return (before, after)

    def parse_int_literal(self) -> int:
        t = self.tok
        if t.kind != "int":
            self.error("expected integer literal")
        self.advance()
        return int(t.value)

    def parse_type(self, allow_void: bool = False) -> A.Type:
        t = self.tok
        if not t.is_kw(*TYPE_KEYWORDS):
            self.error("expected type")
        if t.text == "void" and not allow_void:
            self.error("'void' is not a value type")
        self.advance()
        dims = 0
        while self.tok.is_op("[") and self.peek().is_op("]"):
            self.advance()
            self.advance()
            dims += 1
        return A.Type(t.text, dims)

    # -- statements --------------------------------------------------------------

    def parse_block(self) -> A.Block:
        start = self.expect_op("{").loc
        stmts = []
        while not self.tok.is_op("}"):
            if self.tok.kind == "eof":
                self.error("expected '}'")
            stmts.extend(self.parse_statement_list())
        self.advance()
        return A.Block(stmts, loc=start)

    def parse_statement_list(self) -> list:
        """One source statement; multi-variable declarations expand to several."""
        if self._starts_decl():
            decls = self.parse_var_decls()
            self.expect_op(";")
            return decls
        return [self.parse_statement()]

    def _starts_decl(self) -> bool:
        t = self.tok
        if t.is_kw("shared", "dist", "final"):
            return True
        if t.is_kw(*TYPE_KEYWORDS):
            return True
        self._unknown_qualifier_check()
        return False

    def parse_var_decls(self) -> list:
        start = self.tok.loc
        shared = False
        dist = None
        while self.tok.is_kw("shared", "dist", "final"):
            if self.tok.is_kw("shared"):
                shared = True
                self.advance()
            elif self.tok.is_kw("dist"):
                dist = self.parse_dist_clause()
            else:
                self.advance()
            self._unknown_qualifier_check()
        ty = self.parse_type()
        decls = []
        while True:
            name_tok = self.expect_ident()
            dims = ty.dims
            # C-style trailing brackets: double G[][]
            while self.tok.is_op("[") and self.peek().is_op("]"):
                self.advance()
                self.advance()
                dims += 1
            init = None
            if self.accept_op("="):
                init = self.parse_expr()
            loc = start if not decls else name_tok.loc
            decls.append(A.VarDecl(A.Type(ty.base, dims), name_tok.text, init, shared, dist, loc=loc))
            if not self.accept_op(","):
                break
        return decls

    def parse_statement(self) -> A.Stmt:
        t = self.tok
        if t.is_op("{"):
            return self.parse_block()
        if t.is_op(";"):
            self.advance()
            return A.Block([], loc=t.loc)
        if t.is_kw("for"):
            return self.parse_for()
        if t.is_kw("while"):
            self.advance()
            self.expect_op("(")
            cond = self.parse_expr()
            self.expect_op(")")
            body = self.parse_body()
            return A.While(cond, body, loc=t.loc)
        if t.is_kw("if"):
            self.advance()
            self.expect_op("(")
            cond = self.parse_expr()
            self.expect_op(")")
            then = self.parse_body()
            other = None
            if self.tok.is_kw("else"):
                self.advance()
                other = self.parse_body()
            return A.If(cond, then, other, loc=t.loc)
        if t.is_kw("return"):
            self.advance()
            value = None if self.tok.is_op(";") else self.parse_expr()
            self.expect_op(";")
            return A.Return(value, loc=t.loc)
        if t.is_kw("sync"):
            return self.parse_sync()
        s = self.parse_simple_statement()
        self.expect_op(";")
        return s

    def parse_body(self) -> A.Stmt:
        """Body of a loop/branch: a single statement (declarations get a block)."""
        if self._starts_decl():
            loc = self.tok.loc
            decls = self.parse_var_decls()
            self.expect_op(";")
            return A.Block(decls, loc=loc)
        return self.parse_statement()

    def parse_sync(self) -> A.Sync:
        start = self.expect_kw("sync").loc
        reduce = None
        target = None
        if self.tok.is_kw("reduce"):
            reduce = self.parse_reduce_clause()
        if self.tok.is_op("("):
            self.advance()
            target = self.expect_ident().text
            self.expect_op(")")
        body = self.parse_block()
        return A.Sync(body, reduce, target, loc=start)

    def parse_for(self) -> A.For:
        start = self.expect_kw("for").loc
        self.expect_op("(")
        init = None
        if not self.tok.is_op(";"):
            if self._starts_decl():
                decls = self.parse_var_decls()
                if len(decls) != 1:
                    self.error("for-loop initializer must declare a single variable")
                init = decls[0]
            else:
                init = self.parse_simple_statement()
        self.expect_op(";")
        cond = None if self.tok.is_op(";") else self.parse_expr()
        self.expect_op(";")
        update = None if self.tok.is_op(")") else self.parse_simple_statement()
        self.expect_op(")")
        body = self.parse_body()
        return A.For(init, cond, update, body, loc=start)

    def parse_simple_statement(self) -> A.Stmt:
        t = self.tok
        if t.is_op("++", "--"):
            self.advance()
            target = self.parse_unary()
            self._check_lvalue(target, t)
            return A.IncDec(target, t.text, prefix=True, loc=t.loc)
        expr = self.parse_expr()
        if self.tok.is_op(*_ASSIGN_OPS):
            op = self.advance()
            self._check_lvalue(expr, op)
            value = self.parse_expr()
            return A.Assign(expr, op.text, value, loc=t.loc)
        if self.tok.is_op("++", "--"):
            op = self.advance()
            self._check_lvalue(expr, op)
            return A.IncDec(expr, op.text, prefix=False, loc=t.loc)
        if not isinstance(expr, (A.Call, A.MathCall)):
            self.error("not a statement", t)
        return A.ExprStmt(expr, loc=t.loc)

    def _check_lvalue(self, e: A.Expr, tok: Token):
        if not isinstance(e, (A.Name, A.Index)):
            raise ParseError("left-hand side is not assignable", tok.loc)

    # -- expressions ---------------------------------------------------------------

    def parse_expr(self) -> A.Expr:
        cond = self.parse_binary(0)
        if self.tok.is_op("?"):
            q = self.advance()
            then = self.parse_expr()
            self.expect_op(":")
            other = self.parse_expr()
            return A.Ternary(cond, then, other, loc=q.loc)
        return cond

    def parse_binary(self, level: int) -> A.Expr:
        if level == len(_BINARY_LEVELS):
            return self.parse_unary()
        left = self.parse_binary(level + 1)
        ops = _BINARY_LEVELS[level]
        while self.tok.is_op(*ops):
            op = self.advance()
            right = self.parse_binary(level + 1)
            left = A.Binary(op.text, left, right, loc=op.loc)
        return left

    def parse_unary(self) -> A.Expr:
        t = self.tok
        if t.is_op("-", "+", "!", "~"):
            self.advance()
            operand = self.parse_unary()
            if t.text == "-" and isinstance(operand, A.IntLit) and operand.loc == self._lit_loc:
                return A.IntLit(-operand.value, operand.long, loc=t.loc)
            if t.text == "-" and isinstance(operand, A.DoubleLit) and operand.loc == self._lit_loc:
                return A.DoubleLit(-operand.value, loc=t.loc)
            return A.Unary(t.text, operand, loc=t.loc)
        if t.is_op("(") and self.peek().is_kw(*TYPE_KEYWORDS):
            # cast: (type) unary
            self.advance()
            ty = self.parse_type()
            self.expect_op(")")
            operand = self.parse_unary()
            return A.Cast(ty, operand, loc=t.loc)
        return self.parse_postfix()

    _lit_loc = None

    def parse_postfix(self) -> A.Expr:
        e = self.parse_primary()
        while True:
            t = self.tok
            if t.is_op("["):
                self.advance()
                idx = self.parse_expr()
                self.expect_op("]")
                e = A.Index(e, idx, loc=t.loc)
            elif t.is_op(".") and self.peek().kind == "ident" and self.peek().text == "length":
                self.advance()
                self.advance()
                e = A.Length(e, loc=t.loc)
            else:
                return e

    def parse_call_args(self) -> list:
        self.expect_op("(")
        args = []
        if not self.tok.is_op(")"):
            while True:
                args.append(self.parse_expr())
                if not self.accept_op(","):
                    break
        self.expect_op(")")
        return args

    def parse_primary(self) -> A.Expr:
        t = self.tok
        if t.kind == "int" or t.kind == "long":
            self.advance()
            lit = A.IntLit(int(t.value), t.kind == "long", loc=t.loc)
            self._lit_loc = t.loc
            return lit
        if t.kind == "double":
            self.advance()
            self._lit_loc = t.loc
            return A.DoubleLit(float(t.value), loc=t.loc)
        if t.is_kw("true", "false"):
            self.advance()
            return A.BoolLit(t.text == "true", loc=t.loc)
        if t.is_op("("):
            self.advance()
            e = self.parse_expr()
            self.expect_op(")")
            self._lit_loc = None
            return e
        if t.is_kw("new"):
            self.advance()
            elem = self.tok
            if not elem.is_kw("int", "long", "double", "boolean"):
                self.error("expected element type after 'new'")
            self.advance()
            dims = []
            while self.tok.is_op("["):
                self.advance()
                dims.append(self.parse_expr())
                self.expect_op("]")
            if not dims:
                self.error("expected array dimension")
            return A.NewArray(A.Type(elem.text), dims, loc=t.loc)
        if t.kind == "ident":
            self.advance()
            if t.text == "Math" and self.tok.is_op("."):
                self.advance()
                member = self.expect_ident()
                if self.tok.is_op("("):
                    if member.text not in MATH_FUNCS:
                        raise ParseError(f"unknown function Math.{member.text}", member.loc,
                                         code="UNKNOWN_METHOD")
                    args = self.parse_call_args()
                    return A.MathCall(member.text, args, loc=t.loc)
                if member.text not in MATH_CONSTS:
                    raise ParseError(f"unknown constant Math.{member.text}", member.loc,
                                     code="UNKNOWN_VARIABLE")
                return A.MathConst(member.text, loc=t.loc)
            if self.tok.is_op("("):
                args = self.parse_call_args()
                return A.Call(t.text, args, loc=t.loc)
            return A.Name(t.text, loc=t.loc)
        self.error("expected expression")


def parse(source: str, name: str = "Main") -> A.Program:
    """Parse SOMD-mini source text into a :class:`Program`."""
    return Parser(source, name).parse_program()


def parse_expression(source: str) -> A.Expr:
    p = Parser(source)
    e = p.parse_expr()
    if p.tok.kind != "eof":
        p.error("unexpected trailing input")
    return e

"""AST for SOMD-mini.

Nodes are mutable dataclasses. Source locations and the annotations filled in
by the checker (``ty``, loop metadata, method info) are excluded from
equality so two trees parsed from differently formatted text compare equal.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional, Union


@dataclass(frozen=True)
class Loc:
    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


NOLOC = Loc(0, 0)

SCALARS = ("int", "long", "double", "boolean")


@dataclass(frozen=True)
class Type:
    base: str  # int | long | double | boolean | void
    dims: int = 0

    @property
    def is_array(self) -> bool:
        return self.dims > 0

    @property
    def is_numeric(self) -> bool:
        return self.dims == 0 and self.base in ("int", "long", "double")

    @property
    def is_integral(self) -> bool:
        return self.dims == 0 and self.base in ("int", "long")

    def elem(self) -> "Type":
        return Type(self.base, self.dims - 1)

    def __str__(self) -> str:
        return self.base + "[]" * self.dims


INT = Type("int")
LONG = Type("long")
DOUBLE = Type("double")
BOOLEAN = Type("boolean")
VOID = Type("void")


def _loc() -> Any:
    return field(default=NOLOC, compare=False, repr=False)


def _ann(default: Any = None) -> Any:
    return field(default=default, compare=False, repr=False)


# --------------------------------------------------------------------------
# Expressions


@dataclass
class Expr:
    pass


@dataclass
class IntLit(Expr):
    value: int
    long: bool = False
    loc: Loc = _loc()
    ty: Optional[Type] = _ann()


@dataclass
class DoubleLit(Expr):
    value: float
    loc: Loc = _loc()
    ty: Optional[Type] = _ann()


@dataclass
class BoolLit(Expr):
    value: bool
    loc: Loc = _loc()
    ty: Optional[Type] = _ann()


@dataclass
class Name(Expr):
    id: str
    loc: Loc = _loc()
    ty: Optional[Type] = _ann()


@dataclass
class Index(Expr):
    base: Expr
    index: Expr
    loc: Loc = _loc()
    ty: Optional[Type] = _ann()


@dataclass
class Length(Expr):
    base: Expr
    loc: Loc = _loc()
    ty: Optional[Type] = _ann()


@dataclass
class Call(Expr):
    name: str
    args: list
    loc: Loc = _loc()
    ty: Optional[Type] = _ann()


@dataclass
class MathCall(Expr):
    fn: str
    args: list
    loc: Loc = _loc()
    ty: Optional[Type] = _ann()


@dataclass
class MathConst(Expr):
    name: str  # PI | E
    loc: Loc = _loc()
    ty: Optional[Type] = _ann()


@dataclass
class Unary(Expr):
    op: str  # - + ! ~
    operand: Expr
    loc: Loc = _loc()
    ty: Optional[Type] = _ann()


@dataclass
class Binary(Expr):
    op: str
    left: Expr
    right: Expr
    loc: Loc = _loc()
    ty: Optional[Type] = _ann()
    # operand type after numeric promotion; drives int wrapping / division
    opty: Optional[Type] = _ann()


@dataclass
class Ternary(Expr):
    cond: Expr
    then: Expr
    other: Expr
    loc: Loc = _loc()
    ty: Optional[Type] = _ann()


@dataclass
class Cast(Expr):
    to: Type
    expr: Expr
    loc: Loc = _loc()
    ty: Optional[Type] = _ann()


@dataclass
class NewArray(Expr):
    elem: Type  # scalar element type
    dims: list
    loc: Loc = _loc()
    ty: Optional[Type] = _ann()


# Lowering-only expressions -------------------------------------------------


@dataclass
class RangeRef(Expr):
    """Bound of the index range a method instance owns: ``slot[which]``."""

    value: str
    dim: int
    which: int  # 0 = lo, 1 = hi
    slot: str = ""
    loc: Loc = _loc()
    ty: Optional[Type] = _ann(INT)


@dataclass
class OwnedSlice(Expr):
    """The method instance's owned partition of a distributed array."""

    value: str
    loc: Loc = _loc()
    ty: Optional[Type] = _ann()


@dataclass
class IReduce(Expr):
    """Intermediate reduction of ``expr`` across all method instances."""

    spec: "ReduceSpec"
    expr: Expr
    callee: Optional[str] = None
    loc: Loc = _loc()
    ty: Optional[Type] = _ann()


# --------------------------------------------------------------------------
# Qualifiers


@dataclass
class DistSpec:
    strategy: Optional[str] = None  # None -> built-in block partitioning
    args: list = field(default_factory=list)
    view: Optional[tuple] = None  # ((before, after), ...) per dimension
    polyview: Optional[tuple] = None
    dims: Optional[tuple] = None  # 1-based dimensions to partition
    loc: Loc = _loc()

    @property
    def is_builtin(self) -> bool:
        return self.strategy is None

    def halo(self, dim: int) -> tuple:
        table = self.view if self.view is not None else self.polyview
        if table is None or dim >= len(table):
            return (0, 0)
        return tuple(table[dim])

    def partitioned_dims(self, ndims: int) -> tuple:
        """0-based dimensions this spec partitions."""
        if self.dims is not None:
            return tuple(d - 1 for d in self.dims)
        if self.strategy is not None:
            return (0,)
        return tuple(range(min(ndims, 2)))


@dataclass
class ReduceSpec:
    kind: str  # prim | assembly | self | user
    op: Optional[str] = None
    name: Optional[str] = None
    args: list = field(default_factory=list)
    loc: Loc = _loc()

    def label(self) -> str:
        if self.kind == "prim":
            return self.op or "?"
        if self.kind == "self":
            return "self"
        if self.kind == "assembly":
            return "assembly"
        return self.name or "?"


ASSEMBLY = ReduceSpec("assembly")


# --------------------------------------------------------------------------
# Statements


@dataclass
class Stmt:
    pass


@dataclass
class VarDecl(Stmt):
    type: Type
    name: str
    init: Optional[Expr] = None
    shared: bool = False
    dist: Optional[DistSpec] = None
    loc: Loc = _loc()


@dataclass
class Assign(Stmt):
    target: Expr  # Name | Index
    op: str  # = += -= *= /= %= &= |= ^= <<= >>= >>>=
    value: Expr
    loc: Loc = _loc()


@dataclass
class IncDec(Stmt):
    target: Expr
    op: str  # ++ | --
    prefix: bool = False
    loc: Loc = _loc()


@dataclass
class ExprStmt(Stmt):
    expr: Expr
    loc: Loc = _loc()


@dataclass
class Block(Stmt):
    stmts: list
    loc: Loc = _loc()


@dataclass
class LoopInfo:
    """Checker annotations on a ``for`` loop."""

    rank: int
    iv: Optional[str]
    lb: Optional[Expr] = None
    ub: Optional[Expr] = None  # exclusive
    step: Optional[int] = None
    driver: Optional[tuple] = None  # (dist value, 0-based dim) when parallel


@dataclass
class For(Stmt):
    init: Optional[Stmt]
    cond: Optional[Expr]
    update: Optional[Stmt]
    body: Stmt
    loc: Loc = _loc()
    info: Optional[LoopInfo] = _ann()


@dataclass
class While(Stmt):
    cond: Expr
    body: Stmt
    loc: Loc = _loc()


@dataclass
class If(Stmt):
    cond: Expr
    then: Stmt
    other: Optional[Stmt] = None
    loc: Loc = _loc()


@dataclass
class Sync(Stmt):
    body: Block
    reduce: Optional[ReduceSpec] = None
    target: Optional[str] = None
    loc: Loc = _loc()


@dataclass
class Return(Stmt):
    value: Optional[Expr] = None
    loc: Loc = _loc()


# Lowering-only statements ---------------------------------------------------


@dataclass
class Fence(Stmt):
    """``fence.advanceAndWait()``"""

    loc: Loc = _loc()


@dataclass
class ResultStore(Stmt):
    """``results[rank] = value; completed.advance()``"""

    value: Optional[Expr]
    assemble: Optional[tuple] = None  # (array name, dist value driving ranges)
    loc: Loc = _loc()


# --------------------------------------------------------------------------
# Declarations


@dataclass
class Param:
    name: str
    type: Type
    dist: Optional[DistSpec] = None
    loc: Loc = _loc()


@dataclass
class MethodDecl:
    name: str
    params: list
    ret: Type
    body: Block
    reduce: Optional[ReduceSpec] = None
    loc: Loc = _loc()
    info: Any = _ann()

    def effective_reduce(self) -> Optional[ReduceSpec]:
        if self.reduce is not None:
            return self.reduce
        if self.ret.is_array:
            return ASSEMBLY
        return None

    def param(self, name: str) -> Optional[Param]:
        for p in self.params:
            if p.name == name:
                return p
        return None


@dataclass
class ConstDecl:
    type: Type
    name: str
    value: Expr
    loc: Loc = _loc()


@dataclass
class Program:
    name: str
    methods: list
    constants: list = field(default_factory=list)
    wrapped: bool = False  # source declared an enclosing class
    loc: Loc = _loc()

    def method(self, name: str) -> Optional[MethodDecl]:
        for m in self.methods:
            if m.name == name:
                return m
        return None

    @property
    def user_strategies(self) -> list:
        """Names of user strategies/reducers referenced by qualifiers."""
        names: list = []
        for m in self.methods:
            specs = [p.dist for p in m.params if p.dist]
            specs += [s.dist for s in walk_stmts(m.body) if isinstance(s, VarDecl) and s.dist]
            for d in specs:
                if d.strategy and d.strategy not in names:
                    names.append(d.strategy)
            reds = [m.reduce] + [s.reduce for s in walk_stmts(m.body) if isinstance(s, Sync)]
            for r in reds:
                if r is not None and r.kind == "user" and r.name not in names:
                    names.append(r.name)
        return names


Node = Union[Expr, Stmt]


# --------------------------------------------------------------------------
# Traversal helpers


def child_stmts(s: Stmt) -> list:
    if isinstance(s, Block):
        return list(s.stmts)
    if isinstance(s, For):
        return [x for x in (s.init, s.update, s.body) if x is not None]
    if isinstance(s, While):
        return [s.body]
    if isinstance(s, If):
        return [s.then] + ([s.other] if s.other is not None else [])
    if isinstance(s, Sync):
        return [s.body]
    return []


def walk_stmts(s: Stmt):
    """Pre-order walk over statements (source order)."""
    yield s
    for c in child_stmts(s):
        yield from walk_stmts(c)


def stmt_exprs(s: Stmt) -> list:
    """Expressions held directly by a statement (not nested statements)."""
    if isinstance(s, VarDecl):
        return [s.init] if s.init is not None else []
    if isinstance(s, Assign):
        return [s.target, s.value]
    if isinstance(s, IncDec):
        return [s.target]
    if isinstance(s, ExprStmt):
        return [s.expr]
    if isinstance(s, For):
        return [s.cond] if s.cond is not None else []
    if isinstance(s, (While, If)):
        return [s.cond]
    if isinstance(s, Return):
        return [s.value] if s.value is not None else []
    if isinstance(s, ResultStore):
        return [s.value] if s.value is not None else []
    return []


def child_exprs(e: Expr) -> list:
    if isinstance(e, (Index,)):
        return [e.base, e.index]
    if isinstance(e, Length):
        return [e.base]
    if isinstance(e, (Call, MathCall)):
        return list(e.args)
    if isinstance(e, Unary):
        return [e.operand]
    if isinstance(e, Binary):
        return [e.left, e.right]
    if isinstance(e, Ternary):
        return [e.cond, e.then, e.other]
    if isinstance(e, Cast):
        return [e.expr]
    if isinstance(e, NewArray):
        return list(e.dims)
    if isinstance(e, IReduce):
        return [e.expr]
    return []


def walk_expr(e: Expr):
    yield e
    for c in child_exprs(e):
        yield from walk_expr(c)


def all_exprs(s: Stmt):
    """Every expression node under a statement tree."""
    for st in walk_stmts(s):
        for e in stmt_exprs(st):
            yield from walk_expr(e)


def index_chain(e: Expr):
    """Split ``a[i][j]`` into (``a``, [i, j]); base is None if not a name."""
    idx = []
    while isinstance(e, Index):
        idx.append(e.index)
        e = e.base
    idx.reverse()
    if isinstance(e, Name):
        return e.id, idx
    return None, idx


def root_name(e: Expr) -> Optional[str]:
    return index_chain(e)[0]

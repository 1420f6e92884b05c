"""The benchmark corpus: SOMD-mini programs, input generators and output checks.

Desk-scale sizes are the JavaGrande Class A configurations divided by ten.
"""
from __future__ import annotations

import math
import os
import random
from dataclasses import dataclass, field
from typing import Callable

from ..engine import Engine, load as load_file

HERE = os.path.dirname(os.path.abspath(__file__))

INT_MIN, INT_MAX = -(2 ** 31), 2 ** 31 - 1


@dataclass(frozen=True)
class CorpusProgram:
    name: str
    entry: str
    make: Callable  # (rng, size, **params) -> argument list
    desk_size: int
    small_size: int
    integer: bool  # exact comparison; otherwise relative tolerance
    gpu_eligible: bool
    params: dict = field(default_factory=dict)  # defaults for make's keyword arguments
    min_size: int = 0
    summary: str = ""

    @property
    def path(self) -> str:
        return os.path.join(HERE, f"{self.name}.somd")

    def source(self) -> str:
        with open(self.path, encoding="utf-8") as fh:
            return fh.read()

    def load(self, **kw) -> Engine:
        return load_file(self.path, **kw)

    def make_args(self, rng: random.Random, size: int, **params) -> list:
        merged = {**self.params, **params}
        return self.make(rng, size, **merged)


def _ints(rng, n, lo=-1000, hi=1000):
    return [rng.randint(lo, hi) for _ in range(n)]


def _doubles(rng, n, lo=-1.0, hi=1.0):
    return [rng.uniform(lo, hi) for _ in range(n)]


def _vectoradd(rng, size):
    return [_ints(rng, size), _ints(rng, size)]


def _sum(rng, size):
    return [_ints(rng, size)]


def _norm(rng, size):
    return [_doubles(rng, size)]


def _crypt(rng, size):
    return [[rng.randrange(256) for _ in range(size)], [rng.randint(INT_MIN, INT_MAX) for _ in range(4)]]


def _lufact(rng, size):
    # columns of a random matrix; b = A * ones so the solution is close to all ones
    cols = [_doubles(rng, size) for _ in range(size)]
    b = [sum(cols[j][i] for j in range(size)) for i in range(size)]
    return [cols, b]


def _series(rng, size, points=1000):
    return [size, points]


def _sor(rng, size, iterations=100):
    return [[_doubles(rng, size, 0.0, 1.0) for _ in range(size)], iterations]


def sparse_matrix(rng, nrows: int, nnz: int):
    """Random coordinate-form matrix with entries sorted by row."""
    if nrows == 0:
        nnz = 0
    entries = sorted((rng.randrange(nrows), rng.randrange(nrows)) for _ in range(nnz))
    row = [r for r, _ in entries]
    col = [c for _, c in entries]
    return _doubles(rng, nnz), row, col


def _sparse(rng, size, density=5, iterations=10):
    val, row, col = sparse_matrix(rng, size, density * size)
    return [val, row, col, _doubles(rng, size), size, iterations]


PROGRAMS = {p.name: p for p in [
    CorpusProgram("vectoradd", "vectorAdd", _vectoradd, 300_000, 12, True, True,
                  summary="element-wise sum; default array assembly"),
    CorpusProgram("sum", "sum", _sum, 300_000, 12, True, True,
                  summary="array sum; self reduction"),
    CorpusProgram("norm", "norm", _norm, 300_000, 12, False, True,
                  summary="normalization through a nested reducing method"),
    CorpusProgram("normalize", "normalize", _norm, 300_000, 12, False, True,
                  summary="normalization through a shared scalar and sync reduce"),
    CorpusProgram("crypt", "roundTrip", _crypt, 300_000, 21, True, True,
                  summary="ARX cipher then decipher, eight bytes per iteration"),
    CorpusProgram("lufact", "luSolve", _lufact, 50, 6, False, True,
                  summary="LU factorisation with partial pivoting, then a triangular solve"),
    CorpusProgram("series", "series", _series, 1000, 6, False, True, params={"points": 1000},
                  summary="first N Fourier coefficients of (x+1)^x on [0, 2]"),
    CorpusProgram("sor", "sor", _sor, 100, 6, False, True, params={"iterations": 100}, min_size=1,
                  summary="two-buffer relaxation stencil with one-cell views"),
    CorpusProgram("sparsematmult", "spmv", _sparse, 5000, 8, False, False,
                  params={"density": 5, "iterations": 10},
                  summary="coordinate-form sparse matrix times vector, row-disjoint partitions"),
]}

# small-run parameters: keep the nested loops short in the equivalence suites
SMALL_PARAMS = {"series": {"points": 20}, "sor": {"iterations": 3}, "sparsematmult": {"iterations": 2}}


def get(name: str) -> CorpusProgram:
    try:
        return PROGRAMS[name]
    except KeyError:
        raise KeyError(f"no corpus program {name!r}; known: {', '.join(PROGRAMS)}") from None


def flatten(value) -> list:
    if isinstance(value, (list, tuple)):
        out = []
        for v in value:
            out.extend(flatten(v))
        return out
    return [value]


def checksum(value) -> float:
    """Position-weighted sum of every number in ``value``."""
    total = 0.0
    for k, v in enumerate(flatten(value)):
        if v is None:
            continue
        total += (1.0 + (k % 97) / 97.0) * float(v)
    return total


def outputs_match(a, b, rel: float = 0.0) -> bool:
    """Exact when ``rel`` is 0; else every element within ``rel`` of the output's scale."""
    fa, fb = flatten(a), flatten(b)
    if len(fa) != len(fb):
        return False
    if rel == 0.0:
        return all(x == y and type(x) is type(y) for x, y in zip(fa, fb))
    scale = max((abs(x) for x in fb if isinstance(x, (int, float)) and math.isfinite(x)), default=0.0)
    for x, y in zip(fa, fb):
        if x == y:
            continue
        if isinstance(x, float) and isinstance(y, float) and math.isnan(x) and math.isnan(y):
            continue
        if abs(x - y) > rel * max(abs(x), abs(y), scale):
            return False
    return True


def checksums_match(a: float, b: float, rel: float) -> bool:
    if a == b:
        return True
    return abs(a - b) <= rel * max(abs(a), abs(b), 1e-300)


__all__ = ["CorpusProgram", "PROGRAMS", "SMALL_PARAMS", "get", "checksum", "outputs_match",
           "checksums_match", "flatten", "sparse_matrix"]

"""Compile a SOMD-mini program once and run its methods on any backend.

Host (non-SOMD) methods run as compiled sequential code; every call they make
to a SOMD method, and the entry call itself when the entry is a SOMD method,
goes through :meth:`Engine.dispatch`, which picks the backend per method from
the selection rules.
"""
from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from typing import Optional

from . import codegen
from . import values as V
from .config import BACKENDS, select_backend
from .errors import LoweringError, SomdError
from .frontend import ast as A
from .frontend.checker import validate
from .frontend.parser import parse
from .interp import Interpreter
from .partition import registry as default_registry

log = logging.getLogger("somd")


@dataclass
class Options:
    workers: int = 0  # 0: logical core count
    n_slaves: int = 0  # 0: same as workers
    check: bool = False  # bounds, view and ownership checks in generated code
    stress_seed: Optional[int] = None
    watchdog: Optional[float] = 30.0
    specialize: bool = False  # drop the max/min clamps for first/last ranks
    gpu_max_group: int = 256
    gpu_seed: Optional[int] = 0
    gpu_strict_hazards: bool = False
    force_f32: bool = False
    gpu_enabled: bool = True


def prepare_value(value, ty: A.Type):
    """Convert a JSON-ish argument to the runtime representation of ``ty`` (always a fresh copy)."""
    if ty.dims == 0:
        return V.coerce(value, ty.base)
    if value is None:
        return None
    if not isinstance(value, (list, tuple)):
        raise SomdError(f"expected a {ty} argument, got {type(value).__name__}")
    inner = A.Type(ty.base, ty.dims - 1)
    return [prepare_value(x, inner) for x in value]


def prepare_args(m: A.MethodDecl, args: list) -> list:
    if len(args) != len(m.params):
        raise SomdError(f"{m.name} takes {len(m.params)} argument(s), got {len(args)}")
    return [prepare_value(a, p.type) for a, p in zip(args, m.params)]


class Engine:
    def __init__(self, prog: A.Program, registry=None, rules=(), options: Optional[Options] = None):
        self.registry = registry or default_registry
        self.prog = prog
        self.warnings = [d for d in validate(prog, self.registry)]
        self.rules = list(rules)
        self.options = options or Options()
        self.module = codegen.compile_program(prog, checked=self.options.check, tag=prog.name)
        self.module.ns["_invoke"] = self.dispatch
        self.runtime_warnings: list = []
        self.dispatches = 0  # SOMD invocations issued so far, every backend
        self._local = threading.local()
        self._sm = None
        self._gpu = None
        self._oracle = None

    @classmethod
    def from_source(cls, source: str, name: str = "Main", **kw) -> "Engine":
        return cls(parse(source, name), **kw)

    # -- backends -------------------------------------------------------------------------

    @property
    def sm(self):
        if self._sm is None:
            from .runtime_sm import SMRunner

            o = self.options
            self._sm = SMRunner(self.module, workers=o.workers, n_slaves=o.n_slaves, check=o.check,
                                stress_seed=o.stress_seed, watchdog=o.watchdog, specialize=o.specialize,
                                registry=self.registry)
        return self._sm

    @property
    def gpu(self):
        if self._gpu is None:
            from .device_sim import GPURunner

            o = self.options
            self._gpu = GPURunner(self.module, max_group=o.gpu_max_group, seed=o.gpu_seed,
                                  strict=o.gpu_strict_hazards, force_f32=o.force_f32, registry=self.registry)
        return self._gpu

    def last_device_state(self):
        """DeviceState of the most recent gpu-sim invocation, or None."""
        return self._gpu.last if self._gpu is not None else None

    @property
    def oracle(self) -> Interpreter:
        if self._oracle is None:
            self._oracle = Interpreter(self.prog)
        return self._oracle

    def available(self) -> tuple:
        return BACKENDS if self.options.gpu_enabled else tuple(b for b in BACKENDS if b != "gpu-sim")

    def backend_for(self, name: str, default: str) -> str:
        return select_backend(self.rules, self.prog.name, name, self.available(), default,
                              self.runtime_warnings)

    def dispatch(self, name: str, args: list):
        """Run SOMD method ``name`` on the backend its rule (or the run's default) selects."""
        default = getattr(self._local, "default", "sm")
        self.dispatches += 1
        backend = self.backend_for(name, default)
        if backend == "gpu-sim":
            reason = self.gpu.ineligible(name)
            if reason is None:
                return self.gpu.invoke(name, args)
            msg = f"{name}: not runnable on gpu-sim ({reason}); using sm"
            if msg not in self.runtime_warnings:
                log.warning(msg)
                self.runtime_warnings.append(msg)
            backend = "sm"
        if backend == "seq":
            return self.module[f"_seq_{name}"](*args)
        return self.sm.invoke(name, args)

    # -- entry ----------------------------------------------------------------------------------

    def method(self, name: str) -> A.MethodDecl:
        m = self.prog.method(name)
        if m is None:
            raise SomdError(f"no method named {name!r}")
        return m

    def default_entry(self) -> str:
        somd = [m.name for m in self.prog.methods if m.info.somd]
        return (somd or [self.prog.methods[0].name])[0] if self.prog.methods else ""

    def run(self, entry: str, args: list, backend: str = "sm"):
        m = self.method(entry)
        args = prepare_args(m, args)
        if backend == "seq":
            return self.oracle.call(entry, args)
        if backend not in BACKENDS:
            raise SomdError(f"unknown backend {backend!r}")
        prev = getattr(self._local, "default", None)
        self._local.default = backend
        try:
            if m.info.somd or m.reduce is not None:
                return self.dispatch(entry, args)
            return self.module[f"_host_{entry}"](*args)
        except SomdError:
            raise
        except Exception as exc:  # noqa: BLE001 - mapped to a located runtime error
            raise self.module.translate(exc) from exc
        finally:
            self._local.default = prev

    def run_compiled_seq(self, entry: str, args: list):
        """Compiled sequential code, every call included; the timing baseline of the bench."""
        m = self.method(entry)
        args = prepare_args(m, args)
        try:
            return self.module[f"_seq_{entry}"](*args)
        except SomdError:
            raise
        except Exception as exc:  # noqa: BLE001
            raise self.module.translate(exc) from exc


def load(path: str, **kw) -> Engine:
    import os

    with open(path, encoding="utf-8") as fh:
        src = fh.read()
    name = os.path.splitext(os.path.basename(path))[0]
    return Engine.from_source(src, name, **kw)


__all__ = ["Engine", "Options", "load", "prepare_args", "LoweringError"]

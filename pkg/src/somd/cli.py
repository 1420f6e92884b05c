"""``somdc``: check, inspect, run and benchmark SOMD-mini programs."""
from __future__ import annotations

import argparse
import importlib
import json
import logging
import os
import sys

from . import corpus
from .codegen import eval_constants
from .config import BACKENDS, load_rules
from .errors import CompileError, SomdError, diagnostics_json
from .frontend.checker import check_program
from .frontend.parser import parse
from .partition import registry as default_registry
from .planner_gpu import lower_gpu
from .planner_sm import format_plan, lower_master_sm
from .runtime_sm import default_workers

log = logging.getLogger("somd")


def _read_program(path: str):
    with open(path, encoding="utf-8") as fh:
        src = fh.read()
    return parse(src, os.path.splitext(os.path.basename(path))[0])


def load_plugins(modules, registry):
    """Import each plugin module; a module-level ``register(registry)`` adds its strategies."""
    if not modules:
        return registry
    registry = registry.copy()
    if os.getcwd() not in sys.path:
        sys.path.insert(0, os.getcwd())
    for name in modules:
        mod = importlib.import_module(name)
        hook = getattr(mod, "register", None)
        if hook is None:
            raise SomdError(f"plugin {name!r} defines no register(registry) function")
        hook(registry)
    return registry


def _checked(path: str, registry):
    prog = _read_program(path)
    diags = check_program(prog, registry)
    if any(d.severity == "error" for d in diags):
        raise CompileError(diags)
    for d in diags:
        print(d, file=sys.stderr)
    return prog


def _selected(prog, method):
    if method:
        m = prog.method(method)
        if m is None:
            raise SomdError(f"no method named {method!r}")
        return [m]
    return [m for m in prog.methods if m.info.somd]


# -- commands -------------------------------------------------------------------------------


def cmd_check(args) -> int:
    registry = load_plugins(args.plugin, default_registry)
    try:
        prog = _read_program(args.file)
        diags = check_program(prog, registry)
    except SomdError as exc:
        diags = [exc.diagnostic()]
    if args.diag_json:
        print(diagnostics_json(diags))
    else:
        for d in diags:
            print(f"{args.file}:{d}")
    errors = sum(d.severity == "error" for d in diags)
    if not args.diag_json:
        print(f"{args.file}: {errors} error(s), {len(diags) - errors} warning(s)")
    return 1 if errors else 0


def cmd_inspect(args) -> int:
    registry = load_plugins(args.plugin, default_registry)
    prog = _checked(args.file, registry)
    methods = _selected(prog, args.method)
    if not methods:
        print("// no SOMD methods")
        return 0
    status = 0
    if args.emit_plan:
        n = args.slaves or default_workers()
        print("\n\n".join(format_plan(lower_master_sm(m, n, prog)) for m in methods))
    else:
        consts = eval_constants(prog)
        chunks = []
        for m in methods:
            try:
                plan = lower_gpu(prog, m, consts, args.gpu_max_group)
                chunks.append(plan.to_text())
            except SomdError as exc:
                chunks.append(f"// {m.name}: not runnable on gpu-sim: {exc}")
                status = 1 if args.method else status
        print("\n\n".join(chunks))
    return status


def cmd_run(args) -> int:
    from .engine import Engine, Options

    registry = load_plugins(args.plugin, default_registry)
    rules = load_rules(args.rules) if args.rules else ()
    opts = Options(workers=args.workers, n_slaves=args.slaves, check=args.check, stress_seed=args.stress_seed,
                   gpu_max_group=args.gpu_max_group, gpu_seed=args.gpu_seed,
                   gpu_strict_hazards=args.gpu_strict_hazards, force_f32=args.force_f32,
                   gpu_enabled=not args.no_gpu)
    engine = Engine(_read_program(args.file), registry=registry, rules=rules, options=opts)
    for d in engine.warnings:
        print(d, file=sys.stderr)
    try:
        call_args = json.loads(args.args)
    except json.JSONDecodeError as exc:
        raise SomdError(f"--args is not valid JSON: {exc}") from None
    if not isinstance(call_args, list):
        raise SomdError("--args must be a JSON list with one element per parameter")
    entry = args.entry or engine.default_entry()
    result = engine.run(entry, call_args, args.backend)
    print(json.dumps(result))
    if args.ledger_json:
        dev = engine.last_device_state()
        if dev is None:
            log.warning("no device invocation took place; ledger not written")
        else:
            with open(args.ledger_json, "w", encoding="utf-8") as fh:
                fh.write(dev.ledger_json())
    return 0


def cmd_bench(args) -> int:
    from .bench import bench

    params = {}
    for item in args.param or ():
        key, _, value = item.partition("=")
        params[key] = int(value)
    report = bench(args.name, args.backend, args.size, args.reps, n_slaves=args.slaves, workers=args.workers,
                   gpu_max_group=args.gpu_max_group, gpu_seed=args.gpu_seed, force_f32=args.force_f32,
                   seed=args.seed, params=params)
    print("\n".join(report.lines()))
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(report.to_json(), fh, indent=2)
    return 0


# -- parser ---------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="somdc", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true", help="log informational messages")
    sub = ap.add_subparsers(dest="command", required=True)

    def plugin(p):
        p.add_argument("--plugin", action="append", metavar="MODULE",
                       help="import MODULE and call its register(registry) (repeatable)")

    def gpu(p):
        p.add_argument("--gpu-max-group", type=int, default=256, metavar="N", help="threads per group (256)")
        p.add_argument("--gpu-seed", type=int, default=0, metavar="S", help="group execution order seed")
        p.add_argument("--force-f32", action="store_true", help="round double buffers to single precision")

    p = sub.add_parser("check", help="parse and validate a program")
    p.add_argument("file")
    p.add_argument("--diag-json", action="store_true", help="print diagnostics as JSON")
    plugin(p)
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("inspect", help="print the lowered shared-memory plan or GPU kernels")
    p.add_argument("file")
    what = p.add_mutually_exclusive_group(required=True)
    what.add_argument("--emit-plan", action="store_true", help="master and slave code per SOMD method")
    what.add_argument("--emit-kernels", action="store_true", help="kernels, launches and transfers")
    p.add_argument("--method", help="only this method")
    p.add_argument("--slaves", type=int, default=0, metavar="N", help="slave count (default: cores)")
    p.add_argument("--gpu-max-group", type=int, default=256, metavar="N")
    plugin(p)
    p.set_defaults(fn=cmd_inspect)

    p = sub.add_parser("run", help="run a method on a backend and print its result as JSON")
    p.add_argument("file")
    p.add_argument("--backend", choices=BACKENDS, default="sm")
    p.add_argument("--entry", help="method to call (default: the first SOMD method)")
    p.add_argument("--args", default="[]", help="JSON list of arguments")
    p.add_argument("--workers", type=int, default=0, metavar="N", help="pool size (default: cores)")
    p.add_argument("--slaves", type=int, default=0, metavar="N", help="method instances (default: workers)")
    p.add_argument("--stress-seed", type=int, metavar="S", help="randomize worker scheduling")
    p.add_argument("--check", action="store_true", help="bounds, view and ownership checks")
    p.add_argument("--rules", metavar="FILE", help="backend selection rules")
    p.add_argument("--no-gpu", action="store_true", help="treat gpu-sim as unavailable for rules")
    gpu(p)
    p.add_argument("--gpu-strict-hazards", action="store_true", help="fail on a cross-group hazard")
    p.add_argument("--ledger-json", metavar="OUT", help="write the last device invocation's ledger")
    plugin(p)
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("bench", help="time a corpus program")
    p.add_argument("name", choices=sorted(corpus.PROGRAMS))
    p.add_argument("--backend", choices=BACKENDS, default="sm")
    p.add_argument("--size", type=int, help="problem size (default: desk scale)")
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--seed", type=int, default=0, help="input generator seed")
    p.add_argument("--param", action="append", metavar="KEY=INT",
                   help="generator parameter, e.g. iterations=100 or points=1000")
    p.add_argument("--workers", type=int, default=0, metavar="N")
    p.add_argument("--slaves", type=int, default=0, metavar="N")
    gpu(p)
    p.add_argument("--json", metavar="OUT", help="write the report as JSON")
    p.set_defaults(fn=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.fn(args)
    except CompileError as exc:
        for d in exc.diagnostics:
            print(f"{getattr(args, 'file', '')}:{d}", file=sys.stderr)
        return 1
    except (SomdError, OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

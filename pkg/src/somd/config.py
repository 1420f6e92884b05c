"""Backend selection rules: one ``Class.method:target`` per line, ``#`` comments."""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Iterable, Optional

from .errors import ConfigError

log = logging.getLogger("somd")

BACKENDS = ("seq", "sm", "gpu-sim")
# targets the rule grammar knows about but this build cannot run
UNAVAILABLE_TARGETS = ("cluster",)
DEFAULT_BACKEND = "sm"

_RULE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\.([A-Za-z_][A-Za-z0-9_]*)\s*:\s*([A-Za-z][A-Za-z0-9_-]*)$")


@dataclass(frozen=True)
class BackendRule:
    qualifier: str  # class (program) name
    method: str
    target: str
    line: int = 0

    def matches(self, program: str, method: str) -> bool:
        return self.method == method and self.qualifier == program


def parse_rules(text: str, source: str = "<rules>") -> list:
    rules, seen = [], {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _RULE.match(line)
        if m is None:
            raise ConfigError(f"{source}:{lineno}: malformed rule {raw.strip()!r}; expected Class.method:target")
        cls, meth, target = m.groups()
        if target not in BACKENDS + UNAVAILABLE_TARGETS:
            raise ConfigError(f"{source}:{lineno}: unknown target {target!r}; expected one of "
                              f"{', '.join(BACKENDS + UNAVAILABLE_TARGETS)}")
        key = (cls, meth)
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: second rule for {cls}.{meth} (first on line {seen[key]})")
        seen[key] = lineno
        rules.append(BackendRule(cls, meth, target, lineno))
    return rules


def load_rules(path: str) -> list:
    with open(path, encoding="utf-8") as fh:
        return parse_rules(fh.read(), path)


def select_backend(rules: Iterable[BackendRule], program: str, method: str,
                   available: Iterable[str] = BACKENDS, default: str = DEFAULT_BACKEND,
                   warnings: Optional[list] = None) -> str:
    """Rule target for ``program.method`` when available, else the default backend."""
    available = set(available)
    for r in rules:
        if r.matches(program, method):
            if r.target in available:
                return r.target
            msg = (f"rule {r.qualifier}.{r.method}:{r.target} (line {r.line}) names an unavailable "
                   f"backend; using {default}")
            log.warning(msg)
            if warnings is not None:
                warnings.append(msg)
            return default
    return default

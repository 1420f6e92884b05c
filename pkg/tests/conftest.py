import os

import pytest

from somd.engine import Engine, Options
from somd.frontend.checker import validate
from somd.frontend.parser import parse

PROGRAMS = os.path.join(os.path.dirname(os.path.abspath(__file__)), "programs")


def program_source(name: str) -> str:
    with open(os.path.join(PROGRAMS, name), encoding="utf-8") as fh:
        return fh.read()


def parsed(name: str):
    prog = parse(program_source(name), os.path.splitext(name)[0])
    validate(prog)
    return prog


def engine(name: str, **opts) -> Engine:
    return Engine(parse(program_source(name), os.path.splitext(name)[0]), options=Options(**opts))


def source_engine(src: str, name: str = "T", **opts) -> Engine:
    return Engine.from_source(src, name, options=Options(**opts))


@pytest.fixture
def programs_dir():
    return PROGRAMS

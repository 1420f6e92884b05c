import logging

import pytest

from somd.config import parse_rules, select_backend
from somd.errors import ConfigError

from conftest import engine


def test_no_rules_selects_the_default():
    assert select_backend([], "Bench", "series") == "sm"


def test_matching_rule_selects_its_target():
    rules = parse_rules("# backends\nBench.series:gpu-sim\nBench.sum : seq  # trailing comment\n")
    assert select_backend(rules, "Bench", "series") == "gpu-sim"
    assert select_backend(rules, "Bench", "sum") == "seq"
    assert select_backend(rules, "Other", "series") == "sm"


def test_unavailable_target_falls_back_with_a_warning(caplog):
    rules = parse_rules("Bench.series:gpu-sim")
    warnings = []
    with caplog.at_level(logging.WARNING, logger="somd"):
        got = select_backend(rules, "Bench", "series", available=("seq", "sm"), warnings=warnings)
    assert got == "sm"
    assert "line 1" in warnings[0] and "unavailable" in caplog.text


def test_cluster_parses_but_is_never_available():
    rules = parse_rules("Bench.series:cluster")
    assert rules[0].target == "cluster"
    assert select_backend(rules, "Bench", "series") == "sm"


@pytest.mark.parametrize("text,line,fragment", [
    ("Bench.series gpu-sim", 1, "malformed"),
    ("\n\nBench.series:fpga", 3, "unknown target"),
    ("A.f:sm\nA.f:seq", 2, "second rule"),
])
def test_bad_rule_files(text, line, fragment):
    with pytest.raises(ConfigError) as info:
        parse_rules(text, "rules.txt")
    assert f"rules.txt:{line}:" in str(info.value) and fragment in str(info.value)


def test_engine_routes_by_rule():
    rules = parse_rules("array_sum.sum:gpu-sim")
    e = engine("array_sum.somd")
    e.rules = rules
    assert e.run("sum", [[1, 2, 3]], "sm") == 6
    assert e.last_device_state() is not None


def test_engine_without_gpu_uses_sm():
    e = engine("array_sum.somd", gpu_enabled=False)
    e.rules = parse_rules("array_sum.sum:gpu-sim")
    assert e.run("sum", [[1, 2, 3]], "sm") == 6
    assert e.last_device_state() is None
    assert any("unavailable" in w for w in e.runtime_warnings)

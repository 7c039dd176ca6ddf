import pytest
from hypothesis import given
from hypothesis import strategies as st

from rig.cmake.listfile import (
    ListfileError,
    command_arguments,
    custom_target_depends,
    is_literal,
    link_items,
    read_arguments,
)

MULTI = """\
project(x)
add_custom_target(all_apps
    DEPENDS app   # the shipped binary
            app_test
            ${EXTRA_APPS}
)
target_link_libraries(core PUBLIC fmt::fmt)
"""


def test_multiline_invocation_with_comments():
    args = command_arguments(MULTI, 2, "add_custom_target")
    assert args == ["all_apps", "DEPENDS", "app", "app_test", "${EXTRA_APPS}"]
    assert custom_target_depends(args) == ["app", "app_test", "${EXTRA_APPS}"]
    assert [t for t in custom_target_depends(args) if is_literal(t)] == ["app", "app_test"]


def test_link_items_drop_keywords():
    assert link_items(command_arguments(MULTI, 7)) == ["fmt::fmt"]
    assert link_items(["t", "debug", "d.lib", "optimized", "o.lib"]) == ["d.lib", "o.lib"]


@pytest.mark.parametrize("text,expected", [
    ('f(a "b c" d)', ["a", "b c", "d"]),
    ('f("esc\\"aped" "tab\\t")', ['esc"aped', "tab\t"]),
    ("f([[raw ${x}]] [==[a]]b]==])", ["raw ${x}", "a]]b"]),
    ("f(a #[[block\ncomment]] b)", ["a", "b"]),
    ("f(a $<IF:$<CONFIG:Debug>,x,y> (n))", ["a", "$<IF:$<CONFIG:Debug>,x,y>", "(n)"]),
    ("f()", []),
    ("  F (A)", ["A"]),
])
def test_argument_forms(text, expected):
    assert command_arguments(text, 1) == expected


def test_custom_target_keywords_end_depends():
    args = ["t", "ALL", "DEPENDS", "a", "COMMENT", "hi", "DEPENDS", "b"]
    assert custom_target_depends(args) == ["a", "b"]


@pytest.mark.parametrize("text,line,command", [
    ("f(a", 1, None),
    ('f("open', 1, None),
    ("f([[x", 1, None),
    ("f(a)", 2, None),
    ("# comment\nf(a)", 1, None),
    ("f(a)", 1, "g"),
])
def test_errors(text, line, command):
    with pytest.raises(ListfileError):
        command_arguments(text, line, command)


def test_is_literal():
    assert is_literal("app")
    assert not is_literal("${X}")
    assert not is_literal("$<TARGET_FILE:a>")
    assert not is_literal("$ENV{HOME}")


def test_read_arguments_from_file(tmp_path):
    path = tmp_path / "CMakeLists.txt"
    path.write_text(MULTI)
    assert read_arguments(path, 7, "target_link_libraries")[0] == "core"


_plain = st.text(alphabet="abcxyz_:./-", min_size=1, max_size=8)


@given(st.lists(_plain, max_size=8))
def test_unquoted_tokens_round_trip(tokens):
    text = "cmd(" + "\n   ".join(tokens) + ")\n"
    assert command_arguments(text, 1) == tokens


@given(st.lists(st.text(alphabet='ab c"\\;', max_size=6), max_size=5))
def test_quoted_tokens_round_trip(tokens):
    quoted = ['"' + t.replace("\\", "\\\\").replace('"', '\\"') + '"' for t in tokens]
    assert command_arguments("cmd(" + " ".join(quoted) + ")", 1) == tokens

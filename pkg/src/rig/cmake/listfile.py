"""Just enough CMake listfile reading to recover one command's arguments.

The File API gives us a file and line for every command that created a
target or added a dependency. When it leaves something out (custom target
DEPENDS, which package a link line named) we re-read that single invocation.
Nothing is evaluated: variable references and generator expressions come
back as literal text.
"""

from __future__ import annotations

import re
from pathlib import Path

_BRACKET_OPEN = re.compile(r"\[(=*)\[")

CUSTOM_TARGET_KEYWORDS = frozenset({
    "ALL", "COMMAND", "DEPENDS", "BYPRODUCTS", "WORKING_DIRECTORY", "COMMENT",
    "JOB_POOL", "VERBATIM", "USES_TERMINAL", "COMMAND_EXPAND_LISTS", "SOURCES",
})
LINK_KEYWORDS = frozenset({
    "PUBLIC", "PRIVATE", "INTERFACE", "LINK_PUBLIC", "LINK_PRIVATE",
    "LINK_INTERFACE_LIBRARIES", "debug", "optimized", "general",
})


class ListfileError(ValueError):
    pass


def _skip_bracket(text: str, i: int) -> tuple[str, int] | None:
    m = _BRACKET_OPEN.match(text, i)
    if not m:
        return None
    close = "]" + m.group(1) + "]"
    end = text.find(close, m.end())
    if end < 0:
        raise ListfileError("unterminated bracket argument")
    return text[m.end():end], end + len(close)


def command_arguments(text: str, line: int, command: str | None = None) -> list[str]:
    """Arguments of the command invocation that starts on ``line`` (1-based)."""
    lines = text.splitlines(keepends=True)
    if not 1 <= line <= len(lines):
        raise ListfileError(f"line {line} is outside the file")
    start = sum(len(x) for x in lines[: line - 1])
    head = re.compile(r"[ \t]*([A-Za-z_][A-Za-z0-9_]*)[ \t]*\(").match(text, start)
    if not head:
        raise ListfileError(f"no command invocation starts on line {line}")
    if command is not None and head.group(1).lower() != command.lower():
        raise ListfileError(f"line {line} invokes {head.group(1)}, not {command}")

    args: list[str] = []
    depth = 0
    i = head.end()
    current: list[str] = []

    def flush() -> None:
        if current:
            args.append("".join(current))
            current.clear()

    while i < len(text):
        ch = text[i]
        if ch == "#":
            flush()
            bracket = _skip_bracket(text, i + 1)
            if bracket:
                i = bracket[1]
            else:
                nl = text.find("\n", i)
                i = len(text) if nl < 0 else nl
            continue
        if ch.isspace():
            flush()
            i += 1
            continue
        if ch == '"' and not current:
            j, buf = i + 1, []
            while j < len(text) and text[j] != '"':
                if text[j] == "\\" and j + 1 < len(text):
                    nxt = text[j + 1]
                    if nxt == "\n":
                        j += 2
                        continue
                    buf.append({"n": "\n", "t": "\t", "r": "\r"}.get(nxt, nxt))
                    j += 2
                    continue
                buf.append(text[j])
                j += 1
            if j >= len(text):
                raise ListfileError("unterminated quoted argument")
            args.append("".join(buf))
            i = j + 1
            continue
        if ch == "[" and not current:
            bracket = _skip_bracket(text, i)
            if bracket:
                args.append(bracket[0])
                i = bracket[1]
                continue
        if ch == "(":
            depth += 1
        elif ch == ")":
            if depth == 0:
                flush()
                return args
            depth -= 1
        elif ch == "\\" and i + 1 < len(text):
            current.append(text[i:i + 2])
            i += 2
            continue
        current.append(ch)
        i += 1
    raise ListfileError(f"command on line {line} is missing its closing parenthesis")


def read_arguments(path: str | Path, line: int, command: str | None = None) -> list[str]:
    return command_arguments(Path(path).read_text(encoding="utf-8", errors="replace"), line, command)


def is_literal(token: str) -> bool:
    """False for tokens whose value depends on evaluation."""
    return "${" not in token and "$<" not in token and "$ENV{" not in token


def custom_target_depends(args: list[str]) -> list[str]:
    """Tokens of the DEPENDS clause of an ``add_custom_target`` argument list."""
    out: list[str] = []
    collecting = False
    for tok in args[1:]:
        if tok in CUSTOM_TARGET_KEYWORDS:
            collecting = tok == "DEPENDS"
            continue
        if collecting:
            out.append(tok)
    return out


def link_items(args: list[str]) -> list[str]:
    """Library items named by a ``target_link_libraries`` argument list."""
    return [tok for tok in args[1:] if tok not in LINK_KEYWORDS]

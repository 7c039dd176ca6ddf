"""``rig`` command line: extract, validate, render, score, query, and diff graphs.

Exit codes: 0 success, 1 validation errors, 2 usage (including unknown or
ambiguous node names), 3 extraction failure, 4 I/O, store, or schema failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from rig.authoring import SchemaError, parse_view, read_view
from rig.cmake import ExtractionError, ExtractionSource, Mode, extract
from rig.complexity import DEFAULT_MAX_RAW, score
from rig.model import RIG, RIGError
from rig.query import GraphQuery, QueryError
from rig.store import SQLITE_MAGIC, StoreError, diff, load, read, save
from rig.validate import AUTHORED, Severity, ValidationFailure, finalize, validate
from rig.view import render_view, size_report

OK, VALIDATION, USAGE, EXTRACTION, IO = 0, 1, 2, 3, 4


class _Usage(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # keep argparse from calling sys.exit
        raise _Usage(f"{self.format_usage()}{self.prog}: error: {message}")


def _is_store(path: str) -> bool:
    if path == "-":
        return False
    with open(path, "rb") as fh:
        return fh.read(len(SQLITE_MAGIC)) == SQLITE_MAGIC


def _authored_root(path: str, rig: RIG) -> Path:
    base = Path.cwd() if path == "-" else Path(path).resolve().parent
    return base / rig.repo.root_path


def open_graph(path: str) -> RIG:
    """A finalized graph from a store file or a view document."""
    if _is_store(path):
        return load(path)
    rig = read_view(path)
    finalize(rig, AUTHORED, _authored_root(path, rig))
    return rig.hydrate()


def _write_text(text: str, out: str | None) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


# subcommands -----------------------------------------------------------------

def cmd_extract(args) -> int:
    if args.replay:
        src = ExtractionSource(Mode.REPLAY, reply_dir=args.replay, project_dir=args.project,
                               build_dir=args.build_dir, ctest_doc=args.ctest)
    else:
        if not args.build_dir:
            raise _Usage("extract: --build-dir is required unless --replay is given")
        src = ExtractionSource(Mode.CONFIGURE, project_dir=args.project, build_dir=args.build_dir,
                               ctest_doc=args.ctest)
    rig = extract(src, build_tests=not args.no_build)
    save(rig, args.out)
    return OK


def cmd_validate(args) -> int:
    if _is_store(args.graph):
        rig = read(args.graph)
        errors = validate(rig, rig.policy, rig.root)
    else:
        rig = read_view(args.graph)
        errors = validate(rig, AUTHORED, _authored_root(args.graph, rig))
    print(json.dumps([e.to_dict() for e in errors], indent=2))
    return VALIDATION if any(e.severity is Severity.ERROR for e in errors) else OK


def cmd_view(args) -> int:
    _write_text(render_view(open_graph(args.graph)), args.output)
    return OK


def cmd_load(args) -> int:
    rig = read_view(args.view)
    finalize(rig, AUTHORED, _authored_root(args.view, rig))
    save(rig, args.out)
    return OK


def _max_raw(value: str, source: str) -> float:
    try:
        number = float(value)
    except ValueError:
        raise _Usage(f"{source}: not a number: {value!r}") from None
    if number <= 0:
        raise _Usage(f"{source}: must be positive, got {value}")
    return number


def cmd_complexity(args) -> int:
    if args.max_raw is not None:
        max_raw = _max_raw(args.max_raw, "--max-raw")
    elif os.environ.get("RIG_MAX_RAW"):
        max_raw = _max_raw(os.environ["RIG_MAX_RAW"], "RIG_MAX_RAW")
    else:
        max_raw = DEFAULT_MAX_RAW
    print(score(open_graph(args.graph), max_raw))
    return OK


def cmd_query(args) -> int:
    q = GraphQuery(open_graph(args.graph))
    needs_node = args.question != "order"
    if needs_node and not args.node:
        raise _Usage(f"query {args.question}: a NODE argument is required")
    if not needs_node and args.node:
        raise _Usage("query order takes no NODE argument")
    if args.question == "deps":
        result = q.direct_deps(args.node)
    elif args.question == "rdeps":
        result = q.reverse_closure(args.node, components_only=args.components_only)
    elif args.question == "tests":
        result = q.tests_covering(args.node)
    else:
        result = q.build_order()
    if args.json:
        print(json.dumps(result.to_json(), indent=2))
    else:
        for name in result.names:
            print(name)
    return OK


def cmd_diff(args) -> int:
    report = diff(open_graph(args.a), open_graph(args.b))
    if args.json:
        print(json.dumps(report.to_dict(), indent=2))
    else:
        for line in report.lines():
            print(line)
    return OK


def cmd_size(args) -> int:
    data = sys.stdin.buffer.read() if args.view == "-" else Path(args.view).read_bytes()
    parse_view(data)
    print(size_report(data))
    return OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rig", description="Repository Intelligence Graph tools")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("extract", help="extract a graph from a CMake project or replay fixture")
    p.add_argument("--project", required=True, help="source tree (listfiles and sources)")
    p.add_argument("--build-dir", help="out-of-source build directory (configure mode)")
    p.add_argument("--replay", metavar="REPLY_DIR", help="read this File API reply directory instead of configuring")
    p.add_argument("--ctest", metavar="FILE", help="ctest --show-only=json-v1 document")
    p.add_argument("--no-build", action="store_true",
                   help="configure mode: skip building, so tests whose executables are missing get none")
    p.add_argument("--out", required=True, metavar="DB")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("validate", help="report validation findings as JSON")
    p.add_argument("graph", metavar="DB|VIEW.json")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("view", help="render the flat JSON view")
    p.add_argument("graph", metavar="DB")
    p.add_argument("-o", "--output", metavar="FILE")
    p.set_defaults(func=cmd_view)

    p = sub.add_parser("load", help="store an authored view document")
    p.add_argument("view", metavar="VIEW.json")
    p.add_argument("--out", required=True, metavar="DB")
    p.set_defaults(func=cmd_load)

    p = sub.add_parser("complexity", help="build-oriented complexity score")
    p.add_argument("graph", metavar="DB")
    p.add_argument("--max-raw", metavar="N", help=f"normalization maximum (default $RIG_MAX_RAW or {DEFAULT_MAX_RAW})")
    p.set_defaults(func=cmd_complexity)

    p = sub.add_parser("query", help="structural queries")
    p.add_argument("graph", metavar="DB")
    p.add_argument("question", choices=("deps", "rdeps", "order", "tests"))
    p.add_argument("node", nargs="?", metavar="NODE")
    p.add_argument("--components-only", action="store_true", help="rdeps: report components only")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("diff", help="structural difference between two graphs")
    p.add_argument("a", metavar="DB1")
    p.add_argument("b", metavar="DB2")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("size", help="bytes and estimated tokens of a view document")
    p.add_argument("view", metavar="VIEW.json")
    p.set_defaults(func=cmd_size)
    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()

    def fail(code: int, message: str) -> int:
        print(f"rig: error: {message}", file=sys.stderr)
        return code

    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _Usage as exc:
        print(exc, file=sys.stderr)
        return USAGE
    except ValidationFailure as exc:
        for err in exc.errors:
            if err.severity is Severity.ERROR:
                print(f"{err.category.value}: {err.message}", file=sys.stderr)
        return VALIDATION
    except QueryError as exc:
        return fail(USAGE, str(exc))
    except ExtractionError as exc:
        if exc.output:
            sys.stderr.write(exc.output if exc.output.endswith("\n") else exc.output + "\n")
        return fail(EXTRACTION, str(exc))
    except (SchemaError, StoreError, OSError) as exc:
        return fail(IO, str(exc))
    except RIGError as exc:
        return fail(EXTRACTION, str(exc))


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()

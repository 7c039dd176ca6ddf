"""Build a RIG from an authored (or previously rendered) view document."""

from __future__ import annotations

import json
import sys
from pathlib import Path

from pydantic import ValidationError as PydanticValidationError

from rig.model import (
    RIG,
    Aggregator,
    BuildSystemInfo,
    CallStack,
    Component,
    ComponentType,
    DuplicateIdError,
    Evidence,
    ExternalPackage,
    FileLine,
    InvalidNodeError,
    MetadataError,
    PackageManager,
    RepositoryInfo,
    RIGError,
    Runner,
    TestDefinition,
)
from rig.view import CallStackView, ViewDocument


class SchemaError(RIGError, ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


def _pointer(loc: tuple) -> str:
    # union branches show up as pydantic's own tags, not document keys
    parts = [str(p) for p in loc if not (isinstance(p, str) and ("[" in p or p in ("str", "CallStackView")))]
    return "/" + "/".join(parts)


def parse_view(doc: str | bytes | dict) -> ViewDocument:
    try:
        if isinstance(doc, dict):
            return ViewDocument.model_validate_json(json.dumps(doc))
        return ViewDocument.model_validate_json(doc)
    except PydanticValidationError as exc:
        err = exc.errors()[0]
        loc = tuple(err["loc"])
        if err["type"] == "json_invalid":
            raise SchemaError("", f"not valid JSON: {err['msg']}") from None
        if err["type"] == "missing":
            raise SchemaError(_pointer(loc), f"missing key {loc[-1]!r}") from None
        if err["type"] == "extra_forbidden":
            raise SchemaError(_pointer(loc), f"unknown key {loc[-1]!r}") from None
        raise SchemaError(_pointer(loc), err["msg"]) from None


def load_view(doc: str | bytes | dict) -> RIG:
    """Reconstruct an unfinalized RIG; rendered ids become internal ids."""
    view = parse_view(doc)
    try:
        rig = RIG(RepositoryInfo(**view.repo.model_dump()), BuildSystemInfo(**view.build.model_dump()))
    except MetadataError as exc:
        raise SchemaError("/" + exc.field.replace(".", "/"), str(exc)) from None

    def guarded(path: str, fn, item):
        try:
            fn(item)
        except DuplicateIdError:
            raise SchemaError(path, f"duplicate id {item.id!r}") from None
        except (InvalidNodeError, ValueError) as exc:
            raise SchemaError(path, str(exc)) from None

    for i, pm in enumerate(view.package_managers):
        guarded(f"/package_managers/{i}", rig.add_package_manager, PackageManager(**pm.model_dump()))
    for i, pkg in enumerate(view.external_packages):
        guarded(f"/external_packages/{i}", rig.add_package, ExternalPackage(**pkg.model_dump()))
    for i, ev in enumerate(view.evidence):
        locations = []
        for loc in ev.locations:
            if isinstance(loc, CallStackView):
                locations.append(CallStack(tuple(FileLine.parse(f) for f in loc.call_stack)))
            else:
                locations.append(FileLine.parse(loc))
        guarded(f"/evidence/{i}", rig.add_evidence, Evidence(ev.id, locations))

    for i, c in enumerate(view.components):
        guarded(f"/components/{i}", rig.add_node, Component(
            id=c.id,
            name=c.name,
            type=ComponentType(c.type),
            programming_language=c.programming_language,
            output_path=c.output_path,
            source_files=list(c.source_files),
            depends_on_ids=set(c.depends_on_ids),
            external_packages_ids=set(c.external_packages_ids),
            evidence_ids=set(c.evidence_ids),
        ))
    for i, a in enumerate(view.aggregators):
        guarded(f"/aggregators/{i}", rig.add_node, Aggregator(
            id=a.id, name=a.name, depends_on_ids=set(a.depends_on_ids), evidence_ids=set(a.evidence_ids),
        ))
    for i, r in enumerate(view.runners):
        guarded(f"/runners/{i}", rig.add_node, Runner(
            id=r.id,
            name=r.name,
            arguments=list(r.arguments),
            args_nodes_ids=set(r.args_nodes_ids),
            depends_on_ids=set(r.depends_on_ids),
            evidence_ids=set(r.evidence_ids),
        ))
    for i, t in enumerate(view.tests):
        guarded(f"/tests/{i}", rig.add_node, TestDefinition(
            id=t.id,
            name=t.name,
            framework=t.framework,
            test_executable_component_id=t.test_executable_component_id,
            test_components_ids=set(t.test_components_ids),
            components_being_tested_ids=set(t.components_being_tested_ids),
            source_files=list(t.source_files),
            depends_on_ids=set(t.depends_on_ids),
            evidence_ids=set(t.evidence_ids),
        ))
    return rig


def read_view(path: str | Path) -> RIG:
    """Load a view document from a file path, or ``-`` for standard input."""
    if str(path) == "-":
        return load_view(sys.stdin.buffer.read())
    return load_view(Path(path).read_bytes())

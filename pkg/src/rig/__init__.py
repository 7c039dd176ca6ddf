"""Repository Intelligence Graph: an evidence-backed model of a repository's build and test structure."""

from rig.authoring import SchemaError, load_view, read_view
from rig.complexity import ComplexityInputs, ComplexityScore, score
from rig.model import (
    RIG,
    UNKNOWN,
    Aggregator,
    BuildSystemInfo,
    CallStack,
    Component,
    ComponentType,
    Evidence,
    ExternalPackage,
    FileLine,
    PackageManager,
    RepositoryInfo,
    RIGError,
    Runner,
    TestDefinition,
)
from rig.validate import ValidationError, ValidationFailure, ValidationPolicy, finalize, validate
from rig.view import render_view, size_report

__all__ = [
    "RIG",
    "UNKNOWN",
    "Aggregator",
    "BuildSystemInfo",
    "CallStack",
    "ComplexityInputs",
    "ComplexityScore",
    "Component",
    "ComponentType",
    "Evidence",
    "ExternalPackage",
    "FileLine",
    "PackageManager",
    "RIGError",
    "RepositoryInfo",
    "Runner",
    "SchemaError",
    "TestDefinition",
    "ValidationError",
    "ValidationFailure",
    "ValidationPolicy",
    "finalize",
    "load_view",
    "read_view",
    "render_view",
    "score",
    "size_report",
    "validate",
]

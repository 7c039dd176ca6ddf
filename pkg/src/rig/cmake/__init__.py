"""CMake extractor: File API replies and CTest metadata to a RIG."""

from rig.cmake.fileapi import (
    CTestRecord,
    ExtractionError,
    ExtractionSource,
    Mode,
    TargetRecord,
    parse_codemodel,
    parse_ctest,
    prepare_query,
    read_reply,
    run_build,
    run_configure,
)
from rig.cmake.mapping import capture_tests, map_targets, vcpkg_packages
from rig.cmake.pipeline import extract

__all__ = [
    "CTestRecord",
    "ExtractionError",
    "ExtractionSource",
    "Mode",
    "TargetRecord",
    "capture_tests",
    "extract",
    "map_targets",
    "parse_codemodel",
    "parse_ctest",
    "prepare_query",
    "read_reply",
    "run_build",
    "run_configure",
    "vcpkg_packages",
]

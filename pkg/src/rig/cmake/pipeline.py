"""End-to-end extraction: File API reply (+ CTest) to a finalized RIG."""

from __future__ import annotations

from rig.cmake.fileapi import (
    ExtractionError,
    ExtractionSource,
    Mode,
    Reply,
    parse_ctest,
    read_reply,
    run_build,
    run_configure,
    run_ctest_show_only,
)
from rig.cmake.mapping import capture_tests, map_targets, vcpkg_packages
from rig.model import RIG, UNKNOWN, BuildSystemInfo, BrokenReferenceError, RepositoryInfo, RIGError, canonical_path
from rig.validate import ValidationPolicy, finalize


def default_repo(reply: Reply) -> RepositoryInfo:
    build = reply.build_root or UNKNOWN
    configure = f"cmake -S . -B {build}"
    if reply.generator:
        configure += f' -G "{reply.generator}"'
    if reply.cache.get("CMAKE_BUILD_TYPE"):
        configure += f" -DCMAKE_BUILD_TYPE={reply.cache['CMAKE_BUILD_TYPE']}"
    if reply.cache.get("CMAKE_TOOLCHAIN_FILE"):
        configure += f" -DCMAKE_TOOLCHAIN_FILE={canonical_path(reply.cache['CMAKE_TOOLCHAIN_FILE'], reply.source_root)}"
    return RepositoryInfo(
        name=reply.project_name or UNKNOWN,
        root_path=".",
        build_dir=build,
        output_dir=build,
        install_dir=reply.cache.get("CMAKE_INSTALL_PREFIX") or UNKNOWN,
        configure_cmd=configure,
        build_cmd=f"cmake --build {build}",
        test_cmd=f"ctest --test-dir {build}",
        install_cmd=f"cmake --install {build}",
    )


def default_build(reply: Reply) -> BuildSystemInfo:
    return BuildSystemInfo(
        name="cmake",
        variant=reply.generator or None,
        build_type=reply.configuration or reply.cache.get("CMAKE_BUILD_TYPE") or None,
    )


def extract(
    src: ExtractionSource,
    repo: RepositoryInfo | None = None,
    build: BuildSystemInfo | None = None,
    *,
    configure_options: list[str] | tuple[str, ...] = (),
    policy: ValidationPolicy | None = None,
    build_tests: bool = True,
) -> RIG:
    """Run every stage and return a finalized, hydrated graph.

    ``repo``/``build`` default to metadata read from the reply. Stage
    failures raise :class:`ExtractionError`; validation errors raise
    :class:`rig.validate.ValidationFailure` (fail-fast). In configure mode
    without a CTest document the project is built first (``build_tests``),
    since CTest omits the command of any test whose executable is missing.
    """
    if src.mode is Mode.CONFIGURE:
        run_configure(src, configure_options)
    reply = read_reply(src.reply_dir)

    if src.ctest_doc is not None:
        ctest = parse_ctest(src.ctest_doc)
    elif src.mode is Mode.CONFIGURE:
        if build_tests:
            run_build(src)
        ctest = parse_ctest(run_ctest_show_only(src.build_dir))
    else:
        ctest = []

    try:
        rig = RIG(repo or default_repo(reply), build or default_build(reply))
    except RIGError as exc:
        raise ExtractionError("metadata", str(exc)) from exc
    try:
        map_targets(reply.targets, rig, source_dir=src.source_dir, packages=vcpkg_packages(reply.cache))
    except RIGError as exc:
        raise ExtractionError("map", str(exc)) from exc
    try:
        capture_tests(ctest, rig, source_root=reply.source_root)
    except RIGError as exc:
        raise ExtractionError("tests", str(exc)) from exc

    finalize(rig, policy, root=src.source_dir)
    try:
        return rig.hydrate()
    except BrokenReferenceError as exc:  # pragma: no cover - finalize already checked references
        raise ExtractionError("hydrate", str(exc)) from exc

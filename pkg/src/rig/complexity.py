"""Build-oriented complexity score: raw weighted sum, normalization, bands."""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum

from rig.model import RIG, UNKNOWN, StateError

DEFAULT_MAX_RAW = 221

WEIGHTS = {
    "components": 2,
    "languages": 10,
    "packages": 3,
    "depth": 8,
    "aggregators": 5,
}
CROSS_LANGUAGE_BONUS = 15


class Band(str, Enum):
    LOW = "LOW"
    MEDIUM = "MEDIUM"
    HIGH = "HIGH"


@dataclass(frozen=True)
class ComplexityInputs:
    components: int = 0
    languages: int = 0
    packages: int = 0
    depth: int = 0
    aggregators: int = 0
    cross_language: bool = False


@dataclass(frozen=True)
class ComplexityScore:
    raw: float
    normalized: float
    band: Band

    def __str__(self) -> str:
        raw = int(self.raw) if float(self.raw).is_integer() else self.raw
        return f"raw={raw} normalized={self.normalized:.1f} band={self.band.value}"


def band_for(normalized: float) -> Band:
    if normalized < 30:
        return Band.LOW
    if normalized <= 70:
        return Band.MEDIUM
    return Band.HIGH


def raw_score(inputs: ComplexityInputs) -> int:
    score = sum(weight * getattr(inputs, name) for name, weight in WEIGHTS.items())
    return score + (CROSS_LANGUAGE_BONUS if inputs.cross_language else 0)


def normalized(raw: float, max_raw: float = DEFAULT_MAX_RAW) -> ComplexityScore:
    """Scale ``raw`` against the corpus maximum onto 0..100, one decimal, half-up."""
    if max_raw <= 0:
        raise ValueError(f"max_raw must be positive, got {max_raw}")
    if raw < 0:
        raise ValueError(f"raw score must be non-negative, got {raw}")
    exact = Decimal(str(raw)) / Decimal(str(max_raw)) * 100
    rounded = float(exact.quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))
    return ComplexityScore(raw=raw, normalized=rounded, band=band_for(rounded))


def derive_inputs(rig: RIG) -> ComplexityInputs:
    if not rig.finalized:
        raise StateError("complexity inputs need a finalized graph")
    comps = rig.components
    languages = {c.programming_language for c in comps.values()} - {UNKNOWN}
    edges = {cid: sorted(d for d in c.depends_on_ids if d in comps) for cid, c in comps.items()}
    cross = any(
        comps[cid].programming_language != comps[d].programming_language
        and UNKNOWN not in (comps[cid].programming_language, comps[d].programming_language)
        for cid, deps in edges.items()
        for d in deps
    )
    return ComplexityInputs(
        components=len(comps),
        languages=len(languages),
        packages=len(rig.external_packages),
        depth=longest_path(edges),
        aggregators=len(rig.aggregators),
        cross_language=cross,
    )


def longest_path(edges: dict[str, list[str]]) -> int:
    """Edge count of the longest directed path in a DAG (0 for no edges)."""
    memo: dict[str, int] = {}
    for start in sorted(edges):
        if start in memo:
            continue
        # iterative post-order DFS; grey marks nodes on the current path
        stack = [(start, iter(edges[start]))]
        grey = {start}
        while stack:
            node, it = stack[-1]
            for nxt in it:
                if nxt in grey:
                    raise ValueError(f"component dependency cycle through {nxt!r}")
                if nxt not in memo:
                    grey.add(nxt)
                    stack.append((nxt, iter(edges[nxt])))
                    break
            else:
                stack.pop()
                grey.discard(node)
                memo[node] = max((memo[d] + 1 for d in edges[node]), default=0)
    return max(memo.values(), default=0)


def score(rig: RIG, max_raw: float = DEFAULT_MAX_RAW) -> ComplexityScore:
    return normalized(raw_score(derive_inputs(rig)), max_raw)

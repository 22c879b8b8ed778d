"""Exact Cover instances, a brute-force oracle and a random generator.

Elements are 0-based in memory.  The text format is 1-based: a first line
``n m`` followed by one line per subset listing its elements.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidSubset, ParseError, TooLarge

BRUTE_FORCE_MAX_M = 22


@dataclass(frozen=True)
class ExactCoverInstance:
    n: int
    subsets: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        subs = tuple(tuple(sorted(set(s))) for s in self.subsets)
        if self.n < 1 or not subs:
            raise InvalidSubset("need n >= 1 and at least one subset")
        for s in subs:
            if not s:
                raise InvalidSubset("subsets must be nonempty")
            if s[0] < 0 or s[-1] >= self.n:
                raise InvalidSubset(f"subset {s} leaves [0, {self.n})")
        object.__setattr__(self, "subsets", subs)

    @property
    def m(self) -> int:
        return len(self.subsets)

    def verify(self, cover) -> bool:
        """True when ``cover`` (subset indices) hits every element exactly once."""
        counts = [0] * self.n
        for j in cover:
            for e in self.subsets[j]:
                counts[e] += 1
        return all(c == 1 for c in counts)

    def to_text(self) -> str:
        lines = [f"{self.n} {self.m}"]
        lines += [" ".join(str(e + 1) for e in s) for s in self.subsets]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ExactCoverInstance":
        lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
        try:
            n, m = (int(v) for v in lines[0].split())
            subsets = [tuple(int(v) - 1 for v in ln.split()) for ln in lines[1:]]
        except (ValueError, IndexError) as exc:
            raise ParseError(f"malformed exact cover instance: {exc}") from exc
        if len(subsets) != m:
            raise ParseError(f"header announces {m} subsets, found {len(subsets)}")
        return cls(n, tuple(subsets))

    @classmethod
    def read(cls, path) -> "ExactCoverInstance":
        return cls.from_text(Path(path).read_text())


def brute_force_cover(inst: ExactCoverInstance) -> tuple[bool, list[int] | None]:
    """Try every sub-collection; return the lexicographically first exact cover."""
    if inst.m > BRUTE_FORCE_MAX_M:
        raise TooLarge(f"m={inst.m} exceeds the brute-force limit of {BRUTE_FORCE_MAX_M}")
    masks = [sum(1 << e for e in s) for s in inst.subsets]
    full = (1 << inst.n) - 1
    best: list[int] | None = None
    for pick in range(1, 1 << inst.m):
        acc = 0
        ok = True
        for j in range(inst.m):
            if pick >> j & 1:
                if acc & masks[j]:
                    ok = False
                    break
                acc |= masks[j]
        if ok and acc == full:
            cover = [j for j in range(inst.m) if pick >> j & 1]
            if best is None or cover < best:
                best = cover
    return (best is not None), best


def random_instance(n: int, m: int, density: float, seed: int) -> ExactCoverInstance:
    """Each subset includes each element independently with probability ``density``."""
    if not 0.0 < density < 1.0:
        raise ValueError("density must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    subsets = []
    while len(subsets) < m:
        row = np.flatnonzero(rng.random(n) < density)
        if row.size:
            subsets.append(tuple(int(e) for e in row))
    return ExactCoverInstance(n, tuple(subsets))

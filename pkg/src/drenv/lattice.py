"""Finite truncation windows of Z^d."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

Site = tuple[int, ...]

MAX_SITES = 50_000_000


class BoxError(ValueError):
    """Bad box geometry, or a site outside the box it was used with."""


class ResourceError(RuntimeError):
    """A requested box exceeds the configured site budget."""


@dataclass(frozen=True)
class LatticeBox:
    """Closed integer box ``[lo_1, hi_1] x ... x [lo_d, hi_d]``.

    Array index ``i`` along axis ``a`` corresponds to coordinate ``lo[a] + i``.
    """

    lo: Site
    hi: Site

    def __post_init__(self):
        lo, hi = tuple(int(v) for v in self.lo), tuple(int(v) for v in self.hi)
        if len(lo) != len(hi) or not lo:
            raise BoxError("lo and hi must have the same positive length")
        if any(a > b for a, b in zip(lo, hi)):
            raise BoxError(f"lo {lo} not <= hi {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def check_budget(self) -> None:
        """Raise before allocating per-site arrays on an oversized box."""
        if self.size > MAX_SITES:
            raise ResourceError(f"box with {self.size} sites exceeds limit {MAX_SITES}")

    @classmethod
    def cube(cls, d: int, radius: int, center: Sequence[int] | None = None) -> "LatticeBox":
        c = tuple(center) if center is not None else (0,) * d
        return cls(tuple(x - radius for x in c), tuple(x + radius for x in c))

    @property
    def d(self) -> int:
        return len(self.lo)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(b - a + 1 for a, b in zip(self.lo, self.hi))

    @property
    def size(self) -> int:
        n = 1
        for a, b in zip(self.lo, self.hi):
            n *= b - a + 1
        return n

    def __contains__(self, x: Sequence[int]) -> bool:
        return len(x) == self.d and all(a <= v <= b for a, v, b in zip(self.lo, x, self.hi))

    def contains_box(self, other: "LatticeBox") -> bool:
        return other.lo in self and other.hi in self

    def index(self, x: Sequence[int]) -> tuple[int, ...]:
        if x not in self:
            raise BoxError(f"site {tuple(x)} outside box {self.lo}..{self.hi}")
        return tuple(v - a for v, a in zip(x, self.lo))

    def flat_index(self, x: Sequence[int]) -> int:
        return int(np.ravel_multi_index(self.index(x), self.shape))

    def site(self, idx: Sequence[int]) -> Site:
        return tuple(int(i) + a for i, a in zip(idx, self.lo))

    def sites(self) -> Iterator[Site]:
        for idx in np.ndindex(*self.shape):
            yield self.site(idx)

    def slices_in(self, outer: "LatticeBox") -> tuple[slice, ...]:
        """Index slices selecting this box inside the array of ``outer``."""
        if not outer.contains_box(self):
            raise BoxError(f"box {self} not inside {outer}")
        return tuple(slice(a - o, b - o + 1) for a, b, o in zip(self.lo, self.hi, outer.lo))

    def intersect(self, other: "LatticeBox") -> "LatticeBox | None":
        lo = tuple(max(a, b) for a, b in zip(self.lo, other.lo))
        hi = tuple(min(a, b) for a, b in zip(self.hi, other.hi))
        if any(a > b for a, b in zip(lo, hi)):
            return None
        return LatticeBox(lo, hi)

    def coords(self, axis: int) -> np.ndarray:
        """Coordinates along 0-based ``axis``."""
        return np.arange(self.lo[axis], self.hi[axis] + 1, dtype=np.int64)

    def __str__(self) -> str:
        return "x".join(f"[{a},{b}]" for a, b in zip(self.lo, self.hi))


def transverse_window(d: int, radius: int, axis: int = 1) -> LatticeBox:
    """Window on the hyperplane ``x_axis = 0``: ``[-radius, radius]`` in every other axis."""
    lo = [-radius] * d
    hi = [radius] * d
    lo[axis - 1] = hi[axis - 1] = 0
    return LatticeBox(tuple(lo), tuple(hi))

"""(E,+)-barriers: side functions, closure, clause checks and the L bound.

A side function picks one point ``y + w(y) e_1`` on every e_1-line and obeys
``w(y + k e_1) = w(y) - k``; it is stored once per line on a flat window.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cluster import BoundaryField, forward_cluster
from .lattice import BoxError, LatticeBox, Site
from .model import Direction, EdgeSet, check_condition2, derived_sets


class NoBarrierEvidence(ValueError):
    """Every entry of the boundary field is window-limited."""


class BarrierPreconditionError(ValueError):
    """The bound check was asked for on something that is not a verified barrier."""


@dataclass(frozen=True)
class SideFunction:
    window: LatticeBox  # flat along e_1
    values: np.ndarray  # w at the window representative of each line
    known: np.ndarray

    def __post_init__(self):
        if self.window.lo[0] != self.window.hi[0]:
            raise BoxError("side-function window must be flat along e_1")
        if self.values.shape != self.window.shape or self.known.shape != self.window.shape:
            raise ValueError("value/known arrays must match the window shape")

    @classmethod
    def constant(cls, window: LatticeBox, value: int = 0) -> "SideFunction":
        return cls(window, np.full(window.shape, value, dtype=np.int64),
                   np.ones(window.shape, dtype=bool))

    @classmethod
    def from_mapping(cls, window: LatticeBox, w: dict[Site, int]) -> "SideFunction":
        """Build from values at window sites; missing lines are unknown."""
        vals = np.zeros(window.shape, dtype=np.int64)
        known = np.zeros(window.shape, dtype=bool)
        for y, v in w.items():
            i = window.index(y)
            vals[i], known[i] = v, True
        return cls(window, vals, known)

    @property
    def c0(self) -> int:
        return self.window.lo[0]

    def rep(self, x: Sequence[int]) -> Site:
        return (self.c0,) + tuple(x[1:])

    def covers(self, x: Sequence[int]) -> bool:
        r = self.rep(x)
        return r in self.window and bool(self.known[self.window.index(r)])

    def __call__(self, x: Sequence[int]) -> int:
        r = self.rep(x)
        i = self.window.index(r)
        if not self.known[i]:
            raise KeyError(f"side function unknown on the line through {tuple(x)}")
        return int(self.values[i]) - (x[0] - self.c0)

    def point(self, y: Sequence[int]) -> Site:
        """The selected point of the line through ``y``."""
        r = self.rep(y)
        return (self.c0 + self(r),) + tuple(r[1:])

    def shifted(self, k: int) -> "SideFunction":
        """Side function of the configuration translated by ``k e_1``."""
        return SideFunction(self.window, self.values + k, self.known)

    def lines(self) -> list[Site]:
        return [y for y in self.window.sites() if self.known[self.window.index(y)]]


def _add(x: Sequence[int], e: Direction) -> Site:
    v = list(x)
    v[e.axis - 1] += e.sign
    return tuple(v)


def _closure_directions(spec) -> list[Direction]:
    d = spec.d
    lo_E = derived_sets(spec)[0]
    return list(EdgeSet.full(d) - lo_E - EdgeSet.of(d, ["-1"]))


def _s3_directions(d: int) -> list[Direction]:
    return list(EdgeSet.full(d) - EdgeSet.of(d, ["+1", "-1"]))


@dataclass(frozen=True)
class BarrierClosure:
    sites: frozenset[Site]
    surface: frozenset[Site]
    segments: dict[tuple[Site, Direction], tuple[Site, ...]]
    unchecked_pairs: int  # (y, e) with y + e off the window
    window_complete: bool


def barrier_closure(w: SideFunction, field) -> BarrierClosure:
    """Surface points plus the connecting segments ``S_{y,e}``.

    Segments are built for ``e`` in E minus (E_lower and -e_1).
    """
    surface = {w.point(y) for y in w.lines()}
    segments = {}
    unchecked = 0
    dirs = _closure_directions(field.spec)
    for y in w.lines():
        wy = w(y)
        for e in dirs:
            ye = _add(y, e)
            if not w.covers(ye):
                unchecked += 1
                continue
            wye = w(ye)
            if wye > wy:
                segments[(y, e)] = tuple((y[0] + k,) + tuple(y[1:]) for k in range(wy, wye))
    sites = set(surface)
    for seg in segments.values():
        sites.update(seg)
    return BarrierClosure(frozenset(sites), frozenset(surface), segments, unchecked,
                          bool(w.known.all()))


@dataclass
class BarrierCheckReport:
    s1_ok: bool
    s2_violations: list[Site] = field(default_factory=list)
    s3_violations: list[tuple[Site, str]] = field(default_factory=list)
    closure_size: int = 0
    window_complete: bool = True
    unchecked_pairs: int = 0
    closure_directions: tuple[str, ...] = ()
    s3_directions: tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return (self.s1_ok and not self.s2_violations and not self.s3_violations
                and self.window_complete)

    @property
    def verdict(self) -> str:
        if self.s2_violations or self.s3_violations or not self.s1_ok:
            return "fail"
        return "pass" if self.window_complete else "incomplete"

    def to_text(self) -> str:
        lines = [
            f"verdict: {self.verdict}",
            f"s1 (side function): {'ok' if self.s1_ok else 'FAIL'}",
            f"s2 violations: {len(self.s2_violations)}",
            f"s3 violations: {len(self.s3_violations)}",
            f"closure sites examined: {self.closure_size}",
            f"window complete: {self.window_complete}",
            f"pairs leaving the window (unchecked): {self.unchecked_pairs}",
            f"closure directions: {' '.join(self.closure_directions)}",
            f"s3 directions: {' '.join(self.s3_directions)}",
        ]
        lines += [f"  s2 {s}" for s in self.s2_violations]
        lines += [f"  s3 {s} {e}" for s, e in self.s3_violations]
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(["clause", "site", "direction"])
        for s in self.s2_violations:
            out.writerow(["s2", " ".join(map(str, s)), ""])
        for s, e in self.s3_violations:
            out.writerow(["s3", " ".join(map(str, s)), e])
        return buf.getvalue()


def verify_barrier(w: SideFunction, field) -> BarrierCheckReport:
    """Check clauses (s2) and (s3) on every line of the window.

    (s1) holds by construction.  Lines with unknown ``w`` make the window
    incomplete; neighbour lines outside the window are counted, not checked.
    """
    d = field.spec.d
    report = BarrierCheckReport(
        s1_ok=True,
        window_complete=bool(w.known.all()),
        closure_directions=tuple(str(e) for e in _closure_directions(field.spec)),
        s3_directions=tuple(str(e) for e in _s3_directions(d)),
    )
    examined = set()
    for y in w.lines():
        z = w.point(y)
        examined.add(z)
        if not field.is_omega_plus(z):
            report.s2_violations.append(z)
    for y in w.lines():
        wy = w(y)
        for e in _s3_directions(d):
            ye = _add(y, e)
            if not w.covers(ye):
                report.unchecked_pairs += 1
                continue
            wye = w(ye)
            for k in range(wy, wye):
                site = (y[0] + k,) + tuple(y[1:])
                examined.add(site)
                if not field.is_omega_plus(site):
                    report.s3_violations.append((site, f"{e} (Omega-)"))
                elif e in field.env_at(site):
                    report.s3_violations.append((site, str(e)))
    report.closure_size = len(examined)
    return report


def side_function_from_lfield(L: BoundaryField) -> tuple[SideFunction, np.ndarray]:
    """``w = L`` on stable lines; the returned mask marks those lines."""
    return _from_field(L, 0)


def side_function_from_rfield(R: BoundaryField) -> tuple[SideFunction, np.ndarray]:
    """``w = R + 1`` on stable lines (the barrier just beyond the backward cluster)."""
    return _from_field(R, 1)


def _from_field(F: BoundaryField, offset: int) -> tuple[SideFunction, np.ndarray]:
    if F.axis != 1:
        raise ValueError("side functions are defined along e_1")
    mask = F.stable.copy()
    if not mask.any():
        raise NoBarrierEvidence("no barrier evidence at this depth (no stable entries)")
    vals = np.where(mask, F.values + offset, 0).astype(np.int64)
    return SideFunction(F.window, vals, mask), mask


@dataclass
class BoundReport:
    checked: int
    violations: list[Site] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def barrier_bound_check(w: SideFunction, field, box: LatticeBox,
                        origin: Sequence[int] | None = None) -> BoundReport:
    """Every forward-cluster member on a window line must satisfy ``w(x) <= 0``."""
    spec = field.spec
    o = tuple(origin) if origin is not None else (0,) * spec.d
    if not check_condition2(spec).passed:
        raise BarrierPreconditionError("bound check needs a Condition 2 spec")
    if not w.covers(o) or w(o) > 0:
        raise BarrierPreconditionError("side function must be known at the origin with w(o) <= 0")
    rep = verify_barrier(w, field)
    if not rep.passed:
        raise BarrierPreconditionError(f"not a verified barrier (verdict {rep.verdict})")
    cl = forward_cluster(field, o, box)
    out = BoundReport(0)
    win = w.window
    for y in w.lines():
        if any(not box.lo[a] <= y[a] <= box.hi[a] for a in range(1, box.d)):
            continue
        idx = (slice(None),) + tuple(y[a] - box.lo[a] for a in range(1, box.d))
        col = np.flatnonzero(cl.membership[idx]) + box.lo[0]
        out.checked += col.size
        limit = w.c0 + int(w.values[win.index(y)])
        for x1 in col[col < limit]:
            out.violations.append((int(x1),) + tuple(y[1:]))
    return out

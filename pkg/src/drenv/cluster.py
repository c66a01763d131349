"""Forward, backward and mutual clusters on finite boxes, and their boundary fields.

Box-restricted clusters are subsets of the infinite-volume ones, so an L value
read off a box is an upper bound on the true L (and an R value a lower bound).
Boundary fields are therefore computed on a schedule of growing boxes and each
entry carries a status: ``stable`` when the two largest boxes agree and the
extreme member does not sit on the box face, ``window-limited`` otherwise.

Cluster grid format (version 1, little-endian)::

    magic   8 bytes  b"DRECLSTR"
    version u16      1
    d       u16
    kind    u8       0 forward, 1 backward, 2 mutual
    flags   u8       bit 0: touched_boundary
    ray     i8       0, +1 or -1 (ray closure direction applied)
    lo, hi, origin   3 * d int64
    nruns   u64
    first   u8       value of the first run (0/1)
    runs    nruns * u32 run lengths over the C-order ravel, alternating values
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Sequence

import numpy as np
from scipy import ndimage

from ._kernels import reach, segment_violations
from .environment import EnvBlock, EnvironmentField
from .lattice import BoxError, LatticeBox, Site, transverse_window
from .model import Direction, check_condition1, derived_sets, require

STABLE = "stable"
WINDOW_LIMITED = "window-limited"

_KINDS = ("forward", "backward", "mutual")
_MAGIC = b"DRECLSTR"
_HEADER = struct.Struct("<8sHHBBb")


@dataclass(frozen=True)
class Cluster:
    box: LatticeBox
    origin: Site
    membership: np.ndarray
    kind: str
    touched_boundary: bool
    ray: int = 0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown cluster kind {self.kind!r}")
        if self.membership.shape != self.box.shape:
            raise ValueError("membership shape does not match box")

    def __contains__(self, x: Sequence[int]) -> bool:
        return x in self.box and bool(self.membership[self.box.index(x)])

    def __len__(self) -> int:
        return int(self.membership.sum())

    def sites(self) -> list[Site]:
        lo = np.array(self.box.lo)
        return [tuple(int(v) for v in row) for row in np.argwhere(self.membership) + lo]

    def same_sites(self, other: "Cluster") -> bool:
        return self.box == other.box and bool(np.array_equal(self.membership, other.membership))


def _block(field, box: LatticeBox) -> EnvBlock:
    return field.block(box)


def _search(field: EnvironmentField | EnvBlock, origin: Sequence[int], box: LatticeBox, reverse: bool):
    origin = tuple(origin)
    if origin not in box:
        raise BoxError(f"origin {origin} outside box {box}")
    blk = _block(field, box)
    return reach(blk.arrows, box.index(origin), reverse)


def forward_cluster(field, origin: Sequence[int], box: LatticeBox) -> Cluster:
    """Sites reachable from ``origin`` by following arrows, without leaving ``box``."""
    member, touched = _search(field, origin, box, False)
    return Cluster(box, tuple(origin), member, "forward", touched)


def backward_cluster(field, origin: Sequence[int], box: LatticeBox) -> Cluster:
    """Sites of ``box`` from which ``origin`` is reachable inside ``box``."""
    member, touched = _search(field, origin, box, True)
    return Cluster(box, tuple(origin), member, "backward", touched)


def mutual_cluster(field, origin: Sequence[int], box: LatticeBox) -> Cluster:
    blk = _block(field, box)
    fwd = forward_cluster(blk, origin, box)
    bwd = backward_cluster(blk, origin, box)
    return Cluster(
        box, tuple(origin), fwd.membership & bwd.membership, "mutual",
        fwd.touched_boundary or bwd.touched_boundary,
    )


def ray_closure(cluster: Cluster, direction: int = 1) -> Cluster:
    """Union of the e_1-rays (``direction=+1``) or -e_1-rays from every member."""
    if direction not in (1, -1):
        raise ValueError("direction must be +1 or -1")
    m = cluster.membership
    if direction == 1:
        closed = np.logical_or.accumulate(m, axis=0)
    else:
        closed = np.logical_or.accumulate(m[::-1], axis=0)[::-1]
    return Cluster(cluster.box, cluster.origin, closed, cluster.kind, cluster.touched_boundary, direction)


# --- boundary fields -------------------------------------------------------


@dataclass(frozen=True)
class BoundaryField:
    """Per-line extreme shift of a cluster along ``axis``.

    ``kind == "L"``: minimum k with ``y + k e_axis`` in the forward cluster.
    ``kind == "R"``: maximum k with ``y + k e_axis`` in the backward cluster.
    Arrays are indexed like ``window`` (size 1 along ``axis``).
    """

    kind: str
    window: LatticeBox
    axis: int
    depths: tuple[int, ...]
    values: np.ndarray  # reading at the largest depth (undefined where not found)
    found: np.ndarray
    stable: np.ndarray
    per_depth: tuple[np.ndarray, ...]
    per_depth_found: tuple[np.ndarray, ...]
    origin: Site = ()

    def _rep(self, x: Sequence[int]) -> tuple[tuple[int, ...], int]:
        a = self.axis - 1
        shift = x[a] - self.window.lo[a]
        y = list(x)
        y[a] = self.window.lo[a]
        return self.window.index(y), shift

    def entry(self, x: Sequence[int]) -> tuple[int | None, str]:
        """``(value, status)`` at any site on a window line; value shifts with ``x``."""
        idx, shift = self._rep(x)
        status = STABLE if self.stable[idx] else WINDOW_LIMITED
        if not self.found[idx]:
            return None, status
        return int(self.values[idx]) - shift, status

    @property
    def coverage(self) -> float:
        return float(self.stable.mean())

    @property
    def fully_stable(self) -> bool:
        return bool(self.stable.all())

    def escape_rate(self) -> np.ndarray:
        """ΔL per Δdepth between the two largest depths (NaN where undefined).

        Positive for L (resp. R) means the boundary keeps receding as the box
        grows: the finite-window signature of an infinite boundary.
        """
        rate = np.full(self.values.shape, np.nan)
        if len(self.depths) < 2:
            return rate
        a, b = self.per_depth[-2], self.per_depth[-1]
        ok = self.per_depth_found[-2] & self.per_depth_found[-1]
        dd = self.depths[-1] - self.depths[-2]
        sign = 1 if self.kind == "L" else -1
        rate[ok] = sign * (a[ok] - b[ok]) / dd
        return rate

    def sites(self) -> list[Site]:
        return list(self.window.sites())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        tcols = [f"x{i + 1}" for i in range(self.window.d) if i != self.axis - 1]
        w.writerow(tcols + ["value", "status", "sweep_depths"] + [f"value@{D}" for D in self.depths])
        depths = ";".join(str(D) for D in self.depths)
        for y in self.window.sites():
            idx = self.window.index(y)
            value, status = self.entry(y)
            per = [
                str(int(v[idx])) if f[idx] else ""
                for v, f in zip(self.per_depth, self.per_depth_found)
            ]
            coords = [str(c) for i, c in enumerate(y) if i != self.axis - 1]
            w.writerow(coords + ["" if value is None else str(value), status, depths] + per)
        return buf.getvalue()


def depth_box(origin: Sequence[int], depth: int) -> LatticeBox:
    return LatticeBox.cube(len(origin), depth, origin)


def _check_window(window: LatticeBox, axis: int, d: int) -> None:
    if window.d != d:
        raise BoxError("window dimension mismatch")
    if not 1 <= axis <= d:
        raise BoxError(f"axis {axis} out of range")
    if window.lo[axis - 1] != window.hi[axis - 1]:
        raise BoxError("window must be flat (one site thick) along the field axis")


def _line_extremes(cluster: Cluster, window: LatticeBox, axis: int, kind: str):
    box = cluster.box
    a = axis - 1
    if any(window.lo[i] < box.lo[i] or window.hi[i] > box.hi[i] for i in range(box.d) if i != a):
        raise BoxError(f"window {window} not inside box {box} transversally")
    lines = LatticeBox(
        tuple(box.lo[a] if i == a else window.lo[i] for i in range(box.d)),
        tuple(box.hi[a] if i == a else window.hi[i] for i in range(box.d)),
    )
    sub = cluster.membership[lines.slices_in(box)]
    sub = np.moveaxis(sub, a, 0)
    found = sub.any(axis=0)
    n = sub.shape[0]
    if kind == "L":
        k = sub.argmax(axis=0)
        edge = found & (k == 0)
    else:
        k = n - 1 - sub[::-1].argmax(axis=0)
        edge = found & (k == n - 1)
    value = box.lo[a] + k - window.lo[a]
    value = np.where(found, value, 0).astype(np.int64)
    # back to window layout (size 1 along axis)
    value = np.expand_dims(value, a)
    found = np.expand_dims(found, a)
    edge = np.expand_dims(edge, a)
    return value, found, edge


def _boundary_field(kind, field, origin, window, depths, axis):
    origin = tuple(origin)
    d = len(origin)
    depths = tuple(int(D) for D in depths)
    if not depths:
        raise ValueError("depth list is empty")
    if any(b <= a for a, b in zip(depths, depths[1:])):
        raise ValueError(f"depths must be strictly increasing, got {depths}")
    _check_window(window, axis, d)
    big = _block(field, depth_box(origin, depths[-1]))
    vals, founds, edges = [], [], []
    for D in depths:
        box = depth_box(origin, D)
        cl = (forward_cluster if kind == "L" else backward_cluster)(big, origin, box)
        v, f, e = _line_extremes(cl, window, axis, kind)
        vals.append(v)
        founds.append(f)
        edges.append(e)
    if len(depths) >= 2:
        stable = founds[-1] & founds[-2] & ~edges[-1] & (vals[-1] == vals[-2])
    else:
        stable = np.zeros(window.shape, dtype=bool)
    return BoundaryField(kind, window, axis, depths, vals[-1], founds[-1], stable,
                         tuple(vals), tuple(founds), origin)


def l_field(field, origin: Sequence[int], window: LatticeBox, depths: Sequence[int], axis: int = 1) -> BoundaryField:
    """L on every line through ``window``, from forward clusters on cubes of each depth."""
    return _boundary_field("L", field, origin, window, depths, axis)


def r_field(field, origin: Sequence[int], window: LatticeBox, depths: Sequence[int], axis: int = 1) -> BoundaryField:
    """R (supremum over the backward cluster) on every line through ``window``."""
    return _boundary_field("R", field, origin, window, depths, axis)


# --- segment property -------------------------------------------------------


@dataclass
class SegmentReport:
    pairs_checked: int
    violations: list[tuple[Site, str, int, int, int]] = field(default_factory=list)  # (y, e, k1, k2, gap)

    @property
    def passed(self) -> bool:
        return not self.violations


def segment_check(cluster: Cluster) -> SegmentReport:
    """Interval property of a backward cluster across neighbouring e_1-lines.

    Whenever ``y[k1, k2]`` lies in the cluster and so do ``y + k1 e_1 + e``
    and ``y + k2 e_1 + e`` (``e`` transverse), the whole segment
    ``(y + e)[k1, k2]`` must lie in it.  Every pair of neighbouring lines
    inside the box is examined.
    """
    box, m = cluster.box, cluster.membership
    report = SegmentReport(0)
    n = m.shape[0]
    for a in range(1, box.d):
        if m.shape[a] < 2:
            continue
        for sign in (1, -1):
            src = [slice(None)] * box.d
            dst = [slice(None)] * box.d
            src[a] = slice(0, -1) if sign == 1 else slice(1, None)
            dst[a] = slice(1, None) if sign == 1 else slice(0, -1)
            X = m[tuple(src)]
            Y = m[tuple(dst)]
            shape = X.shape[1:]
            X2 = np.ascontiguousarray(X.reshape(n, -1))
            Y2 = np.ascontiguousarray(Y.reshape(n, -1))
            report.pairs_checked += X2.shape[1]
            e = Direction(a + 1, sign)
            for j, k1, k2, gap in segment_violations(X2, Y2):
                t = np.unravel_index(j, shape)
                y = [0] * box.d
                for b in range(1, box.d):
                    y[b] = int(t[b - 1]) + box.lo[b] + (1 if sign == -1 and b == a else 0)
                y[0] = box.lo[0]
                report.violations.append((tuple(y), str(e), int(k1), int(k2), int(gap)))
    return report


# --- slices and connectivity ----------------------------------------------


@dataclass(frozen=True)
class SliceResult:
    axis: int
    anchor: Site
    plane: np.ndarray  # indexed (e_1 coordinate, e_axis coordinate)
    labels: np.ndarray
    n_components: int
    touching: frozenset[int]  # component labels meeting the plane's edge

    def components(self) -> list[np.ndarray]:
        return [np.argwhere(self.labels == lab) for lab in range(1, self.n_components + 1)]


def _plane_view(m: np.ndarray, box: LatticeBox, i: int, z: Sequence[int]) -> np.ndarray:
    idx = []
    for a in range(box.d):
        if a in (0, i - 1):
            idx.append(slice(None))
        else:
            idx.append(z[a] - box.lo[a])
    return m[tuple(idx)]


def _edge_labels(labels: np.ndarray) -> frozenset[int]:
    edge = set()
    for ax in range(labels.ndim):
        for end in (0, -1):
            edge.update(np.unique(np.take(labels, end, axis=ax)).tolist())
    edge.discard(0)
    return frozenset(edge)


def slice_components(cluster: Cluster, i: int, z: Sequence[int]) -> SliceResult:
    """2-D slice through ``z`` spanned by e_1 and e_i, with its 4-connected components."""
    box = cluster.box
    if not 2 <= i <= box.d:
        raise ValueError(f"slice axis must be in 2..{box.d}, got {i}")
    if tuple(z) not in box:
        raise BoxError(f"anchor {tuple(z)} outside box")
    plane = _plane_view(cluster.membership, box, i, z)
    labels, n = ndimage.label(plane)
    return SliceResult(i, tuple(z), plane, labels, int(n), _edge_labels(labels))


@dataclass(frozen=True)
class SemiFiniteReport:
    verdict: str
    n_slices: int
    n_components: int
    open_components: list[tuple[int, Site, int]]  # (axis, anchor, size)
    touched_boundary: bool

    @property
    def semi_finite(self) -> bool:
        return self.verdict == "semi-finite-within-window"


def semi_finite_check(cluster: Cluster) -> SemiFiniteReport:
    """Are all components of all (e_1, e_i)-slices contained in the box interior?"""
    box = cluster.box
    n_slices = n_comp = 0
    open_components = []
    for i in range(2, box.d + 1):
        other = [a for a in range(box.d) if a not in (0, i - 1)]
        ranges = [range(box.lo[a], box.hi[a] + 1) for a in other]
        for combo in np.ndindex(*[len(r) for r in ranges]) if other else [()]:
            z = list(box.lo)
            for a, r, c in zip(other, ranges, combo):
                z[a] = r[c]
            res = slice_components(cluster, i, z)
            n_slices += 1
            n_comp += res.n_components
            for lab in sorted(res.touching):
                open_components.append((i, tuple(z), int((res.labels == lab).sum())))
    ok = not open_components and not cluster.touched_boundary
    return SemiFiniteReport(
        "semi-finite-within-window" if ok else "not-determined",
        n_slices, n_comp, open_components, cluster.touched_boundary,
    )


@dataclass(frozen=True)
class ComplementReport:
    n_components: int
    n_interior: int  # components not touching the box boundary
    empty: bool

    @property
    def all_touch_boundary(self) -> bool:
        return self.n_interior == 0


def complement_connectivity(cluster: Cluster) -> ComplementReport:
    comp = ~cluster.membership
    if not comp.any():
        return ComplementReport(0, 0, True)
    structure = ndimage.generate_binary_structure(comp.ndim, 1)
    labels, n = ndimage.label(comp, structure=structure)
    edge = _edge_labels(labels)
    return ComplementReport(int(n), int(n) - len(edge), False)


# --- constructive witness path ----------------------------------------------


class WitnessPathError(RuntimeError):
    def __init__(self, message: str, path: "WitnessPath"):
        super().__init__(message)
        self.path = path


@dataclass
class WitnessPath:
    sites: list[Site]
    steps: list[Site] = field(default_factory=list)
    phase_lengths: tuple[int, int] = (0, 0)

    @property
    def end(self) -> Site:
        return self.sites[-1]


def witness_path(field, target: Sequence[int], box: LatticeBox, origin: Sequence[int] | None = None) -> tuple[WitnessPath, int]:
    """Environment-consistent self-avoiding path from the origin to ``target + k e_1``.

    Phase 1 fixes the coordinates ``j >= 2`` with ``target_j >= 0`` and
    ``e_j`` in every E set: step ``e_j`` at Omega+ sites, ``-e_1`` at Omega-.
    Phase 2 fixes the rest: ``e_1`` at Omega+ sites, otherwise one step
    towards the target in the lowest unfinished axis.  Returns ``(path, k)``.
    """
    spec = field.spec
    require(check_condition1(spec))
    d = spec.d
    target = tuple(target)
    o = tuple(origin) if origin is not None else (0,) * d
    if target not in box or o not in box:
        raise BoxError("target and origin must lie in the box")
    lo_E = derived_sets(spec)[0]
    rel = [t - c for t, c in zip(target, o)]
    J = [j for j in range(2, d + 1) if rel[j - 1] >= 0 and f"+{j}" in lo_E]
    Jp = [j for j in range(2, d + 1) if j not in J]
    path = WitnessPath([o])
    cur = list(o)

    def step(axis: int, sign: int):
        e = _unit(d, axis, sign)
        here = tuple(cur)
        if Direction(axis, sign) not in field.env_at(here):
            raise AssertionError(f"step {sign:+d}e{axis} not available at {here}")
        nxt = tuple(c + v for c, v in zip(cur, e))
        if nxt not in box:
            raise WitnessPathError(f"path left the box at {nxt}", path)
        cur[:] = nxt
        path.sites.append(nxt)
        path.steps.append(e)

    for j in J:
        while cur[j - 1] != target[j - 1]:
            if field.is_omega_plus(tuple(cur)):
                step(j, 1)
            else:
                step(1, -1)
    n1 = len(path.steps)
    while True:
        todo = [j for j in Jp if cur[j - 1] != target[j - 1]]
        if not todo:
            break
        if field.is_omega_plus(tuple(cur)):
            step(1, 1)
        else:
            j = todo[0]
            step(j, 1 if target[j - 1] > cur[j - 1] else -1)
    path.phase_lengths = (n1, len(path.steps) - n1)
    return path, cur[0] - target[0]


def _unit(d: int, axis: int, sign: int) -> Site:
    v = [0] * d
    v[axis - 1] = sign
    return tuple(v)


# --- grid export ------------------------------------------------------------


def write_cluster_grid(cluster: Cluster, fh: BinaryIO) -> None:
    box, d = cluster.box, cluster.box.d
    flat = cluster.membership.ravel().astype(np.int8)
    change = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds).astype("<u4")
    fh.write(_HEADER.pack(_MAGIC, 1, d, _KINDS.index(cluster.kind),
                          int(cluster.touched_boundary), cluster.ray))
    fh.write(np.array(box.lo + box.hi + cluster.origin, dtype="<i8").tobytes())
    fh.write(struct.pack("<QB", runs.size, int(flat[0]) if flat.size else 0))
    fh.write(runs.tobytes())


def read_cluster_grid(fh: BinaryIO) -> Cluster:
    head = fh.read(_HEADER.size)
    if len(head) != _HEADER.size:
        raise ValueError("truncated cluster grid header")
    magic, version, d, kind, flags, ray = _HEADER.unpack(head)
    if magic != _MAGIC:
        raise ValueError("not a cluster grid file")
    if version != 1:
        raise ValueError(f"unsupported cluster grid version {version}")
    try:
        coords = np.frombuffer(fh.read(24 * d), dtype="<i8").tolist()
        lo, hi, origin = tuple(coords[:d]), tuple(coords[d:2 * d]), tuple(coords[2 * d:])
        nruns, first = struct.unpack("<QB", fh.read(9))
        runs = np.frombuffer(fh.read(4 * nruns), dtype="<u4")
    except (struct.error, ValueError) as exc:
        raise ValueError(f"truncated cluster grid: {exc}") from None
    if runs.size != nruns or len(lo) != d:
        raise ValueError("truncated cluster grid")
    values = (np.arange(nruns) + first) % 2
    box = LatticeBox(lo, hi)
    flat = np.repeat(values.astype(bool), runs.astype(np.int64))
    if flat.size != box.size:
        raise ValueError("run lengths do not cover the box")
    return Cluster(box, origin, flat.reshape(box.shape), _KINDS[kind], bool(flags & 1), ray)


def save_cluster(cluster: Cluster, path) -> None:
    with open(path, "wb") as fh:
        write_cluster_grid(cluster, fh)


def load_cluster(path) -> Cluster:
    with open(path, "rb") as fh:
        return read_cluster_grid(fh)


__all__ = [
    "Cluster", "BoundaryField", "LatticeBox", "forward_cluster", "backward_cluster",
    "mutual_cluster", "ray_closure", "l_field", "r_field", "slice_components",
    "semi_finite_check", "complement_connectivity", "witness_path", "transverse_window",
    "save_cluster", "load_cluster", "depth_box",
]

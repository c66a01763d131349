"""Static images of clusters: binary PPM (P6) and a minimal SVG subset.

2D layout: column = x_2 (left to right), row = x_1 (bottom to top).  The
second grid of an overlay is blended at 50% over the first.

3D layout: integer oblique projection.  For a preset ``(a, b, c)`` of axes
(``a`` up, ``b`` right, ``c`` receding up-right at 45 degrees),
``col = i_b + i_c`` and ``row = (n_a-1-i_a) + (n_c-1-i_c)``.  Voxels are
painted far to near; depth fades the colour toward the background.
Members on the section plane ``x_1 = plane`` use the dark shade.

Image size depends only on the box and ``scale``; bytes depend only on the
inputs, so renders are golden-hashable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .cluster import Cluster, load_cluster

PALETTES = {
    "default": {"bg": (255, 255, 255), "first": (66, 110, 196), "second": (232, 120, 36),
                "section": (20, 32, 80)},
    "gray": {"bg": (255, 255, 255), "first": (150, 150, 150), "second": (40, 40, 40),
             "section": (0, 0, 0)},
}

# (up, right, receding) axes, 0-based
PRESETS_3D = ((0, 1, 2), (1, 2, 0), (2, 0, 1))


class RenderError(ValueError):
    pass


@dataclass
class RenderJob:
    inputs: list  # 1-2 Cluster objects or cluster-grid paths
    output: str | Path
    mode: str = "2d"  # "2d" or "3d"
    palette: str = "default"
    scale: int = 1
    plane: int | None = None  # x_1 coordinate of the 3D section
    preset: int = 0
    fmt: str | None = None  # "ppm" / "svg"; default from the output suffix
    clusters: list[Cluster] = field(init=False, default_factory=list)

    def __post_init__(self):
        if not 1 <= len(self.inputs) <= 2:
            raise RenderError("a render job takes one or two cluster grids")
        if self.palette not in PALETTES:
            raise RenderError(f"unknown palette {self.palette!r}")
        if self.scale < 1:
            raise RenderError("scale must be a positive integer")
        self.clusters = [c if isinstance(c, Cluster) else load_cluster(c) for c in self.inputs]
        if len(self.clusters) == 2 and self.clusters[0].box != self.clusters[1].box:
            raise RenderError("overlay needs grids over identical boxes")
        if self.fmt is None:
            self.fmt = Path(self.output).suffix.lstrip(".").lower() or "ppm"
        if self.fmt not in ("ppm", "svg"):
            raise RenderError(f"unsupported image format {self.fmt!r}")


def _ppm(rgb: np.ndarray, scale: int) -> bytes:
    if scale > 1:
        rgb = rgb.repeat(scale, axis=0).repeat(scale, axis=1)
    h, w, _ = rgb.shape
    return f"P6\n{w} {h}\n255\n".encode() + np.ascontiguousarray(rgb, dtype=np.uint8).tobytes()


def _hex(c) -> str:
    return "#%02x%02x%02x" % tuple(int(v) for v in c)


def _runs(mask: np.ndarray):
    """Horizontal runs ``(row, col, length)`` of true cells, row-major."""
    for r in range(mask.shape[0]):
        row = mask[r].astype(np.int8)
        edges = np.flatnonzero(np.diff(np.concatenate(([0], row, [0]))))
        for a, b in zip(edges[::2], edges[1::2]):
            yield r, int(a), int(b - a)


def _svg(width: int, height: int, scale: int, bg, layers) -> bytes:
    """``layers``: list of (mask, colour, opacity)."""
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width * scale}" height="{height * scale}" '
        f'viewBox="0 0 {width} {height}" shape-rendering="crispEdges">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="{_hex(bg)}"/>',
    ]
    for mask, colour, opacity in layers:
        if not mask.any():
            continue
        attr = f' fill-opacity="{opacity}"' if opacity != 1 else ""
        out.append(f'<g fill="{_hex(colour)}"{attr}>')
        for r, c, n in _runs(mask):
            out.append(f'<rect x="{c}" y="{r}" width="{n}" height="1"/>')
        out.append("</g>")
    out.append("</svg>")
    return ("\n".join(out) + "\n").encode()


def _plane_image(m: np.ndarray) -> np.ndarray:
    # rows top-to-bottom = decreasing x_1
    return m[::-1, :]


def render_2d(job: RenderJob) -> bytes:
    """Render a d=2 grid (or overlay of two); writes ``job.output`` and returns the bytes."""
    if job.mode != "2d":
        raise RenderError("render_2d needs a 2d job")
    for c in job.clusters:
        if c.box.d != 2:
            raise RenderError(f"2D render needs d=2 grids, got d={c.box.d}")
    pal = PALETTES[job.palette]
    masks = [_plane_image(c.membership) for c in job.clusters]
    h, w = masks[0].shape
    if job.fmt == "svg":
        layers = [(masks[0], pal["first"], 1)]
        if len(masks) == 2:
            layers.append((masks[1], pal["second"], 0.5))
        data = _svg(w, h, job.scale, pal["bg"], layers)
    else:
        rgb = np.empty((h, w, 3), dtype=np.int32)
        rgb[:] = pal["bg"]
        rgb[masks[0]] = pal["first"]
        if len(masks) == 2:
            top = np.asarray(pal["second"], dtype=np.int32)
            rgb[masks[1]] = (rgb[masks[1]] + top) // 2
        data = _ppm(rgb, job.scale)
    Path(job.output).write_bytes(data)
    return data


def _fade(colour, bg, depth: int, n: int) -> np.ndarray:
    """Colour moved toward the background by up to half as ``depth`` goes n-1 -> far."""
    t = 256 - (128 * depth) // max(n - 1, 1)
    c, b = np.asarray(colour, dtype=np.int64), np.asarray(bg, dtype=np.int64)
    return (b * (256 - t) + c * t) >> 8


def project_3d(cluster: Cluster, plane: int, preset: int = 0, palette: str = "default") -> np.ndarray:
    """RGB projection (unscaled) with the section plane in the dark shade."""
    if cluster.box.d != 3:
        raise RenderError(f"3D section render needs a d=3 grid, got d={cluster.box.d}")
    box = cluster.box
    if not box.lo[0] <= plane <= box.hi[0]:
        raise RenderError(f"section plane x_1={plane} outside box {box}")
    if preset not in range(len(PRESETS_3D)):
        raise RenderError(f"preset must be 0..{len(PRESETS_3D) - 1}")
    pal = PALETTES[palette]
    a, b, c = PRESETS_3D[preset]
    m = np.transpose(cluster.membership, (a, b, c))
    section = np.zeros(cluster.membership.shape, dtype=bool)
    section[plane - box.lo[0]] = True
    section = np.transpose(section, (a, b, c))
    na, nb, nc = m.shape
    H, W = na + nc - 1, nb + nc - 1
    rgb = np.empty((H, W, 3), dtype=np.int64)
    rgb[:] = pal["bg"]
    for k in range(nc - 1, -1, -1):
        layer = m[:, :, k]
        if not layer.any():
            continue
        r0, c0 = nc - 1 - k, k
        view = rgb[r0:r0 + na, c0:c0 + nb]
        img = layer[::-1]
        sec = (layer & section[:, :, k])[::-1]
        view[img & ~sec] = _fade(pal["first"], pal["bg"], k, nc)
        view[sec] = pal["section"]
    return rgb


def render_3d_section(job: RenderJob) -> bytes:
    """Axonometric view of a d=3 grid with the ``x_1 = plane`` section highlighted."""
    if job.mode != "3d":
        raise RenderError("render_3d_section needs a 3d job")
    if len(job.clusters) != 1:
        raise RenderError("3D section render takes exactly one grid")
    if job.plane is None:
        raise RenderError("3D section render needs a plane coordinate")
    rgb = project_3d(job.clusters[0], job.plane, job.preset, job.palette)
    if job.fmt == "svg":
        pal = PALETTES[job.palette]
        layers = []
        flat = rgb.reshape(-1, 3)
        colours = np.unique(flat, axis=0)
        for col in colours:
            if tuple(col) == tuple(pal["bg"]):
                continue
            layers.append((np.all(rgb == col, axis=2), tuple(col), 1))
        data = _svg(rgb.shape[1], rgb.shape[0], job.scale, pal["bg"], layers)
    else:
        data = _ppm(rgb, job.scale)
    Path(job.output).write_bytes(data)
    return data


def render(job: RenderJob) -> bytes:
    return render_2d(job) if job.mode == "2d" else render_3d_section(job)


def image_size(box_shape: Sequence[int], scale: int, mode: str, preset: int = 0) -> tuple[int, int]:
    """(width, height) in pixels."""
    if mode == "2d":
        return box_shape[1] * scale, box_shape[0] * scale
    a, b, c = PRESETS_3D[preset]
    n = box_shape
    return (n[b] + n[c] - 1) * scale, (n[a] + n[c] - 1) * scale

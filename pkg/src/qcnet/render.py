"""Frame rendering of trace snapshots as plain-text grids or graymaps.

Cells are rasterized as discs of radius R in world coordinates (z ignored).
Only cells holding something are drawn: Transitable cells in discrete mode,
and cells with a positive level in continuous mode, shaded by level over the
largest level seen anywhere in the trace. Turnstiles get an outline ring.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .circulation import CONTINUOUS, Trace
from .errors import NoSnapshots
from .net_core import NetTopology, Turnstile

ASCII = "ascii"
PGM = "pgm"
FORMATS = (ASCII, PGM)

# Darkness ramp for plain-text frames, from empty to full.
ASCII_RAMP = " .:-=+*%#"
OUTLINE = -1.0

# Graymap levels: filled cells use 0 (full) .. FILL_LIGHTEST, so even a tiny
# level stays visibly apart from the outline and the background.
BACKGROUND_GRAY = 255
OUTLINE_GRAY = 230
FILL_LIGHTEST = 200


@dataclass(frozen=True)
class Raster:
    """World-to-pixel mapping shared by every frame of a run."""

    x0: float
    y1: float
    scale: float  # pixels per world unit
    width: int
    height: int

    @classmethod
    def fit(cls, net: NetTopology, px_per_radius: float) -> Raster:
        R = net.radius
        xs = [c.position.x for c in net.cells] or [0.0]
        ys = [c.position.y for c in net.cells] or [0.0]
        scale = px_per_radius / R
        x0, x1 = min(xs) - R, max(xs) + R
        y0, y1 = min(ys) - R, max(ys) + R
        width = max(1, math.ceil((x1 - x0) * scale))
        height = max(1, math.ceil((y1 - y0) * scale))
        return cls(x0, y1, scale, width, height)

    def disc(self, x: float, y: float, r: float):
        """Row/column index arrays and pixel-center distances for a disc."""
        cx = (x - self.x0) * self.scale
        cy = (self.y1 - y) * self.scale
        rp = r * self.scale
        c0, c1 = max(0, int(cx - rp)), min(self.width, int(math.ceil(cx + rp)) + 1)
        r0, r1 = max(0, int(cy - rp)), min(self.height, int(math.ceil(cy + rp)) + 1)
        rows, cols = np.mgrid[r0:r1, c0:c1]
        d = np.hypot(cols + 0.5 - cx, rows + 0.5 - cy)
        keep = d <= rp
        return rows[keep], cols[keep], d[keep] / self.scale


def _intensities(snapshot, mode: str, vmax: float) -> np.ndarray:
    if mode == CONTINUOUS:
        lv = np.asarray(snapshot, dtype=float)
        return lv / vmax if vmax > 0 else np.zeros_like(lv)
    return np.array([0.0 if p is None else 1.0 for p in snapshot])


def rasterize(net: NetTopology, raster: Raster, intensity: np.ndarray) -> np.ndarray:
    """Grid of values in [0, 1] (0 = background); turnstile rings are ``OUTLINE``
    unless the pixel is already filled."""
    img = np.zeros((raster.height, raster.width))
    R = net.radius
    ring = 1.0 / raster.scale  # one pixel wide
    for c in net.cells:
        rows, cols, d = raster.disc(c.position.x, c.position.y, R)
        v = intensity[c.id]
        if v > 0:
            img[rows, cols] = np.maximum(img[rows, cols], v)
        if isinstance(c.kind, Turnstile):
            edge = d >= R - ring
            r, k = rows[edge], cols[edge]
            empty = img[r, k] <= 0
            img[r[empty], k[empty]] = OUTLINE
    return img


def to_pgm(img: np.ndarray) -> bytes:
    fill = np.round(FILL_LIGHTEST * (1.0 - np.clip(img, 0, 1)))
    gray = np.where(img > 0, fill, BACKGROUND_GRAY)
    gray = np.where(img == OUTLINE, OUTLINE_GRAY, gray)
    head = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode()
    return head + gray.astype(np.uint8).tobytes()


def to_ascii(img: np.ndarray) -> str:
    top = len(ASCII_RAMP) - 1
    idx = np.ceil(np.clip(img, 0, 1) * top).astype(int)
    chars = np.array(list(ASCII_RAMP))[idx]
    chars[img == OUTLINE] = "o"
    return "\n".join("".join(row) for row in chars) + "\n"


def read_pgm(data: bytes) -> np.ndarray:
    parts = data.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary graymap")
    w, h = map(int, parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(h, w)


def render_frames(
    net: NetTopology,
    trace: Trace,
    format: str = PGM,
    out_dir: str = ".",
    px_per_radius: float | None = None,
) -> list:
    """Write one frame per snapshot into ``out_dir``; returns the paths."""
    if format not in FORMATS:
        raise ValueError(f"unknown frame format {format!r}")
    if not trace.snapshots:
        raise NoSnapshots("trace holds no snapshots")
    if px_per_radius is None:
        px_per_radius = 8.0 if format == PGM else 2.0
    raster = Raster.fit(net, px_per_radius)
    vmax = 0.0
    if trace.mode == CONTINUOUS:
        vmax = max(max(snap, default=0.0) for _, snap in trace.snapshots)
    os.makedirs(out_dir, exist_ok=True)
    ext = "pgm" if format == PGM else "txt"
    paths = []
    for step, snap in trace.snapshots:
        img = rasterize(net, raster, _intensities(snap, trace.mode, vmax))
        path = os.path.join(out_dir, f"frame_{step:06d}.{ext}")
        if format == PGM:
            with open(path, "wb") as fh:
                fh.write(to_pgm(img))
        else:
            with open(path, "w") as fh:
                fh.write(to_ascii(img))
        paths.append(path)
    return paths

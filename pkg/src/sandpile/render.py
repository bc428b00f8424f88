"""Binary PPM (P6) pictures of a stabilized state.

One pixel per lattice site over the bounding box of the visited set, x₁ to
the right and x₂ upwards.  In d ≥ 3 the picture is the slice through the
origin spanned by the first two axes.  Convert with e.g.
``convert run.ppm run.png`` when a PNG is needed.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .engine import SandpileState

WHITE = (255, 255, 255)
GRAY = (160, 160, 160)
RED = (220, 0, 0)
LIGHT_BLUE = np.array([198, 219, 255], dtype=np.float64)
DARK_BLUE = np.array([8, 24, 120], dtype=np.float64)


def _plane(values: np.ndarray) -> np.ndarray:
    """The x₁x₂-plane through the origin of a centred d-dimensional array."""
    mid = (values.shape[0] - 1) // 2
    return values[(slice(None), slice(None)) + (mid,) * (values.ndim - 2)]


def colour_array(s: SandpileState) -> np.ndarray:
    """RGB image (rows, cols, 3) of uint8, top row = largest x₂."""
    vis = _plane(s.visited.values)
    mu = _plane(s.mu.values)
    core = _plane(s.u.values) > s.kappa
    source = _plane(s.mu0.values) > 0

    rows, cols = np.nonzero(vis)
    if rows.size == 0:
        rows = cols = np.array([(vis.shape[0] - 1) // 2])
    box = (slice(rows.min(), rows.max() + 1), slice(cols.min(), cols.max() + 1))
    vis, mu, core, source = vis[box], mu[box], core[box], source[box]

    img = np.empty(vis.shape + (3,), dtype=np.uint8)
    img[:] = WHITE
    img[vis] = GRAY
    carrying = vis & ~core & (mu > 0)
    t = np.clip(mu[carrying] / s.m, 0.0, 1.0)[:, None]
    img[carrying] = np.rint(LIGHT_BLUE + t * (DARK_BLUE - LIGHT_BLUE)).astype(np.uint8)
    img[source] = RED
    # array axis 0 is x₁ and axis 1 is x₂; put x₁ across and x₂ up
    return np.ascontiguousarray(np.flip(np.swapaxes(img, 0, 1), axis=0))


def write_ppm(path: str | Path, rgb: np.ndarray) -> None:
    h, w, _ = rgb.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.astype(np.uint8).tobytes())


def read_ppm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        fields.append(data[pos:end])
        pos = end
    if fields[0] != b"P6":
        raise ValueError(f"{path}: not a binary PPM")
    w, h = int(fields[1]), int(fields[2])
    pixels = np.frombuffer(data[pos + 1:pos + 1 + 3 * w * h], dtype=np.uint8)
    return pixels.reshape(h, w, 3)


def render_image(s: SandpileState, path: str | Path) -> None:
    try:
        write_ppm(path, colour_array(s))
    except OSError as exc:
        raise OSError(f"cannot write image to {path}: {exc}") from exc

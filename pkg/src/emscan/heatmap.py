"""Heatmap container, normalization, file formats, and camera overlay.

Maps are stored as a (el_pixels, az_pixels) float64 grid with elevation
ascending along axis 0 and azimuth ascending along axis 1; invalid cells
are NaN plus a boolean mask.  Exports flip vertically so the top image row
is the maximum elevation.  All writers are deterministic: identical maps
produce identical bytes.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np
from PIL import Image


def axis_centers_deg(range_deg: tuple[float, float], pixels: int) -> list[float]:
    """Pixel-center angles: endpoints-inclusive spread, midpoint when single."""
    lo, hi = range_deg
    if pixels == 1:
        return [(lo + hi) / 2.0]
    step = (hi - lo) / (pixels - 1)
    return [lo + i * step for i in range(pixels)]


@dataclass(frozen=True)
class Heatmap:
    values: np.ndarray
    az_range_deg: tuple[float, float]
    el_range_deg: tuple[float, float]
    band: str = ""
    invalid: np.ndarray | None = None
    normalized: bool = False

    def __post_init__(self) -> None:
        if self.values.ndim != 2:
            raise ValueError("heatmap values must be 2-D (el, az)")
        if not self.az_range_deg[0] < self.az_range_deg[1]:
            raise ValueError("az range must satisfy min < max")
        if not self.el_range_deg[0] < self.el_range_deg[1]:
            raise ValueError("el range must satisfy min < max")
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        mask = self.invalid
        if mask is None:
            mask = ~np.isfinite(values)
        else:
            mask = np.asarray(mask, dtype=bool) | ~np.isfinite(values)
            if mask.shape != values.shape:
                raise ValueError("invalid mask shape must match values")
        object.__setattr__(self, "invalid", mask)

    @property
    def el_pixels(self) -> int:
        return self.values.shape[0]

    @property
    def az_pixels(self) -> int:
        return self.values.shape[1]

    def az_centers_deg(self) -> list[float]:
        return axis_centers_deg(self.az_range_deg, self.az_pixels)

    def el_centers_deg(self) -> list[float]:
        return axis_centers_deg(self.el_range_deg, self.el_pixels)


def argmax_pixel(heatmap: Heatmap) -> tuple[int, int]:
    """(i_az, i_el) of the hottest valid cell; first in (el, az) order on ties."""
    masked = np.where(heatmap.invalid, -np.inf, heatmap.values)
    if not np.isfinite(masked).any():
        raise ValueError("heatmap has no valid cells")
    flat = int(np.argmax(masked))
    i_el, i_az = np.unravel_index(flat, masked.shape)
    return (int(i_az), int(i_el))


def normalize_clip(
    maps: list[Heatmap], reference_index: int = 0
) -> list[Heatmap]:
    """Affine-map every grid to [0, 1] using the reference map's valid range.

    Values outside the reference range clip to 0 or 1, which is what makes
    side-by-side runs comparable.  A flat reference (max equals min) maps
    every valid cell to 0.5 with a warning.  Invalid cells render as 0.
    """
    if not maps:
        raise ValueError("no maps given")
    if not 0 <= reference_index < len(maps):
        raise ValueError("reference index out of range")
    shape = maps[reference_index].values.shape
    if any(m.values.shape != shape for m in maps):
        raise ValueError("all maps must share one grid shape")
    ref = maps[reference_index]
    ref_valid = ref.values[~ref.invalid]
    if ref_valid.size == 0:
        raise ValueError("reference map has no valid cells")
    lo = float(ref_valid.min())
    hi = float(ref_valid.max())
    out: list[Heatmap] = []
    for m in maps:
        if hi == lo:
            scaled = np.full(m.values.shape, 0.5)
        else:
            scaled = np.clip((m.values - lo) / (hi - lo), 0.0, 1.0)
        scaled = np.where(m.invalid, 0.0, scaled)
        out.append(replace(m, values=scaled, invalid=m.invalid, normalized=True))
    if hi == lo:
        warnings.warn("flat reference map; normalized output is constant 0.5")
    return out


def _meta(heatmap: Heatmap) -> str:
    return json.dumps(
        {
            "az_range_deg": list(heatmap.az_range_deg),
            "el_range_deg": list(heatmap.el_range_deg),
            "band": heatmap.band,
            "normalized": heatmap.normalized,
            "rows": "top = max elevation",
        },
        separators=(", ", ": "),
    )


# ---------------------------------------------------------------------------
# CSV (lossless, works for raw dBm or normalized maps)
# ---------------------------------------------------------------------------


def export_csv(heatmap: Heatmap, path: str) -> None:
    """Angle-labelled CSV; floats via repr so read_csv round-trips exactly."""
    az = heatmap.az_centers_deg()
    el = heatmap.el_centers_deg()
    lines = [f"# {_meta(heatmap)}"]
    lines.append(",".join(["el_deg"] + [repr(a) for a in az]))
    for i_el in range(heatmap.el_pixels - 1, -1, -1):
        row = [repr(el[i_el])]
        for i_az in range(heatmap.az_pixels):
            if heatmap.invalid[i_el, i_az]:
                row.append("nan")
            else:
                row.append(repr(float(heatmap.values[i_el, i_az])))
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path: str) -> Heatmap:
    """Read a map written by :func:`export_csv`."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or not lines[0].startswith("# "):
        raise ValueError(f"{path}: missing metadata comment line")
    meta = json.loads(lines[0][2:])
    rows = [ln.split(",") for ln in lines[1:] if ln]
    n_az = len(rows[0]) - 1
    data_rows = rows[1:]
    values = np.full((len(data_rows), n_az), np.nan)
    for r, row in enumerate(data_rows):
        if len(row) != n_az + 1:
            raise ValueError(f"{path}: ragged row {r + 2}")
        values[r] = [float(v) for v in row[1:]]
    values = np.flipud(values)  # file is top = max el; storage is ascending
    return Heatmap(
        values=values,
        az_range_deg=tuple(meta["az_range_deg"]),
        el_range_deg=tuple(meta["el_range_deg"]),
        band=meta.get("band", ""),
        normalized=bool(meta.get("normalized", False)),
    )


# ---------------------------------------------------------------------------
# 16-bit PGM
# ---------------------------------------------------------------------------


def export_pgm(heatmap: Heatmap, path: str) -> None:
    """Binary 16-bit PGM (big-endian, maxval 65535) of a normalized map."""
    if not heatmap.normalized:
        raise ValueError("PGM export requires a normalized map")
    filled = np.where(heatmap.invalid, 0.0, heatmap.values)
    levels = np.rint(np.flipud(filled) * 65535.0).astype(np.uint16)
    header = (
        f"P5\n# {_meta(heatmap)}\n"
        f"{heatmap.az_pixels} {heatmap.el_pixels}\n65535\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(levels.astype(">u2").tobytes())


def read_pgm(path: str) -> Heatmap:
    """Read a map written by :func:`export_pgm`."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if not blob.startswith(b"P5\n"):
        raise ValueError(f"{path}: not a binary PGM")
    pos = 3
    meta = None
    tokens: list[bytes] = []
    while len(tokens) < 3:
        end = blob.index(b"\n", pos)
        line = blob[pos:end]
        pos = end + 1
        if line.startswith(b"#"):
            if meta is None:
                meta = json.loads(line[1:].decode("ascii"))
            continue
        tokens.extend(line.split())
    width, height, maxval = (int(t) for t in tokens[:3])
    if maxval != 65535:
        raise ValueError(f"{path}: expected 16-bit maxval, got {maxval}")
    if meta is None:
        raise ValueError(f"{path}: missing metadata comment")
    data = np.frombuffer(blob, dtype=">u2", count=width * height, offset=pos)
    values = np.flipud(data.reshape((height, width)).astype(np.float64) / 65535.0)
    return Heatmap(
        values=values,
        az_range_deg=tuple(meta["az_range_deg"]),
        el_range_deg=tuple(meta["el_range_deg"]),
        band=meta.get("band", ""),
        normalized=True,
    )


# ---------------------------------------------------------------------------
# False-color rendering
# ---------------------------------------------------------------------------


def load_colormap(path: str | None = None) -> np.ndarray:
    """256x3 uint8 colormap, dark-to-bright with monotone luminance."""
    if path is None:
        source = resources.files("emscan.data").joinpath("colormap_default.csv")
        text = source.read_text(encoding="utf-8")
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise ValueError(f"colormap rows need 3 channels, got {line!r}")
        rows.append([int(p) for p in parts])
    table = np.asarray(rows, dtype=np.int64)
    if table.shape != (256, 3) or table.min() < 0 or table.max() > 255:
        raise ValueError("colormap must be 256 rows of 8-bit R,G,B")
    return table.astype(np.uint8)


def _render_rgb(heatmap: Heatmap, colormap: np.ndarray | None) -> np.ndarray:
    if not heatmap.normalized:
        raise ValueError("rendering requires a normalized map")
    table = load_colormap() if colormap is None else colormap
    filled = np.where(heatmap.invalid, 0.0, heatmap.values)
    idx = np.rint(np.flipud(filled) * 255.0).astype(np.int64)
    return table[np.clip(idx, 0, 255)]


def export_png(
    heatmap: Heatmap,
    path: str,
    colormap: np.ndarray | None = None,
    scale: int = 1,
    resample: str = "nearest",
) -> None:
    """False-color PNG with an optional integer upscale."""
    if scale < 1:
        raise ValueError("scale must be >= 1")
    modes = {
        "nearest": Image.Resampling.NEAREST,
        "bilinear": Image.Resampling.BILINEAR,
    }
    if resample not in modes:
        raise ValueError(f"resample must be one of {sorted(modes)}")
    rgb = _render_rgb(heatmap, colormap)
    img = Image.fromarray(rgb, mode="RGB")
    if scale > 1:
        img = img.resize(
            (rgb.shape[1] * scale, rgb.shape[0] * scale), modes[resample]
        )
    img.save(path, format="PNG")


# ---------------------------------------------------------------------------
# Camera overlay
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OverlaySpec:
    """Rectilinear camera model for projecting a map onto a photo."""

    width_px: int
    height_px: int
    hfov_deg: float
    vfov_deg: float
    boresight_az_deg: float = 0.0
    boresight_el_deg: float = 0.0
    alpha: float = 0.6

    def __post_init__(self) -> None:
        if self.width_px < 1 or self.height_px < 1:
            raise ValueError("image dimensions must be positive")
        if not 0 < self.hfov_deg <= 180 or not 0 < self.vfov_deg <= 180:
            raise ValueError("fields of view must be in (0, 180] degrees")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")


def overlay_xy(spec: OverlaySpec, az_deg: float, el_deg: float) -> tuple[float, float]:
    """Image coordinates of a direction; may land outside the frame."""
    x = spec.width_px * (az_deg - spec.boresight_az_deg + spec.hfov_deg / 2) / spec.hfov_deg
    y = spec.height_px * (spec.boresight_el_deg + spec.vfov_deg / 2 - el_deg) / spec.vfov_deg
    return (x, y)


def _sample_bilinear(filled: np.ndarray, fx: np.ndarray, fy: np.ndarray) -> np.ndarray:
    x0 = np.clip(np.floor(fx).astype(int), 0, filled.shape[1] - 1)
    y0 = np.clip(np.floor(fy).astype(int), 0, filled.shape[0] - 1)
    x1 = np.clip(x0 + 1, 0, filled.shape[1] - 1)
    y1 = np.clip(y0 + 1, 0, filled.shape[0] - 1)
    wx = np.clip(fx - x0, 0.0, 1.0)
    wy = np.clip(fy - y0, 0.0, 1.0)
    top = filled[y0, x0] * (1 - wx) + filled[y0, x1] * wx
    bot = filled[y1, x0] * (1 - wx) + filled[y1, x1] * wx
    return top * (1 - wy) + bot * wy


def overlay(
    heatmap: Heatmap,
    photo: "str | Image.Image | np.ndarray",
    spec: OverlaySpec,
    path: str,
    colormap: np.ndarray | None = None,
) -> None:
    """Alpha-blend a normalized map over a camera photo and save a PNG.

    Photo pixels whose direction falls outside the map's angular coverage
    are left untouched; a camera field of view disjoint from the map is an
    error.
    """
    if not heatmap.normalized:
        raise ValueError("overlay requires a normalized map")
    if isinstance(photo, str):
        img = Image.open(photo).convert("RGB")
    elif isinstance(photo, Image.Image):
        img = photo.convert("RGB")
    else:
        img = Image.fromarray(np.asarray(photo, dtype=np.uint8), mode="RGB")
    if img.size != (spec.width_px, spec.height_px):
        raise ValueError(
            f"photo is {img.size[0]}x{img.size[1]} but the overlay spec says "
            f"{spec.width_px}x{spec.height_px}"
        )
    base = np.asarray(img, dtype=np.float64)

    # Direction of each photo pixel center under the rectilinear model.
    xs = np.arange(spec.width_px) + 0.5
    ys = np.arange(spec.height_px) + 0.5
    az = spec.boresight_az_deg - spec.hfov_deg / 2 + xs * spec.hfov_deg / spec.width_px
    el = spec.boresight_el_deg + spec.vfov_deg / 2 - ys * spec.vfov_deg / spec.height_px
    az_grid, el_grid = np.meshgrid(az, el)

    az_lo, az_hi = heatmap.az_range_deg
    el_lo, el_hi = heatmap.el_range_deg
    inside = (
        (az_grid >= az_lo)
        & (az_grid <= az_hi)
        & (el_grid >= el_lo)
        & (el_grid <= el_hi)
    )
    if not inside.any():
        raise ValueError(
            f"camera field az [{az.min():g}, {az.max():g}] / "
            f"el [{el.min():g}, {el.max():g}] does not intersect map coverage "
            f"az [{az_lo:g}, {az_hi:g}] / el [{el_lo:g}, {el_hi:g}]"
        )

    centers_az = np.asarray(heatmap.az_centers_deg())
    centers_el = np.asarray(heatmap.el_centers_deg())
    if heatmap.az_pixels > 1:
        fx = (az_grid - centers_az[0]) / (centers_az[-1] - centers_az[0])
        fx = fx * (heatmap.az_pixels - 1)
    else:
        fx = np.zeros_like(az_grid)
    if heatmap.el_pixels > 1:
        fy = (el_grid - centers_el[0]) / (centers_el[-1] - centers_el[0])
        fy = fy * (heatmap.el_pixels - 1)
    else:
        fy = np.zeros_like(el_grid)

    filled = np.where(heatmap.invalid, 0.0, heatmap.values)
    sampled = _sample_bilinear(filled, fx, fy)
    table = load_colormap() if colormap is None else colormap
    idx = np.clip(np.rint(sampled * 255.0).astype(np.int64), 0, 255)
    color = table[idx].astype(np.float64)

    blended = base.copy()
    mix = (1.0 - spec.alpha) * base[inside] + spec.alpha * color[inside]
    blended[inside] = mix
    out = np.clip(np.rint(blended), 0, 255).astype(np.uint8)
    Image.fromarray(out, mode="RGB").save(path, format="PNG")

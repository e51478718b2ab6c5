"""Deterministic image preprocessing and stochastic training augmentation.

Pipeline order: grayscale -> fast non-local-means (10, 7, 21) ->
CLAHE (clip 5, 8x8 tiles) -> +30 brightness shift with clipping.

Images are uint8 arrays, row-major, values in [0, 255]. NLM and CLAHE are
implemented here (their internal invariants are tested directly);
geometric augmentation and file I/O go through OpenCV.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import cv2
import numpy as np

from .errors import ConfigurationError


def _check_gray(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.ndim != 2 or img.dtype != np.uint8:
        raise ConfigurationError(
            f"expected 2-D uint8 grayscale image, got shape {img.shape}, dtype {img.dtype}"
        )
    return img


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """Luminance conversion 0.299 R + 0.587 G + 0.114 B, rounded to nearest.

    Single-channel input passes through bitwise unchanged. The input is
    expected in RGB channel order.
    """
    img = np.asarray(img)
    if img.size == 0:
        raise ConfigurationError("empty image buffer")
    if img.ndim == 2:
        return img.astype(np.uint8, copy=False)
    if img.ndim == 3 and img.shape[2] == 3:
        rgb = img.astype(np.float64)
        y = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
        return np.clip(np.rint(y), 0, 255).astype(np.uint8)
    raise ConfigurationError(f"unsupported image shape {img.shape}")


# ---------------------------------------------------------------------------
# Non-local means
# ---------------------------------------------------------------------------

def _box_sum(arr: np.ndarray, radius: int) -> np.ndarray:
    """Sum over a (2r+1)^2 window via an integral image; same-shape output.

    `arr` must already be padded by `radius` on each side relative to the
    desired output.
    """
    ii = np.zeros((arr.shape[0] + 1, arr.shape[1] + 1))
    ii[1:, 1:] = arr.cumsum(axis=0).cumsum(axis=1)
    k = 2 * radius + 1
    return (ii[k:, k:] - ii[:-k, k:] - ii[k:, :-k] + ii[:-k, :-k])


def nlm_denoise(img: np.ndarray, h: float = 10.0, template: int = 7,
                search: int = 21) -> np.ndarray:
    """Fast non-local means with patch-similarity weights.

    Each pixel becomes the weighted average of pixels in its search
    window; weights are exp(-d2 / h^2) where d2 is the mean squared
    template-patch difference. Borders use mirror padding.
    """
    img = _check_gray(img)
    if template % 2 == 0 or search % 2 == 0:
        raise ConfigurationError("template and search window sizes must be odd")
    tr = template // 2
    sr = search // 2
    pad = sr + tr
    x = np.pad(img.astype(np.float64), pad, mode="reflect")
    hh, ww = img.shape
    patch_pixels = float(template * template)

    num = np.zeros((hh, ww))
    den = np.zeros((hh, ww))
    base = x[pad - tr:pad + hh + tr, pad - tr:pad + ww + tr]
    for dy in range(-sr, sr + 1):
        for dx in range(-sr, sr + 1):
            shifted = x[pad + dy - tr:pad + dy + hh + tr,
                        pad + dx - tr:pad + dx + ww + tr]
            d2 = _box_sum((base - shifted) ** 2, tr) / patch_pixels
            w = np.exp(-d2 / (h * h))
            num += w * x[pad + dy:pad + dy + hh, pad + dx:pad + dx + ww]
            den += w
    out = num / den
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# CLAHE
# ---------------------------------------------------------------------------

def _tile_edges(size: int, tiles: int) -> np.ndarray:
    return np.rint(np.linspace(0, size, tiles + 1)).astype(int)


def _clip_histogram(hist: np.ndarray, limit: int) -> np.ndarray:
    """Clip bins at `limit` and redistribute the excess uniformly.

    Integer arithmetic throughout so total mass is conserved exactly.
    """
    clipped = np.minimum(hist, limit)
    excess = int(hist.sum() - clipped.sum())
    clipped += excess // 256
    clipped[: excess % 256] += 1
    return clipped


def clahe(img: np.ndarray, clip_limit: float = 5.0, tiles: tuple = (8, 8)) -> np.ndarray:
    """Contrast-limited adaptive histogram equalization.

    Per-tile 256-bin histograms, clipped at clip_limit * tile_pixels / 256
    with uniform redistribution, CDF mappings, and bilinear interpolation
    of the mappings between tile centers.
    """
    img = _check_gray(img)
    ty, tx = tiles
    hh, ww = img.shape
    if hh < ty or ww < tx:
        raise ConfigurationError(
            f"image {hh}x{ww} smaller than tile grid {ty}x{tx}"
        )
    ye = _tile_edges(hh, ty)
    xe = _tile_edges(ww, tx)

    luts = np.zeros((ty, tx, 256), dtype=np.float64)
    cy = np.zeros(ty)
    cx = np.zeros(tx)
    for i in range(ty):
        cy[i] = (ye[i] + ye[i + 1] - 1) / 2.0
        for j in range(tx):
            cx[j] = (xe[j] + xe[j + 1] - 1) / 2.0
            tile = img[ye[i]:ye[i + 1], xe[j]:xe[j + 1]]
            tp = tile.size
            if tp == 0:
                raise ConfigurationError(f"degenerate CLAHE tile ({i}, {j})")
            hist = np.bincount(tile.ravel(), minlength=256)
            limit = max(1, int(clip_limit * tp / 256.0))
            hist = _clip_histogram(hist, limit)
            cdf = hist.cumsum()
            luts[i, j] = np.rint(cdf * 255.0 / tp)

    # bilinear blend of tile mappings between tile centers
    rows = np.arange(hh, dtype=np.float64)
    cols = np.arange(ww, dtype=np.float64)
    i1 = np.clip(np.searchsorted(cy, rows), 0, ty - 1)
    i0 = np.clip(i1 - 1, 0, ty - 1)
    j1 = np.clip(np.searchsorted(cx, cols), 0, tx - 1)
    j0 = np.clip(j1 - 1, 0, tx - 1)
    denom_y = np.where(cy[i1] > cy[i0], cy[i1] - cy[i0], 1.0)
    denom_x = np.where(cx[j1] > cx[j0], cx[j1] - cx[j0], 1.0)
    wy = np.clip((rows - cy[i0]) / denom_y, 0.0, 1.0)
    wx = np.clip((cols - cx[j0]) / denom_x, 0.0, 1.0)

    v = img
    out = ((1 - wy)[:, None] * (1 - wx)[None, :] * luts[i0[:, None], j0[None, :], v]
           + (1 - wy)[:, None] * wx[None, :] * luts[i0[:, None], j1[None, :], v]
           + wy[:, None] * (1 - wx)[None, :] * luts[i1[:, None], j0[None, :], v]
           + wy[:, None] * wx[None, :] * luts[i1[:, None], j1[None, :], v])
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def shift_clip(img: np.ndarray, delta: int = 30) -> np.ndarray:
    """Per-pixel saturating brightness shift."""
    img = _check_gray(img)
    return np.clip(img.astype(np.int16) + delta, 0, 255).astype(np.uint8)


def preprocess(img: np.ndarray) -> np.ndarray:
    """grayscale -> NLM(10, 7, 21) -> CLAHE(5) -> +30 shift."""
    gray = to_grayscale(img)
    return shift_clip(clahe(nlm_denoise(gray)))


def preprocess_stages(img: np.ndarray) -> dict:
    """The four comparison panels: original / CLAHE-only / denoise-only / both."""
    gray = to_grayscale(img)
    denoised = nlm_denoise(gray)
    return {
        "original": gray,
        "clahe": clahe(gray),
        "denoise": denoised,
        "both": shift_clip(clahe(denoised)),
    }


def comparison_sheet(img: np.ndarray, border: int = 4) -> np.ndarray:
    """2x2 panel sheet (original, CLAHE, denoise, both) for visual checks."""
    st = preprocess_stages(img)
    panels = [st["original"], st["clahe"], st["denoise"], st["both"]]
    hh, ww = panels[0].shape
    sheet = np.full((2 * hh + 3 * border, 2 * ww + 3 * border), 255, dtype=np.uint8)
    for idx, p in enumerate(panels):
        r, c = divmod(idx, 2)
        y = border + r * (hh + border)
        x = border + c * (ww + border)
        sheet[y:y + hh, x:x + ww] = p
    return sheet


# ---------------------------------------------------------------------------
# Augmentation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AugmentConfig:
    """Geometric training-time augmentation ranges. Defaults are the
    documented choices; each transform is skipped when its range is the
    identity."""

    rotation_deg: float = 15.0
    flip_prob: float = 0.5
    crop_scale: tuple = (0.7, 1.0)
    zoom_out_max: float = 1.5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ConfigurationError("flip probability must be in [0, 1]")
        lo, hi = self.crop_scale
        if not 0.0 < lo <= hi <= 1.0:
            raise ConfigurationError("crop scale range must satisfy 0 < lo <= hi <= 1")
        if self.zoom_out_max < 1.0:
            raise ConfigurationError("zoom-out max factor must be >= 1")
        if self.rotation_deg < 0.0:
            raise ConfigurationError("rotation range must be >= 0")

    @classmethod
    def disabled(cls, seed: int = 0) -> "AugmentConfig":
        return cls(rotation_deg=0.0, flip_prob=0.0, crop_scale=(1.0, 1.0),
                   zoom_out_max=1.0, seed=seed)


def augment_rng(seed: int, sample_id: str) -> np.random.Generator:
    """Per-sample rng stream so parallel processing order never matters."""
    return np.random.default_rng([seed, zlib.crc32(sample_id.encode("utf-8"))])


def augment(img: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator) -> np.ndarray:
    """Zoom-out, random resized crop, rotation, horizontal flip, in order.

    Output dimensions always equal input dimensions.
    """
    img = _check_gray(img)
    hh, ww = img.shape
    out = img

    if cfg.zoom_out_max > 1.0:
        f = rng.uniform(1.0, cfg.zoom_out_max)
        ch, cw = int(round(hh * f)), int(round(ww * f))
        canvas = np.zeros((ch, cw), dtype=np.uint8)
        oy = rng.integers(0, ch - hh + 1)
        ox = rng.integers(0, cw - ww + 1)
        canvas[oy:oy + hh, ox:ox + ww] = out
        out = canvas

    lo, hi = cfg.crop_scale
    if lo < 1.0 or out.shape != (hh, ww):
        # scale is an area fraction; aspect ratio is preserved so the crop
        # always fits and never degenerates below 1x1
        side = np.sqrt(rng.uniform(lo, hi))
        crop_h = max(1, int(round(out.shape[0] * side)))
        crop_w = max(1, int(round(out.shape[1] * side)))
        y = rng.integers(0, out.shape[0] - crop_h + 1)
        x = rng.integers(0, out.shape[1] - crop_w + 1)
        out = cv2.resize(out[y:y + crop_h, x:x + crop_w], (ww, hh),
                         interpolation=cv2.INTER_LINEAR)

    if cfg.rotation_deg > 0.0:
        angle = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg)
        mat = cv2.getRotationMatrix2D(((ww - 1) / 2.0, (hh - 1) / 2.0), angle, 1.0)
        out = cv2.warpAffine(out, mat, (ww, hh), flags=cv2.INTER_LINEAR,
                             borderMode=cv2.BORDER_CONSTANT, borderValue=0)

    if cfg.flip_prob > 0.0 and rng.random() < cfg.flip_prob:
        out = out[:, ::-1].copy()

    return out


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

def read_image(path) -> np.ndarray:
    """Read PNG/JPEG; color images come back in RGB channel order."""
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise ConfigurationError(f"cannot decode image: {path}")
    if raw.ndim == 3:
        if raw.shape[2] == 4:
            raw = cv2.cvtColor(raw, cv2.COLOR_BGRA2BGR)
        raw = cv2.cvtColor(raw, cv2.COLOR_BGR2RGB)
    return raw


def write_image(path, img: np.ndarray) -> None:
    if not cv2.imwrite(str(path), img):
        raise OSError(f"cannot write image: {path}")

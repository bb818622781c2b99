"""Render buffers and image-space helpers shared by both renderers."""

from dataclasses import dataclass

import numpy as np

PSNR_CAP = 99.0


@dataclass
class RenderOutput:
    rgb: np.ndarray      # (H, W, 3) in [0, 1]
    depth: np.ndarray    # (H, W), ray distance, 0 where nothing was hit
    normal: np.ndarray   # (H, W, 3), unit where covered
    mask: np.ndarray     # (H, W) in [0, 1]
    weights: np.ndarray = None        # (H, W, K) compositing weights (volume renderer only)
    transmittance: np.ndarray = None  # (H, W) residual transmittance (volume renderer only)

    def channel(self, name):
        return getattr(self, name)


CHANNELS = {"rgb": 3, "depth": None, "normal": 3, "mask": None}


def check_adjoint(adjoint, height, width):
    """Validate an adjoint dict ``{channel: array}`` against the image size."""
    out = {}
    for name, arr in adjoint.items():
        if name not in CHANNELS:
            raise ValueError(f"unknown render channel {name!r}")
        arr = np.asarray(arr, dtype=np.float64)
        want = (height, width) if CHANNELS[name] is None else (height, width, CHANNELS[name])
        if arr.shape != want:
            raise ValueError(f"adjoint for {name!r} has shape {arr.shape}, expected {want}")
        out[name] = arr
    return out


def normal_image(normal, mask, background=1.0):
    """Map unit normals to colours ``(n + 1) / 2`` over a constant background."""
    m = mask[..., None]
    return m * (normal + 1.0) / 2.0 + (1.0 - m) * background


def lambertian(normal, mask, light_dir, albedo=None, ambient=0.3, background=1.0):
    """Shade with a directional light; albedo defaults to white."""
    l = np.asarray(light_dir, dtype=np.float64)
    l = l / np.linalg.norm(l)
    ndl = np.clip(normal @ l, 0.0, None)[..., None]
    shade = ambient + (1.0 - ambient) * ndl
    base = np.ones_like(normal) if albedo is None else albedo
    m = mask[..., None]
    return m * base * shade + (1.0 - m) * background


def psnr(a, b, cap=PSNR_CAP):
    mse = float(np.mean((np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)) ** 2))
    if mse <= 10.0 ** (-cap / 10.0):
        return cap
    return min(cap, 10.0 * np.log10(1.0 / mse))


def mask_iou(a, b, threshold=0.5):
    ma, mb = np.asarray(a) > threshold, np.asarray(b) > threshold
    union = np.logical_or(ma, mb).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(ma, mb).sum() / union)


def strip(images):
    """Concatenate equally sized images left to right."""
    return np.concatenate(list(images), axis=1)

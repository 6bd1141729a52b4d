"""Image containers, color conversions, and file I/O shared by every module.

Images are numpy arrays in channel-first layout: RGB is float (3, H, W) with
values in [0, 1], grayscale is (1, H, W). Lab images are float64 (3, H, W)
with planes (L, a, b), L in [0, 100].
"""

import os

import cv2
import numpy as np
from PIL import Image

# sRGB -> XYZ linear transform (IEC 61966-2-1 primaries, D65). The white
# point is taken as the exact row sums of the matrix so that (1, 1, 1)
# maps to a = b = 0 identically rather than to within matrix rounding.
_XYZ_FROM_RGB = np.array(
    [
        [0.41239080, 0.35758434, 0.18048079],
        [0.21263901, 0.71516868, 0.07219232],
        [0.01933082, 0.11919478, 0.95053215],
    ]
)
_RGB_FROM_XYZ = np.linalg.inv(_XYZ_FROM_RGB)
_WHITE = _XYZ_FROM_RGB.sum(axis=1)

# BT.601 luma weights.
_GRAY_WEIGHTS = np.array([0.299, 0.587, 0.114])

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp")


class ImageLoadError(IOError):
    """Raised when a file cannot be read or decoded as an image."""


def load_image(path, size=256):
    """Load an 8-bit raster as a (3, size, size) float32 RGB array in [0, 1].

    Non-RGB inputs (grayscale, palette, RGBA) are converted to RGB; grayscale
    is replicated across the three channels. The image is bilinearly resized
    (no antialias) unless it already has the target size. ``size=None``
    keeps the native resolution.
    """
    try:
        with Image.open(path) as im:
            im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.uint8)
    except Exception as exc:
        raise ImageLoadError(f"cannot read image file {path!r}: {exc}") from exc
    img = arr.astype(np.float32) / 255.0
    if size is not None and (img.shape[0] != size or img.shape[1] != size):
        img = cv2.resize(img, (size, size), interpolation=cv2.INTER_LINEAR)
    img = np.clip(img, 0.0, 1.0)
    return np.ascontiguousarray(img.transpose(2, 0, 1))


def save_image(img, path):
    """Write a (3, H, W) or (1, H, W) float array in [0, 1] as an 8-bit PNG.

    Values are clamped to [0, 1] and quantized with round-half-up.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] not in (1, 3):
        raise ValueError(f"expected (3, H, W) or (1, H, W) image, got {arr.shape}")
    arr = np.clip(arr, 0.0, 1.0)
    quantized = np.floor(arr * 255.0 + 0.5).astype(np.uint8)
    if quantized.shape[0] == 1:
        pil = Image.fromarray(quantized[0], mode="L")
    else:
        pil = Image.fromarray(quantized.transpose(1, 2, 0), mode="RGB")
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    pil.save(path)


def resize_rgb(img, height, width):
    """Bilinear resize of a (3, H, W) float image to (3, height, width)."""
    hwc = np.asarray(img, dtype=np.float32).transpose(1, 2, 0)
    out = cv2.resize(hwc, (width, height), interpolation=cv2.INTER_LINEAR)
    return np.clip(out, 0.0, 1.0).transpose(2, 0, 1)


def validate_rgb(img):
    """Check the RGB image contract: (3, H, W), finite, values in [0, 1]."""
    arr = np.asarray(img)
    if arr.ndim != 3 or arr.shape[0] != 3:
        raise ValueError(f"expected (3, H, W) RGB image, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("image contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("image values outside [0, 1]")
    return arr


def _srgb_to_linear(c):
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def _linear_to_srgb(c):
    c = np.clip(c, 0.0, None)
    return np.where(c <= 0.0031308, c * 12.92, 1.055 * c ** (1.0 / 2.4) - 0.055)


def _lab_f(t):
    delta = 6.0 / 29.0
    return np.where(t > delta**3, np.cbrt(t), t / (3.0 * delta**2) + 4.0 / 29.0)


def _lab_f_inv(u):
    delta = 6.0 / 29.0
    return np.where(u > delta, u**3, 3.0 * delta**2 * (u - 4.0 / 29.0))


def rgb_to_lab(img):
    """Convert a (3, H, W) RGB image in [0, 1] to CIELab (D65).

    Returns a float64 (3, H, W) array with planes (L, a, b).
    """
    rgb = np.asarray(img, dtype=np.float64)
    linear = _srgb_to_linear(rgb)
    xyz = np.einsum("ij,jhw->ihw", _XYZ_FROM_RGB, linear)
    f = _lab_f(xyz / _WHITE[:, None, None])
    lightness = 116.0 * f[1] - 16.0
    a = 500.0 * (f[0] - f[1])
    b = 200.0 * (f[1] - f[2])
    return np.stack([lightness, a, b])


def lab_to_rgb(lab):
    """Inverse of :func:`rgb_to_lab`; output clamped to [0, 1]."""
    lab = np.asarray(lab, dtype=np.float64)
    fy = (lab[0] + 16.0) / 116.0
    fx = fy + lab[1] / 500.0
    fz = fy - lab[2] / 200.0
    xyz = np.stack([_lab_f_inv(fx), _lab_f_inv(fy), _lab_f_inv(fz)])
    xyz *= _WHITE[:, None, None]
    linear = np.einsum("ij,jhw->ihw", _RGB_FROM_XYZ, xyz)
    return np.clip(_linear_to_srgb(linear), 0.0, 1.0)


def rgb_to_gray(img):
    """BT.601 luma of a (3, H, W) RGB image, returned as (1, H, W)."""
    arr = np.asarray(img, dtype=np.float64)
    gray = np.einsum("c,chw->hw", _GRAY_WEIGHTS, arr)
    return gray[None]


def list_images(directory):
    """Sorted paths of raster files directly inside ``directory``."""
    names = sorted(os.listdir(directory))
    return [
        os.path.join(directory, n)
        for n in names
        if n.lower().endswith(IMAGE_EXTENSIONS)
    ]

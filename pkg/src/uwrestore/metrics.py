"""No-reference and paired image quality metrics plus keypoint counters.

Color statistics run on CIELab with L normalized by 100 and chroma and the
opponent axes by their conventional 8-bit scales, which puts the scores in
the customary ranges for underwater imagery.
"""

from dataclasses import dataclass

import cv2
import numpy as np
from scipy import ndimage

from . import imaging

UCIQE_WEIGHTS = (0.468, 0.2745, 0.2576)

_CHROMA_SCALE = 128.0
_AXIS_SCALE = 255.0
_SAT_EPS = 1e-6
_SPAN_EPS = 1e-6


@dataclass
class UciqeBreakdown:
    sigma_c: float  # chroma standard deviation
    con_l: float  # luminance contrast (top vs bottom percentile means)
    mu_s: float  # mean saturation
    uciqe: float


@dataclass
class LabUBreakdown:
    d_o: float  # distance of the mean chromaticity from the origin
    d_a: float  # 1st-99th percentile span along a
    d_b: float  # 1st-99th percentile span along b
    a_l: float  # mean lightness
    u: float  # sqrt(d_o) / (a_l * d_a * d_b); lower is better
    degenerate: bool  # a span collapsed and was floored


def uciqe(img):
    """Weighted sum of chroma spread, luminance contrast, and mean saturation."""
    lab = imaging.rgb_to_lab(img)
    lightness = lab[0] / 100.0
    chroma = np.hypot(lab[1], lab[2]) / _CHROMA_SCALE
    sigma_c = float(np.std(chroma))
    k = int(np.ceil(0.01 * lightness.size))
    ordered = np.sort(lightness.ravel())
    con_l = float(np.mean(ordered[-k:]) - np.mean(ordered[:k]))
    mu_s = float(np.mean(chroma / (lightness + _SAT_EPS)))
    c1, c2, c3 = UCIQE_WEIGHTS
    return UciqeBreakdown(
        sigma_c=sigma_c,
        con_l=con_l,
        mu_s=mu_s,
        uciqe=c1 * sigma_c + c2 * con_l + c3 * mu_s,
    )


def lab_u_index(img):
    """Concentration of the Lab color distribution around the origin.

    Low values mean a bright image whose chromaticity is centered near
    neutral but spans widely along both opponent axes.
    """
    lab = imaging.rgb_to_lab(img)
    a_l = float(np.mean(lab[0]))
    mean_a = float(np.mean(lab[1]))
    mean_b = float(np.mean(lab[2]))
    d_o = float(np.hypot(mean_a, mean_b) / _AXIS_SCALE)

    degenerate = False
    spans = []
    for axis in (lab[1], lab[2]):
        lo, hi = np.percentile(axis, [1.0, 99.0])
        span = (hi - lo) / _AXIS_SCALE
        if span < _SPAN_EPS:
            span = _SPAN_EPS
            degenerate = True
        spans.append(float(span))
    d_a, d_b = spans

    numerator = np.sqrt(d_o)
    u = 0.0 if numerator == 0.0 else float(numerator / (a_l * d_a * d_b))
    return LabUBreakdown(d_o=d_o, d_a=d_a, d_b=d_b, a_l=a_l, u=u, degenerate=degenerate)


def _gaussian_kernel(size=11, sigma=1.5):
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    kernel = np.outer(g, g)
    return kernel / kernel.sum()


def ssim(a, b, window_size=11, sigma=1.5, k1=0.01, k2=0.03):
    """Single-scale SSIM on grayscale, Gaussian-windowed, dynamic range 1.

    Statistics are taken over fully interior windows only, as in the
    original formulation.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    x = imaging.rgb_to_gray(a)[0]
    y = imaging.rgb_to_gray(b)[0]
    kernel = _gaussian_kernel(window_size, sigma)
    pad = window_size // 2

    def filt(img):
        out = ndimage.correlate(img, kernel, mode="constant")
        return out[pad:-pad, pad:-pad]

    mu_x = filt(x)
    mu_y = filt(y)
    var_x = filt(x * x) - mu_x**2
    var_y = filt(y * y) - mu_y**2
    cov = filt(x * y) - mu_x * mu_y
    c1 = k1**2
    c2 = k2**2
    score = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
        (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    )
    return float(score.mean())


def rms_contrast(img):
    """Standard deviation of the 8-bit-scaled grayscale."""
    gray = imaging.rgb_to_gray(img)[0] * 255.0
    return float(np.std(gray))


_LAPLACIAN_KERNEL = np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], dtype=np.float64)


def laplacian_variance(img):
    """Variance of the 4-neighbor Laplacian of the 8-bit-scaled grayscale."""
    gray = imaging.rgb_to_gray(img)[0] * 255.0
    response = ndimage.convolve(gray, _LAPLACIAN_KERNEL, mode="reflect")
    return float(np.var(response))


def _to_gray8(img):
    gray = imaging.rgb_to_gray(img)[0]
    return np.floor(np.clip(gray, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def feature_counts(img):
    """(sift, harris): detected SIFT keypoints and Harris corners.

    Harris corners are responses above 1% of the maximum response after
    3x3 non-maximum suppression (k = 0.04).
    """
    gray8 = _to_gray8(img)
    sift = cv2.SIFT_create()
    keypoints = sift.detect(gray8, None)

    response = cv2.cornerHarris(gray8.astype(np.float32), 2, 3, 0.04)
    max_response = response.max()
    if max_response <= 0:
        return len(keypoints), 0
    local_max = ndimage.maximum_filter(response, size=3)
    corners = (response >= local_max) & (response > 0.01 * max_response)
    return len(keypoints), int(corners.sum())


def sift_match_count(a, b, ratio=0.75):
    """Descriptor matches between two images passing the ratio test."""
    sift = cv2.SIFT_create()
    _, desc_a = sift.detectAndCompute(_to_gray8(a), None)
    _, desc_b = sift.detectAndCompute(_to_gray8(b), None)
    if desc_a is None or desc_b is None or len(desc_b) < 2:
        return 0
    matcher = cv2.BFMatcher(cv2.NORM_L2)
    pairs = matcher.knnMatch(desc_a, desc_b, k=2)
    good = 0
    for pair in pairs:
        if len(pair) == 2 and pair[0].distance < ratio * pair[1].distance:
            good += 1
    return good


NO_REFERENCE_FIELDS = (
    "sigma_c",
    "con_l",
    "mu_s",
    "uciqe",
    "d_o",
    "d_a",
    "d_b",
    "a_l",
    "u",
    "contrast",
    "laplacian_var",
    "sift",
    "harris",
)

PAIRED_FIELDS = ("ssim", "sift_matches")


def no_reference_row(img):
    """All single-image metric fields for one image, as a flat dict."""
    q = uciqe(img)
    lu = lab_u_index(img)
    sift, harris = feature_counts(img)
    return {
        "sigma_c": q.sigma_c,
        "con_l": q.con_l,
        "mu_s": q.mu_s,
        "uciqe": q.uciqe,
        "d_o": lu.d_o,
        "d_a": lu.d_a,
        "d_b": lu.d_b,
        "a_l": lu.a_l,
        "u": lu.u,
        "contrast": rms_contrast(img),
        "laplacian_var": laplacian_variance(img),
        "sift": sift,
        "harris": harris,
    }


def paired_row(img, restored):
    return {
        "ssim": ssim(img, restored),
        "sift_matches": sift_match_count(img, restored),
    }

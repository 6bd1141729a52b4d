"""Regenerate the shipped desk-scale sample set (samples/).

Provenance: every image is produced procedurally by this script; nothing is
downloaded or derived from third-party datasets. The terrestrial domain is
a set of seeded synthetic indoor-style scenes (gradients, blocks, texture).
The underwater domain applies the package's own forward degradation model,
with plausible water coefficients and a smooth random depth field, to a
disjoint set of synthetic scenes. The two domains never share a base scene,
so they stay unpaired.

Run from the repository root:  python scripts/generate_samples.py
"""

import os
import sys

import numpy as np
import torch
from scipy import ndimage

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from uwrestore import imaging, physics

SIZE = 128
N_PER_DOMAIN = 32


def synthetic_scene(rng, size=SIZE):
    """A colorful scene: gradient background, random blocks/disks, texture."""
    top = rng.uniform(0.2, 0.9, size=3)
    bottom = rng.uniform(0.1, 0.8, size=3)
    ramp = np.linspace(0.0, 1.0, size)[None, :, None]
    img = top[:, None, None] * (1 - ramp) + bottom[:, None, None] * ramp
    img = np.broadcast_to(img, (3, size, size)).copy()

    yy, xx = np.mgrid[0:size, 0:size]
    for _ in range(rng.integers(5, 10)):
        color = rng.uniform(0.05, 0.95, size=3)
        if rng.random() < 0.5:
            x0, y0 = rng.integers(0, size - 8, size=2)
            w, h = rng.integers(8, size // 2, size=2)
            region = (slice(y0, min(y0 + h, size)), slice(x0, min(x0 + w, size)))
            img[:, region[0], region[1]] = color[:, None, None]
        else:
            cx, cy = rng.integers(8, size - 8, size=2)
            r = rng.integers(4, size // 4)
            disk = (yy - cy) ** 2 + (xx - cx) ** 2 <= r**2
            img[:, disk] = color[:, None]

    texture = ndimage.gaussian_filter(rng.standard_normal((3, size, size)), 1.0)
    img = img + 0.08 * texture
    return np.clip(img, 0.0, 1.0)


def water_params(rng):
    """Coefficients biased the way coastal water absorbs: red dies first."""
    return physics.DegradationParams(
        t_d=(rng.uniform(0.45, 0.7), rng.uniform(0.75, 0.92), rng.uniform(0.8, 0.95)),
        t_b=(rng.uniform(0.5, 0.75), rng.uniform(0.7, 0.9), rng.uniform(0.75, 0.93)),
        b_inf=(rng.uniform(0.6, 0.7), rng.uniform(0.75, 0.95), rng.uniform(0.72, 0.92)),
    )


def smooth_depth(rng, size=SIZE, low=0.5, high=5.5):
    field = ndimage.gaussian_filter(rng.standard_normal((size, size)), size / 8)
    field = (field - field.min()) / (field.max() - field.min() + 1e-12)
    return (low + (high - low) * field)[None]


def main(root="samples"):
    terr_dir = os.path.join(root, "terrestrial")
    uw_dir = os.path.join(root, "underwater")
    os.makedirs(terr_dir, exist_ok=True)
    os.makedirs(uw_dir, exist_ok=True)

    for i in range(N_PER_DOMAIN):
        rng = np.random.default_rng(1000 + i)
        imaging.save_image(
            synthetic_scene(rng), os.path.join(terr_dir, f"terr_{i:02d}.png")
        )

    for i in range(N_PER_DOMAIN):
        rng = np.random.default_rng(2000 + i)
        scene = synthetic_scene(rng)
        params = water_params(rng).validate()
        depth = smooth_depth(rng)
        t_d, t_b, b_inf = params.tensors(dtype=torch.float64)
        degraded = physics.degrade(
            torch.from_numpy(scene),
            torch.from_numpy(depth),
            t_d,
            t_b,
            b_inf,
        )
        imaging.save_image(degraded.numpy(), os.path.join(uw_dir, f"uw_{i:02d}.png"))

    print(f"wrote {N_PER_DOMAIN}+{N_PER_DOMAIN} images under {root}/")


if __name__ == "__main__":
    main()

"""Unpaired two-domain image loading and synthetic degraded-pair generation.

The two domains are plain directories of rasters with no correspondence
between them; each epoch shuffles the domains independently and drops the
remainder so every batch is full.
"""

import logging
from dataclasses import dataclass

import numpy as np
import torch

from . import imaging, physics

log = logging.getLogger(__name__)


@dataclass
class UnpairedDataset:
    underwater_paths: list
    terrestrial_paths: list
    image_size: int = 256

    @classmethod
    def from_dirs(cls, underwater_dir, terrestrial_dir, image_size=256):
        ds = cls(
            underwater_paths=imaging.list_images(underwater_dir),
            terrestrial_paths=imaging.list_images(terrestrial_dir),
            image_size=image_size,
        )
        if not ds.underwater_paths:
            raise ValueError(f"no images found in underwater dir {underwater_dir!r}")
        if not ds.terrestrial_paths:
            raise ValueError(f"no images found in terrestrial dir {terrestrial_dir!r}")
        return ds


def batches_per_epoch(n_underwater, n_terrestrial, batch_size):
    """Full batches per epoch; the remainder of each domain is dropped."""
    return min(n_underwater // batch_size, n_terrestrial // batch_size)


def _domain_rng(seed, epoch, domain):
    return np.random.default_rng(np.random.SeedSequence([seed, epoch, domain]))


def _load_batches(paths, batch_size, size, rng):
    order = rng.permutation(len(paths))
    batch = []
    for idx in order:
        path = paths[idx]
        try:
            batch.append(imaging.load_image(path, size=size))
        except imaging.ImageLoadError as exc:
            log.warning("skipping unreadable image: %s", exc)
            continue
        if len(batch) == batch_size:
            yield torch.from_numpy(np.stack(batch))
            batch = []
    # Remainder dropped: batch statistics stay uniform across the epoch.


def epoch_batches(dataset, batch_size, seed, epoch=0):
    """Iterate (terrestrial_batch, underwater_batch) tensor pairs for one epoch.

    The two domains are permuted by independent streams derived from
    ``(seed, epoch)``, so the pairing carries no information and the same
    arguments always reproduce the same batch sequence. Unreadable files are
    skipped with a warning and the batch is filled from later files; the
    iterator simply ends when either domain cannot fill another batch.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    terrestrial = _load_batches(
        dataset.terrestrial_paths, batch_size, dataset.image_size,
        _domain_rng(seed, epoch, 0),
    )
    underwater = _load_batches(
        dataset.underwater_paths, batch_size, dataset.image_size,
        _domain_rng(seed, epoch, 1),
    )
    return zip(terrestrial, underwater)


@dataclass
class SyntheticSample:
    """A clean image, known depth and coefficients, and the degraded result."""

    clean: torch.Tensor  # (3, H, W)
    depth: torch.Tensor  # (1, H, W)
    params: physics.DegradationParams
    degraded: torch.Tensor  # (3, H, W), raw model output


def sample_params(rng, t_low=0.2, t_high=0.99):
    """Draw a random coefficient set within the physically meaningful ranges."""
    draw = lambda lo, hi: tuple(float(v) for v in rng.uniform(lo, hi, size=3))
    return physics.DegradationParams(
        t_d=draw(t_low, t_high),
        t_b=draw(t_low, t_high),
        b_inf=draw(physics.VEILING_MIN, physics.VEILING_MAX),
    )


def make_synthetic(clean, depth_source, rng=None, params=None):
    """Build a SyntheticSample by running the forward model on ``clean``.

    ``depth_source`` is either a (1, H, W) depth map or a constant in
    [0, 6]. Parameters come from ``params`` or are drawn from ``rng``.
    """
    clean = torch.as_tensor(clean, dtype=torch.float64)
    if clean.dim() != 3 or clean.shape[0] != 3:
        raise ValueError(f"expected (3, H, W) clean image, got {tuple(clean.shape)}")
    if np.isscalar(depth_source):
        value = float(depth_source)
        if not physics.DEPTH_MIN <= value <= physics.DEPTH_MAX:
            raise ValueError(f"constant depth {value} outside [0, 6]")
        depth = torch.full((1,) + clean.shape[1:], value, dtype=torch.float64)
    else:
        depth = torch.as_tensor(depth_source, dtype=torch.float64)
    if params is None:
        if rng is None:
            raise ValueError("need either explicit params or an rng to draw them")
        params = sample_params(rng)
    params.validate()
    t_d, t_b, b_inf = params.tensors(dtype=torch.float64)
    degraded = physics.degrade(clean, depth, t_d, t_b, b_inf, clamp=False)
    return SyntheticSample(clean=clean, depth=depth, params=params, degraded=degraded)

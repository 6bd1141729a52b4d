"""Training objectives: least-squares adversarial, cycle, perceptual, and
backscatter-fidelity terms, plus their weighted combination.

The discriminator objective is optimized separately and never enters the
generator total.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn

# Fixed seed for the offline stand-in encoder so it behaves like a published
# frozen network: identical weights on every construction.
_RANDOM_ENCODER_SEED = 0x5EED

_VGG16_URL = "https://download.pytorch.org/models/vgg16-397923af.pth"

_IMAGENET_MEAN = (0.485, 0.456, 0.406)
_IMAGENET_STD = (0.229, 0.224, 0.225)


def _vgg16_to_relu3_3():
    """The VGG16 convolutional stack up to relu3_3, with layer indices
    matching the published checkpoint's ``features.*`` keys."""
    layers = []
    in_ch = 3
    for spec in (64, 64, "M", 128, 128, "M", 256, 256, 256):
        if spec == "M":
            layers.append(nn.MaxPool2d(2, 2))
        else:
            layers += [nn.Conv2d(in_ch, spec, 3, padding=1), nn.ReLU(inplace=True)]
            in_ch = spec
    return nn.Sequential(*layers)


@dataclass
class LossWeights:
    lambda_g: float = 3.0
    lambda_c: float = 4.0
    lambda_p: float = 0.1
    lambda_B: float = 2.0

    def validate(self):
        for name, value in vars(self).items():
            if value < 0:
                raise ValueError(f"{name} must be nonnegative, got {value}")
        return self


@dataclass
class LossReport:
    l_g: float
    l_d: float
    l_cycle: float
    l_perc: float
    l_bhat: float
    total: float

    FIELDS = ("l_g", "l_d", "l_cycle", "l_perc", "l_bhat", "total")

    def as_row(self):
        return [getattr(self, f) for f in self.FIELDS]


class FeatureEncoder(nn.Module):
    """Frozen VGG16 trunk up to relu3_3 with its native input normalization.

    ``weights='pretrained'`` loads the published ImageNet weights and raises
    at construction if they cannot be obtained, so a missing encoder can
    never surface mid-training. ``weights='random'`` builds the same
    architecture with fixed seeded weights; it is a stand-in for offline
    environments and CI, documented in the README.
    """

    def __init__(self, weights="pretrained"):
        super().__init__()
        if weights == "pretrained":
            with torch.random.fork_rng():
                torch.manual_seed(0)
                self.features = _vgg16_to_relu3_3()
            try:
                state = torch.hub.load_state_dict_from_url(
                    _VGG16_URL, progress=False, map_location="cpu"
                )
            except Exception as exc:
                raise RuntimeError(
                    "perceptual encoder unavailable: could not obtain pretrained "
                    f"VGG16 weights ({exc}); use weights='random' for offline runs"
                ) from exc
            needed = {k for k, _ in self.features.named_parameters()}
            sliced = {
                k[len("features."):]: v
                for k, v in state.items()
                if k.startswith("features.") and k[len("features."):] in needed
            }
            self.features.load_state_dict(sliced, strict=True)
        elif weights == "random":
            with torch.random.fork_rng():
                torch.manual_seed(_RANDOM_ENCODER_SEED)
                self.features = _vgg16_to_relu3_3()
        else:
            raise ValueError(f"weights must be 'pretrained' or 'random', got {weights!r}")
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()
        self.register_buffer("mean", torch.tensor(_IMAGENET_MEAN).view(1, 3, 1, 1))
        self.register_buffer("std", torch.tensor(_IMAGENET_STD).view(1, 3, 1, 1))

    def train(self, mode=True):
        # Stays frozen in inference mode regardless of the surrounding net.
        return super().train(False)

    def forward(self, img):
        return self.features((img - self.mean) / self.std)


def adversarial_generator(fake_scores):
    """LSGAN generator objective: mean over scales of mean((score - 1)^2)."""
    terms = [((s - 1.0) ** 2).mean() for s in fake_scores]
    return torch.stack(terms).mean()


def adversarial_discriminator(real_scores, fake_scores):
    """LSGAN discriminator objective, averaged over scales.

    Per scale: mean((real - 1)^2) + mean(fake^2).
    """
    terms = [
        ((r - 1.0) ** 2).mean() + (f**2).mean()
        for r, f in zip(real_scores, fake_scores)
    ]
    return torch.stack(terms).mean()


def cycle_consistency(x, x_rec, y, y_rec):
    """Mean absolute reconstruction error, summed over the two directions."""
    if x.shape != x_rec.shape or y.shape != y_rec.shape:
        raise ValueError("reconstruction shapes must match the originals")
    return (x_rec - x).abs().mean() + (y_rec - y).abs().mean()


def perceptual(orig, recov, encoder):
    """Squared feature distance at the encoder layer.

    Per spatial position the squared channel-vector difference is summed,
    then averaged over positions (and batch).
    """
    f_orig = encoder(orig)
    f_recov = encoder(recov)
    return ((f_orig - f_recov) ** 2).sum(dim=1).mean()


def backscatter_fidelity(img, decomposition, mask):
    """Mean absolute gap between the image and its backscatter estimate on
    the masked (darkest dark-channel) pixels.

    The mask is a constant: gradients reach the depth map and coefficients
    only through the backscatter estimate. Valid for real and generated
    underwater images.
    """
    mask = mask.detach().to(img.dtype)
    n_selected = mask.sum()
    if n_selected.item() == 0:
        raise ValueError("darkest-pixel mask is empty")
    d = decomposition
    estimate = d.b_inf * (1.0 - d.t_b**d.depth)
    gap = (img - estimate).abs() * mask
    return gap.sum() / (n_selected * img.shape[-3])


def total(l_g, l_cycle, l_perc, l_bhat, weights):
    """Weighted generator objective; the discriminator term stays separate."""
    w = weights
    return (
        w.lambda_g * l_g
        + w.lambda_c * l_cycle
        + w.lambda_p * l_perc
        + w.lambda_B * l_bhat
    )

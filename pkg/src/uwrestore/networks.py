"""Generator sub-modules and multi-scale patch discriminators.

Each generator splits an image into a scene depth map plus three groups of
per-channel coefficients (attenuation transmission, backscatter
transmission, veiling light) and then runs the formation model forward
(clear -> underwater) or inverse (underwater -> clear). Two independent
generator/discriminator pairs form the training cycle.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn

from . import physics


def init_weights(module, std=0.02):
    """Zero-mean Gaussian init for conv/linear weights, zero biases."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
            nn.init.normal_(m.weight, 0.0, std)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
    return module


class ResidualBlock(nn.Module):
    def __init__(self, channels):
        super().__init__()
        self.block = nn.Sequential(
            nn.Conv2d(channels, channels, 3, padding=1, padding_mode="reflect"),
            nn.InstanceNorm2d(channels),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels, channels, 3, padding=1, padding_mode="reflect"),
            nn.InstanceNorm2d(channels),
        )

    def forward(self, x):
        return x + self.block(x)


class DepthNet(nn.Module):
    """Encoder-decoder producing a per-pixel distance map in [0, 6] meters.

    7x7 stem, 2 stride-2 downsampling convs, 6 residual blocks, 2 transposed
    upsampling convs, 7x7 head. The head is a raw linear conv (no norm, no
    activation); the output u is mapped by clamp(3 + 3*u, 0, 6) so a
    zero-initialized head starts at the interior midpoint of 3 m.
    """

    def __init__(self, base_width=64, n_blocks=6):
        super().__init__()
        w = base_width
        layers = [
            nn.Conv2d(3, w, 7, padding=3, padding_mode="reflect"),
            nn.InstanceNorm2d(w),
            nn.ReLU(inplace=True),
            nn.Conv2d(w, 2 * w, 3, stride=2, padding=1),
            nn.InstanceNorm2d(2 * w),
            nn.ReLU(inplace=True),
            nn.Conv2d(2 * w, 4 * w, 3, stride=2, padding=1),
            nn.InstanceNorm2d(4 * w),
            nn.ReLU(inplace=True),
        ]
        layers += [ResidualBlock(4 * w) for _ in range(n_blocks)]
        layers += [
            nn.ConvTranspose2d(4 * w, 2 * w, 3, stride=2, padding=1, output_padding=1),
            nn.InstanceNorm2d(2 * w),
            nn.ReLU(inplace=True),
            nn.ConvTranspose2d(2 * w, w, 3, stride=2, padding=1, output_padding=1),
            nn.InstanceNorm2d(w),
            nn.ReLU(inplace=True),
            nn.Conv2d(w, 1, 7, padding=3, padding_mode="reflect"),
        ]
        self.net = nn.Sequential(*layers)

    def forward(self, img):
        _check_image(img)
        u = self.net(img)
        center = (physics.DEPTH_MAX + physics.DEPTH_MIN) / 2.0
        return torch.clamp(center + center * u, physics.DEPTH_MIN, physics.DEPTH_MAX)


class CoeffEncoder(nn.Module):
    """Global coefficient encoder: 4 stride-2 CBR blocks, pooling, linear head.

    Emits three per-channel values through a sigmoid. ``out_low``/``out_high``
    rescale the sigmoid range, so transmissions use (0, 1) and the veiling
    light uses (0.6, 1).
    """

    def __init__(self, in_channels=3, base_width=64, out_low=0.0, out_high=1.0):
        super().__init__()
        self.out_low = out_low
        self.out_high = out_high
        widths = [base_width, 2 * base_width, 4 * base_width, 4 * base_width]
        layers = []
        prev = in_channels
        for w in widths:
            layers += [
                nn.Conv2d(prev, w, 3, stride=2, padding=1),
                nn.BatchNorm2d(w),
                nn.ReLU(inplace=True),
            ]
            prev = w
        self.trunk = nn.Sequential(*layers)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.head = nn.Linear(prev, 3)

    def forward(self, x):
        feat = self.pool(self.trunk(x)).flatten(1)
        raw = torch.sigmoid(self.head(feat))
        out = self.out_low + (self.out_high - self.out_low) * raw
        return out.view(-1, 3, 1, 1)


@dataclass
class Decomposition:
    """Depth map plus the three coefficient groups predicted from one image."""

    depth: torch.Tensor  # (N, 1, H, W) in [0, 6]
    t_d: torch.Tensor  # (N, 3, 1, 1) in (0, 1)
    t_b: torch.Tensor  # (N, 3, 1, 1) in (0, 1)
    b_inf: torch.Tensor  # (N, 3, 1, 1) in [0.6, 1]

    def params_for(self, index=0):
        """Scalar parameters of one batch element, for reporting/manifests."""
        take = lambda t: tuple(float(v) for v in t[index].reshape(3))
        return physics.DegradationParams(
            t_d=take(self.t_d), t_b=take(self.t_b), b_inf=take(self.b_inf)
        )


@dataclass
class GeneratorOutput:
    image: torch.Tensor  # clamped to [0, 1]
    image_raw: torch.Tensor  # pre-clamp, for loss computation
    decomposition: Decomposition


class Generator(nn.Module):
    """One direction of the cycle: decompose the input, then apply physics.

    ``mode='degrade'`` turns clear images into synthetic underwater ones;
    ``mode='restore'`` inverts real underwater images. With ``use_depth``
    the two transmission encoders see the image concatenated with the
    predicted depth map (4 input channels) so their training stays coupled
    to the depth network; without it they see the raw image only.
    """

    def __init__(self, mode, use_depth=True, base_width=64, coeff_width=64):
        super().__init__()
        if mode not in ("degrade", "restore"):
            raise ValueError(f"mode must be 'degrade' or 'restore', got {mode!r}")
        self.mode = mode
        self.use_depth = use_depth
        coeff_in = 4 if use_depth else 3
        self.depth_net = DepthNet(base_width=base_width)
        self.atten_encoder = CoeffEncoder(coeff_in, coeff_width)
        self.backscatter_encoder = CoeffEncoder(coeff_in, coeff_width)
        self.veiling_encoder = CoeffEncoder(
            3, coeff_width, out_low=physics.VEILING_MIN, out_high=physics.VEILING_MAX
        )

    def decompose(self, img):
        _check_image(img)
        depth = self.depth_net(img)
        coeff_in = torch.cat([img, depth], dim=1) if self.use_depth else img
        return Decomposition(
            depth=depth,
            t_d=self.atten_encoder(coeff_in),
            t_b=self.backscatter_encoder(coeff_in),
            b_inf=self.veiling_encoder(img),
        )

    def forward(self, img):
        d = self.decompose(img)
        op = physics.degrade if self.mode == "degrade" else physics.restore
        raw = op(img, d.depth, d.t_d, d.t_b, d.b_inf, clamp=False)
        return GeneratorOutput(
            image=raw.clamp(0.0, 1.0), image_raw=raw, decomposition=d
        )


class PatchDiscriminator(nn.Module):
    """Three stride-2 CBR blocks plus a 1-channel conv head of patch scores."""

    def __init__(self, base_width=64):
        super().__init__()
        w = base_width
        self.net = nn.Sequential(
            nn.Conv2d(3, w, 4, stride=2, padding=1),
            nn.BatchNorm2d(w),
            nn.ReLU(inplace=True),
            nn.Conv2d(w, 2 * w, 4, stride=2, padding=1),
            nn.BatchNorm2d(2 * w),
            nn.ReLU(inplace=True),
            nn.Conv2d(2 * w, 4 * w, 4, stride=2, padding=1),
            nn.BatchNorm2d(4 * w),
            nn.ReLU(inplace=True),
            nn.Conv2d(4 * w, 1, 3, padding=1),
        )

    def forward(self, img):
        return self.net(img)


class MultiScaleDiscriminator(nn.Module):
    """Independent patch discriminators at full and half resolution."""

    def __init__(self, base_width=64, scales=2):
        super().__init__()
        self.branches = nn.ModuleList(
            PatchDiscriminator(base_width) for _ in range(scales)
        )
        self.downsample = nn.AvgPool2d(2)

    def forward(self, img):
        _check_image(img)
        scores = []
        x = img
        for branch in self.branches:
            scores.append(branch(x))
            x = self.downsample(x)
        return scores


def _check_image(img):
    if img.dim() != 4 or img.shape[1] != 3:
        raise ValueError(f"expected (N, 3, H, W) input, got shape {tuple(img.shape)}")
    h, w = img.shape[-2:]
    if h < 16 or w < 16 or h % 4 or w % 4:
        raise ValueError(
            f"spatial dims must be multiples of 4 and at least 16, got {h}x{w}"
        )

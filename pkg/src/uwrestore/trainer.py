"""Optimization loop: per-module learning rates, linear decay, pooled
discriminator updates, checkpointing, and the ablation toggles.

The two hypotheses are plain config flags: ``hyp1`` feeds the predicted
depth map to the transmission encoders, ``hyp2`` turns on the
backscatter-fidelity term on underwater images.
"""

import csv
import logging
import os
import random
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np
import torch

from . import data, dcp, losses, networks, physics, plotting
from .losses import FeatureEncoder, LossReport, LossWeights

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1

LOG_FIELDS = (
    "epoch",
    "iteration",
    "l_g",
    "l_d",
    "l_cycle",
    "l_perc",
    "l_bhat",
    "total",
    "lr_depth",
    "lr_coeff",
    "lr_disc",
)


class ConfigError(ValueError):
    """Invalid or unknown training-configuration key/value."""


@dataclass
class TrainConfig:
    # Optimization recipe.
    lr_depth: float = 2e-4
    lr_coeff: float = 1e-4
    lr_disc: float = 1e-4
    decay_start_epoch: int = 30
    total_epochs: int = 60
    batch_size: int = 16
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    weights: LossWeights = field(default_factory=LossWeights)
    hyp1: bool = True
    hyp2: bool = True
    seed: int = 0
    pool_size: int = 50
    # Artifact knobs the recipe does not fix.
    image_size: int = 256
    base_width: int = 64
    coeff_width: int = 64
    perceptual_weights: str = "pretrained"
    perc_both_directions: bool = True
    bhat_on_generated: bool = True
    mask_fraction: float = 0.01
    mask_cap: int = 10000
    device: str = "auto"
    sample_every: int = 200

    def validate(self):
        for name in ("lr_depth", "lr_coeff", "lr_disc"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if self.total_epochs < 0:
            raise ConfigError("total_epochs must be >= 0")
        if self.total_epochs > 0 and not 0 <= self.decay_start_epoch < self.total_epochs:
            raise ConfigError(
                "decay_start_epoch must lie in [0, total_epochs), got "
                f"{self.decay_start_epoch} with total_epochs={self.total_epochs}"
            )
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.pool_size < 0:
            raise ConfigError("pool_size must be >= 0")
        if self.image_size < 16 or self.image_size % 4:
            raise ConfigError("image_size must be a multiple of 4, at least 16")
        if self.perceptual_weights not in ("pretrained", "random"):
            raise ConfigError("perceptual_weights must be 'pretrained' or 'random'")
        self.weights.validate()
        return self

    @classmethod
    def from_mapping(cls, mapping):
        """Build from a flat key-value document, rejecting unknown keys."""
        known = {f.name for f in fields(cls)}
        kwargs = {}
        for key, value in mapping.items():
            if key not in known:
                raise ConfigError(f"unknown config key: {key!r}")
            if key == "weights":
                weight_names = {f.name for f in fields(LossWeights)}
                for wkey in value:
                    if wkey not in weight_names:
                        raise ConfigError(f"unknown config key: weights.{wkey}")
                value = LossWeights(**{k: float(v) for k, v in value.items()})
            kwargs[key] = value
        return cls(**kwargs).validate()

    def to_mapping(self):
        return asdict(self)


def lr_at(epoch, cfg, base):
    """Learning rate for ``epoch``: constant, then linear to 0 at the end."""
    if not 0 <= epoch < cfg.total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {cfg.total_epochs})")
    if epoch < cfg.decay_start_epoch:
        return base
    span = cfg.total_epochs - cfg.decay_start_epoch
    return base * (cfg.total_epochs - epoch) / span


class ImagePool:
    """History buffer of generated images for discriminator updates.

    Each query returns, per image, either the fresh fake or (with p = 0.5
    once the pool is full) a stored one that the fresh fake replaces.
    """

    def __init__(self, size, seed=0):
        self.size = size
        self.images = []
        self.rng = random.Random(seed)

    def query(self, batch):
        if self.size == 0:
            return batch
        out = []
        for img in batch:
            if len(self.images) < self.size:
                self.images.append(img.clone())
                out.append(img)
            elif self.rng.random() < 0.5:
                idx = self.rng.randrange(self.size)
                out.append(self.images[idx].clone())
                self.images[idx] = img.clone()
            else:
                out.append(img)
        return torch.stack(out)

    def state(self):
        return {"images": [i.cpu() for i in self.images], "rng": self.rng.getstate()}

    def load_state(self, state, device):
        self.images = [i.to(device) for i in state["images"]]
        self.rng.setstate(state["rng"])


@dataclass
class TrainState:
    cfg: TrainConfig
    device: torch.device
    g: networks.Generator  # terrestrial -> underwater
    f: networks.Generator  # underwater -> terrestrial
    d_underwater: networks.MultiScaleDiscriminator
    d_terrestrial: networks.MultiScaleDiscriminator
    encoder: FeatureEncoder
    opt_g: torch.optim.Adam
    opt_d_underwater: torch.optim.Adam
    opt_d_terrestrial: torch.optim.Adam
    pool_underwater: ImagePool
    pool_terrestrial: ImagePool
    epoch: int = 0  # completed epochs
    iteration: int = 0

    def generators(self):
        return self.g, self.f

    def set_epoch_lrs(self, epoch):
        rates = {
            "lr_depth": lr_at(epoch, self.cfg, self.cfg.lr_depth),
            "lr_coeff": lr_at(epoch, self.cfg, self.cfg.lr_coeff),
            "lr_disc": lr_at(epoch, self.cfg, self.cfg.lr_disc),
        }
        self.opt_g.param_groups[0]["lr"] = rates["lr_depth"]
        self.opt_g.param_groups[1]["lr"] = rates["lr_coeff"]
        for opt in (self.opt_d_underwater, self.opt_d_terrestrial):
            for group in opt.param_groups:
                group["lr"] = rates["lr_disc"]
        return rates


def resolve_device(name):
    if name == "auto":
        return torch.device("cuda" if torch.cuda.is_available() else "cpu")
    return torch.device(name)


def submodule_grad_norms(gen):
    """Gradient norm per generator sub-module, for collapse diagnostics."""
    norms = {}
    for name in ("depth_net", "atten_encoder", "backscatter_encoder", "veiling_encoder"):
        total = 0.0
        for p in getattr(gen, name).parameters():
            if p.grad is not None:
                total += float((p.grad**2).sum())
        norms[name] = total**0.5
    return norms


def _depth_params(gen):
    return list(gen.depth_net.parameters())


def _coeff_params(gen):
    return (
        list(gen.atten_encoder.parameters())
        + list(gen.backscatter_encoder.parameters())
        + list(gen.veiling_encoder.parameters())
    )


def build_state(cfg):
    """Construct freshly initialized models, optimizers, and pools."""
    cfg.validate()
    device = resolve_device(cfg.device)
    torch.manual_seed(cfg.seed)
    make_gen = lambda mode: networks.init_weights(
        networks.Generator(
            mode,
            use_depth=cfg.hyp1,
            base_width=cfg.base_width,
            coeff_width=cfg.coeff_width,
        )
    )
    g = make_gen("degrade").to(device)
    f = make_gen("restore").to(device)
    d_uw = networks.init_weights(networks.MultiScaleDiscriminator()).to(device)
    d_terr = networks.init_weights(networks.MultiScaleDiscriminator()).to(device)
    encoder = FeatureEncoder(cfg.perceptual_weights).to(device)

    betas = (cfg.adam_beta1, cfg.adam_beta2)
    opt_g = torch.optim.Adam(
        [
            {"params": _depth_params(g) + _depth_params(f), "lr": cfg.lr_depth},
            {"params": _coeff_params(g) + _coeff_params(f), "lr": cfg.lr_coeff},
        ],
        betas=betas,
    )
    opt_d_uw = torch.optim.Adam(d_uw.parameters(), lr=cfg.lr_disc, betas=betas)
    opt_d_terr = torch.optim.Adam(d_terr.parameters(), lr=cfg.lr_disc, betas=betas)

    return TrainState(
        cfg=cfg,
        device=device,
        g=g,
        f=f,
        d_underwater=d_uw,
        d_terrestrial=d_terr,
        encoder=encoder,
        opt_g=opt_g,
        opt_d_underwater=opt_d_uw,
        opt_d_terrestrial=opt_d_terr,
        pool_underwater=ImagePool(cfg.pool_size, seed=cfg.seed * 2 + 1),
        pool_terrestrial=ImagePool(cfg.pool_size, seed=cfg.seed * 2 + 2),
    )


def _masks_for_batch(batch, cfg):
    """Darkest-pixel masks for a batch, built outside the autograd graph."""
    arrays = batch.detach().cpu().numpy()
    masks = [
        dcp.darkest_mask_for(a, fraction=cfg.mask_fraction, cap=cfg.mask_cap)
        for a in arrays
    ]
    return torch.from_numpy(np.stack(masks)).to(batch.device)


def _decomposition_stats(name, d):
    def describe(label, t):
        t = t.detach()
        return (
            f"{label}: min={t.min().item():.4g} max={t.max().item():.4g} "
            f"mean={t.mean().item():.4g}"
        )

    return "; ".join(
        [
            describe(f"{name}.depth", d.depth),
            describe(f"{name}.t_d", d.t_d),
            describe(f"{name}.t_b", d.t_b),
            describe(f"{name}.b_inf", d.b_inf),
        ]
    )


def training_step(state, x_batch, y_batch):
    """One iteration: generator update, then both discriminator updates.

    ``x_batch`` are terrestrial images, ``y_batch`` underwater ones, both
    (N, 3, H, W) in [0, 1]. Returns the LossReport for the log.
    """
    cfg = state.cfg
    x = x_batch.to(state.device)
    y = y_batch.to(state.device)
    for net in (state.g, state.f, state.d_underwater, state.d_terrestrial):
        net.train()

    # Forward cycle. Network inputs take the clamped fakes; loss comparisons
    # take the raw values so saturated pixels keep their gradients.
    out_fake_y = state.g(x)
    out_fake_x = state.f(y)
    out_x_rec = state.f(out_fake_y.image)
    out_y_rec = state.g(out_fake_x.image)

    l_g = losses.adversarial_generator(
        state.d_underwater(out_fake_y.image)
    ) + losses.adversarial_generator(state.d_terrestrial(out_fake_x.image))
    l_cycle = losses.cycle_consistency(
        x, out_x_rec.image_raw, y, out_y_rec.image_raw
    )
    l_perc = losses.perceptual(y, out_y_rec.image_raw, state.encoder)
    if cfg.perc_both_directions:
        l_perc = l_perc + losses.perceptual(x, out_x_rec.image_raw, state.encoder)

    if cfg.hyp2:
        l_bhat = losses.backscatter_fidelity(
            y, out_fake_x.decomposition, _masks_for_batch(y, cfg)
        )
        if cfg.bhat_on_generated:
            l_bhat = l_bhat + losses.backscatter_fidelity(
                out_fake_y.image_raw,
                out_fake_y.decomposition,
                _masks_for_batch(out_fake_y.image, cfg),
            )
    else:
        l_bhat = torch.zeros((), device=state.device)

    total = losses.total(l_g, l_cycle, l_perc, l_bhat, cfg.weights)
    if not torch.isfinite(total):
        raise RuntimeError(
            "non-finite training loss; "
            + _decomposition_stats("underwater_decomp", out_fake_y.decomposition)
            + "; "
            + _decomposition_stats("terrestrial_decomp", out_fake_x.decomposition)
        )

    state.opt_g.zero_grad()
    total.backward()
    state.opt_g.step()

    # Discriminators train on pooled fakes so they see a moving history.
    l_d_total = 0.0
    for disc, opt, real, fake, pool in (
        (
            state.d_underwater,
            state.opt_d_underwater,
            y,
            out_fake_y.image.detach(),
            state.pool_underwater,
        ),
        (
            state.d_terrestrial,
            state.opt_d_terrestrial,
            x,
            out_fake_x.image.detach(),
            state.pool_terrestrial,
        ),
    ):
        pooled = pool.query(fake)
        l_d = losses.adversarial_discriminator(disc(real), disc(pooled))
        opt.zero_grad()
        l_d.backward()
        opt.step()
        l_d_total += l_d.item()

    return LossReport(
        l_g=l_g.item(),
        l_d=l_d_total,
        l_cycle=l_cycle.item(),
        l_perc=l_perc.item(),
        l_bhat=l_bhat.item(),
        total=total.item(),
    )


def save_checkpoint(state, path):
    """Atomically write the full training state (resume-exact)."""
    payload = {
        "version": CHECKPOINT_VERSION,
        "epoch": state.epoch,
        "iteration": state.iteration,
        "config": state.cfg.to_mapping(),
        "models": {
            "g": state.g.state_dict(),
            "f": state.f.state_dict(),
            "d_underwater": state.d_underwater.state_dict(),
            "d_terrestrial": state.d_terrestrial.state_dict(),
        },
        "optimizers": {
            "g": state.opt_g.state_dict(),
            "d_underwater": state.opt_d_underwater.state_dict(),
            "d_terrestrial": state.opt_d_terrestrial.state_dict(),
        },
        "pools": {
            "underwater": state.pool_underwater.state(),
            "terrestrial": state.pool_terrestrial.state(),
        },
        "torch_rng": torch.get_rng_state(),
    }
    tmp = f"{path}.tmp"
    torch.save(payload, tmp)
    os.replace(tmp, path)
    return path


def load_checkpoint(path, device=None):
    """Rebuild a TrainState from a checkpoint, bit-exact for forwards."""
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')!r}")
    cfg = TrainConfig.from_mapping(payload["config"])
    if device is not None:
        cfg.device = device
    state = build_state(cfg)
    state.g.load_state_dict(payload["models"]["g"])
    state.f.load_state_dict(payload["models"]["f"])
    state.d_underwater.load_state_dict(payload["models"]["d_underwater"])
    state.d_terrestrial.load_state_dict(payload["models"]["d_terrestrial"])
    state.opt_g.load_state_dict(payload["optimizers"]["g"])
    state.opt_d_underwater.load_state_dict(payload["optimizers"]["d_underwater"])
    state.opt_d_terrestrial.load_state_dict(payload["optimizers"]["d_terrestrial"])
    state.pool_underwater.load_state(payload["pools"]["underwater"], state.device)
    state.pool_terrestrial.load_state(payload["pools"]["terrestrial"], state.device)
    state.epoch = payload["epoch"]
    state.iteration = payload["iteration"]
    torch.set_rng_state(payload["torch_rng"])
    return state


def _save_sample_grid(state, probe, out_path):
    """Raw image, restoration, depth, and backscatter estimate side by side."""
    from . import imaging  # local import to avoid cycle at module load

    state.f.eval()
    with torch.no_grad():
        out = state.f(probe.to(state.device))
        d = out.decomposition
        backscatter = physics.estimate_backscatter(d.depth, d.t_b, d.b_inf)
    state.f.train()
    rows = []
    for i in range(probe.shape[0]):
        rows.append(
            [
                probe[i].cpu().numpy(),
                out.image[i].cpu().numpy(),
                plotting.depth_to_gray(d.depth[i].cpu().numpy()),
                backscatter[i].clamp(0, 1).cpu().numpy(),
            ]
        )
    grid = plotting.compose_grid(rows, cell_size=probe.shape[-1])
    imaging.save_image(grid, out_path)


def run(cfg, dataset, out_dir, state=None):
    """Train for ``cfg.total_epochs`` epochs and return the last checkpoint path.

    Writes one checkpoint per epoch, a per-iteration CSV log, periodic
    sample grids, and a loss-curve figure next to the log. Pass a loaded
    ``state`` to resume; counters continue from the checkpoint.
    """
    cfg.validate()
    os.makedirs(out_dir, exist_ok=True)
    samples_dir = os.path.join(out_dir, "samples")
    if state is None:
        state = build_state(cfg)
    log_path = os.path.join(out_dir, "training_log.csv")
    write_header = not os.path.exists(log_path) or state.epoch == 0

    checkpoint_path = os.path.join(
        out_dir, f"checkpoint_epoch_{state.epoch:03d}.pt"
    )
    save_checkpoint(state, checkpoint_path)

    probe = None
    probe_paths = dataset.underwater_paths[:3]

    with open(log_path, "w" if write_header else "a", newline="") as fh:
        writer = csv.writer(fh)
        if write_header:
            writer.writerow(LOG_FIELDS)
        while state.epoch < cfg.total_epochs:
            rates = state.set_epoch_lrs(state.epoch)
            epoch_start = time.time()
            n_batches = 0
            for x_batch, y_batch in data.epoch_batches(
                dataset, cfg.batch_size, cfg.seed, epoch=state.epoch
            ):
                report = training_step(state, x_batch, y_batch)
                state.iteration += 1
                n_batches += 1
                writer.writerow(
                    [state.epoch + 1, state.iteration]
                    + report.as_row()
                    + [rates["lr_depth"], rates["lr_coeff"], rates["lr_disc"]]
                )
                if cfg.sample_every and state.iteration % cfg.sample_every == 0:
                    if probe is None:
                        from . import imaging

                        probe = torch.stack(
                            [
                                torch.from_numpy(
                                    imaging.load_image(p, size=cfg.image_size)
                                )
                                for p in probe_paths
                            ]
                        )
                    os.makedirs(samples_dir, exist_ok=True)
                    _save_sample_grid(
                        state,
                        probe,
                        os.path.join(samples_dir, f"iter_{state.iteration:06d}.png"),
                    )
            fh.flush()
            state.epoch += 1
            checkpoint_path = os.path.join(
                out_dir, f"checkpoint_epoch_{state.epoch:03d}.pt"
            )
            save_checkpoint(state, checkpoint_path)
            log.info(
                "epoch %d/%d: %d iterations in %.1fs",
                state.epoch,
                cfg.total_epochs,
                n_batches,
                time.time() - epoch_start,
            )

    try:
        plotting.save_loss_curves(log_path, os.path.join(out_dir, "loss_curves.png"))
    except Exception as exc:  # figures never block a finished run
        log.warning("could not render loss curves: %s", exc)
    return checkpoint_path

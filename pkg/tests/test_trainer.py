import csv
import os
from dataclasses import replace

import numpy as np
import pytest
import torch

from uwrestore import data, imaging, losses, trainer
from uwrestore.losses import LossWeights
from uwrestore.trainer import ConfigError, TrainConfig


def smoke_config(**overrides):
    base = dict(
        total_epochs=1,
        decay_start_epoch=0,
        batch_size=2,
        image_size=32,
        base_width=8,
        coeff_width=8,
        perceptual_weights="random",
        pool_size=4,
        sample_every=0,
        seed=5,
        device="cpu",
    )
    base.update(overrides)
    return TrainConfig(**base).validate()


@pytest.fixture
def tiny_dataset(tmp_path):
    rng = np.random.default_rng(77)
    for domain in ("underwater", "terrestrial"):
        d = tmp_path / domain
        d.mkdir()
        for i in range(8):
            imaging.save_image(
                rng.uniform(0, 1, size=(3, 32, 32)), d / f"{i}.png"
            )
    return data.UnpairedDataset.from_dirs(
        tmp_path / "underwater", tmp_path / "terrestrial", image_size=32
    )


def first_batches(dataset, cfg, epoch=0):
    return next(iter(data.epoch_batches(dataset, cfg.batch_size, cfg.seed, epoch)))


class TestLrSchedule:
    def test_initial_rate(self):
        cfg = TrainConfig()
        assert trainer.lr_at(0, cfg, 2e-4) == 2e-4

    def test_boundary_continuity(self):
        cfg = TrainConfig(decay_start_epoch=30, total_epochs=60)
        assert trainer.lr_at(30, cfg, 1e-4) == 1e-4
        assert trainer.lr_at(29, cfg, 1e-4) == 1e-4

    def test_midpoint_halves(self):
        cfg = TrainConfig(decay_start_epoch=30, total_epochs=60)
        assert trainer.lr_at(45, cfg, 2e-4) == pytest.approx(1e-4, rel=1e-12)

    def test_linear_tail_reaches_zero(self):
        cfg = TrainConfig(decay_start_epoch=30, total_epochs=60)
        assert trainer.lr_at(59, cfg, 3e-4) == pytest.approx(3e-4 / 30, rel=1e-12)
        # The line hits exactly zero at total_epochs.
        span = cfg.total_epochs - cfg.decay_start_epoch
        assert 3e-4 * (cfg.total_epochs - 60) / span == 0.0

    def test_epoch_out_of_range(self):
        with pytest.raises(ValueError):
            trainer.lr_at(60, TrainConfig(), 1e-4)


class TestTrainConfig:
    def test_defaults_match_recipe(self):
        cfg = TrainConfig()
        assert cfg.lr_depth == 2e-4
        assert cfg.lr_coeff == 1e-4
        assert cfg.lr_disc == 1e-4
        assert cfg.decay_start_epoch == 30
        assert cfg.total_epochs == 60
        assert cfg.batch_size == 16
        assert (cfg.adam_beta1, cfg.adam_beta2) == (0.5, 0.999)
        assert cfg.pool_size == 50
        assert cfg.weights == LossWeights(3.0, 4.0, 0.1, 2.0)

    def test_unknown_key_named(self):
        with pytest.raises(ConfigError, match="lr_deep"):
            TrainConfig.from_mapping({"lr_deep": 1e-4})

    def test_nested_weights(self):
        cfg = TrainConfig.from_mapping({"weights": {"lambda_c": 7.0}})
        assert cfg.weights.lambda_c == 7.0
        with pytest.raises(ConfigError, match="lambda_x"):
            TrainConfig.from_mapping({"weights": {"lambda_x": 1.0}})

    def test_decay_must_precede_total(self):
        with pytest.raises(ConfigError):
            TrainConfig(total_epochs=10, decay_start_epoch=10).validate()

    def test_zero_total_epochs_allowed(self):
        TrainConfig(total_epochs=0).validate()

    def test_mapping_roundtrip(self):
        cfg = smoke_config()
        back = TrainConfig.from_mapping(cfg.to_mapping())
        assert back == cfg


class TestTrainingStep:
    def test_zero_learning_rates_keep_weights(self, tiny_dataset):
        cfg = smoke_config(lr_depth=0.0, lr_coeff=0.0, lr_disc=0.0)
        state = trainer.build_state(cfg)
        state.set_epoch_lrs(0)
        before = {
            k: v.clone() for k, v in state.g.named_parameters()
        }
        x, y = first_batches(tiny_dataset, cfg)
        report = trainer.training_step(state, x, y)
        for k, v in state.g.named_parameters():
            assert torch.equal(before[k], v), k
        for value in report.as_row():
            assert np.isfinite(value)

    def test_hyp2_off_reports_zero_bhat(self, tiny_dataset):
        cfg = smoke_config(hyp2=False)
        state = trainer.build_state(cfg)
        state.set_epoch_lrs(0)
        x, y = first_batches(tiny_dataset, cfg)
        report = trainer.training_step(state, x, y)
        assert report.l_bhat == 0.0
        w = cfg.weights
        expected = (
            w.lambda_g * report.l_g
            + w.lambda_c * report.l_cycle
            + w.lambda_p * report.l_perc
        )
        assert report.total == pytest.approx(expected, rel=1e-5)

    def test_total_recombines_from_components(self, tiny_dataset):
        cfg = smoke_config()
        state = trainer.build_state(cfg)
        state.set_epoch_lrs(0)
        x, y = first_batches(tiny_dataset, cfg)
        report = trainer.training_step(state, x, y)
        w = cfg.weights
        expected = (
            w.lambda_g * report.l_g
            + w.lambda_c * report.l_cycle
            + w.lambda_p * report.l_perc
            + w.lambda_B * report.l_bhat
        )
        assert report.total == pytest.approx(expected, rel=1e-5)

    def test_identical_seeds_identical_reports(self, tiny_dataset):
        cfg = smoke_config()
        reports = []
        for _ in range(2):
            state = trainer.build_state(cfg)
            state.set_epoch_lrs(0)
            x, y = first_batches(tiny_dataset, cfg)
            reports.append(trainer.training_step(state, x, y))
        assert reports[0] == reports[1]

    def test_nonfinite_loss_aborts_with_stats(self, tiny_dataset):
        cfg = smoke_config()
        state = trainer.build_state(cfg)
        state.set_epoch_lrs(0)
        # Poison the depth head so the decomposition goes NaN.
        state.g.depth_net.net[-1].weight.data.fill_(float("nan"))
        x, y = first_batches(tiny_dataset, cfg)
        with pytest.raises(RuntimeError, match="underwater_decomp.depth"):
            trainer.training_step(state, x, y)

    def test_gradients_reach_all_submodules(self, tiny_dataset):
        cfg = smoke_config()
        state = trainer.build_state(cfg)
        state.set_epoch_lrs(0)
        x, y = first_batches(tiny_dataset, cfg)
        trainer.training_step(state, x, y)
        for gen in (state.g, state.f):
            norms = trainer.submodule_grad_norms(gen)
            assert all(v > 0.0 for v in norms.values()), norms


class TestImagePool:
    def test_disabled_pool_passthrough(self):
        pool = trainer.ImagePool(0)
        batch = torch.rand(3, 3, 4, 4)
        assert trainer.ImagePool(0).query(batch) is batch

    def test_fills_then_swaps(self):
        pool = trainer.ImagePool(2, seed=0)
        first = torch.rand(2, 3, 4, 4)
        out = pool.query(first)
        assert torch.equal(out, first)
        assert len(pool.images) == 2
        later = pool.query(torch.rand(4, 3, 4, 4))
        assert later.shape == (4, 3, 4, 4)

    def test_state_roundtrip(self):
        pool = trainer.ImagePool(2, seed=1)
        pool.query(torch.rand(2, 3, 4, 4))
        saved = pool.state()
        clone = trainer.ImagePool(2, seed=99)
        clone.load_state(saved, torch.device("cpu"))
        batch = torch.rand(2, 3, 4, 4)
        a = pool.query(batch.clone())
        b = clone.query(batch.clone())
        assert torch.equal(a, b)


class TestCheckpoint:
    def test_forward_bit_identical_after_roundtrip(self, tiny_dataset, tmp_path):
        cfg = smoke_config()
        state = trainer.build_state(cfg)
        state.set_epoch_lrs(0)
        x, y = first_batches(tiny_dataset, cfg)
        trainer.training_step(state, x, y)
        path = tmp_path / "ckpt.pt"
        trainer.save_checkpoint(state, path)
        loaded = trainer.load_checkpoint(path)
        probe = x[:1]
        for a, b in ((state.g, loaded.g), (state.f, loaded.f)):
            a.eval(), b.eval()
            with torch.no_grad():
                assert torch.equal(a(probe).image, b(probe).image)
        for a, b in (
            (state.d_underwater, loaded.d_underwater),
            (state.d_terrestrial, loaded.d_terrestrial),
        ):
            a.eval(), b.eval()
            with torch.no_grad():
                for sa, sb in zip(a(probe), b(probe)):
                    assert torch.equal(sa, sb)

    def test_counters_restored(self, tiny_dataset, tmp_path):
        cfg = smoke_config()
        state = trainer.build_state(cfg)
        state.epoch = 3
        state.iteration = 17
        path = tmp_path / "ckpt.pt"
        trainer.save_checkpoint(state, path)
        loaded = trainer.load_checkpoint(path)
        assert loaded.epoch == 3 and loaded.iteration == 17

    def test_version_checked(self, tiny_dataset, tmp_path):
        cfg = smoke_config()
        state = trainer.build_state(cfg)
        path = tmp_path / "ckpt.pt"
        trainer.save_checkpoint(state, path)
        payload = torch.load(path, weights_only=False)
        payload["version"] = 99
        torch.save(payload, path)
        with pytest.raises(ValueError, match="version"):
            trainer.load_checkpoint(path)


def _drive_one_epoch(state, dataset, epoch):
    """Replicates run()'s inner loop for one epoch, without the file I/O."""
    reports = []
    state.set_epoch_lrs(epoch)
    for x, y in data.epoch_batches(
        dataset, state.cfg.batch_size, state.cfg.seed, epoch=epoch
    ):
        reports.append(trainer.training_step(state, x, y))
        state.iteration += 1
    state.epoch += 1
    return reports


class TestRun:
    def test_writes_expected_artifacts(self, tiny_dataset, tmp_path):
        cfg = smoke_config(batch_size=4, sample_every=1)
        out = tmp_path / "run"
        final = trainer.run(cfg, tiny_dataset, out)
        assert os.path.exists(final)
        assert (out / "checkpoint_epoch_000.pt").exists()
        assert (out / "checkpoint_epoch_001.pt").exists()
        with open(out / "training_log.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == list(trainer.LOG_FIELDS)
        assert len(rows) == 1 + 2  # header + 8 images / batch 4
        assert (out / "loss_curves.png").exists()
        assert any(p.suffix == ".png" for p in (out / "samples").iterdir())

    def test_zero_epochs_initial_checkpoint_only(self, tiny_dataset, tmp_path):
        cfg = smoke_config(total_epochs=0)
        out = tmp_path / "run0"
        final = trainer.run(cfg, tiny_dataset, out)
        assert final.endswith("checkpoint_epoch_000.pt")
        checkpoints = [p for p in os.listdir(out) if p.endswith(".pt")]
        assert checkpoints == ["checkpoint_epoch_000.pt"]

    def test_resume_reproduces_next_report_exactly(self, tiny_dataset, tmp_path):
        cfg = smoke_config(total_epochs=2, decay_start_epoch=1, batch_size=4)

        # Reference: two epochs without interruption.
        ref_state = trainer.build_state(cfg)
        _drive_one_epoch(ref_state, tiny_dataset, 0)
        ref_epoch2 = _drive_one_epoch(ref_state, tiny_dataset, 1)

        # Interrupted: one epoch, checkpoint, reload, second epoch.
        state = trainer.build_state(cfg)
        _drive_one_epoch(state, tiny_dataset, 0)
        path = tmp_path / "mid.pt"
        trainer.save_checkpoint(state, path)
        resumed = trainer.load_checkpoint(path)
        assert resumed.epoch == 1
        resumed_epoch2 = _drive_one_epoch(resumed, tiny_dataset, 1)

        assert resumed_epoch2 == ref_epoch2

    def test_ablation_matrix_trains(self, tiny_dataset, tmp_path):
        for hyp1 in (False, True):
            for hyp2 in (False, True):
                cfg = smoke_config(
                    hyp1=hyp1, hyp2=hyp2, batch_size=4, seed=11
                )
                state = trainer.build_state(cfg)
                reports = _drive_one_epoch(state, tiny_dataset, 0)
                assert reports
                for r in reports:
                    assert all(np.isfinite(v) for v in r.as_row())

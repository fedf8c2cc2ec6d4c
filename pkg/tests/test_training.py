import csv
import math

import pytest
import torch

from rift.errors import TrainingDiverged, ValidationError
from rift.losses import LossWeights
from rift.training import (
    TrainConfig,
    build_state,
    discriminator_step,
    fit,
    generator_step,
    load_generator,
    preset_config,
    restore_training_state,
    sample_batch,
    save_training_checkpoint,
    train_step,
)


def tiny_config(synthetic_dir, out_dir, **overrides) -> TrainConfig:
    base = dict(
        data_root=str(synthetic_dir),
        out_dir=str(out_dir),
        image_size=32,
        batch_size=2,
        max_iterations=4,
        base_channels=8,
        style_dim=8,
        seed=3,
        checkpoint_every=2,
    )
    base.update(overrides)
    return TrainConfig.from_dict(base)


def params_snapshot(module):
    return {k: v.detach().clone() for k, v in module.state_dict().items()}


def params_equal(a, b):
    return all(torch.equal(a[k], b[k]) for k in a)


class TestConfig:
    def test_presets(self):
        desk = preset_config("desk")
        assert (desk.image_size, desk.batch_size, desk.max_iterations) == (32, 4, 2000)
        assert (desk.base_channels, desk.style_dim) == (16, 16)
        paper = preset_config("paper")
        assert (paper.image_size, paper.batch_size, paper.max_iterations) == (128, 4, 100_000)
        assert (paper.base_channels, paper.style_dim) == (64, 64)

    def test_unknown_preset(self):
        with pytest.raises(ValidationError, match="unknown preset"):
            preset_config("gpu-farm")

    def test_rejects_nonpositive_fields(self):
        with pytest.raises(ValidationError, match="batch_size"):
            TrainConfig(batch_size=0)

    def test_semantic_dict_excludes_paths(self):
        cfg = TrainConfig(data_root="/a", out_dir="/b")
        d = cfg.semantic_dict()
        assert "data_root" not in d and "out_dir" not in d

    def test_json_round_trip(self):
        cfg = TrainConfig(weights=LossWeights(0.5, 1.0, 2.0), seed=9)
        back = TrainConfig.from_dict(__import__("json").loads(cfg.to_json()))
        assert back == cfg


class TestValidation:
    def test_image_size_mismatch_rejected(self, synthetic_dir, tmp_path):
        cfg = tiny_config(synthetic_dir, tmp_path, image_size=16)
        with pytest.raises(ValidationError, match="image_size"):
            build_state(cfg)

    def test_missing_out_dir_rejected(self, synthetic_dir):
        cfg = tiny_config(synthetic_dir, "")
        with pytest.raises(ValidationError, match="out_dir"):
            fit(cfg)


class TestSampling:
    def test_target_domain_differs_from_source(self, synthetic_dir, tmp_path):
        state = build_state(tiny_config(synthetic_dir, tmp_path))
        for _ in range(10):
            batch = sample_batch(state)
            assert torch.all(batch.c_x != batch.c_y)

    def test_style_refs_match_requested_k(self, synthetic_dir, tmp_path):
        state = build_state(tiny_config(synthetic_dir, tmp_path, num_style_images=3))
        batch = sample_batch(state)
        assert len(batch.style_refs) == 3
        assert torch.equal(batch.s, batch.style_refs[0])

    def test_region_index_valid(self, synthetic_dir, tmp_path):
        state = build_state(tiny_config(synthetic_dir, tmp_path))
        for _ in range(5):
            assert 0 <= sample_batch(state).region < 3


class TestSteps:
    def test_alternation_keeps_other_net_frozen(self, synthetic_dir, tmp_path):
        state = build_state(tiny_config(synthetic_dir, tmp_path))
        batch = sample_batch(state)
        g_before = params_snapshot(state.gen)
        discriminator_step(state, batch)
        assert params_equal(g_before, params_snapshot(state.gen))
        d_before = params_snapshot(state.disc)
        generator_step(state, batch)
        assert params_equal(d_before, params_snapshot(state.disc))

    def test_zero_weights_reduce_to_plain_conditional_gan(self, synthetic_dir, tmp_path):
        cfg = tiny_config(synthetic_dir, tmp_path, weights=LossWeights(0.0, 0.0, 0.0))
        state = build_state(cfg)
        record = train_step(state)
        assert record["loss_recon"] == 0.0
        assert record["loss_fm"] == 0.0
        assert record["loss_rm"] == 0.0
        assert record["loss_g_total"] == pytest.approx(record["loss_gan"])

    def test_ten_steps_bit_identical_across_runs(self, synthetic_dir, tmp_path):
        runs = []
        for run in range(2):
            state = build_state(tiny_config(synthetic_dir, tmp_path / str(run)))
            for _ in range(10):
                train_step(state)
            runs.append((params_snapshot(state.gen), params_snapshot(state.disc)))
        assert params_equal(runs[0][0], runs[1][0])
        assert params_equal(runs[0][1], runs[1][1])

    def test_fifty_step_smoke_all_losses_finite(self, synthetic_dir, tmp_path):
        state = build_state(tiny_config(synthetic_dir, tmp_path))
        for _ in range(50):
            record = train_step(state)
            assert all(math.isfinite(v) for v in record.values())
        assert state.iteration == 50

    def test_nan_parameters_abort_with_snapshot(self, synthetic_dir, tmp_path):
        state = build_state(tiny_config(synthetic_dir, tmp_path))
        with torch.no_grad():
            state.gen.decoder.to_rgb.weight.fill_(float("nan"))
        with pytest.raises(TrainingDiverged, match="non-finite"):
            train_step(state)
        assert (tmp_path / "diverged.ckpt").exists()


class TestFit:
    def test_short_fit_checkpoint_reproduces_forward(self, synthetic_dir, tmp_path):
        cfg = tiny_config(synthetic_dir, tmp_path / "run", max_iterations=4)
        final = fit(cfg)
        assert final.exists()
        gen, loaded = load_generator(final)
        assert loaded["iteration"] == 4

        state = build_state(cfg)
        restore_training_state(state, final)
        x = torch.from_numpy(state.data.images[:2])
        cm = torch.from_numpy(state.data.masks[:2])
        with torch.no_grad():
            assert torch.equal(gen(x, cm, x, cm), state.gen(x, cm, x, cm))

    def test_log_has_one_record_per_iteration(self, synthetic_dir, tmp_path):
        cfg = tiny_config(synthetic_dir, tmp_path / "run", max_iterations=4)
        fit(cfg)
        with open(tmp_path / "run" / "log.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert [int(r["iteration"]) for r in rows] == [1, 2, 3, 4]
        for row in rows:
            for key in ("loss_d", "loss_gan", "loss_recon", "loss_fm", "loss_rm"):
                assert math.isfinite(float(row[key]))

    def test_resume_continues_iteration_count_and_matches_unbroken_run(
        self, synthetic_dir, tmp_path
    ):
        # Uninterrupted 8-iteration run.
        cfg_full = tiny_config(
            synthetic_dir, tmp_path / "full", max_iterations=8, checkpoint_every=100
        )
        final_full = fit(cfg_full)

        # 3-iteration run, then resume to 8.
        cfg_a = tiny_config(
            synthetic_dir, tmp_path / "part", max_iterations=3, checkpoint_every=100
        )
        mid = fit(cfg_a)
        cfg_b = tiny_config(
            synthetic_dir, tmp_path / "part2", max_iterations=8, checkpoint_every=100
        )
        final_resumed = fit(cfg_b, resume_from=mid)

        full = load_generator(final_full)[1]
        resumed = load_generator(final_resumed)[1]
        assert full["iteration"] == resumed["iteration"] == 8
        for key, tensor in full["states"]["generator"].items():
            assert torch.equal(tensor, resumed["states"]["generator"][key]), key
        for key, tensor in full["states"]["discriminator"].items():
            assert torch.equal(tensor, resumed["states"]["discriminator"][key]), key

    def test_checkpoint_cadence(self, synthetic_dir, tmp_path):
        cfg = tiny_config(
            synthetic_dir, tmp_path / "run", max_iterations=4, checkpoint_every=2
        )
        fit(cfg)
        names = sorted(p.name for p in (tmp_path / "run").glob("checkpoint_*.ckpt"))
        assert names == ["checkpoint_000002.ckpt", "checkpoint_000004.ckpt"]

    def test_optimizer_state_round_trips(self, synthetic_dir, tmp_path):
        cfg = tiny_config(synthetic_dir, tmp_path / "run", max_iterations=2)
        state = build_state(cfg)
        train_step(state)
        path = save_training_checkpoint(state, tmp_path / "ckpt.zip")
        state2 = build_state(cfg)
        restore_training_state(state2, path)
        sd1 = state.opt_g.state_dict()
        sd2 = state2.opt_g.state_dict()
        assert sd1["param_groups"] == sd2["param_groups"]
        for pid, entry in sd1["state"].items():
            for name, value in entry.items():
                if isinstance(value, torch.Tensor):
                    assert torch.equal(value, sd2["state"][pid][name])
                else:
                    assert value == sd2["state"][pid][name]

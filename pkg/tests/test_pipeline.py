import numpy as np
import pytest

from bridgekit.config import ExperimentConfig
from bridgekit.data import make_synthetic_pairs
from bridgekit.metrics import MetricReport
from bridgekit.pipeline import (
    ablation_config,
    compare_reports,
    dataset_for,
    generator_fn,
    load_pairs,
    read_report,
    run_translation_experiment,
    save_pairs,
    translate,
    worker_count,
    write_report,
)
from bridgekit.training import train


def tiny_exp(**overrides):
    base = dict(T=6, gamma=2.0, task="gauss2gauss", n_samples=80, steps=20,
                batch_size=8, net="mlp", width=24, depth=2, time_embed_dim=8,
                lr=2e-3, seed=13)
    base.update(overrides)
    return ExperimentConfig(**base)


class TestDatasetIO:
    def test_save_load_round_trip(self, tmp_path):
        ds = make_synthetic_pairs("gauss2gauss", 40, seed=2)
        save_pairs(tmp_path / "ds", ds)
        back = load_pairs(tmp_path / "ds")
        np.testing.assert_array_equal(back.x0, ds.x0)
        np.testing.assert_array_equal(back.y, ds.y)
        assert back.task == "gauss2gauss"
        for split in ("train", "val", "test"):
            np.testing.assert_array_equal(back.splits[split], ds.splits[split])


class TestWorkerCount:
    def test_env_cap(self, monkeypatch):
        monkeypatch.setenv("BRIDGEKIT_THREADS", "1")
        assert worker_count() == 1
        assert worker_count(8) == 1

    def test_requested_below_cap(self, monkeypatch):
        monkeypatch.setenv("BRIDGEKIT_THREADS", "4")
        assert worker_count(2) == 2


class TestReports:
    def test_write_read_round_trip(self, tmp_path):
        report = MetricReport(psnr=np.array([10.0, 12.5, 11.25]),
                              ssim=np.array([0.9, 0.8, 0.85]))
        path = tmp_path / "r.csv"
        write_report(path, report)
        back = read_report(path)
        np.testing.assert_allclose(back.psnr, report.psnr)
        np.testing.assert_allclose(back.ssim, report.ssim)

    def test_compare_reports_attaches_pvalues(self):
        rng = np.random.default_rng(3)
        a = MetricReport(psnr=rng.uniform(20, 30, 12), ssim=rng.uniform(0.7, 0.9, 12))
        b = MetricReport(psnr=a.psnr - rng.uniform(0.5, 2.0, 12), ssim=a.ssim - 0.05)
        compare_reports(a, b)
        assert 0.0 <= a.p_psnr <= 1.0
        assert 0.0 <= a.p_ssim <= 1.0

    def test_rejects_non_report(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text("step,loss\n1,2\n")
        with pytest.raises(ValueError, match="not a metric report"):
            read_report(path)


class TestTranslate:
    def test_checkpoint_round_trip_and_overrides(self, tmp_path):
        exp = tiny_exp()
        ds = dataset_for(exp)
        ckpt = train(exp, ds, tmp_path / "run")
        _, y_test = ds.subset("test")

        base = translate(ckpt, y_test, seed=1)
        assert base.x0.shape == y_test.shape
        one_shot = translate(ckpt, y_test, seed=1, r_max=1)
        assert all(r == 1 for r in one_shot.recursions)
        short = translate(ckpt, y_test, seed=1, T=4)
        assert len(short.recursions) == 4

    def test_source_guidance_ablation_blinds_network(self, tmp_path):
        exp = tiny_exp(no_source_guidance=True, steps=5)
        ds = dataset_for(exp)
        ckpt = train(exp, ds, tmp_path / "run")
        from bridgekit.training import load_train_state

        _, state, _ = load_train_state(ckpt)
        seen = []
        orig = state.generator.forward
        state.generator.forward = lambda x, t, y, p: seen.append(np.asarray(y)) or orig(x, t, y, p)
        G = generator_fn(state.generator, no_source_guidance=True)
        y = np.random.default_rng(0).uniform(-1, 1, (2, 2))
        G(y, 3, y, np.zeros_like(y))
        assert seen and np.all(seen[0] == 0.0)


class TestExperimentHarness:
    def test_run_translation_experiment(self, tmp_path):
        out = run_translation_experiment(tiny_exp(), tmp_path / "exp", rescale="range")
        assert np.isfinite(out["psnr"]) and np.isfinite(out["baseline_psnr"])
        assert out["mean_recursions"] >= 1.0

    def test_ablation_config_flags(self):
        base = tiny_exp()
        full = ablation_config(base, "full", seed=3)
        assert not (full.no_soft_prior or full.no_source_guidance or full.no_self_consistency)
        assert full.seed == 3
        nsp = ablation_config(base, "no_soft_prior", seed=4)
        assert nsp.no_soft_prior and not nsp.no_self_consistency
        with pytest.raises(ValueError):
            ablation_config(base, "no_everything", seed=0)

"""End-to-end wiring: datasets on disk, checkpoint-backed sampling, and
metric reports.

The trained generator is adapted to the sampler's ``G(x_t, t, y, x0_prev)``
contract here, including the source-guidance ablation (the network sees a
zero tensor in place of y; the chain itself is unchanged).
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .config import ExperimentConfig
from .data import PairedDataset, load_tensor, make_synthetic_pairs, save_tensor
from .metrics import MetricReport, evaluate_batch, wilcoxon_signed_rank
from .nets import Net
from .sampler import ChainResult, SamplerOptions, reverse_chain
from .schedule import ScheduleConfig, build_schedule
from .training import load_train_state, train as train_model


def worker_count(requested: int | None = None) -> int:
    """Worker-pool size, capped by the BRIDGEKIT_THREADS environment variable."""
    limit = os.environ.get("BRIDGEKIT_THREADS")
    cap = int(limit) if limit else (os.cpu_count() or 1)
    if requested is None:
        return max(1, cap)
    return max(1, min(requested, cap))


def save_pairs(directory, dataset: PairedDataset) -> None:
    """Write a paired dataset as two containers plus a provenance file."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_tensor(directory / "x0.brtk", dataset.x0)
    save_tensor(directory / "y.brtk", dataset.y)
    (directory / "dataset.txt").write_text(
        f"task = {dataset.task}\nn = {dataset.x0.shape[0]}\n", encoding="utf-8")


def load_pairs(directory) -> PairedDataset:
    """Read a dataset written by :func:`save_pairs`; splits are re-derived
    from the sample count (they are deterministic in n)."""
    directory = Path(directory)
    x0 = load_tensor(directory / "x0.brtk")
    y = load_tensor(directory / "y.brtk")
    task = "unknown"
    meta = directory / "dataset.txt"
    if meta.exists():
        for line in meta.read_text(encoding="utf-8").splitlines():
            if line.startswith("task"):
                task = line.split("=", 1)[1].strip()
    n = x0.shape[0]
    n_train = max(1, int(round(0.8 * n)))
    n_val = max(0, int(round(0.1 * n)))
    splits = {"train": np.arange(0, min(n_train, n)),
              "val": np.arange(min(n_train, n), min(n_train + n_val, n)),
              "test": np.arange(min(n_train + n_val, n), n)}
    return PairedDataset(task=task, x0=x0, y=y, splits=splits)


def dataset_for(exp: ExperimentConfig) -> PairedDataset:
    return make_synthetic_pairs(exp.task, exp.n_samples, exp.data_seed)


def generator_fn(net: Net, *, no_source_guidance: bool = False):
    """Wrap a trained network into the sampler's generator contract."""

    def G(x_t, t, y, x0_prev):
        y_eff = np.zeros_like(y) if no_source_guidance else y
        with ad.no_grad():
            return net.forward(x_t, t, y_eff, x0_prev).data

    return G


def translate(checkpoint_path, y: np.ndarray, *, T: int | None = None,
              rel_tol: float | None = None, r_max: int | None = None,
              seed: int | None = None, emit_trajectory: bool = False) -> ChainResult:
    """Sample target estimates for a source batch from a trained checkpoint.

    Keyword overrides replace the checkpoint's sampling settings; the
    schedule is rebuilt when T is overridden.
    """
    exp, state, _ = load_train_state(checkpoint_path)
    sched_cfg = exp.schedule_config()
    if T is not None and T != sched_cfg.T:
        sched_cfg = ScheduleConfig(T=T, gamma=sched_cfg.gamma, variant=sched_cfg.variant)
    table = build_schedule(sched_cfg)
    opts = SamplerOptions(
        rel_tol=exp.rel_tol if rel_tol is None else rel_tol,
        r_max=(1 if exp.no_self_consistency else exp.r_max) if r_max is None else r_max,
        emit_trajectory=emit_trajectory,
        seed=exp.seed if seed is None else seed)
    G = generator_fn(state.generator, no_source_guidance=exp.no_source_guidance)
    return reverse_chain(G, y, table, opts)


def run_translation_experiment(exp: ExperimentConfig, workdir, *,
                               rescale: str = "image") -> dict:
    """Train on the config's task, translate the test split, and score it
    against the reference targets and the copy-source baseline."""
    dataset = dataset_for(exp)
    ckpt = train_model(exp, dataset, workdir)
    x0_test, y_test = dataset.subset("test")
    result = translate(ckpt, y_test)
    model = evaluate_batch(x0_test, result.x0, rescale=rescale)
    baseline = evaluate_batch(x0_test, y_test, rescale=rescale)
    return {
        "checkpoint": str(ckpt),
        "psnr": model.psnr_mean,
        "ssim": model.ssim_mean,
        "baseline_psnr": baseline.psnr_mean,
        "baseline_ssim": baseline.ssim_mean,
        "mean_recursions": result.mean_recursions,
    }


ABLATION_VARIANTS = ("full", "no_self_consistency", "no_soft_prior", "no_source_guidance")


def ablation_config(base: ExperimentConfig, variant: str, seed: int) -> ExperimentConfig:
    """One of the four study arms: the full model or a single-switch ablation."""
    if variant not in ABLATION_VARIANTS:
        raise ValueError(f"unknown ablation variant {variant!r}")
    from dataclasses import replace

    flags = {name: (variant == name) for name in ABLATION_VARIANTS[1:]}
    return replace(base, seed=seed, **flags)


def _ablation_worker(args):
    variant, seed, base, workdir = args
    exp = ablation_config(base, variant, seed)
    out = run_translation_experiment(exp, Path(workdir) / f"{variant}_seed{seed}")
    out.update({"variant": variant, "seed": seed})
    return out


def run_ablation_study(base: ExperimentConfig, seeds, workdir, *,
                       workers: int | None = None) -> list[dict]:
    """Train and score every (variant, seed) arm, in parallel processes up
    to the BRIDGEKIT_THREADS cap.  Each arm is an independent run, so
    parallel and serial execution give identical results."""
    jobs = [(variant, seed, base, str(workdir))
            for variant in ABLATION_VARIANTS for seed in seeds]
    n_workers = worker_count(workers if workers is not None else len(jobs))
    if n_workers <= 1:
        return [_ablation_worker(job) for job in jobs]
    import multiprocessing as mp

    with mp.get_context("fork").Pool(n_workers) as pool:
        return pool.map(_ablation_worker, jobs)


def compare_reports(report: MetricReport, baseline: MetricReport) -> MetricReport:
    """Attach two-sided signed-rank p-values for the per-image scores."""
    report.p_psnr = wilcoxon_signed_rank(report.psnr, baseline.psnr)
    mask = ~(np.isnan(report.ssim) | np.isnan(baseline.ssim))
    if mask.sum() >= 5:
        report.p_ssim = wilcoxon_signed_rank(report.ssim[mask], baseline.ssim[mask])
    return report


def write_report(path, report: MetricReport) -> None:
    """Per-image CSV (index, psnr, ssim) with aggregate footer rows."""
    with open(path, "w", encoding="utf-8") as fp:
        fp.write("index,psnr,ssim\n")
        for i, (p, s) in enumerate(zip(report.psnr, report.ssim)):
            fp.write(f"{i},{p:.10g},{s:.10g}\n")
        fp.write(f"mean,{report.psnr_mean:.10g},{report.ssim_mean:.10g}\n")
        fp.write(f"std,{report.psnr_std:.10g},{report.ssim_std:.10g}\n")
        if report.p_psnr is not None:
            fp.write(f"p_vs_baseline_psnr,{report.p_psnr:.10g},\n")
        if report.p_ssim is not None:
            fp.write(f"p_vs_baseline_ssim,{report.p_ssim:.10g},\n")


def read_report(path) -> MetricReport:
    """Read back the per-image rows of :func:`write_report`."""
    psnrs, ssims = [], []
    with open(path, "r", encoding="utf-8") as fp:
        header = fp.readline().strip()
        if header != "index,psnr,ssim":
            raise ValueError(f"not a metric report: header {header!r}")
        for line in fp:
            first, p, s = (line.strip().split(",") + [""])[:3]
            if not first.isdigit():
                break
            psnrs.append(float(p))
            ssims.append(float(s) if s else float("nan"))
    return MetricReport(psnr=np.array(psnrs), ssim=np.array(ssims))


def evaluate_translation(x0_ref: np.ndarray, x0_hat: np.ndarray, *,
                         rescale: str = "image",
                         baseline_pred: np.ndarray | None = None) -> MetricReport:
    """Score predictions against references, optionally attaching p-values
    against a baseline prediction (e.g. the copied source)."""
    report = evaluate_batch(x0_ref, x0_hat, rescale=rescale)
    if baseline_pred is not None:
        base = evaluate_batch(x0_ref, baseline_pred, rescale=rescale)
        compare_reports(report, base)
    return report

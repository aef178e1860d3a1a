"""Adversarial training: loss terms, Adam, the per-batch step, and the loop.

Each step draws a timestep per element, forms the bridged samples x_t and
x_{t-1} from the schedule, runs the generator recursion (gradients flow only
through the final call), synthesizes the candidate x_hat_{t-1} through the
posterior, then updates the discriminator (nonsaturating loss plus a
gradient penalty on real samples) followed by the generator (l1 plus
nonsaturating adversarial term).

All randomness is derived from (seed, purpose, step, ...) substreams, so a
run is bit-reproducible and checkpoint resume continues the uninterrupted
trajectory exactly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .config import ExperimentConfig, format_config, parse_config
from .data import PairedDataset, load_checkpoint, save_checkpoint
from .forward import sample_marginal
from .nets import Net, build_discriminator, build_generator
from .posterior import posterior_coeff_arrays
from .rng import RngStreams
from .schedule import ScheduleTable, build_schedule


class TrainingError(RuntimeError):
    """Non-finite loss or gradients; message carries step diagnostics."""


@dataclass(frozen=True)
class TrainConfig:
    """Loss weights, optimizer settings, and recursion/ablation switches."""

    lambda1: float = 1.0
    lambda2: float = 1.0
    lr: float = 1e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.9
    batch_size: int = 64
    r_train: int = 2
    selfcond_prob: float = 0.5
    no_source_guidance: bool = False
    no_self_consistency: bool = False

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if self.r_train < 1:
            raise ValueError("r_train must be >= 1")


def generator_loss(x0, x0_star, d_logits_fake, lambda1: float = 1.0) -> ad.Tensor:
    """lambda1 * mean|x0 - x0_star| - mean log sigmoid(fake logits)."""
    x0 = ad.as_tensor(x0)
    x0_star = ad.as_tensor(x0_star)
    logits = ad.as_tensor(d_logits_fake)
    l1 = ad.tmean(ad.absolute(ad.add(x0, ad.mul(x0_star, -1.0))))
    adv = ad.tmean(ad.softplus(ad.mul(logits, -1.0)))
    return ad.add(ad.mul(l1, lambda1), adv)


def discriminator_loss(d_logits_real, d_logits_fake, grad_real_norm2,
                       lambda2: float = 1.0) -> ad.Tensor:
    """mean[-log sigmoid(real)] + mean[-log(1 - sigmoid(fake))]
    + lambda2 * mean per-sample squared gradient norm on real inputs.

    Both log terms use the softplus formulation for numerical stability."""
    real = ad.as_tensor(d_logits_real)
    fake = ad.as_tensor(d_logits_fake)
    gp = ad.as_tensor(grad_real_norm2)
    return ad.add(ad.add(ad.tmean(ad.softplus(ad.mul(real, -1.0))),
                         ad.tmean(ad.softplus(fake))),
                  ad.mul(ad.tmean(gp), lambda2))


class Adam:
    """Classic Adam with bias correction, state serializable to arrays."""

    def __init__(self, params: dict[str, ad.Tensor], lr: float,
                 beta1: float, beta2: float, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.k = 0
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.k += 1
        bc1 = 1.0 - self.beta1 ** self.k
        bc2 = 1.0 - self.beta2 ** self.k
        for name, p in self.params.items():
            g = grads[name]
            if not np.all(np.isfinite(g)):
                raise TrainingError(f"non-finite gradient for {name} at opt step {self.k}")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data = p.data - self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def state_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        out = {f"{prefix}.k": np.array([float(self.k)])}
        for name in self.params:
            out[f"{prefix}.m.{name}"] = self.m[name].copy()
            out[f"{prefix}.v.{name}"] = self.v[name].copy()
        return out

    def load_state_arrays(self, prefix: str, arrays: dict[str, np.ndarray]) -> None:
        self.k = int(arrays[f"{prefix}.k"][0])
        for name in self.params:
            self.m[name] = arrays[f"{prefix}.m.{name}"].copy()
            self.v[name] = arrays[f"{prefix}.v.{name}"].copy()


@dataclass
class TrainState:
    """Everything a resumed run needs to continue bit-exactly."""

    generator: Net
    discriminator: Net
    opt_g: Adam
    opt_d: Adam
    streams: RngStreams
    step: int = 0
    l1_ema: float = float("nan")
    history: list = field(default_factory=list)


def make_train_state(exp: ExperimentConfig, data_shape: tuple) -> TrainState:
    net_cfg = exp.net_config()
    gen = build_generator(net_cfg, data_shape, exp.seed)
    disc = build_discriminator(net_cfg, data_shape, exp.seed)
    opt_g = Adam(gen.params, exp.lr, exp.adam_beta1, exp.adam_beta2)
    opt_d = Adam(disc.params, exp.lr, exp.adam_beta1, exp.adam_beta2)
    return TrainState(generator=gen, discriminator=disc, opt_g=opt_g, opt_d=opt_d,
                      streams=RngStreams(exp.seed))


def _recursion_input(state: TrainState, cfg: TrainConfig, x_t, t_arr, y_gen) -> tuple[np.ndarray, int]:
    """Input to the final (gradient-bearing) generator call.

    One-shot training uses zeros.  Otherwise, half the time (the
    self-conditioning coin) the r_train-1 warmup recursions run without
    gradient tracking and their detached estimate feeds the final call;
    the other half keeps the all-zero initialization.
    """
    zeros = np.zeros_like(x_t)
    r_train = 1 if cfg.no_self_consistency else cfg.r_train
    if r_train == 1:
        return zeros, 1
    coin = state.streams.stream("train.selfcond", state.step).uniform()
    if coin >= cfg.selfcond_prob:
        return zeros, 1
    prev = zeros
    with ad.no_grad():
        for _ in range(r_train - 1):
            prev = state.generator.forward(x_t, t_arr, y_gen, prev).data
    return prev, r_train


def train_step(state: TrainState, batch: tuple[np.ndarray, np.ndarray],
               table: ScheduleTable, cfg: TrainConfig) -> dict:
    """One discriminator update followed by one generator update."""
    x0, y = (np.asarray(a, dtype=np.float64) for a in batch)
    if x0.shape != y.shape:
        raise ValueError(f"shape mismatch: {x0.shape} vs {y.shape}")
    step = state.step
    streams = state.streams
    B = x0.shape[0]

    t_arr = streams.uniform_int(1, table.T, B, "train.t", step)
    x_t = sample_marginal(x0, y, t_arr, table, streams, purpose="train.xt", step=step)
    x_tm1 = sample_marginal(x0, y, t_arr - 1, table, streams, purpose="train.xtm1", step=step)
    y_gen = np.zeros_like(y) if cfg.no_source_guidance else y

    prev, recursions = _recursion_input(state, cfg, x_t, t_arr, y_gen)
    x0_star = state.generator.forward(x_t, t_arr, y_gen, prev)

    # candidate x_hat_{t-1} through the posterior; only the x0_star term
    # stays on the graph, the rest is a constant offset
    c_xt, c_y, c_x0, v = posterior_coeff_arrays(table, t_arr)
    col = (slice(None),) + (None,) * (x0.ndim - 1)
    eps = streams.batch_normal(x0.shape, "train.post",
                               [(step, i, int(t)) for i, t in enumerate(t_arr)])
    const = c_xt[col] * x_t + c_y[col] * y + np.sqrt(v)[col] * eps
    x_hat = ad.add(ad.Tensor(const), ad.mul(x0_star, ad.Tensor(c_x0[col])))

    # discriminator update on (real x_{t-1} vs detached candidate | x_t)
    real_leaf = ad.parameter(x_tm1)
    logits_real = state.discriminator.forward(real_leaf, t_arr, x_t)
    (grad_real,) = ad.grad(logits_real.sum(), [real_leaf], create_graph=True)
    gp_per_sample = ad.tsum(ad.mul(grad_real, grad_real),
                            axis=tuple(range(1, x0.ndim)))
    logits_fake_d = state.discriminator.forward(x_hat.detach(), t_arr, x_t)
    loss_d = discriminator_loss(logits_real, logits_fake_d, gp_per_sample, cfg.lambda2)
    if not np.isfinite(loss_d.item()):
        raise TrainingError(f"non-finite discriminator loss at step {step}")
    d_names = list(state.discriminator.params)
    d_grads = ad.grad(loss_d, [state.discriminator.params[n] for n in d_names])
    state.opt_d.step({n: g.data for n, g in zip(d_names, d_grads)})

    # generator update against the freshly updated discriminator
    logits_fake_g = state.discriminator.forward(x_hat, t_arr, x_t)
    loss_g = generator_loss(x0, x0_star, logits_fake_g, cfg.lambda1)
    if not np.isfinite(loss_g.item()):
        raise TrainingError(f"non-finite generator loss at step {step}")
    g_names = list(state.generator.params)
    g_grads = ad.grad(loss_g, [state.generator.params[n] for n in g_names])
    state.opt_g.step({n: g.data for n, g in zip(g_names, g_grads)})

    l1_val = float(np.mean(np.abs(x0 - x0_star.data)))
    gp_val = float(np.mean(gp_per_sample.data))
    state.l1_ema = l1_val if np.isnan(state.l1_ema) else 0.99 * state.l1_ema + 0.01 * l1_val
    state.step += 1
    return {"step": state.step, "loss_g": loss_g.item(), "loss_d": loss_d.item(),
            "l1": l1_val, "gp": gp_val, "recursions_mean": float(recursions)}


# ---------------------------------------------------------------------------
# checkpointing


def _state_tensors(state: TrainState) -> dict:
    tensors = {}
    for name, p in state.generator.params.items():
        tensors[f"gen.{name}"] = p.data.copy()
    for name, p in state.discriminator.params.items():
        tensors[f"disc.{name}"] = p.data.copy()
    tensors.update(state.opt_g.state_arrays("opt_g"))
    tensors.update(state.opt_d.state_arrays("opt_d"))
    tensors["meta.step"] = np.array([float(state.step)])
    tensors["meta.l1_ema"] = np.array([state.l1_ema])
    return tensors


def save_train_state(path, exp: ExperimentConfig, state: TrainState,
                     data_shape: tuple) -> None:
    header = {"experiment": format_config(exp), "data_shape": list(data_shape)}
    save_checkpoint(path, header, _state_tensors(state))


def load_train_state(path) -> tuple[ExperimentConfig, TrainState, tuple]:
    header, tensors = load_checkpoint(path)
    exp = parse_config(header["experiment"])
    data_shape = tuple(header["data_shape"])
    state = make_train_state(exp, data_shape)
    state.generator.load_param_arrays(
        {k[len("gen."):]: v for k, v in tensors.items() if k.startswith("gen.")})
    state.discriminator.load_param_arrays(
        {k[len("disc."):]: v for k, v in tensors.items() if k.startswith("disc.")})
    state.opt_g.load_state_arrays("opt_g", tensors)
    state.opt_d.load_state_arrays("opt_d", tensors)
    state.step = int(tensors["meta.step"][0])
    state.l1_ema = float(tensors["meta.l1_ema"][0])
    return exp, state, data_shape


def train(exp: ExperimentConfig, dataset: PairedDataset, out_dir, *,
          resume=None) -> Path:
    """Run the loop over the dataset's train split; returns the final
    checkpoint path.  Writes metrics.csv, the resolved config, and periodic
    checkpoints into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    x0_train, y_train = dataset.subset("train")
    n_train = x0_train.shape[0]
    if n_train == 0:
        raise ValueError("dataset has an empty train split")

    table = build_schedule(exp.schedule_config())
    cfg = TrainConfig(lambda1=exp.lambda1, lambda2=exp.lambda2, lr=exp.lr,
                      adam_beta1=exp.adam_beta1, adam_beta2=exp.adam_beta2,
                      batch_size=exp.batch_size, r_train=exp.r_train,
                      selfcond_prob=exp.selfcond_prob,
                      no_source_guidance=exp.no_source_guidance,
                      no_self_consistency=exp.no_self_consistency)

    data_shape = x0_train.shape[1:]
    if resume is not None:
        exp_loaded, state, ckpt_shape = load_train_state(resume)
        if format_config(exp_loaded) != format_config(exp):
            raise ValueError("resume checkpoint was written with a different config")
        if tuple(ckpt_shape) != tuple(data_shape):
            raise ValueError(f"checkpoint data shape {ckpt_shape} != dataset {data_shape}")
    else:
        state = make_train_state(exp, data_shape)

    (out_dir / "config.txt").write_text(format_config(exp), encoding="utf-8")
    total = exp.total_steps(n_train)
    log_path = out_dir / "metrics.csv"
    mode = "a" if resume is not None and log_path.exists() else "w"
    with open(log_path, mode, newline="", encoding="utf-8") as fp:
        writer = csv.writer(fp)
        if mode == "w":
            writer.writerow(["step", "loss_g", "loss_d", "l1", "gp", "recursions_mean"])
        while state.step < total:
            idx = state.streams.uniform_int(0, n_train - 1, cfg.batch_size,
                                            "train.batch", state.step)
            logs = train_step(state, (x0_train[idx], y_train[idx]), table, cfg)
            if logs["step"] % exp.log_every == 0 or logs["step"] == total:
                writer.writerow([logs["step"], f"{logs['loss_g']:.10g}",
                                 f"{logs['loss_d']:.10g}", f"{logs['l1']:.10g}",
                                 f"{logs['gp']:.10g}", f"{logs['recursions_mean']:.10g}"])
            if exp.checkpoint_every and logs["step"] % exp.checkpoint_every == 0:
                save_train_state(out_dir / f"checkpoint_{logs['step']:07d}.brtk",
                                 exp, state, data_shape)

    final = out_dir / "checkpoint_final.brtk"
    save_train_state(final, exp, state, data_shape)
    return final

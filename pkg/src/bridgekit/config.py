"""Flat key = value experiment configuration.

One file carries every knob of a run: schedule, task selection, network,
training, and sampling settings plus the seed.  Unknown keys are rejected;
every artifact-producing command writes the fully resolved config next to
its outputs so a run is reproducible from (config, seed) alone.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from .nets import NetConfig
from .sampler import SamplerOptions
from .schedule import ScheduleConfig


class ConfigError(ValueError):
    """Unknown key, malformed line, or unparseable value."""


@dataclass
class ExperimentConfig:
    # schedule
    T: int = 32
    gamma: float = 2.2
    variant: str = "soft"
    # task selection
    task: str = "gauss2gauss"
    n_samples: int = 2000
    data_seed: int = 0
    # network
    net: str = "mlp"
    width: int = 64
    depth: int = 3
    time_embed_dim: int = 256
    # training
    lambda1: float = 1.0
    lambda2: float = 1.0
    lr: float = 1e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.9
    steps: int = 2000
    epochs: int = 0
    batch_size: int = 64
    r_train: int = 2
    selfcond_prob: float = 0.5
    no_soft_prior: bool = False
    no_source_guidance: bool = False
    no_self_consistency: bool = False
    log_every: int = 1
    checkpoint_every: int = 0
    # sampling
    rel_tol: float = 0.01
    r_max: int = 4
    emit_trajectory: bool = False
    # run
    seed: int = 0

    def effective_variant(self) -> str:
        """The soft-prior ablation runs on the pinned-endpoint schedule."""
        return "pinned" if self.no_soft_prior else self.variant

    def schedule_config(self) -> ScheduleConfig:
        return ScheduleConfig(T=self.T, gamma=self.gamma, variant=self.effective_variant())

    def net_config(self) -> NetConfig:
        return NetConfig(kind=self.net, width=self.width, depth=self.depth,
                         time_embed_dim=self.time_embed_dim)

    def sampler_options(self, *, seed: int | None = None) -> SamplerOptions:
        return SamplerOptions(rel_tol=self.rel_tol,
                              r_max=1 if self.no_self_consistency else self.r_max,
                              emit_trajectory=self.emit_trajectory,
                              seed=self.seed if seed is None else seed)

    def total_steps(self, n_train: int) -> int:
        """``steps`` wins; with steps = 0 derive from epochs over the train split."""
        if self.steps > 0:
            return self.steps
        if self.epochs > 0:
            return self.epochs * max(1, -(-n_train // self.batch_size))
        raise ConfigError("either steps or epochs must be positive")


_FIELDS = {f.name: f.type for f in fields(ExperimentConfig)}


def _parse_value(key: str, raw: str):
    kind = _FIELDS[key]
    raw = raw.strip()
    if kind == "bool":
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"key {key}: expected a boolean, got {raw!r}")
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"key {key}: {exc}") from None
    return raw


def parse_config(text: str) -> ExperimentConfig:
    """Parse ``key = value`` lines; '#' starts a comment, blanks are skipped."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key: {key}")
        if key in values:
            raise ConfigError(f"duplicate config key: {key}")
        values[key] = _parse_value(key, raw)
    return ExperimentConfig(**values)


def format_config(config: ExperimentConfig) -> str:
    lines = []
    for key, value in asdict(config).items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fp:
        return parse_config(fp.read())


def save_config(config: ExperimentConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fp:
        fp.write(format_config(config))

"""Reference generator/discriminator networks on the autodiff engine.

Two families sized for desk-scale tasks:

* ``mlp``       -- for vector data (B, d); fully-connected stages with the
  time embedding projected and added at every stage.
* ``tiny_unet`` -- for small images (B, C, H, W); a 4-stage residual UNet
  (two encoder stages, two decoder stages, one 2x down/upsampling) for the
  generator and a 3-stage residual conv backbone with global pooling for
  the discriminator.

The generator receives (x_t, t, y, x0_prev) concatenated along the feature
or channel axis and ends in tanh, matching the [-1, 1] data normalization.
The discriminator receives the candidate sample conditioned on x_t and
returns one unbounded logit per batch element.

A full-scale configuration would use a 12-stage residual UNet generator and
a 6-stage convolutional discriminator at 256x256; those sizes are recorded
in the README, not built here.

All parameters are float64 leaves initialized with uniform fan-in scaling
(bound sqrt(3/fan_in)) from seeded substreams, so construction is
deterministic and forward passes are pure functions of (params, inputs).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .rng import RngStreams


@dataclass(frozen=True)
class NetConfig:
    """Architecture selection: family, width, depth, time-embedding size."""

    kind: str = "mlp"
    width: int = 64
    depth: int = 3
    time_embed_dim: int = 256

    def __post_init__(self):
        if self.kind not in ("mlp", "tiny_unet"):
            raise ValueError(f"kind must be 'mlp' or 'tiny_unet', got {self.kind!r}")
        if self.time_embed_dim < 2 or self.time_embed_dim % 2 != 0:
            raise ValueError(f"time_embed_dim must be even and >= 2, got {self.time_embed_dim}")
        if self.width < 1 or self.depth < 1:
            raise ValueError("width and depth must be positive")


def time_embedding(t, dim: int) -> np.ndarray:
    """Sinusoidal timestep encoding.

    Component 2k is sin(t / 10000^(2k/dim)) and component 2k+1 the matching
    cosine.  ``t`` may be an integer or an integer array; the result has
    shape (dim,) or (len(t), dim).
    """
    if dim < 2 or dim % 2 != 0:
        raise ValueError(f"dim must be even and >= 2, got {dim}")
    t_arr = np.asarray(t, dtype=np.float64)
    k = np.arange(dim // 2, dtype=np.float64)
    freq = 1.0 / np.power(10000.0, 2.0 * k / dim)
    angles = t_arr[..., None] * freq
    out = np.empty(t_arr.shape + (dim,), dtype=np.float64)
    out[..., 0::2] = np.sin(angles)
    out[..., 1::2] = np.cos(angles)
    return out


def _uniform_fan_in(streams: RngStreams, name: str, shape, fan_in: int) -> np.ndarray:
    bound = np.sqrt(3.0 / fan_in)
    return streams.stream("init", _name_key(name)).uniform(-bound, bound, shape)


def _name_key(name: str) -> int:
    import zlib

    return zlib.crc32(name.encode("utf-8"))


class Net:
    """Named-parameter registry with deterministic construction order."""

    prefix = ""

    def __init__(self, config: NetConfig):
        self.config = config
        self.params: dict[str, ad.Tensor] = {}

    def _time_init(self, streams):
        w = self.config.width
        self._linear_init(streams, f"{self.prefix}temb.fc1", self.config.time_embed_dim, w)
        self._linear_init(streams, f"{self.prefix}temb.fc2", w, w)

    def _linear_init(self, streams, name: str, fan_in: int, fan_out: int):
        self.params[f"{name}.w"] = ad.parameter(
            _uniform_fan_in(streams, f"{name}.w", (fan_in, fan_out), fan_in))
        self.params[f"{name}.b"] = ad.parameter(np.zeros(fan_out))

    def _conv_init(self, streams, name: str, cin: int, cout: int, k: int = 3):
        fan_in = cin * k * k
        self.params[f"{name}.w"] = ad.parameter(
            _uniform_fan_in(streams, f"{name}.w", (cout, cin, k, k), fan_in))
        self.params[f"{name}.b"] = ad.parameter(np.zeros(cout))

    def _linear(self, name: str, x):
        return ad.add(ad.matmul(x, self.params[f"{name}.w"]), self.params[f"{name}.b"])

    def _conv(self, name: str, x):
        return ad.conv2d(x, self.params[f"{name}.w"], self.params[f"{name}.b"])

    def param_arrays(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_param_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        if set(arrays) != set(self.params):
            missing = set(self.params) ^ set(arrays)
            raise ValueError(f"parameter name mismatch: {sorted(missing)}")
        for name, arr in arrays.items():
            current = self.params[name]
            if current.data.shape != arr.shape:
                raise ValueError(f"shape mismatch for {name}: "
                                 f"{current.data.shape} vs {arr.shape}")
            current.data = np.asarray(arr, dtype=np.float64).copy()

    def _time_features(self, t, batch: int):
        emb = time_embedding(t, self.config.time_embed_dim)
        if emb.ndim == 1:
            emb = np.broadcast_to(emb, (batch, emb.size)).copy()
        h = ad.silu(self._linear(f"{self.prefix}temb.fc1", ad.Tensor(emb)))
        return self._linear(f"{self.prefix}temb.fc2", h)


class MlpGenerator(Net):
    """Fully-connected target-estimate network for vector data."""

    prefix = "g."

    def __init__(self, config: NetConfig, data_dim: int, streams: RngStreams):
        super().__init__(config)
        self.data_dim = data_dim
        w = config.width
        self._time_init(streams)
        self._linear_init(streams, "g.in", 3 * data_dim, w)
        for i in range(config.depth):
            self._linear_init(streams, f"g.stage{i}", w, w)
            self._linear_init(streams, f"g.stage{i}.t", w, w)
        self._linear_init(streams, "g.out", w, data_dim)

    def forward(self, x_t, t, y, x0_prev) -> ad.Tensor:
        x_t, y, x0_prev = ad.as_tensor(x_t), ad.as_tensor(y), ad.as_tensor(x0_prev)
        if not (x_t.shape == y.shape == x0_prev.shape):
            raise ValueError(f"shape mismatch: {x_t.shape}, {y.shape}, {x0_prev.shape}")
        temb = self._time_features(t, x_t.shape[0])
        h = ad.silu(self._linear("g.in", ad.concat([x_t, y, x0_prev], axis=1)))
        for i in range(self.config.depth):
            inj = self._linear(f"g.stage{i}.t", temb)
            h = ad.silu(ad.add(self._linear(f"g.stage{i}", h), inj))
        return ad.tanh(self._linear("g.out", h))

    __call__ = forward


class MlpDiscriminator(Net):
    """Fully-connected per-sample logit network for vector data."""

    prefix = "d."

    def __init__(self, config: NetConfig, data_dim: int, streams: RngStreams):
        super().__init__(config)
        self.data_dim = data_dim
        w = config.width
        self._time_init(streams)
        self._linear_init(streams, "d.in", 2 * data_dim, w)
        for i in range(config.depth):
            self._linear_init(streams, f"d.stage{i}", w, w)
            self._linear_init(streams, f"d.stage{i}.t", w, w)
        self._linear_init(streams, "d.out", w, 1)

    def forward(self, x_candidate, t, x_t) -> ad.Tensor:
        x_candidate, x_t = ad.as_tensor(x_candidate), ad.as_tensor(x_t)
        if x_candidate.shape != x_t.shape:
            raise ValueError(f"shape mismatch: {x_candidate.shape} vs {x_t.shape}")
        temb = self._time_features(t, x_candidate.shape[0])
        h = ad.silu(self._linear("d.in", ad.concat([x_candidate, x_t], axis=1)))
        for i in range(self.config.depth):
            inj = self._linear(f"d.stage{i}.t", temb)
            h = ad.silu(ad.add(self._linear(f"d.stage{i}", h), inj))
        return ad.reshape(self._linear("d.out", h), (x_candidate.shape[0],))

    __call__ = forward


class _ConvNet(Net):
    """Shared residual-stage machinery for the image networks."""

    def _res_init(self, streams, name: str, cin: int, cout: int):
        self._conv_init(streams, f"{name}.c1", cin, cout)
        self._conv_init(streams, f"{name}.c2", cout, cout)
        self._linear_init(streams, f"{name}.t", self.config.width, cout)
        if cin != cout:
            self._conv_init(streams, f"{name}.skip", cin, cout, k=1)

    def _res_block(self, name: str, x, temb):
        h = self._conv(f"{name}.c1", ad.silu(x))
        inj = self._linear(f"{name}.t", temb)
        h = ad.add(h, ad.reshape(inj, inj.shape + (1, 1)))
        h = self._conv(f"{name}.c2", ad.silu(h))
        skip = self._conv(f"{name}.skip", x) if f"{name}.skip.w" in self.params else x
        return ad.add(h, skip)


class UnetGenerator(_ConvNet):
    """4-stage residual UNet for small images (two resolutions, skip link)."""

    prefix = "g."

    def __init__(self, config: NetConfig, channels: int, streams: RngStreams):
        super().__init__(config)
        self.channels = channels
        w = config.width
        self._time_init(streams)
        self._conv_init(streams, "g.stem", 3 * channels, w)
        self._res_init(streams, "g.enc1", w, w)
        self._res_init(streams, "g.enc2", w, 2 * w)
        self._res_init(streams, "g.dec2", 2 * w, 2 * w)
        self._res_init(streams, "g.dec1", 3 * w, w)
        self._conv_init(streams, "g.head", w, channels)

    def forward(self, x_t, t, y, x0_prev) -> ad.Tensor:
        x_t, y, x0_prev = ad.as_tensor(x_t), ad.as_tensor(y), ad.as_tensor(x0_prev)
        if not (x_t.shape == y.shape == x0_prev.shape):
            raise ValueError(f"shape mismatch: {x_t.shape}, {y.shape}, {x0_prev.shape}")
        temb = self._time_features(t, x_t.shape[0])
        h = self._conv("g.stem", ad.concat([x_t, y, x0_prev], axis=1))
        e1 = self._res_block("g.enc1", h, temb)
        e2 = self._res_block("g.enc2", ad.avgpool2(e1), temb)
        d2 = self._res_block("g.dec2", e2, temb)
        d1 = self._res_block("g.dec1", ad.concat([ad.upsample2(d2), e1], axis=1), temb)
        return ad.tanh(self._conv("g.head", d1))

    __call__ = forward


class ConvDiscriminator(_ConvNet):
    """Residual conv backbone with two halvings and global mean pooling."""

    prefix = "d."

    def __init__(self, config: NetConfig, channels: int, streams: RngStreams):
        super().__init__(config)
        self.channels = channels
        w = config.width
        self._time_init(streams)
        self._conv_init(streams, "d.stem", 2 * channels, w)
        self._res_init(streams, "d.stage1", w, w)
        self._res_init(streams, "d.stage2", w, 2 * w)
        self._res_init(streams, "d.stage3", 2 * w, 2 * w)
        self._linear_init(streams, "d.out", 2 * w, 1)

    def forward(self, x_candidate, t, x_t) -> ad.Tensor:
        x_candidate, x_t = ad.as_tensor(x_candidate), ad.as_tensor(x_t)
        if x_candidate.shape != x_t.shape:
            raise ValueError(f"shape mismatch: {x_candidate.shape} vs {x_t.shape}")
        temb = self._time_features(t, x_candidate.shape[0])
        h = self._conv("d.stem", ad.concat([x_candidate, x_t], axis=1))
        h = ad.avgpool2(self._res_block("d.stage1", h, temb))
        h = ad.avgpool2(self._res_block("d.stage2", h, temb))
        h = self._res_block("d.stage3", h, temb)
        pooled = ad.tmean(h, axis=(2, 3))
        return ad.reshape(self._linear("d.out", pooled), (x_candidate.shape[0],))

    __call__ = forward


def build_generator(config: NetConfig, data_shape: tuple, seed: int) -> Net:
    """data_shape is the per-sample feature shape: (d,) or (C, H, W)."""
    streams = RngStreams(seed)
    if config.kind == "mlp":
        if len(data_shape) != 1:
            raise ValueError(f"mlp expects vector data, got shape {data_shape}")
        return MlpGenerator(config, data_shape[0], streams)
    if len(data_shape) != 3:
        raise ValueError(f"tiny_unet expects (C, H, W) data, got shape {data_shape}")
    return UnetGenerator(config, data_shape[0], streams)


def build_discriminator(config: NetConfig, data_shape: tuple, seed: int) -> Net:
    streams = RngStreams(seed)
    if config.kind == "mlp":
        if len(data_shape) != 1:
            raise ValueError(f"mlp expects vector data, got shape {data_shape}")
        return MlpDiscriminator(config, data_shape[0], streams)
    if len(data_shape) != 3:
        raise ValueError(f"tiny_unet expects (C, H, W) data, got shape {data_shape}")
    return ConvDiscriminator(config, data_shape[0], streams)


def generator_forward(net: Net, x_t, t, y, x0_prev) -> ad.Tensor:
    """Functional form of the generator contract."""
    return net.forward(x_t, t, y, x0_prev)


def discriminator_forward(net: Net, x_candidate, t, x_t) -> ad.Tensor:
    """Functional form of the discriminator contract."""
    return net.forward(x_candidate, t, x_t)

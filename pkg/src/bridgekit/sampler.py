"""Reverse-chain sampling with self-consistent recursive target estimation.

Each reverse step refines a target estimate by feeding the generator its own
previous output until the estimate is a fixed point within a relative
tolerance (or a recursion cap), then draws the next state from the closed
form posterior.  The clean source batch y is passed to the generator at
every step (stationary guidance); the chain itself starts from the sampled
end-point.

The generator contract is a callable ``G(x_t, t, y, x0_prev) -> array`` of
the same shape, evaluated read-only (no internal state updates).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .forward import sample_endpoint
from .posterior import posterior_sample
from .rng import RngStreams
from .schedule import ScheduleTable


class NonFiniteEstimateError(RuntimeError):
    """Generator or chain state went non-finite; carries (t, r, norm history)."""

    def __init__(self, msg: str, t: int, r: int, norm_history: list[float]):
        super().__init__(f"{msg} (t={t}, recursion={r}, rel-change history={norm_history})")
        self.t = t
        self.r = r
        self.norm_history = norm_history


@dataclass(frozen=True)
class SamplerOptions:
    """Recursion tolerance/cap, trajectory switch, and chain seed."""

    rel_tol: float = 0.01
    r_max: int = 4
    emit_trajectory: bool = False
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.rel_tol < 1.0:
            raise ValueError(f"rel_tol must lie in (0, 1), got {self.rel_tol}")
        if self.r_max < 1:
            raise ValueError(f"r_max must be >= 1, got {self.r_max}")


@dataclass
class ChainResult:
    """Final sample plus per-step recursion accounting."""

    x0: np.ndarray
    recursions: list[int] = field(default_factory=list)
    generator_calls: int = 0
    trajectory: list[np.ndarray] | None = None

    @property
    def mean_recursions(self) -> float:
        return float(np.mean(self.recursions)) if self.recursions else 0.0


def _rel_change(new: np.ndarray, prev: np.ndarray) -> float:
    # l2 per batch element over its feature dims, guarded denominator
    axes = tuple(range(1, new.ndim))
    num = np.sqrt(np.sum((new - prev) ** 2, axis=axes))
    den = np.sqrt(np.sum(prev ** 2, axis=axes)) + 1e-8
    return float(np.max(num / den))


def self_consistent_estimate(G, x_t: np.ndarray, t: int, y: np.ndarray,
                             opts: SamplerOptions) -> tuple[np.ndarray, int]:
    """Iterate the generator on its own estimate until it is self-consistent.

    Starts from an all-zero estimate; stops once the relative l2 change of
    the estimate drops below ``opts.rel_tol`` (checked per batch element,
    worst case governs) or after ``opts.r_max`` generator calls.  Returns
    the final estimate and the number of recursions used.
    """
    prev = np.zeros_like(x_t)
    history: list[float] = []
    new = prev
    for r in range(1, opts.r_max + 1):
        new = np.asarray(G(x_t, t, y, prev), dtype=np.float64)
        if new.shape != x_t.shape:
            raise ValueError(f"generator returned shape {new.shape}, expected {x_t.shape}")
        if not np.all(np.isfinite(new)):
            raise NonFiniteEstimateError("non-finite generator output", t, r, history)
        rel = _rel_change(new, prev)
        history.append(rel)
        if rel < opts.rel_tol:
            return new, r
        prev = new
    return new, opts.r_max


def reverse_chain(G, y, table: ScheduleTable, opts: SamplerOptions, *,
                  streams: RngStreams | None = None, index_offset: int = 0) -> ChainResult:
    """Run the full reverse chain from the sampled end-point down to x0.

    The original (noise-free) y is handed to the generator at every step.
    ``streams`` overrides the noise source (verification passes a zeroed
    one); ``index_offset`` shifts the per-element substream indices so a
    batch split across workers samples identically to a single call.
    """
    y = np.asarray(y, dtype=np.float64)
    if streams is None:
        streams = RngStreams(opts.seed)
    indices = index_offset + np.arange(y.shape[0])

    x = sample_endpoint(y, table, streams, purpose="reverse.endpoint", indices=indices)
    result = ChainResult(x0=x, trajectory=[x.copy()] if opts.emit_trajectory else None)
    for t in range(table.T, 0, -1):
        x0_star, used = self_consistent_estimate(G, x, t, y, opts)
        result.recursions.append(used)
        result.generator_calls += used
        x = posterior_sample(x, y, x0_star, t, table, streams,
                             purpose="reverse.posterior", indices=indices)
        if not np.all(np.isfinite(x)):
            raise NonFiniteEstimateError("non-finite chain state", t, used, [])
        if opts.emit_trajectory:
            result.trajectory.append(x.copy())
    result.x0 = x
    return result

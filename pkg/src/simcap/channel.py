"""Correlated Rayleigh channel between the two SIMs and the end-to-end channel
``H = D R_R^{1/2} G~ R_T^{1/2} P``.

Every draw is keyed by a 64-bit seed. Monte Carlo trial ``i`` uses
``trial_seed(master, i)`` so results do not depend on how trials are spread
over workers.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .scene import SceneMatrices
from .simstack import CompositeResponse

_MASK64 = (1 << 64) - 1
_GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    z = (x + _GOLDEN_GAMMA) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def trial_seed(master_seed: int, index: int) -> int:
    """Seed of trial ``index``: output ``index`` of a SplitMix64 stream started at ``master_seed``."""
    if index < 0:
        raise ValueError("trial index must be non-negative")
    return splitmix64((int(master_seed) + index * _GOLDEN_GAMMA) & _MASK64)


def rng_for(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & _MASK64))


@dataclasses.dataclass(frozen=True, eq=False)
class ChannelDraw:
    g_tilde: np.ndarray
    g: np.ndarray
    h: np.ndarray
    seed: int


def draw_gtilde(rng_seed: int, rows: int, cols: int, variance: float) -> np.ndarray:
    """``rows x cols`` matrix of iid CN(0, variance) entries."""
    if not variance > 0:
        raise ValueError(f"variance must be positive, got {variance}")
    rng = rng_for(rng_seed)
    parts = rng.standard_normal((2, rows, cols))
    return np.sqrt(variance / 2.0) * (parts[0] + 1j * parts[1])


def correlate(g_tilde: np.ndarray, scene: SceneMatrices) -> np.ndarray:
    return scene.r_r_sqrt @ g_tilde @ scene.r_t_sqrt


def assemble_h(draw: ChannelDraw | np.ndarray, comp: CompositeResponse, scene: SceneMatrices) -> np.ndarray:
    """End-to-end N_r x N_t channel from a draw (or a bare G~ matrix)."""
    g_tilde = draw.g_tilde if isinstance(draw, ChannelDraw) else np.asarray(draw)
    if g_tilde.shape != (comp.d.shape[1], comp.p.shape[0]):
        raise ValueError(
            f"G~ has shape {g_tilde.shape}; D and P need {(comp.d.shape[1], comp.p.shape[0])}"
        )
    return comp.d @ correlate(g_tilde, scene) @ comp.p


def draw_channel(
    scene: SceneMatrices, comp: CompositeResponse, seed: int, variance: float | None = None
) -> ChannelDraw:
    """One realisation; ``variance`` defaults to beta / M."""
    var = scene.beta / scene.m if variance is None else variance
    g_tilde = draw_gtilde(seed, scene.n, scene.m, var)
    g = correlate(g_tilde, scene)
    return ChannelDraw(g_tilde=g_tilde, g=g, h=comp.d @ g @ comp.p, seed=int(seed))

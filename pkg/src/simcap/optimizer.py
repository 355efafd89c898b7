"""Projected gradient ascent over the SIM phase profiles.

Gradients are Wirtinger derivatives ``g = df/d(conj phi)`` so that, for a real
objective, ``df = 2 Re(g^H dphi)``. The update is ``phi <- proj(phi + mu g)``
with ``proj`` the entrywise unit-modulus projection. Phase-angle derivatives
follow from ``df/dtheta_m = 2 Im(conj(phi_m) g_m)``.

Every per-layer gradient is ``conj(diag(right_l T left_l))`` on the transmit
side and ``conj(diag(post_k Y pre_k))`` on the receive side for a small
"sandwich" matrix T or Y that depends only on the objective; the layer sweep
in :mod:`simstack` evaluates all layers at once.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from . import metrics
from .channel import rng_for, trial_seed
from .scene import SceneMatrices
from .simstack import (
    CompositeResponse,
    PhaseProfile,
    composite,
    project_unit_modulus,
    receive_layer_diagonals,
    transmit_layer_diagonals,
)

log = logging.getLogger(__name__)

OBJECTIVES = ("clb", "ebmin", "s0")

Gradients = tuple[np.ndarray, np.ndarray]  # (L x M, K x N)


class OptimizationError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# gradients


def _pinv_tall(a: np.ndarray, what: str) -> np.ndarray:
    """``(A^H A)^{-1} A^H`` for a full-column-rank ``A``, through its QR factors."""
    metrics.logdet_gram(a, what)  # raises on rank deficiency
    q, r = np.linalg.qr(a)
    return scipy.linalg.solve_triangular(r, q.conj().T)


def clb_gradients(
    profile: PhaseProfile, scene: SceneMatrices, rho: float, form: str = "separated", comp: CompositeResponse | None = None
) -> Gradients:
    """Gradients of C_LB for every layer on both sides."""
    comp = composite(profile, scene) if comp is None else comp
    log_v = metrics.bound_exponent(comp, scene, form=form)
    vbar = metrics.bound_from_exponent(log_v, rho, scene.n_t)[1]
    p, d = comp.p, comp.d
    if form == "separated":
        # (P^H P)^{-1} P^H and D^H (D D^H)^{-1}
        t_mat = _pinv_tall(p, "P^H P")
        y_mat = _pinv_tall(d.conj().T, "D D^H").conj().T
    else:
        # (P^H R_T P)^{-1} P^H R_T and R_R D^H (D R_R D^H)^{-1}
        t_mat = _pinv_tall(scene.r_t_sqrt @ p, "P^H R_T P") @ scene.r_t_sqrt
        y_mat = scene.r_r_sqrt @ _pinv_tall((d @ scene.r_r_sqrt).conj().T, "D R_R D^H").conj().T
    g_tx = vbar * np.conj(transmit_layer_diagonals(profile, scene, [t_mat])[0])
    g_rx = vbar * np.conj(receive_layer_diagonals(profile, scene, [y_mat])[0])
    return g_tx, g_rx


def ebmin_gradients(
    profile: PhaseProfile, scene: SceneMatrices, comp: CompositeResponse | None = None
) -> Gradients:
    """Gradients of Eb/N0_min = N_t ln2 / (a b), a = tr(R_T P P^H), b = tr(R_R D^H D)."""
    comp = composite(profile, scene) if comp is None else comp
    a, b = metrics.correlation_traces(comp, scene)
    f = metrics.min_energy_per_bit(comp, scene)
    t_mat = comp.p.conj().T @ scene.r_t
    y_mat = scene.r_r @ comp.d.conj().T
    da = np.conj(transmit_layer_diagonals(profile, scene, [t_mat])[0])
    db = np.conj(receive_layer_diagonals(profile, scene, [y_mat])[0])
    return -f / a * da, -f / b * db


def s0_gradients(
    profile: PhaseProfile, scene: SceneMatrices, comp: CompositeResponse | None = None
) -> Gradients:
    """Gradients of S0 = 2 N_t N_r / (N_t zeta_T + N_r zeta_R).

    zeta = dim tr(X^2) / tr(X)^2 with X = R_T P P^H (dim M) or R_R D^H D
    (dim N). Both traces are evaluated on the small Gram forms.
    """
    comp = composite(profile, scene) if comp is None else comp
    p, d = comp.p, comp.d
    n_t, n_r = scene.n_t, scene.n_r
    q_t = p.conj().T @ scene.r_t @ p
    q_r = d @ scene.r_r @ d.conj().T
    a, b = np.trace(q_t).real, np.trace(q_r).real
    qa, qb = np.sum(np.abs(q_t) ** 2), np.sum(np.abs(q_r) ** 2)
    zeta_t, zeta_r = scene.m * qa / a**2, scene.n * qb / b**2
    den = n_t * zeta_t + n_r * zeta_r
    s0 = 2.0 * n_t * n_r / den

    t_lin = p.conj().T @ scene.r_t
    y_lin = scene.r_r @ d.conj().T
    dt = np.conj(transmit_layer_diagonals(profile, scene, [t_lin, q_t @ t_lin]))
    dr = np.conj(receive_layer_diagonals(profile, scene, [y_lin, y_lin @ q_r]))
    d_zeta_t = scene.m * (2.0 * dt[1] / a**2 - 2.0 * qa * dt[0] / a**3)
    d_zeta_r = scene.n * (2.0 * dr[1] / b**2 - 2.0 * qb * dr[0] / b**3)
    scale = -s0 / den
    return scale * n_t * d_zeta_t, scale * n_r * d_zeta_r


def _layer(g: np.ndarray, layer: int) -> np.ndarray:
    if not 1 <= layer <= g.shape[0]:
        raise IndexError(f"layer index {layer} outside 1..{g.shape[0]}")
    return g[layer - 1]


def grad_clb_tx(profile, scene, rho, layer, form="separated"):
    return _layer(clb_gradients(profile, scene, rho, form)[0], layer)


def grad_clb_rx(profile, scene, rho, layer, form="separated"):
    return _layer(clb_gradients(profile, scene, rho, form)[1], layer)


def grad_ebmin(profile, scene, side, layer):
    g = ebmin_gradients(profile, scene)
    return _layer(g[0] if side == "tx" else g[1], layer)


def grad_s0(profile, scene, side, layer):
    g = s0_gradients(profile, scene)
    return _layer(g[0] if side == "tx" else g[1], layer)


def tangential(g: np.ndarray, phases: np.ndarray) -> np.ndarray:
    """Component of ``g`` along the unit-circle tangent ``j phi``."""
    phi = np.exp(1j * phases)
    return 1j * phi * np.imag(np.conj(phi) * g)


def phase_derivative(g: np.ndarray, phases: np.ndarray) -> np.ndarray:
    """``df/dtheta`` from a Wirtinger gradient."""
    return 2.0 * np.imag(np.exp(-1j * phases) * g)


# ---------------------------------------------------------------------------
# objectives


@dataclasses.dataclass(frozen=True)
class Objective:
    """One of the three figures of merit bound to a scene.

    ``gradient_hook`` lets tests corrupt gradients (negative controls).
    """

    name: str
    scene: SceneMatrices
    rho: float = 1.0
    form: str = "separated"
    gradient_hook: Callable[[Gradients], Gradients] | None = None

    def __post_init__(self) -> None:
        if self.name not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}, got {self.name!r}")

    @property
    def maximize(self) -> bool:
        return self.name != "ebmin"

    def value(self, profile: PhaseProfile, comp: CompositeResponse | None = None) -> float:
        comp = composite(profile, self.scene) if comp is None else comp
        if self.name == "clb":
            return metrics.capacity_lower_bound(comp, self.scene, self.rho, form=self.form)
        if self.name == "ebmin":
            return metrics.min_energy_per_bit(comp, self.scene)
        return metrics.wideband_slope(comp, self.scene)

    def gradients(self, profile: PhaseProfile, comp: CompositeResponse | None = None) -> Gradients:
        comp = composite(profile, self.scene) if comp is None else comp
        if self.name == "clb":
            g = clb_gradients(profile, self.scene, self.rho, self.form, comp)
        elif self.name == "ebmin":
            g = ebmin_gradients(profile, self.scene, comp)
        else:
            g = s0_gradients(profile, self.scene, comp)
        return self.gradient_hook(g) if self.gradient_hook is not None else g

    def __call__(self, profile: PhaseProfile) -> float:
        return self.value(profile)


# ---------------------------------------------------------------------------
# finite differences


def finite_diff_gradient(
    objective: Callable[[PhaseProfile], float],
    profile: PhaseProfile,
    side: str,
    layer: int,
    h: float = 1e-6,
    mode: str = "tangent",
) -> np.ndarray:
    """Central differences over each phase angle of one layer.

    ``mode="phase"`` returns the real derivatives ``df/dtheta``;
    ``mode="tangent"`` maps them to ``j phi df/dtheta / 2``, which is the
    tangential part of the Wirtinger gradient.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    angles = profile.tx if side == "tx" else profile.rx
    row = np.array(angles[layer - 1], dtype=float)
    out = np.empty(row.size)
    for i in range(row.size):
        plus, minus = row.copy(), row.copy()
        plus[i] += h
        minus[i] -= h
        f_plus = objective(profile.with_layer(side, layer, plus))
        f_minus = objective(profile.with_layer(side, layer, minus))
        out[i] = (f_plus - f_minus) / (2.0 * h)
    if mode == "phase":
        return out
    if mode == "tangent":
        return 0.5j * np.exp(1j * row) * out
    raise ValueError(f"mode must be 'phase' or 'tangent', got {mode!r}")


def gradient_relative_error(
    objective: Objective, profile: PhaseProfile, side: str, layer: int, h: float = 1e-6
) -> float:
    """Max-norm error of one layer's tangential gradient against finite differences.

    The error is relative to the max-norm of the full tangential gradient
    (all layers, both sides), because some layers can have an identically
    zero gradient, e.g. the outermost layer for ``ln det(P^H P)``.
    """
    g_tx, g_rx = objective.gradients(profile)
    scale = max(
        np.max(np.abs(tangential(g_tx, profile.tx))), np.max(np.abs(tangential(g_rx, profile.rx)))
    )
    g = _layer(g_tx if side == "tx" else g_rx, layer)
    angles = (profile.tx if side == "tx" else profile.rx)[layer - 1]
    diff = np.max(np.abs(tangential(g, angles) - finite_diff_gradient(objective, profile, side, layer, h)))
    return float(diff / scale) if scale > 0 else float(diff)


# ---------------------------------------------------------------------------
# projected gradient ascent


@dataclasses.dataclass(frozen=True)
class OptimizerOptions:
    max_iters: int = 100
    tol: float = 1e-5
    step: float = 1.0
    step_growth: float = 2.0
    step_max: float = 4.0
    max_halvings: int = 30
    grad_tol: float = 1e-12

    def __post_init__(self) -> None:
        if self.max_iters < 1 or not self.tol > 0 or not self.step > 0 or self.max_halvings < 1:
            raise ValueError("max_iters, tol, step and max_halvings must be positive")


@dataclasses.dataclass
class OptimizerState:
    profile: PhaseProfile
    objective_name: str
    objective_value: float
    iteration: int = 0
    step_sizes: tuple[float, float] = (0.0, 0.0)
    trajectory: list[float] = dataclasses.field(default_factory=list)
    steps: list[tuple[float, float]] = dataclasses.field(default_factory=list)
    status: str = "running"
    stabilized_at: int | None = None

    def is_monotone(self, maximize: bool = True) -> bool:
        diffs = np.diff(self.trajectory)
        return bool(np.all(diffs >= 0) if maximize else np.all(diffs <= 0))


def _normalised(g: np.ndarray) -> tuple[np.ndarray, float]:
    scale = float(np.max(np.abs(g)))
    return (g / scale, 1.0 / scale) if scale > 0 else (np.zeros_like(g), 0.0)


def _is_stationary(g_tx, g_rx, profile: PhaseProfile, value: float, grad_tol: float) -> bool:
    t = max(np.max(np.abs(phase_derivative(g_tx, profile.tx))), np.max(np.abs(phase_derivative(g_rx, profile.rx))))
    return bool(t <= grad_tol * max(abs(value), np.finfo(float).tiny))


def projected_gradient_ascent(
    objective: Objective, init: PhaseProfile, options: OptimizerOptions | None = None
) -> OptimizerState:
    """Simultaneous projected gradient steps on all L + K layers.

    Each side's gradient is divided by its max-norm, so ``mu`` is the largest
    per-element move before projection. ``mu`` is halved until the objective
    improves (up to ``max_halvings`` times, after which the run ends as
    ``"stalled"``) and grows by ``step_growth`` (capped at ``step_max``) after
    an accepted step. The run ends as ``"converged"`` once the relative change
    drops below ``tol``.
    """
    opts = OptimizerOptions() if options is None else options
    sign = 1.0 if objective.maximize else -1.0
    profile = init
    value = objective.value(profile)
    if not math.isfinite(value):
        raise OptimizationError(f"objective {objective.name} is not finite at the initial profile ({value})")
    state = OptimizerState(profile, objective.name, value, trajectory=[value], steps=[(0.0, 0.0)])
    mu = opts.step

    for it in range(1, opts.max_iters + 1):
        g_tx, g_rx = objective.gradients(profile)
        if not (np.all(np.isfinite(g_tx)) and np.all(np.isfinite(g_rx))):
            raise OptimizationError(f"non-finite gradient at iteration {it}")
        if _is_stationary(g_tx, g_rx, profile, value, opts.grad_tol):
            state.iteration = it
            state.trajectory.append(value)
            state.steps.append((0.0, 0.0))
            state.status = "converged"
            state.stabilized_at = it
            return state
        d_tx, s_tx = _normalised(sign * g_tx)
        d_rx, s_rx = _normalised(sign * g_rx)

        accepted = None
        for _ in range(opts.max_halvings + 1):
            cand = PhaseProfile.from_weights(
                project_unit_modulus(profile.tx_weights + mu * d_tx),
                project_unit_modulus(profile.rx_weights + mu * d_rx),
            )
            try:
                new_value = objective.value(cand)
            except np.linalg.LinAlgError:
                new_value = -sign * math.inf
            if math.isnan(new_value):
                raise OptimizationError(f"objective became NaN at iteration {it}")
            if sign * (new_value - value) > 0:
                accepted = cand
                break
            mu *= 0.5
        if accepted is None:
            state.status = "stalled"
            log.info("%s: no improvement after %d halvings at iteration %d", objective.name, opts.max_halvings, it)
            break

        delta = new_value - value
        profile, value = accepted, new_value
        state.iteration = it
        state.trajectory.append(value)
        state.step_sizes = (mu * s_tx, mu * s_rx)
        state.steps.append(state.step_sizes)
        mu = min(mu * opts.step_growth, opts.step_max)
        if abs(delta) < opts.tol * max(abs(value), np.finfo(float).tiny):
            state.status = "converged"
            state.stabilized_at = it
            break
    else:
        state.status = "max_iters"

    state.profile = profile
    state.objective_value = value
    return state


def initial_profiles(scene: SceneMatrices, starts: int, seed: int) -> list[PhaseProfile]:
    """Independent uniform random profiles; start ``i`` uses ``trial_seed(seed, i)``."""
    return [PhaseProfile.random(scene, rng_for(trial_seed(seed, i))) for i in range(starts)]


def multi_start(
    objective: Objective,
    inits: Sequence[PhaseProfile],
    options: OptimizerOptions | None = None,
    workers: int = 1,
) -> list[OptimizerState]:
    """Independent runs from each initial profile, returned in input order."""
    if workers > 1 and len(inits) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda p: projected_gradient_ascent(objective, p, options), inits))
    return [projected_gradient_ascent(objective, p, options) for p in inits]


def best_state(states: Sequence[OptimizerState], maximize: bool = True) -> OptimizerState:
    key = (lambda s: s.objective_value) if maximize else (lambda s: -s.objective_value)
    return max(states, key=key)

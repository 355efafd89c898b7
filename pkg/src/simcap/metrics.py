"""Capacity and low-SNR figures of merit.

All log-determinants go through a Cholesky factor (or eigenvalues for batched
Monte Carlo) so that nothing overflows for large stacks.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Sequence

import numpy as np
import scipy.linalg
import scipy.special

from .channel import draw_gtilde, trial_seed
from .scene import SceneMatrices
from .simstack import CompositeResponse

log = logging.getLogger(__name__)

LN2 = math.log(2.0)
EULER_GAMMA = 0.5772156649015329
BOUND_FORMS = ("separated", "compressed")
MC_CHUNK = 256
CSV_HEADER = ("snr_db", "c_lb", "c_mc", "ci", "ebn0min_db", "s0", "trials", "seed")


class RankDeficientError(np.linalg.LinAlgError):
    pass


_RANK_MSG = "{} is singular: rank-deficient composite; re-initialise with random phases"


def logdet_pd(a: np.ndarray, what: str = "matrix") -> float:
    """ln det of a Hermitian positive definite matrix through its Cholesky factor."""
    a = np.asarray(a)
    try:
        chol = scipy.linalg.cholesky(0.5 * (a + a.conj().T), lower=True, check_finite=True)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise RankDeficientError(f"{what} is singular or not positive definite") from exc
    diag = np.abs(np.diag(chol))
    if np.any(diag == 0.0):
        raise RankDeficientError(f"{what} is singular")
    return float(2.0 * np.sum(np.log(diag)))


def logdet_gram(a: np.ndarray, what: str = "Gram matrix", rank_tol: float = 1e-13) -> float:
    """ln det(A^H A) from the R factor of A, avoiding the squared condition number of A^H A."""
    r = np.linalg.qr(np.asarray(a), mode="r")
    diag = np.abs(np.diag(r))
    if diag.size < np.asarray(a).shape[1] or not np.all(np.isfinite(diag)):
        raise RankDeficientError(f"{what} is singular")
    if diag.min() <= rank_tol * diag.max():
        raise RankDeficientError(f"{what} is singular")
    return float(2.0 * np.sum(np.log(diag)))


# ---------------------------------------------------------------------------
# ergodic capacity


def instantaneous_capacity(h: np.ndarray, rho: float, n_t: int | None = None) -> float:
    """``log2 det(I + rho / N_t H^H H)`` in bits/s/Hz."""
    h = np.atleast_2d(np.asarray(h, dtype=complex))
    if not np.all(np.isfinite(h)):
        raise ValueError("channel matrix has non-finite entries")
    if rho < 0:
        raise ValueError("rho must be non-negative")
    n_t = h.shape[1] if n_t is None else n_t
    if rho == 0:
        return 0.0
    a = np.eye(h.shape[1]) + (rho / n_t) * (h.conj().T @ h)
    return max(logdet_pd(a, "I + rho/N_t H^H H") / LN2, 0.0)


def capacity_from_eigenvalues(eigs: np.ndarray, rho, n_t: int) -> np.ndarray:
    """Per-sample capacities for eigenvalues of H^H H (last axis) and one or more rho."""
    eigs = np.clip(np.asarray(eigs, dtype=float), 0.0, None)
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    scaled = eigs[..., None, :] * (rho[:, None] / n_t)
    return np.sum(np.log1p(scaled), axis=-1) / LN2


@dataclasses.dataclass(frozen=True)
class McEstimate:
    mean: np.ndarray
    ci_halfwidth: np.ndarray
    trials: int
    seed: int

    def at(self, i: int = 0) -> tuple[float, float]:
        return float(self.mean[i]), float(self.ci_halfwidth[i])


def channel_eigenvalues(
    scene: SceneMatrices,
    comp: CompositeResponse,
    trials: int,
    master_seed: int,
    variance: float | None = None,
    workers: int = 1,
    start: int = 0,
) -> np.ndarray:
    """Eigenvalues of H^H H for trials ``start .. start + trials - 1`` (shape trials x N_t)."""
    var = scene.beta / scene.m if variance is None else variance
    left = comp.d @ scene.r_r_sqrt
    right = scene.r_t_sqrt @ comp.p
    n, m = scene.n, scene.m

    def chunk(lo: int, hi: int) -> np.ndarray:
        g = np.stack([draw_gtilde(trial_seed(master_seed, i), n, m, var) for i in range(lo, hi)])
        h = left @ g @ right
        return np.linalg.eigvalsh(np.conj(np.swapaxes(h, -1, -2)) @ h)

    bounds = [(lo, min(lo + MC_CHUNK, start + trials)) for lo in range(start, start + trials, MC_CHUNK)]
    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda b: chunk(*b), bounds))
    else:
        parts = [chunk(*b) for b in bounds]
    return np.concatenate(parts, axis=0)


def ergodic_capacity_mc(
    scene: SceneMatrices,
    comp: CompositeResponse,
    rho,
    trials: int,
    master_seed: int,
    variance: float | None = None,
    workers: int = 1,
) -> McEstimate:
    """Sample-mean ergodic capacity with a 95% normal-approximation half width.

    ``rho`` may be a scalar or an array; every SNR reuses the same draws.
    Trial ``i`` always uses ``trial_seed(master_seed, i)``, so the estimate is
    the same for any ``workers``.
    """
    if trials < 2:
        raise ValueError("at least two trials are needed for a confidence interval")
    seeds = {trial_seed(master_seed, i) for i in range(min(trials, 4096))}
    if len(seeds) != min(trials, 4096):
        raise ValueError("trial seeds collide")
    eigs = channel_eigenvalues(scene, comp, trials, master_seed, variance, workers)
    samples = capacity_from_eigenvalues(eigs, rho, scene.n_t)  # trials x len(rho)
    return summarize_samples(samples, master_seed)


def summarize_samples(samples: np.ndarray, seed: int) -> McEstimate:
    trials = samples.shape[0]
    mean = samples.mean(axis=0)
    sd = samples.std(axis=0, ddof=1)
    return McEstimate(mean=mean, ci_halfwidth=1.96 * sd / math.sqrt(trials), trials=trials, seed=int(seed))


# ---------------------------------------------------------------------------
# closed-form lower bound


def digamma(x: float) -> float:
    if not x > 0:
        raise ValueError(f"digamma is only used for positive arguments, got {x}")
    return float(scipy.special.digamma(x))


def wishart_logdet_mean(s: int, t: int, entry_variance: float = 1.0) -> float:
    """E[ln det(X^H X)] for a t x s matrix X of iid CN(0, entry_variance) entries (nats)."""
    if not 1 <= s <= t:
        raise ValueError(f"need 1 <= s <= t, got s={s}, t={t}")
    if not entry_variance > 0:
        raise ValueError("entry_variance must be positive")
    return float(np.sum(scipy.special.digamma(t - np.arange(s)))) + s * math.log(entry_variance)


def _bound_defaults(scene, n_t, s, t, beta, m):
    n_t = scene.n_t if n_t is None else n_t
    m = scene.m if m is None else m
    s = min(scene.m, scene.n) if s is None else s
    t = max(scene.m, scene.n) if t is None else t
    beta = scene.beta if beta is None else beta
    return n_t, s, t, beta, m


def bound_exponent(
    comp: CompositeResponse,
    scene: SceneMatrices,
    n_t: int | None = None,
    s: int | None = None,
    t: int | None = None,
    beta: float | None = None,
    m: int | None = None,
    form: str = "separated",
) -> float:
    """ln V, the exponent inside the lower bound.

    ``form="separated"``::

        (1/N_t) [sum_{i<s} psi(t-i) + s ln(beta/M) + ln|P^H P| + ln|D D^H|
                 + ln|R_T| + ln|R_R|]

    ``form="compressed"`` applies the same Minkowski/Jensen/Wishart chain to
    the N_t x N_t effective channel and needs N_r = N_t::

        (1/N_t) [sum_{i<N_t} psi(N_t-i) + N_t ln(beta/M)
                 + ln|P^H R_T P| + ln|D R_R D^H|]
    """
    n_t, s, t, beta, m = _bound_defaults(scene, n_t, s, t, beta, m)
    var = beta / m
    if form == "separated":
        total = (
            wishart_logdet_mean(s, t, var)
            + logdet_gram(comp.p, _RANK_MSG.format("P^H P"))
            + logdet_gram(comp.d.conj().T, _RANK_MSG.format("D D^H"))
            + logdet_pd(scene.r_t, "R_T")
            + logdet_pd(scene.r_r, "R_R")
        )
    elif form == "compressed":
        if comp.d.shape[0] != n_t:
            raise ValueError("the compressed bound is closed-form only for N_r = N_t")
        total = (
            wishart_logdet_mean(n_t, n_t, var)
            + logdet_gram(scene.r_t_sqrt @ comp.p, _RANK_MSG.format("P^H R_T P"))
            + logdet_gram((comp.d @ scene.r_r_sqrt).conj().T, _RANK_MSG.format("D R_R D^H"))
        )
    else:
        raise ValueError(f"form must be one of {BOUND_FORMS}, got {form!r}")
    return total / n_t


def bound_from_exponent(log_v: float, rho: float, n_t: int) -> tuple[float, float]:
    """``(C_LB, Vbar)`` for a given ln V.

    Vbar = rho V / (ln2 N_t (1 + rho V / N_t)) is the derivative of C_LB with
    respect to N_t ln V.
    """
    if rho < 0:
        raise ValueError("rho must be non-negative")
    if rho == 0:
        return 0.0, 0.0
    log_x = math.log(rho / n_t) + log_v
    if log_x > 700:
        c_lb = n_t * (log_x + math.log1p(math.exp(-log_x))) / LN2
        return c_lb, 1.0 / LN2
    x = math.exp(log_x)
    return n_t * math.log1p(x) / LN2, x / ((1.0 + x) * LN2)


def capacity_lower_bound(
    comp: CompositeResponse,
    scene: SceneMatrices,
    rho: float,
    n_t: int | None = None,
    s: int | None = None,
    t: int | None = None,
    beta: float | None = None,
    m: int | None = None,
    form: str = "separated",
) -> float:
    """``C_LB = N_t log2(1 + rho/N_t V)`` in bits/s/Hz; see :func:`bound_exponent`."""
    n_t_ = scene.n_t if n_t is None else n_t
    if rho == 0:
        return 0.0
    log_v = bound_exponent(comp, scene, n_t, s, t, beta, m, form)
    return bound_from_exponent(log_v, rho, n_t_)[0]


def matthaiou_bound(n: int, rho: float) -> float:
    """Lower bound for an n x n iid unit-variance channel: the SIM-free special case."""
    return n * math.log1p(rho / n * math.exp(wishart_logdet_mean(n, n) / n)) / LN2


# ---------------------------------------------------------------------------
# low-SNR regime


def dispersion(a: np.ndarray) -> float:
    """``dim(A) tr(A^2) / tr(A)^2``; equals 1 iff A is proportional to I (PSD A)."""
    a = np.atleast_2d(np.asarray(a))
    tr = np.trace(a)
    if abs(tr) == 0:
        raise ValueError("dispersion is undefined for a zero-trace matrix")
    return float(np.real(a.shape[0] * np.trace(a @ a) / tr**2))


def _effective_grams(comp: CompositeResponse, scene: SceneMatrices) -> tuple[np.ndarray, np.ndarray]:
    # R_T P P^H shares its nonzero spectrum with P^H R_T P; same on the receive side
    q_t = comp.p.conj().T @ scene.r_t @ comp.p
    q_r = comp.d @ scene.r_r @ comp.d.conj().T
    return 0.5 * (q_t + q_t.conj().T), 0.5 * (q_r + q_r.conj().T)


def correlation_traces(comp: CompositeResponse, scene: SceneMatrices) -> tuple[float, float]:
    """``(tr(R_T P P^H), tr(R_R D^H D))``."""
    q_t, q_r = _effective_grams(comp, scene)
    return float(np.trace(q_t).real), float(np.trace(q_r).real)


def correlation_dispersions(comp: CompositeResponse, scene: SceneMatrices) -> tuple[float, float]:
    """``(zeta(R_T P P^H), zeta(R_R D^H D))`` with dimensions M and N."""
    q_t, q_r = _effective_grams(comp, scene)
    tr_t, tr_r = np.trace(q_t).real, np.trace(q_r).real
    if tr_t <= 0 or tr_r <= 0:
        raise ValueError("dispersion is undefined for a zero-trace matrix")
    zeta_t = scene.m * np.sum(np.abs(q_t) ** 2) / tr_t**2
    zeta_r = scene.n * np.sum(np.abs(q_r) ** 2) / tr_r**2
    return float(zeta_t), float(zeta_r)


def min_energy_per_bit(comp: CompositeResponse, scene: SceneMatrices, n_t: int | None = None) -> float:
    """``N_t ln 2 / (tr(R_T P P^H) tr(R_R D^H D))`` (linear).

    The fading is taken with unit entry variance, i.e. Eb/N0 is referenced to
    the path-loss-normalised channel.
    """
    n_t = scene.n_t if n_t is None else n_t
    tr_t, tr_r = correlation_traces(comp, scene)
    if tr_t <= 0 or tr_r <= 0:
        raise ValueError("minimum energy per bit needs positive traces")
    return n_t * LN2 / (tr_t * tr_r)


def wideband_slope(
    comp: CompositeResponse, scene: SceneMatrices, n_t: int | None = None, n_r: int | None = None
) -> float:
    """``2 N_t N_r / (N_t zeta(R_T P P^H) + N_r zeta(R_R D^H D))``."""
    n_t = scene.n_t if n_t is None else n_t
    n_r = scene.n_r if n_r is None else n_r
    zeta_t, zeta_r = correlation_dispersions(comp, scene)
    return 2.0 * n_t * n_r / (n_t * zeta_t + n_r * zeta_r)


def low_snr_capacity(eb_n0, s0: float, eb_n0_min: float):
    """``S0 log2(Eb/N0 / Eb/N0_min)``, floored at zero below the minimum."""
    ratio = np.asarray(eb_n0, dtype=float) / eb_n0_min
    out = s0 * np.log2(np.maximum(ratio, 1.0))
    return float(out) if out.ndim == 0 else out


def to_db(x):
    return 10.0 * np.log10(x)


def from_db(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


# ---------------------------------------------------------------------------
# reports


@dataclasses.dataclass(frozen=True)
class CapacityReport:
    snr_linear: float
    c_lb: float
    c_mc: float
    ci_halfwidth: float
    v_term: float
    eb_n0_min: float
    s0: float
    trials: int
    seed: int

    @property
    def eb_n0_min_db(self) -> float:
        return float(to_db(self.eb_n0_min))

    @property
    def bound_holds(self) -> bool:
        return self.c_lb <= self.c_mc + self.ci_halfwidth

    def csv_fields(self) -> tuple:
        return (
            float(to_db(self.snr_linear)),
            self.c_lb,
            self.c_mc,
            self.ci_halfwidth,
            self.eb_n0_min_db,
            self.s0,
            self.trials,
            self.seed,
        )


def capacity_reports(
    scene: SceneMatrices,
    comp: CompositeResponse,
    rhos: Sequence[float],
    trials: int,
    seed: int,
    form: str = "separated",
    workers: int = 1,
) -> list[CapacityReport]:
    """Bound, Monte Carlo estimate and low-SNR metrics over an SNR grid."""
    mc = ergodic_capacity_mc(scene, comp, np.asarray(rhos, dtype=float), trials, seed, workers=workers)
    log_v = bound_exponent(comp, scene, form=form)
    ebmin = min_energy_per_bit(comp, scene)
    s0 = wideband_slope(comp, scene)
    reports = []
    for i, rho in enumerate(rhos):
        c_lb = bound_from_exponent(log_v, float(rho), scene.n_t)[0]
        rep = CapacityReport(
            snr_linear=float(rho),
            c_lb=c_lb,
            c_mc=float(mc.mean[i]),
            ci_halfwidth=float(mc.ci_halfwidth[i]),
            v_term=math.exp(log_v) if log_v < 700 else math.inf,
            eb_n0_min=ebmin,
            s0=s0,
            trials=trials,
            seed=seed,
        )
        if not rep.bound_holds:
            log.warning(
                "lower bound %.6g exceeds MC %.6g + %.3g at rho=%.3g", c_lb, rep.c_mc, rep.ci_halfwidth, rho
            )
        reports.append(rep)
    return reports

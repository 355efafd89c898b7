"""Experiment scenarios: capacity sweep, low-SNR curves, optimizer convergence
and the validation report.

Each scenario writes ``<scenario>.csv`` and a gnuplot script ``<scenario>.gp``
into the output directory; ``validate`` also writes ``report.json``. CSV
files open with ``#`` lines holding the resolved configuration and seed, use
12 significant digits and ``\\n`` line endings. Every random quantity is
keyed by the master seed and an index, so files are byte-identical for any
worker count.
"""

from __future__ import annotations

import dataclasses
import json
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from . import metrics
from .channel import draw_gtilde, rng_for, trial_seed
from .config import SystemConfig
from .optimizer import (
    Gradients,
    Objective,
    OptimizerOptions,
    best_state,
    gradient_relative_error,
    initial_profiles,
    multi_start,
)
from .scene import SceneMatrices, build_scene, identity_scene
from .simstack import PhaseProfile, composite

SCENARIOS = ("capacity_sweep", "low_snr", "convergence", "validate")
CURVES = ("optimized", "random_phase", "iid_baseline")
DEFAULT_PAIRS = ((40, 100), (20, 100), (40, 50))
DEFAULT_SNR_GRID_DB = tuple(float(x) for x in range(100, 161, 10))
DEFAULT_EBN0_GRID_DB = tuple(float(x) for x in range(-12, 31, 2))
DEFAULT_LOW_SNR_GRID_DB = (-20.0, -15.0, -10.0, -5.0, 0.0)
RANDOM_PROFILES = 10
# sub-stream offsets so optimizer starts, random baselines and probes never share seeds
_RANDOM_STREAM = 1 << 20
_PROBE_STREAM = 1 << 21


def _strictly_increasing(grid: Sequence[float]) -> bool:
    return all(b > a for a, b in zip(grid, grid[1:]))


@dataclasses.dataclass(frozen=True)
class ExperimentSpec:
    scenario: str
    config: SystemConfig = SystemConfig()
    output_dir: Path = Path("out")
    trials: int | None = None
    seed: int | None = None
    snr_grid_db: tuple[float, ...] = DEFAULT_SNR_GRID_DB
    ebn0_grid_db: tuple[float, ...] = DEFAULT_EBN0_GRID_DB
    low_snr_grid_db: tuple[float, ...] = DEFAULT_LOW_SNR_GRID_DB
    reference_snr_db: float | None = None
    mn_pairs: tuple[tuple[int, int], ...] = DEFAULT_PAIRS
    curves: tuple[str, ...] = CURVES
    objective: str = "clb"
    bound_form: str = "separated"
    max_iters: int = 100
    tol: float = 1e-5
    step: float = 1.0
    starts: int = 5
    workers: int = 1
    config_path: str | None = None
    overrides: tuple[tuple[str, Any], ...] = ()

    def __post_init__(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")
        for name in ("snr_grid_db", "ebn0_grid_db", "low_snr_grid_db"):
            grid = getattr(self, name)
            if not grid or not _strictly_increasing(grid):
                raise ValueError(f"{name} must be non-empty and strictly increasing")
        if any(m < 1 or n < 1 for m, n in self.mn_pairs) or not self.mn_pairs:
            raise ValueError("every (M, N) pair must be positive")
        unknown = set(self.curves) - set(CURVES)
        if unknown or not self.curves:
            raise ValueError(f"curves must be a non-empty subset of {CURVES}")
        if self.bound_form not in metrics.BOUND_FORMS:
            raise ValueError(f"bound_form must be one of {metrics.BOUND_FORMS}")
        if self.trials is not None and self.trials < 2:
            raise ValueError("trials must be at least 2")
        if self.starts < 1 or self.workers < 1:
            raise ValueError("starts and workers must be positive")

    @property
    def master_seed(self) -> int:
        return self.config.seed if self.seed is None else self.seed

    @property
    def n_trials(self) -> int:
        if self.trials is not None:
            return self.trials
        return 10_000 if self.scenario == "validate" else 2000

    @property
    def reference_snr(self) -> float:
        """Linear rho at which phases are optimised before a sweep (mid-grid by default)."""
        if self.reference_snr_db is not None:
            return 10.0 ** (self.reference_snr_db / 10.0)
        grid = self.snr_grid_db
        return 10.0 ** ((grid[0] + grid[-1]) / 20.0)

    @property
    def options(self) -> OptimizerOptions:
        return OptimizerOptions(max_iters=self.max_iters, tol=self.tol, step=self.step)

    def header(self) -> list[str]:
        """Comment lines describing everything that determines the outputs."""
        params = {
            "scenario": self.scenario,
            "trials": self.n_trials,
            "snr_grid_db": list(self.snr_grid_db),
            "ebn0_grid_db": list(self.ebn0_grid_db),
            "low_snr_grid_db": list(self.low_snr_grid_db),
            "reference_snr_db": 10.0 * math.log10(self.reference_snr),
            "mn_pairs": [list(p) for p in self.mn_pairs],
            "curves": list(self.curves),
            "objective": self.objective,
            "bound_form": self.bound_form,
            "max_iters": self.max_iters,
            "tol": self.tol,
            "step": self.step,
            "starts": self.starts,
        }
        return [
            f"simcap {self.scenario}",
            f"seed={self.master_seed}",
            "config=" + json.dumps(self.config.to_dict(), sort_keys=True),
            "params=" + json.dumps(params, sort_keys=True),
        ]


# ---------------------------------------------------------------------------
# output helpers


def _fmt(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".12g")
    return str(v)


def write_csv(
    path: Path, header: Iterable[str], columns: Sequence[str], rows: Iterable[Sequence[Any]], footer: Iterable[str] = ()
) -> Path:
    lines = ["# " + h for h in header]
    lines.append(",".join(columns))
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    lines += ["# " + f for f in footer]
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def _write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return path


def _ordered_map(fn: Callable, items: Sequence, workers: int) -> list:
    if workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# ---------------------------------------------------------------------------
# building blocks


def iid_scene(config: SystemConfig, entry_variance: float) -> SceneMatrices:
    """P = D = I and R_T = R_R = I on an N_r x N_t channel with the given entry variance."""
    return identity_scene(config.n_t, config.n_r, entry_variance=entry_variance)


def optimise_profile(
    scene: SceneMatrices, spec: ExperimentSpec, objective: str, rho: float, seed: int
) -> PhaseProfile:
    obj = Objective(objective, scene, rho=rho, form=spec.bound_form)
    states = multi_start(obj, initial_profiles(scene, spec.starts, seed), spec.options)
    return best_state(states, obj.maximize).profile


def random_profiles(scene: SceneMatrices, seed: int, count: int = RANDOM_PROFILES) -> list[PhaseProfile]:
    return initial_profiles(scene, count, trial_seed(seed, _RANDOM_STREAM))


def _sweep_rows(
    scene: SceneMatrices,
    profiles: Sequence[PhaseProfile],
    rhos: np.ndarray,
    trials: int,
    seed: int,
    form: str,
    variance: float | None,
    workers: int,
) -> list[metrics.CapacityReport]:
    """Reports for one curve, averaging over ``profiles`` and pooling MC samples."""
    c_lb, samples, ebmin_den, s0 = [], [], [], []
    for prof in profiles:
        comp = composite(prof, scene)
        c_lb.append([metrics.capacity_lower_bound(comp, scene, float(r), form=form) for r in rhos])
        eigs = metrics.channel_eigenvalues(scene, comp, trials, seed, variance, workers)
        samples.append(metrics.capacity_from_eigenvalues(eigs, rhos, scene.n_t))
        tr_t, tr_r = metrics.correlation_traces(comp, scene)
        ebmin_den.append(tr_t * tr_r)
        s0.append(metrics.wideband_slope(comp, scene))
    mc = metrics.summarize_samples(np.concatenate(samples, axis=0), seed)
    bound = np.mean(c_lb, axis=0)
    ebmin = scene.n_t * metrics.LN2 / float(np.mean(ebmin_den))
    s0_mean = float(np.mean(s0))
    log_v = [metrics.bound_exponent(composite(p, scene), scene, form=form) for p in profiles]
    return [
        metrics.CapacityReport(
            snr_linear=float(r),
            c_lb=float(bound[i]),
            c_mc=float(mc.mean[i]),
            ci_halfwidth=float(mc.ci_halfwidth[i]),
            v_term=float(np.mean(np.exp(np.minimum(log_v, 700.0)))),
            eb_n0_min=ebmin,
            s0=s0_mean,
            trials=mc.trials,
            seed=seed,
        )
        for i, r in enumerate(rhos)
    ]


def curve_profiles(
    curve: str, scene: SceneMatrices, spec: ExperimentSpec, objective: str, rho: float
) -> tuple[SceneMatrices, list[PhaseProfile]]:
    seed = spec.master_seed
    if curve == "optimized":
        return scene, [optimise_profile(scene, spec, objective, rho, seed)]
    if curve == "random_phase":
        return scene, random_profiles(scene, seed)
    raise ValueError(curve)


# ---------------------------------------------------------------------------
# capacity sweep

SWEEP_COLUMNS = ("m", "n", "curve") + metrics.CSV_HEADER


def capacity_sweep_rows(spec: ExperimentSpec) -> list[tuple]:
    rhos = 10.0 ** (np.asarray(spec.snr_grid_db) / 10.0)
    trials, seed = spec.n_trials, spec.master_seed

    def one_pair(pair: tuple[int, int]) -> list[tuple]:
        m, n = pair
        cfg = spec.config.replace(m_tx=m, n_rx=n)
        scene = build_scene(cfg)
        out = []
        for curve in spec.curves:
            if curve == "iid_baseline":
                sc = iid_scene(cfg, scene.beta / scene.m)
                profiles = [PhaseProfile.zeros(sc)]
            else:
                sc, profiles = curve_profiles(curve, scene, spec, "clb", spec.reference_snr)
            for rep in _sweep_rows(sc, profiles, rhos, trials, seed, spec.bound_form, None, 1):
                out.append((m, n, curve) + rep.csv_fields())
        return out

    rows: list[tuple] = []
    for part in _ordered_map(one_pair, list(spec.mn_pairs), spec.workers):
        rows.extend(part)
    return rows


def _sweep_plot(csv_name: str, spec: ExperimentSpec) -> str:
    lines = [
        "set datafile separator ','",
        "set datafile commentschars '#'",
        "set key autotitle columnhead",
        "set xlabel 'SNR 10log10(rho) [dB]'",
        "set ylabel 'capacity [bits/s/Hz]'",
        "set grid",
        "set key left top",
    ]
    plots = []
    for m, n in spec.mn_pairs:
        for curve in spec.curves:
            sel = f"(($1=={m} && $2=={n} && strcol(3) eq '{curve}') ? $%d : 1/0)"
            plots.append(f"'{csv_name}' using 4:{sel % 5} with lines title '{curve} M={m} N={n} C_LB'")
            plots.append(f"'{csv_name}' using 4:{sel % 6} with points title '{curve} M={m} N={n} MC'")
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


def run_capacity_sweep(spec: ExperimentSpec) -> dict[str, Path]:
    rows = capacity_sweep_rows(spec)
    out = Path(spec.output_dir)
    violations = sum(1 for r in rows if r[4] > r[5] + r[6])
    csv = write_csv(
        out / "capacity_sweep.csv",
        spec.header(),
        SWEEP_COLUMNS,
        rows,
        footer=[f"bound violations: {violations} of {len(rows)} rows"],
    )
    gp = _write_text(out / "capacity_sweep.gp", _sweep_plot(csv.name, spec))
    return {"csv": csv, "gp": gp}


# ---------------------------------------------------------------------------
# low-SNR curves

LOW_SNR_COLUMNS = ("curve", "kind", "ebn0_db", "capacity", "ci", "ebn0min_db", "s0", "snr_db", "trials", "seed")


def low_snr_rows(spec: ExperimentSpec) -> list[tuple]:
    """Analytic S0 log2(Eb/N0 / Eb/N0_min) curves plus MC points with Eb/N0 = rho / C(rho).

    The fading has unit entry variance here, so Eb/N0 is referenced to the
    path-loss-normalised channel.
    """
    cfg = spec.config
    scene = build_scene(cfg)
    rhos = 10.0 ** (np.asarray(spec.low_snr_grid_db) / 10.0)
    ebn0 = 10.0 ** (np.asarray(spec.ebn0_grid_db) / 10.0)
    trials, seed = spec.n_trials, spec.master_seed
    objective = spec.objective if spec.objective in ("ebmin", "s0") else "ebmin"

    def one_curve(curve: str) -> list[tuple]:
        if curve == "iid_baseline":
            sc = iid_scene(cfg, 1.0)
            profiles = [PhaseProfile.zeros(sc)]
        else:
            sc, profiles = curve_profiles(curve, scene, spec, objective, cfg.snr_linear)
        reps = _sweep_rows(sc, profiles, rhos, trials, seed, spec.bound_form, 1.0, 1)
        ebmin, s0 = reps[0].eb_n0_min, reps[0].s0
        ebmin_db = float(metrics.to_db(ebmin))
        out = []
        for e in ebn0:
            cap = metrics.low_snr_capacity(float(e), s0, ebmin)
            out.append((curve, "analytic", float(metrics.to_db(e)), cap, 0.0, ebmin_db, s0, math.nan, 0, seed))
        for rep in reps:
            ebn0_mc = rep.snr_linear / rep.c_mc if rep.c_mc > 0 else math.inf
            out.append(
                (
                    curve,
                    "mc",
                    float(metrics.to_db(ebn0_mc)),
                    rep.c_mc,
                    rep.ci_halfwidth,
                    ebmin_db,
                    s0,
                    float(metrics.to_db(rep.snr_linear)),
                    rep.trials,
                    seed,
                )
            )
        return out

    rows: list[tuple] = []
    for part in _ordered_map(one_curve, list(spec.curves), spec.workers):
        rows.extend(part)
    return rows


def _low_snr_plot(csv_name: str, spec: ExperimentSpec) -> str:
    lines = [
        "set datafile separator ','",
        "set datafile commentschars '#'",
        "set xlabel 'Eb/N0 [dB]'",
        "set ylabel 'capacity [bits/s/Hz]'",
        "set grid",
        "set key left top",
    ]
    plots = []
    for curve in spec.curves:
        sel = f"((strcol(1) eq '{curve}' && strcol(2) eq '%s') ? $4 : 1/0)"
        plots.append(f"'{csv_name}' using 3:{sel % 'analytic'} with lines title '{curve} analytic'")
        plots.append(f"'{csv_name}' using 3:{sel % 'mc'} with points title '{curve} MC'")
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


def run_low_snr(spec: ExperimentSpec) -> dict[str, Path]:
    out = Path(spec.output_dir)
    csv = write_csv(out / "low_snr.csv", spec.header(), LOW_SNR_COLUMNS, low_snr_rows(spec))
    gp = _write_text(out / "low_snr.gp", _low_snr_plot(csv.name, spec))
    return {"csv": csv, "gp": gp}


# ---------------------------------------------------------------------------
# convergence

CONVERGENCE_COLUMNS = ("start", "iter", "objective", "step_tx", "step_rx")


def convergence_states(spec: ExperimentSpec):
    cfg = spec.config
    scene = build_scene(cfg)
    obj = Objective(spec.objective, scene, rho=cfg.snr_linear, form=spec.bound_form)
    inits = initial_profiles(scene, spec.starts, spec.master_seed)
    return obj, multi_start(obj, inits, spec.options, spec.workers)


def run_convergence(spec: ExperimentSpec) -> dict[str, Path]:
    obj, states = convergence_states(spec)
    rows = [
        (i, it, value, step[0], step[1])
        for i, st in enumerate(states)
        for it, (value, step) in enumerate(zip(st.trajectory, st.steps))
    ]
    best = best_state(states, obj.maximize).objective_value
    footer = []
    for i, st in enumerate(states):
        gap = abs(st.objective_value - best) / abs(best) if best else 0.0
        footer.append(
            f"start {i}: status={st.status} iterations={st.iteration} stabilized_at={st.stabilized_at} "
            f"final={_fmt(st.objective_value)} gap_to_best={_fmt(gap)} monotone={st.is_monotone(obj.maximize)}"
        )
    out = Path(spec.output_dir)
    csv = write_csv(out / "convergence.csv", spec.header(), CONVERGENCE_COLUMNS, rows, footer)
    plots = [
        f"'{csv.name}' using 2:(($1=={i}) ? $3 : 1/0) with linespoints title 'start {i}'"
        for i in range(len(states))
    ]
    script = "\n".join(
        [
            "set datafile separator ','",
            "set datafile commentschars '#'",
            "set xlabel 'iteration'",
            f"set ylabel '{spec.objective}'",
            "set grid",
            "plot " + ", \\\n     ".join(plots),
        ]
    )
    gp = _write_text(out / "convergence.gp", script + "\n")
    return {"csv": csv, "gp": gp}


# ---------------------------------------------------------------------------
# validation


def _check(passed: bool, metric: float, threshold: float) -> dict[str, Any]:
    return {"pass": bool(passed), "metric": float(metric), "threshold": float(threshold)}


def random_probe_config(rng: np.random.Generator, base: SystemConfig) -> SystemConfig:
    """Small random config for gradient probes.

    At least two layers per side: with a single layer, ln det(P^H P) and (for
    R_T = I) tr(R_T P P^H) do not depend on the phases at all, so there is no
    gradient to compare.
    """
    n_t = int(rng.choice([2, 4]))
    return base.replace(
        n_t=n_t,
        n_r=n_t,
        m_tx=int(rng.integers(n_t + 2, 17)),
        n_rx=int(rng.integers(n_t + 2, 17)),
        layers_tx=int(rng.integers(2, 4)),
        layers_rx=int(rng.integers(2, 4)),
    )


def gradient_probe_errors(
    objective: str,
    probes: int,
    seed: int,
    base: SystemConfig,
    form: str = "separated",
    h: float = 1e-6,
    hook: Callable[[Gradients], Gradients] | None = None,
) -> list[float]:
    """Relative errors over random (config, layer) probes."""
    errors = []
    for i in range(probes):
        rng = rng_for(trial_seed(seed, _PROBE_STREAM + i))
        cfg = random_probe_config(rng, base)
        scene = build_scene(cfg)
        profile = PhaseProfile.random(scene, rng)
        obj = Objective(objective, scene, rho=cfg.snr_linear, form=form, gradient_hook=hook)
        side = "tx" if rng.random() < 0.5 else "rx"
        layer = int(rng.integers(1, (cfg.layers_tx if side == "tx" else cfg.layers_rx) + 1))
        errors.append(gradient_relative_error(obj, profile, side, layer, h))
    return errors


def wishart_mc_error(s: int, t: int, draws: int, seed: int) -> float:
    """Relative error of the digamma formula against a Monte Carlo mean of ln det(G^H G)."""
    rng = rng_for(seed)
    g = np.sqrt(0.5) * (rng.standard_normal((draws, t, s)) + 1j * rng.standard_normal((draws, t, s)))
    gram = np.conj(np.swapaxes(g, 1, 2)) @ g
    mc = float(np.mean(np.linalg.slogdet(gram)[1]))
    exact = metrics.wishart_logdet_mean(s, t)
    return abs(mc - exact) / abs(exact)


def minkowski_violations(seeds: int, seed: int, n: int = 2, rho: float = 10.0) -> int:
    """Per-realisation det(I + a HH^H)^(1/n) >= 1 + a det(HH^H)^(1/n) on square iid channels."""
    bad = 0
    a = rho / n
    for i in range(seeds):
        h = draw_gtilde(trial_seed(seed, i), n, n, 1.0)
        hh = h @ h.conj().T
        lhs = np.linalg.det(np.eye(n) + a * hh).real ** (1.0 / n)
        rhs = 1.0 + a * abs(np.linalg.det(hh)) ** (1.0 / n)
        bad += int(lhs < rhs * (1.0 - 1e-12))
    return bad


def bound_validity_configs(base: SystemConfig, seed: int, count: int = 10) -> list[SystemConfig]:
    rng = rng_for(trial_seed(seed, _PROBE_STREAM - 1))
    out = [base]
    for _ in range(count):
        n_t = int(rng.choice([2, 4, 8]))
        out.append(base.replace(n_t=n_t, n_r=n_t, m_tx=int(rng.integers(8, 49)), n_rx=int(rng.integers(8, 65))))
    return out


def bound_validity_margins(
    configs: Sequence[SystemConfig], trials: int, seed: int, form: str = "separated", workers: int = 1
) -> list[tuple[float, float, float]]:
    """``(c_lb, c_mc, ci)`` per config with random phases at the config's own rho."""

    def one(cfg: SystemConfig) -> tuple[float, float, float]:
        scene = build_scene(cfg)
        comp = composite(PhaseProfile.random(scene, rng_for(trial_seed(seed, _RANDOM_STREAM))), scene)
        c_lb = metrics.capacity_lower_bound(comp, scene, cfg.snr_linear, form=form)
        mc = metrics.ergodic_capacity_mc(scene, comp, cfg.snr_linear, trials, seed)
        return c_lb, float(mc.mean[0]), float(mc.ci_halfwidth[0])

    return _ordered_map(one, list(configs), workers)


def correlation_imprint_error(config: SystemConfig, draws: int, seed: int) -> float:
    """Relative Frobenius error of the sample E[G^H G] / (N var) against R_T."""
    scene = build_scene(config)
    acc = np.zeros((scene.m, scene.m), dtype=complex)
    for i in range(draws):
        g = scene.r_r_sqrt @ draw_gtilde(trial_seed(seed, i), scene.n, scene.m, 1.0) @ scene.r_t_sqrt
        acc += g.conj().T @ g
    est = acc / (draws * np.trace(scene.r_r).real)
    return float(np.linalg.norm(est - scene.r_t) / np.linalg.norm(scene.r_t))


def random_psd(rng: np.random.Generator, n: int) -> np.ndarray:
    rank = int(rng.integers(1, n + 1))
    x = rng.standard_normal((n, rank)) + 1j * rng.standard_normal((n, rank))
    return x @ x.conj().T


def validation_report(
    spec: ExperimentSpec, gradient_hook: Callable[[Gradients], Gradients] | None = None
) -> dict[str, dict[str, Any]]:
    seed, base, form = spec.master_seed, spec.config, spec.bound_form
    report: dict[str, dict[str, Any]] = {}

    for name, threshold in (("clb", 1e-5), ("ebmin", 1e-5), ("s0", 1e-4)):
        errs = gradient_probe_errors(name, 20, seed, base, form, hook=gradient_hook)
        report[f"gradient_fd_{name}"] = _check(max(errs) < threshold, max(errs), threshold)

    for s, t in ((2, 2), (2, 4), (4, 8)):
        err = wishart_mc_error(s, t, 100_000, trial_seed(seed, s * 100 + t))
        report[f"wishart_mc_{s}x{t}"] = _check(err < 0.01, err, 0.01)

    bad = minkowski_violations(1000, seed)
    report["minkowski_per_realization"] = _check(bad == 0, bad, 0)

    margins = bound_validity_margins(bound_validity_configs(base, seed), spec.n_trials, seed, form, spec.workers)
    worst = max(c_lb - (c_mc + ci) for c_lb, c_mc, ci in margins)
    report["bound_validity"] = _check(worst <= 0.0, worst, 0.0)

    for n in (2, 4):
        sc = identity_scene(n, n)
        comp = composite(PhaseProfile.zeros(sc), sc)
        worst_eq, worst_gap = 0.0, -math.inf
        for rho in (0.1, 1.0, 10.0):
            c_lb = metrics.capacity_lower_bound(comp, sc, rho, form=form)
            worst_eq = max(worst_eq, abs(c_lb - metrics.matthaiou_bound(n, rho)))
            mc = metrics.ergodic_capacity_mc(sc, comp, rho, spec.n_trials, seed)
            worst_gap = max(worst_gap, c_lb - float(mc.mean[0] + mc.ci_halfwidth[0]))
        report[f"iid_reduction_n{n}"] = _check(worst_eq <= 1e-12, worst_eq, 1e-12)
        report[f"iid_reduction_below_mc_n{n}"] = _check(worst_gap <= 0.0, worst_gap, 0.0)

    err = correlation_imprint_error(base, 400, seed)
    report["correlation_imprint"] = _check(err < 0.05, err, 0.05)

    rng = rng_for(trial_seed(seed, _PROBE_STREAM - 2))
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 13))
        z = metrics.dispersion(random_psd(rng, n))
        worst = max(worst, 1.0 - z, z - n)
    worst = max(worst, abs(metrics.dispersion(np.eye(5)) - 1.0), abs(metrics.dispersion(np.diag([2.0, 0.0])) - 2.0))
    report["dispersion_bounds"] = _check(worst <= 1e-12, worst, 1e-12)

    worst = 0.0
    for n_t, n_r in ((8, 8), (4, 2), (2, 4)):
        sc = identity_scene(n_t, n_r)
        comp = composite(PhaseProfile.zeros(sc), sc)
        worst = max(
            worst,
            abs(metrics.min_energy_per_bit(comp, sc) - math.log(2.0) / n_r),
            abs(metrics.wideband_slope(comp, sc) - 2.0 * n_t * n_r / (n_t + n_r)),
        )
    report["low_snr_iid_reduction"] = _check(worst <= 1e-12, worst, 1e-12)
    return report


def run_validate(
    spec: ExperimentSpec, gradient_hook: Callable[[Gradients], Gradients] | None = None
) -> dict[str, Any]:
    report = validation_report(spec, gradient_hook)
    out = Path(spec.output_dir)
    js = _write_text(out / "report.json", json.dumps(report, indent=2, sort_keys=True) + "\n")
    rows = [(name, r["pass"], r["metric"], r["threshold"]) for name, r in sorted(report.items())]
    csv = write_csv(out / "validate.csv", spec.header(), ("check", "pass", "metric", "threshold"), rows)
    script = "\n".join(
        [
            "set datafile separator ','",
            "set datafile commentschars '#'",
            "set style data histograms",
            "set style fill solid",
            "set xtics rotate by -45",
            "set ylabel 'pass'",
            f"plot '{csv.name}' using 2:xtic(1) title 'check passed'",
        ]
    )
    gp = _write_text(out / "validate.gp", script + "\n")
    return {"report": report, "json": js, "csv": csv, "gp": gp, "ok": all(r["pass"] for r in report.values())}


RUNNERS = {
    "capacity_sweep": run_capacity_sweep,
    "low_snr": run_low_snr,
    "convergence": run_convergence,
    "validate": run_validate,
}


def run(spec: ExperimentSpec):
    return RUNNERS[spec.scenario](spec)

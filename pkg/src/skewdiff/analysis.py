"""Analysis reports and plot-data files built from a stored run."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from . import stats
from .dynamics import ObservableSpec, eval_observable
from .ensemble import EnsembleResult, SimulationConfig, renewal_increments, shape_orbit, trace_trajectory
from .groups import regular_even_bound, regular_path_e2, regular_path_e3
from .io import AnalysisConfig, DataError, FIGURES, write_columns

LAMINAR_ENDPOINTS = (0.05, 0.2)


def _fit_or_error(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs).to_dict()
    except ValueError as exc:
        return {"error": str(exc)}


def _tails(ensemble: EnsembleResult, c: np.ndarray, acfg: AnalysisConfig) -> dict:
    out: dict = {"block_length": acfg.block_length}
    try:
        blocks = stats.block_increments(ensemble, c, block=acfg.block_length, direction=0)
        out["fixed_blocks"] = stats.hill_sweep(blocks, acfg.hill_fractions).to_dict()
    except ValueError as exc:
        out["fixed_blocks"] = {"error": str(exc)}
    cfg = ensemble.config
    if cfg.group == "aniso":
        inc = renewal_increments(cfg, c, n_traj=acfg.renewal_traj)
        out["renewal_blocks"] = _fit_or_error(stats.hill_sweep, inc, acfg.hill_fractions)
        out["renewal_blocks_count"] = int(inc.size)
    return out


def _laminar(config: SimulationConfig, acfg: AnalysisConfig) -> dict:
    """Laminar statistics on a fresh long orbit of trajectory 0's shape variable."""
    orbit = shape_orbit(config, 0, acfg.laminar_steps)
    thresholds = sorted({acfg.laminar_x_c, *LAMINAR_ENDPOINTS})
    return {
        "orbit_length": int(orbit.size),
        "default": stats.laminar_segments(orbit, acfg.laminar_x_c).to_dict(),
        "sweep": [stats.laminar_segments(orbit, xc).to_dict() for xc in thresholds],
    }


def _autocorrelation(config: SimulationConfig, acfg: AnalysisConfig) -> dict:
    n = max(acfg.laminar_steps, 10 * acfg.acf_max_lag)
    orbit = shape_orbit(config, 0, n)
    try:
        return stats.autocorrelation(orbit, acfg.acf_max_lag, acfg.acf_fit_lags).to_dict()
    except ValueError as exc:
        return {"error": str(exc)}


def analyze(ensemble: EnsembleResult, acfg: AnalysisConfig | None = None) -> dict:
    """Full diffusion report for one ensemble."""
    acfg = AnalysisConfig() if acfg is None else acfg
    cfg = ensemble.config
    valid = ensemble.valid()
    if len(valid) == 0:
        raise DataError("every trajectory is flagged; nothing to analyse")
    regular = cfg.group.startswith("regular")
    drift = stats.estimate_drift(valid)
    c = stats.drift_for_detrending(drift, cfg.isotropic) if not regular else drift.value

    report: dict = {
        "config": cfg.to_dict(),
        "n_traj_used": len(valid),
        "n_traj_flagged": int(ensemble.hit_exact_zero.sum()),
        "drift": dict(drift.to_dict(), significant=drift.significant(), subtracted=np.asarray(c).tolist()),
    }

    fits = {}
    for st in acfg.statistics:
        fits[st] = _fit_or_error(stats.scaling_exponent, valid, c, st, fit_window=acfg.fit_window)
        if st == "rms" and cfg.params.weakly_chaotic:
            fits[st]["note"] = "second moments diverge in weak chaos; not used for classification"
    if cfg.group == "e3":
        for part in ("axis", "transverse"):
            fits[f"median_abs_{part}"] = _fit_or_error(
                stats.scaling_exponent, valid, c, "median_abs", fit_window=acfg.fit_window, part=part
            )
    for k in range(cfg.d if cfg.d > 1 else 0):
        fits[f"median_abs_p{k + 1}"] = _fit_or_error(
            stats.scaling_exponent, valid, c, "median_abs", fit_window=acfg.fit_window, direction=k
        )
    report["scaling"] = fits

    if not regular:
        report["tails"] = _tails(valid, np.asarray(c), acfg)
        report["laminar"] = _laminar(cfg, acfg)
        report["autocorrelation"] = _autocorrelation(cfg, acfg)
        if len(valid) >= 300 and valid.steps[-1] > 0:
            ks = stats.clt_normality(valid, c)
            report["normality"] = {
                "n": int(valid.steps[-1]),
                "ks_distance": ks.tolist(),
                "ks_stderr_scale": 1.0 / math.sqrt(len(valid)),
            }

    primary = None
    try:
        primary = stats.scaling_exponent(valid, c, "median_abs", fit_window=acfg.fit_window)
    except ValueError:
        pass
    ratio = stats.regular_growth_ratio(valid) if regular else None
    if ratio is not None:
        report["growth_ratio"] = ratio
    report["classification"] = stats.classify(primary, drift, growth_ratio=ratio)
    return report


# Plot data


def _header(config: SimulationConfig, content_hash: str, title: str) -> str:
    return (
        f"{title}\n"
        f"config_hash {content_hash}\n"
        f"group {config.group} gamma {config.params.gamma!r} base_seed {config.base_seed}"
    )


def _spec_for(config: SimulationConfig, kind: str) -> ObservableSpec:
    if kind == "even" and config.group in ("e2", "regular_even"):
        return config.spec
    if kind == "odd" and config.group in ("e3", "regular_odd"):
        return config.spec
    return ObservableSpec.euclidean2() if kind == "even" else ObservableSpec.euclidean3()


def figure1(config: SimulationConfig, content_hash: str, out_dir: Path, x0: float = 0.0) -> list[Path]:
    """Frozen-shape paths: planar loop (even) and corkscrew in the axis frame (odd)."""
    paths = []
    spec = _spec_for(config, "even")
    h = eval_observable(spec, "h", x0)
    v = eval_observable(spec, "v", x0)
    t = np.linspace(0.0, 3 * 2 * math.pi / abs(h), 1501)
    p = regular_path_e2(h, v, t)
    bound = regular_even_bound([h], [complex(v[0], v[1])])
    f = out_dir / "fig1_even.dat"
    write_columns(f, _header(config, content_hash, f"fig1 even: h={h!r} v={v.tolist()} bound={bound!r}"),
                  ["t", "p_1", "p_2"], [t, p[:, 0], p[:, 1]])
    paths.append(f)

    spec = _spec_for(config, "odd")
    w = eval_observable(spec, "h", x0)
    v = eval_observable(spec, "v", x0)
    t = np.linspace(0.0, 5 * 2 * math.pi / float(np.linalg.norm(w)), 2501)
    p = regular_path_e3(w, v, t, axis_frame=True)
    f = out_dir / "fig1_odd.dat"
    write_columns(f, _header(config, content_hash, f"fig1 odd (axis frame, p_1 along omega): omega={w.tolist()} v={v.tolist()}"),
                  ["t", "p_1", "p_2", "p_3"], [t, p[:, 0], p[:, 1], p[:, 2]])
    paths.append(f)
    return paths


def _trace_file(ensemble: EnsembleResult, content_hash: str, f: Path, title: str, n_traj: int = 4) -> Path:
    d = ensemble.d
    names = ["step"]
    cols = [ensemble.steps]
    for i in range(min(n_traj, len(ensemble))):
        for k in range(d):
            names.append(f"t{i}_p_{k + 1}")
            cols.append(ensemble.paths[i, :, k])
    write_columns(f, _header(ensemble.config, content_hash, title), names, cols)
    return f


def laminar_window(config: SimulationConfig, index: int = 0, n_steps: int | None = None, x_c: float = 0.1,
                   margin: int = 200):
    """Stride-1 trace around the longest laminar run of one trajectory.

    Returns (steps, x, p, excursions, bound): ``excursions`` has one
    (length, max distance from entry) row per laminar run in the whole
    trace and ``bound = 2 sup|v| / |c0|``.
    """
    if config.group != "e2":
        raise DataError("the laminar inset needs an e2 run")
    n = min(config.n_steps, 10**6) if n_steps is None else n_steps
    tr = trace_trajectory(config, index, n_steps=n, stride=1)
    exc = stats.laminar_excursions(tr.x, tr.p, x_c)
    c0 = min(abs(config.spec.rot_a[0]), abs(config.spec.rot_a[0] + config.spec.rot_b[0]))
    bound = 2.0 * config.spec.sup_speed("e2") / c0 if c0 > 0 else math.inf
    starts, ends = stats.laminar_runs(tr.x, x_c)
    j = int(np.argmax(ends - starts)) if starts.size else 0
    lo = max(0, int(starts[j]) - margin) if starts.size else 0
    hi = min(tr.x.size, int(ends[j]) + margin) if starts.size else min(tr.x.size, 2 * margin)
    return tr.steps[lo:hi], tr.x[lo:hi], tr.p[lo:hi], exc, bound


def figure3_inset(ensemble: EnsembleResult, content_hash: str, out_dir: Path) -> Path:
    steps, x, p, exc, bound = laminar_window(ensemble.config)
    worst = float(exc[:, 1].max()) if exc.size else 0.0
    f = out_dir / "fig3_inset.dat"
    title = (f"fig3 inset: longest laminar window at stride 1; max laminar excursion {worst!r} "
             f"bound 2 sup|v|/|c0| = {bound!r}")
    write_columns(f, _header(ensemble.config, content_hash, title), ["step", "x", "p_1", "p_2"],
                  [steps, x, p[:, 0], p[:, 1]])
    return f


def figure4(ensemble: EnsembleResult, content_hash: str, out_dir: Path, n_traj: int = 4) -> Path:
    valid = ensemble.valid()
    drift = stats.estimate_drift(valid)
    detr = stats.detrend_ensemble(valid, drift.value)
    f = out_dir / "fig4.dat"
    names = ["step"] + [f"t{i}_p_1_detrended" for i in range(min(n_traj, len(detr)))]
    cols = [detr.steps] + [detr.paths[i, :, 0] for i in range(min(n_traj, len(detr)))]
    title = f"fig4: p(n) - c n with c = {drift.value.tolist()} +- {drift.stderr.tolist()}"
    write_columns(f, _header(ensemble.config, content_hash, title), names, cols)
    return f


FIGURE_GROUPS = {"fig2": ("e3",), "fig3": ("e2",), "fig4": ("aniso",)}


def make_figure(ensemble: EnsembleResult, figure: str, run_dir) -> list[Path]:
    out = Path(run_dir) / FIGURES
    out.mkdir(parents=True, exist_ok=True)
    h = ensemble.meta.get("content_hash", "unknown")
    cfg = ensemble.config
    if figure == "fig1":
        return figure1(cfg, h, out)
    if figure not in FIGURE_GROUPS:
        raise ValueError(f"unknown figure {figure!r}")
    if cfg.group not in FIGURE_GROUPS[figure]:
        raise DataError(f"{figure} needs a {'/'.join(FIGURE_GROUPS[figure])} run, this run is {cfg.group}")
    if figure == "fig2":
        return [_trace_file(ensemble, h, out / "fig2.dat", "fig2: E(3) translation traces")]
    if figure == "fig3":
        return [_trace_file(ensemble, h, out / "fig3.dat", "fig3: E(2) translation traces"),
                figure3_inset(ensemble, h, out)]
    return [figure4(ensemble, h, out)]


__all__ = ["analyze", "make_figure", "figure1", "laminar_window", "FIGURE_GROUPS"]

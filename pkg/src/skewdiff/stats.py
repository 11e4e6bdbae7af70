"""Estimators for the diffusive behaviour of translation paths.

Exponent fits default to the median of |p(n) - c n| across the ensemble:
for stable laws with index below 2 the second moment is infinite, so
RMS-based (MSD) fits are only meaningful in the strongly chaotic regime.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy import stats as sps

from .ensemble import EnsembleResult, TrajectoryRecord

Statistic = Literal["median_abs", "iqr", "rms"]

HILL_FRACTIONS = (0.001, 0.005, 0.01, 0.05)
HILL_DEFAULT_FRACTION = 0.01
HILL_MIN_K = 20
LAMINAR_XC = 0.1
LAMINAR_XC_RANGE = (0.05, 0.2)
BLOCK_LENGTH = 1000

# Exponent bands; the gaps between them are dead zones.
DIFFUSIVE_BAND = (0.42, 0.58)
SUPERDIFFUSIVE_BAND = (0.6, 0.95)
BALLISTIC_MIN = 0.97
BOUNDED_MAX = 0.2
MAX_FIT_STDERR = 0.05
DRIFT_SIGMAS = 3.0


@dataclass(frozen=True)
class Drift:
    value: np.ndarray
    stderr: np.ndarray
    n_traj: int

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.value))

    @property
    def stderr_norm(self) -> float:
        return float(np.linalg.norm(self.stderr))

    def significant(self, sigmas: float = DRIFT_SIGMAS) -> bool:
        return self.norm > sigmas * self.stderr_norm

    def to_dict(self) -> dict:
        return {"value": self.value.tolist(), "stderr": self.stderr.tolist(), "n_traj": self.n_traj}


def estimate_drift(ensemble: EnsembleResult) -> Drift:
    """Ensemble mean of p(N)/N at the last recorded step, with its standard error."""
    ens = ensemble.valid()
    if len(ens) == 0:
        raise ValueError("empty ensemble")
    N = int(ens.steps[-1])
    if N == 0:
        raise ValueError("ensemble has no recorded steps beyond 0")
    rates = ens.paths[:, -1, :] / N
    se = rates.std(axis=0, ddof=1) / math.sqrt(len(ens)) if len(ens) > 1 else np.full(ens.d, np.inf)
    return Drift(value=rates.mean(axis=0), stderr=se, n_traj=len(ens))


def drift_for_detrending(drift: Drift, isotropic: bool) -> np.ndarray:
    """Drift to subtract: pinned to 0 for isotropic media unless it is significant."""
    if isotropic and not drift.significant():
        return np.zeros_like(drift.value)
    return drift.value


def detrend(record: TrajectoryRecord, c) -> TrajectoryRecord:
    c = np.atleast_1d(np.asarray(c, dtype=float))
    if c.shape[0] != record.p.shape[1]:
        raise ValueError("drift dimension does not match the path")
    return TrajectoryRecord(
        index=record.index,
        seed=record.seed,
        x0=record.x0,
        steps=record.steps,
        p=record.p - record.steps[:, None] * c,
        hit_exact_zero=record.hit_exact_zero,
        axis=record.axis,
    )


def detrend_ensemble(ensemble: EnsembleResult, c) -> EnsembleResult:
    c = np.atleast_1d(np.asarray(c, dtype=float))
    return ensemble.with_paths(ensemble.paths - ensemble.steps[None, :, None] * c, ensemble.axis_paths)


@dataclass(frozen=True)
class ScalingFit:
    """Log-log fit of an ensemble statistic.

    ``stderr`` combines in quadrature the regression standard error (how far
    the curve is from a pure power law) and a bootstrap over trajectories
    (how much the curve itself would move with a different ensemble).
    """

    exponent: float
    stderr: float
    fit_range: tuple[int, int]
    r_squared: float
    statistic: str
    n_points: int
    grid: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    regression_stderr: float = 0.0
    bootstrap_stderr: float = 0.0

    def to_dict(self) -> dict:
        return {
            "exponent": self.exponent,
            "stderr": self.stderr,
            "regression_stderr": self.regression_stderr,
            "bootstrap_stderr": self.bootstrap_stderr,
            "fit_range": list(self.fit_range),
            "r_squared": self.r_squared,
            "statistic": self.statistic,
            "n_points": self.n_points,
        }


def geometric_grid(steps: np.ndarray, n_points: int = 40) -> np.ndarray:
    """Recorded steps closest to a geometric sequence over the positive range."""
    pos = steps[steps > 0]
    if pos.size == 0:
        return pos
    target = np.geomspace(pos[0], pos[-1], n_points)
    idx = np.searchsorted(pos, target)
    idx = np.clip(idx, 0, pos.size - 1)
    return np.unique(pos[idx])


def default_fit_window(grid: np.ndarray) -> tuple[float, float]:
    """Skip the first decade and the last half-decade of the grid."""
    return float(grid[0]) * 10.0, float(grid[-1]) / math.sqrt(10.0)


def _project(residual: np.ndarray, direction) -> np.ndarray:
    """residual: (..., d). Returns (..., 1) projection or the input itself."""
    if direction is None:
        return residual
    if isinstance(direction, (int, np.integer)):
        return residual[..., [int(direction)]]
    e = np.asarray(direction, dtype=float)
    e = e / np.linalg.norm(e)
    return (residual @ e)[..., None]


def _cross_statistic(r: np.ndarray, statistic: Statistic) -> np.ndarray:
    """r: (n_traj, n_grid, d) -> (n_grid,)."""
    if statistic == "median_abs":
        return np.median(np.linalg.norm(r, axis=2), axis=0)
    if statistic == "iqr":
        q75, q25 = np.percentile(r, [75, 25], axis=0)
        return np.mean(q75 - q25, axis=1)
    if statistic == "rms":
        return np.sqrt(np.mean(np.sum(r * r, axis=2), axis=0))
    raise ValueError(f"unknown statistic {statistic!r}")


def fit_scaling(
    steps: np.ndarray,
    paths: np.ndarray,
    c=None,
    *,
    statistic: Statistic = "median_abs",
    time_grid: Sequence[int] | None = None,
    fit_window: tuple[float, float] | None = None,
    direction=None,
    n_boot: int = 200,
) -> ScalingFit:
    """Least-squares slope of log(statistic) against log(n).

    ``paths`` has shape (n_traj, n_records, d) sampled at ``steps``. The
    bootstrap resamples whole trajectories with a fixed generator, so the
    result is deterministic.
    """
    steps = np.asarray(steps)
    d = paths.shape[2]
    c = np.zeros(d) if c is None else np.atleast_1d(np.asarray(c, dtype=float))
    grid = geometric_grid(steps) if time_grid is None else np.asarray(time_grid, dtype=np.int64)
    pos = np.searchsorted(steps, grid)
    if np.any(pos >= steps.size) or np.any(steps[np.minimum(pos, steps.size - 1)] != grid):
        raise ValueError("time grid contains steps that were not recorded")
    if time_grid is None:
        lo, hi = default_fit_window(grid) if fit_window is None else fit_window
        keep = (grid >= lo * (1 - 1e-12)) & (grid <= hi * (1 + 1e-12))
        grid, pos = grid[keep], pos[keep]
    if grid.size < 4:
        raise ValueError(f"need at least 4 grid points for a scaling fit, got {grid.size}")
    r = _project(paths[:, pos, :] - grid[None, :, None] * c, direction)
    values = _cross_statistic(r, statistic)
    if np.any(values <= 0.0):
        raise ValueError("statistic vanishes on the grid; no power law to fit")
    logn = np.log(grid)
    res = sps.linregress(logn, np.log(values))
    boot = 0.0
    if n_boot > 1 and r.shape[0] > 1:
        rng = np.random.default_rng(0)
        centred = logn - logn.mean()
        slopes = np.empty(n_boot)
        for b in range(n_boot):
            vb = _cross_statistic(r[rng.integers(0, r.shape[0], r.shape[0])], statistic)
            slopes[b] = centred @ np.log(np.maximum(vb, np.finfo(float).tiny)) / (centred @ centred)
        boot = float(slopes.std(ddof=1))
    return ScalingFit(
        exponent=float(res.slope),
        stderr=math.hypot(float(res.stderr), boot),
        regression_stderr=float(res.stderr),
        bootstrap_stderr=boot,
        fit_range=(int(grid[0]), int(grid[-1])),
        r_squared=float(res.rvalue**2),
        statistic=statistic,
        n_points=int(grid.size),
        grid=grid,
        values=values,
    )


def scaling_exponent(
    ensemble: EnsembleResult,
    c=None,
    statistic: Statistic = "median_abs",
    time_grid: Sequence[int] | None = None,
    *,
    fit_window: tuple[float, float] | None = None,
    direction=None,
    part: Literal["full", "axis", "transverse"] = "full",
) -> ScalingFit:
    """Growth exponent of p(n) - c n across the ensemble.

    ``part`` selects, for E(3) runs, the displacement accumulated along the
    instantaneous rotation axis or the remainder transverse to it.
    """
    ens = ensemble.valid()
    if len(ens) < 100:
        raise ValueError("scaling fits need at least 100 trajectories")
    paths = ens.paths
    if part != "full":
        if ens.axis_paths is None:
            raise ValueError("axis decomposition is only recorded for E(3) runs")
        paths = ens.axis_paths if part == "axis" else ens.paths - ens.axis_paths
    return fit_scaling(
        ens.steps, paths, c, statistic=statistic, time_grid=time_grid, fit_window=fit_window, direction=direction
    )


@dataclass(frozen=True)
class TailFit:
    alpha_hill: float
    k_used: int
    asymmetry_sign: Literal["negative", "symmetric", "positive"]
    threshold: float
    n_samples: int
    n_positive: int
    n_negative: int

    @property
    def fraction(self) -> float:
        return self.k_used / self.n_samples

    def to_dict(self) -> dict:
        return {
            "alpha_hill": self.alpha_hill,
            "alpha_stderr": self.alpha_hill / math.sqrt(self.k_used),
            "k_used": self.k_used,
            "fraction": self.fraction,
            "asymmetry_sign": self.asymmetry_sign,
            "threshold": self.threshold,
            "n_samples": self.n_samples,
            "n_positive": self.n_positive,
            "n_negative": self.n_negative,
        }


def hill_estimator(increments, k: int) -> TailFit:
    """Hill estimate from the k largest |increments|.

    The asymmetry verdict compares how many of those k came from the positive
    and the negative side; differences within 2 sqrt(k) count as symmetric.
    """
    x = np.asarray(increments, dtype=float).ravel()
    n = x.size
    if n < 1000:
        raise ValueError(f"need at least 1000 increments for a tail fit, got {n}")
    if not (HILL_MIN_K <= k <= n // 10):
        raise ValueError(f"k must lie in [{HILL_MIN_K}, {n // 10}], got {k}")
    mag = np.abs(x)
    order = np.argsort(-mag, kind="stable")
    top = mag[order[: k + 1]]
    threshold = top[k]
    if threshold <= 0.0:
        raise ValueError("tail threshold is zero; too many null increments")
    logs = np.log(top[:k] / threshold)
    s = float(logs.sum())
    if s <= 0.0:
        raise ValueError("tied order statistics make the Hill estimate degenerate")
    signs = np.sign(x[order[:k]])
    n_pos = int((signs > 0).sum())
    n_neg = int((signs < 0).sum())
    diff = n_pos - n_neg
    if abs(diff) <= 2.0 * math.sqrt(n_pos + n_neg):
        verdict = "symmetric"
    else:
        verdict = "positive" if diff > 0 else "negative"
    return TailFit(
        alpha_hill=k / s,
        k_used=int(k),
        asymmetry_sign=verdict,
        threshold=float(threshold),
        n_samples=n,
        n_positive=n_pos,
        n_negative=n_neg,
    )


@dataclass(frozen=True)
class HillSweep:
    fits: tuple[TailFit, ...]
    default: TailFit

    @property
    def heavy_tailed(self) -> bool:
        """False when every point of the sweep exceeds 2 (no stable tail)."""
        return not all(f.alpha_hill > 2.0 for f in self.fits)

    def to_dict(self) -> dict:
        return {
            "sweep": [f.to_dict() for f in self.fits],
            "default": self.default.to_dict(),
            "heavy_tailed": self.heavy_tailed,
        }


def hill_sweep(increments, fractions=HILL_FRACTIONS, default_fraction=HILL_DEFAULT_FRACTION) -> HillSweep:
    x = np.asarray(increments, dtype=float).ravel()
    fits = []
    default = None
    for f in fractions:
        k = int(round(f * x.size))
        if k < HILL_MIN_K or k > x.size // 10:
            continue
        fit = hill_estimator(x, k)
        fits.append(fit)
        if f == default_fraction:
            default = fit
    if not fits:
        raise ValueError("sample too small for any point of the Hill sweep")
    if default is None:
        default = fits[-1]
    return HillSweep(fits=tuple(fits), default=default)


def block_increments(ensemble: EnsembleResult, c=None, block: int = BLOCK_LENGTH, direction=0) -> np.ndarray:
    """Detrended increments over consecutive blocks of ``block`` steps, pooled."""
    ens = ensemble.valid()
    stride = int(ens.steps[1] - ens.steps[0]) if ens.steps.size > 1 else 0
    if stride == 0 or block % stride:
        raise ValueError(f"block length {block} is not a multiple of the record stride {stride}")
    m = block // stride
    d = ens.d
    c = np.zeros(d) if c is None else np.atleast_1d(np.asarray(c, dtype=float))
    r = _project(ens.paths - ens.steps[None, :, None] * c, direction)[..., 0]
    return (r[:, m::m] - r[:, : -m : m][:, : r[:, m::m].shape[1]]).ravel()


@dataclass(frozen=True)
class LaminarStats:
    x_c: float
    segment_lengths: np.ndarray = field(repr=False)
    tail_index: float
    k_used: int

    @property
    def n_segments(self) -> int:
        return int(self.segment_lengths.size)

    def to_dict(self) -> dict:
        return {
            "x_c": self.x_c,
            "n_segments": self.n_segments,
            "mean_length": float(self.segment_lengths.mean()) if self.n_segments else None,
            "max_length": int(self.segment_lengths.max()) if self.n_segments else None,
            "tail_index": None if math.isnan(self.tail_index) else self.tail_index,
            "tail_index_stderr": None if math.isnan(self.tail_index) else self.tail_index / math.sqrt(self.k_used),
            "k_used": self.k_used,
        }


def laminar_runs(x: np.ndarray, x_c: float) -> tuple[np.ndarray, np.ndarray]:
    below = np.concatenate(([0], (np.asarray(x) < x_c).astype(np.int8), [0]))
    edges = np.diff(below)
    return np.flatnonzero(edges == 1), np.flatnonzero(edges == -1)


def laminar_segments(orbit, x_c: float = LAMINAR_XC, fraction: float = HILL_DEFAULT_FRACTION) -> LaminarStats:
    """Maximal runs of iterates below ``x_c`` and the Hill index of their lengths.

    The tail index is NaN when there are too few segments for a Hill fit.
    """
    if not (0.0 < x_c < 0.5):
        raise ValueError("x_c must lie in (0, 1/2)")
    starts, ends = laminar_runs(orbit, x_c)
    lengths = ends - starts
    k = int(round(fraction * lengths.size))
    tail = math.nan
    if k >= HILL_MIN_K and lengths.size >= 1000:
        tail = hill_estimator(lengths.astype(float), k).alpha_hill
    return LaminarStats(x_c=float(x_c), segment_lengths=lengths, tail_index=tail, k_used=k)


def laminar_excursions(x: np.ndarray, p: np.ndarray, x_c: float = LAMINAR_XC, min_length: int = 2) -> np.ndarray:
    """Largest distance from the entry point reached by p within each laminar run.

    ``x`` and ``p`` are per-step traces (p[k] is the translation before step k).
    Returns an array of (length, max_excursion) rows.
    """
    starts, ends = laminar_runs(x, x_c)
    rows = []
    for s, e in zip(starts, ends):
        if e - s < min_length:
            continue
        # p[e] already includes the increment of the last laminar step.
        seg = p[s : e + 1] - p[s]
        rows.append((e - s, float(np.max(np.linalg.norm(seg, axis=1)))))
    return np.array(rows).reshape(-1, 2)


@dataclass(frozen=True)
class Autocorrelation:
    acf: np.ndarray = field(repr=False)
    exponent: float
    stderr: float
    fit_lags: tuple[int, int]

    def to_dict(self) -> dict:
        return {"exponent": self.exponent, "stderr": self.stderr, "fit_lags": list(self.fit_lags)}


def autocorrelation(values, max_lag: int, fit_lags: tuple[int, int] | None = None, n_fit: int = 30) -> Autocorrelation:
    """Normalised autocovariance at lags 0..max_lag and a power-law decay fit.

    ``values`` may be 2-D (several orbits, one per row); their
    autocovariances are pooled around the common mean. The fitted exponent
    is the decay rate, i.e. minus the log-log slope.
    """
    y = np.atleast_2d(np.asarray(values, dtype=float))
    n = y.shape[1]
    if n < 10 * max_lag:
        raise ValueError("series must be at least 10 * max_lag long")
    y = y - y.mean()
    if not np.any(y):
        raise ValueError("zero variance: autocorrelation undefined")
    m = 1 << int(2 * n - 1).bit_length()
    acov = np.zeros(max_lag + 1)
    for row in y:
        f = np.fft.rfft(row, m)
        acov += np.fft.irfft(f * np.conj(f), m)[: max_lag + 1]
    acov /= y.shape[0] * (n - np.arange(max_lag + 1))
    if acov[0] <= 0.0:
        raise ValueError("zero variance: autocorrelation undefined")
    acf = acov / acov[0]
    lo, hi = fit_lags if fit_lags is not None else (max(1, max_lag // 100), max_lag)
    lags = np.unique(np.geomspace(lo, hi, n_fit).astype(int))
    lags = lags[acf[lags] > 0]
    exponent = stderr = math.nan
    if lags.size >= 4:
        res = sps.linregress(np.log(lags), np.log(acf[lags]))
        exponent, stderr = -float(res.slope), float(res.stderr)
    return Autocorrelation(acf=acf, exponent=exponent, stderr=stderr, fit_lags=(int(lo), int(hi)))


def clt_normality(ensemble: EnsembleResult, c=None, n: int | None = None) -> np.ndarray:
    """Per-component KS distance of the standardised (p(n) - c n)/sqrt(n) to N(0, 1)."""
    ens = ensemble.valid()
    if len(ens) < 300:
        raise ValueError(f"need at least 300 trajectories for the normality check, got {len(ens)}")
    k = ens.steps.size - 1 if n is None else int(np.searchsorted(ens.steps, n))
    if k >= ens.steps.size or (n is not None and ens.steps[k] != n):
        raise ValueError(f"step {n} was not recorded")
    step = int(ens.steps[k])
    if step == 0:
        raise ValueError("normality check needs n > 0")
    c = np.zeros(ens.d) if c is None else np.atleast_1d(np.asarray(c, dtype=float))
    z = (ens.paths[:, k, :] - c * step) / math.sqrt(step)
    out = np.empty(ens.d)
    for j in range(ens.d):
        col = z[:, j]
        sd = col.std(ddof=1)
        if sd == 0.0:
            out[j] = 1.0
            continue
        out[j] = sps.kstest((col - col.mean()) / sd, "norm").statistic
    return out


def regular_growth_ratio(ensemble: EnsembleResult, factor: int = 10) -> float:
    """Median over trajectories of max_{n<=N} |p(n)| / max_{n<=N/factor} |p(n)|.

    About 1 for bounded motion and about ``factor`` for linear growth.
    """
    ens = ensemble.valid()
    norms = np.linalg.norm(ens.paths, axis=2)
    cut = int(np.searchsorted(ens.steps, ens.steps[-1] // factor, side="right"))
    if cut < 2:
        raise ValueError("too few records for a growth ratio")
    early = norms[:, :cut].max(axis=1)
    late = norms.max(axis=1)
    ok = early > 0
    if not ok.any():
        return 1.0
    return float(np.median(late[ok] / early[ok]))


def classify(fit: ScalingFit | None, drift: Drift, *, growth_ratio: float | None = None) -> str:
    """Map a drift estimate and exponent fit onto the propagation-rate labels.

    Passing ``growth_ratio`` (see :func:`regular_growth_ratio`) selects the
    labels for frozen-shape runs: "ballistic" for ct + bounded, else "bounded".
    """
    if growth_ratio is not None:
        return "ballistic" if growth_ratio > 3.0 else "bounded"
    has_drift = drift.significant()
    if fit is None:
        return "inconclusive"
    g = fit.exponent
    if fit.stderr >= MAX_FIT_STDERR:
        return "inconclusive"
    if g < BOUNDED_MAX:
        return "ballistic" if has_drift else "bounded"
    prefix = "drift+" if has_drift else ""
    if DIFFUSIVE_BAND[0] <= g <= DIFFUSIVE_BAND[1]:
        return prefix + "diffusive"
    if SUPERDIFFUSIVE_BAND[0] <= g <= SUPERDIFFUSIVE_BAND[1]:
        return prefix + "superdiffusive"
    if g > BALLISTIC_MIN:
        return "ballistic"
    return "inconclusive"


__all__ = [
    "Drift",
    "ScalingFit",
    "TailFit",
    "HillSweep",
    "LaminarStats",
    "Autocorrelation",
    "estimate_drift",
    "drift_for_detrending",
    "detrend",
    "detrend_ensemble",
    "geometric_grid",
    "fit_scaling",
    "scaling_exponent",
    "hill_estimator",
    "hill_sweep",
    "block_increments",
    "laminar_segments",
    "laminar_runs",
    "laminar_excursions",
    "autocorrelation",
    "clt_normality",
    "regular_growth_ratio",
    "classify",
]

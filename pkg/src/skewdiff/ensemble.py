"""Deterministic Monte-Carlo ensembles of skew-product trajectories.

Seeding is fixed bit-exactly so that an ensemble is a pure function of its
configuration:

* trajectory ``i`` gets ``seed_i = mix(base_seed ^ ((i + 1) * G mod 2^64))``
  where ``mix`` is the SplitMix64 finaliser and ``G = 0x9E3779B97F4A7C15``;
* the initial shape value is drawn from a SplitMix64 stream started at
  ``seed_i``: ``state += G; z = mix(state); x0 = (z >> 11) * 2^-53``, redrawn
  while ``x0 <= 1e-12``.

For gamma = 0 the doubling map is iterated on an exact binary expansion of
x0: the accepted word ``z`` supplies the first 64 bits and further words
from the same stream supply the rest, so orbits never collapse onto 0 the
way floating-point doubling does.
"""

from __future__ import annotations

import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from . import _kernels
from .dynamics import ObservableSpec, PMParams, eval_observable
from .groups import SO2, SO3, RENORM_EVERY, regular_path_e2, regular_path_e3

log = logging.getLogger(__name__)

GROUPS = ("aniso", "e2", "e3", "regular_even", "regular_odd")
_KERNEL_GROUP = {"aniso": _kernels.GROUP_ANISO, "e2": _kernels.GROUP_E2, "e3": _kernels.GROUP_E3}

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
X0_FLOOR = 1e-12

WORKERS_ENV = "SKEWDIFF_WORKERS"
SEED_ENV = "SKEWDIFF_BASE_SEED"


class EnsembleError(RuntimeError):
    """One or more trajectories failed; ``failures`` maps index -> message."""

    def __init__(self, failures: dict[int, str]):
        self.failures = failures
        shown = ", ".join(f"#{i}: {m}" for i, m in list(failures.items())[:5])
        super().__init__(f"{len(failures)} trajectories failed ({shown})")


def splitmix64(z: int) -> int:
    """SplitMix64 output finaliser on a 64-bit integer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(base_seed: int, index: int) -> int:
    return splitmix64((base_seed & MASK64) ^ (((index + 1) * GOLDEN) & MASK64))


def _shape_stream(seed: int) -> tuple[float, np.ndarray]:
    """x0 and the packed generator state [rng, window_hi, window_lo, used]."""
    s = seed & MASK64
    while True:
        s = (s + GOLDEN) & MASK64
        z = splitmix64(s)
        x0 = (z >> 11) * 2.0**-53
        if x0 > X0_FLOOR:
            break
    s_next = (s + GOLDEN) & MASK64
    lo = splitmix64(s_next)
    return x0, np.array([s_next, z, lo, 0], dtype=np.uint64)


def sample_initial_condition(seed: int) -> float:
    """Uniform draw on (1e-12, 1), see the module docstring for the generator."""
    return _shape_stream(seed)[0]


@dataclass(frozen=True)
class SimulationConfig:
    group: str
    d: int
    params: PMParams
    spec: ObservableSpec
    n_steps: int = 1_000_000
    n_traj: int = 1000
    burn_in: int = 10_000
    record_stride: int = 1000
    base_seed: int = 0

    def __post_init__(self):
        if self.group not in GROUPS:
            raise ValueError(f"unknown group {self.group!r}; expected one of {GROUPS}")
        if self.n_steps < 0:
            raise ValueError("n_steps must be >= 0")
        if self.n_traj < 1:
            raise ValueError("n_traj must be >= 1")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if not (0 <= self.base_seed <= MASK64):
            raise ValueError("base_seed must fit in 64 unsigned bits")
        self._check_dimensions()

    def _check_dimensions(self):
        s, g, d = self.spec, self.group, self.d
        if g == "aniso":
            if d < 1:
                raise ValueError("aniso needs d >= 1")
            if len(s.phi_a) != d:
                raise ValueError(f"phi has {len(s.phi_a)} components but d = {d}")
            return
        need = 2 if g in ("e2", "regular_even") else 3
        if d != need:
            raise ValueError(f"group {g} needs d = {need}, got {d}")
        if len(s.v_a) != d:
            raise ValueError(f"v has {len(s.v_a)} components but d = {d}")
        rot_dim = 1 if need == 2 else 3
        if len(s.rot_a) != rot_dim:
            raise ValueError(f"rotation generator for {g} needs {rot_dim} components, got {len(s.rot_a)}")

    @property
    def n_records(self) -> int:
        return self.n_steps // self.record_stride + 1

    @property
    def steps(self) -> np.ndarray:
        return np.arange(self.n_records, dtype=np.int64) * self.record_stride

    @property
    def isotropic(self) -> bool:
        return self.group != "aniso"

    def to_dict(self) -> dict:
        out = asdict(self)
        out["params"] = {"gamma": self.params.gamma, "branch_at_half": self.params.branch_at_half}
        out["spec"] = {k: list(v) for k, v in asdict(self.spec).items()}
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SimulationConfig":
        data = dict(data)
        data["params"] = PMParams(**data["params"])
        data["spec"] = ObservableSpec(**{k: tuple(v) for k, v in data["spec"].items()})
        return cls(**data)


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    index: int
    seed: int
    x0: float
    steps: np.ndarray
    p: np.ndarray
    hit_exact_zero: bool = False
    axis: np.ndarray | None = None

    @property
    def samples(self) -> list[tuple[int, np.ndarray]]:
        return [(int(n), row) for n, row in zip(self.steps, self.p)]


@dataclass(eq=False)
class EnsembleResult:
    """Stacked trajectories: ``paths[i, k]`` is p of trajectory i at ``steps[k]``.

    For E(3) runs ``axis_paths`` holds the part of p accumulated along the
    instantaneous rotation axis (``p - axis_paths`` is the transverse part).
    """

    config: SimulationConfig
    steps: np.ndarray
    paths: np.ndarray
    seeds: np.ndarray
    x0: np.ndarray
    hit_exact_zero: np.ndarray
    axis_paths: np.ndarray | None = None
    wall_time: float = 0.0
    total_steps: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.paths.shape[0]

    @property
    def d(self) -> int:
        return self.paths.shape[2]

    def record(self, i: int) -> TrajectoryRecord:
        return TrajectoryRecord(
            index=i,
            seed=int(self.seeds[i]),
            x0=float(self.x0[i]),
            steps=self.steps,
            p=self.paths[i],
            hit_exact_zero=bool(self.hit_exact_zero[i]),
            axis=None if self.axis_paths is None else self.axis_paths[i],
        )

    @property
    def records(self) -> list[TrajectoryRecord]:
        return [self.record(i) for i in range(len(self))]

    def valid(self) -> "EnsembleResult":
        """Drop trajectories trapped at the indifferent fixed point."""
        keep = ~self.hit_exact_zero
        if keep.all():
            return self
        return EnsembleResult(
            config=self.config,
            steps=self.steps,
            paths=self.paths[keep],
            seeds=self.seeds[keep],
            x0=self.x0[keep],
            hit_exact_zero=self.hit_exact_zero[keep],
            axis_paths=None if self.axis_paths is None else self.axis_paths[keep],
            wall_time=self.wall_time,
            total_steps=self.total_steps,
            meta=dict(self.meta, dropped=int((~keep).sum())),
        )

    def with_paths(self, paths: np.ndarray, axis_paths: np.ndarray | None = None) -> "EnsembleResult":
        return EnsembleResult(
            config=self.config,
            steps=self.steps,
            paths=paths,
            seeds=self.seeds,
            x0=self.x0,
            hit_exact_zero=self.hit_exact_zero,
            axis_paths=axis_paths,
            wall_time=self.wall_time,
            total_steps=self.total_steps,
            meta=dict(self.meta),
        )


def _kernel_args(config: SimulationConfig):
    a, b = config.spec.velocity(config.group)
    rot_a = np.asarray(config.spec.rot_a or (0.0,), dtype=float)
    rot_b = np.asarray(config.spec.rot_b or (0.0,), dtype=float)
    return (
        np.asarray(a, dtype=float),
        np.asarray(b, dtype=float),
        rot_a,
        rot_b,
        float(config.params.gamma),
        config.params.branch_right,
        config.params.gamma == 0.0,
    )


def _regular_path(config: SimulationConfig, x0: float, t: np.ndarray) -> np.ndarray:
    v = eval_observable(config.spec, "v", x0)
    h = eval_observable(config.spec, "h", x0)
    if config.group == "regular_even":
        return regular_path_e2(h, v, t)
    return regular_path_e3(h, v, t)


def run_trajectory(config: SimulationConfig, index: int) -> TrajectoryRecord:
    """Burn in the shape variable, then record p every ``record_stride`` steps."""
    seed = derive_seed(config.base_seed, index)
    x0, u = _shape_stream(seed)
    steps = config.steps
    if config.group.startswith("regular"):
        p = _regular_path(config, x0, steps.astype(float))
        return TrajectoryRecord(index=index, seed=seed, x0=x0, steps=steps, p=p)
    tr = trace_trajectory(config, index, stride=config.record_stride, record_x=False)
    return TrajectoryRecord(
        index=index,
        seed=seed,
        x0=x0,
        steps=tr.steps,
        p=tr.p,
        hit_exact_zero=tr.hit_exact_zero,
        axis=tr.axis if config.group == "e3" else None,
    )


class Trace(NamedTuple):
    steps: np.ndarray
    p: np.ndarray
    x: np.ndarray | None
    axis: np.ndarray | None
    hit_exact_zero: bool
    max_orthogonality_defect: float


def trace_trajectory(
    config: SimulationConfig,
    index: int,
    *,
    n_steps: int | None = None,
    stride: int = 1,
    rot0=None,
    record_x: bool = True,
) -> Trace:
    """Single trajectory at arbitrary resolution, optionally from a rotated frame.

    ``rot0`` is an :class:`SO2` angle for E(2) or an :class:`SO3` (or 3x3
    array) for E(3); the default is the identity.
    """
    if config.group not in _KERNEL_GROUP:
        raise ValueError(f"no stepper for group {config.group!r}")
    n = config.n_steps if n_steps is None else int(n_steps)
    x0, u = _shape_stream(derive_seed(config.base_seed, index))
    theta0 = 0.0
    A0 = np.eye(3)
    if rot0 is not None:
        if config.group == "e2":
            theta0 = rot0.theta if isinstance(rot0, SO2) else float(rot0)
        elif config.group == "e3":
            A0 = np.array(rot0.R if isinstance(rot0, SO3) else rot0, dtype=float)
        else:
            raise ValueError("anisotropic trajectories have no rotation state")
    nrec = n // stride + 1
    p = np.empty((nrec, config.d))
    axis = np.empty((nrec, 3))
    xs = np.empty(nrec if record_x else 1)
    phi_a, phi_b, rot_a, rot_b, gamma, branch_right, exact = _kernel_args(config)
    hit, defect = _kernels.run_path(
        _KERNEL_GROUP[config.group],
        x0,
        u,
        theta0,
        A0,
        phi_a,
        phi_b,
        rot_a,
        rot_b,
        gamma,
        branch_right,
        exact,
        config.burn_in,
        n,
        stride,
        RENORM_EVERY,
        p,
        axis,
        xs,
        record_x,
        config.group == "e3",
    )
    return Trace(
        steps=np.arange(nrec, dtype=np.int64) * stride,
        p=p,
        x=xs if record_x else None,
        axis=axis if config.group == "e3" else None,
        hit_exact_zero=bool(hit),
        max_orthogonality_defect=float(defect),
    )


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_ensemble(config: SimulationConfig, workers: int | None = None) -> EnsembleResult:
    """All ``n_traj`` trajectories, assembled in index order.

    Trajectories are split into contiguous chunks handed to a thread pool; the
    compiled loop releases the GIL. Output does not depend on ``workers``.
    """
    workers = default_workers() if workers is None else max(1, int(workers))
    n = config.n_traj
    seeds = np.array([derive_seed(config.base_seed, i) for i in range(n)], dtype=np.uint64)
    x0s = np.empty(n)
    ustates = np.empty((n, 4), dtype=np.uint64)
    for i in range(n):
        x0s[i], ustates[i] = _shape_stream(int(seeds[i]))

    steps = config.steps
    t_start = time.perf_counter()
    flags = np.zeros(n, dtype=np.bool_)
    axis_paths = None
    if config.group.startswith("regular"):
        paths = np.stack([_regular_path(config, float(x), steps.astype(float)) for x in x0s])
    else:
        paths = np.empty((n, config.n_records, config.d))
        axis_buf = np.empty((n, config.n_records, 3)) if config.group == "e3" else np.empty((n, 1, 3))
        args = _kernel_args(config)
        group = _KERNEL_GROUP[config.group]

        def work(bounds):
            lo, hi = bounds
            _kernels.run_batch(
                group, x0s, ustates, *args,
                config.burn_in, config.n_steps, config.record_stride, RENORM_EVERY,
                lo, hi, paths, axis_buf, flags,
            )

        n_chunks = min(n, workers * 4)
        edges = np.linspace(0, n, n_chunks + 1).astype(int)
        chunks = [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]
        if workers == 1:
            for c in chunks:
                work(c)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(work, chunks))
        if config.group == "e3":
            axis_paths = axis_buf

    wall = time.perf_counter() - t_start
    bad = ~np.all(np.isfinite(paths.reshape(n, -1)), axis=1)
    if bad.any():
        raise EnsembleError({int(i): "non-finite translation" for i in np.flatnonzero(bad)})
    if flags.any():
        log.warning("%d of %d trajectories hit x = 0 exactly", int(flags.sum()), n)
    return EnsembleResult(
        config=config,
        steps=steps,
        paths=paths,
        seeds=seeds,
        x0=x0s,
        hit_exact_zero=flags,
        axis_paths=axis_paths,
        wall_time=wall,
        total_steps=n * (config.n_steps + config.burn_in),
        meta={"workers": workers},
    )


def birkhoff_average(params: PMParams, a, b, n: int, seed: int, burn_in: int = 0) -> np.ndarray:
    """Time average of ``a + b*x`` along one orbit of length ``n``."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    x0, u = _shape_stream(seed)
    total = _kernels.birkhoff_sum(
        x0, u, int(burn_in), int(n), params.gamma, params.branch_right, params.gamma == 0.0
    )
    return a + b * (total / n)


def shape_orbit(config: SimulationConfig, index: int, n: int | None = None) -> np.ndarray:
    """Shape values x_0..x_n of trajectory ``index`` after its burn-in.

    These are the shape values that drive the recorded translation path.
    """
    n = config.n_steps if n is None else int(n)
    x0, u = _shape_stream(derive_seed(config.base_seed, index))
    out = np.empty(config.burn_in + n + 1)
    if config.params.gamma == 0.0:
        _kernels.exact_doubling_orbit(u, out.size - 1, out)
    else:
        _kernels.orbit(x0, out.size - 1, config.params.gamma, config.params.branch_right, out)
    return out[config.burn_in :]


def renewal_increments(config: SimulationConfig, c, *, n_traj: int = 10, direction=None) -> np.ndarray:
    """Detrended translation summed over renewal blocks of the shape orbit.

    A block runs from one visit to the expanding branch x >= 1/2 up to the
    next, so each block carries exactly one laminar flight. Only the
    anisotropic case is supported; for d > 1 the increments are projected
    onto ``direction`` (default: the first axis).
    """
    if config.group != "aniso":
        raise ValueError("renewal increments are defined for the anisotropic case")
    a, b = (np.asarray(t) for t in config.spec.velocity("aniso"))
    c = np.atleast_1d(np.asarray(c, dtype=float))
    e = np.zeros(config.d)
    if direction is None:
        e[0] = 1.0
    else:
        e = np.asarray(direction, dtype=float)
        e = e / np.linalg.norm(e)
    wa, wb, wc = float(a @ e), float(b @ e), float(c @ e)
    chunks = []
    buf = np.empty(config.n_steps)
    for i in range(min(n_traj, config.n_traj)):
        x0, u = _shape_stream(derive_seed(config.base_seed, i))
        m = _kernels.renewal_sums(
            x0, u, config.burn_in, config.n_steps, config.params.gamma,
            config.params.branch_right, config.params.gamma == 0.0, wa, wb, wc, buf,
        )
        chunks.append(buf[:m].copy())
    return np.concatenate(chunks) if chunks else np.empty(0)


__all__ = [
    "SimulationConfig",
    "TrajectoryRecord",
    "EnsembleResult",
    "EnsembleError",
    "Trace",
    "GROUPS",
    "derive_seed",
    "splitmix64",
    "sample_initial_condition",
    "run_trajectory",
    "run_ensemble",
    "trace_trajectory",
    "birkhoff_average",
    "renewal_increments",
    "shape_orbit",
    "default_workers",
]


"""Run configuration files, trajectory CSVs, manifests and plot-data files.

Config files are sectioned ``key = value`` text::

    [group]
    type = aniso          ; aniso | e2 | e3 | regular_even | regular_odd
    d = 1

    [dynamics]
    gamma = 0.7
    branch_at_half = right

    [observables]
    c0 = 1.0              ; rotation rate scale for the e2/e3 presets
    phi_a = 1.0           ; comma-separated vectors override the preset
    phi_b = 1.0

    [ensemble]
    n_steps = 1000000
    n_traj = 1000
    burn_in = 10000
    record_stride = 1000

    [seeds]
    base_seed = 0

Every key is optional; unknown sections or keys are errors.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import ObservableSpec, PMParams
from .ensemble import (
    GROUPS,
    EnsembleResult,
    SimulationConfig,
    derive_seed,
    sample_initial_condition,
)


class ConfigError(ValueError):
    """Malformed or inconsistent configuration (CLI exit code 2)."""


class DataError(RuntimeError):
    """Missing or corrupt run data (CLI exit code 3)."""


TRAJECTORIES = "trajectories.csv"
MANIFEST = "manifest.json"
ANALYSIS = "analysis.json"
FIGURES = "figures"

_SCHEMA: dict[str, dict[str, str]] = {
    "group": {"type": "aniso", "d": ""},
    "dynamics": {"gamma": "0.7", "branch_at_half": "right"},
    "observables": {"c0": "1.0", "phi_a": "", "phi_b": "", "v_a": "", "v_b": "", "rot_a": "", "rot_b": ""},
    "ensemble": {"n_steps": "1000000", "n_traj": "1000", "burn_in": "10000", "record_stride": "1000"},
    "seeds": {"base_seed": "0"},
}

_ANALYSIS_SCHEMA: dict[str, dict[str, str]] = {
    "analysis": {
        "statistics": "median_abs, iqr, rms",
        "fit_min": "",
        "fit_max": "",
        "block_length": "1000",
        "hill_fractions": "0.001, 0.005, 0.01, 0.05",
        "renewal_traj": "10",
        "laminar_x_c": "0.1",
        "laminar_steps": "10000000",
        "acf_max_lag": "10000",
        "acf_fit_min": "100",
        "acf_fit_max": "10000",
    }
}


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    """(section, key) -> 1-based line number, for diagnostics."""
    where: dict[tuple[str, str], int] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        m = re.fullmatch(r"\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip()
            where[(section, "")] = lineno
            continue
        key = re.split(r"[=:]", line, maxsplit=1)[0].strip().lower()
        if section is not None:
            where[(section, key)] = lineno
    return where


def _read_sections(text: str, schema: dict[str, dict[str, str]], source: str) -> tuple[dict, dict]:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    lines = _key_lines(text)
    values: dict[str, dict[str, str]] = {}
    for section in parser.sections():
        if section not in schema:
            raise ConfigError(
                f"{source}:{lines.get((section, ''), '?')}: unknown section [{section}]; "
                f"expected one of {sorted(schema)}"
            )
        for key, val in parser.items(section):
            if key not in schema[section]:
                raise ConfigError(
                    f"{source}:{lines.get((section, key), '?')}: unknown key '{key}' in [{section}]"
                )
            values.setdefault(section, {})[key] = val.strip()
    merged = {s: dict(defaults, **values.get(s, {})) for s, defaults in schema.items()}
    return merged, lines


class _Reader:
    def __init__(self, merged: dict, lines: dict, source: str):
        self.merged, self.lines, self.source = merged, lines, source

    def fail(self, section: str, key: str, msg: str):
        line = self.lines.get((section, key))
        loc = f"{self.source}:{line}" if line else self.source
        raise ConfigError(f"{loc}: [{section}] {key}: {msg}")

    def raw(self, section: str, key: str) -> str:
        return self.merged[section][key]

    def integer(self, section: str, key: str) -> int:
        try:
            return int(self.raw(section, key), 0)
        except ValueError:
            self.fail(section, key, f"expected an integer, got {self.raw(section, key)!r}")

    def real(self, section: str, key: str) -> float:
        try:
            return float(self.raw(section, key))
        except ValueError:
            self.fail(section, key, f"expected a number, got {self.raw(section, key)!r}")

    def vector(self, section: str, key: str) -> tuple[float, ...] | None:
        raw = self.raw(section, key)
        if not raw:
            return None
        try:
            return tuple(float(t) for t in raw.replace(",", " ").split())
        except ValueError:
            self.fail(section, key, f"expected comma-separated numbers, got {raw!r}")


def _default_spec(group: str, d: int, c0: float) -> ObservableSpec:
    if group == "aniso":
        return ObservableSpec.anisotropic(d)
    if group in ("e2", "regular_even"):
        return ObservableSpec.euclidean2(c0)
    return ObservableSpec.euclidean3(c0)


def parse_config(text: str, source: str = "<config>", *, base_seed: int | None = None) -> SimulationConfig:
    """Build a :class:`SimulationConfig`; errors carry the file and line."""
    merged, lines = _read_sections(text, _SCHEMA, source)
    r = _Reader(merged, lines, source)

    group = r.raw("group", "type")
    if group not in GROUPS:
        r.fail("group", "type", f"unknown group {group!r}; expected one of {list(GROUPS)}")
    default_d = {"aniso": 1, "e2": 2, "regular_even": 2}.get(group, 3)
    d = r.integer("group", "d") if r.raw("group", "d") else default_d

    gamma = r.real("dynamics", "gamma")
    try:
        params = PMParams(gamma, r.raw("dynamics", "branch_at_half"))
    except ValueError as exc:
        key = "gamma" if "gamma" in str(exc) else "branch_at_half"
        r.fail("dynamics", key, str(exc))

    c0 = r.real("observables", "c0")
    base = _default_spec(group, d, c0) if d >= 1 else None
    fields = {}
    for key in ("phi_a", "phi_b", "v_a", "v_b", "rot_a", "rot_b"):
        vec = r.vector("observables", key)
        fields[key] = vec if vec is not None else (getattr(base, key) if base is not None else ())
    try:
        spec = ObservableSpec(**fields)
    except ValueError as exc:
        r.fail("observables", "phi_a", str(exc))

    seed = r.integer("seeds", "base_seed") if base_seed is None else int(base_seed)
    try:
        return SimulationConfig(
            group=group,
            d=d,
            params=params,
            spec=spec,
            n_steps=r.integer("ensemble", "n_steps"),
            n_traj=r.integer("ensemble", "n_traj"),
            burn_in=r.integer("ensemble", "burn_in"),
            record_stride=r.integer("ensemble", "record_stride"),
            base_seed=seed,
        )
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_config(path, *, base_seed: int | None = None) -> SimulationConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, str(path), base_seed=base_seed)


def format_config(config: SimulationConfig) -> str:
    """Inverse of :func:`parse_config` (explicit vectors, no presets)."""
    vec = lambda t: ", ".join(repr(float(c)) for c in t)  # noqa: E731
    s = config.spec
    lines = [
        "[group]",
        f"type = {config.group}",
        f"d = {config.d}",
        "",
        "[dynamics]",
        f"gamma = {config.params.gamma!r}",
        f"branch_at_half = {config.params.branch_at_half}",
        "",
        "[observables]",
    ]
    for key in ("phi_a", "phi_b", "v_a", "v_b", "rot_a", "rot_b"):
        if getattr(s, key):
            lines.append(f"{key} = {vec(getattr(s, key))}")
    lines += [
        "",
        "[ensemble]",
        f"n_steps = {config.n_steps}",
        f"n_traj = {config.n_traj}",
        f"burn_in = {config.burn_in}",
        f"record_stride = {config.record_stride}",
        "",
        "[seeds]",
        f"base_seed = {config.base_seed}",
        "",
    ]
    return "\n".join(lines)


@dataclass(frozen=True)
class AnalysisConfig:
    statistics: tuple[str, ...] = ("median_abs", "iqr", "rms")
    fit_window: tuple[float, float] | None = None
    block_length: int = 1000
    hill_fractions: tuple[float, ...] = (0.001, 0.005, 0.01, 0.05)
    renewal_traj: int = 10
    laminar_x_c: float = 0.1
    laminar_steps: int = 10_000_000
    acf_max_lag: int = 10_000
    acf_fit_lags: tuple[int, int] = (100, 10_000)


def parse_analysis_config(text: str, source: str = "<analysis>") -> AnalysisConfig:
    merged, lines = _read_sections(text, _ANALYSIS_SCHEMA, source)
    r = _Reader(merged, lines, source)
    stats = tuple(t.strip() for t in r.raw("analysis", "statistics").split(",") if t.strip())
    for st in stats:
        if st not in ("median_abs", "iqr", "rms"):
            r.fail("analysis", "statistics", f"unknown statistic {st!r}")
    window = None
    if r.raw("analysis", "fit_min") or r.raw("analysis", "fit_max"):
        window = (r.real("analysis", "fit_min"), r.real("analysis", "fit_max"))
    x_c = r.real("analysis", "laminar_x_c")
    if not 0.0 < x_c < 0.5:
        r.fail("analysis", "laminar_x_c", "must lie in (0, 1/2)")
    return AnalysisConfig(
        statistics=stats,
        fit_window=window,
        block_length=r.integer("analysis", "block_length"),
        hill_fractions=r.vector("analysis", "hill_fractions") or (),
        renewal_traj=r.integer("analysis", "renewal_traj"),
        laminar_x_c=x_c,
        laminar_steps=r.integer("analysis", "laminar_steps"),
        acf_max_lag=r.integer("analysis", "acf_max_lag"),
        acf_fit_lags=(r.integer("analysis", "acf_fit_min"), r.integer("analysis", "acf_fit_max")),
    )


def load_analysis_config(path) -> AnalysisConfig:
    if path is None:
        return AnalysisConfig()
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read analysis config {path}: {exc}") from exc
    return parse_analysis_config(text, str(path))


# CSV


def csv_columns(d: int, with_axis: bool) -> list[str]:
    cols = ["traj_index", "step"] + [f"p_{k + 1}" for k in range(d)]
    if with_axis:
        cols += [f"axis_{k + 1}" for k in range(3)]
    return cols


def write_csv(ensemble: EnsembleResult, path) -> None:
    """One row per (trajectory, recorded step); reals with 17 significant digits."""
    n, nrec, d = ensemble.paths.shape
    with_axis = ensemble.axis_paths is not None
    cols = csv_columns(d, with_axis)
    fmt = ",".join(["%d", "%d"] + ["%.17g"] * (len(cols) - 2))
    idx = np.repeat(np.arange(n), nrec)
    steps = np.tile(ensemble.steps, n)
    reals = ensemble.paths.reshape(n * nrec, d)
    if with_axis:
        reals = np.hstack([reals, ensemble.axis_paths.reshape(n * nrec, 3)])
    with open(path, "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        # savetxt handles mixed int/float formats per column via one format string.
        table = np.empty((n * nrec, len(cols)), dtype=object)
        table[:, 0] = idx
        table[:, 1] = steps
        table[:, 2:] = reals
        buf = io.StringIO()
        np.savetxt(buf, table, fmt=fmt)
        fh.write(buf.getvalue())


def read_csv(path, config: SimulationConfig) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    """Parse a trajectory CSV back into (steps, paths, axis_paths)."""
    path = Path(path)
    try:
        with open(path) as fh:
            header = fh.readline().strip().split(",")
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot parse {path}: {exc}") from exc
    with_axis = config.group == "e3"
    expected = csv_columns(config.d, with_axis)
    if header != expected:
        raise DataError(f"{path}: header {header} does not match expected {expected}")
    n, nrec = config.n_traj, config.n_records
    if data.shape != (n * nrec, len(expected)):
        raise DataError(f"{path}: expected {n * nrec} rows of {len(expected)} columns, got {data.shape}")
    idx = data[:, 0].astype(np.int64).reshape(n, nrec)
    steps = data[:, 1].astype(np.int64).reshape(n, nrec)
    if not (np.all(idx == np.arange(n)[:, None]) and np.all(steps == config.steps[None, :])):
        raise DataError(f"{path}: trajectories are not contiguous and sorted, or steps do not match the config")
    paths = data[:, 2 : 2 + config.d].reshape(n, nrec, config.d).copy()
    axis = data[:, 2 + config.d :].reshape(n, nrec, 3).copy() if with_axis else None
    return config.steps, paths, axis


# Manifest


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def content_hash(run_dir, artifacts: dict[str, str]) -> str:
    """sha256 over (name, file digest) pairs in name order."""
    h = hashlib.sha256()
    for name in sorted(artifacts):
        h.update(name.encode())
        h.update(b"\0")
        h.update(file_sha256(Path(run_dir) / artifacts[name]).encode())
        h.update(b"\n")
    return h.hexdigest()


def write_run(ensemble: EnsembleResult, out_dir) -> dict:
    """Write trajectories.csv and manifest.json; returns the manifest."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_csv(ensemble, out / TRAJECTORIES)
    except OSError as exc:
        raise DataError(f"cannot write to {out}: {exc}") from exc
    artifacts = {"trajectories": TRAJECTORIES}
    manifest = {
        "tool": "skewdiff",
        "version": __version__,
        "config": ensemble.config.to_dict(),
        "artifacts": artifacts,
        "content_hash": content_hash(out, artifacts),
        "hit_exact_zero": [int(i) for i in np.flatnonzero(ensemble.hit_exact_zero)],
        "run": {
            "wall_time_s": ensemble.wall_time,
            "total_steps": ensemble.total_steps,
            "workers": ensemble.meta.get("workers"),
        },
    }
    try:
        (out / MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n")
    except OSError as exc:
        raise DataError(f"cannot write to {out}: {exc}") from exc
    return manifest


def read_manifest(run_dir) -> dict:
    path = Path(run_dir) / MANIFEST
    try:
        manifest = json.loads(path.read_text())
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    for key in ("config", "artifacts", "content_hash"):
        if key not in manifest:
            raise DataError(f"{path}: missing '{key}'")
    return manifest


def verify_run(run_dir, manifest: dict | None = None) -> None:
    manifest = read_manifest(run_dir) if manifest is None else manifest
    for name, rel in manifest["artifacts"].items():
        if not (Path(run_dir) / rel).is_file():
            raise DataError(f"{run_dir}: artifact '{name}' ({rel}) is missing")
    actual = content_hash(run_dir, manifest["artifacts"])
    if actual != manifest["content_hash"]:
        raise DataError(f"{run_dir}: content hash mismatch (manifest {manifest['content_hash'][:12]}, files {actual[:12]})")


def load_run(run_dir) -> EnsembleResult:
    """Reload a simulate output directory after checking its content hash."""
    manifest = read_manifest(run_dir)
    verify_run(run_dir, manifest)
    try:
        config = SimulationConfig.from_dict(manifest["config"])
    except (TypeError, ValueError, KeyError) as exc:
        raise DataError(f"{run_dir}: invalid config echo: {exc}") from exc
    steps, paths, axis = read_csv(Path(run_dir) / manifest["artifacts"]["trajectories"], config)
    seeds = np.array([derive_seed(config.base_seed, i) for i in range(config.n_traj)], dtype=np.uint64)
    x0 = np.array([sample_initial_condition(int(s)) for s in seeds])
    flags = np.zeros(config.n_traj, dtype=bool)
    flags[manifest.get("hit_exact_zero", [])] = True
    run = manifest.get("run", {})
    return EnsembleResult(
        config=config,
        steps=steps,
        paths=paths,
        seeds=seeds,
        x0=x0,
        hit_exact_zero=flags,
        axis_paths=axis,
        wall_time=float(run.get("wall_time_s") or 0.0),
        total_steps=int(run.get("total_steps") or 0),
        meta={"workers": run.get("workers"), "content_hash": manifest["content_hash"]},
    )


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2) + "\n")


def write_columns(path, header: str, names: list[str], columns) -> None:
    """Whitespace-delimited table with ``#`` comment lines on top."""
    table = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    comment = "\n".join(header.splitlines() + [" ".join(names)])
    np.savetxt(path, table, fmt="%.17g", header=comment, comments="# ")


def read_columns(path) -> tuple[list[str], np.ndarray]:
    """Column names (last comment line) and the numeric table."""
    names: list[str] = []
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            names = line[1:].split()
    return names, np.loadtxt(path, ndmin=2)


__all__ = [
    "ConfigError",
    "DataError",
    "AnalysisConfig",
    "parse_config",
    "load_config",
    "format_config",
    "parse_analysis_config",
    "load_analysis_config",
    "write_csv",
    "read_csv",
    "write_run",
    "read_manifest",
    "verify_run",
    "load_run",
    "content_hash",
    "write_json",
    "write_columns",
    "read_columns",
]

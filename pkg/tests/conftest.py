"""Shared desk-scale ensembles (built lazily, once per session) and the
acceptance summary printed at the end of the run."""

import functools

import pytest

from skewdiff.dynamics import ObservableSpec, PMParams
from skewdiff.ensemble import SimulationConfig, run_ensemble

DESK = dict(n_steps=10**6, n_traj=1000, burn_in=10**4, record_stride=1000, base_seed=0)

H_ZERO_E2 = ObservableSpec(phi_a=(), phi_b=(), v_a=(1.0, 0.0), v_b=(1.0, 0.0), rot_a=(0.0,), rot_b=(0.0,))


@functools.lru_cache(maxsize=None)
def desk_ensemble(group: str, gamma: float, variant: str = "default"):
    if group == "aniso":
        spec, d = ObservableSpec.anisotropic(1), 1
    elif group == "e2":
        spec, d = (H_ZERO_E2 if variant == "h0" else ObservableSpec.euclidean2(1.0)), 2
    else:
        spec, d = ObservableSpec.euclidean3(1.0), 3
    return run_ensemble(SimulationConfig(group, d, PMParams(gamma), spec, **DESK))


@pytest.fixture(scope="session")
def aniso_strong_ensemble():
    return desk_ensemble("aniso", 0.2)


@pytest.fixture(scope="session")
def aniso_weak_ensemble():
    return desk_ensemble("aniso", 0.7)


@pytest.fixture(scope="session")
def e2_weak_ensemble():
    return desk_ensemble("e2", 0.7)


@pytest.fixture(scope="session")
def e2_h0_weak_ensemble():
    return desk_ensemble("e2", 0.7, "h0")


@pytest.fixture(scope="session")
def e3_weak_ensemble():
    return desk_ensemble("e3", 0.7)


@pytest.fixture(scope="session")
def e3_strong_ensemble():
    return desk_ensemble("e3", 0.2)


@pytest.fixture(scope="session")
def doubling_ensemble():
    cfg = SimulationConfig("aniso", 1, PMParams(0.0), ObservableSpec.anisotropic(1), **dict(DESK, n_traj=100))
    return run_ensemble(cfg)


@pytest.fixture(scope="session")
def e2_strong_ensemble():
    cfg = SimulationConfig("e2", 2, PMParams(0.2), ObservableSpec.euclidean2(1.0),
                           **dict(DESK, n_traj=300, n_steps=10**5))
    return run_ensemble(cfg)


# criterion number -> (passed, detail)
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record the outcome of one acceptance criterion (used as ``with criterion(n) as log:``)."""

    class _Recorder:
        def __init__(self, n):
            self.n = n
            self.details = []

        def __call__(self, msg):
            self.details.append(msg)

        def __enter__(self):
            return self

        def __exit__(self, exc_type, exc, tb):
            detail = "; ".join(self.details)
            if exc_type is not None:
                detail = f"{detail}; {exc_type.__name__}: {exc}".strip("; ")
            prev = ACCEPTANCE.get(self.n)
            ok = exc_type is None and (prev is None or prev[0])
            joined = detail if prev is None else f"{prev[1]}; {detail}"
            ACCEPTANCE[self.n] = (ok, joined)
            return False

    return _Recorder


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")

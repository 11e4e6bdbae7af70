"""Group actions and single-step skew-product updates.

These are the reference, state-in/state-out steppers. Long runs go through the
compiled loop in :mod:`skewdiff._kernels`, which uses the same update order:
the translation increment is taken with the current shape value and current
rotation, then the rotation advances, then the shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .dynamics import ObservableSpec, PMParams, eval_observable, pm_step

TWO_PI = 2.0 * math.pi

# Re-orthonormalise an SO(3) state well before the 1e-9 invariant is reached.
SO3_DEFECT_TRIGGER = 1e-10
RENORM_EVERY = 1000


@dataclass(frozen=True)
class SO2:
    """Planar rotation stored as an angle in [0, 2pi)."""

    theta: float = 0.0

    def __post_init__(self):
        th = float(self.theta)
        if th >= TWO_PI or th < 0.0:
            th -= TWO_PI * math.floor(th / TWO_PI)
        object.__setattr__(self, "theta", th)

    def as_matrix(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s], [s, c]])


@dataclass(frozen=True, eq=False)
class SO3:
    """Spatial rotation stored as a 3x3 matrix."""

    R: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        R = np.array(self.R, dtype=float)
        if R.shape != (3, 3):
            raise ValueError(f"SO3 matrix must be 3x3, got {R.shape}")
        R.setflags(write=False)
        object.__setattr__(self, "R", R)

    def as_matrix(self) -> np.ndarray:
        return self.R


RotationState = Union[SO2, SO3]


@dataclass(frozen=True, eq=False)
class SkewProductState:
    x: float
    p: np.ndarray
    rot: RotationState | None = None

    def __post_init__(self):
        if not (0.0 <= self.x <= 1.0):
            raise ValueError(f"x must lie in [0, 1], got {self.x}")
        p = np.array(self.p, dtype=float).reshape(-1)
        if not np.all(np.isfinite(p)):
            raise ValueError("p must be finite")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @classmethod
    def initial(cls, x0: float, d: int, rot: RotationState | None = None) -> "SkewProductState":
        return cls(x=x0, p=np.zeros(d), rot=rot)


def orthogonality_defect(R: np.ndarray) -> float:
    """max |R^T R - I|."""
    R = np.asarray(R, dtype=float)
    return float(np.max(np.abs(R.T @ R - np.eye(R.shape[0]))))


def so3_exp(omega) -> np.ndarray:
    """Rotation matrix exp([omega]_x) by the Rodrigues formula."""
    w = np.asarray(omega, dtype=float).reshape(3)
    th = math.sqrt(float(w @ w))
    if th < 1e-30:
        return np.eye(3)
    a = w / th
    K = np.array([[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]])
    return np.eye(3) + math.sin(th) * K + (1.0 - math.cos(th)) * (K @ K)


def renormalize_rotation(R, *, tol: float = 1e-15, max_iter: int = 30) -> np.ndarray:
    """Project a nearly orthogonal matrix onto SO(3) (orthogonal polar factor).

    Uses the Newton-Schulz iteration ``R <- R (3I - R^T R) / 2``, which converges
    quadratically from any R with singular values in (0, sqrt 3); farther away
    it falls back to an SVD.
    """
    R = np.array(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise ValueError("expected a finite 3x3 matrix")
    if np.min(np.linalg.norm(R, axis=0)) < 1e-8:
        raise ValueError("degenerate rotation matrix: near-zero column")
    if orthogonality_defect(R) < 0.5:
        for _ in range(max_iter):
            if orthogonality_defect(R) <= tol:
                break
            R = 0.5 * R @ (3.0 * np.eye(3) - R.T @ R)
    if orthogonality_defect(R) > 1e-14:
        U, s, Vt = np.linalg.svd(R)
        if s[-1] < 1e-8:
            raise ValueError("degenerate rotation matrix: rank deficient")
        R = U @ Vt
    if np.linalg.det(R) <= 0.0:
        raise ValueError("matrix is closer to a reflection than to a rotation")
    return R


def _check_dim(p: np.ndarray, vec: np.ndarray, what: str) -> None:
    if p.shape != vec.shape:
        raise ValueError(f"dimension mismatch: p has {p.shape[0]} components, {what} has {vec.shape[0]}")


def step_anisotropic(state: SkewProductState, params: PMParams, spec: ObservableSpec) -> SkewProductState:
    """``(x, p) -> (f(x), p + phi(x))``."""
    if state.rot is not None:
        raise ValueError("anisotropic step expects no rotation state")
    phi = eval_observable(spec, "phi", state.x)
    _check_dim(state.p, phi, "phi")
    return SkewProductState(x=pm_step(state.x, params), p=state.p + phi)


def step_e2(state: SkewProductState, params: PMParams, spec: ObservableSpec) -> SkewProductState:
    """``(x, theta, p) -> (f(x), theta + h(x), p + e^{i theta} v(x))`` with R^2 = C."""
    if not isinstance(state.rot, SO2):
        raise ValueError("E(2) step expects an SO2 rotation state")
    v = eval_observable(spec, "v", state.x)
    _check_dim(state.p, v, "v")
    if v.shape != (2,):
        raise ValueError("E(2) needs a two-component v")
    th = state.rot.theta
    c, s = math.cos(th), math.sin(th)
    p = state.p.copy()
    p[0] += c * v[0] - s * v[1]
    p[1] += s * v[0] + c * v[1]
    h = eval_observable(spec, "h", state.x)
    return SkewProductState(x=pm_step(state.x, params), p=p, rot=SO2(th + h))


def step_e3(state: SkewProductState, params: PMParams, spec: ObservableSpec) -> SkewProductState:
    """``(x, A, p) -> (f(x), A exp(omega(x)), p + A v(x))``."""
    if not isinstance(state.rot, SO3):
        raise ValueError("E(3) step expects an SO3 rotation state")
    v = eval_observable(spec, "v", state.x)
    _check_dim(state.p, v, "v")
    if v.shape != (3,):
        raise ValueError("E(3) needs a three-component v")
    A = state.rot.R
    A_next = A @ so3_exp(eval_observable(spec, "h", state.x))
    if orthogonality_defect(A_next) > SO3_DEFECT_TRIGGER:
        A_next = renormalize_rotation(A_next)
    return SkewProductState(x=pm_step(state.x, params), p=state.p + A @ v, rot=SO3(A_next))


def iterate(stepper, state: SkewProductState, params: PMParams, spec: ObservableSpec, n: int) -> list[SkewProductState]:
    """States after 0..n steps."""
    out = [state]
    for _ in range(n):
        state = stepper(state, params, spec)
        out.append(state)
    return out


# Closed forms for equilibrium shape dynamics (continuous time, p(0) = 0).


def regular_translation_even(omegas, v0, t):
    """p_j(t) = (e^{i t w_j} - 1) v_j / (i w_j) for each complex plane j.

    ``t`` may be a scalar or an array; the result has shape ``t.shape + (q,)``.
    """
    w = np.atleast_1d(np.asarray(omegas, dtype=float))
    v = np.atleast_1d(np.asarray(v0, dtype=complex))
    if w.shape != v.shape:
        raise ValueError("omegas and v0 must have the same length")
    if np.any(w == 0.0):
        raise ValueError("zero rotation rate in an even block; treat that direction as an axis")
    t = np.asarray(t, dtype=float)
    tw = t[..., None] * w
    return np.expm1(1j * tw) * v / (1j * w)


def regular_even_bound(omegas, v0) -> float:
    """Uniform bound 2 sum |v_j| / |w_j| on |p(t)|."""
    w = np.atleast_1d(np.asarray(omegas, dtype=float))
    v = np.atleast_1d(np.asarray(v0, dtype=complex))
    return float(2.0 * np.sum(np.abs(v) / np.abs(w)))


def regular_translation_odd(v1: float, omegas, v_rot, t):
    """Axis drift ``v1 t`` plus the bounded rotating block.

    Returns ``(axis, rot)`` with ``axis`` shaped like ``t`` and ``rot`` shaped
    ``t.shape + (q,)``.
    """
    t = np.asarray(t, dtype=float)
    return float(v1) * t, regular_translation_even(omegas, v_rot, t)


def _axis_frame(axis: np.ndarray) -> np.ndarray:
    """Orthonormal rows (n, e1, e2), right-handed, with n along ``axis``."""
    n = axis / np.linalg.norm(axis)
    helper = np.eye(3)[int(np.argmin(np.abs(n)))]
    e1 = np.cross(n, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    return np.array([n, e1, e2])


def regular_path_e2(h: float, v, t) -> np.ndarray:
    """Planar path for a frozen shape: rotation rate ``h``, body velocity ``v`` (2-vector)."""
    v = np.asarray(v, dtype=float)
    z = regular_translation_even([h], [complex(v[0], v[1])], t)[..., 0]
    return np.stack([z.real, z.imag], axis=-1)


def regular_path_e3(omega, v, t, *, axis_frame: bool = False) -> np.ndarray:
    """Spatial path for a frozen shape: ``p' = exp(t [omega]_x) v``.

    With ``axis_frame=True`` the coordinates are (along axis, transverse 1,
    transverse 2), so the first column is exactly linear in t.
    """
    omega = np.asarray(omega, dtype=float)
    v = np.asarray(v, dtype=float)
    w = float(np.linalg.norm(omega))
    t = np.asarray(t, dtype=float)
    if w == 0.0:
        return t[..., None] * v
    F = _axis_frame(omega)
    vb = F @ v
    ax, rot = regular_translation_odd(vb[0], [w], [complex(vb[1], vb[2])], t)
    z = rot[..., 0]
    local = np.stack([ax, z.real, z.imag], axis=-1)
    if axis_frame:
        return local
    return local @ F


__all__ = [
    "SO2",
    "SO3",
    "RotationState",
    "SkewProductState",
    "so3_exp",
    "renormalize_rotation",
    "orthogonality_defect",
    "step_anisotropic",
    "step_e2",
    "step_e3",
    "iterate",
    "regular_translation_even",
    "regular_translation_odd",
    "regular_even_bound",
    "regular_path_e2",
    "regular_path_e3",
]

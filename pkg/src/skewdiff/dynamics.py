"""Pomeau-Manneville shape dynamics and the affine observables that drive the
group variables."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

from . import _kernels

Which = Literal["phi", "v", "h"]

# Laminar phases around x = 0 get long once the correlation decay stops
# being summable.
WEAK_CHAOS_THRESHOLD = 0.5


@dataclass(frozen=True)
class PMParams:
    """Parameters of the intermittency map ``x -> x(1 + 2^g x^g)`` / ``2x - 1``.

    ``branch_at_half`` picks the value at exactly x = 1/2, where the two
    closed branches overlap: ``"right"`` gives 0, ``"left"`` gives 1.
    """

    gamma: float
    branch_at_half: Literal["left", "right"] = "right"

    def __post_init__(self):
        if not (0.0 <= self.gamma < 1.0) or math.isnan(self.gamma):
            raise ValueError(f"gamma out of range [0,1): {self.gamma}")
        if self.branch_at_half not in ("left", "right"):
            raise ValueError(f"branch_at_half must be 'left' or 'right', got {self.branch_at_half!r}")

    @property
    def branch_right(self) -> bool:
        return self.branch_at_half == "right"

    @property
    def weakly_chaotic(self) -> bool:
        return self.gamma >= WEAK_CHAOS_THRESHOLD

    @property
    def stable_index(self) -> float:
        """Index of the stable law for the weakly chaotic fluctuations."""
        return math.inf if self.gamma == 0.0 else 1.0 / self.gamma


def _check_x(x: float) -> None:
    if not (0.0 <= x <= 1.0):
        raise ValueError(f"x must lie in [0, 1], got {x}")


def pm_step(x: float, params: PMParams) -> float:
    """One application of the intermittency map."""
    _check_x(x)
    if x < 0.5:
        return x * (1.0 + 2.0**params.gamma * x**params.gamma)
    if x > 0.5:
        return 2.0 * x - 1.0
    return 0.0 if params.branch_right else 1.0


def pm_orbit(x0: float, n: int, params: PMParams) -> np.ndarray:
    """Orbit ``x0, f(x0), ..., f^n(x0)`` as a float64 array of length n + 1.

    Plain double-precision iteration. For gamma = 0 (the doubling map) every
    floating-point orbit collapses onto 0 within ~55 steps; the ensemble runner
    uses an exact bit-shift representation for that case instead.
    """
    _check_x(x0)
    if n < 0:
        raise ValueError("n must be non-negative")
    out = np.empty(n + 1)
    _kernels.orbit(float(x0), int(n), float(params.gamma), params.branch_right, out)
    return out


def _as_vec(v) -> tuple[float, ...]:
    return tuple(float(c) for c in np.atleast_1d(np.asarray(v, dtype=float)))


@dataclass(frozen=True)
class ObservableSpec:
    """Affine observables ``a + b*x``.

    ``phi`` drives the translation in the anisotropic case, ``v`` the body-frame
    velocity in the Euclidean cases (complex number as (re, im) for E(2)), and
    ``rot`` the rotation generator: a scalar rate per step for E(2) or an
    angular-velocity vector for E(3).
    """

    phi_a: tuple[float, ...] = (1.0,)
    phi_b: tuple[float, ...] = (1.0,)
    v_a: tuple[float, ...] = ()
    v_b: tuple[float, ...] = ()
    rot_a: tuple[float, ...] = ()
    rot_b: tuple[float, ...] = ()

    def __post_init__(self):
        for name in ("phi_a", "phi_b", "v_a", "v_b", "rot_a", "rot_b"):
            object.__setattr__(self, name, _as_vec(getattr(self, name)) if len(getattr(self, name)) else ())
        if len(self.phi_a) != len(self.phi_b):
            raise ValueError("phi_a and phi_b differ in dimension")
        if len(self.v_a) != len(self.v_b):
            raise ValueError("v_a and v_b differ in dimension")
        if len(self.rot_a) != len(self.rot_b):
            raise ValueError("rot_a and rot_b differ in dimension")
        for name in ("phi_a", "phi_b", "v_a", "v_b", "rot_a", "rot_b"):
            if not all(math.isfinite(c) for c in getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    @classmethod
    def anisotropic(cls, d: int = 1) -> "ObservableSpec":
        """phi(x) = (1 + x) along the first axis."""
        a = np.zeros(d)
        a[0] = 1.0
        return cls(phi_a=a, phi_b=a)

    @classmethod
    def euclidean2(cls, c0: float = 1.0) -> "ObservableSpec":
        """v(x) = 1 + x (real), constant rotation rate h = c0."""
        return cls(phi_a=(), phi_b=(), v_a=(1.0, 0.0), v_b=(1.0, 0.0), rot_a=(c0,), rot_b=(0.0,))

    @classmethod
    def euclidean3(cls, c0: float = 1.0) -> "ObservableSpec":
        """v(x) = (1 + x) e1 and omega(x) = c0 [(1 - 2x) a + 2x f].

        ``a = (1,1,1)/sqrt3`` is the rotation axis near the sticky point x = 0,
        ``f = (0,1,-1)/sqrt2`` is orthogonal to it. Letting the axis swing with
        x makes rotations at different shape values non-commuting, so the
        rotation variable spreads over SO(3) and the mean velocity averages
        out, while |omega| stays of order c0.
        """
        a = np.full(3, c0 / math.sqrt(3.0))
        f = c0 * np.array([0.0, 1.0, -1.0]) / math.sqrt(2.0)
        return cls(
            phi_a=(),
            phi_b=(),
            v_a=(1.0, 0.0, 0.0),
            v_b=(1.0, 0.0, 0.0),
            rot_a=a,
            rot_b=2.0 * (f - a),
        )

    def velocity(self, group: str) -> tuple[tuple[float, ...], tuple[float, ...]]:
        """The translation driver used by ``group``: phi for anisotropic, v otherwise."""
        if group == "aniso":
            return self.phi_a, self.phi_b
        return self.v_a, self.v_b

    def sup_speed(self, group: str) -> float:
        """sup over x in [0,1] of the driver's Euclidean norm (attained at an endpoint)."""
        a, b = (np.asarray(t) for t in self.velocity(group))
        return float(max(np.linalg.norm(a), np.linalg.norm(a + b)))


def eval_observable(spec: ObservableSpec, which: Which, x: float):
    """Evaluate phi, v or the rotation generator h at shape value x.

    Vectors come back as float arrays; a one-component generator (E(2) rate)
    comes back as a float.
    """
    _check_x(x)
    if which == "phi":
        a, b = spec.phi_a, spec.phi_b
    elif which == "v":
        a, b = spec.v_a, spec.v_b
    elif which == "h":
        a, b = spec.rot_a, spec.rot_b
    else:
        raise ValueError(f"unknown observable {which!r}")
    if not a:
        raise ValueError(f"observable {which!r} is not configured")
    out = np.asarray(a) + np.asarray(b) * x
    if which == "h" and out.size == 1:
        return float(out[0])
    return out


__all__ = [
    "PMParams",
    "ObservableSpec",
    "pm_step",
    "pm_orbit",
    "eval_observable",
    "WEAK_CHAOS_THRESHOLD",
]

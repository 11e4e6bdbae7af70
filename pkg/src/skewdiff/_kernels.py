"""Compiled inner loops for the shape map and the skew-product steppers.

Everything here is ``nogil`` so the ensemble runner can drive several
trajectories from plain Python threads. Fast-math is deliberately off: the
anisotropic and E(2) loops must agree bitwise when the rotation rate is zero,
which rules out FMA contraction and reassociation.
"""

import math

import numpy as np
from numba import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_S63 = np.uint64(63)
_ONE = np.uint64(1)
_INV53 = 1.0 / 9007199254740992.0  # 2**-53
TWO_PI = 2.0 * math.pi

GROUP_ANISO = 0
GROUP_E2 = 1
GROUP_E3 = 2

# ustate layout: [rng_state, window_hi, window_lo, bits_shifted_out_of_lo]
U_RNG, U_HI, U_LO, U_USED = 0, 1, 2, 3


@njit(cache=True, nogil=True)
def splitmix_mix(z):
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@njit(cache=True, nogil=True)
def splitmix_next(u):
    s = u[U_RNG] + GOLDEN
    u[U_RNG] = s
    return splitmix_mix(s)


@njit(cache=True, nogil=True)
def pm_map(x, gamma, two_g, branch_right):
    if x < 0.5:
        return x * (1.0 + two_g * x**gamma)
    if x > 0.5:
        return 2.0 * x - 1.0
    return 0.0 if branch_right else 1.0


@njit(cache=True, nogil=True)
def shift_window(u):
    """Doubling map acting on an exact binary expansion fed from the RNG.

    Returns the new x truncated to 53 bits.
    """
    hi = u[U_HI]
    lo = u[U_LO]
    hi = (hi << _ONE) | (lo >> _S63)
    lo = lo << _ONE
    used = u[U_USED] + _ONE
    if used == np.uint64(64):
        lo = splitmix_next(u)
        used = np.uint64(0)
    u[U_HI] = hi
    u[U_LO] = lo
    u[U_USED] = used
    return float(hi >> _S11) * _INV53


@njit(cache=True, nogil=True)
def advance_x(x, gamma, two_g, branch_right, exact, u):
    if exact:
        return shift_window(u)
    return pm_map(x, gamma, two_g, branch_right)


@njit(cache=True, nogil=True)
def orbit(x0, n, gamma, branch_right, out):
    """Plain floating-point orbit x0, f(x0), ..., f^n(x0) into ``out``."""
    two_g = 2.0**gamma
    x = x0
    out[0] = x
    for k in range(n):
        x = pm_map(x, gamma, two_g, branch_right)
        out[k + 1] = x


@njit(cache=True, nogil=True)
def exact_doubling_orbit(u, n, out):
    out[0] = float(u[U_HI] >> _S11) * _INV53
    for k in range(n):
        out[k + 1] = shift_window(u)


@njit(cache=True, nogil=True)
def rodrigues(w0, w1, w2, E):
    th = math.sqrt(w0 * w0 + w1 * w1 + w2 * w2)
    if th < 1e-30:
        E[0, 0] = 1.0
        E[0, 1] = 0.0
        E[0, 2] = 0.0
        E[1, 0] = 0.0
        E[1, 1] = 1.0
        E[1, 2] = 0.0
        E[2, 0] = 0.0
        E[2, 1] = 0.0
        E[2, 2] = 1.0
        return
    a0 = w0 / th
    a1 = w1 / th
    a2 = w2 / th
    s = math.sin(th)
    c = math.cos(th)
    t = 1.0 - c
    E[0, 0] = c + t * a0 * a0
    E[0, 1] = t * a0 * a1 - s * a2
    E[0, 2] = t * a0 * a2 + s * a1
    E[1, 0] = t * a1 * a0 + s * a2
    E[1, 1] = c + t * a1 * a1
    E[1, 2] = t * a1 * a2 - s * a0
    E[2, 0] = t * a2 * a0 - s * a1
    E[2, 1] = t * a2 * a1 + s * a0
    E[2, 2] = c + t * a2 * a2


@njit(cache=True, nogil=True)
def orthogonality_defect(A):
    worst = 0.0
    for i in range(3):
        for j in range(3):
            s = 0.0
            for k in range(3):
                s += A[k, i] * A[k, j]
            if i == j:
                s -= 1.0
            if abs(s) > worst:
                worst = abs(s)
    return worst


@njit(cache=True, nogil=True)
def polar_step(A, tmp):
    """One Newton-Schulz step A <- A (3I - A^T A) / 2, in place."""
    for i in range(3):
        for j in range(3):
            s = 0.0
            for k in range(3):
                s += A[k, i] * A[k, j]
            tmp[i, j] = (3.0 if i == j else 0.0) - s
    for i in range(3):
        r0 = A[i, 0]
        r1 = A[i, 1]
        r2 = A[i, 2]
        for j in range(3):
            A[i, j] = 0.5 * (r0 * tmp[0, j] + r1 * tmp[1, j] + r2 * tmp[2, j])


@njit(cache=True, nogil=True)
def run_path(
    group,
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
    burn_in,
    n_steps,
    stride,
    renorm_every,
    out_p,
    out_axis,
    out_x,
    record_x,
    record_axis,
):
    """Iterate one skew-product trajectory.

    Burn-in advances only the shape variable. Afterwards p starts at zero and
    the rotation at ``theta0``/``A0``; every ``stride`` steps p (and optionally
    x and the axis-projected path) is written to the output rows.

    Returns ``(hit_exact_zero, max_orthogonality_defect)``.
    """
    two_g = 2.0**gamma
    x = x0
    hit_zero = False
    for _ in range(burn_in):
        x = advance_x(x, gamma, two_g, branch_right, exact, u)
        if x == 0.0 and not exact:
            hit_zero = True

    d = out_p.shape[1]
    p = np.zeros(d)
    pax = np.zeros(3)
    A = A0.copy()
    E = np.empty((3, 3))
    tmp = np.empty((3, 3))
    th = theta0
    worst = 0.0

    for k in range(d):
        out_p[0, k] = 0.0
    if record_x:
        out_x[0] = x
    if record_axis:
        for k in range(3):
            out_axis[0, k] = 0.0

    row = 1
    for n in range(1, n_steps + 1):
        if group == GROUP_ANISO:
            for k in range(d):
                p[k] += phi_a[k] + phi_b[k] * x
        elif group == GROUP_E2:
            vr = phi_a[0] + phi_b[0] * x
            vi = phi_a[1] + phi_b[1] * x
            c = math.cos(th)
            s = math.sin(th)
            p[0] += c * vr - s * vi
            p[1] += s * vr + c * vi
            th += rot_a[0] + rot_b[0] * x
            if th >= TWO_PI or th < 0.0:
                th -= TWO_PI * math.floor(th / TWO_PI)
        else:
            v0 = phi_a[0] + phi_b[0] * x
            v1 = phi_a[1] + phi_b[1] * x
            v2 = phi_a[2] + phi_b[2] * x
            p[0] += A[0, 0] * v0 + A[0, 1] * v1 + A[0, 2] * v2
            p[1] += A[1, 0] * v0 + A[1, 1] * v1 + A[1, 2] * v2
            p[2] += A[2, 0] * v0 + A[2, 1] * v1 + A[2, 2] * v2
            w0 = rot_a[0] + rot_b[0] * x
            w1 = rot_a[1] + rot_b[1] * x
            w2 = rot_a[2] + rot_b[2] * x
            if record_axis:
                wn = math.sqrt(w0 * w0 + w1 * w1 + w2 * w2)
                if wn > 0.0:
                    a0 = w0 / wn
                    a1 = w1 / wn
                    a2 = w2 / wn
                    proj = a0 * v0 + a1 * v1 + a2 * v2
                    pax[0] += proj * (A[0, 0] * a0 + A[0, 1] * a1 + A[0, 2] * a2)
                    pax[1] += proj * (A[1, 0] * a0 + A[1, 1] * a1 + A[1, 2] * a2)
                    pax[2] += proj * (A[2, 0] * a0 + A[2, 1] * a1 + A[2, 2] * a2)
            rodrigues(w0, w1, w2, E)
            for i in range(3):
                r0 = A[i, 0]
                r1 = A[i, 1]
                r2 = A[i, 2]
                A[i, 0] = r0 * E[0, 0] + r1 * E[1, 0] + r2 * E[2, 0]
                A[i, 1] = r0 * E[0, 1] + r1 * E[1, 1] + r2 * E[2, 1]
                A[i, 2] = r0 * E[0, 2] + r1 * E[1, 2] + r2 * E[2, 2]
            if renorm_every > 0 and n % renorm_every == 0:
                defect = orthogonality_defect(A)
                if defect > worst:
                    worst = defect
                polar_step(A, tmp)

        x = advance_x(x, gamma, two_g, branch_right, exact, u)
        if x == 0.0 and not exact:
            hit_zero = True

        if n % stride == 0:
            for k in range(d):
                out_p[row, k] = p[k]
            if record_x:
                out_x[row] = x
            if record_axis:
                for k in range(3):
                    out_axis[row, k] = pax[k]
            row += 1

    if group == GROUP_E3:
        defect = orthogonality_defect(A)
        if defect > worst:
            worst = defect
    return hit_zero, worst


@njit(cache=True, nogil=True)
def run_batch(
    group,
    x0s,
    ustates,
    phi_a,
    phi_b,
    rot_a,
    rot_b,
    gamma,
    branch_right,
    exact,
    burn_in,
    n_steps,
    stride,
    renorm_every,
    start,
    stop,
    out_p,
    out_axis,
    flags,
):
    A0 = np.eye(3)
    dummy_x = np.empty(1)
    record_axis = group == GROUP_E3
    for i in range(start, stop):
        u = ustates[i].copy()
        hit, _ = run_path(
            group,
            x0s[i],
            u,
            0.0,
            A0,
            phi_a,
            phi_b,
            rot_a,
            rot_b,
            gamma,
            branch_right,
            exact,
            burn_in,
            n_steps,
            stride,
            renorm_every,
            out_p[i],
            out_axis[i],
            dummy_x,
            False,
            record_axis,
        )
        flags[i] = hit


@njit(cache=True, nogil=True)
def birkhoff_sum(x0, u, burn_in, n, gamma, branch_right, exact):
    """Compensated sum of x over n iterates following ``burn_in`` discarded ones."""
    two_g = 2.0**gamma
    x = x0
    for _ in range(burn_in):
        x = advance_x(x, gamma, two_g, branch_right, exact, u)
    s = 0.0
    comp = 0.0
    for _ in range(n):
        y = x - comp
        t = s + y
        comp = (t - s) - y
        s = t
        x = advance_x(x, gamma, two_g, branch_right, exact, u)
    return s


@njit(cache=True, nogil=True)
def renewal_sums(x0, u, burn_in, n, gamma, branch_right, exact, a, b, c, out):
    """Sums of ``a + b*x - c`` over blocks that start at each visit to x >= 1/2.

    A block holds one step on the expanding branch followed by the laminar
    run that comes after it. Steps before the first visit and the unfinished
    last block are discarded. Returns the number of complete blocks.
    """
    two_g = 2.0**gamma
    x = x0
    for _ in range(burn_in):
        x = advance_x(x, gamma, two_g, branch_right, exact, u)
    count = -1
    s = 0.0
    for _ in range(n):
        if x >= 0.5:
            if count >= 0:
                out[count] = s
            count += 1
            s = 0.0
        if count >= 0:
            s += a + b * x - c
        x = advance_x(x, gamma, two_g, branch_right, exact, u)
    return max(count, 0)

"""Independent reference computations used by the tests.

None of these call into the code under test beyond reading plain fields.
"""
import itertools
from functools import lru_cache

import mpmath
import numpy as np
from scipy.integrate import quad, trapezoid
from scipy.linalg import expm

from mtla.scenario import GREEN


def csm_root(v, l1, li, t_tot, dps=40):
    """Positive root of t*x^2 + (t*v - 2*d1 - d2)*x - d2*v = 0 in extended precision."""
    with mpmath.workdps(dps):
        d1, d2 = mpmath.mpf(l1), mpmath.mpf(li) - mpmath.mpf(l1)
        t, v = mpmath.mpf(t_tot), mpmath.mpf(v)
        roots = mpmath.polyroots([t, t * v - 2 * d1 - d2, -d2 * v], maxsteps=200, extraprec=60)
        pos = [r for r in roots if mpmath.im(r) == 0 and mpmath.re(r) > 0]
        return float(max(mpmath.re(r) for r in pos))


def integrate_profile(sol):
    """Distance covered at t1 and at t_tot by quadrature of the speed profile."""
    d1, _ = quad(lambda t: sol.v + sol.a * t, 0.0, sol.t1, epsabs=0, epsrel=1e-12)
    d2 = 0.0
    if sol.t_tot > sol.t1:
        d2, _ = quad(lambda t: sol.v_t, sol.t1, sol.t_tot, epsabs=0, epsrel=1e-12)
    return d1, d1 + d2


def arrival_time(v, l1, li, v_t):
    """Time to reach li with a constant-acceleration leg to l1 ending at v_t, then cruising."""
    if v + v_t <= 0:
        return np.inf
    t1 = 2.0 * l1 / (v + v_t)
    if li - l1 > 1e-9:
        return t1 + (li - l1) / v_t if v_t > 0 else np.inf
    return t1


def window(color, j, shifts):
    if color == GREEN:
        return (0.0, shifts[0][0]) if j == 1 else (shifts[1][0], shifts[2][0])
    return shifts[0][0], shifts[1][0]


def passing_speeds(v, l1, li, t_lo, t_hi, v_max, n=4001):
    """Grid of candidate target speeds and whether each one arrives inside [t_lo, t_hi]."""
    grid = np.linspace(v_max / n, v_max, n)
    ok = np.array([t_lo <= arrival_time(v, l1, li, x) <= t_hi for x in grid])
    return grid, ok


# ---- optimal control -------------------------------------------------------

@lru_cache(maxsize=8)
def _phi(dt):
    # augmented triple integrator: x = (s, v, a), input j held over the step
    M = np.zeros((4, 4))
    M[0, 1] = M[1, 2] = M[2, 3] = 1.0
    return expm(M * dt)


def integrate_jerk(x0, jerk, dt):
    """States at the grid points for a piecewise-constant jerk (matrix exponential)."""
    E = _phi(dt)
    x = np.array(list(x0) + [0.0], dtype=float)
    out = [x[:3].copy()]
    for j in jerk:
        x[3] = j
        x = E @ x
        out.append(x[:3].copy())
    out = np.array(out)
    return out[:, 0], out[:, 1], out[:, 2]


def ocp_cost(x0, jerk, dt, v_ref, a_ref, w_v, w_a, w_j):
    _, v, a = integrate_jerk(x0, jerk, dt)
    track = w_v * (v - v_ref) ** 2 + w_a * (a - a_ref) ** 2
    return float(trapezoid(track, dx=dt) + dt * w_j * np.sum(np.square(jerk)))


def unconstrained_ocp(x0, n, dt, v_ref, a_ref, w_v, w_a, w_j):
    """Least-squares optimum of the tracking + jerk cost with no constraints."""
    v_ref = np.broadcast_to(v_ref, (n + 1,))
    a_ref = np.broadcast_to(a_ref, (n + 1,))
    _, v0, a0 = integrate_jerk(x0, np.zeros(n), dt)
    cols_v, cols_a = [], []
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        _, v, a = integrate_jerk((0.0, 0.0, 0.0), e, dt)
        cols_v.append(v)
        cols_a.append(a)
    Bv, Ba = np.array(cols_v).T, np.array(cols_a).T
    w = np.full(n + 1, dt)
    w[0] = w[-1] = dt / 2
    rows = [np.sqrt(w_v * w)[:, None] * Bv, np.sqrt(w_a * w)[:, None] * Ba, np.sqrt(w_j * dt) * np.eye(n)]
    rhs = [np.sqrt(w_v * w) * (v_ref - v0), np.sqrt(w_a * w) * (a_ref - a0), np.zeros(n)]
    jerk, *_ = np.linalg.lstsq(np.vstack(rows), np.concatenate(rhs), rcond=None)
    return jerk


def lattice_best(x0, n, dt, v_ref, a_ref, weights, levels, feasible):
    """Exhaustive search over jerk sequences drawn from ``levels``."""
    best, best_j = np.inf, None
    for seq in itertools.product(levels, repeat=n):
        jerk = np.array(seq, dtype=float)
        s, v, a = integrate_jerk(x0, jerk, dt)
        if not feasible(s, v, a):
            continue
        c = ocp_cost(x0, jerk, dt, v_ref, a_ref, *weights)
        if c < best:
            best, best_j = c, jerk
    return best, best_j


def conservative_feasible(x0, n, dt, lo, hi, params):
    """LP certificate of feasibility with a linear inner approximation of the force limits.

    F = m*a + c*v^2 + R, so a >= (F_min - R)/m implies F >= F_min, and
    a <= (F_max - R - c*v_max^2)/m with v_max the free-run speed bound implies F <= F_max.
    A feasible LP therefore proves the true problem feasible.
    """
    from scipy.optimize import linprog
    s0, v0, a0 = integrate_jerk(x0, np.zeros(n), dt)
    Bs, Bv, Ba = [], [], []
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        s, v, a = integrate_jerk((0.0, 0.0, 0.0), e, dt)
        Bs.append(s)
        Bv.append(v)
        Ba.append(a)
    Bs, Bv, Ba = np.array(Bs).T[1:], np.array(Bv).T[1:], np.array(Ba).T[1:]
    s0, v0, a0 = s0[1:], v0[1:], a0[1:]
    R = params.m * params.g * params.C_r
    c = 0.5 * params.A_f * params.rho * params.C_d
    v_cap = x0[1] + max(x0[2], 0) * n * dt + 0.5 * params.j_max * (n * dt) ** 2
    a_hi = min(params.a_max, (params.F_max - R - c * v_cap ** 2) / params.m)
    a_lo = (params.F_min - R) / params.m
    A, b = [Ba, -Ba, -Bv], [a_hi - a0, a0 - a_lo, v0]
    lo, hi = np.asarray(lo)[1:], np.asarray(hi)[1:]
    fin = np.isfinite(hi)
    if fin.any():
        A.append(Bs[fin])
        b.append(hi[fin] - s0[fin])
    fin = np.isfinite(lo)
    if fin.any():
        A.append(-Bs[fin])
        b.append(s0[fin] - lo[fin])
    res = linprog(np.zeros(n), A_ub=np.vstack(A), b_ub=np.concatenate(b),
                  bounds=[(params.j_min, params.j_max)] * n, method="highs")
    return res.status == 0

"""Dense primal-dual interior point solver for small convex QPs.

    minimize    0.5 x'Hx + g'x
    subject to  Gx <= h

Mehrotra predictor-corrector on the slack formulation Gx + s = h, s >= 0.
Sized for the tens of variables of the receding-horizon problem.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError


@dataclass
class QPResult:
    x: np.ndarray
    status: str           # "optimal" | "max-iter" | "infeasible"
    iterations: int
    primal_residual: float
    dual_residual: float
    gap: float


def _max_step(z: np.ndarray, dz: np.ndarray) -> float:
    neg = dz < 0
    if not neg.any():
        return 1.0
    return min(1.0, float(np.min(-z[neg] / dz[neg])))


def _factor(K: np.ndarray):
    for reg in (0.0, 1e-12, 1e-9, 1e-6):
        try:
            Kr = K + reg * np.max(np.diag(K)) * np.eye(len(K)) if reg else K
            cf = cho_factor(Kr, check_finite=False)
            return lambda rhs: cho_solve(cf, rhs, check_finite=False)
        except LinAlgError:
            continue
    return lambda rhs: np.linalg.lstsq(K, rhs, rcond=None)[0]


def solve_qp(H, g, G, h, tol: float = 1e-9, max_iter: int = 100) -> QPResult:
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    n = g.size
    if G is None or len(G) == 0:
        x = np.linalg.solve(H, -g)
        return QPResult(x, "optimal", 0, 0.0, 0.0, 0.0)
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float)
    m = h.size

    x = np.zeros(n)
    s = np.maximum(h - G @ x, 1.0)
    lam = np.ones(m)
    scale_p = 1.0 + np.max(np.abs(h))
    scale_d = 1.0 + np.max(np.abs(g))
    GT = G.T

    rp_norm = rd_norm = mu = np.inf
    for it in range(1, max_iter + 1):
        rd = H @ x + g + GT @ lam
        rp = G @ x + s - h
        mu = float(s @ lam) / m
        rp_norm = float(np.max(np.abs(rp)))
        rd_norm = float(np.max(np.abs(rd)))
        if rp_norm <= tol * scale_p and rd_norm <= tol * scale_d and mu <= tol:
            return QPResult(x, "optimal", it, rp_norm, rd_norm, mu)
        if np.max(lam) > 1e12:
            break

        d = np.minimum(lam / s, 1e16)
        K = H + (GT * d) @ G
        solve = _factor(K)

        def newton(rc):
            rhs = -rd - GT @ (d * rp - rc / s)
            dx = solve(rhs)
            dlam = d * (G @ dx + rp) - rc / s
            ds = -rp - G @ dx
            return dx, ds, dlam

        # predictor
        rc = s * lam
        dx, ds, dlam = newton(rc)
        alpha = min(_max_step(s, ds), _max_step(lam, dlam))
        mu_aff = float((s + alpha * ds) @ (lam + alpha * dlam)) / m
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        # corrector
        rc = s * lam + ds * dlam - sigma * mu
        dx, ds, dlam = newton(rc)
        alpha = 0.99 * min(_max_step(s, ds), _max_step(lam, dlam))
        x = x + alpha * dx
        s = np.maximum(s + alpha * ds, 1e-300)
        lam = np.maximum(lam + alpha * dlam, 1e-300)

    status = "infeasible" if rp_norm > np.sqrt(tol) * scale_p else "max-iter"
    return QPResult(x, status, max_iter, rp_norm, rd_norm, mu)

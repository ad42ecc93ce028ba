"""Small deterministic 1D optimization helpers.

Everything here is derivative-free and reproducible: bracket expansion by
doubling, bounded Brent refinement (scipy), a vectorized golden-section
minimizer for batches of independent 1D problems, and a guarded stationarity
polish built on brentq. These are the only optimization primitives the rest
of the package uses for scalar problems.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import optimize

from .errors import MaximizationFailureError

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0  # 1/phi
_INVPHI2 = (3.0 - math.sqrt(5.0)) / 2.0  # 1/phi^2


def bracket_max(g, x0: float = 0.0, step: float = 1e-2, grow: float = 2.0,
                max_expand: int = 600, x_cap: float = 1e150):
    """Expand [x0, x0 + step*grow^k] until the concave objective g stops
    increasing; return a bracket (a, b) containing the maximizer.

    A plateau counts as bracketed (g constant beyond the sup is fine).
    Raises MaximizationFailureError with the last bracket if g keeps
    strictly increasing past x_cap.
    """
    xs = [x0, x0 + step]
    gs = [g(xs[0]), g(xs[1])]
    if not np.isfinite(gs[1]) or gs[1] <= gs[0]:
        return (x0 - step, x0 + step)
    for _ in range(max_expand):
        nxt = x0 + (xs[-1] - x0) * grow
        if abs(nxt) > x_cap:
            break
        val = g(nxt)
        xs.append(nxt)
        gs.append(val)
        if not np.isfinite(val) or val <= gs[-2]:
            return (xs[-3], xs[-1])
    raise MaximizationFailureError(
        "objective still increasing at |x| = %.3e; supremum looks infinite" % xs[-1],
        last_bracket=(xs[-2], xs[-1]),
    )


def max_scalar(g, a: float, b: float, xtol: float = 1e-12):
    """Maximize g on [a, b] with bounded Brent; returns (x, g(x))."""
    res = optimize.minimize_scalar(lambda x: -g(x), bounds=(a, b),
                                   method="bounded",
                                   options={"xatol": xtol, "maxiter": 500})
    x = float(res.x)
    candidates = [(a, g(a)), (b, g(b)), (x, g(x))]
    x, gx = max(candidates, key=lambda p: p[1])
    return x, gx


def min_scalar(f, a: float, b: float, xtol: float = 1e-12):
    """Minimize f on [a, b] with bounded Brent; returns (x, f(x))."""
    x, gx = max_scalar(lambda s: -f(s), a, b, xtol=xtol)
    return x, -gx


def golden_min_batched(f, lo: np.ndarray, hi: np.ndarray, iters: int = 90):
    """Vectorized golden-section minimization of independent 1D problems.

    f maps an array of abscissae to an array of values (elementwise
    independent problems). lo/hi are arrays of the same shape. 90 iterations
    shrink the interval by phi^-90 ~ 1e-19, i.e. to rounding.
    Returns (x, f(x)) at the better of the two interior probes.
    """
    a = np.asarray(lo, dtype=float).copy()
    b = np.asarray(hi, dtype=float).copy()
    c = a + _INVPHI2 * (b - a)
    d = a + _INVPHI * (b - a)
    fc = f(c)
    fd = f(d)
    for _ in range(iters):
        left = fc < fd
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        c_new = a + _INVPHI2 * (b - a)
        d_new = a + _INVPHI * (b - a)
        # only one new evaluation per side is needed, but evaluating both
        # keeps the update branch-free; f is assumed cheap and vectorized
        fc = f(c_new)
        fd = f(d_new)
        c, d = c_new, d_new
    x = np.where(fc < fd, c, d)
    fx = np.minimum(fc, fd)
    return x, fx


def local_min_indices(vals: np.ndarray) -> np.ndarray:
    """Indices i with vals[i] <= both neighbors (ends compared one-sided)."""
    v = np.asarray(vals)
    n = v.shape[0]
    if n == 1:
        return np.array([0])
    left_ok = np.empty(n, dtype=bool)
    right_ok = np.empty(n, dtype=bool)
    left_ok[0] = True
    left_ok[1:] = v[1:] <= v[:-1]
    right_ok[-1] = True
    right_ok[:-1] = v[:-1] <= v[1:]
    return np.nonzero(left_ok & right_ok)[0]


def scan_min(f, lo: float, hi: float, n_points: int, xtol: float = 1e-13,
             f_batched=None):
    """Global 1D minimization: coarse scan, then bounded Brent around every
    local basin of the scan. Returns (x_best, f_best, basins) where basins is
    the list of all refined (x, f) local minima.
    """
    grid = np.linspace(lo, hi, n_points)
    vals = f_batched(grid) if f_batched is not None else np.array([f(x) for x in grid])
    basins = []
    for i in local_min_indices(vals):
        a = grid[max(i - 1, 0)]
        b = grid[min(i + 1, n_points - 1)]
        if a == b:
            basins.append((float(grid[i]), float(vals[i])))
            continue
        x, fx = min_scalar(f, float(a), float(b), xtol=xtol)
        basins.append((x, fx))
    x_best, f_best = min(basins, key=lambda p: p[1])
    return x_best, f_best, basins


def polish_root(dphi, x: float, radius: float):
    """Refine a stationary point: if dphi changes sign across
    [x - radius, x + radius], return the brentq root, else x unchanged.

    Used to sharpen scan/Brent minimizers to machine precision when the
    objective derivative is available and smooth near x (kinked minima keep
    the incoming x: brentq still locates the kink since the sign change
    persists, which is exactly the stationarity condition we want).
    """
    a, b = x - radius, x + radius
    try:
        fa, fb = dphi(a), dphi(b)
    except Exception:
        return x
    if not (np.isfinite(fa) and np.isfinite(fb)) or fa == fb:
        return x
    if fa * fb > 0.0:
        return x
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    try:
        return float(optimize.brentq(dphi, a, b, xtol=1e-15, rtol=1e-15, maxiter=200))
    except Exception:
        return x

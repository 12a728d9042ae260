"""Numerical primitives shared by the rest of the package.

Everything here is deliberately small: simplex grids for exhaustive
certification, a vectorized adaptive Simpson rule, bracketed monotone
inversion, central differences and a thin wrapper for scalar functions
that carries a declared domain and monotonicity.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

PROB_TOL = 1e-12


class QuadratureError(RuntimeError):
    """Adaptive quadrature exhausted its interval budget."""


class InversionError(ValueError):
    """Monotone inversion could not be carried out on the given bracket."""


def check_prob_vector(p, tol: float = PROB_TOL) -> np.ndarray:
    """Return ``p`` as a float array after checking it lies on the simplex.

    The last axis is the category axis, so a stack of vectors is accepted.
    """
    p = np.asarray(p, dtype=float)
    if p.ndim == 0 or p.shape[-1] < 1:
        raise ValueError("probability vector needs at least one coordinate")
    if not np.all(np.isfinite(p)):
        raise ValueError("probability vector has non-finite entries")
    if np.any(p < -tol):
        raise ValueError(f"negative probability {p.min():.3g}")
    s = p.sum(axis=-1)
    if np.any(np.abs(s - 1.0) > tol * max(1, p.shape[-1])):
        raise ValueError(f"probabilities sum to {np.asarray(s).ravel()[0]!r}, not 1")
    return np.clip(p, 0.0, None)


def simplex_grid(n: int, r: int) -> np.ndarray:
    """All points of the n-simplex whose coordinates are multiples of 1/r.

    Rows come out in lexicographic order of the integer compositions, so
    ``simplex_grid(2, 2)`` is ``[[0, 1], [0.5, 0.5], [1, 0]]``.
    """
    if n < 1 or r < 1:
        raise ValueError("simplex_grid needs n >= 1 and r >= 1")
    rows = []
    # stars and bars: choose the n-1 bar positions among r+n-1 slots
    for bars in itertools.combinations(range(r + n - 1), n - 1):
        prev = -1
        counts = []
        for b in bars:
            counts.append(b - prev - 1)
            prev = b
        counts.append(r + n - 1 - prev - 1)
        rows.append(counts)
    return np.asarray(rows, dtype=float) / r


def _simpson(fa, fm, fb, h):
    return h / 6.0 * (fa + 4.0 * fm + fb)


def quad(f: Callable, a: float, b: float, tol: float = 1e-10,
         max_intervals: int = 200_000, min_width: float = 1e-13) -> float:
    """Integrate ``f`` over [a, b] with a vectorized adaptive Simpson rule.

    ``f`` must accept a 1-d array.  All intervals that still need work are
    refined together, one level at a time.  An interval is accepted when the
    two-panel and one-panel estimates agree to 15x its share of ``tol`` or
    when it becomes narrower than ``min_width * (b - a)``.  The second
    condition is what lets integrable endpoint singularities terminate, at
    the cost of accuracy near the singular end.  A non-finite value exactly at
    an endpoint is replaced by the value at a point nudged inward.
    """
    if a == b:
        return 0.0
    if b < a:
        return -quad(f, b, a, tol, max_intervals, min_width)
    if not (np.isfinite(a) and np.isfinite(b)):
        raise ValueError("quad needs a finite interval")
    width = b - a
    nudge = 1e-9 * width

    def ev(x):
        with np.errstate(all="ignore"):
            return np.asarray(f(np.asarray(x, dtype=float)), dtype=float)

    fa, fb = ev(np.array([a, b]))
    if not np.isfinite(fa):
        fa = float(ev(np.array([a + nudge]))[0])
    if not np.isfinite(fb):
        fb = float(ev(np.array([b - nudge]))[0])
    fm = float(ev(np.array([0.5 * (a + b)]))[0])
    if not np.all(np.isfinite([fa, fb, fm])):
        raise QuadratureError("integrand is not finite near the interval")

    A = np.array([a]); B = np.array([b])
    FA = np.array([fa]); FM = np.array([fm]); FB = np.array([fb])
    W = _simpson(FA, FM, FB, B - A)
    T = np.array([tol])
    total = 0.0
    used = 1
    while A.size:
        M = 0.5 * (A + B)
        quarter = ev(np.concatenate([0.5 * (A + M), 0.5 * (M + B)]))
        FL, FR = quarter[:A.size], quarter[A.size:]
        if not np.all(np.isfinite(quarter)):
            raise QuadratureError("integrand returned a non-finite value inside the interval")
        left = _simpson(FA, FL, FM, M - A)
        right = _simpson(FM, FR, FB, B - M)
        err = left + right - W
        done = (np.abs(err) <= 15.0 * T) | ((B - A) <= min_width * width)
        total += float(np.sum((left + right + err / 15.0)[done]))
        keep = ~done
        used += int(np.count_nonzero(keep))
        if used > max_intervals:
            raise QuadratureError(f"no convergence within {max_intervals} intervals")
        A, M, B = A[keep], M[keep], B[keep]
        FA, FL, FM, FR, FB = FA[keep], FL[keep], FM[keep], FR[keep], FB[keep]
        left, right, T = left[keep], right[keep], T[keep] / 2.0
        A = np.concatenate([A, M]); B = np.concatenate([M, B])
        FA, FM, FB = np.concatenate([FA, FM]), np.concatenate([FL, FR]), np.concatenate([FM, FB])
        W = np.concatenate([left, right])
        T = np.concatenate([T, T])
    return total


def invert_monotone(f: Callable, y, bracket: tuple[float, float], tol: float = 1e-12,
                    max_iter: int = 200) -> np.ndarray | float:
    """Solve ``f(x) = y`` by bisection on ``bracket`` for a monotone ``f``.

    ``y`` may be an array; ``f`` must then be vectorized.  The direction of
    monotonicity is read from the bracket endpoints.  Targets outside
    ``[f(lo), f(hi)]`` raise :class:`InversionError`, as does a midpoint value
    that falls outside the current endpoint values, which exposes a function
    that is not monotone.  Iteration stops when ``|f(x) - y| <= tol`` or the
    bracket has shrunk to floating point resolution.
    """
    lo, hi = map(float, bracket)
    if not lo < hi:
        raise InversionError("bracket must satisfy lo < hi")
    y_arr = np.asarray(y, dtype=float)
    scalar = y_arr.ndim == 0
    y_arr = np.atleast_1d(y_arr)
    with np.errstate(all="ignore"):
        flo, fhi = (float(v) for v in np.asarray(f(np.array([lo, hi])), dtype=float))
    if np.isnan(flo) or np.isnan(fhi) or flo == fhi:
        raise InversionError("bracket endpoints do not determine a monotone direction")
    sign = 1.0 if fhi > flo else -1.0
    # work with an increasing function g = sign * f
    g_lo, g_hi = sign * flo, sign * fhi
    target = sign * y_arr
    if np.any(target < g_lo - tol) or np.any(target > g_hi + tol):
        bad = y_arr[(target < g_lo - tol) | (target > g_hi + tol)][0]
        raise InversionError(f"target {bad!r} outside range [{min(flo, fhi)}, {max(flo, fhi)}]")
    L = np.full(y_arr.shape, lo)
    H = np.full(y_arr.shape, hi)
    GL = np.full(y_arr.shape, g_lo)
    GH = np.full(y_arr.shape, g_hi)
    x = 0.5 * (L + H)
    for _ in range(max_iter):
        x = 0.5 * (L + H)
        with np.errstate(all="ignore"):
            gx = sign * np.asarray(f(x), dtype=float)
        if np.any(np.isnan(gx)):
            raise InversionError("function returned NaN inside the bracket")
        # rounding can break monotonicity by an ulp or two, so allow that much
        slack = tol + 8 * np.finfo(float).eps * np.maximum(1.0, np.maximum(np.abs(GL), np.abs(GH)))
        if np.any((gx < GL - slack) | (gx > GH + slack)):
            raise InversionError("function is not monotone on the bracket")
        resid = gx - target
        converged = (np.abs(resid) <= tol) | (H - L <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(x)))
        if np.all(converged):
            break
        up = resid < 0
        L = np.where(up & ~converged, x, L)
        GL = np.where(up & ~converged, gx, GL)
        H = np.where(~up & ~converged, x, H)
        GH = np.where(~up & ~converged, gx, GH)
    return float(x[0]) if scalar else x


def finite_diff(f: Callable, x, h: float = 1e-6) -> np.ndarray:
    """Central difference gradient of a scalar-valued ``f`` at array ``x``."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    flat = grad.reshape(-1)
    for k in range(x.size):
        e = np.zeros(x.size)
        e[k] = h
        e = e.reshape(x.shape)
        flat[k] = (f(x + e) - f(x - e)) / (2.0 * h)
    return grad


@dataclass(frozen=True)
class ScalarFn:
    """A vectorized real function with a declared domain and optional metadata.

    ``monotone`` is ``"increasing"``, ``"decreasing"`` or ``None``.  When
    ``deriv`` is missing, :meth:`derivative` falls back to a central
    difference.
    """

    fn: Callable
    domain: tuple[float, float] = (-np.inf, np.inf)
    monotone: Optional[str] = None
    deriv: Optional[Callable] = None
    name: str = ""

    def __call__(self, x):
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = self.fn(np.asarray(x, dtype=float))
        return out

    def derivative(self, x, h: float = 1e-6):
        if self.deriv is not None:
            with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                return self.deriv(np.asarray(x, dtype=float))
        x = np.asarray(x, dtype=float)
        step = h * np.maximum(1.0, np.abs(x))
        return (self(x + step) - self(x - step)) / (2.0 * step)

    def in_domain(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo, hi = self.domain
        return (x >= lo) & (x <= hi)


def safe_mul(a, b):
    """Elementwise product with the convention ``0 * inf = 0``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(invalid="ignore"):
        out = a * b
    return np.where(a == 0.0, 0.0, out)


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out if out.ndim else float(out)


def softplus(z):
    """``log(1 + exp(z))`` without overflow."""
    z = np.asarray(z, dtype=float)
    out = np.logaddexp(0.0, z)
    return out if out.ndim else float(out)


def logit(p):
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.log(p) - np.log1p(-p)
    return out if out.ndim else float(out)

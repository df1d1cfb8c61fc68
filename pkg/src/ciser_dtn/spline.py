"""Not-a-knot cubic spline interpolation.

Pieces are stored in local form ``p0 + p1*u + p2*u**2 + p3*u**3`` with
``u = x - x_k``; :meth:`CubicSpline.global_coefficients` expands them in
powers of ``x``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class SplineError(ValueError):
    pass


class TooFewPoints(SplineError):
    pass


class NonMonotonicKnots(SplineError):
    pass


class NonFiniteInput(SplineError):
    pass


class OutOfDomain(SplineError):
    pass


def solve_tridiagonal(
    lower: Sequence[float], diag: Sequence[float], upper: Sequence[float], rhs: Sequence[float]
) -> np.ndarray:
    """Thomas algorithm. ``lower[0]`` and ``upper[-1]`` are ignored."""
    n = len(diag)
    c = np.zeros(n)
    d = np.zeros(n)
    denom = diag[0]
    c[0] = upper[0] / denom if n > 1 else 0.0
    d[0] = rhs[0] / denom
    for k in range(1, n):
        denom = diag[k] - lower[k] * c[k - 1]
        if k < n - 1:
            c[k] = upper[k] / denom
        d[k] = (rhs[k] - lower[k] * d[k - 1]) / denom
    x = np.empty(n)
    x[-1] = d[-1]
    for k in range(n - 2, -1, -1):
        x[k] = d[k] - c[k] * x[k + 1]
    return x


@dataclass(frozen=True)
class CubicSpline:
    knots: np.ndarray
    coefficients: np.ndarray  # shape (n-1, 4): local p0..p3 per interval
    boundary: str = "not-a-knot"

    @property
    def domain(self) -> tuple[float, float]:
        return float(self.knots[0]), float(self.knots[-1])

    @property
    def max_spacing(self) -> float:
        return float(np.max(np.diff(self.knots)))

    def locate(self, x: float) -> int:
        lo, hi = self.domain
        if not lo <= x <= hi:
            raise OutOfDomain(f"x={x!r} outside [{lo!r}, {hi!r}]")
        k = bisect.bisect_right(self.knots, x) - 1
        return min(k, len(self.knots) - 2)

    def __call__(self, x: float, nu: int = 0) -> float:
        return evaluate(self, x, nu)

    def piece_value(self, k: int, x: float, nu: int = 0) -> float:
        """Evaluate piece ``k`` (or its ``nu``-th derivative) without a domain check."""
        p0, p1, p2, p3 = self.coefficients[k]
        u = x - self.knots[k]
        if nu == 0:
            return float(p0 + u * (p1 + u * (p2 + u * p3)))
        if nu == 1:
            return float(p1 + u * (2.0 * p2 + 3.0 * p3 * u))
        if nu == 2:
            return float(2.0 * p2 + 6.0 * p3 * u)
        if nu == 3:
            return float(6.0 * p3)
        raise ValueError("nu must be 0..3")

    def global_coefficients(self) -> np.ndarray:
        """Coefficients of each piece as a polynomial in x rather than x - x_k."""
        out = np.empty_like(self.coefficients)
        for k, (p0, p1, p2, p3) in enumerate(self.coefficients):
            a = self.knots[k]
            out[k] = (
                p0 - p1 * a + p2 * a * a - p3 * a**3,
                p1 - 2.0 * p2 * a + 3.0 * p3 * a * a,
                p2 - 3.0 * p3 * a,
                p3,
            )
        return out


def fit_not_a_knot(xs: Sequence[float], ys: Sequence[float]) -> CubicSpline:
    """Interpolating cubic spline with continuous third derivative at the
    second and penultimate knots."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.ndim != 1 or x.shape != y.shape:
        raise SplineError("xs and ys must be 1-D and the same length")
    n = len(x)
    if n < 4:
        raise TooFewPoints(f"need at least 4 points, got {n}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise NonFiniteInput("xs and ys must be finite")
    h = np.diff(x)
    if np.any(h <= 0):
        raise NonMonotonicKnots("knots must be strictly increasing")

    slope = np.diff(y) / h
    # unknowns: second derivatives M_1..M_{n-2}; M_0 and M_{n-1} are
    # eliminated with the two not-a-knot relations
    m = n - 2
    lower = np.zeros(m)
    diag = np.zeros(m)
    upper = np.zeros(m)
    rhs = 6.0 * (slope[1:] - slope[:-1])
    for j in range(m):
        k = j + 1
        lower[j] = h[k - 1]
        diag[j] = 2.0 * (h[k - 1] + h[k])
        upper[j] = h[k]

    h0, h1 = h[0], h[1]
    # M_0 = ((h0 + h1) M_1 - h0 M_2) / h1
    diag[0] += h0 * (h0 + h1) / h1
    upper[0] -= h0 * h0 / h1
    hl, hp = h[-1], h[-2]
    # M_{n-1} = ((hp + hl) M_{n-2} - hl M_{n-3}) / hp
    diag[-1] += hl * (hp + hl) / hp
    lower[-1] -= hl * hl / hp

    inner = solve_tridiagonal(lower, diag, upper, rhs)
    moments = np.empty(n)
    moments[1:-1] = inner
    moments[0] = ((h0 + h1) * inner[0] - h0 * inner[1]) / h1
    moments[-1] = ((hp + hl) * inner[-1] - hl * inner[-2]) / hp

    coef = np.empty((n - 1, 4))
    coef[:, 0] = y[:-1]
    coef[:, 1] = slope - h * (2.0 * moments[:-1] + moments[1:]) / 6.0
    coef[:, 2] = moments[:-1] / 2.0
    coef[:, 3] = (moments[1:] - moments[:-1]) / (6.0 * h)
    return CubicSpline(knots=x, coefficients=coef)


def evaluate(spline: CubicSpline, x: float, nu: int = 0) -> float:
    """Value of the spline (or derivative) at ``x``; extrapolation is refused."""
    if not math.isfinite(x):
        raise NonFiniteInput(f"x={x!r}")
    return spline.piece_value(spline.locate(x), x, nu)


def evaluate_many(spline: CubicSpline, xs: Sequence[float]) -> np.ndarray:
    x = np.asarray(xs, dtype=float)
    lo, hi = spline.domain
    if x.size and (x.min() < lo or x.max() > hi):
        raise OutOfDomain(f"evaluation points leave [{lo!r}, {hi!r}]")
    k = np.clip(np.searchsorted(spline.knots, x, side="right") - 1, 0, len(spline.knots) - 2)
    u = x - spline.knots[k]
    p = spline.coefficients[k]
    return p[:, 0] + u * (p[:, 1] + u * (p[:, 2] + u * p[:, 3]))


def error_bound(h: float, f4_max: float) -> float:
    """Uniform error bound (5/384) h^4 max|f''''|."""
    if not h > 0:
        raise ValueError("h must be positive")
    if f4_max < 0:
        raise ValueError("f4_max must be non-negative")
    return 5.0 / 384.0 * h**4 * f4_max


def mse(spline: CubicSpline, xs: Sequence[float], ys: Sequence[float]) -> float:
    y = np.asarray(ys, dtype=float)
    resid = evaluate_many(spline, xs) - y
    return float(np.mean(resid * resid))


@dataclass(frozen=True)
class FitReport:
    mse: float
    error_bound: float | None
    h: float


def fit_report(
    spline: CubicSpline,
    xs: Sequence[float],
    ys: Sequence[float],
    f4_max: float | None = None,
) -> FitReport:
    h = spline.max_spacing
    bound = error_bound(h, f4_max) if f4_max is not None else None
    return FitReport(mse=mse(spline, xs, ys), error_bound=bound, h=h)


def estimate_f4_max(spline: CubicSpline) -> float:
    """Crude max |f''''| from jumps in the spline's third derivative.

    Used when the underlying function is only known through samples.
    """
    p3 = spline.coefficients[:, 3] * 6.0
    if len(p3) < 2:
        return 0.0
    centers = 0.5 * (spline.knots[:-1] + spline.knots[1:])
    return float(np.max(np.abs(np.diff(p3) / np.diff(centers))))

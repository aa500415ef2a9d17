"""Special functions and fractional calculus on sampled grids.

Contents
--------
* :func:`mittag_leffler` -- two-parameter Mittag-Leffler function on the real line.
* :func:`mainardi` and :func:`mainardi_moment` -- the M-Wright (Mainardi) density.
* :func:`rl_integral` and :func:`caputo_derivative` -- product-quadrature
  operators acting on piecewise-linear reconstructions of samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import mpmath
import numpy as np
from scipy.integrate import quad
from scipy.special import gamma, gammaln, rgamma

ArrayLike = Union[float, np.ndarray]

# zone boundaries for the real-line Mittag-Leffler evaluation (0 < alpha < 1)
_SERIES_RADIUS = 1.0
_ASYMPTOTIC_SCALE = 45.0  # asymptotic once |z|**(1/alpha) >= this
_CONTOUR_NODES = 20
_CONTOUR_SUBTRACT = 2


class QuadratureError(RuntimeError):
    """Raised when a quadrature cannot certify its requested tolerance."""


@dataclass(frozen=True)
class FractionalOrder:
    """Order ``alpha`` of a Caputo derivative, restricted to ``0 < alpha < 1``."""

    alpha: float

    def __post_init__(self) -> None:
        a = float(self.alpha)
        if not (0.0 < a < 1.0) or not math.isfinite(a):
            raise ValueError(f"fractional order must satisfy 0 < alpha < 1, got alpha={self.alpha!r}")
        object.__setattr__(self, "alpha", a)

    def __float__(self) -> float:
        return self.alpha


@dataclass(frozen=True)
class SampledFunction:
    """Samples of a (possibly vector-valued) function of time.

    ``values[i]`` is the sample at ``grid[i]``; trailing axes of ``values`` are
    carried through every operator unchanged.
    """

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values)
        if grid.ndim != 1 or grid.size < 2:
            raise ValueError("grid must be one-dimensional with at least 2 points")
        if not np.all(np.diff(grid) > 0):
            raise ValueError("grid must be strictly increasing")
        if values.shape[0] != grid.size:
            raise ValueError(f"values has {values.shape[0]} samples but grid has {grid.size} points")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.grid.size


def _order(alpha: float | FractionalOrder) -> float:
    if isinstance(alpha, FractionalOrder):
        return alpha.alpha
    return FractionalOrder(alpha).alpha


# {{{ Mittag-Leffler


def mittag_leffler(alpha: float, beta: float, z: ArrayLike) -> ArrayLike:
    r"""Evaluate :math:`E_{\alpha,\beta}(z) = \sum_n z^n / \Gamma(\alpha n + \beta)` for real ``z``.

    For ``0 < alpha < 1`` the evaluation switches between

    * the Taylor series for ``|z| <= 1`` (and a log-space positive series for ``z > 1``),
    * the algebraic asymptotic expansion once ``|z|**(1/alpha) >= 45``,
    * a trapezoidal rule on a parabolic Hankel contour in between, applied to the
      Laplace transform with its two leading asymptotic terms removed.

    ``alpha == 1`` uses closed forms for ``beta`` in ``{1, 2}``. Other
    ``alpha >= 1`` cases fall back to an extended-precision series.

    Parameters
    ----------
    alpha, beta:
        Positive parameters.
    z:
        Real scalar or array.

    Raises
    ------
    ValueError
        If ``alpha <= 0`` or ``beta <= 0``.
    OverflowError
        If the result for a positive argument exceeds the double range.
    """
    alpha = float(alpha)
    beta = float(beta)
    if not alpha > 0.0:
        raise ValueError(f"mittag_leffler requires alpha > 0, got {alpha}")
    if not beta > 0.0:
        raise ValueError(f"mittag_leffler requires beta > 0, got {beta}")

    scalar = np.ndim(z) == 0
    zz = np.atleast_1d(np.asarray(z, dtype=float))
    if np.iscomplexobj(z) or not np.all(np.isfinite(zz)):
        raise ValueError("mittag_leffler is defined here for finite real arguments only")

    if alpha == 1.0 and beta in (1.0, 2.0):
        out = _ml_exponential(beta, zz)
    elif alpha < 1.0:
        out = _ml_fractional(alpha, beta, zz)
    else:
        out = np.array([_ml_mpmath(alpha, beta, zi) for zi in zz.ravel()]).reshape(zz.shape)

    return float(out[0]) if scalar else out


def _ml_exponential(beta: float, z: np.ndarray) -> np.ndarray:
    if beta == 1.0:
        with np.errstate(over="raise"):
            try:
                return np.exp(z)
            except FloatingPointError as exc:
                raise OverflowError("E_{1,1}(z) overflows for this argument") from exc
    out = np.ones_like(z)
    nz = z != 0.0
    with np.errstate(over="raise"):
        try:
            out[nz] = np.expm1(z[nz]) / z[nz]
        except FloatingPointError as exc:
            raise OverflowError("E_{1,2}(z) overflows for this argument") from exc
    return out


def _ml_fractional(alpha: float, beta: float, z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    x = -z
    series = np.abs(z) <= _SERIES_RADIUS
    positive = (z > _SERIES_RADIUS)
    asymptotic = (x > 0) & (np.abs(x) ** (1.0 / alpha) >= _ASYMPTOTIC_SCALE) & ~series
    middle = ~(series | positive | asymptotic)

    if np.any(series):
        out[series] = _ml_series(alpha, beta, z[series])
    if np.any(asymptotic):
        out[asymptotic] = _ml_asymptotic(alpha, beta, x[asymptotic])
    if np.any(middle):
        out[middle] = _ml_contour(alpha, beta, x[middle])
    if np.any(positive):
        out[positive] = [_ml_positive_series(alpha, beta, zi) for zi in z[positive]]
    return out


def _ml_series(alpha: float, beta: float, z: np.ndarray) -> np.ndarray:
    # |z| <= 1: terms are bounded by 1/Gamma(alpha n + beta) < 1e-17 once alpha n + beta > 20
    nterms = int(math.ceil(max(20.0 - beta, 0.0) / alpha)) + 2
    n = np.arange(nterms)
    coef = rgamma(alpha * n + beta)
    acc = np.zeros_like(z)
    for c in coef[::-1]:
        acc = acc * z + c
    return acc


def _ml_asymptotic(alpha: float, beta: float, x: np.ndarray) -> np.ndarray:
    # E(-x) ~ sum_{k>=1} (-1)^(k+1) x^(-k) / Gamma(beta - alpha k), truncated at the
    # smallest term (optimal truncation) within a cap of 40/alpha terms
    nterms = int(math.ceil(40.0 / alpha))
    k = np.arange(1, nterms + 1)
    coef = (-1.0) ** (k + 1) * rgamma(beta - alpha * k)
    logmag = np.where(coef != 0.0, np.log(np.abs(coef) + (coef == 0.0)), -np.inf)
    logterm = logmag[None, :] - k[None, :] * np.log(x)[:, None]
    # poles of Gamma give exact zeros; they must not be mistaken for the minimum
    stop = np.argmin(np.where(np.isfinite(logterm), logterm, np.inf), axis=1)
    keep = k[None, :] <= (stop + 1)[:, None]
    terms = np.where(keep, coef[None, :] * np.exp(-k[None, :] * np.log(x)[:, None]), 0.0)
    return terms.sum(axis=1)


def _ml_contour(alpha: float, beta: float, x: np.ndarray) -> np.ndarray:
    # Inverse Laplace transform of s^(alpha-beta)/(s^alpha + x) at t = 1 on the parabola
    # s(u) = mu (1 + iu)^2, after subtracting the first two asymptotic terms whose
    # inverse transforms are known in closed form.
    n = _CONTOUR_NODES
    m = _CONTOUR_SUBTRACT
    h = 3.0 / n
    mu = math.pi * n / 12.0
    u = h * np.arange(n + 1)
    s = mu * (1.0 + 1j * u) ** 2
    ds = 2j * mu * (1.0 + 1j * u)
    weights = np.full(u.shape, h / math.pi)
    weights[0] *= 0.5

    sa = s ** alpha
    xx = x[:, None]
    remainder = (-1.0) ** m * (sa / xx) ** m * s ** (alpha - beta) / (sa + xx)
    integral = np.imag(remainder * np.exp(s) * ds) @ weights

    k = np.arange(1, m + 1)
    leading = ((-1.0) ** (k + 1) * rgamma(beta - alpha * k)) * x[:, None] ** (-k.astype(float))
    return leading.sum(axis=1) + integral


def _ml_positive_series(alpha: float, beta: float, z: float) -> float:
    # all terms positive: sum in log space
    peak = z ** (1.0 / alpha) / alpha
    if z ** (1.0 / alpha) > 705.0:
        raise OverflowError(f"E_{{{alpha},{beta}}}({z}) exceeds the double-precision range")
    nmax = int(2.0 * peak + 40.0 * math.sqrt(peak + 1.0) / alpha + 60.0)
    n = np.arange(nmax)
    logt = n * math.log(z) - gammaln(alpha * n + beta)
    top = logt.max()
    value = top + math.log(np.exp(logt - top).sum())
    if value > 709.0:
        raise OverflowError(f"E_{{{alpha},{beta}}}({z}) exceeds the double-precision range")
    return math.exp(value)


def _ml_mpmath(alpha: float, beta: float, z: float) -> float:
    # extended precision series; digits grow with the cancellation exp(|z|^(1/alpha))
    scale = abs(z) ** (1.0 / alpha)
    with mpmath.workdps(int(scale / 2.3) + 30):
        a, b, zz = mpmath.mpf(alpha), mpmath.mpf(beta), mpmath.mpf(z)
        total = mpmath.mpf(0)
        tiny = mpmath.mpf(10) ** (-mpmath.mp.dps + 3)
        n = 0
        while True:
            term = zz**n * mpmath.rgamma(a * n + b)
            total += term
            if n > scale / alpha + 5 and abs(term) <= tiny * abs(total):
                break
            n += 1
        result = float(total)
    if not math.isfinite(result):
        raise OverflowError(f"E_{{{alpha},{beta}}}({z}) exceeds the double-precision range")
    return result


# }}}

# {{{ Mainardi function


def _kanter(alpha: float, phi: np.ndarray) -> np.ndarray:
    return (
        np.sin(alpha * phi) ** (alpha / (1.0 - alpha))
        * np.sin((1.0 - alpha) * phi)
        / np.sin(phi) ** (1.0 / (1.0 - alpha))
    )


def _mainardi_integral(alpha: float, t: float) -> float:
    # positive-integrand representation inherited from the one-sided stable density
    c = t ** (1.0 / (1.0 - alpha))

    def integrand(phi: float) -> float:
        a = _kanter(alpha, phi)
        return a * math.exp(-c * a)

    val, _ = quad(integrand, 0.0, math.pi, epsabs=0.0, epsrel=1e-13, limit=200)
    return t ** (alpha / (1.0 - alpha)) / (1.0 - alpha) * val / math.pi


def _mainardi_series(alpha: float, t: float) -> float:
    total = 0.0
    comp = 0.0
    logt = math.log(t) if t > 0 else -math.inf
    for n in range(1, 2000):
        mag = math.lgamma(alpha * n) if n == 1 else (n - 1) * logt - math.lgamma(n) + math.lgamma(alpha * n)
        envelope = math.exp(mag)
        term = (-1.0) ** (n - 1) * envelope * math.sin(math.pi * alpha * n)
        # Kahan summation
        y = term - comp
        s = total + y
        comp = (s - total) - y
        total = s
        # sin(pi*alpha*n) can vanish by accident, so test the envelope
        if n > 5 and envelope < 1e-18 * abs(total):
            break
    return total / math.pi


def mainardi(alpha: float | FractionalOrder, t: ArrayLike) -> ArrayLike:
    """Mainardi function ``M_alpha(t)`` for ``t >= 0``.

    Uses the defining power series for ``t <= 0.5``, the closed form
    ``exp(-t**2/4)/sqrt(pi)`` at ``alpha = 1/2``, and otherwise an integral
    representation with a positive integrand so that the rapid decay for large
    ``t`` is resolved in relative terms.
    """
    a = _order(alpha)
    scalar = np.ndim(t) == 0
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(tt < 0) or not np.all(np.isfinite(tt)):
        raise ValueError("mainardi is defined for finite t >= 0")
    out = np.empty_like(tt)
    for i, ti in np.ndenumerate(tt):
        if a == 0.5:
            out[i] = math.exp(-ti * ti / 4.0) / math.sqrt(math.pi)
        elif ti <= 0.5:
            out[i] = _mainardi_series(a, ti)
        else:
            out[i] = _mainardi_integral(a, ti)
    return float(out[0]) if scalar else out


def mainardi_moment(
    alpha: float | FractionalOrder,
    q: float,
    s_max: float = 20.0,
    tol: float = 1e-8,
) -> float:
    """Integrate ``s**q * M_alpha(s)`` over ``[0, s_max]`` by adaptive quadrature.

    The tail beyond ``s_max`` is estimated separately and must stay below ``tol``;
    it is not added to the result.

    Raises
    ------
    QuadratureError
        If the tail estimate or the quadrature error estimate exceeds ``tol``.
    """
    a = _order(alpha)
    q = float(q)
    if not q > -1.0:
        raise ValueError(f"moment order must satisfy q > -1, got {q}")

    def m(s: float) -> float:
        return mainardi(a, s)

    # s^q is singular at the origin for q < 0: use an algebraic weight on [0, 1]
    head, err_head = quad(m, 0.0, min(1.0, s_max), weight="alg", wvar=(q, 0.0), epsabs=1e-14, limit=200)
    body, err_body = 0.0, 0.0
    if s_max > 1.0:
        body, err_body = quad(lambda s: s**q * m(s), 1.0, s_max, epsabs=1e-14, epsrel=1e-12, limit=400)
    tail, _ = quad(lambda s: s**q * m(s), s_max, 4.0 * s_max, epsabs=1e-16, limit=400)
    if abs(tail) > tol:
        raise QuadratureError(f"tail beyond s_max={s_max} is {tail:.3e} > tol={tol:.1e}")
    if err_head + err_body > tol:
        raise QuadratureError(f"quadrature error estimate {err_head + err_body:.3e} exceeds tol={tol:.1e}")
    return head + body


# }}}

# {{{ fractional integral and derivative


def _as_2d(values: np.ndarray) -> tuple[np.ndarray, tuple[int, ...]]:
    shape = values.shape
    return values.reshape(shape[0], -1), shape


def rl_integral_weights(alpha: float, grid: np.ndarray) -> np.ndarray:
    """Lower-triangular matrix ``W`` with ``(J^alpha f)(t_m) = sum_j W[m, j] f_j``.

    Exact for continuous piecewise-linear ``f`` on ``grid``.
    """
    t = np.asarray(grid, dtype=float)
    n = t.size
    w = np.zeros((n, n))
    for m in range(1, n):
        b = t[m] - t[:m]
        a = t[m] - t[1 : m + 1]
        h = b - a
        d0 = (b**alpha - a**alpha) / alpha
        d1 = (b ** (alpha + 1) - a ** (alpha + 1)) / (alpha + 1)
        left = (d1 - a * d0) / h  # multiplies f_j
        right = (b * d0 - d1) / h  # multiplies f_{j+1}
        w[m, :m] += left
        w[m, 1 : m + 1] += right
    return w / gamma(alpha)


def rl_integral(alpha: float | FractionalOrder, f: SampledFunction) -> SampledFunction:
    """Riemann-Liouville integral ``J^alpha f`` on the grid of ``f``.

    Product-trapezoidal rule: the piecewise-linear interpolant of the samples is
    integrated exactly against the kernel ``(t - s)**(alpha - 1) / Gamma(alpha)``.
    The lower limit is ``f.grid[0]``.
    """
    a = _order(alpha)
    w = rl_integral_weights(a, f.grid - f.grid[0])
    vals, shape = _as_2d(f.values)
    return SampledFunction(f.grid, (w @ vals).reshape(shape))


def caputo_weights(alpha: float, grid: np.ndarray) -> np.ndarray:
    """Matrix of the L1 scheme: ``(D^alpha f)(t_m) = sum_j W[m, j] f_j``."""
    t = np.asarray(grid, dtype=float)
    n = t.size
    w = np.zeros((n, n))
    p = 1.0 - alpha
    for m in range(1, n):
        b = t[m] - t[:m]
        a = t[m] - t[1 : m + 1]
        c = (b**p - a**p) / (b - a)
        w[m, 1 : m + 1] += c
        w[m, :m] -= c
    return w / gamma(2.0 - alpha)


def caputo_derivative(alpha: float | FractionalOrder, f: SampledFunction) -> SampledFunction:
    """Caputo derivative of order ``alpha`` by the L1 scheme.

    ``f`` is read as its continuous piecewise-linear interpolant, whose Caputo
    derivative is evaluated exactly at the grid points. The value at the first
    grid point is zero.
    """
    a = _order(alpha)
    w = caputo_weights(a, f.grid - f.grid[0])
    vals, shape = _as_2d(f.values)
    return SampledFunction(f.grid, (w @ vals).reshape(shape))


# }}}

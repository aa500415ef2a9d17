"""Fractional solution operators acting diagonally on spectral fields.

For a positive diagonal operator ``A`` with eigenvalues ``lam`` the relaxation
family and its convolution kernel have the symbols

    S(t):  E_alpha(-lam t**alpha)
    T(t):  t**(alpha-1) E_{alpha,alpha}(-lam t**alpha)

``alpha = 1`` is accepted as the classical limit (``exp(-lam t)`` for both),
which the solver uses as a reference configuration.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .spectral import FieldLike, SpectralOperator, coefficients, rewrap, sobolev_norm
from .specfun import FractionalOrder, QuadratureError, mittag_leffler

Which = Literal["S", "T"]

# sweep used to close the sup over the continuous spectrum
_SWEEP_LAMBDA_MAX = 1e6
_SWEEP_POINTS = 400


def _alpha_value(alpha: float | FractionalOrder, allow_classical: bool = True) -> float:
    a = float(alpha)
    upper_ok = a <= 1.0 if allow_classical else a < 1.0
    if not (0.0 < a and upper_ok) or not math.isfinite(a):
        raise ValueError(f"order must satisfy 0 < alpha < 1 (alpha = 1 as classical limit), got {alpha!r}")
    return a


def s_symbol(alpha: float, lam, t: float):
    """``E_alpha(-lam t**alpha)``; equals 1 at ``t = 0``."""
    lam = np.asarray(lam, dtype=float)
    if t == 0:
        return np.ones_like(lam) if lam.ndim else 1.0
    return mittag_leffler(alpha, 1.0, -lam * t**alpha)


def t_symbol(alpha: float, lam, t: float):
    if not t > 0:
        raise ValueError("the kernel symbol is singular at t = 0 and defined only for t > 0")
    lam = np.asarray(lam, dtype=float)
    return t ** (alpha - 1.0) * mittag_leffler(alpha, alpha, -lam * t**alpha)


@dataclass(frozen=True, eq=False)
class OperatorFamily:
    alpha: float
    op: SpectralOperator

    def __post_init__(self) -> None:
        object.__setattr__(self, "alpha", _alpha_value(self.alpha))

    def s_factors(self, t: float) -> np.ndarray:
        if t < 0:
            raise ValueError(f"t must be nonnegative, got {t}")
        if t == 0:
            return self.op.power(0.0)
        return self.op.symbol(lambda lam: s_symbol(self.alpha, lam, t))

    def t_factors(self, t: float) -> np.ndarray:
        return self.op.symbol(lambda lam: t_symbol(self.alpha, lam, t))


def apply_S(fam: OperatorFamily, t: float, u: FieldLike) -> FieldLike:
    return rewrap(u, coefficients(u) * fam.s_factors(t))


def apply_T(fam: OperatorFamily, t: float, u: FieldLike) -> FieldLike:
    return rewrap(u, coefficients(u) * fam.t_factors(t))


def check_commutation(fam: OperatorFamily, beta: float, u: FieldLike, t: float) -> float:
    """``||A^b S(t) u - S(t) A^b u|| / ||A^b u||`` (zero when the denominator is)."""
    c = coefficients(u)
    pw = fam.op.power(beta)
    s = fam.s_factors(t)
    lhs = pw * (s * c)
    rhs = s * (pw * c)
    denom = sobolev_norm(fam.op, beta, u)
    if denom == 0:
        return 0.0
    return float(np.sqrt(np.sum(np.abs(lhs - rhs) ** 2))) / denom


# {{{ contour oracle

# fixed-scale Talbot contour; s(theta) = mu * (a + b theta cot(c theta) + i d theta)
_TALBOT = (-0.6122, 0.5017, 0.6407, 0.2645)
_TALBOT_SCALE = 24.0


def _talbot_sum(alpha: float, lam: float, t: float, which: Which, n: int) -> float:
    a, b, c, d = _TALBOT
    mu = _TALBOT_SCALE / t
    theta = (np.arange(n) + 0.5) * np.pi / n
    cot = 1.0 / np.tan(c * theta)
    s = mu * (a + b * theta * cot + 1j * d * theta)
    ds = mu * (b * cot - b * c * theta / np.sin(c * theta) ** 2 + 1j * d)
    sa = s**alpha
    F = 1.0 / (sa + lam)
    if which == "S":
        F = F * sa / s
    g = np.exp(s * t) * F * ds
    # conjugate symmetry folds (-pi, pi) onto (0, pi)
    return float(np.sum(g).imag / n)


def contour_eval_scalar(
    alpha: float | FractionalOrder,
    lam: float,
    t: float,
    which: Which = "S",
    tol: float = 1e-8,
    n_min: int = 64,
    n_max: int = 8192,
) -> float:
    """Inverse Laplace transform of ``s**(alpha-1)/(s**alpha + lam)`` (``which="S"``)
    or ``1/(s**alpha + lam)`` (``which="T"``) at time ``t``, by midpoint quadrature
    on a Talbot contour.  Independent of :func:`mittag_leffler`.

    Raises
    ------
    QuadratureError
        If doubling the node count never changes the value by ``tol`` or less.
    """
    a = _alpha_value(alpha)
    if which not in ("S", "T"):
        raise ValueError(f"which must be 'S' or 'T', got {which!r}")
    if not (t > 0 and lam > 0):
        raise ValueError("contour evaluation needs t > 0 and lam > 0")
    n = n_min
    prev = _talbot_sum(a, lam, t, which, n)
    while n < n_max:
        n *= 2
        cur = _talbot_sum(a, lam, t, which, n)
        if abs(cur - prev) <= tol:
            return cur
        prev = cur
    raise QuadratureError(f"contour quadrature did not settle to {tol:g} with {n} nodes")


# }}}

# {{{ bound audits


@dataclass
class BoundRow:
    lemma: str
    beta: float
    t: float
    raw_norm: float
    normalized: float


@dataclass
class BoundReport:
    """Empirical constants with the sampled rows they were taken from.

    ``constants`` maps ``"C1"``, ``"C2"``, ``"C3(beta)"``, ``"B1"``, ``"B2"``,
    ``"B3(beta)"``, ``"B4(beta)"`` to the supremum of the normalized norm over
    the requested times; ``refined`` holds the same supremum on a ten-times
    finer time grid, and ``stable`` whether the two agree to 10 %.
    """

    alpha: float
    rows: list[BoundRow] = field(default_factory=list)
    constants: dict[str, float] = field(default_factory=dict)
    refined: dict[str, float] = field(default_factory=dict)

    @property
    def stable(self) -> dict[str, bool]:
        out = {}
        for key, val in self.constants.items():
            ref = self.refined[key]
            out[key] = bool(np.isfinite(val) and np.isfinite(ref) and abs(ref - val) <= 0.1 * abs(ref))
        return out

    @property
    def B3(self) -> float:
        """Largest ``B3(beta)`` in the report."""
        vals = [v for k, v in self.constants.items() if k.startswith("B3(")]
        return max(vals)

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lemma", "beta", "t", "raw_norm", "normalized"])
            for r in self.rows:
                w.writerow([r.lemma, repr(r.beta), repr(r.t), repr(r.raw_norm), repr(r.normalized)])


def sweep_spectrum(op: SpectralOperator, n_points: int = _SWEEP_POINTS) -> np.ndarray:
    """Eigenvalue table merged with a log sweep up to ``1e6``."""
    lo = op.lambda_min
    hi = max(_SWEEP_LAMBDA_MAX, float(op.spectrum[-1]))
    return np.union1d(op.spectrum, np.geomspace(lo, hi, n_points))


def _bound_specs(alpha: float, betas: Sequence[float]):
    # (label, beta, symbol(lam, t) >= 0, t-exponent p with norm <= K t**p)
    yield "C1", 0.0, lambda lam, t: np.abs(s_symbol(alpha, lam, t)), 0.0
    yield "C2", 1.0, lambda lam, t: lam * np.abs(s_symbol(alpha, lam, t)), -alpha
    for b in betas:
        yield f"C3({b:g})", b, lambda lam, t, b=b: lam**b * np.abs(s_symbol(alpha, lam, t)), -alpha * b
    yield "B1", 0.0, lambda lam, t: np.abs(t_symbol(alpha, lam, t)), alpha - 1.0
    yield "B2", 1.0, lambda lam, t: lam * np.abs(t_symbol(alpha, lam, t)), -1.0
    for b in betas:
        yield f"B3({b:g})", b, lambda lam, t, b=b: lam**b * np.abs(t_symbol(alpha, lam, t)), alpha * (1 - b) - 1.0


def _sup_normalized(sym, power: float, lam: np.ndarray, ts: np.ndarray):
    raw = np.array([float(np.max(sym(lam, t))) for t in ts])
    return raw, raw / ts**power


def _continuity_sup(alpha: float, beta: float, lam: np.ndarray, ts: np.ndarray):
    # ||A^b (T(t) - T(s))|| against s**e - t**e, e = alpha(1-b) - 1, on consecutive pairs
    e = alpha * (1.0 - beta) - 1.0
    vals = np.array([lam**beta * t_symbol(alpha, lam, t) for t in ts])
    raw = np.max(np.abs(np.diff(vals, axis=0)), axis=1)
    gap = ts[:-1] ** e - ts[1:] ** e
    return raw, raw / gap


def audit_operator_bounds(
    fam: OperatorFamily,
    betas: Sequence[float],
    t_grid: Sequence[float],
    refine: int = 10,
) -> BoundReport:
    """Empirical constants for the operator-norm bounds of ``S`` and ``T``.

    Each operator norm is the supremum of the scalar symbol over
    :func:`sweep_spectrum`; multiplying by the inverse of the claimed power of
    ``t`` and taking the supremum over ``t_grid`` yields the constant.
    """
    ts = np.sort(np.asarray(t_grid, dtype=float))
    if ts.size == 0 or np.any(ts <= 0):
        raise ValueError("t_grid must be a nonempty list of positive times")
    betas = [float(b) for b in betas]
    if not betas or any(not 0.0 < b < 1.0 for b in betas):
        raise ValueError("betas must be a nonempty list in (0, 1)")
    fine = np.geomspace(ts[0], ts[-1], refine * ts.size) if ts.size > 1 else ts
    lam = sweep_spectrum(fam.op)
    rep = BoundReport(fam.alpha)
    for label, beta, sym, power in _bound_specs(fam.alpha, betas):
        raw, norm = _sup_normalized(sym, power, lam, ts)
        rep.rows += [BoundRow(label, beta, float(t), float(r), float(k)) for t, r, k in zip(ts, raw, norm)]
        rep.constants[label] = float(np.max(norm))
        rep.refined[label] = float(np.max(_sup_normalized(sym, power, lam, fine)[1]))
    if ts.size > 1:
        for b in betas:
            label = f"B4({b:g})"
            raw, norm = _continuity_sup(fam.alpha, b, lam, ts)
            rep.rows += [BoundRow(label, b, float(t), float(r), float(k)) for t, r, k in zip(ts[1:], raw, norm)]
            rep.constants[label] = float(np.max(norm))
            rep.refined[label] = float(np.max(_continuity_sup(fam.alpha, b, lam, fine)[1]))
    return rep


def continuity_modulus(fam: OperatorFamily, beta: float, t0: float, t: float) -> float:
    """``sup_lam lam**beta |T-symbol(t) - T-symbol(t0)|`` over :func:`sweep_spectrum`."""
    lam = sweep_spectrum(fam.op)
    diff = t_symbol(fam.alpha, lam, t) - t_symbol(fam.alpha, lam, t0)
    return float(np.max(lam**beta * np.abs(diff)))


# }}}

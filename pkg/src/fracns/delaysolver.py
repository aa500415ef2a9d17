"""Mild-solution time stepping for the fractional delay problem.

The unknown satisfies the Volterra equation

    u(t) = S(t) phi(0) + int_0^t T(t - s) g(s) ds,
    g(s) = F u(s) + P f(s, u_s) + source(s),

where ``u_s(theta) = u(s + theta)`` on ``[-r, 0]``.  Each panel
``[t_{i-1}, t_i]`` of the time mesh freezes ``g`` at its right endpoint and
integrates the kernel exactly, mode by mode, through

    int_0^tau T(s) ds = tau**alpha E_{alpha,alpha+1}(-lam tau**alpha).

The newest panel's value ``g(t_n)`` depends on the unknown ``u(t_n)`` and is
resolved by Picard iteration.  With ``g`` identically zero the scheme returns
``S(t_n) phi(0)`` exactly.
"""

from __future__ import annotations

import bisect
import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid

from .solops import OperatorFamily, _alpha_value
from .spectral import (
    SpectralField,
    SpectralOperator,
    nonlinear_coefficients,
    project_coefficients,
)
from .specfun import mittag_leffler

FORCE_KINDS = ("none", "point_delay", "distributed_delay", "modulated_point_delay")


class HistoryGapError(LookupError):
    """A delayed value was requested outside the stored trajectory."""


class PicardError(RuntimeError):
    def __init__(self, message: str, iterations: int, last_ratio: float):
        super().__init__(message)
        self.iterations = iterations
        self.last_ratio = last_ratio


class BlowUpError(RuntimeError):
    def __init__(self, t: float, norm: float, t_max: float):
        super().__init__(f"norm {norm:.3e} crossed the blow-up threshold at t={t:.6g} (t_max ~ {t_max:.6g})")
        self.t = t
        self.norm = norm
        self.t_max = t_max


class BallExitError(RuntimeError):
    """Strict mode: the trajectory left the ball of radius R around the datum."""


def _half_norm(op: SpectralOperator, beta: float, c: np.ndarray) -> float:
    return float(np.sqrt(np.sum(np.abs(c * op.power(beta)) ** 2)))


# {{{ history


class HistorySegment:
    """Trajectory samples on ``[t_0, t_now]`` with ``t_0 <= t_now - r``.

    Values are coefficient arrays; between samples the trajectory is linear in
    coefficient space.
    """

    def __init__(self, delay_r: float, times: Sequence[float], values: Sequence[np.ndarray]):
        if not delay_r > 0:
            raise ValueError(f"delay must be positive, got r={delay_r}")
        times = [float(t) for t in times]
        if len(times) < 2 or len(times) != len(values):
            raise ValueError("history needs at least two samples and one value per time")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("history times must be strictly increasing")
        if times[-1] - times[0] < delay_r * (1 - 1e-12):
            raise ValueError(f"history spans {times[-1] - times[0]:g} < r = {delay_r:g}")
        shape = np.shape(values[0])
        if any(np.shape(v) != shape for v in values):
            raise ValueError("all history samples must share one shape")
        self.delay_r = float(delay_r)
        self.times = times
        self.values = [np.asarray(v) for v in values]

    @classmethod
    def from_function(
        cls,
        delay_r: float,
        phi: Callable[[float], np.ndarray],
        n_samples: int = 65,
    ) -> HistorySegment:
        """Sample ``phi(theta)`` at ``n_samples`` equispaced points of ``[-r, 0]``."""
        thetas = np.linspace(-delay_r, 0.0, max(int(n_samples), 2))
        return cls(delay_r, thetas, [np.asarray(phi(th)) for th in thetas])

    @classmethod
    def constant(cls, delay_r: float, value: np.ndarray) -> HistorySegment:
        value = np.asarray(value)
        return cls(delay_r, [-delay_r, 0.0], [value, value.copy()])

    @property
    def t_now(self) -> float:
        return self.times[-1]

    @property
    def current(self) -> np.ndarray:
        return self.values[-1]

    def append(self, t: float, value: np.ndarray) -> None:
        if not t > self.t_now:
            raise ValueError(f"new sample at t={t} does not follow t_now={self.t_now}")
        self.times.append(float(t))
        self.values.append(np.asarray(value))

    def at(self, t: float, tip: Optional[tuple[float, np.ndarray]] = None) -> np.ndarray:
        """Trajectory value at ``t``; ``tip = (t_new, value)`` provisionally extends it."""
        eps = 1e-12 * max(1.0, abs(t))
        if tip is not None and t > self.t_now + eps:
            t_new, v_new = tip
            if t > t_new + eps:
                raise HistoryGapError(f"t={t} lies beyond the provisional tip at {t_new}")
            w = (t - self.t_now) / (t_new - self.t_now)
            return (1.0 - w) * self.current + w * v_new
        if t < self.times[0] - eps or t > self.t_now + eps:
            raise HistoryGapError(f"t={t} outside stored history [{self.times[0]}, {self.t_now}]")
        j = bisect.bisect_left(self.times, t)
        if j < len(self.times) and abs(self.times[j] - t) <= eps:
            return self.values[j]
        if j == 0:
            return self.values[0]
        if j == len(self.times):
            return self.values[-1]
        t0, t1 = self.times[j - 1], self.times[j]
        w = (t - t0) / (t1 - t0)
        return (1.0 - w) * self.values[j - 1] + w * self.values[j]

    def nodes_in(self, a: float, b: float) -> list[int]:
        """Indices of samples strictly inside ``(a, b)``."""
        lo = bisect.bisect_right(self.times, a)
        hi = bisect.bisect_left(self.times, b)
        return list(range(lo, hi))

    def window(self, t: Optional[float] = None) -> HistorySegment:
        """The segment on ``[t - r, t]`` shifted to ``[-r, 0]``."""
        t = self.t_now if t is None else t
        a = t - self.delay_r
        idx = self.nodes_in(a, t)
        times = [a] + [self.times[i] for i in idx] + [t]
        vals = [self.at(s) for s in times]
        return HistorySegment(self.delay_r, [s - t for s in times], [np.array(v) for v in vals])


# }}}

# {{{ forcing


@dataclass(frozen=True)
class DelayedForce:
    """Delayed feedback ``f(t, u_t)`` plus an optional state-independent source.

    ``point_delay``: ``kappa u(t - r)``.
    ``distributed_delay``: ``kappa int_{-r}^0 w(theta) u(t + theta) dtheta`` with
    ``w = 1/r`` unless ``kernel`` is given.
    ``modulated_point_delay``: ``omega(t) kappa u(t - r)``; ``omega`` must be
    continuous on the run interval.
    """

    kind: str = "none"
    kappa: float = 1.0
    delay_r: float = 1.0
    kernel: Optional[Callable[[np.ndarray], np.ndarray]] = None
    omega: Optional[Callable[[float], float]] = None
    p_exponent: float = math.inf
    lipschitz: Optional[float] = None
    source: Optional[Callable[[float], np.ndarray]] = None

    def __post_init__(self) -> None:
        if self.kind not in FORCE_KINDS:
            raise ValueError(f"unknown force kind {self.kind!r}; expected one of {FORCE_KINDS}")
        if not self.delay_r > 0:
            raise ValueError(f"delay must be positive, got r={self.delay_r}")
        if self.kind == "modulated_point_delay" and self.omega is None:
            raise ValueError("modulated_point_delay needs an omega(t) callable")
        if self.lipschitz is not None and self.lipschitz < 0:
            raise ValueError("declared Lipschitz constant must be nonnegative")

    @property
    def active(self) -> bool:
        return self.kind != "none" and self.kappa != 0.0

    def weight(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if self.kernel is None:
            return np.full_like(theta, 1.0 / self.delay_r)
        return np.asarray(self.kernel(theta), dtype=float) * np.ones_like(theta)

    @property
    def lipschitz_L_f(self) -> float:
        """Declared Lipschitz constant, or ``|kappa|`` times the kernel mass."""
        if self.lipschitz is not None:
            return float(self.lipschitz)
        if not self.active:
            return 0.0
        if self.kind == "distributed_delay":
            th = np.linspace(-self.delay_r, 0.0, 257)
            return abs(self.kappa) * float(trapezoid(np.abs(self.weight(th)), th))
        return abs(self.kappa)

    def check_exponent(self, alpha: float, regularity: bool = False) -> None:
        """Require ``p > 2/alpha`` (or ``p > 4/alpha`` for regularity runs)."""
        need = (4.0 if regularity else 2.0) / alpha
        if self.kind == "modulated_point_delay" and not self.p_exponent > need:
            raise ValueError(f"modulation exponent p={self.p_exponent} must exceed {need:g}")


def _force_coeffs(
    force: DelayedForce,
    t: float,
    history: HistorySegment,
    tip: Optional[tuple[float, np.ndarray]] = None,
) -> Optional[np.ndarray]:
    if not force.active:
        return None
    r = force.delay_r
    if force.kind in ("point_delay", "modulated_point_delay"):
        out = force.kappa * history.at(t - r, tip)
        if force.kind == "modulated_point_delay":
            out = float(force.omega(t)) * out
        return out
    # trapezoid over the stored nodes inside the window, plus both ends
    idx = history.nodes_in(t - r, t)
    pts = [t - r] + [history.times[i] for i in idx] + [t]
    vals = [history.at(t - r, tip)] + [history.values[i] for i in idx] + [history.at(t, tip)]
    pts = np.asarray(pts)
    w = force.weight(pts - t)
    stack = np.stack(vals)
    wexp = w.reshape((-1,) + (1,) * (stack.ndim - 1))
    return force.kappa * trapezoid(wexp * stack, pts, axis=0)


def evaluate_force(
    force: DelayedForce,
    t: float,
    history: HistorySegment,
    grid=None,
):
    """``P f(t, u_t)``; a :class:`SpectralField` when ``grid`` is given.

    Raises
    ------
    HistoryGapError
        If the history does not cover ``[t - r, t]``.
    """
    if history.times[0] > t - force.delay_r + 1e-12 * max(1.0, abs(t)):
        raise HistoryGapError(f"history starts at {history.times[0]}, need {t - force.delay_r}")
    c = _force_coeffs(force, t, history)
    if c is None:
        c = np.zeros_like(history.current)
    if grid is not None:
        return SpectralField(grid, project_coefficients(grid, c))
    return c


# }}}

# {{{ configuration and state


@dataclass(frozen=True)
class SolverConfig:
    alpha: float
    t_end: float
    n_steps: int
    mesh_gamma: float = 1.0
    picard_tol: float = 1e-10
    picard_max_iters: int = 50
    blowup_threshold: float = 1e8
    half_norm_beta: float = 0.5
    growth_limit: Optional[float] = None
    strict_radius: Optional[float] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "alpha", _alpha_value(self.alpha))
        if not self.t_end > 0:
            raise ValueError(f"t_end must be positive, got {self.t_end}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 2:
            raise ValueError(f"n_steps must be an integer >= 2, got {self.n_steps}")
        if not self.mesh_gamma >= 1.0:
            raise ValueError(f"mesh grading exponent must be >= 1, got {self.mesh_gamma}")
        if not self.picard_tol > 0 or self.picard_max_iters < 1:
            raise ValueError("picard_tol must be positive and picard_max_iters >= 1")
        if not self.blowup_threshold > 0:
            raise ValueError("blowup_threshold must be positive")
        if self.half_norm_beta not in (0.5, 0.75):
            raise ValueError(f"half_norm_beta must be 1/2 or 3/4, got {self.half_norm_beta}")

    @property
    def uniform(self) -> bool:
        return self.mesh_gamma == 1.0

    def mesh(self) -> np.ndarray:
        j = np.arange(self.n_steps + 1) / self.n_steps
        return self.t_end * j**self.mesh_gamma


@dataclass(frozen=True)
class MonitorConstants:
    """Bilinear constant ``c1``, operator constant ``B3`` and ball radius ``R``."""

    c1: float = 0.0
    B3: float = 0.0
    radius: float = 1.0


def b3_constant(alpha: float, betas: Sequence[float] = (0.5, 0.75)) -> float:
    """``max_beta sup_x x**beta E_{alpha,alpha}(-x)``.

    On the continuous spectrum ``t**(1 - alpha(1-beta)) ||A^beta T(t)||`` depends
    on ``t`` only through ``x = lam t**alpha``, so this is the bound constant.
    """
    x = np.geomspace(1e-8, 1e8, 4001)
    e = mittag_leffler(alpha, alpha, -x)
    return float(max(np.max(x**b * e) for b in betas))


@dataclass
class PicardResult:
    value: np.ndarray
    iterations: int
    ratio: float
    residuals: list[float] = field(default_factory=list)


@dataclass
class Verdict:
    status: str
    t_max: Optional[float] = None


@dataclass
class RunState:
    op: SpectralOperator
    alpha: float
    mesh: np.ndarray
    history: HistorySegment
    phi0: np.ndarray
    nonlinear: bool = False
    constants: MonitorConstants = field(default_factory=MonitorConstants)
    phi_half_norm: float = 0.0
    step: int = 0
    g: list[np.ndarray] = field(default_factory=list)
    times: list[float] = field(default_factory=list)
    norm_l2: list[float] = field(default_factory=list)
    norm_half: list[float] = field(default_factory=list)
    norm_three_quarter: list[float] = field(default_factory=list)
    picard_iters: list[int] = field(default_factory=list)
    picard_ratio: list[float] = field(default_factory=list)
    panel_ratio: list[float] = field(default_factory=list)
    contraction_M: list[float] = field(default_factory=list)
    verdict: Verdict = field(default_factory=lambda: Verdict("continue"))
    warned_M: bool = False
    _G_uniform: Optional[np.ndarray] = None

    @property
    def t(self) -> float:
        return float(self.mesh[self.step])

    @property
    def done(self) -> bool:
        return self.step >= len(self.mesh) - 1 or self.verdict.status == "halt"

    @property
    def grid(self):
        return self.op.grid

    def field(self, coeffs: np.ndarray):
        """Wrap coefficients as a field in grid mode."""
        return SpectralField(self.grid, coeffs) if self.grid is not None else coeffs

    def record(self, t: float, u: np.ndarray) -> None:
        self.times.append(t)
        self.norm_l2.append(_half_norm(self.op, 0.0, u))
        self.norm_half.append(_half_norm(self.op, 0.5, u))
        self.norm_three_quarter.append(_half_norm(self.op, 0.75, u))


def initial_state(
    op: SpectralOperator,
    config: SolverConfig,
    history: HistorySegment,
    nonlinear: bool = False,
    constants: Optional[MonitorConstants] = None,
) -> RunState:
    if nonlinear and op.is_synthetic:
        raise ValueError("the nonlinear term needs a spectral grid; synthetic operators are linear")
    if abs(history.t_now) > 1e-12:
        raise ValueError("initial history must end at t = 0")
    phi0 = np.array(history.current)
    if phi0.shape[-op.eigenvalues.ndim:] != op.eigenvalues.shape:
        raise ValueError(f"history values of shape {phi0.shape} do not match the operator")
    if constants is None:
        constants = MonitorConstants(0.0, b3_constant(config.alpha))
    st = RunState(
        op=op,
        alpha=config.alpha,
        mesh=config.mesh(),
        history=HistorySegment(history.delay_r, list(history.times), [np.array(v) for v in history.values]),
        phi0=phi0,
        nonlinear=nonlinear,
        constants=constants,
        phi_half_norm=max(_half_norm(op, 0.5, v) for v in history.values),
    )
    st.record(0.0, phi0)
    st.picard_iters.append(0)
    st.picard_ratio.append(0.0)
    st.panel_ratio.append(0.0)
    st.contraction_M.append(0.0)
    return st


# }}}

# {{{ quadrature weights


def _panel_mass(alpha: float, lam: np.ndarray, tau: np.ndarray) -> np.ndarray:
    """``tau**alpha E_{alpha,alpha+1}(-lam tau**alpha)`` on the grid ``tau x lam``."""
    tau = np.asarray(tau, dtype=float)[:, None]
    ta = tau**alpha
    return ta * mittag_leffler(alpha, alpha + 1.0, -(ta * lam[None, :]))


def _expand(op: SpectralOperator, per_lambda: np.ndarray) -> np.ndarray:
    """Map ``(k, n_distinct)`` per-eigenvalue rows onto ``(k,) + eigenvalue-table`` arrays."""
    out = np.zeros((per_lambda.shape[0],) + op.eigenvalues.shape)
    out[:, op.active] = per_lambda[:, op._inverse]
    return out


def _step_weights(state: RunState, n: int) -> np.ndarray:
    """``W[i-1] = G(t_n - t_{i-1}) - G(t_n - t_i)`` for ``i = 1..n``, per mode."""
    lam = state.op.spectrum
    mesh = state.mesh
    uniform = np.allclose(np.diff(mesh), mesh[1] - mesh[0], rtol=1e-12, atol=0.0)
    if uniform:
        if state._G_uniform is None:
            h = mesh[1] - mesh[0]
            state._G_uniform = _panel_mass(state.alpha, lam, h * np.arange(len(mesh)))
        G = state._G_uniform[n::-1]
    else:
        G = _panel_mass(state.alpha, lam, mesh[n] - mesh[: n + 1])
    return _expand(state.op, G[:-1] - G[1:])


def _combine(weights: np.ndarray, stack: np.ndarray) -> np.ndarray:
    lead = stack.ndim - weights.ndim
    w = weights.reshape(weights.shape[:1] + (1,) * lead + weights.shape[1:])
    return np.sum(w * stack, axis=0)


# }}}

# {{{ stepping


@dataclass(frozen=True)
class Panel:
    t_start: float
    t_end: float
    weight: np.ndarray


def _integrand(
    t: float,
    v: np.ndarray,
    force: DelayedForce,
    history: HistorySegment,
    op: SpectralOperator,
    nonlinear: bool,
) -> np.ndarray:
    out = np.zeros_like(v, dtype=complex if np.iscomplexobj(v) or op.grid is not None else float)
    if nonlinear:
        out += nonlinear_coefficients(op.grid, v)
    f = _force_coeffs(force, t, history, tip=(t, v))
    if f is not None:
        out += f
    if force.source is not None:
        out += np.asarray(force.source(t))
    if op.grid is not None and (f is not None or force.source is not None):
        out = project_coefficients(op.grid, out)
    return out


def _depends_on_state(force: DelayedForce, nonlinear: bool) -> bool:
    return nonlinear or force.active


def picard_solve(
    candidate: np.ndarray,
    frozen_tail: np.ndarray,
    panel: Panel,
    config: SolverConfig,
    force: DelayedForce,
    history: HistorySegment,
    op: SpectralOperator,
    nonlinear: bool = False,
) -> PicardResult:
    """Fixed point of ``v -> frozen_tail + W g(t_end, v)`` on one panel.

    Successive iterates are compared in the ``D(A^{1/2})`` norm.  The reported
    ratio is the largest quotient of consecutive differences that sit above
    the round-off floor.

    Raises
    ------
    PicardError
        If ``picard_max_iters`` iterations do not reach ``picard_tol``.
    """
    t = panel.t_end
    if not _depends_on_state(force, nonlinear):
        g = _integrand(t, candidate, force, history, op, nonlinear)
        return PicardResult(frozen_tail + _combine(panel.weight[None], g[None]), 1, 0.0, [0.0])
    v = np.asarray(candidate)
    diffs: list[float] = []
    ratios: list[float] = []
    for k in range(1, config.picard_max_iters + 1):
        g = _integrand(t, v, force, history, op, nonlinear)
        v_new = frozen_tail + _combine(panel.weight[None], g[None])
        d = _half_norm(op, 0.5, v_new - v)
        floor = 1e3 * np.finfo(float).eps * max(_half_norm(op, 0.5, v_new), 1e-300)
        if diffs and diffs[-1] > floor and d > floor:
            ratios.append(d / diffs[-1])
        diffs.append(d)
        v = v_new
        if not np.isfinite(d):
            raise PicardError(f"Picard iterate became non-finite at t={t:g}", k, math.inf)
        if d <= config.picard_tol:
            return PicardResult(v, k, max(ratios, default=0.0), diffs)
    last = ratios[-1] if ratios else math.nan
    raise PicardError(
        f"Picard iteration did not reach tol={config.picard_tol:g} in {config.picard_max_iters} "
        f"iterations at t={t:g} (last ratio {last:.3g})",
        config.picard_max_iters,
        last,
    )


def contraction_constant(
    t: float,
    alpha: float,
    radius: float,
    phi_half_norm: float,
    c1: float,
    B3: float,
    L_f: float,
) -> float:
    """``2(R + ||phi||) c1 B3 (4/alpha) t**(alpha/4) + B3 L_f (2/alpha) t**(alpha/2)``."""
    first = 2.0 * (radius + phi_half_norm) * c1 * B3 * (4.0 / alpha) * t ** (alpha / 4.0)
    second = B3 * L_f * (2.0 / alpha) * t ** (alpha / 2.0)
    return first + second


def contraction_monitor(state: RunState, config: SolverConfig, force: DelayedForce, R: Optional[float] = None) -> float:
    """Contraction constant at the current horizon ``t``; warns once if it reaches 1."""
    R = state.constants.radius if R is None else R
    c1 = state.constants.c1 if state.nonlinear else 0.0
    M = contraction_constant(state.t, config.alpha, R, state.phi_half_norm, c1, state.constants.B3, force.lipschitz_L_f)
    if M >= 1.0 and not state.warned_M:
        warnings.warn(
            f"contraction constant M={M:.3g} >= 1 at t={state.t:g}; convergence is no longer guaranteed",
            RuntimeWarning,
            stacklevel=2,
        )
        state.warned_M = True
    return M


def panel_contraction(state: RunState, config: SolverConfig, force: DelayedForce, h: float) -> float:
    """The same constant over a single panel of width ``h``."""
    c1 = state.constants.c1 if state.nonlinear else 0.0
    return contraction_constant(
        h, config.alpha, state.constants.radius, state.phi_half_norm, c1, state.constants.B3, force.lipschitz_L_f
    )


def _crossing_time(t0: float, n0: float, t1: float, n1: float, level: float) -> float:
    if not (np.isfinite(n1) and n0 > 0 and n1 > n0):
        return t1
    s = (math.log(level) - math.log(n0)) / (math.log(n1) - math.log(n0))
    return t0 + min(max(s, 0.0), 1.0) * (t1 - t0)


def blowup_monitor(state: RunState, config: SolverConfig) -> Verdict:
    """Halt when the monitored norm crosses the threshold, is non-finite, or
    (with ``growth_limit`` set) its log-log slope in ``t`` over the last five
    steps exceeds that limit.
    """
    norms = state.norm_half if config.half_norm_beta == 0.5 else state.norm_three_quarter
    t, n = state.times[-1], norms[-1]
    if not np.isfinite(n) or n > config.blowup_threshold:
        if len(norms) > 1:
            t_max = _crossing_time(state.times[-2], norms[-2], t, n, config.blowup_threshold)
        else:
            t_max = t
        return Verdict("halt", t_max)
    if config.growth_limit is not None and len(norms) >= 6:
        ts = np.asarray(state.times[-5:])
        ns = np.asarray(norms[-5:])
        if np.all(ts > 0) and np.all(ns > 0):
            slope = np.polyfit(np.log(ts), np.log(ns), 1)[0]
            if slope > config.growth_limit:
                return Verdict("halt", t)
    return Verdict("continue")


def mild_step(state: RunState, config: SolverConfig, force: DelayedForce) -> RunState:
    """Advance ``state`` by one mesh panel in place and return it.

    Raises
    ------
    PicardError
        If the newest panel's fixed point cannot be resolved.
    BlowUpError
        If the monitored norm crosses ``config.blowup_threshold``; the state is
        updated with the halting verdict and ``t_max`` before raising.
    """
    if state.done:
        raise RuntimeError("run is already complete")
    n = state.step + 1
    t_prev, t_n = float(state.mesh[n - 1]), float(state.mesh[n])
    W = _step_weights(state, n)
    fam = OperatorFamily(state.alpha, state.op)
    tail = state.phi0 * fam.s_factors(t_n)
    if n > 1:
        tail = tail + _combine(W[:-1], np.stack(state.g))
    res = picard_solve(
        state.history.current,
        tail,
        Panel(t_prev, t_n, W[-1]),
        config,
        force,
        state.history,
        state.op,
        state.nonlinear,
    )
    u = res.value
    g = _integrand(t_n, u, force, state.history, state.op, state.nonlinear)
    state.history.append(t_n, u)
    state.g.append(g)
    state.step = n
    state.record(t_n, u)
    state.picard_iters.append(res.iterations)
    state.picard_ratio.append(res.ratio)
    state.panel_ratio.append(panel_contraction(state, config, force, t_n - t_prev))
    state.contraction_M.append(contraction_monitor(state, config, force))
    if config.strict_radius is not None:
        dist = _half_norm(state.op, 0.5, u - state.phi0)
        if dist > config.strict_radius:
            raise BallExitError(f"||u(t) - phi(0)|| = {dist:.3g} exceeds R = {config.strict_radius:g} at t={t_n:g}")
    state.verdict = blowup_monitor(state, config)
    if state.verdict.status == "halt":
        raise BlowUpError(t_n, state.norm_half[-1], state.verdict.t_max)
    return state


def solve(
    op: SpectralOperator,
    config: SolverConfig,
    history: HistorySegment,
    force: Optional[DelayedForce] = None,
    nonlinear: bool = False,
    constants: Optional[MonitorConstants] = None,
    callback: Optional[Callable[[RunState], None]] = None,
) -> RunState:
    """Run to ``t_end`` or until the blow-up monitor halts.

    A halt is reported through ``state.verdict``; Picard failures propagate.
    """
    force = DelayedForce(delay_r=history.delay_r) if force is None else force
    if abs(force.delay_r - history.delay_r) > 1e-12 * history.delay_r:
        raise ValueError("force and history disagree on the delay r")
    state = initial_state(op, config, history, nonlinear, constants)
    while not state.done:
        try:
            mild_step(state, config, force)
        except BlowUpError:
            break
        if callback is not None:
            callback(state)
    return state


def restart(state: RunState, config: SolverConfig) -> HistorySegment:
    """History for a fresh run started from the last ``r`` of ``state``'s trajectory.

    The restarted problem treats ``u_T`` as new initial data; the fractional
    memory of ``[0, T - r]`` is not carried over.
    """
    return state.history.window(state.t)


def write_trajectory_csv(path: str | Path, state: RunState) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "norm_l2", "norm_half", "norm_three_quarter", "picard_iters", "M"])
        for i, t in enumerate(state.times):
            w.writerow(
                [
                    repr(float(t)),
                    repr(state.norm_l2[i]),
                    repr(state.norm_half[i]),
                    repr(state.norm_three_quarter[i]),
                    state.picard_iters[i],
                    repr(state.contraction_M[i]),
                ]
            )


# }}}

"""Post-hoc verification: Hölder exponents, empirical constants, convergence orders."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .delaysolver import DelayedForce, HistorySegment, SolverConfig, solve
from .solops import OperatorFamily, audit_operator_bounds
from .spectral import (
    SpectralGrid,
    SpectralOperator,
    nonlinear_coefficients,
    random_field,
    sobolev_norm,
    taylor_green,
)


class DegenerateTrajectoryError(ValueError):
    """Every increment is below the resolution floor."""


class ReferenceFailure(RuntimeError):
    """The finest run of a convergence study did not reach ``t_end``."""


# {{{ Hölder exponents


@dataclass
class RegularityReport:
    beta: float
    theta_measured: float
    theta_predicted: float
    fit_quality: float
    window: tuple[float, float]
    steps: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))
    increments: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))


def estimate_holder(
    times: Sequence[float],
    values: np.ndarray,
    op: SpectralOperator,
    beta: float,
    alpha: float = 1.0,
    max_level: Optional[int] = None,
) -> RegularityReport:
    """Fit ``sup_t ||A^beta (u(t+h) - u(t))|| ~ C h**theta`` over dyadic ``h``.

    ``values[i]`` is the coefficient array at ``times[i]``; the times must be
    uniform, start after 0, and number at least 32.  Steps run over
    ``dt * 2**m`` while at least half of the samples remain usable as base
    points.  ``theta_predicted`` is ``alpha * (1 - beta)``.
    """
    t = np.asarray(times, dtype=float)
    if t.size < 32:
        raise ValueError(f"need at least 32 samples, got {t.size}")
    if t[0] <= 0:
        raise ValueError("the sampling window must exclude t = 0")
    dt = np.diff(t)
    if np.max(np.abs(dt - dt[0])) > 1e-9 * dt[0]:
        raise ValueError("samples must be uniform in time")
    vals = np.asarray(values) * op.power(beta)
    vals = vals.reshape(len(t), -1)
    levels = int(np.floor(np.log2((t.size - 1) / 2)))
    if max_level is not None:
        levels = min(levels, max_level)
    steps, incs = [], []
    for m in range(levels + 1):
        s = 2**m
        d = np.sqrt(np.sum(np.abs(vals[s:] - vals[:-s]) ** 2, axis=1))
        steps.append(s * dt[0])
        incs.append(float(np.max(d)))
    steps, incs = np.asarray(steps), np.asarray(incs)
    if np.all(incs < 1e-14):
        raise DegenerateTrajectoryError("all increments vanish; no Hölder exponent to measure")
    ok = incs > 0
    x, y = np.log(steps[ok]), np.log(incs[ok])
    slope, icpt = np.polyfit(x, y, 1)
    resid = y - (slope * x + icpt)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return RegularityReport(
        beta=float(beta),
        theta_measured=float(slope),
        theta_predicted=float(alpha * (1.0 - beta)),
        fit_quality=r2,
        window=(float(steps[0]), float(steps[-1])),
        steps=steps,
        increments=incs,
    )


def s_trajectory(fam: OperatorFamily, x: np.ndarray, times: Sequence[float]) -> np.ndarray:
    """Stack of ``S(t) x`` coefficient arrays."""
    return np.stack([np.asarray(x) * fam.s_factors(float(t)) for t in times])


# }}}

# {{{ empirical constants


@dataclass
class EstimatedConstants:
    c1: float = 0.0
    c2: float = 0.0
    B1: float = 0.0
    B2: float = 0.0
    B3: float = 0.0
    B4: float = 0.0
    C1: float = 0.0
    C2: float = 0.0
    C3: float = 0.0
    c1_lipschitz: float = 0.0
    c2_lipschitz: float = 0.0
    notes: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in ("c1", "c2", "B1", "B2", "B3", "B4", "C1", "C2", "C3"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val >= 0):
                raise ValueError(f"constant {name} must be finite and nonnegative, got {val}")


def _ratios(op: SpectralOperator, u: np.ndarray) -> tuple[float, float]:
    grid = op.grid
    Fu = nonlinear_coefficients(grid, u)
    half = sobolev_norm(op, 0.5, u)
    tq = sobolev_norm(op, 0.75, u)
    if half == 0:
        return np.nan, np.nan
    r1 = sobolev_norm(op, -0.25, Fu) / half**2
    r2 = sobolev_norm(op, 0.0, Fu) / (half * tq)
    return r1, r2


def _lipschitz_ratios(op: SpectralOperator, u: np.ndarray, v: np.ndarray) -> tuple[float, float]:
    grid = op.grid
    dF = nonlinear_coefficients(grid, u) - nonlinear_coefficients(grid, v)
    dhalf = sobolev_norm(op, 0.5, u - v)
    dtq = sobolev_norm(op, 0.75, u - v)
    s_half = sobolev_norm(op, 0.5, u) + sobolev_norm(op, 0.5, v)
    s_tq = sobolev_norm(op, 0.75, u) + sobolev_norm(op, 0.75, v)
    if dhalf == 0:
        return np.nan, np.nan
    r1 = sobolev_norm(op, -0.25, dF) / (dhalf * s_half)
    # symmetric split of the product bound over both factors
    r2 = sobolev_norm(op, 0.0, dF) / (dhalf * s_tq + dtq * s_half)
    return r1, r2


def estimate_bilinear_constants(
    grid: SpectralGrid,
    op: Optional[SpectralOperator] = None,
    n_samples: int = 1000,
    decay_family: Sequence[float] = (1.0, 2.0, 3.0),
    seed: int = 20240601,
) -> EstimatedConstants:
    """Suprema of the bilinear-estimate ratios over random divergence-free fields.

    Sample ``i`` uses decay ``decay_family[i % len(decay_family)]``.  Zero
    fields are skipped.  The Lipschitz forms are sampled on independent pairs.
    """
    if n_samples < 100:
        raise ValueError(f"n_samples must be at least 100, got {n_samples}")
    op = SpectralOperator.stokes(grid) if op is None else op
    rng = np.random.default_rng(seed)
    r1s, r2s, l1s, l2s = [], [], [], []
    for i in range(n_samples):
        gam = decay_family[i % len(decay_family)]
        u = random_field(grid, gam, rng).coeffs
        v = random_field(grid, gam, rng).coeffs
        r1, r2 = _ratios(op, u)
        l1, l2 = _lipschitz_ratios(op, u, v)
        r1s.append(r1)
        r2s.append(r2)
        l1s.append(l1)
        l2s.append(l2)
    return EstimatedConstants(
        c1=float(np.nanmax(r1s)),
        c2=float(np.nanmax(r2s)),
        c1_lipschitz=float(np.nanmax(l1s)),
        c2_lipschitz=float(np.nanmax(l2s)),
        notes={
            "grid": f"dim={grid.dim} n_modes={grid.n_modes} nu={grid.nu}",
            "samples": str(n_samples),
            "decay_family": ",".join(f"{g:g}" for g in decay_family),
            "seed": str(seed),
        },
    )


def taylor_green_ratio(grid: SpectralGrid) -> float:
    op = SpectralOperator.stokes(grid)
    return _ratios(op, taylor_green(grid).coeffs)[0]


def estimate_constants(
    grid: SpectralGrid,
    alpha: float,
    beta: float = 0.5,
    n_samples: int = 1000,
    t_grid: Optional[Sequence[float]] = None,
    seed: int = 20240601,
) -> EstimatedConstants:
    """Bilinear constants together with the operator-bound constants at ``beta``."""
    op = SpectralOperator.stokes(grid)
    est = estimate_bilinear_constants(grid, op, n_samples, seed=seed)
    ts = np.geomspace(1e-6, 10.0, 25) if t_grid is None else t_grid
    rep = audit_operator_bounds(OperatorFamily(alpha, op), [beta], ts)
    k = rep.constants
    return replace(
        est,
        B1=k["B1"],
        B2=k["B2"],
        B3=k[f"B3({beta:g})"],
        B4=k[f"B4({beta:g})"],
        C1=k["C1"],
        C2=k["C2"],
        C3=k[f"C3({beta:g})"],
        notes={**est.notes, "alpha": f"{alpha:g}", "beta": f"{beta:g}"},
    )


# }}}

# {{{ convergence studies


@dataclass
class ConvergenceProblem:
    op: SpectralOperator
    config: SolverConfig
    history: HistorySegment
    force: Optional[DelayedForce] = None
    nonlinear: bool = False


@dataclass
class OrderReport:
    n_steps: list[int]
    errors: list[float]
    order: float
    exact: bool
    reference_steps: int

    @property
    def monotone(self) -> bool:
        return all(b < a for a, b in zip(self.errors, self.errors[1:]))

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n_steps", "error", "observed_order"])
            for i, (n, e) in enumerate(zip(self.n_steps, self.errors)):
                if i == 0 or e <= 0 or self.errors[i - 1] <= 0:
                    p = ""
                else:
                    p = repr(float(np.log(self.errors[i - 1] / e) / np.log(n / self.n_steps[i - 1])))
                w.writerow([n, repr(float(e)), p])


def _nodes(problem: ConvergenceProblem, n: int) -> np.ndarray:
    cfg = replace(problem.config, n_steps=n)
    st = solve(problem.op, cfg, problem.history, problem.force, problem.nonlinear)
    if st.verdict.status == "halt":
        raise ReferenceFailure(f"run with n_steps={n} halted at t={st.t:g}")
    k = len(problem.history.times)
    return np.stack(st.history.values[k - 1 :])


def run_convergence_study(
    problem: ConvergenceProblem,
    ladder: Sequence[int],
    reference_factor: int = 4,
    exact_tol: float = 1e-12,
) -> OrderReport:
    """Errors of each ladder level against a run ``reference_factor`` times finer
    than the last level, measured as the largest ``L2`` difference over the
    coarsest mesh nodes.  ``order`` is the least-squares slope of
    ``-log(error)`` against ``log(n)``.

    Raises
    ------
    ValueError
        If the ladder has fewer than three levels or does not double.
    ReferenceFailure
        If the reference run halts.
    """
    ladder = [int(n) for n in ladder]
    if len(ladder) < 3:
        raise ValueError(f"a convergence ladder needs at least 3 levels, got {len(ladder)}")
    if any(b != 2 * a for a, b in zip(ladder, ladder[1:])):
        raise ValueError("each ladder level must double the previous step count")
    n_ref = ladder[-1] * reference_factor
    ref = _nodes(problem, n_ref)
    n0 = ladder[0]
    ref = ref[:: n_ref // n0]
    scale = max(float(np.max(np.sqrt(np.sum(np.abs(ref.reshape(len(ref), -1)) ** 2, axis=1)))), 1e-300)
    errors = []
    for n in ladder:
        u = _nodes(problem, n)[:: n // n0]
        d = (u - ref).reshape(len(ref), -1)
        errors.append(float(np.max(np.sqrt(np.sum(np.abs(d) ** 2, axis=1)))))
    exact = max(errors) <= exact_tol * scale
    if exact or min(errors) <= 0:
        order = float("inf")
    else:
        order = float(-np.polyfit(np.log(ladder), np.log(errors), 1)[0])
    return OrderReport(ladder, errors, order, exact, n_ref)


# }}}

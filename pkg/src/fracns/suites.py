"""Self-checks run by ``fracns verify``.

Each suite returns a list of :class:`Check` results and may write CSV reports
into the output directory.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import erfcx, gamma

from .analysis import estimate_bilinear_constants, estimate_holder, s_trajectory
from .solops import (
    OperatorFamily,
    audit_operator_bounds,
    check_commutation,
    contour_eval_scalar,
    s_symbol,
    t_symbol,
)
from .spectral import SpectralGrid, SpectralOperator, nonlinear_term, random_field, taylor_green
from .specfun import mainardi_moment, mittag_leffler

SUITES = ("specfun", "operators", "bilinear", "regularity")


@dataclass
class Check:
    suite: str
    name: str
    passed: bool
    value: float
    limit: float


def _rel(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.abs(b)))


def suite_specfun(out: Path, seed: int) -> list[Check]:
    checks = []
    z = np.linspace(-50.0, 5.0, 1000)
    err = _rel(mittag_leffler(1.0, 1.0, z), np.exp(z))
    checks.append(Check("specfun", "exp_identity", err <= 1e-12, err, 1e-12))
    x = np.linspace(0.0, 5.0, 501)
    err = _rel(mittag_leffler(0.5, 1.0, -x), erfcx(x))
    checks.append(Check("specfun", "erfc_identity", err <= 1e-10, err, 1e-10))
    worst = 0.0
    for a in (0.3, 0.5, 0.7):
        for b in (0.5, 1.0):
            zz = np.linspace(-100.0, 0.0, 201)
            lhs = mittag_leffler(a, b, zz)
            rhs = 1.0 / gamma(b) + zz * mittag_leffler(a, b + a, zz)
            worst = max(worst, _rel(rhs, lhs))
    checks.append(Check("specfun", "recursion", worst <= 1e-9, worst, 1e-9))
    worst = 0.0
    for a in (0.3, 0.5, 0.7):
        for q in (0, 1, 2, 3):
            exact = math.gamma(q + 1) / math.gamma(a * q + 1)
            worst = max(worst, abs(mainardi_moment(a, q) - exact))
    checks.append(Check("specfun", "mainardi_moments", worst <= 1e-8, worst, 1e-8))
    return checks


def suite_operators(out: Path, seed: int) -> list[Check]:
    rng = np.random.default_rng(seed)
    checks = []
    worst = 0.0
    for _ in range(50):
        a = rng.uniform(0.1, 0.95)
        lam = 10.0 ** rng.uniform(-1, 3)
        t = 10.0 ** rng.uniform(-2, 1)
        worst = max(worst, abs(contour_eval_scalar(a, lam, t, "S") - s_symbol(a, lam, t)))
        worst = max(worst, abs(contour_eval_scalar(a, lam, t, "T") - t_symbol(a, lam, t)))
    checks.append(Check("operators", "contour_vs_symbols", worst <= 1e-8, worst, 1e-8))
    grid = SpectralGrid(2, 16)
    op = SpectralOperator.stokes(grid)
    fam = OperatorFamily(0.5, op)
    rep = audit_operator_bounds(fam, [0.25, 0.5, 0.75], np.geomspace(1e-6, 10.0, 15))
    rep.write_csv(out / "operator_bounds.csv")
    for key, val in rep.constants.items():
        ok = bool(np.isfinite(val) and rep.stable[key])
        checks.append(Check("operators", f"bound_{key}", ok, val, rep.refined[key]))
    u = random_field(grid, 2.0, rng)
    worst = max(check_commutation(fam, b, u, t) for b in (0.25, 0.5, 0.75) for t in (0.01, 0.1, 1.0))
    checks.append(Check("operators", "commutation", worst <= 1e-13, worst, 1e-13))
    return checks


def suite_bilinear(out: Path, seed: int) -> list[Check]:
    checks = []
    grid = SpectralGrid(2, 16)
    Fu = nonlinear_term(taylor_green(grid))
    val = float(np.max(np.abs(Fu.coeffs)))
    checks.append(Check("bilinear", "taylor_green_Fu", val <= 1e-10, val, 1e-10))
    coarse = estimate_bilinear_constants(SpectralGrid(2, 16), n_samples=300, seed=seed)
    fine = estimate_bilinear_constants(SpectralGrid(2, 32), n_samples=300, seed=seed)
    with open(out / "bilinear_constants.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["constant", "n_modes_16", "n_modes_32"])
        for name in ("c1", "c2", "c1_lipschitz", "c2_lipschitz"):
            a, b = getattr(coarse, name), getattr(fine, name)
            w.writerow([name, repr(a), repr(b)])
            ok = bool(np.isfinite(a) and np.isfinite(b) and abs(a - b) <= 0.2 * max(a, b))
            checks.append(Check("bilinear", f"{name}_stable", ok, b, a))
    return checks


def suite_regularity(out: Path, seed: int) -> list[Check]:
    checks = []
    t = 1e-10 + 1e-4 * np.arange(1025)
    one = SpectralOperator.synthetic([1.0])
    for theta in (0.2, 0.4, 0.6):
        rep = estimate_holder(t, ((t - t[0]) ** theta)[:, None], one, 0.0)
        err = abs(rep.theta_measured - theta)
        checks.append(Check("regularity", f"calibration_{theta:g}", err <= 0.02, err, 0.02))
    lam = 4.0 ** np.arange(13)
    op = SpectralOperator.synthetic(lam)
    rows = []
    for a in (0.3, 0.5, 0.7):
        traj = s_trajectory(OperatorFamily(a, op), 1.0 / lam, t)
        for b in (0.5, 0.75):
            rep = estimate_holder(t, traj, op, b, a)
            rows.append((a, b, rep.theta_measured, rep.theta_predicted, rep.fit_quality))
            ok = rep.theta_measured >= rep.theta_predicted - 0.1
            checks.append(Check("regularity", f"holder_a{a:g}_b{b:g}", ok, rep.theta_measured, rep.theta_predicted - 0.1))
    with open(out / "regularity.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha", "beta", "theta_measured", "theta_predicted", "r_squared"])
        for r in rows:
            w.writerow([repr(float(v)) for v in r])
    return checks


RUNNERS: dict[str, Callable[[Path, int], list[Check]]] = {
    "specfun": suite_specfun,
    "operators": suite_operators,
    "bilinear": suite_bilinear,
    "regularity": suite_regularity,
}


def run_suites(names: list[str], out: Path, seed: int) -> list[Check]:
    out.mkdir(parents=True, exist_ok=True)
    checks: list[Check] = []
    for name in names:
        checks += RUNNERS[name](out, seed)
    with open(out / "verify_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["suite", "check", "passed", "value", "limit"])
        for c in checks:
            w.writerow([c.suite, c.name, int(c.passed), repr(float(c.value)), repr(float(c.limit))])
    return checks

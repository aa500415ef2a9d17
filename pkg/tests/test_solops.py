import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gamma

import oracles
from fracns.solops import (
    OperatorFamily,
    apply_S,
    apply_T,
    audit_operator_bounds,
    check_commutation,
    continuity_modulus,
    contour_eval_scalar,
    s_symbol,
    t_symbol,
)
from fracns.specfun import QuadratureError, mainardi, mittag_leffler
from fracns.spectral import SpectralField, SpectralGrid, SpectralOperator, random_field, sobolev_norm


@pytest.fixture(scope="module")
def grid():
    return SpectralGrid(2, 16)


@pytest.fixture(scope="module")
def field(grid):
    return random_field(grid, 1.0, np.random.default_rng(0))


def fam(alpha, eigs=(1.0, 4.0, 9.0)):
    return OperatorFamily(alpha, SpectralOperator.synthetic(eigs))


class TestFamily:
    @pytest.mark.parametrize("alpha", [0.0, -0.2, 1.2, math.nan])
    def test_rejects_bad_order(self, alpha):
        with pytest.raises(ValueError):
            fam(alpha)

    def test_classical_limit_allowed(self):
        assert fam(1.0).alpha == 1.0

    def test_t_symbol_undefined_at_zero(self):
        with pytest.raises(ValueError):
            fam(0.5).t_factors(0.0)

    def test_s_identity_at_zero(self, grid, field):
        f = OperatorFamily(0.4, SpectralOperator.stokes(grid))
        assert np.array_equal(apply_S(f, 0.0, field).coeffs, field.coeffs)

    def test_negative_time(self):
        with pytest.raises(ValueError):
            fam(0.5).s_factors(-1.0)


class TestApply:
    def test_classical_heat_semigroup(self, grid, field):
        op = SpectralOperator.stokes(grid)
        f = OperatorFamily(1.0, op)
        expect = field.coeffs * np.exp(-op.eigenvalues * 0.3)
        assert np.allclose(apply_S(f, 0.3, field).coeffs, expect, rtol=1e-13, atol=0)
        assert np.allclose(apply_T(f, 0.3, field).coeffs, expect, rtol=1e-13, atol=0)

    def test_single_mode_examples(self):
        assert apply_S(fam(0.5, [4.0]), 1.0, np.array([1.0]))[0] == pytest.approx(oracles.E_HALF_MINUS_FOUR, rel=1e-12)
        got = apply_T(fam(0.5, [1.0]), 1.0, np.array([1.0]))[0]
        assert got == pytest.approx(oracles.E_HALF_HALF_MINUS_ONE, rel=1e-12)

    def test_preserves_field_type(self, grid, field):
        f = OperatorFamily(0.5, SpectralOperator.stokes(grid))
        assert isinstance(apply_S(f, 0.5, field), SpectralField)
        assert isinstance(apply_T(f, 0.5, field), SpectralField)

    def test_strong_continuity_at_zero(self, grid, field):
        f = OperatorFamily(0.5, SpectralOperator.stokes(grid))
        gaps = [np.linalg.norm((apply_S(f, 10.0**-k, field) - field).coeffs.ravel()) for k in range(2, 7)]
        assert all(b < a for a, b in zip(gaps, gaps[1:]))
        assert gaps[-1] < 0.05 * gaps[0]

    def test_t_scaling_law(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            a = rng.uniform(0.1, 0.95)
            lam = 10 ** rng.uniform(-2, 3)
            t = 10 ** rng.uniform(-3, 1)
            f = fam(a, [lam])
            expect = t ** (a - 1) * mittag_leffler(a, a, -lam * t**a)
            assert f.t_factors(t)[0] == pytest.approx(expect, rel=1e-14)


class TestContour:
    def test_examples(self):
        assert abs(contour_eval_scalar(0.5, 4.0, 1.0, "S") - oracles.E_HALF_MINUS_FOUR) <= 1e-8
        assert abs(contour_eval_scalar(0.5, 1.0, 1.0, "T") - oracles.E_HALF_HALF_MINUS_ONE) <= 1e-8
        assert abs(contour_eval_scalar(0.999, 1.0, 1.0, "S") - math.exp(-1)) <= 1e-2

    def test_agrees_with_symbols(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            a = rng.uniform(0.1, 0.95)
            lam = 10 ** rng.uniform(-1, 3)
            t = 10 ** rng.uniform(-2, 1)
            assert abs(contour_eval_scalar(a, lam, t, "S") - s_symbol(a, lam, t)) <= 1e-8
            assert abs(contour_eval_scalar(a, lam, t, "T") - t_symbol(a, lam, t)) <= 1e-8

    def test_nonconvergence_reported(self):
        with pytest.raises(QuadratureError):
            contour_eval_scalar(0.5, 1.0, 1.0, "S", tol=1e-30, n_max=256)

    def test_argument_validation(self):
        with pytest.raises(ValueError):
            contour_eval_scalar(0.5, 1.0, 0.0)
        with pytest.raises(ValueError):
            contour_eval_scalar(0.5, 1.0, 1.0, "U")


class TestIdentities:
    def test_derivative_sign(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            a = rng.uniform(0.1, 0.95)
            lam = 10 ** rng.uniform(-1, 2)
            t = 10 ** rng.uniform(-1, 0.5)
            h = 1e-5 * t
            fd = (s_symbol(a, lam, t + h) - s_symbol(a, lam, t - h)) / (2 * h)
            assert fd == pytest.approx(-lam * t_symbol(a, lam, t), rel=1e-5)

    @pytest.mark.parametrize("alpha", [0.3, 0.5, 0.7])
    @pytest.mark.parametrize("lam", [1.0, 4.0])
    def test_subordination(self, alpha, lam):
        from scipy.integrate import quad

        t = 0.7
        val, _ = quad(lambda s: mainardi(alpha, s) * math.exp(-lam * s * t**alpha), 0, 40, limit=200)
        assert abs(val - s_symbol(alpha, lam, t)) <= 1e-6

    @pytest.mark.parametrize("beta", [0.0, 0.25, 0.5, 0.75])
    @pytest.mark.parametrize("t", [0.01, 0.1, 1.0])
    def test_commutation(self, grid, field, beta, t):
        f = OperatorFamily(0.5, SpectralOperator.stokes(grid))
        res = check_commutation(f, beta, field, t)
        assert res <= 1e-13
        if beta == 0:
            assert res == 0.0

    @given(st.integers(0, 2**32 - 1), st.floats(0.05, 0.95), st.floats(0.01, 0.99), st.floats(1e-3, 10))
    @settings(max_examples=30, deadline=None)
    def test_commutation_random(self, seed, alpha, beta, t):
        g = SpectralGrid(2, 8)
        u = random_field(g, 1.0, np.random.default_rng(seed))
        assert check_commutation(OperatorFamily(alpha, SpectralOperator.stokes(g)), beta, u, t) <= 1e-13

    def test_s_contracts_every_norm(self, grid, field):
        op = SpectralOperator.stokes(grid)
        f = OperatorFamily(0.6, op)
        for beta in (0.0, 0.5, 0.75):
            assert sobolev_norm(op, beta, apply_S(f, 0.5, field)) < sobolev_norm(op, beta, field)


@pytest.fixture(scope="module")
def report():
    f = OperatorFamily(0.5, SpectralOperator.stokes(SpectralGrid(2, 16)))
    return audit_operator_bounds(f, [0.25, 0.5, 0.75], np.geomspace(1e-6, 10.0, 15))


class TestBoundAudit:
    def test_s_bound_is_one(self, report):
        # sup over the grid sits at the smallest t and eigenvalue, and tends to 1
        assert report.constants["C1"] == pytest.approx(s_symbol(0.5, 1.0, 1e-6), rel=1e-14)
        assert 0.998 < report.constants["C1"] <= 1.0

    def test_t_bound_is_inverse_gamma(self, report):
        assert report.constants["B1"] == pytest.approx(1 / gamma(0.5), rel=1e-2)
        assert report.constants["B1"] <= 1 / gamma(0.5) + 1e-12

    def test_all_finite_and_stable(self, report):
        for key, val in report.constants.items():
            assert np.isfinite(val) and val > 0, key
            assert report.stable[key], (key, val, report.refined[key])

    def test_b3_is_max_over_betas(self, report):
        assert report.B3 == max(report.constants[f"B3({b:g})"] for b in (0.25, 0.5, 0.75))

    def test_csv(self, report, tmp_path):
        report.write_csv(tmp_path / "b.csv")
        with open(tmp_path / "b.csv", newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["lemma", "beta", "t", "raw_norm", "normalized"]
        assert len(rows) == 1 + len(report.rows)
        assert {r[0] for r in rows[1:]} == set(report.constants)

    def test_validation(self):
        with pytest.raises(ValueError):
            audit_operator_bounds(fam(0.5), [1.5], [1.0])
        with pytest.raises(ValueError):
            audit_operator_bounds(fam(0.5), [0.5], [])

    def test_continuity_modulus_decreases(self):
        f = OperatorFamily(0.5, SpectralOperator.stokes(SpectralGrid(2, 16)))
        mods = [continuity_modulus(f, 0.5, 1.0, 1.0 + 10.0**-k) for k in range(1, 6)]
        assert all(b < a for a, b in zip(mods, mods[1:]))
        assert mods[-1] < 1e-3 * mods[0]

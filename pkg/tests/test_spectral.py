import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from fracns.spectral import (
    SpectralField,
    SpectralGrid,
    SpectralOperator,
    SymmetryError,
    apply_fractional_power,
    from_physical,
    grid_points,
    hermitian_part,
    inner,
    leray_project,
    nonlinear_coefficients,
    nonlinear_term,
    project_coefficients,
    random_field,
    read_field,
    sobolev_norm,
    taylor_green,
    to_physical,
    write_field,
    write_spectrum_csv,
)

seeds = st.integers(0, 2**32 - 1)


def slot(grid, k):
    return tuple(kj % grid.n_modes for kj in k)


def single_mode(grid, k, vec):
    """Real field supported on ``{k, -k}`` with ``uhat(k) = vec``."""
    c = grid.zeros()
    c[(slice(None),) + slot(grid, k)] = vec
    c[(slice(None),) + slot(grid, [-x for x in k])] = np.conj(vec)
    return c


def raw_random(grid, rng):
    c = rng.standard_normal((grid.dim,) + grid.shape) + 1j * rng.standard_normal((grid.dim,) + grid.shape)
    return hermitian_part(grid, c)


class TestGrid:
    @pytest.mark.parametrize("n", [5, 2, 0, 31])
    def test_rejects_bad_mode_count(self, n):
        with pytest.raises(ValueError):
            SpectralGrid(2, n)

    def test_rejects_bad_dim_and_nu(self):
        with pytest.raises(ValueError):
            SpectralGrid(1, 8)
        with pytest.raises(ValueError):
            SpectralGrid(2, 8, 0.0)

    def test_symmetric_truncation(self):
        g = SpectralGrid(2, 8)
        assert sorted(set(g.wavenumbers[0].ravel().astype(int))) == list(range(-3, 5))

    def test_dealias_band(self):
        g = SpectralGrid(2, 12)
        kept = np.unique(g.wavenumbers[0][g.dealias_mask])
        assert kept.min() == -3 and kept.max() == 3

    def test_transform_round_trip(self):
        g = SpectralGrid(3, 8)
        u = random_field(g, 1.0, np.random.default_rng(0), dealiased=False)
        assert np.allclose(from_physical(g, to_physical(g, u.coeffs)), u.coeffs, atol=1e-14)


class TestField:
    def test_rejects_mean_mode(self):
        g = SpectralGrid(2, 8)
        c = g.zeros()
        c[0, 0, 0] = 1.0
        with pytest.raises(ValueError):
            SpectralField(g, c)

    def test_rejects_asymmetric(self):
        g = SpectralGrid(2, 8)
        c = g.zeros()
        c[1, 1, 0] = 1.0  # k = (1, 0), u = (0, 1): divergence-free but no partner at -k
        with pytest.raises(SymmetryError):
            SpectralField(g, c)

    def test_rejects_divergence(self):
        g = SpectralGrid(2, 8)
        with pytest.raises(ValueError, match="divergence"):
            SpectralField(g, single_mode(g, (1, 0), [1.0, 0.0]))

    def test_rejects_wrong_shape(self):
        with pytest.raises(ValueError):
            SpectralField(SpectralGrid(2, 8), np.zeros((2, 8, 4)))

    def test_coefficients_are_read_only(self):
        u = taylor_green(SpectralGrid(2, 8))
        with pytest.raises(ValueError):
            u.coeffs[0, 1, 1] = 0.0

    def test_arithmetic(self):
        g = SpectralGrid(2, 8)
        u = taylor_green(g)
        assert np.allclose((2 * u - u).coeffs, u.coeffs)
        assert np.all((u - u).coeffs == SpectralField.zero(g).coeffs)

    def test_taylor_green_physical_values(self):
        g = SpectralGrid(2, 16)
        x, y = grid_points(g)
        vel = to_physical(g, taylor_green(g).coeffs)
        assert np.allclose(vel[0], np.sin(x) * np.cos(y), atol=1e-14)
        assert np.allclose(vel[1], -np.cos(x) * np.sin(y), atol=1e-14)


class TestOperator:
    def test_synthetic_requires_positive(self):
        with pytest.raises(ValueError):
            SpectralOperator.synthetic([1.0, 0.0])
        with pytest.raises(ValueError):
            SpectralOperator.synthetic([])

    def test_stokes_eigenvalues(self):
        g = SpectralGrid(2, 8, nu=0.5)
        op = SpectralOperator.stokes(g)
        assert op.lambda_min == 0.5
        assert np.all(op.eigenvalues[op.active] > 0)
        assert not op.active[0, 0]

    def test_symbol_maps_back(self):
        op = SpectralOperator.synthetic([4.0, 1.0, 4.0])
        assert np.array_equal(op.symbol(np.sqrt), [2.0, 1.0, 2.0])


class TestLeray:
    def test_gradient_annihilated(self):
        g = SpectralGrid(2, 8)
        rng = np.random.default_rng(1)
        phi = rng.standard_normal(g.shape) + 1j * rng.standard_normal(g.shape)
        phi = hermitian_part(g, phi[None])[0]
        grad = np.stack([1j * k * phi for k in g.wavenumbers])
        grad[:, g.nyquist] = 0.0
        out = leray_project(g, grad)
        assert np.max(np.abs(out.coeffs)) <= 1e-14 * np.max(np.abs(grad))

    def test_divergence_free_unchanged(self):
        g = SpectralGrid(2, 16)
        u = random_field(g, 1.0, np.random.default_rng(2))
        assert np.max(np.abs(leray_project(g, u.coeffs).coeffs - u.coeffs)) <= 1e-15

    def test_axis_example_3d(self):
        g = SpectralGrid(3, 4)
        out = leray_project(g, single_mode(g, (1, 0, 0), [1.0, 1.0, 0.0]))
        assert np.allclose(out.coeffs[(slice(None),) + slot(g, (1, 0, 0))], [0.0, 1.0, 0.0], atol=1e-15)

    def test_nyquist_dropped(self):
        g = SpectralGrid(2, 8)
        out = leray_project(g, raw_random(g, np.random.default_rng(12)))
        assert np.all(out.coeffs[:, g.nyquist] == 0)

    def test_mean_zeroed(self):
        g = SpectralGrid(2, 8)
        c = raw_random(g, np.random.default_rng(3))
        assert np.all(leray_project(g, c).coeffs[:, 0, 0] == 0)

    def test_symmetry_violation(self):
        g = SpectralGrid(2, 8)
        c = g.zeros()
        c[0, 1, 2] = 1.0
        with pytest.raises(SymmetryError):
            leray_project(g, c)

    def test_against_direct_formula(self):
        g = SpectralGrid(2, 8)
        c = raw_random(g, np.random.default_rng(4))
        assert np.allclose(leray_project(g, c).coeffs, oracles.leray(g, c), atol=1e-14)

    @given(seeds, st.sampled_from([2, 3]))
    @settings(max_examples=25, deadline=None)
    def test_idempotent(self, seed, dim):
        g = SpectralGrid(dim, 8)
        c = raw_random(g, np.random.default_rng(seed))
        once = leray_project(g, c).coeffs
        assert np.max(np.abs(project_coefficients(g, once) - once)) <= 1e-13 * np.max(np.abs(once))


class TestPowersAndNorms:
    def test_identity_power(self):
        g = SpectralGrid(2, 8)
        op = SpectralOperator.stokes(g)
        u = random_field(g, 1.0, np.random.default_rng(5))
        assert np.array_equal(apply_fractional_power(op, 0.0, u).coeffs, u.coeffs)

    def test_single_mode_scaling(self):
        g = SpectralGrid(2, 8)
        op = SpectralOperator.stokes(g)
        u = SpectralField(g, single_mode(g, (2, 0), [0.0, 1.0]))
        assert np.allclose(apply_fractional_power(op, 1.0, u).coeffs, 4 * u.coeffs, rtol=1e-15)

    def test_half_powers_compose(self):
        g = SpectralGrid(2, 16)
        op = SpectralOperator.stokes(g)
        u = random_field(g, 1.0, np.random.default_rng(6))
        twice = apply_fractional_power(op, 0.5, apply_fractional_power(op, 0.5, u))
        once = apply_fractional_power(op, 1.0, u)
        assert np.max(np.abs(twice.coeffs - once.coeffs)) <= 1e-12 * np.max(np.abs(once.coeffs))

    def test_negative_power_inverts(self):
        g = SpectralGrid(2, 8)
        op = SpectralOperator.stokes(g)
        u = random_field(g, 1.0, np.random.default_rng(7))
        back = apply_fractional_power(op, -0.25, apply_fractional_power(op, 0.25, u))
        assert np.allclose(back.coeffs, u.coeffs, atol=1e-15)

    def test_power_preserves_divergence_free(self):
        g = SpectralGrid(3, 8)
        op = SpectralOperator.stokes(g)
        u = random_field(g, 1.0, np.random.default_rng(8))
        assert isinstance(apply_fractional_power(op, 0.75, u), SpectralField)

    def test_norm_examples(self):
        g = SpectralGrid(2, 8)
        op = SpectralOperator.stokes(g)
        assert sobolev_norm(op, 0.5, SpectralField.zero(g)) == 0.0
        c = g.zeros()
        c[1, 2, 0] = 1.0  # k = (2, 0), lambda = 4
        assert sobolev_norm(op, 0.5, c) == pytest.approx(2.0, rel=1e-15)
        u = random_field(g, 1.0, np.random.default_rng(9))
        assert sobolev_norm(op, 0.0, u) == pytest.approx(np.linalg.norm(u.coeffs.ravel()), rel=1e-14)

    def test_synthetic_norm(self):
        op = SpectralOperator.synthetic([1.0, 4.0, 9.0])
        assert sobolev_norm(op, 0.5, np.array([1.0, 1.0, 1.0])) == pytest.approx(np.sqrt(14.0))


class TestNonlinearity:
    def test_zero_field(self):
        g = SpectralGrid(2, 8)
        assert np.all(nonlinear_term(SpectralField.zero(g)).coeffs == 0)

    def test_taylor_green_is_gradient(self):
        g = SpectralGrid(2, 16)
        tg = taylor_green(g)
        assert np.max(np.abs(nonlinear_term(tg).coeffs)) <= 1e-10
        dense = -oracles.leray(g, oracles.dense_advection(g, tg.coeffs))
        assert np.max(np.abs(dense)) <= 1e-10
        # the raw advection is a nonzero gradient
        assert np.max(np.abs(oracles.dense_advection(g, tg.coeffs))) > 0.1

    def test_single_wavevector_pair(self):
        g = SpectralGrid(2, 16)
        c = single_mode(g, (1, 2), [2.0 + 1.0j, -1.0 - 0.5j])
        got = nonlinear_coefficients(g, c)
        ref = -oracles.leray(g, oracles.dense_advection(g, c))
        assert np.max(np.abs(got - ref)) <= 1e-13

    def test_two_pair_interaction(self):
        g = SpectralGrid(2, 16)
        c = single_mode(g, (1, 0), [0.0, 1.0]) + single_mode(g, (0, 2), [1.0j, 0.0])
        got = nonlinear_coefficients(g, c)
        ref = -oracles.leray(g, oracles.dense_advection(g, c))
        assert np.max(np.abs(ref)) > 0.1
        assert np.max(np.abs(got - ref)) <= 1e-13

    def test_random_field_against_dense_convolution(self):
        g = SpectralGrid(2, 12)
        c = random_field(g, 1.0, np.random.default_rng(10)).coeffs
        got = nonlinear_coefficients(g, c)
        ref = -oracles.leray(g, oracles.dense_advection(g, c))
        assert np.max(np.abs(got - ref)) <= 1e-13 * np.max(np.abs(ref))

    @given(seeds, st.sampled_from([1.0, 2.0, 3.0]))
    @settings(max_examples=25, deadline=None)
    def test_output_divergence_free(self, seed, decay):
        g = SpectralGrid(2, 16)
        u = random_field(g, decay, np.random.default_rng(seed))
        Fu = nonlinear_term(u)
        div = sum(k * Fu.coeffs[j] for j, k in enumerate(g.wavenumbers))
        assert np.max(np.abs(div)) <= 1e-12 * max(np.max(np.abs(Fu.coeffs)), 1e-300)

    @given(seeds, st.sampled_from([(2, 16), (3, 8)]))
    @settings(max_examples=25, deadline=None)
    def test_energy_orthogonality(self, seed, shape):
        g = SpectralGrid(*shape)
        u = random_field(g, 1.0, np.random.default_rng(seed))
        Fu = nonlinear_term(u)
        scale = np.linalg.norm(Fu.coeffs.ravel()) * np.linalg.norm(u.coeffs.ravel())
        assert abs(inner(Fu, u)) <= 1e-10 * scale


class TestSerialization:
    @pytest.mark.parametrize("dim,n", [(2, 8), (3, 4)])
    def test_binary_round_trip(self, tmp_path, dim, n):
        g = SpectralGrid(dim, n, 0.3)
        u = random_field(g, 1.0, np.random.default_rng(11), dealiased=False)
        write_field(tmp_path / "u.bin", u)
        v = read_field(tmp_path / "u.bin")
        assert v.grid == g
        assert np.array_equal(v.coeffs, u.coeffs)

    def test_binary_layout(self, tmp_path):
        g = SpectralGrid(2, 4)
        c = single_mode(g, (-1, 0), [0.0, 1.0 + 2.0j])
        write_field(tmp_path / "u.bin", SpectralField(g, c))
        data = (tmp_path / "u.bin").read_bytes()
        assert len(data) == 16 + 2 * 2 * 16 * 8
        vals = np.frombuffer(data, "<f8", offset=16)
        # each axis runs -1, 0, 1, 2, so (k1, k2) = (-1, 0) is entry 0 * 4 + 1
        entry = vals[1 * 4 : 2 * 4]
        assert np.array_equal(entry, [0.0, 0.0, 1.0, 2.0])

    def test_truncated_file(self, tmp_path):
        g = SpectralGrid(2, 4)
        write_field(tmp_path / "u.bin", taylor_green(g))
        data = (tmp_path / "u.bin").read_bytes()
        (tmp_path / "v.bin").write_bytes(data[:-8])
        with pytest.raises(ValueError):
            read_field(tmp_path / "v.bin")

    def test_spectrum_csv(self, tmp_path):
        g = SpectralGrid(2, 8)
        write_spectrum_csv(tmp_path / "s.csv", taylor_green(g))
        raw = (tmp_path / "s.csv").read_bytes()
        assert b"\r\n" not in raw
        rows = list(csv.reader(raw.decode().splitlines()))
        assert rows[0] == ["k1", "k2", "abs_uhat"]
        assert len(rows) == 1 + 63
        big = {(int(r[0]), int(r[1])) for r in rows[1:] if float(r[2]) > 1e-12}
        assert big == {(1, 1), (1, -1), (-1, 1), (-1, -1)}

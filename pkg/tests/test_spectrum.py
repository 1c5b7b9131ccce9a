import numpy as np
import pytest
from scipy.integrate import quad

from vortexlab.fields import FieldError
from vortexlab.spectrum import (RadialGrid, RadialProfile, assemble_operator,
                                eigen_spectrum, eigenfunction_decay_check,
                                mode_decompose, profile_from_coefficients,
                                profile_to_coefficients, semigroup_decay,
                                spectra_to_csv, stream_omega, verify_bounds)
from vortexlab.vortex import frozen_eigenfunctions, gaussian_G


@pytest.fixture(scope="module")
def rgrid():
    return RadialGrid(60)


def f_profile_values(r):
    """Radial profile of the dipole modes: omega_{+-1}(r) = (r/4) g(r)."""
    return (r / 4.0) * np.exp(-r * r / 4.0) / (4.0 * np.pi)


class TestRadialGrid:
    def test_weights_positive_and_gaussian_exact(self, rgrid):
        assert np.all(rgrid.weights > 0)
        got = np.sum(rgrid.weights * np.exp(-rgrid.nodes ** 2 / 4.0))
        assert got == pytest.approx(2.0, abs=1e-13)      # int e^{-r^2/4} r dr = 2

    def test_polynomial_exactness(self, rgrid):
        # even powers of r are polynomial in s = r^2/4, hence exact:
        # int r^2 e^{-r^2/4} r dr = 8 (quad oracle confirms)
        oracle, err = quad(lambda r: r ** 3 * np.exp(-r * r / 4.0), 0.0, np.inf)
        assert oracle == pytest.approx(8.0, abs=1e-6)
        got = np.sum(rgrid.weights * rgrid.nodes ** 2 * np.exp(-rgrid.nodes ** 2 / 4.0))
        assert got == pytest.approx(8.0, rel=1e-13)

    def test_size_guard(self):
        with pytest.raises(FieldError):
            RadialGrid(2)


class TestModeDecompose:
    def test_gaussian_is_pure_mode_zero(self, grid256, rgrid):
        G = gaussian_G(grid256)
        p0 = mode_decompose(G, 0, rgrid)
        inside = rgrid.nodes <= grid256.half_width
        expected = np.exp(-rgrid.nodes[inside] ** 2 / 4.0) / (4 * np.pi)
        assert np.max(np.abs(p0.values[inside] - expected)) < 1e-12
        for n in (1, 2, 3, 4):
            pn = mode_decompose(G, n, rgrid)
            assert np.max(np.abs(pn.values)) < 1e-12

    def test_dipole_lives_in_modes_one(self, grid256, rgrid):
        F1 = frozen_eigenfunctions(grid256)[1]
        p1 = mode_decompose(F1, 1, rgrid)
        inside = rgrid.nodes <= grid256.half_width
        assert np.max(np.abs(p1.values[inside] - f_profile_values(rgrid.nodes[inside]))) < 1e-10
        p0 = mode_decompose(F1, 0, rgrid)
        assert np.max(np.abs(p0.values)) < 1e-12
        pm1 = mode_decompose(F1, -1, rgrid)
        assert np.max(np.abs(pm1.values[inside] - f_profile_values(rgrid.nodes[inside]))) < 1e-10

    def test_cross_derivative_is_modes_two(self, grid256, rgrid):
        D12 = frozen_eigenfunctions(grid256)[5]
        for n in (0, 1, 3):
            assert np.max(np.abs(mode_decompose(D12, n, rgrid).values)) < 1e-12
        p2 = mode_decompose(D12, 2, rgrid)
        assert np.max(np.abs(p2.values)) > 1e-4


class TestStreamOmega:
    def test_dipole_closed_form(self, rgrid):
        # Omega for the dipole profile, forced by the frozen translation
        # symmetry: (1 - e^{-r^2/4}) / (8 pi r)
        prof = RadialProfile(1, rgrid, f_profile_values(rgrid.nodes))
        om = stream_omega(prof)
        r = rgrid.nodes
        sel = r < 25.0
        expected = -np.expm1(-r[sel] ** 2 / 4.0) / (8.0 * np.pi * r[sel])
        assert np.max(np.abs(om.values[sel] - expected)) / np.max(np.abs(expected)) < 1e-10

    def test_matches_direct_quadrature_oracle(self, rgrid):
        # literal quadrature of the two kernel pieces at a few radii
        prof = RadialProfile(2, rgrid, rgrid.nodes ** 2 * np.exp(-rgrid.nodes ** 2 / 4.0))
        om = stream_omega(prof)

        def omega_oracle(r, n=2):
            fun = lambda z: z ** 2 * np.exp(-z * z / 4.0)
            inner, e1 = quad(lambda z: (z / r) ** n * z * fun(z), 0.0, r, limit=200)
            outer, e2 = quad(lambda z: (r / z) ** n * z * fun(z), r, 60.0, limit=200)
            assert e1 + e2 < 1e-7
            return (inner + outer) / (4.0 * n)

        for idx in (5, 20, 40, 70):
            r = rgrid.nodes[idx]
            assert om.values[idx].real == pytest.approx(omega_oracle(r), rel=1e-8)

    def test_zero_profile(self, rgrid):
        prof = RadialProfile(3, rgrid, np.zeros(rgrid.n_nodes))
        assert np.max(np.abs(stream_omega(prof).values)) == 0.0

    def test_far_field_power_law(self, rgrid):
        # beyond the support the outer integral dies and Omega ~ r^{-|n|}
        n = 2
        bump = np.exp(-((rgrid.nodes - 2.5) / 0.6) ** 2)
        om = stream_omega(RadialProfile(n, rgrid, bump))
        r = rgrid.nodes
        i1 = int(np.argmin(np.abs(r - 8.0)))
        i2 = int(np.argmin(np.abs(r - 16.0)))
        ratio = abs(om.values[i2]) / abs(om.values[i1])
        expected = (r[i1] / r[i2]) ** n
        assert ratio == pytest.approx(expected, rel=0.05)

    def test_mode_zero_rejected(self, rgrid):
        with pytest.raises(FieldError):
            stream_omega(RadialProfile(0, rgrid, np.zeros(rgrid.n_nodes)))


class TestOperator:
    def test_gram_is_identity(self, rgrid):
        for n in (0, 1, 4):
            op = assemble_operator(n, 1.0, rgrid)
            assert np.max(np.abs(op.gram - np.eye(rgrid.n_basis))) < 1e-12

    def test_generator_self_adjoint_nonpositive(self, rgrid):
        op = assemble_operator(2, 7.0, rgrid)
        M = op.gram * op.ldiag[None, :]
        assert np.max(np.abs(M - M.T)) / np.max(np.abs(M)) < 1e-8
        assert np.max(op.ldiag) <= 0.0

    @pytest.mark.parametrize("n", [1, 2, 3, 4])
    def test_advection_skew_adjoint(self, rgrid, n):
        op = assemble_operator(n, 1.0, rgrid)
        lam = op.gram @ (np.diag(op.ldiag) - op.matrix)   # alpha = 1
        defect = np.max(np.abs(lam + lam.conj().T)) / np.max(np.abs(lam))
        assert defect < 1e-6

    def test_advection_annihilates_dipole_profile(self, rgrid):
        op = assemble_operator(1, 1.0, rgrid)
        lam = np.diag(op.ldiag) - op.matrix
        col = np.abs(lam[:, 0])
        assert np.max(col) / np.max(np.abs(lam)) < 1e-8


class TestSpectra:
    @pytest.mark.parametrize("alpha", [0.0, 1.0, 10.0, 100.0])
    def test_frozen_translation_eigenvalue(self, rgrid, alpha):
        res = eigen_spectrum(assemble_operator(1, alpha, rgrid), "full")
        lam = res.eigenvalues[res.trusted]
        assert np.min(np.abs(lam - (-0.5))) < 1e-9

    @pytest.mark.parametrize("alpha", [0.0, 5.0])
    def test_frozen_mode_zero_eigenvalues(self, rgrid, alpha):
        res = eigen_spectrum(assemble_operator(0, alpha, rgrid), "full")
        lam = res.eigenvalues[res.trusted]
        assert np.min(np.abs(lam - 0.0)) < 1e-10
        assert np.min(np.abs(lam - (-1.0))) < 1e-10

    def test_oscillator_spectrum_at_alpha_zero(self, rgrid):
        for n in (0, 1, 2, 3):
            res = eigen_spectrum(assemble_operator(n, 0.0, rgrid), "full")
            lam = res.eigenvalues[res.trusted].real
            for k in range(6):
                assert np.min(np.abs(lam - (-(n + 2 * k) / 2.0))) < 1e-6

    def test_trust_filter_shrinks_with_alpha(self, rgrid):
        counts = []
        for alpha in (0.0, 10.0, 100.0):
            res = eigen_spectrum(assemble_operator(2, alpha, rgrid), "full")
            counts.append(int(np.sum(res.trusted)))
        assert counts[0] >= counts[1] >= counts[2]
        assert counts[2] > 4

    def test_unknown_subspace_rejected(self, rgrid):
        with pytest.raises(FieldError):
            eigen_spectrum(assemble_operator(1, 0.0, rgrid), "everything")


class TestBounds:
    def test_sharp_at_alpha_zero(self, rgrid):
        results = [eigen_spectrum(assemble_operator(n, 0.0, rgrid), "zero-mean")
                   for n in range(-2, 3)]
        report = verify_bounds(results, m=4.0)
        assert report.passed
        assert report.max_re_by_alpha[0.0] == pytest.approx(-0.5, abs=1e-9)

    def test_moment_free_bound(self, rgrid):
        results = [eigen_spectrum(assemble_operator(n, a, rgrid), "moment-free")
                   for n in range(-2, 3) for a in (0.0, 1.0)]
        report = verify_bounds(results, m=4.0)
        assert report.passed
        assert report.max_re_by_alpha[0.0] == pytest.approx(-1.0, abs=1e-9)

    def test_strict_gap_grows_with_alpha(self, rgrid):
        gaps = {}
        for a in (1.0, 10.0, 100.0):
            results = [eigen_spectrum(assemble_operator(n, a, rgrid), "second-moment-free")
                       for n in (0, 1, 2)]
            report = verify_bounds(results, m=4.0)
            assert report.passed
            gaps[a] = report.strict_gaps[a]
        assert 0.0 < gaps[1.0] < gaps[10.0] < gaps[100.0]

    def test_essential_boundary_reported(self, rgrid):
        report = verify_bounds([], m=3.0)
        assert report.essential_boundary == -1.0


class TestEigenfunctionDecay:
    def test_dipole_profile_gamma_half(self, rgrid):
        check = eigenfunction_decay_check(rgrid, f_profile_values(rgrid.nodes))
        assert check.gaussian_decay
        assert check.gamma == pytest.approx(0.5, abs=0.1)

    def test_scaling_profile_bounded_gamma(self, rgrid):
        vals = 0.25 * (rgrid.nodes ** 2 - 4.0) * np.exp(-rgrid.nodes ** 2 / 4.0)
        check = eigenfunction_decay_check(rgrid, vals)
        assert check.gaussian_decay
        assert abs(check.gamma) < 3.0

    def test_flags_non_decaying_vector(self, rgrid):
        vals = f_profile_values(rgrid.nodes) + 1e-3
        check = eigenfunction_decay_check(rgrid, vals)
        assert not check.gaussian_decay
        assert check.quad_coeff > 0.1

    def test_trusted_eigenvectors_decay(self, rgrid):
        op = assemble_operator(2, 10.0, rgrid)
        res = eigen_spectrum(op, "full")
        idx = int(np.argmax(res.trusted))
        vals = profile_from_coefficients(2, rgrid, res.eigenvectors[:, idx]).values
        assert eigenfunction_decay_check(rgrid, vals).gaussian_decay


class TestSemigroupDecay:
    @pytest.mark.parametrize("alpha", [0.0, 1.0, 10.0])
    def test_dipole_rate_half(self, rgrid, alpha):
        c = np.zeros(rgrid.n_basis)
        c[0] = 1.0
        prof = profile_from_coefficients(1, rgrid, c)
        fit = semigroup_decay(assemble_operator(1, alpha, rgrid), prof, mu_target=0.5)
        assert fit.passed
        assert fit.rate == pytest.approx(0.5, abs=1e-6)

    @pytest.mark.parametrize("alpha", [0.0, 10.0])
    def test_scaling_rate_one(self, rgrid, alpha):
        c = np.zeros(rgrid.n_basis)
        c[1] = 1.0
        prof = profile_from_coefficients(0, rgrid, c)
        fit = semigroup_decay(assemble_operator(0, alpha, rgrid), prof, mu_target=1.0)
        assert fit.passed
        assert fit.rate == pytest.approx(1.0, abs=1e-6)

    def test_generic_zero_mean_rate(self, rgrid):
        rng = np.random.Generator(np.random.Philox(5))
        c = rng.standard_normal(rgrid.n_basis) * np.exp(-0.2 * np.arange(rgrid.n_basis))
        prof = profile_from_coefficients(1, rgrid, c)
        fit = semigroup_decay(assemble_operator(1, 0.0, rgrid), prof, mu_target=0.5)
        assert fit.passed


class TestProfiles:
    def test_coefficient_roundtrip(self, rgrid):
        rng = np.random.Generator(np.random.Philox(9))
        c = rng.standard_normal(rgrid.n_basis) * np.exp(-0.3 * np.arange(rgrid.n_basis))
        prof = profile_from_coefficients(2, rgrid, c)
        back = profile_to_coefficients(prof)
        assert np.max(np.abs(back - c)) < 1e-7

    def test_csv_export(self, tmp_path, rgrid):
        res = eigen_spectrum(assemble_operator(1, 1.0, rgrid), "zero-mean")
        p = tmp_path / "spec.csv"
        spectra_to_csv([res], p)
        lines = p.read_text().splitlines()
        assert lines[0] == "n,alpha,re_lambda,im_lambda,trusted,subspace,resolution"
        assert len(lines) == 1 + res.eigenvalues.size


def test_cross_derivative_mode_profile_value(grid256, rgrid=None):
    # d1 d2 G = (r^2 sin 2theta / 8) G, so its +2 mode profile is -i r^2 g / 16
    rg = RadialGrid(60)
    D12 = frozen_eigenfunctions(grid256)[5]
    p2 = mode_decompose(D12, 2, rg)
    inside = rg.nodes <= grid256.half_width
    r = rg.nodes[inside]
    expected = -1j * (r ** 2 / 16.0) * np.exp(-r ** 2 / 4.0) / (4.0 * np.pi)
    assert np.max(np.abs(p2.values[inside] - expected)) < 1e-10

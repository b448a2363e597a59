"""Material-law tests: trivial closed forms, frozen oracle values, and the
passivity/continuity properties of the dispersion terms."""

import numpy as np
import pytest

from axonuq.dispersion import (EPS0, GREY_MATTER, ColeColeParams,
                               RandomParamBox, admittivity,
                               complex_permittivity, conductivity,
                               relative_permittivity, sample_params)


def single_debye(eps_inf=4.0, delta=45.0, tau=1e-6):
    return ColeColeParams(eps_inf=eps_inf, kappa_i=0.0,
                          delta_eps=(delta, 0.0, 0.0, 0.0),
                          tau=(tau, 1e-9, 1e-9, 1e-9),
                          alpha=(0.0, 0.0, 0.0, 0.0))


class TestComplexPermittivity:
    def test_constant_term_only(self):
        p = ColeColeParams(4.0, 0.0, (0, 0, 0, 0), (1e-9,) * 4, (0.0,) * 4)
        for w in (1.0, 1e3, 1e7):
            assert complex_permittivity(p, w) == 4.0 + 0.0j

    def test_single_debye_at_corner(self):
        # at omega*tau = 1: 4 + 45/(1+j) = 26.5 - 22.5j
        p = single_debye()
        f = complex_permittivity(p, 1.0 / 1e-6)
        assert f == pytest.approx(26.5 - 22.5j, rel=1e-14)

    def test_reference_value_at_mean(self):
        # frozen from an independent high-precision evaluation of the law
        f = complex_permittivity(GREY_MATTER, 2 * np.pi * 130.0)
        assert f.real == pytest.approx(2458914.6271416843, rel=1e-12)
        assert f.imag == pytest.approx(-12641760.352471393, rel=1e-12)

    def test_rejects_nonpositive_omega(self):
        with pytest.raises(ValueError):
            complex_permittivity(GREY_MATTER, 0.0)
        with pytest.raises(ValueError):
            complex_permittivity(GREY_MATTER, -10.0)

    def test_vectorized_matches_scalar(self):
        w = np.array([1e2, 1e4, 1e6])
        f = complex_permittivity(GREY_MATTER, w)
        for i, wi in enumerate(w):
            assert f[i] == complex_permittivity(GREY_MATTER, wi)


class TestPermittivityConductivity:
    def test_static_conductivity_term_is_imaginary(self):
        p = ColeColeParams(4.0, 0.5, (0, 0, 0, 0), (1e-9,) * 4, (0.0,) * 4)
        assert relative_permittivity(p, 1e3) == pytest.approx(4.0, rel=1e-14)

    def test_single_debye_permittivity(self):
        assert relative_permittivity(single_debye(), 1e6) == pytest.approx(26.5, rel=1e-14)

    def test_permittivity_reference(self):
        got = relative_permittivity(GREY_MATTER, 2 * np.pi * 130.0)
        assert got == pytest.approx(2458914.6271416843, rel=1e-12)

    def test_conductivity_pure_ionic(self):
        p = ColeColeParams(4.0, 0.02, (0, 0, 0, 0), (1e-9,) * 4, (0.0,) * 4)
        for w in (1e2, 1e5, 1e8):
            assert conductivity(p, w) == pytest.approx(0.02, rel=1e-12)

    def test_conductivity_single_debye(self):
        w = 1.0 / 1e-6
        assert conductivity(single_debye(), w) == pytest.approx(EPS0 * w * 22.5, rel=1e-13)

    def test_conductivity_reference(self):
        got = conductivity(GREY_MATTER, 2 * np.pi * 5e5)
        assert got == pytest.approx(0.15180160546814747, rel=1e-12)

    def test_conductivity_never_below_ionic(self):
        # every dispersion term adds loss on the whole study band
        rng = np.random.default_rng(5)
        box = RandomParamBox()
        omegas = np.logspace(np.log10(2 * np.pi * 130), np.log10(2 * np.pi * 5e5), 31)
        for _ in range(50):
            p = sample_params(box, rng.uniform(-1, 1, 14))
            kap = conductivity(p, omegas)
            assert np.all(kap >= p.kappa_i - 1e-12)

    def test_permittivity_decreasing_for_debye(self):
        omegas = np.logspace(2, 8, 200)
        eps = relative_permittivity(single_debye(), omegas)
        assert np.all(np.diff(eps) < 0)

    def test_continuity_in_omega(self):
        for w in np.logspace(np.log10(2 * np.pi * 130), np.log10(2 * np.pi * 5e5), 7):
            k0, k1 = conductivity(GREY_MATTER, w), conductivity(GREY_MATTER, w * (1 + 1e-6))
            e0, e1 = relative_permittivity(GREY_MATTER, w), relative_permittivity(GREY_MATTER, w * (1 + 1e-6))
            assert abs(k1 - k0) <= 1e-4 * abs(k0)
            assert abs(e1 - e0) <= 1e-4 * abs(e0)


class TestAdmittivity:
    def test_static_limit(self):
        assert admittivity(GREY_MATTER, 0.0) == 0.02 + 0.0j

    def test_dispersionless(self):
        p = ColeColeParams(4.0, 0.02, (0, 0, 0, 0), (1e-9,) * 4, (0.0,) * 4)
        w = 2 * np.pi * 130.0
        got = admittivity(p, w)
        assert got.real == pytest.approx(0.02, rel=1e-12)
        assert got.imag == pytest.approx(w * EPS0 * 4.0, rel=1e-12)

    def test_reference_value(self):
        got = admittivity(GREY_MATTER, 2 * np.pi * 1e3)
        assert got.real == pytest.approx(0.098736109514398936, rel=1e-12)
        assert got.imag == pytest.approx(0.0091230873177604679, rel=1e-12)

    def test_override_permittivity(self):
        w = 2 * np.pi * 1e3
        got = admittivity(GREY_MATTER, w, eps_r=100.0)
        assert got.imag == pytest.approx(w * EPS0 * 100.0, rel=1e-13)
        assert got.real == pytest.approx(conductivity(GREY_MATTER, w), rel=1e-13)

    def test_positive_real_part_on_box(self):
        rng = np.random.default_rng(11)
        box = RandomParamBox()
        for _ in range(30):
            p = sample_params(box, rng.uniform(-1, 1, 14))
            for w in (2 * np.pi * 130, 2 * np.pi * 1e4, 2 * np.pi * 5e5):
                assert admittivity(p, w).real > 0


class TestSampling:
    def test_center_is_mean_bitwise(self):
        p = sample_params(RandomParamBox(), np.zeros(14))
        assert p == GREY_MATTER
        w = 2 * np.pi * 777.0
        assert complex_permittivity(p, w) == complex_permittivity(GREY_MATTER, w)

    def test_corner_scales_componentwise(self):
        p = sample_params(RandomParamBox(), np.ones(14))
        np.testing.assert_allclose(p.to_flat(), 1.1 * GREY_MATTER.to_flat(), rtol=1e-15)

    def test_degenerate_coordinate_stays_zero(self):
        # the last broadening exponent has zero mean: a point mass
        assert GREY_MATTER.alpha[3] == 0.0
        for u in (np.ones(14), -np.ones(14)):
            assert sample_params(RandomParamBox(), u).alpha[3] == 0.0

    def test_out_of_range_rejected(self):
        u = np.zeros(14)
        u[3] = 1.0001
        with pytest.raises(ValueError):
            sample_params(RandomParamBox(), u)

    def test_flat_roundtrip(self):
        flat = GREY_MATTER.to_flat()
        assert flat.shape == (14,)
        assert ColeColeParams.from_flat(flat) == GREY_MATTER

    def test_invariants_enforced(self):
        with pytest.raises(ValueError):
            ColeColeParams(-1.0, 0.0, (0, 0, 0, 0), (1e-9,) * 4, (0.0,) * 4)
        with pytest.raises(ValueError):
            ColeColeParams(4.0, 0.0, (0, 0, 0, 0), (1e-9,) * 4, (1.0, 0, 0, 0))
        with pytest.raises(ValueError):
            ColeColeParams(4.0, 0.0, (0, 0, 0, 0), (0.0,) * 4, (0.0,) * 4)

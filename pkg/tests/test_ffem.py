"""Frequency-domain reconstruction tests: node layout, pulse spectrum
identities, the analytic one-pole oracle, and a real sweep smoke case."""

import numpy as np
import pytest

from axonuq.dispersion import GREY_MATTER, conductivity, relative_permittivity
from axonuq.ffem import (StimulusPulse, TransferFunction, frequency_nodes,
                         reconstruct_time, stimulus_spectrum, sweep)
from axonuq.volumeconductor import ElectrodeGeometry, build_mesh


class TestFrequencyNodes:
    def test_endpoints_and_dc(self):
        w = frequency_nodes(130.0, 5e5, 3846)
        assert w.size == 3847
        assert w[0] == 0.0
        assert w[1] == pytest.approx(2 * np.pi * 130.0, rel=1e-15)
        assert w[-1] == pytest.approx(2 * np.pi * 5e5, rel=1e-15)

    def test_minimal_node_count(self):
        w = frequency_nodes(10.0, 1000.0, 2)
        np.testing.assert_allclose(w, [0.0, 2 * np.pi * 10, 2 * np.pi * 1000], rtol=1e-15)

    def test_log_spacing_constant_ratio(self):
        w = frequency_nodes(130.0, 5e5, 200)[1:]
        ratios = w[1:] / w[:-1]
        np.testing.assert_allclose(ratios, ratios[0], rtol=1e-12)

    def test_invalid_range(self):
        with pytest.raises(ValueError):
            frequency_nodes(0.0, 100.0, 10)
        with pytest.raises(ValueError):
            frequency_nodes(100.0, 10.0, 10)


class TestStimulusSpectrum:
    def test_dc_coefficient_is_pulse_mean(self):
        pulse = StimulusPulse(amplitude=2.0)
        spec = stimulus_spectrum(pulse, 768)
        # sampled mean: -I * (pulse samples)/nt; analytic -I*width/period
        assert spec.coefficients[0].real == pytest.approx(-2.0 * 6 / 768, rel=1e-12)
        assert spec.coefficients[0].real == pytest.approx(-2.0 * 60e-6 * 130, rel=5e-3)
        assert spec.coefficients[0].imag == 0.0

    def test_zero_amplitude(self):
        spec = stimulus_spectrum(StimulusPulse(amplitude=0.0), 512)
        assert np.max(np.abs(spec.coefficients)) == 0.0

    def test_parseval(self):
        pulse = StimulusPulse(amplitude=1.5)
        nt = 1024
        s = pulse.samples(nt)
        c = stimulus_spectrum(pulse, nt).coefficients
        lhs = np.sum(s**2) / nt
        rhs = abs(c[0])**2 + 2 * np.sum(np.abs(c[1:-1])**2) + abs(c[-1])**2
        assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_roundtrip_reproduces_samples(self):
        pulse = StimulusPulse(amplitude=0.7)
        nt = 512
        c = stimulus_spectrum(pulse, nt).coefficients
        back = np.fft.irfft(c * nt, n=nt)
        np.testing.assert_allclose(back, pulse.samples(nt), atol=1e-12)

    def test_rejects_unresolvable_pulse(self):
        with pytest.raises(ValueError):
            stimulus_spectrum(StimulusPulse(), 64)  # dt > pulse_width/2
        with pytest.raises(ValueError):
            stimulus_spectrum(StimulusPulse(), 101)  # odd

    def test_pulse_validation(self):
        with pytest.raises(ValueError):
            StimulusPulse(pulse_width=1.0, period=0.5)


def analytic_tf(omega_nodes, h_fn, n_points=1):
    h = np.tile(h_fn(omega_nodes), (n_points, 1)).astype(complex)
    h[:, 0] = h[:, 0].real
    return TransferFunction(points=np.zeros((n_points, 2)),
                            omega_nodes=omega_nodes, H=h)


class TestReconstruct:
    def test_constant_tf_reproduces_scaled_pulse(self):
        pulse = StimulusPulse(amplitude=1.0)
        nodes = frequency_nodes(130.0, 1e6, 60)
        tf = analytic_tf(nodes, lambda w: np.full_like(w, 5.0))
        sig = reconstruct_time(tf, stimulus_spectrum(pulse, 768))
        np.testing.assert_allclose(sig.values[0], 5.0 * pulse.samples(768), atol=1e-12)

    def test_zero_spectrum_zero_signal(self):
        nodes = frequency_nodes(130.0, 1e6, 60)
        tf = analytic_tf(nodes, lambda w: 1.0 / (1 + 1j * w * 1e-5))
        sig = reconstruct_time(tf, stimulus_spectrum(StimulusPulse(amplitude=0.0), 768))
        assert np.max(np.abs(sig.values)) == 0.0

    def test_one_pole_lowpass_vs_time_stepping(self):
        # implicit-Euler RC oracle at dt = tau/100, periodic steady state
        pulse = StimulusPulse(amplitude=1.0)
        nt = 8192
        dt = pulse.period / nt
        tau = 100 * dt
        nodes = frequency_nodes(130.0, 1e6, 400)
        tf = analytic_tf(nodes, lambda w: 1.0 / (1.0 + 1j * w * tau))
        sig = reconstruct_time(tf, stimulus_spectrum(pulse, nt))

        u = pulse.samples(nt)
        y = 0.0
        trace = np.zeros(nt)
        for _ in range(6):
            for j in range(nt):
                y = (y + (dt / tau) * u[(j + 1) % nt]) / (1.0 + dt / tau)
                trace[j] = y
        oracle = np.roll(trace, 1)  # value at t_j
        rms = np.sqrt(np.mean(oracle**2))
        err = np.sqrt(np.mean((sig.values[0] - oracle) ** 2))
        assert err / rms <= 0.02

    def test_output_is_real_and_periodic(self):
        pulse = StimulusPulse(amplitude=1.0)
        nodes = frequency_nodes(130.0, 1e6, 80)
        tf = analytic_tf(nodes, lambda w: (1.0 + 0.5j * w * 1e-5) / (1 + 1j * w * 3e-5))
        sig = reconstruct_time(tf, stimulus_spectrum(pulse, 1024))
        assert np.isrealobj(sig.values)
        assert sig.nt * sig.dt == pytest.approx(pulse.period, rel=1e-12)

    def test_linearity_in_amplitude(self):
        nodes = frequency_nodes(130.0, 1e6, 80)
        tf = analytic_tf(nodes, lambda w: 1.0 / (1 + 1j * w * 2e-5))
        a = reconstruct_time(tf, stimulus_spectrum(StimulusPulse(amplitude=1.0), 768))
        b = reconstruct_time(tf, stimulus_spectrum(StimulusPulse(amplitude=2.5), 768))
        np.testing.assert_allclose(b.values, 2.5 * a.values, rtol=1e-12, atol=1e-15)

    def test_interpolation_exact_at_nodes(self):
        nodes = frequency_nodes(130.0, 1e6, 50)
        tf = analytic_tf(nodes, lambda w: np.exp(-1j * w * 1e-6) / (1 + 1j * w * 1e-5))
        got = tf.at(nodes[1:])
        np.testing.assert_allclose(got[0], tf.H[0, 1:], rtol=1e-12)

    def test_clamp_above_top_node(self):
        nodes = frequency_nodes(130.0, 1e4, 30)
        tf = analytic_tf(nodes, lambda w: 1.0 / (1 + 1j * w * 1e-4))
        got = tf.at(np.array([2 * np.pi * 1e6]))
        assert got[0, 0] == pytest.approx(tf.H[0, -1], rel=1e-12)

    def test_dc_blend_below_first_node(self):
        nodes = frequency_nodes(130.0, 1e4, 30)
        h = np.linspace(1, 2, nodes.size).astype(complex)
        tf = TransferFunction(points=np.zeros((1, 2)), omega_nodes=nodes, H=h[None, :])
        w1 = nodes[1]
        got = tf.at(np.array([0.0, 0.5 * w1, w1]))
        assert got[0, 0] == pytest.approx(h[0], rel=1e-12)
        assert got[0, 1] == pytest.approx(0.5 * (h[0] + h[1]), rel=1e-12)
        assert got[0, 2] == pytest.approx(h[1], rel=1e-12)


class TestSweep:
    @pytest.fixture(scope="class")
    def mesh(self):
        return build_mesh(ElectrodeGeometry(), 2000)

    def test_dispersionless_constant_h(self, mesh):
        pts = np.array([[2e-3, 48.5e-3], [5e-3, 48.5e-3]])
        nodes = frequency_nodes(130.0, 5e5, 4)
        tf = sweep(mesh, lambda w: 0.2, lambda w: 0.0, nodes, pts)
        # constant real conductivity, zero permittivity: H constant and real
        for j in range(1, nodes.size):
            np.testing.assert_allclose(tf.H[:, j], tf.H[:, 0], rtol=1e-9)

    def test_grounded_point_zero(self, mesh):
        geom = ElectrodeGeometry()
        pts = np.array([[geom.domain_radius, geom.domain_height / 2]])
        nodes = frequency_nodes(130.0, 5e5, 3)
        kap = lambda w: conductivity(GREY_MATTER, max(w, 2 * np.pi * 130))
        er = lambda w: relative_permittivity(GREY_MATTER, w)
        tf = sweep(mesh, kap, er, nodes, pts)
        assert np.max(np.abs(tf.H)) <= 1e-14

    def test_refined_sweep_changes_little(self, mesh):
        # doubling the node count moves interpolated H by well under 1%
        pts = np.array([[2e-3, 48.5e-3]])
        kap = lambda w: conductivity(GREY_MATTER, max(w, 2 * np.pi * 130))
        er = lambda w: relative_permittivity(GREY_MATTER, w)
        tf_a = sweep(mesh, kap, er, frequency_nodes(130.0, 5e5, 40), pts)
        tf_b = sweep(mesh, kap, er, frequency_nodes(130.0, 5e5, 80), pts)
        harmonics = 2 * np.pi * 130.0 * np.arange(1, 385)
        ha, hb = tf_a.at(harmonics)[0], tf_b.at(harmonics)[0]
        assert np.max(np.abs(ha - hb) / np.abs(hb)) <= 0.01

    def test_dc_column_real(self, mesh):
        pts = np.array([[2e-3, 48.5e-3]])
        kap = lambda w: conductivity(GREY_MATTER, max(w, 2 * np.pi * 130))
        er = lambda w: relative_permittivity(GREY_MATTER, w)
        tf = sweep(mesh, kap, er, frequency_nodes(130.0, 5e5, 3), pts)
        assert tf.H[0, 0].imag == 0.0
        assert tf.H[0, 0].real > 0

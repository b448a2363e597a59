"""Frequency-domain assembly of the time-dependent extracellular potential.

The linear dispersive field problem is solved once per frequency node for
unit current; the transfer function at the observation points is then
interpolated at the stimulus harmonics, multiplied with the pulse spectrum
and transformed back, giving one period of the periodic steady-state
potential at every point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .dispersion import EPS0
from .errors import NumericalError
from .volumeconductor import Mesh, assemble_solve


@dataclass(frozen=True)
class StimulusPulse:
    """Periodic cathodal square pulse: -amplitude during the first
    pulse_width of each period, zero otherwise."""

    amplitude: float = 1.0
    pulse_width: float = 60e-6
    period: float = 1.0 / 130.0

    def __post_init__(self):
        if not 0 < self.pulse_width < self.period:
            raise ValueError("need 0 < pulse_width < period")

    def samples(self, nt: int) -> np.ndarray:
        """Sample-and-hold waveform on nt uniform samples per period."""
        t = np.arange(nt) * (self.period / nt)
        return np.where(t < self.pulse_width, -self.amplitude, 0.0)


def frequency_nodes(f_min: float, f_max: float, n: int) -> np.ndarray:
    """Angular sweep nodes: a static node plus n log-spaced frequencies.

    The n nonzero nodes are log-equidistant from f_min to f_max inclusive;
    omega = 0 is prepended for the static solve.
    """
    if not 0 < f_min < f_max:
        raise ValueError("need 0 < f_min < f_max")
    if n < 2:
        raise ValueError("need at least two frequency nodes")
    f = np.logspace(np.log10(f_min), np.log10(f_max), n)
    f[0], f[-1] = f_min, f_max
    return np.concatenate([[0.0], 2.0 * np.pi * f])


@dataclass
class TransferFunction:
    """Complex potential per unit current at observation points and nodes.

    H has one row per observation point and one column per entry of
    omega_nodes (the first column is the static solution, which is real).
    """

    points: np.ndarray
    omega_nodes: np.ndarray
    H: np.ndarray

    def __post_init__(self):
        if self.H.shape != (len(self.points), len(self.omega_nodes)):
            raise ValueError("transfer-function shape mismatch")
        if np.any(np.abs(self.H[:, 0].imag) > 0):
            raise ValueError("static column must be real")
        self._re_spline = None
        self._im_spline = None

    def _splines(self):
        if self._re_spline is None:
            logw = np.log10(self.omega_nodes[1:])
            self._re_spline = CubicSpline(logw, self.H[:, 1:].real, axis=1)
            self._im_spline = CubicSpline(logw, self.H[:, 1:].imag, axis=1)
        return self._re_spline, self._im_spline

    def at(self, omega) -> np.ndarray:
        """Interpolated H at arbitrary angular frequencies (points x len(omega)).

        Real and imaginary parts are splined separately over log frequency.
        Below the first nonzero node the static value is blended linearly in
        omega; above the last node the value is clamped there.
        """
        w = np.atleast_1d(np.asarray(omega, dtype=float))
        if np.any(w < 0):
            raise ValueError("frequencies must be nonnegative")
        out = np.empty((self.H.shape[0], w.size), dtype=complex)
        w1 = self.omega_nodes[1]
        wmax = self.omega_nodes[-1]
        re_s, im_s = self._splines()

        low = w < w1
        if np.any(low):
            h1 = self.H[:, 1][:, None]
            h0 = self.H[:, 0][:, None].real
            frac = (w[low] / w1)[None, :]
            out[:, low] = h0 + (h1 - h0) * frac
        high = ~low
        if np.any(high):
            wq = np.minimum(w[high], wmax)
            logw = np.log10(wq)
            out[:, high] = re_s(logw) + 1j * im_s(logw)
        return out


def sweep(mesh: Mesh, kappa_tissue, eps_r, omega_nodes, points,
          enc_kappa_scale: float = 1.0) -> TransferFunction:
    """Unit-current field solves over the node list.

    kappa_tissue(omega) -> conductivity [S/m] and eps_r(omega) -> relative
    permittivity supply the material; the encapsulation shares the tissue
    conductivity scaled by enc_kappa_scale.  The static node uses the
    low-frequency-limit conductivity alone (the permittivity drops out of
    the static operator).
    """
    pts = np.asarray(points, dtype=float)
    w_op = mesh.interpolation_matrix(pts)
    omega_nodes = np.asarray(omega_nodes, dtype=float)
    h = np.empty((len(pts), omega_nodes.size), dtype=complex)
    for i, w in enumerate(omega_nodes):
        try:
            if w == 0.0:
                kap = float(kappa_tissue(0.0))
                sol = assemble_solve(mesh, enc_kappa_scale * kap, kap, omega=0.0)
            else:
                kap = float(kappa_tissue(w))
                er = float(eps_r(w))
                sig_t = complex(kap, w * EPS0 * er)
                sig_e = complex(enc_kappa_scale * kap, w * EPS0 * er)
                sol = assemble_solve(mesh, sig_e, sig_t, omega=w)
        except NumericalError as exc:
            raise NumericalError(f"sweep failed at node {i} (omega={w:.6g}): {exc}") from exc
        h[:, i] = w_op @ sol.phi
    h[:, 0] = h[:, 0].real
    return TransferFunction(points=pts, omega_nodes=omega_nodes, H=h)


@dataclass(frozen=True)
class StimulusSpectrum:
    """One-sided discrete spectrum of the sampled pulse.

    coefficients[k] is the k-th harmonic of the nt-sample waveform,
    normalized so the inverse transform reproduces the samples.
    """

    coefficients: np.ndarray
    nt: int
    pulse: StimulusPulse


def stimulus_spectrum(pulse: StimulusPulse, nt: int) -> StimulusSpectrum:
    """Harmonic coefficients of the sampled cathodal square wave."""
    if nt < 8 or nt % 2:
        raise ValueError("nt must be even and at least 8")
    dt = pulse.period / nt
    if pulse.pulse_width < 2.0 * dt:
        raise ValueError("nt too small to resolve the pulse width")
    samples = pulse.samples(nt)
    return StimulusSpectrum(coefficients=np.fft.rfft(samples) / nt, nt=nt, pulse=pulse)


@dataclass(frozen=True)
class TimeSignal:
    """Real periodic signals, one row per observation point."""

    dt: float
    values: np.ndarray  # (n_points, nt)

    @property
    def nt(self) -> int:
        return self.values.shape[1]

    @property
    def period(self) -> float:
        return self.nt * self.dt


def reconstruct_time(tf: TransferFunction, spectrum: StimulusSpectrum) -> TimeSignal:
    """Periodic steady-state potential at every observation point.

    Each harmonic of the stimulus is multiplied with the interpolated
    transfer function and inverse-transformed.  Conjugate symmetry is
    enforced by realifying the static and Nyquist bins, so the output is
    exactly real.
    """
    nt = spectrum.nt
    period = spectrum.pulse.period
    k = np.arange(nt // 2 + 1)
    omega_k = 2.0 * np.pi * k / period
    hk = tf.at(omega_k)
    b = hk * spectrum.coefficients[None, :]
    b[:, 0] = b[:, 0].real
    b[:, -1] = b[:, -1].real
    values = np.fft.irfft(b * nt, n=nt, axis=1)
    return TimeSignal(dt=period / nt, values=values)

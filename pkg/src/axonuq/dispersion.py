"""Composite four-term dielectric dispersion of biological tissue.

The material law combines a high-frequency permittivity, a static ionic
conductivity and four broadened relaxation terms.  Permittivity and
conductivity are read off the complex response; the complex admittivity
kappa(w) + j*w*eps0*eps_r(w) feeds the field solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

#: Vacuum permittivity [F/m], fixed so reference values are reproducible.
EPS0 = 8.8541878128e-12

_N_TERMS = 4
#: Number of scalar material parameters (flat-vector length).
N_PARAMS = 2 + 3 * _N_TERMS


@dataclass(frozen=True)
class ColeColeParams:
    """Parameter set of the composite dispersion law.

    eps_inf is the high-frequency relative permittivity, kappa_i the static
    ionic conductivity [S/m].  Each relaxation term n carries a permittivity
    increment delta_eps[n], a relaxation time tau[n] [s] and a broadening
    exponent alpha[n] in [0, 1).
    """

    eps_inf: float
    kappa_i: float
    delta_eps: tuple[float, ...]
    tau: tuple[float, ...]
    alpha: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "delta_eps", tuple(float(x) for x in self.delta_eps))
        object.__setattr__(self, "tau", tuple(float(x) for x in self.tau))
        object.__setattr__(self, "alpha", tuple(float(x) for x in self.alpha))
        if not (len(self.delta_eps) == len(self.tau) == len(self.alpha) == _N_TERMS):
            raise ValueError(f"expected {_N_TERMS} relaxation terms")
        if not self.eps_inf > 0:
            raise ValueError("eps_inf must be positive")
        if self.kappa_i < 0:
            raise ValueError("kappa_i must be nonnegative")
        for n in range(_N_TERMS):
            if self.delta_eps[n] < 0:
                raise ValueError(f"delta_eps[{n}] must be nonnegative")
            if not self.tau[n] > 0:
                raise ValueError(f"tau[{n}] must be positive")
            if not 0.0 <= self.alpha[n] < 1.0:
                raise ValueError(f"alpha[{n}] must lie in [0, 1)")

    def to_flat(self) -> np.ndarray:
        """Flatten to the canonical 14-entry ordering.

        Ordering: (eps_inf, kappa_i, delta_eps1, tau1, alpha1, ...,
        delta_eps4, tau4, alpha4), the layout used in config files.
        """
        out = [self.eps_inf, self.kappa_i]
        for n in range(_N_TERMS):
            out.extend((self.delta_eps[n], self.tau[n], self.alpha[n]))
        return np.array(out, dtype=float)

    @classmethod
    def from_flat(cls, values) -> "ColeColeParams":
        v = np.asarray(values, dtype=float)
        if v.shape != (N_PARAMS,):
            raise ValueError(f"expected flat vector of length {N_PARAMS}, got {v.shape}")
        return cls(
            eps_inf=float(v[0]),
            kappa_i=float(v[1]),
            delta_eps=tuple(v[2 + 3 * n] for n in range(_N_TERMS)),
            tau=tuple(v[3 + 3 * n] for n in range(_N_TERMS)),
            alpha=tuple(v[4 + 3 * n] for n in range(_N_TERMS)),
        )


#: Literature values for grey matter (four dispersion terms).
GREY_MATTER = ColeColeParams(
    eps_inf=4.0,
    kappa_i=0.02,
    delta_eps=(45.0, 400.0, 2.0e5, 4.5e7),
    tau=(7.96e-12, 15.92e-9, 106.10e-6, 5.31e-3),
    alpha=(0.1, 0.15, 0.22, 0.0),
)


def _check_omega_positive(omega):
    w = np.asarray(omega, dtype=float)
    if np.any(w <= 0.0):
        raise ValueError("omega must be positive")
    return w


def complex_permittivity(params: ColeColeParams, omega):
    """Complex relative-permittivity response at angular frequency omega.

    Returns eps_inf + kappa_i/(j w eps0) + sum_n delta_eps_n /
    (1 + (j w tau_n)^(1 - alpha_n)).  The complex power uses the principal
    branch, (j w tau)^p = (w tau)^p * exp(j p pi/2), which keeps the
    imaginary part nonpositive (passive loss).  omega may be a scalar or an
    array; the result matches its shape.
    """
    w = _check_omega_positive(omega)
    jw = 1j * w
    f = np.full_like(w, params.eps_inf, dtype=complex)
    f += params.kappa_i / (jw * EPS0)
    for n in range(_N_TERMS):
        f += params.delta_eps[n] / (1.0 + (jw * params.tau[n]) ** (1.0 - params.alpha[n]))
    return f if np.ndim(omega) else complex(f)


def relative_permittivity(params: ColeColeParams, omega):
    """Real relative permittivity, the real part of the complex response."""
    return np.real(complex_permittivity(params, omega))


def conductivity(params: ColeColeParams, omega):
    """Electric conductivity [S/m], -Im(eps0 * w * f(w)).

    Equals kappa_i plus the (nonnegative) dispersive loss of each
    relaxation term.
    """
    w = _check_omega_positive(omega)
    return -EPS0 * w * np.imag(complex_permittivity(params, omega))


def admittivity(params: ColeColeParams, omega, eps_r=None) -> complex:
    """Complex admittivity kappa(w) + j*w*eps0*eps_r(w) [S/m].

    At omega == 0 the static limit kappa_i + 0j is returned.  When eps_r is
    given, it overrides the dispersive permittivity (used when the
    permittivity is treated as deterministic while kappa varies).
    """
    if omega < 0:
        raise ValueError("omega must be nonnegative")
    if omega == 0.0:
        return complex(params.kappa_i, 0.0)
    kap = conductivity(params, omega)
    er = relative_permittivity(params, omega) if eps_r is None else eps_r
    return complex(kap, omega * EPS0 * er)


@dataclass(frozen=True)
class RandomParamBox:
    """Independent uniform box around a mean parameter vector.

    Each parameter is supported on mean*(1 - h) .. mean*(1 + h) with relative
    halfwidth h.  A parameter with zero mean stays a point mass at zero, so
    the vector always keeps its 14 entries and their meaning.
    """

    mean: ColeColeParams = field(default_factory=lambda: GREY_MATTER)
    rel_halfwidth: float = 0.10

    def __post_init__(self):
        if not 0.0 <= self.rel_halfwidth < 1.0:
            raise ValueError("rel_halfwidth must lie in [0, 1)")


def sample_params(box: RandomParamBox, u) -> ColeColeParams:
    """Map unit-box coordinates u in [-1, 1]^14 to a parameter realization.

    param_i = mean_i * (1 + h * u_i).  Deterministic; the randomness is
    supplied by the caller.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (N_PARAMS,):
        raise ValueError(f"expected {N_PARAMS} coordinates, got {u.shape}")
    if np.any(np.abs(u) > 1.0):
        raise ValueError("coordinates must lie in [-1, 1]")
    flat = box.mean.to_flat() * (1.0 + box.rel_halfwidth * u)
    return ColeColeParams.from_flat(flat)

"""Pure-numpy backward-Euler cable integrator (fallback backend).

Semantics match the compiled extension: gating variables advance by exact
exponential relaxation at the previous potential, then the linear cable
system (capacitive, axial and linearized ionic terms) is solved implicitly
through one tridiagonal system per step.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_banded


def _expm1_ratio(u):
    """u / (exp(u) - 1) with the removable singularity at u = 0."""
    out = np.ones_like(u)
    mask = np.abs(u) >= 1e-7
    out[mask] = u[mask] / np.expm1(u[mask])
    return out


#: Rate functions are evaluated at potentials clamped to this band [mV];
#: keeps extreme off-physical excursions finite without touching the
#: dynamics anywhere near the physiological range.
RATE_CLAMP_MV = 500.0


def rate_constants(v_mv, rate_scale: float = 1.0):
    """Channel opening/closing rates [1/s] at membrane deviation v_mv [mV].

    Classic squid-axon kinetics referenced to the resting potential; the
    0/0 removable singularities are evaluated by their limits.
    """
    v = np.atleast_1d(np.asarray(v_mv, dtype=float))
    v = np.clip(v, -RATE_CLAMP_MV, RATE_CLAMP_MV)
    am = 1.0 * _expm1_ratio((25.0 - v) / 10.0)
    an = 0.1 * _expm1_ratio((10.0 - v) / 10.0)
    bm = 4.0 * np.exp(-v / 18.0)
    ah = 0.07 * np.exp(-v / 20.0)
    bh = 1.0 / (np.exp((30.0 - v) / 10.0) + 1.0)
    bn = 0.125 * np.exp(-v / 80.0)
    k = 1e3 * rate_scale  # per-ms kinetics to per-second
    return am * k, bm * k, ah * k, bh * k, an * k, bn * k


def gating_steady_state(v_mv, rate_scale: float = 1.0):
    am, bm, ah, bh, an, bn = rate_constants(v_mv, rate_scale)
    return am / (am + bm), ah / (ah + bh), an / (an + bn)


def _advance_gates(v_node_mv, m, h, n, dt, rate_scale):
    am, bm, ah, bh, an, bn = rate_constants(v_node_mv, rate_scale)
    for gate, a, b in ((m, am, bm), (h, ah, bh), (n, an, bn)):
        total = a + b
        inf = a / total
        gate[:] = inf + (gate - inf) * np.exp(-dt * total)


def step(v, m, h, n, sys_arrays, phi_e_col, dt, drive_scale=1.0):
    """One implicit step; v, m, h, n are updated in place."""
    (node_idx, cap, g_ax, g_passive, area_nodes,
     gna, gk, gl, ena, ek, el, rate_scale) = sys_arrays

    _advance_gates(v[node_idx] * 1e3, m, h, n, dt, rate_scale)

    g_mem = g_passive.copy()
    b_mem = np.zeros_like(v)
    gna_eff = gna * m**3 * h
    gk_eff = gk * n**4
    g_mem[node_idx] = area_nodes * (gna_eff + gk_eff + gl)
    b_mem[node_idx] = area_nodes * (gna_eff * ena + gk_eff * ek + gl * el)

    drive = np.zeros_like(v)
    d = g_ax * drive_scale * np.diff(phi_e_col)
    drive[:-1] += d
    drive[1:] -= d

    nn = v.size
    diag = cap / dt + g_mem
    diag[:-1] += g_ax
    diag[1:] += g_ax
    rhs = (cap / dt) * v + drive + b_mem
    ab = np.zeros((3, nn))
    ab[0, 1:] = -g_ax
    ab[1, :] = diag
    ab[2, :-1] = -g_ax
    v[:] = solve_banded((1, 1), ab, rhs)


def run_cable(v, m, h, n, sys_arrays, phi_e, drive_scale, dt, record_index, trace_out):
    """Integrate over all columns of drive_scale * phi_e.

    phi_e has one column per time sample including the initial one; the
    step to sample j uses column j.  trace_out receives the recorded
    compartment's inner-potential deviation v + drive_scale * phi_e; the
    return value is the maximum recorded membrane deviation.
    """
    n_steps = phi_e.shape[1] - 1
    trace_out[0] = v[record_index] + drive_scale * phi_e[record_index, 0]
    vmax = v[record_index]
    for j in range(1, n_steps + 1):
        step(v, m, h, n, sys_arrays, phi_e[:, j], dt, drive_scale)
        if not np.isfinite(v[record_index]):
            bad = int(np.argmax(~np.isfinite(v)))
            raise ArithmeticError(f"non-finite membrane state at compartment {bad}, step {j}")
        trace_out[j] = v[record_index] + drive_scale * phi_e[record_index, j]
        if v[record_index] > vmax:
            vmax = v[record_index]
    return float(vmax)

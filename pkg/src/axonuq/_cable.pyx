# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled backward-Euler cable integrator (hot kernel).

Mirrors axonuq.cable_numpy step for step: exponential gating relaxation at
the previous potential, then one tridiagonal solve for the implicit cable
update.  Selected at import when available; see axonuq.axon.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, expm1, fabs, isfinite

cnp.import_array()


cdef inline double _expm1_ratio(double u) nogil:
    if fabs(u) < 1e-7:
        return 1.0
    return u / expm1(u)


def run_cable(
    double[::1] v,
    double[::1] m,
    double[::1] h,
    double[::1] n_gate,
    long[::1] node_idx,
    double[::1] cap,
    double[::1] g_ax,
    double[::1] g_passive,
    double[::1] area_nodes,
    double[:, ::1] phi_e,
    double drive_scale,
    double dt,
    double gna, double gk, double gl,
    double ena, double ek, double el,
    double rate_scale,
    Py_ssize_t record_index,
    double[::1] trace_out,
):
    """Integrate the cable over all columns of drive_scale * phi_e.

    Arrays are updated in place; returns the maximum recorded membrane
    deviation (diagnostic).  Raises ArithmeticError on non-finite state.
    The scale factor lets amplitude sweeps reuse one drive array.
    """
    cdef Py_ssize_t ncomp = v.shape[0]
    cdef Py_ssize_t nnod = node_idx.shape[0]
    cdef Py_ssize_t n_steps = phi_e.shape[1] - 1
    cdef Py_ssize_t i, j, k, idx
    cdef double krate = 1e3 * rate_scale
    cdef double vmv, am, bm, ah, bh, an, bn, tot, inf
    cdef double gna_eff, gk_eff, w, denom, vrec, vmax

    cdef double[::1] diag = np.empty(ncomp)
    cdef double[::1] rhs = np.empty(ncomp)
    cdef double[::1] cp = np.empty(ncomp)
    cdef double[::1] g_mem = np.empty(ncomp)
    cdef double[::1] b_mem = np.empty(ncomp)

    trace_out[0] = v[record_index] + drive_scale * phi_e[record_index, 0]
    vmax = v[record_index]

    for j in range(1, n_steps + 1):
        # gating: exact relaxation toward the steady state at v_prev
        for k in range(nnod):
            idx = node_idx[k]
            vmv = v[idx] * 1e3
            if vmv > 500.0:  # keep rates finite at off-physical excursions
                vmv = 500.0
            elif vmv < -500.0:
                vmv = -500.0
            am = krate * _expm1_ratio((25.0 - vmv) / 10.0)
            bm = krate * 4.0 * exp(-vmv / 18.0)
            ah = krate * 0.07 * exp(-vmv / 20.0)
            bh = krate / (exp((30.0 - vmv) / 10.0) + 1.0)
            an = krate * 0.1 * _expm1_ratio((10.0 - vmv) / 10.0)
            bn = krate * 0.125 * exp(-vmv / 80.0)
            tot = am + bm
            inf = am / tot
            m[k] = inf + (m[k] - inf) * exp(-dt * tot)
            tot = ah + bh
            inf = ah / tot
            h[k] = inf + (h[k] - inf) * exp(-dt * tot)
            tot = an + bn
            inf = an / tot
            n_gate[k] = inf + (n_gate[k] - inf) * exp(-dt * tot)

        for i in range(ncomp):
            g_mem[i] = g_passive[i]
            b_mem[i] = 0.0
        for k in range(nnod):
            idx = node_idx[k]
            gna_eff = gna * m[k] * m[k] * m[k] * h[k]
            gk_eff = gk * n_gate[k] * n_gate[k] * n_gate[k] * n_gate[k]
            g_mem[idx] = area_nodes[k] * (gna_eff + gk_eff + gl)
            b_mem[idx] = area_nodes[k] * (gna_eff * ena + gk_eff * ek + gl * el)

        # assemble diag/rhs with the axial drive g * d2(phi_e)
        for i in range(ncomp):
            diag[i] = cap[i] / dt + g_mem[i]
            rhs[i] = (cap[i] / dt) * v[i] + b_mem[i]
        for i in range(ncomp - 1):
            w = g_ax[i] * drive_scale * (phi_e[i + 1, j] - phi_e[i, j])
            rhs[i] += w
            rhs[i + 1] -= w
            diag[i] += g_ax[i]
            diag[i + 1] += g_ax[i]

        # Thomas algorithm, off-diagonals are -g_ax
        cp[0] = -g_ax[0] / diag[0]
        rhs[0] = rhs[0] / diag[0]
        for i in range(1, ncomp):
            denom = diag[i] + g_ax[i - 1] * cp[i - 1]
            if i < ncomp - 1:
                cp[i] = -g_ax[i] / denom
            rhs[i] = (rhs[i] + g_ax[i - 1] * rhs[i - 1]) / denom
        v[ncomp - 1] = rhs[ncomp - 1]
        for i in range(ncomp - 2, -1, -1):
            v[i] = rhs[i] - cp[i] * v[i + 1]

        vrec = v[record_index]
        if not isfinite(vrec):
            raise ArithmeticError(
                f"non-finite membrane state at compartment {record_index}, step {j}"
            )
        trace_out[j] = vrec + drive_scale * phi_e[record_index, j]
        if vrec > vmax:
            vmax = vrec

    return vmax

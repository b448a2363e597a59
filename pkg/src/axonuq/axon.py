"""Myelinated axon cable model driven by an extracellular potential.

The fiber is a chain of compartments along a straight ray: active nodes
(fast sodium, delayed-rectifier potassium, leak) every node_spacing,
separated by runs of passive low-capacitance internodal compartments.
The extracellular potential enters through its second spatial difference;
integration is backward Euler with exponentially integrated gating.

Two integrator backends exist: a compiled extension (axonuq._cable) and a
pure-numpy fallback (axonuq.cable_numpy).  The extension is used when it
imported successfully and AXONUQ_PURE is not set.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import cable_numpy

try:
    from . import _cable as _compiled
except ImportError:  # pragma: no cover - build without the extension
    _compiled = None

log = logging.getLogger(__name__)


def backend_name() -> str:
    """Active integrator backend: "compiled" or "numpy"."""
    if _compiled is not None and not os.environ.get("AXONUQ_PURE"):
        return "compiled"
    return "numpy"


@dataclass(frozen=True)
class AxonGeometry:
    """Compartment layout along a ray perpendicular to the active contact.

    distance is measured from the electrode axis to the near end of the
    fiber; the fiber extends radially outward.  The default layout gives
    21 nodes and 20 internodal spans of 10 compartments each.
    """

    distance: float = 1e-3
    n_nodes: int = 21
    internode_compartments: int = 10
    node_spacing: float = 0.5e-3

    def __post_init__(self):
        if self.distance <= 0 or self.node_spacing <= 0:
            raise ValueError("distance and node_spacing must be positive")
        if self.n_nodes < 2 or self.internode_compartments < 1:
            raise ValueError("need at least two nodes and one internodal compartment")

    @property
    def n_compartments(self) -> int:
        return self.n_nodes + (self.n_nodes - 1) * self.internode_compartments


@dataclass(frozen=True)
class MembraneConstants:
    """Fixed membrane and cable constants (SI units).

    Potentials are relative to rest.  e_leak None means "balance the leak
    reversal so rest is an exact equilibrium", which keeps the cable quiet
    without stimulation.
    """

    g_na: float = 1200.0  # S/m^2
    g_k: float = 360.0
    g_leak: float = 3.0
    e_na: float = 0.115  # V relative to rest
    e_k: float = -0.012
    e_leak: float | None = None
    c_node: float = 0.01  # F/m^2
    c_internode: float = 5e-5
    g_internode: float = 1e-3  # S/m^2
    axial_resistivity: float = 0.7  # ohm m
    node_length: float = 2.5e-6
    core_diameter_ratio: float = 0.6
    rate_scale: float = 1.0
    resting_potential: float = -80e-3


@dataclass(frozen=True)
class CableSystem:
    """Assembled per-compartment quantities of one fiber."""

    geometry: AxonGeometry
    constants: MembraneConstants
    fiber_diameter: float
    offsets: np.ndarray  # compartment centers along the fiber [m]
    lengths: np.ndarray
    areas: np.ndarray  # membrane areas [m^2]
    capacitance: np.ndarray  # [F]
    g_axial: np.ndarray  # (n-1,) [S]
    node_index: np.ndarray  # indices of nodal compartments
    g_passive: np.ndarray  # passive membrane conductance [S], zero at nodes
    e_leak: float  # resolved leak reversal [V re rest]

    @property
    def n_compartments(self) -> int:
        return self.offsets.size

    @property
    def resting_potential(self) -> float:
        return self.constants.resting_potential


def build_axon(geom: AxonGeometry, fiber_diameter: float = 10e-6,
               constants: MembraneConstants | None = None) -> CableSystem:
    """Assemble the cable arrays for one fiber.

    Nodal compartments carry the active membrane; internodal compartments a
    low-capacitance passive sheath.  Axial conductances follow from the
    axoplasmic resistivity, the core cross-section and the half-lengths of
    adjacent compartments.
    """
    if fiber_diameter <= 0:
        raise ValueError("fiber_diameter must be positive")
    k = constants or MembraneConstants()
    if k.node_length >= geom.node_spacing:
        raise ValueError("node longer than the node spacing")

    l_int = (geom.node_spacing - k.node_length) / geom.internode_compartments
    n = geom.n_compartments
    lengths = np.empty(n)
    is_node = np.zeros(n, dtype=bool)
    pos = 0
    for j in range(geom.n_nodes):
        lengths[pos] = k.node_length
        is_node[pos] = True
        pos += 1
        if j < geom.n_nodes - 1:
            lengths[pos:pos + geom.internode_compartments] = l_int
            pos += geom.internode_compartments
    offsets = np.cumsum(lengths) - 0.5 * lengths

    d_core = k.core_diameter_ratio * fiber_diameter
    areas = np.where(is_node, np.pi * d_core, np.pi * fiber_diameter) * lengths
    capacitance = np.where(is_node, k.c_node, k.c_internode) * areas
    a_core = 0.25 * np.pi * d_core**2
    g_axial = a_core / (k.axial_resistivity * 0.5 * (lengths[:-1] + lengths[1:]))
    g_passive = np.where(is_node, 0.0, k.g_internode * areas)

    e_leak = k.e_leak
    if e_leak is None:
        m0, h0, n0 = cable_numpy.gating_steady_state(0.0, k.rate_scale)
        gna_eff = k.g_na * float(m0[0]) ** 3 * float(h0[0])
        gk_eff = k.g_k * float(n0[0]) ** 4
        e_leak = -(gna_eff * k.e_na + gk_eff * k.e_k) / k.g_leak

    return CableSystem(
        geometry=geom,
        constants=k,
        fiber_diameter=fiber_diameter,
        offsets=offsets,
        lengths=lengths,
        areas=areas,
        capacitance=capacitance,
        g_axial=g_axial,
        node_index=np.flatnonzero(is_node),
        g_passive=g_passive,
        e_leak=float(e_leak),
    )


def compartment_points(sys: CableSystem, z_center: float) -> np.ndarray:
    """(r, z) compartment centers of the radial fiber at height z_center."""
    r = sys.geometry.distance + sys.offsets
    return np.column_stack([r, np.full_like(r, z_center)])


@dataclass
class MembraneState:
    """Absolute membrane potential and nodal gating variables."""

    phi_m: np.ndarray
    m: np.ndarray
    h: np.ndarray
    n: np.ndarray

    def copy(self) -> "MembraneState":
        return MembraneState(self.phi_m.copy(), self.m.copy(), self.h.copy(), self.n.copy())


def resting_state(sys: CableSystem) -> MembraneState:
    """Rest: phi_m at the resting potential, gating at its steady state."""
    m0, h0, n0 = cable_numpy.gating_steady_state(0.0, sys.constants.rate_scale)
    nn = sys.node_index.size
    return MembraneState(
        phi_m=np.full(sys.n_compartments, sys.resting_potential),
        m=np.full(nn, float(m0[0])),
        h=np.full(nn, float(h0[0])),
        n=np.full(nn, float(n0[0])),
    )


def _sys_arrays(sys: CableSystem):
    k = sys.constants
    return (sys.node_index, sys.capacitance, sys.g_axial, sys.g_passive,
            sys.areas[sys.node_index], k.g_na, k.g_k, k.g_leak,
            k.e_na, k.e_k, sys.e_leak, k.rate_scale)


def step_backward_euler(sys: CableSystem, state: MembraneState, phi_e_now,
                        dt: float) -> MembraneState:
    """One implicit step under the extracellular column phi_e_now."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    phi = np.asarray(phi_e_now, dtype=float)
    if phi.shape != (sys.n_compartments,):
        raise ValueError("phi_e_now length mismatch")
    out = state.copy()
    v = out.phi_m - sys.resting_potential
    cable_numpy.step(v, out.m, out.h, out.n, _sys_arrays(sys), phi, dt)
    if not np.all(np.isfinite(v)):
        bad = int(np.argmax(~np.isfinite(v)))
        raise ArithmeticError(f"non-finite membrane state at compartment {bad}")
    out.phi_m = v + sys.resting_potential
    return out


@dataclass(frozen=True)
class SimulationResult:
    """Inner-potential trace at the outer compartment and the activation flag."""

    times: np.ndarray
    trace: np.ndarray  # absolute inner potential at the outer compartment [V]
    activated: bool
    distal_node_crossed: bool  # diagnostic: distal membrane potential above 0 V
    final_state: MembraneState


def tile_periods(phi_e_values: np.ndarray, n_periods: int) -> np.ndarray:
    """Extend one period of samples to n_periods plus the wrap-around column.

    Amplitude sweeps tile once and reuse the array through the
    ``drive_scale`` argument of :func:`run_tiled`.
    """
    phi_e_values = np.asarray(phi_e_values, dtype=float)
    if phi_e_values.ndim != 2:
        raise ValueError("phi_e_values must be 2-D (compartments x samples)")
    nt = phi_e_values.shape[1]
    cols = np.arange(n_periods * nt + 1) % nt
    return np.ascontiguousarray(phi_e_values[:, cols])


def run_tiled(sys: CableSystem, phi_ext: np.ndarray, dt: float,
              drive_scale: float = 1.0, backend: str | None = None) -> SimulationResult:
    """Integrate from rest under a pre-tiled drive, scaled by drive_scale."""
    nc = sys.n_compartments
    if phi_ext.shape[0] != nc:
        raise ValueError("phi_ext must have one row per compartment")
    total = phi_ext.shape[1] - 1
    state = resting_state(sys)
    v = state.phi_m - sys.resting_potential
    trace = np.empty(total + 1)
    record = nc - 1

    use = backend or backend_name()
    if use == "compiled":
        vmax = _compiled.run_cable(
            v, state.m, state.h, state.n,
            sys.node_index.astype(np.int64), sys.capacitance, sys.g_axial,
            sys.g_passive, np.ascontiguousarray(sys.areas[sys.node_index]),
            phi_ext, drive_scale, dt,
            sys.constants.g_na, sys.constants.g_k, sys.constants.g_leak,
            sys.constants.e_na, sys.constants.e_k, sys.e_leak,
            sys.constants.rate_scale, record, trace,
        )
    elif use == "numpy":
        vmax = cable_numpy.run_cable(v, state.m, state.h, state.n,
                                     _sys_arrays(sys), phi_ext, drive_scale,
                                     dt, record, trace)
    else:
        raise ValueError(f"unknown backend {use!r}")

    state.phi_m = v + sys.resting_potential
    trace += sys.resting_potential  # kernel records v + drive_scale*phi_e
    crossed = vmax > -sys.resting_potential
    result = SimulationResult(
        times=np.arange(total + 1) * dt,
        trace=trace,
        activated=bool(trace.max() > 0.0),
        distal_node_crossed=bool(crossed),
        final_state=state,
    )
    log.debug("simulate: metric=%.4g V activated=%s distal_crossed=%s",
              result.trace.max(), result.activated, result.distal_node_crossed)
    return result


def simulate(sys: CableSystem, phi_e_values: np.ndarray, dt: float,
             n_periods: int = 2, backend: str | None = None) -> SimulationResult:
    """Integrate from rest under periodically tiled extracellular samples.

    phi_e_values holds one period, shape (n_compartments, nt); the drive is
    tiled n_periods times.  The returned trace is the absolute inner
    potential phi_i = phi_m + phi_e at the outer (far-end) compartment,
    resting at phi_r; activated means it crossed zero, i.e. the membrane
    depolarized by more than |phi_r| -- a propagated spike.  (The deviation
    form v + phi_e is sign-indefinite below threshold in dispersive media,
    so it cannot serve as a root function; see the package notes.)
    """
    phi_e_values = np.asarray(phi_e_values, dtype=float)
    if phi_e_values.ndim != 2 or phi_e_values.shape[0] != sys.n_compartments:
        raise ValueError("phi_e_values must have one row per compartment")
    return run_tiled(sys, tile_periods(phi_e_values, n_periods), dt, 1.0, backend)


def activation_metric(trace) -> float:
    """Peak of the inner-potential trace; its sign defines activation."""
    t = np.asarray(trace, dtype=float)
    if t.size == 0:
        raise ValueError("empty trace")
    return float(t.max())

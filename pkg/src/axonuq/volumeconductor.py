"""Axisymmetric volume-conductor solver for a cylindrical stimulation lead.

The lead is a vertical shaft through a cylindrical tissue domain; ring
contacts sit on its surface; a thin encapsulation sheath surrounds it.  The
complex-admittivity Laplace problem is discretized with linear triangles on
a graded structured grid, weighted by the cylindrical radius.  Unit current
is injected through the active contact as a uniform current density; the
outer boundary is grounded.

A spherical-shell mesh around a ball electrode provides the validation
configuration whose exact solution is the point-source potential.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NumericalError


@dataclass(frozen=True)
class ElectrodeGeometry:
    """Parametric stand-in for a four-contact DBS lead (envelope dimensions)."""

    lead_radius: float = 0.635e-3
    contact_height: float = 1.5e-3
    contact_gap: float = 1.5e-3
    n_contacts: int = 4
    active_contact_index: int = 2  # 1-based
    encapsulation_thickness: float = 0.2e-3
    domain_radius: float = 50e-3
    domain_height: float = 100e-3

    def __post_init__(self):
        for name in ("lead_radius", "contact_height", "contact_gap",
                     "encapsulation_thickness", "domain_radius", "domain_height"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.n_contacts < 1:
            raise ValueError("need at least one contact")
        if not 1 <= self.active_contact_index <= self.n_contacts:
            raise ValueError("active contact index out of range")
        if self.encapsulation_thickness >= self.domain_radius - self.lead_radius:
            raise ValueError("encapsulation must be thinner than the tissue annulus")
        if self.array_span >= self.domain_height:
            raise ValueError("contact array does not fit the domain height")

    @property
    def array_span(self) -> float:
        return self.n_contacts * self.contact_height + (self.n_contacts - 1) * self.contact_gap

    def contact_z_interval(self, index: int) -> tuple[float, float]:
        """Vertical extent of a contact (1-based index)."""
        if not 1 <= index <= self.n_contacts:
            raise ValueError("contact index out of range")
        z0 = 0.5 * (self.domain_height - self.array_span)
        lo = z0 + (index - 1) * (self.contact_height + self.contact_gap)
        return lo, lo + self.contact_height

    @property
    def active_contact_center_z(self) -> float:
        lo, hi = self.contact_z_interval(self.active_contact_index)
        return 0.5 * (lo + hi)


ENCAPSULATION = 0
TISSUE = 1


class Mesh:
    """Conforming triangle mesh with region tags and boundary bookkeeping.

    nodes: (Nn, 2) r,z coordinates [m]; triangles: (Nt, 3) CCW node triples;
    region: (Nt,) tags; dirichlet: (Nn,) grounded-node mask;
    injection_edges: (Ne, 2) node pairs on the driven contact.
    """

    def __init__(self, nodes, triangles, region, dirichlet, injection_edges):
        self.nodes = np.asarray(nodes, dtype=float)
        self.triangles = np.asarray(triangles, dtype=np.int64)
        self.region = np.asarray(region, dtype=np.int8)
        self.dirichlet = np.asarray(dirichlet, dtype=bool)
        self.injection_edges = np.asarray(injection_edges, dtype=np.int64)
        if np.any(self.nodes[:, 0] < -1e-15):
            raise ValueError("radial coordinates must be nonnegative")
        self._geom_cache = None
        self._stiff_cache = None
        self._load_cache = None
        self._locator = None

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    # -- element geometry ------------------------------------------------

    def _geometry(self):
        if self._geom_cache is None:
            t = self.triangles
            r = self.nodes[:, 0][t]  # (Nt, 3)
            z = self.nodes[:, 1][t]
            b = np.stack([z[:, 1] - z[:, 2], z[:, 2] - z[:, 0], z[:, 0] - z[:, 1]], axis=1)
            c = np.stack([r[:, 2] - r[:, 1], r[:, 0] - r[:, 2], r[:, 1] - r[:, 0]], axis=1)
            area = 0.5 * (b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0])
            if np.any(area <= 0):
                raise ValueError("mesh contains non-positively-oriented triangles")
            rbar = r.mean(axis=1)
            self._geom_cache = (b, c, area, rbar)
        return self._geom_cache

    def region_stiffness(self):
        """Unit-admittivity stiffness matrix per region tag (CSR)."""
        if self._stiff_cache is None:
            b, c, area, rbar = self._geometry()
            t = self.triangles
            n = self.n_nodes
            mats = {}
            for tag in np.unique(self.region):
                sel = self.region == tag
                bs, cs, ar, rb = b[sel], c[sel], area[sel], rbar[sel]
                coef = 2.0 * np.pi * rb / (4.0 * ar)  # sigma factored out
                ke = coef[:, None, None] * (
                    bs[:, :, None] * bs[:, None, :] + cs[:, :, None] * cs[:, None, :]
                )
                rows = np.repeat(t[sel], 3, axis=1).ravel()
                cols = np.tile(t[sel], (1, 3)).ravel()
                mats[int(tag)] = sp.csr_matrix(
                    (ke.ravel(), (rows, cols)), shape=(n, n)
                )
            self._stiff_cache = mats
        return self._stiff_cache

    def load_vector(self) -> np.ndarray:
        """Consistent nodal loads for exactly 1 A through the driven contact.

        The raw edge integrals assume a uniform current density; they are
        rescaled so the total injected current is exactly one.
        """
        if self._load_cache is None:
            f = np.zeros(self.n_nodes)
            for n1, n2 in self.injection_edges:
                r1, z1 = self.nodes[n1]
                r2, z2 = self.nodes[n2]
                length = math.hypot(r2 - r1, z2 - z1)
                # int N_i r ds over the edge, linear shape functions
                f[n1] += 2.0 * np.pi * length * (2.0 * r1 + r2) / 6.0
                f[n2] += 2.0 * np.pi * length * (r1 + 2.0 * r2) / 6.0
            total = f.sum()
            if total <= 0:
                raise NumericalError("driven contact has vanishing surface")
            self._load_cache = f / total
        return self._load_cache

    def interpolation_matrix(self, points) -> sp.csr_matrix:
        """Sparse barycentric-interpolation operator for the given points."""
        pts = np.asarray(points, dtype=float)
        loc = self._get_locator()
        rows, cols, vals = [], [], []
        for i, p in enumerate(pts):
            tri, lam = loc.locate(p)
            rows.extend([i, i, i])
            cols.extend(self.triangles[tri])
            vals.extend(lam)
        return sp.csr_matrix((vals, (rows, cols)), shape=(len(pts), self.n_nodes))

    def _get_locator(self):
        if self._locator is None:
            self._locator = _TriangleLocator(self)
        return self._locator

    def to_csv(self, nodes_path, triangles_path) -> None:
        """Dump nodes and triangles (with region tags) for external viewing."""
        np.savetxt(nodes_path, self.nodes, delimiter=",", header="r,z", comments="", fmt="%.17g")
        tri = np.column_stack([self.triangles, self.region])
        np.savetxt(triangles_path, tri, delimiter=",", header="n1,n2,n3,region", comments="", fmt="%d")


class PointOutsideMeshError(ValueError):
    pass


class _TriangleLocator:
    """Uniform background grid over triangle bounding boxes."""

    def __init__(self, mesh: Mesh, tol: float = 1e-9):
        self.mesh = mesh
        self.tol = tol
        pts = mesh.nodes
        self.lo = pts.min(axis=0)
        self.hi = pts.max(axis=0)
        n = max(8, int(math.sqrt(mesh.n_triangles)))
        self.shape = (n, n)
        self.cell = (self.hi - self.lo) / n
        self.cell[self.cell == 0] = 1.0
        buckets: dict[tuple[int, int], list[int]] = {}
        t = mesh.triangles
        for k in range(mesh.n_triangles):
            tri_pts = pts[t[k]]
            i0, j0 = self._cell_of(tri_pts.min(axis=0))
            i1, j1 = self._cell_of(tri_pts.max(axis=0))
            for i in range(i0, i1 + 1):
                for j in range(j0, j1 + 1):
                    buckets.setdefault((i, j), []).append(k)
        self.buckets = buckets

    def _cell_of(self, p):
        ij = np.floor((p - self.lo) / self.cell).astype(int)
        return (
            int(np.clip(ij[0], 0, self.shape[0] - 1)),
            int(np.clip(ij[1], 0, self.shape[1] - 1)),
        )

    def locate(self, p):
        key = self._cell_of(p)
        nodes = self.mesh.nodes
        tris = self.mesh.triangles
        for k in self.buckets.get(key, ()):
            lam = _barycentric(nodes[tris[k]], p)
            if lam is not None and lam.min() >= -self.tol:
                return k, np.clip(lam, 0.0, 1.0)
        # fall back to a full scan (points near cell borders)
        for k in range(self.mesh.n_triangles):
            lam = _barycentric(nodes[tris[k]], p)
            if lam is not None and lam.min() >= -self.tol:
                return k, np.clip(lam, 0.0, 1.0)
        raise PointOutsideMeshError(f"point {tuple(p)} lies outside the mesh")


def _barycentric(tri_pts, p):
    (x1, y1), (x2, y2), (x3, y3) = tri_pts
    det = (y2 - y3) * (x1 - x3) + (x3 - x2) * (y1 - y3)
    if det == 0:
        return None
    l1 = ((y2 - y3) * (p[0] - x3) + (x3 - x2) * (p[1] - y3)) / det
    l2 = ((y3 - y1) * (p[0] - x3) + (x1 - x3) * (p[1] - y3)) / det
    return np.array([l1, l2, 1.0 - l1 - l2])


# -- graded line construction ---------------------------------------------


def _march(x0: float, x1: float, h0: float, h1: float) -> np.ndarray:
    """Points spanning [x0, x1] with sizes blending h0 -> h1 geometrically."""
    length = x1 - x0
    if length <= 0:
        raise ValueError("empty segment")
    if length <= 1.05 * min(h0, h1):
        return np.array([x0, x1])
    xs = [0.0]
    x = 0.0
    while x < length:
        h = h0 * (h1 / h0) ** (x / length)
        x += h
        xs.append(x)
    xs = np.asarray(xs)
    xs *= length / xs[-1]
    return x0 + xs


def _uniform(x0: float, x1: float, h: float) -> np.ndarray:
    n = max(1, int(round((x1 - x0) / h)))
    return np.linspace(x0, x1, n + 1)


def _merge_lines(segments) -> np.ndarray:
    pts = np.concatenate(segments)
    pts = np.unique(pts)
    keep = [pts[0]]
    for x in pts[1:]:
        if x - keep[-1] > 1e-12 * max(abs(x), 1.0):
            keep.append(x)
    return np.asarray(keep)


def build_mesh(geom: ElectrodeGeometry, target_elements: int = 27000) -> Mesh:
    """Graded structured triangulation of the tissue annulus.

    Refined toward the active contact; the encapsulation sheath keeps at
    least three element layers.  The element count lands within +-20% of
    the target (the grading scale is iterated to get there).
    """
    if target_elements < 50:
        raise ValueError("target_elements too small for this geometry")
    scale = 1.0
    for _ in range(12):
        r_lines, z_lines = _grid_lines(geom, scale)
        count = 2 * (len(r_lines) - 1) * (len(z_lines) - 1)
        ratio = count / target_elements
        if 0.8 <= ratio <= 1.2:
            break
        scale *= math.sqrt(ratio)
    else:
        raise NumericalError(f"mesh grading did not reach the target count (got {count})")
    return _tensor_mesh(geom, r_lines, z_lines)


def _grid_lines(geom: ElectrodeGeometry, scale: float):
    a = geom.lead_radius
    t_enc = geom.encapsulation_thickness
    h_fine = scale * geom.contact_height / 10.0
    h_med = 2.0 * h_fine
    h_far = geom.domain_radius / 6.0
    if t_enc / 3.0 < 1e-9:
        raise ValueError("encapsulation layer thinner than the minimum element size")

    n_enc = max(3, int(round(t_enc / h_fine)))
    r_enc = np.linspace(a, a + t_enc, n_enc + 1)
    r_out = _march(a + t_enc, geom.domain_radius, h_fine, h_far)
    r_lines = _merge_lines([r_enc, r_out])

    lo_act, hi_act = geom.contact_z_interval(geom.active_contact_index)
    pad = 2.0 * geom.contact_height
    breaks = [0.0]
    z0 = 0.5 * (geom.domain_height - geom.array_span)
    breaks.append(z0 - pad)
    for i in range(1, geom.n_contacts + 1):
        lo, hi = geom.contact_z_interval(i)
        breaks.extend([lo, hi])
    breaks.append(z0 + geom.array_span + pad)
    breaks.append(geom.domain_height)
    segs = []
    for x0, x1 in zip(breaks[:-1], breaks[1:]):
        if x1 - x0 <= 0:
            continue
        near_active = (x0 >= lo_act - pad - 1e-12) and (x1 <= hi_act + pad + 1e-12)
        if x0 == 0.0:
            segs.append(_march(x0, x1, h_far, h_med))
        elif x1 == geom.domain_height:
            segs.append(_march(x0, x1, h_med, h_far))
        else:
            segs.append(_uniform(x0, x1, h_fine if near_active else h_med))
    z_lines = _merge_lines(segs)
    return r_lines, z_lines


def _tensor_mesh(geom: ElectrodeGeometry, r_lines, z_lines) -> Mesh:
    nr, nz = len(r_lines), len(z_lines)
    rr, zz = np.meshgrid(r_lines, z_lines, indexing="ij")
    nodes = np.column_stack([rr.ravel(), zz.ravel()])

    def nid(ir, iz):
        return ir * nz + iz

    tris = []
    regions = []
    enc_limit = geom.lead_radius + geom.encapsulation_thickness
    for ir in range(nr - 1):
        for iz in range(nz - 1):
            a_, b_, c_, d_ = nid(ir, iz), nid(ir + 1, iz), nid(ir + 1, iz + 1), nid(ir, iz + 1)
            tris.append((a_, b_, c_))
            tris.append((a_, c_, d_))
            tag = ENCAPSULATION if 0.5 * (r_lines[ir] + r_lines[ir + 1]) < enc_limit else TISSUE
            regions.extend([tag, tag])
    tris = np.asarray(tris, dtype=np.int64)
    regions = np.asarray(regions, dtype=np.int8)

    dirichlet = np.zeros(nr * nz, dtype=bool)
    for iz in range(nz):
        dirichlet[nid(nr - 1, iz)] = True
    for ir in range(nr):
        dirichlet[nid(ir, 0)] = True
        dirichlet[nid(ir, nz - 1)] = True

    lo, hi = geom.contact_z_interval(geom.active_contact_index)
    edges = []
    for iz in range(nz - 1):
        if z_lines[iz] >= lo - 1e-12 and z_lines[iz + 1] <= hi + 1e-12:
            edges.append((nid(0, iz), nid(0, iz + 1)))
    if not edges:
        raise NumericalError("active contact is not resolved by the mesh")
    return Mesh(nodes, tris, regions, dirichlet, np.asarray(edges))


def build_spherical_shell_mesh(inner_radius: float, outer_radius: float,
                               target_elements: int = 10000) -> Mesh:
    """Polar shell mesh around a ball electrode (validation configuration).

    Radii grow geometrically from the electrode surface to the grounded
    outer sphere; unit current is injected uniformly over the inner sphere.
    """
    if not 0 < inner_radius < outer_radius:
        raise ValueError("need 0 < inner_radius < outer_radius")
    lnratio = math.log(outer_radius / inner_radius)
    n_pol = max(8, int(round(math.sqrt(target_elements * math.pi / (2.0 * lnratio)))))
    n_rad = max(8, int(round(n_pol * lnratio / math.pi)))
    rho = inner_radius * (outer_radius / inner_radius) ** (np.arange(n_rad + 1) / n_rad)
    theta = np.linspace(0.0, np.pi, n_pol + 1)

    def nid(i, j):
        return i * (n_pol + 1) + j

    nodes = np.empty(((n_rad + 1) * (n_pol + 1), 2))
    for i in range(n_rad + 1):
        nodes[i * (n_pol + 1):(i + 1) * (n_pol + 1), 0] = rho[i] * np.sin(theta)
        nodes[i * (n_pol + 1):(i + 1) * (n_pol + 1), 1] = rho[i] * np.cos(theta)
    nodes[:, 0] = np.maximum(nodes[:, 0], 0.0)

    tris = []
    for i in range(n_rad):
        for j in range(n_pol):
            a_, b_, c_, d_ = nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)
            tris.append((a_, b_, c_))
            tris.append((a_, c_, d_))
    tris = np.asarray(tris, dtype=np.int64)
    tris = _orient_ccw(nodes, tris)
    regions = np.full(len(tris), TISSUE, dtype=np.int8)

    dirichlet = np.zeros(len(nodes), dtype=bool)
    for j in range(n_pol + 1):
        dirichlet[nid(n_rad, j)] = True
    edges = np.asarray([(nid(0, j), nid(0, j + 1)) for j in range(n_pol)], dtype=np.int64)
    return Mesh(nodes, tris, regions, dirichlet, edges)


def _orient_ccw(nodes, tris):
    p = nodes[tris]
    area2 = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (
        p[:, 2, 0] - p[:, 0, 0]
    ) * (p[:, 1, 1] - p[:, 0, 1])
    flip = area2 < 0
    tris = tris.copy()
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return tris


# -- solving ----------------------------------------------------------------


@dataclass(frozen=True)
class FieldSolution:
    """Complex nodal potential for exactly 1 A of injected current."""

    omega: float
    phi: np.ndarray


def assemble_solve(mesh: Mesh, sigma_enc: complex, sigma_tissue: complex,
                   omega: float = 0.0) -> FieldSolution:
    """Solve the admittivity-weighted Laplace problem on the mesh.

    The active contact carries a uniform inward current density normalized
    to 1 A total; remaining electrode surfaces are insulating (natural);
    the outer boundary is grounded.  Raises NumericalError if the direct
    solve does not reach a relative residual of 1e-10.
    """
    if sigma_enc.real <= 0 or sigma_tissue.real <= 0:
        raise ValueError("admittivity must have a positive real part")
    mats = mesh.region_stiffness()
    sigma = {ENCAPSULATION: complex(sigma_enc), TISSUE: complex(sigma_tissue)}
    is_real = all(s.imag == 0.0 for s in sigma.values())
    k = None
    for tag, mat in mats.items():
        term = (sigma[tag].real if is_real else sigma[tag]) * mat
        k = term if k is None else k + term
    f = mesh.load_vector()
    free = ~mesh.dirichlet
    kff = k[free][:, free].tocsc()
    ff = f[free]
    try:
        xf = spla.spsolve(kff, ff)
    except RuntimeError as exc:  # pragma: no cover - singular factorization
        raise NumericalError(f"direct solve failed: {exc}") from exc
    resid = np.linalg.norm(kff @ xf - ff)
    ref = np.linalg.norm(ff)
    if not np.isfinite(resid) or resid > 1e-10 * ref:
        xf = xf + spla.spsolve(kff, ff - kff @ xf)
        resid = np.linalg.norm(kff @ xf - ff)
        if not np.isfinite(resid) or resid > 1e-10 * ref:
            raise NumericalError(
                f"solver residual {resid:.3e} exceeds 1e-10 * ||rhs||; "
                "check boundary conditions and admittivity"
            )
    phi = np.zeros(mesh.n_nodes, dtype=complex)
    phi[free] = xf
    return FieldSolution(omega=omega, phi=phi)


def point_source_potential(sigma: complex, r) -> complex | np.ndarray:
    """Potential of a unit point current source in an unbounded medium."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("distance must be positive")
    if sigma == 0:
        raise ValueError("sigma must be nonzero")
    out = 1.0 / (4.0 * np.pi * sigma * r)
    return out if out.ndim else complex(out)


def eval_at_points(sol: FieldSolution, mesh: Mesh, points) -> np.ndarray:
    """Barycentric interpolation of the solution at interior points."""
    w = mesh.interpolation_matrix(points)
    return w @ sol.phi


def dissipated_power(mesh: Mesh, sol: FieldSolution, sigma_enc: complex,
                     sigma_tissue: complex) -> complex:
    """Volume integral sigma * |grad phi|^2, element by element."""
    b, c, area, rbar = mesh._geometry()
    t = mesh.triangles
    phi = sol.phi[t]
    gx = (phi * b).sum(axis=1) / (2.0 * area)
    gy = (phi * c).sum(axis=1) / (2.0 * area)
    dens = np.abs(gx) ** 2 + np.abs(gy) ** 2
    sig = np.where(mesh.region == ENCAPSULATION, sigma_enc, sigma_tissue)
    return complex((sig * dens * 2.0 * np.pi * rbar * area).sum())


def contact_mean_potential(mesh: Mesh, sol: FieldSolution) -> complex:
    """Load-weighted mean potential on the driven contact."""
    f = mesh.load_vector()
    return complex(f @ sol.phi)

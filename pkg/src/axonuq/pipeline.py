"""Study orchestration: configuration, collocation runs, reports.

A study is driven by one JSON config document with a section per stage.
The flow per collocation node: map the node to a conductivity realization,
sweep the volume conductor, reconstruct the periodic extracellular
potential at every compartment once (unit stimulus amplitude), then find
each axon's activation threshold by scaling that response (the field
problem is linear in the stimulus).  Node thresholds are combined into
mean and standard deviation by the sparse-grid weights.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy

from . import __version__, axon, ffem, klreduce, sparsegrid
from .dispersion import (ColeColeParams, RandomParamBox, conductivity,
                         relative_permittivity)
from .errors import ConfigError, NumericalError
from .rootfind import brent
from .volumeconductor import ElectrodeGeometry, build_mesh

log = logging.getLogger(__name__)

RESULT_FORMAT_VERSION = 1

DEFAULT_CONFIG = {
    "material": {
        # flat ordering: eps_inf, kappa_i, then (delta_eps, tau, alpha) per term
        "mean": [4.0, 0.02, 45.0, 7.96e-12, 0.1, 400.0, 15.92e-9, 0.15,
                 2.0e5, 106.10e-6, 0.22, 4.5e7, 5.31e-3, 0.0],
        "rel_halfwidth": 0.10,
    },
    "kl": {
        "f_min_hz": 130.0,
        "f_max_hz": 5.0e5,
        "log10_step": 0.004,
        "samples": 1000,
        "seed": 7,
        "rank": 4,
    },
    "quadrature": {
        "level": 3,
        # affine map from [-1,1] abscissas to unit-variance uniform coordinates
        "coordinate_scale": 1.7320508075688772,
    },
    "geometry": {
        "lead_radius_m": 0.635e-3,
        "contact_height_m": 1.5e-3,
        "contact_gap_m": 1.5e-3,
        "n_contacts": 4,
        "active_contact_index": 2,
        "encapsulation_thickness_m": 0.2e-3,
        "domain_radius_m": 50e-3,
        "domain_height_m": 100e-3,
    },
    "mesh": {"target_elements": 27000},
    "sweep": {
        "n_frequencies": 3846,
        "f_min_hz": 130.0,
        "f_max_hz": 5.0e5,
        "encapsulation_kappa_scale": 1.0,
    },
    "stimulus": {
        "pulse_width_s": 60e-6,
        "period_s": 1.0 / 130.0,
        # 3072 makes the implicit cable step ~2.5 us; activation thresholds
        # then move <2% under further step halving (768 matches a 10 us step
        # but is first-order-noticeably coarser)
        "samples_per_period": 3072,
    },
    "axons": {
        "distances_mm": [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0],
        "fiber_diameter_um": 10.0,
        "n_nodes": 21,
        "internode_compartments": 10,
        "node_spacing_mm": 0.5,
    },
    "membrane": {
        "g_na": 1200.0,
        "g_k": 360.0,
        "g_leak": 3.0,
        "e_na": 0.115,
        "e_k": -0.012,
        "e_leak": None,
        "c_node": 0.01,
        "c_internode": 5e-5,
        "g_internode": 1e-3,
        "axial_resistivity": 0.7,
        "node_length_m": 2.5e-6,
        "core_diameter_ratio": 0.6,
        "rate_scale": 1.0,
        "resting_potential_v": -80e-3,
    },
    "threshold": {
        "tol_a": 1e-5,
        "bracket_lo_a": 1e-5,
        "bracket_cap_a": 10.0,
        "scan_factor": 2.0,
        "n_periods": 2,
    },
    "run": {
        "threads": 0,  # 0 = all cores; env AXONUQ_THREADS as fallback
        "on_unreachable": "abort",  # or "exclude"
    },
}


# -- configuration -----------------------------------------------------------


def _merge(defaults, override, path=""):
    out = dict(defaults)
    for key, value in override.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config section {path + key!r} must be an object")
            out[key] = _merge(defaults[key], value, path + key + ".")
        else:
            out[key] = value
    return out


def load_config(path=None) -> dict:
    """Resolved config: file contents merged over the defaults."""
    if path is None:
        return json.loads(json.dumps(DEFAULT_CONFIG))
    try:
        with open(path) as fh:
            user = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(user, dict):
        raise ConfigError("config root must be a JSON object")
    return _merge(DEFAULT_CONFIG, user)


def config_hash(cfg: dict) -> str:
    """Stable hash of the canonicalized config document."""
    text = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def mean_params(cfg) -> ColeColeParams:
    return ColeColeParams.from_flat(cfg["material"]["mean"])


def material_box(cfg) -> RandomParamBox:
    return RandomParamBox(mean=mean_params(cfg),
                          rel_halfwidth=cfg["material"]["rel_halfwidth"])


def electrode_geometry(cfg) -> ElectrodeGeometry:
    g = cfg["geometry"]
    return ElectrodeGeometry(
        lead_radius=g["lead_radius_m"],
        contact_height=g["contact_height_m"],
        contact_gap=g["contact_gap_m"],
        n_contacts=g["n_contacts"],
        active_contact_index=g["active_contact_index"],
        encapsulation_thickness=g["encapsulation_thickness_m"],
        domain_radius=g["domain_radius_m"],
        domain_height=g["domain_height_m"],
    )


def membrane_constants(cfg) -> axon.MembraneConstants:
    m = cfg["membrane"]
    return axon.MembraneConstants(
        g_na=m["g_na"], g_k=m["g_k"], g_leak=m["g_leak"],
        e_na=m["e_na"], e_k=m["e_k"], e_leak=m["e_leak"],
        c_node=m["c_node"], c_internode=m["c_internode"],
        g_internode=m["g_internode"],
        axial_resistivity=m["axial_resistivity"],
        node_length=m["node_length_m"],
        core_diameter_ratio=m["core_diameter_ratio"],
        rate_scale=m["rate_scale"],
        resting_potential=m["resting_potential_v"],
    )


def build_kl_model(cfg, seed=None) -> klreduce.KLModel:
    """KL model of the random conductivity per the config kl section."""
    k = cfg["kl"]
    grid = klreduce.build_grid(2 * np.pi * k["f_min_hz"], 2 * np.pi * k["f_max_hz"],
                               k["log10_step"])
    ens = klreduce.sample_ensemble(material_box(cfg), grid, k["samples"],
                                   k["seed"] if seed is None else seed)
    mean, cov = klreduce.sample_covariance(ens)
    eig = klreduce.symmetric_eig(cov)
    return klreduce.truncate(eig, grid, mean, k["rank"])


def build_axons(cfg) -> list[axon.CableSystem]:
    a = cfg["axons"]
    consts = membrane_constants(cfg)
    systems = []
    last = 0.0
    for d_mm in a["distances_mm"]:
        if d_mm * 1e-3 <= last:
            raise ConfigError("axon distances must be strictly increasing")
        last = d_mm * 1e-3
        geom = axon.AxonGeometry(
            distance=d_mm * 1e-3,
            n_nodes=a["n_nodes"],
            internode_compartments=a["internode_compartments"],
            node_spacing=a["node_spacing_mm"] * 1e-3,
        )
        systems.append(axon.build_axon(geom, a["fiber_diameter_um"] * 1e-6, consts))
    return systems


def stimulus_pulse(cfg) -> ffem.StimulusPulse:
    s = cfg["stimulus"]
    return ffem.StimulusPulse(amplitude=1.0, pulse_width=s["pulse_width_s"],
                              period=s["period_s"])


# -- threshold search --------------------------------------------------------


class UnreachableAxonError(NumericalError):
    """No activation below the bracket cap."""


@dataclass(frozen=True)
class ThresholdResult:
    current: float
    evaluations: int


def activation_threshold(unit_response: np.ndarray, cable: axon.CableSystem,
                         dt: float, tol_a: float = 1e-5,
                         bracket_lo: float = 1e-5, bracket_cap: float = 10.0,
                         scan_factor: float = 2.0, n_periods: int = 2,
                         hint: tuple[float, float] | None = None) -> ThresholdResult:
    """Minimal stimulus amplitude [A] that fires the axon.

    unit_response is the periodic extracellular potential per compartment
    for unit stimulus amplitude; amplitudes only rescale it (linearity of
    the field problem).  The metric I -> peak inner potential is negative
    below threshold and positive in the activation window; because very
    strong stimuli can block propagation again, the search walks upward
    geometrically from bracket_lo to the FIRST sign change and refines it
    with Brent to tol_a.
    """
    evals = 0
    tiled = axon.tile_periods(unit_response, n_periods)

    def metric(current: float) -> float:
        nonlocal evals
        evals += 1
        res = axon.run_tiled(cable, tiled, dt, drive_scale=current)
        return axon.activation_metric(res.trace)

    if hint is not None:
        lo, hi = hint
        if 0 < lo < hi and metric(lo) < 0 < metric(hi):
            r = brent(metric, lo, hi, tol_a)
            return ThresholdResult(current=r.root, evaluations=evals)

    lo = bracket_lo
    f_lo = metric(lo)
    if f_lo > 0:
        raise NumericalError(
            f"axon fires already at the minimal bracket amplitude {lo} A"
        )
    if f_lo == 0.0:
        return ThresholdResult(current=lo, evaluations=evals)
    hi = lo
    while True:
        hi *= scan_factor
        if hi > bracket_cap * (1 + 1e-12):
            raise UnreachableAxonError(
                f"no activation up to {bracket_cap} A (distance "
                f"{cable.geometry.distance * 1e3:.3g} mm)"
            )
        f_hi = metric(min(hi, bracket_cap))
        if f_hi > 0:
            break
        lo = hi
    r = brent(metric, lo, min(hi, bracket_cap), tol_a)
    return ThresholdResult(current=r.root, evaluations=evals)


# -- collocation study -------------------------------------------------------


@dataclass
class CollocationPlan:
    config: dict
    kl_model: klreduce.KLModel
    rule: sparsegrid.SparseGridRule

    def __post_init__(self):
        if self.rule.dim != self.kl_model.rank:
            raise ConfigError("quadrature dimension must equal the KL rank")


def build_plan(cfg, seed=None) -> CollocationPlan:
    model = build_kl_model(cfg, seed=seed)
    rule = sparsegrid.smolyak(model.rank, cfg["quadrature"]["level"])
    return CollocationPlan(config=cfg, kl_model=model, rule=rule)


@dataclass
class UQResult:
    """Per-axon threshold statistics plus full nodal data and provenance."""

    distances_m: np.ndarray
    thresholds: np.ndarray  # (K, n_axons) [A]
    mean_a: np.ndarray
    std_a: np.ndarray
    weights: np.ndarray
    coordinates: np.ndarray  # (K, M) KL coordinates of each node
    config_hash: str
    seed: int
    rule_dim: int
    rule_level: int
    versions: dict
    excluded_nodes: list

    def save(self, path) -> None:
        doc = {
            "format_version": RESULT_FORMAT_VERSION,
            "distances_m": _flist(self.distances_m),
            "thresholds_a": [_flist(row) for row in self.thresholds],
            "mean_a": _flist(self.mean_a),
            "std_a": _flist(self.std_a),
            "weights": _flist(self.weights),
            "coordinates": [_flist(row) for row in self.coordinates],
            "config_hash": self.config_hash,
            "seed": self.seed,
            "rule_dim": self.rule_dim,
            "rule_level": self.rule_level,
            "versions": self.versions,
            "excluded_nodes": self.excluded_nodes,
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "UQResult":
        with open(path) as fh:
            doc = json.load(fh)
        if doc.get("format_version") != RESULT_FORMAT_VERSION:
            raise ConfigError("unsupported result file version")
        return cls(
            distances_m=np.array(doc["distances_m"]),
            thresholds=np.array(doc["thresholds_a"]),
            mean_a=np.array(doc["mean_a"]),
            std_a=np.array(doc["std_a"]),
            weights=np.array(doc["weights"]),
            coordinates=np.array(doc["coordinates"]),
            config_hash=doc["config_hash"],
            seed=doc["seed"],
            rule_dim=doc["rule_dim"],
            rule_level=doc["rule_level"],
            versions=doc["versions"],
            excluded_nodes=doc["excluded_nodes"],
        )


def _flist(arr):
    return [float(f"{float(x):.17g}") for x in np.asarray(arr).ravel()]


class _NodeSolver:
    """Everything fixed across collocation nodes: mesh, points, spectrum."""

    def __init__(self, cfg, kl_model: klreduce.KLModel):
        self.cfg = cfg
        self.kl_model = kl_model
        geom = electrode_geometry(cfg)
        self.mesh = build_mesh(geom, cfg["mesh"]["target_elements"])
        self.systems = build_axons(cfg)
        zc = geom.active_contact_center_z
        self.points = np.vstack([axon.compartment_points(s, zc) for s in self.systems])
        self.mesh.interpolation_matrix(self.points)  # warm the locator
        sw = cfg["sweep"]
        self.omega_nodes = ffem.frequency_nodes(sw["f_min_hz"], sw["f_max_hz"],
                                                sw["n_frequencies"])
        self.enc_scale = sw["encapsulation_kappa_scale"]
        pulse = stimulus_pulse(cfg)
        nt = cfg["stimulus"]["samples_per_period"]
        self.spectrum = ffem.stimulus_spectrum(pulse, nt)
        self.dt = pulse.period / nt
        mp = mean_params(cfg)
        self.eps_r = lambda w: float(relative_permittivity(mp, w))
        self.coordinate_scale = cfg["quadrature"]["coordinate_scale"]
        self.thr = cfg["threshold"]

    def unit_response(self, y: np.ndarray) -> ffem.TimeSignal:
        kappa_vals = self.kl_model.realize(y)
        if np.any(kappa_vals <= 0):
            raise NumericalError("conductivity realization is not positive")
        curve = klreduce.ConductivityCurve(self.kl_model.grid, kappa_vals)
        tf = ffem.sweep(self.mesh, curve, self.eps_r, self.omega_nodes,
                        self.points, enc_kappa_scale=self.enc_scale)
        return ffem.reconstruct_time(tf, self.spectrum)

    def node_thresholds(self, x: np.ndarray, hints=None) -> np.ndarray:
        """Thresholds of all axons at abscissa vector x in [-1, 1]^M."""
        y = self.coordinate_scale * np.asarray(x, dtype=float)
        sig = self.unit_response(y)
        out = np.empty(len(self.systems))
        nc = self.systems[0].n_compartments
        for i, cable in enumerate(self.systems):
            unit = sig.values[i * nc:(i + 1) * nc]
            res = activation_threshold(
                unit, cable, self.dt,
                tol_a=self.thr["tol_a"],
                bracket_lo=self.thr["bracket_lo_a"],
                bracket_cap=self.thr["bracket_cap_a"],
                scan_factor=self.thr["scan_factor"],
                n_periods=self.thr["n_periods"],
                hint=None if hints is None else hints[i],
            )
            out[i] = res.current
        return out


_WORKER: _NodeSolver | None = None
_WORKER_HINTS = None


def _worker_init(cfg_json: str, kl_json_path: str, hints):
    global _WORKER, _WORKER_HINTS
    cfg = json.loads(cfg_json)
    model = klreduce.KLModel.load(kl_json_path)
    _WORKER = _NodeSolver(cfg, model)
    _WORKER_HINTS = hints


def _worker_run(args):
    k, x = args
    try:
        return k, _WORKER.node_thresholds(np.asarray(x), hints=_WORKER_HINTS), None
    except UnreachableAxonError as exc:
        return k, None, ("unreachable", str(exc))
    except (NumericalError, ArithmeticError) as exc:
        return k, None, ("numerical", str(exc))


def resolve_threads(cfg, cli_threads=None) -> int:
    if cli_threads is not None:
        return max(1, int(cli_threads))
    env = os.environ.get("AXONUQ_THREADS")
    if env:
        return max(1, int(env))
    cfgval = int(cfg["run"]["threads"])
    if cfgval > 0:
        return cfgval
    return os.cpu_count() or 1


def run_collocation(plan: CollocationPlan, threads: int = 1,
                    workdir: str | None = None) -> UQResult:
    """Execute the full study over all sparse-grid nodes.

    Nodes run independently (process pool when threads > 1); results are
    assembled in node order, so the output does not depend on the worker
    count.  Node failures follow the run.on_unreachable policy: "abort"
    (default) raises, "exclude" drops the node and renormalizes weights.
    """
    cfg = plan.config
    rule = plan.rule
    scale = cfg["quadrature"]["coordinate_scale"]
    solver = _NodeSolver(cfg, plan.kl_model)

    # one deterministic bracket hint from the center node, shared by all nodes
    center = int(np.argmin(np.abs(rule.points).sum(axis=1)))
    center_thr = solver.node_thresholds(rule.points[center])
    hints = [(t / 4.0, min(t * 4.0, cfg["threshold"]["bracket_cap_a"]))
             for t in center_thr]
    log.info("center-node thresholds [mA]: %s",
             np.array2string(center_thr * 1e3, precision=3))

    results: dict[int, np.ndarray] = {center: center_thr}
    failures: list[tuple[int, str, str]] = []
    todo = [(k, rule.points[k].tolist()) for k in range(rule.n_points) if k != center]

    if threads <= 1:
        for k, x in todo:
            try:
                results[k] = solver.node_thresholds(np.asarray(x), hints=hints)
            except UnreachableAxonError as exc:
                failures.append((k, "unreachable", str(exc)))
            except (NumericalError, ArithmeticError) as exc:
                failures.append((k, "numerical", str(exc)))
            log.debug("node %d/%d done", len(results), rule.n_points)
    else:
        import tempfile

        kl_path = os.path.join(workdir or tempfile.gettempdir(),
                               f"axonuq_kl_{os.getpid()}.json")
        plan.kl_model.save(kl_path)
        try:
            cfg_json = json.dumps(cfg)
            with ProcessPoolExecutor(
                max_workers=threads,
                initializer=_worker_init,
                initargs=(cfg_json, kl_path, hints),
            ) as pool:
                for k, thr, err in pool.map(_worker_run, todo, chunksize=1):
                    if err is None:
                        results[k] = thr
                    else:
                        failures.append((k, err[0], err[1]))
        finally:
            if os.path.exists(kl_path):
                os.unlink(kl_path)

    policy = cfg["run"]["on_unreachable"]
    excluded = []
    if failures:
        failures.sort()
        msg = "; ".join(f"node {k} [{kind}] {text}" for k, kind, text in failures)
        numerical = [f for f in failures if f[1] == "numerical"]
        if policy != "exclude" or numerical:
            raise NumericalError(f"collocation failed: {msg}")
        excluded = [k for k, _, _ in failures]
        log.warning("excluding unreachable nodes: %s", excluded)

    keep = np.array([k for k in range(rule.n_points) if k not in set(excluded)])
    weights = rule.weights[keep]
    weights = weights / weights.sum()
    thresholds = np.vstack([results[k] for k in keep])

    n_axons = thresholds.shape[1]
    mean_a = np.empty(n_axons)
    std_a = np.empty(n_axons)
    sub_rule = sparsegrid.SparseGridRule(dim=rule.dim, level=rule.level,
                                         points=rule.points[keep], weights=weights)
    for i in range(n_axons):
        m, v = sparsegrid.moments(sub_rule, thresholds[:, i])
        mean_a[i] = m
        std_a[i] = np.sqrt(v)

    return UQResult(
        distances_m=np.array([s.geometry.distance for s in solver.systems]),
        thresholds=thresholds,
        mean_a=mean_a,
        std_a=std_a,
        weights=weights,
        coordinates=scale * rule.points[keep],
        config_hash=config_hash(cfg),
        seed=int(cfg["kl"]["seed"]),
        rule_dim=rule.dim,
        rule_level=rule.level,
        versions={
            "axonuq": __version__,
            "python": "%d.%d.%d" % sys.version_info[:3],
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        excluded_nodes=excluded,
    )


# -- surrogate forward model -------------------------------------------------


def point_source_surrogate(kl_model: klreduce.KLModel, y: np.ndarray,
                           distance: float, v_threshold: float = 0.08) -> float:
    """Analytic stand-in for the full forward model.

    Threshold current of a point source at the given distance when the
    potential magnitude must reach v_threshold, with an effective
    conductivity formed as the geometric mean of the realization across the
    band.  Nonlinear in the coordinates, cheap, and deterministic; used to
    cross-check quadrature moments against Monte-Carlo sampling.
    """
    kappa_vals = kl_model.realize(np.asarray(y, dtype=float))
    if np.any(kappa_vals <= 0):
        raise NumericalError("surrogate conductivity realization not positive")
    idx = np.linspace(0, kl_model.grid.n - 1, 7).astype(int)
    kappa_eff = float(np.exp(np.mean(np.log(kappa_vals[idx]))))
    return 4.0 * np.pi * distance * kappa_eff * v_threshold


# -- reports -----------------------------------------------------------------


def write_report(result: UQResult, outdir, thresholds_matrix: bool = True) -> list[str]:
    """Emit the summary CSV, the run manifest, and the nodal matrix.

    Files carry no timestamps, so regenerating from the same result is
    byte-identical.
    """
    os.makedirs(outdir, exist_ok=True)
    written = []

    table = os.path.join(outdir, "activation_table.csv")
    with open(table, "w") as fh:
        fh.write("axon,distance_mm,mean_mA,std_mA\n")
        for i, d in enumerate(result.distances_m):
            fh.write(f"{i + 1},{d * 1e3:.6g},{result.mean_a[i] * 1e3:.9g},"
                     f"{result.std_a[i] * 1e3:.9g}\n")
    written.append(table)

    manifest = os.path.join(outdir, "manifest.json")
    with open(manifest, "w") as fh:
        json.dump(
            {
                "config_hash": result.config_hash,
                "seed": result.seed,
                "rule": {"dim": result.rule_dim, "level": result.rule_level,
                         "n_points": int(result.weights.size)},
                "versions": result.versions,
                "excluded_nodes": result.excluded_nodes,
            },
            fh, sort_keys=True, indent=2,
        )
        fh.write("\n")
    written.append(manifest)

    if thresholds_matrix:
        matrix = os.path.join(outdir, "node_thresholds.csv")
        m = result.coordinates.shape[1]
        with open(matrix, "w") as fh:
            head = ",".join([f"y{j + 1}" for j in range(m)])
            axes = ",".join([f"thr_axon{i + 1}_A" for i in range(len(result.distances_m))])
            fh.write(f"node,weight,{head},{axes}\n")
            for k in range(result.thresholds.shape[0]):
                ys = ",".join(f"{v:.17g}" for v in result.coordinates[k])
                ts = ",".join(f"{v:.17g}" for v in result.thresholds[k])
                fh.write(f"{k},{result.weights[k]:.17g},{ys},{ts}\n")
        written.append(matrix)
    return written

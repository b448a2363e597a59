"""Low-rank reduction of the random conductivity over frequency.

The random material law induces a correlated random curve kappa(theta, w) on
a log-spaced frequency grid.  Its sample covariance is eigendecomposed and
truncated to the leading modes, giving a reduced model

    g_M(y) = mean + B * diag(sqrt(lambda)) * y

with uncorrelated, unit-variance coordinates y.  Curves are recovered at
arbitrary frequencies by cubic-spline interpolation on the log axis.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.sparse.linalg import eigsh

from .dispersion import RandomParamBox, conductivity, sample_params

FORMAT_VERSION = 1


@dataclass(frozen=True)
class FrequencyGrid:
    """Angular frequencies equidistant in log10, ascending.

    The final point may be clamped onto the upper bound, so the last log
    step can be shorter than ``log_step``.
    """

    omega: np.ndarray
    log_step: float

    def __post_init__(self):
        w = np.asarray(self.omega, dtype=float)
        object.__setattr__(self, "omega", w)
        if w.ndim != 1 or w.size < 2:
            raise ValueError("grid needs at least two frequencies")
        if np.any(np.diff(w) <= 0):
            raise ValueError("grid must be strictly increasing")
        steps = np.diff(np.log10(w))
        # all interior steps must equal log_step; the clamped last one may be shorter
        if steps.size > 1 and np.any(np.abs(steps[:-1] - self.log_step) > 1e-12 * self.log_step):
            raise ValueError("grid is not log-equidistant")

    @property
    def n(self) -> int:
        return self.omega.size

    @property
    def log10_omega(self) -> np.ndarray:
        return np.log10(self.omega)


def build_grid(omega_min: float, omega_max: float, log_step: float) -> FrequencyGrid:
    """Log10-equidistant grid from omega_min to omega_max.

    Points sit at log10(omega_min) + k*log_step for k = 0..K with
    K = ceil(span/log_step); the final point is clamped to omega_max.
    """
    if not (0 < omega_min < omega_max):
        raise ValueError("need 0 < omega_min < omega_max")
    if log_step <= 0:
        raise ValueError("log_step must be positive")
    span = math.log10(omega_max / omega_min)
    k = int(math.ceil(span / log_step - 1e-9))
    logw = math.log10(omega_min) + log_step * np.arange(k + 1)
    omega = 10.0 ** logw
    omega[0] = omega_min
    omega[-1] = omega_max
    return FrequencyGrid(omega=omega, log_step=log_step)


@dataclass(frozen=True)
class SampleEnsemble:
    """Conductivity curves drawn from the parameter box, one row per draw."""

    values: np.ndarray  # (S, N)
    grid: FrequencyGrid

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim != 2 or v.shape[1] != self.grid.n:
            raise ValueError("ensemble shape does not match the grid")
        if not np.all(np.isfinite(v)):
            raise ValueError("ensemble contains non-finite entries")

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]


def sample_ensemble(box: RandomParamBox, grid: FrequencyGrid, n_samples: int, seed: int) -> SampleEnsemble:
    """Draw n_samples conductivity curves on the grid, reproducibly.

    Each draw is an independent uniform point of the parameter box.  The
    output is fully determined by the seed.
    """
    if n_samples < 2:
        raise ValueError("need at least two samples")
    rng = np.random.default_rng(seed)
    u = rng.uniform(-1.0, 1.0, size=(n_samples, 14))
    values = np.empty((n_samples, grid.n))
    for s in range(n_samples):
        values[s] = conductivity(sample_params(box, u[s]), grid.omega)
    return SampleEnsemble(values=values, grid=grid)


def sample_covariance(ens: SampleEnsemble):
    """Empirical mean curve and unbiased (1/(S-1)) covariance matrix."""
    s = ens.n_samples
    if s < 2:
        raise ValueError("need at least two samples")
    mean = ens.values.mean(axis=0)
    x = ens.values - mean
    c = (x.T @ x) / (s - 1)
    c = 0.5 * (c + c.T)
    return mean, c


@dataclass(frozen=True)
class EigenDecomposition:
    """Full spectrum of a symmetric matrix, eigenvalues descending."""

    lambdas: np.ndarray
    vectors: np.ndarray  # columns are eigenvectors

    def __post_init__(self):
        if np.any(np.diff(self.lambdas) > 0):
            raise ValueError("eigenvalues must be sorted descending")


def symmetric_eig(c: np.ndarray, method: str = "dense", k: int | None = None) -> EigenDecomposition:
    """Eigendecomposition of a symmetric matrix, sorted descending.

    method="dense" computes the full spectrum (the default; the matrices
    here are small).  method="lanczos" computes only the k largest pairs
    iteratively behind the same interface.
    """
    c = np.asarray(c, dtype=float)
    if not np.all(np.isfinite(c)):
        raise ValueError("matrix contains non-finite entries")
    c = 0.5 * (c + c.T)
    if method == "dense":
        lam, vec = np.linalg.eigh(c)
        order = np.argsort(lam)[::-1]
        return EigenDecomposition(lambdas=lam[order], vectors=vec[:, order])
    if method == "lanczos":
        if k is None or not 1 <= k < c.shape[0]:
            raise ValueError("lanczos path needs 1 <= k < n")
        lam, vec = eigsh(c, k=k, which="LA")
        order = np.argsort(lam)[::-1]
        return EigenDecomposition(lambdas=lam[order], vectors=vec[:, order])
    raise ValueError(f"unknown method {method!r}")


def _fix_signs(basis: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    b = basis.copy()
    for m in range(b.shape[1]):
        i = int(np.argmax(np.abs(b[:, m])))
        if b[i, m] < 0:
            b[:, m] = -b[:, m]
    return b


@dataclass(frozen=True)
class KLModel:
    """Truncated low-rank model of the random conductivity curve.

    Realizations are mean + basis @ (scale * y); the coordinates y of an
    observed curve are recovered by the orthonormal projection.
    """

    grid: FrequencyGrid
    mean: np.ndarray  # (N,)
    basis: np.ndarray  # (N, M), orthonormal columns
    scale: np.ndarray  # (M,), sqrt of kept eigenvalues

    def __post_init__(self):
        if self.basis.shape != (self.grid.n, self.scale.size):
            raise ValueError("basis shape mismatch")
        if self.mean.shape != (self.grid.n,):
            raise ValueError("mean shape mismatch")
        if np.any(self.scale <= 0):
            raise ValueError("scale entries must be positive")

    @property
    def rank(self) -> int:
        return self.scale.size

    def realize(self, y) -> np.ndarray:
        """Curve on the grid for reduced coordinates y."""
        y = np.asarray(y, dtype=float)
        if y.shape != (self.rank,):
            raise ValueError(f"expected {self.rank} coordinates")
        if not np.all(np.isfinite(y)):
            raise ValueError("coordinates must be finite")
        return self.mean + self.basis @ (self.scale * y)

    def project(self, g_obs) -> np.ndarray:
        """Reduced coordinates of an observed curve on the grid."""
        g = np.asarray(g_obs, dtype=float)
        if g.shape != (self.grid.n,):
            raise ValueError("observation length does not match the grid")
        return (self.basis.T @ (g - self.mean)) / self.scale

    def covariance(self) -> np.ndarray:
        """Rank-M covariance implied by the model."""
        return (self.basis * self.scale**2) @ self.basis.T

    def save(self, path) -> None:
        doc = {
            "format_version": FORMAT_VERSION,
            "grid": {
                "omega": [_f17(x) for x in self.grid.omega],
                "log_step": _f17(self.grid.log_step),
            },
            "mean": [_f17(x) for x in self.mean],
            "eigenvalues": [_f17(x) for x in self.scale**2],
            "basis_row_major": [_f17(x) for x in self.basis.ravel(order="C")],
            "rank": self.rank,
        }
        with open(path, "w") as fh:
            json.dump(doc, fh)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "KLModel":
        with open(path) as fh:
            doc = json.load(fh)
        if doc.get("format_version") != FORMAT_VERSION:
            raise ValueError("unsupported model file version")
        grid = FrequencyGrid(
            omega=np.array(doc["grid"]["omega"], dtype=float),
            log_step=float(doc["grid"]["log_step"]),
        )
        rank = int(doc["rank"])
        mean = np.array(doc["mean"], dtype=float)
        lam = np.array(doc["eigenvalues"], dtype=float)
        basis = np.array(doc["basis_row_major"], dtype=float).reshape(grid.n, rank)
        return cls(grid=grid, mean=mean, basis=basis, scale=np.sqrt(lam))


def _f17(x: float) -> float:
    # round-trips float64 exactly; keeps serialized text minimal and stable
    return float(f"{float(x):.17g}")


def truncate(eig: EigenDecomposition, grid: FrequencyGrid, mean: np.ndarray, rank: int) -> KLModel:
    """Keep the leading ``rank`` eigenpairs as a KLModel.

    Eigenvector signs follow the largest-magnitude-entry-positive rule so
    serialized models are reproducible.
    """
    n = eig.lambdas.size
    if not 1 <= rank <= n:
        raise ValueError(f"rank must lie in 1..{n}")
    lam = eig.lambdas[:rank]
    if np.any(lam <= 0):
        raise ValueError("kept eigenvalues must be positive")
    basis = _fix_signs(eig.vectors[:, :rank])
    return KLModel(grid=grid, mean=np.asarray(mean, dtype=float), basis=basis, scale=np.sqrt(lam))


def truncate_by_energy(eig: EigenDecomposition, grid: FrequencyGrid, mean: np.ndarray, tol: float) -> KLModel:
    """Smallest rank whose discarded eigenvalue mass is <= tol of the total.

    Tiny negative eigenvalues (numerical noise) count as zero mass.
    """
    lam = np.maximum(eig.lambdas, 0.0)
    total = lam.sum()
    if total <= 0:
        raise ValueError("covariance has no positive eigenvalue mass")
    tail = total - np.cumsum(lam)
    rank = int(np.searchsorted(-tail, -tol * total) + 1)
    rank = min(max(rank, 1), lam.size)
    return truncate(eig, grid, mean, rank)


def truncation_error(c: np.ndarray, model: KLModel):
    """Entrywise relative deviation of the rank-M covariance from c.

    Returns (max_rel, field) with field = |c - c_M| / max|c|.
    """
    c = np.asarray(c, dtype=float)
    if c.shape != (model.grid.n, model.grid.n):
        raise ValueError("covariance shape does not match the model grid")
    field = np.abs(c - model.covariance()) / np.max(np.abs(c))
    return float(field.max()), field


def log_spline(omega: np.ndarray, values: np.ndarray) -> CubicSpline:
    """Cubic spline through (log10 omega, values); values may be 2-D.

    Interpolates exactly at the knots.  Queries must stay inside the knot
    range; use the returned spline through :func:`spline_eval` for checked
    evaluation.
    """
    return CubicSpline(np.log10(np.asarray(omega, dtype=float)), values, axis=-1)


def spline_eval(grid: FrequencyGrid, values: np.ndarray, omega_query):
    """Evaluate the spline interpolant of a grid curve at omega_query.

    omega_query must lie within the grid range; there is no extrapolation.
    """
    w = np.asarray(omega_query, dtype=float)
    if np.any(w < grid.omega[0] * (1 - 1e-12)) or np.any(w > grid.omega[-1] * (1 + 1e-12)):
        raise ValueError("query frequency outside the grid range")
    w = np.clip(w, grid.omega[0], grid.omega[-1])
    out = log_spline(grid.omega, np.asarray(values, dtype=float))(np.log10(w))
    return out if np.ndim(omega_query) else float(out)


class ConductivityCurve:
    """Callable conductivity realization kappa(omega) from grid values.

    Evaluation clamps to the grid range, so the static solve at omega = 0
    picks up the low-frequency-limit conductivity.
    """

    def __init__(self, grid: FrequencyGrid, values: np.ndarray):
        self.grid = grid
        self.values = np.asarray(values, dtype=float)
        self._spline = log_spline(grid.omega, self.values)

    def __call__(self, omega):
        w = np.clip(np.asarray(omega, dtype=float), self.grid.omega[0], self.grid.omega[-1])
        out = self._spline(np.log10(w))
        return out if np.ndim(omega) else float(out)

"""Binary MRF likelihood on a torus: energies, full conditionals, Gibbs sampling.

The energy of a field ``x`` is

    U(x) = sum_T beta[T] * #{black instances of T} + sum_v x_v * h_v

where ``h_v = sum_k kappa_k * y_{v,k}`` on observed nodes and zero on
boundary nodes.  ``p(x)`` is proportional to ``exp(U(x))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping

import numpy as np
from numba import njit

from .lattice import EMPTY, CliqueType, Dims, stabilizer_size
from .parametrization import TiedState, beta_from_phi, expand_tied

MAX_EXACT_NODES = 16


@dataclass
class Grid:
    """Binary field plus observation mask and covariate layers."""

    x: np.ndarray
    observed: np.ndarray | None = None
    covariates: np.ndarray | None = None
    names: tuple[str, ...] = ()

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=np.uint8)
        if self.x.ndim != 2:
            raise ValueError("field must be two-dimensional")
        if self.observed is None:
            self.observed = np.ones(self.x.shape, dtype=bool)
        self.observed = np.ascontiguousarray(self.observed, dtype=bool)
        if self.covariates is None:
            self.covariates = np.zeros((0,) + self.x.shape)
        self.covariates = np.asarray(self.covariates, dtype=float)
        if self.covariates.shape[1:] != self.x.shape or self.observed.shape != self.x.shape:
            raise ValueError("mask and covariate layers must match the field shape")
        if not self.names:
            self.names = tuple(f"y{k + 1}" for k in range(self.covariates.shape[0]))

    @property
    def dims(self) -> Dims:
        return Dims(*self.x.shape)

    @property
    def n_covariates(self) -> int:
        return self.covariates.shape[0]

    @property
    def has_boundary(self) -> bool:
        return not bool(self.observed.all())

    def field(self, kappa) -> np.ndarray:
        """Per-node external field from the covariates (zero off the observed region)."""
        h = np.zeros(self.x.shape)
        for k, coef in enumerate(kappa):
            h += coef * self.covariates[k]
        h[~self.observed] = 0.0
        return h

    def covariate_totals(self, x: np.ndarray | None = None) -> np.ndarray:
        x = self.x if x is None else x
        w = (x * self.observed).astype(float)
        return np.array([float((w * layer).sum()) for layer in self.covariates])

    def copy(self) -> "Grid":
        return Grid(self.x.copy(), self.observed.copy(), self.covariates.copy(), self.names)

    def with_x(self, x: np.ndarray) -> "Grid":
        return Grid(x, self.observed, self.covariates, self.names)


class _Kernel:
    """Flattened clique patterns seen from a single node, for the numba sweeps.

    For every type and every anchor offset in it, one pattern lists the other
    offsets relative to the anchor.  Weights are divided by the stabilizer
    size so that instances which coincide under translation are counted once.
    """

    def __init__(self, beta: Mapping[CliqueType, float], dims: Dims):
        ptr, ri, rj, w = [0], [], [], []
        for ct, b in sorted(beta.items()):
            if ct.order == 0 or b == 0.0:
                continue
            weight = b / stabilizer_size(ct, dims)
            for ai, aj in ct.offsets:
                for oi, oj in ct.offsets:
                    if (oi, oj) != (ai, aj):
                        ri.append((oi - ai) % dims.m)
                        rj.append((oj - aj) % dims.n)
                ptr.append(len(ri))
                w.append(weight)
        self.ptr = np.array(ptr, dtype=np.int64)
        self.ri = np.array(ri, dtype=np.int64)
        self.rj = np.array(rj, dtype=np.int64)
        self.w = np.array(w, dtype=np.float64)


@njit(cache=True)
def _node_log_odds(x, i, j, h, ptr, ri, rj, w):
    m, n = x.shape
    lo = h[i, j]
    for p in range(ptr.shape[0] - 1):
        on = True
        for q in range(ptr[p], ptr[p + 1]):
            if x[(i + ri[q]) % m, (j + rj[q]) % n] == 0:
                on = False
                break
        if on:
            lo += w[p]
    return lo


@njit(cache=True)
def _sweeps(x, h, free, ptr, ri, rj, w, u):
    m, n = x.shape
    for s in range(u.shape[0]):
        for i in range(m):
            for j in range(n):
                if not free[i, j]:
                    continue
                lo = _node_log_odds(x, i, j, h, ptr, ri, rj, w)
                if lo >= 0.0:
                    p1 = 1.0 / (1.0 + math.exp(-lo))
                else:
                    e = math.exp(lo)
                    p1 = e / (1.0 + e)
                x[i, j] = 1 if u[s, i, j] < p1 else 0


@dataclass(frozen=True)
class ModelSpec:
    """Clique structure, tied phi values and covariate coefficients."""

    dims: Dims
    types: frozenset
    z: TiedState
    kappa: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.z.types != frozenset(self.types):
            raise ValueError("partition does not cover the clique set exactly")

    @classmethod
    def from_tied(cls, z: TiedState, dims: Dims, kappa=()) -> "ModelSpec":
        return cls(dims, z.types, z, tuple(float(k) for k in kappa))

    @classmethod
    def from_beta(cls, beta: Mapping[CliqueType, float], dims: Dims, kappa=()) -> "ModelSpec":
        from .parametrization import phi_from_beta

        return cls.from_tied(TiedState.untied(phi_from_beta(beta, dims)), dims, kappa)

    @cached_property
    def beta(self) -> dict[CliqueType, float]:
        return beta_from_phi(expand_tied(self.z), self.dims)

    @cached_property
    def kernel(self) -> _Kernel:
        return _Kernel(self.beta, self.dims)


def clique_count(x: np.ndarray, ct: CliqueType) -> int:
    """Number of distinct instances of ``ct`` that are entirely black in ``x``."""
    if ct.order == 0:
        return 1
    prod = np.ones(x.shape, dtype=np.uint8)
    for oi, oj in ct.offsets:
        prod &= np.roll(x, (-oi, -oj), axis=(0, 1))
    return int(prod.sum()) // stabilizer_size(ct, Dims(*x.shape))


def _check_dims(spec: ModelSpec, grid: Grid) -> None:
    if spec.dims != grid.dims:
        raise ValueError(f"model dims {spec.dims} do not match grid dims {grid.dims}")


def energy(spec: ModelSpec, grid: Grid) -> float:
    _check_dims(spec, grid)
    u = 0.0
    for ct, b in spec.beta.items():
        if b != 0.0:
            u += b * clique_count(grid.x, ct)
    if spec.kappa:
        u += float((grid.x * grid.field(spec.kappa)).sum())
    return u


def local_log_odds(spec: ModelSpec, grid: Grid, node) -> float:
    _check_dims(spec, grid)
    k = spec.kernel
    h = grid.field(spec.kappa) if spec.kappa else np.zeros(grid.x.shape)
    return float(_node_log_odds(grid.x, node[0], node[1], h, k.ptr, k.ri, k.rj, k.w))


def run_sweeps(kernel: _Kernel, x: np.ndarray, h: np.ndarray, free: np.ndarray,
               sweeps: int, rng: np.random.Generator) -> None:
    """In-place systematic (row-major) Gibbs sweeps over the ``free`` nodes."""
    if sweeps <= 0:
        return
    u = rng.random((sweeps,) + x.shape)
    _sweeps(x, h, free, kernel.ptr, kernel.ri, kernel.rj, kernel.w, u)


def gibbs_sweep(spec: ModelSpec, grid: Grid, rng: np.random.Generator,
                update_mask: np.ndarray | Callable | None = None) -> Grid:
    """One raster-order Gibbs sweep; returns a new grid."""
    _check_dims(spec, grid)
    if update_mask is None:
        free = np.ones(grid.x.shape, dtype=bool)
    elif callable(update_mask):
        free = np.array([[bool(update_mask((i, j))) for j in range(grid.dims.n)]
                         for i in range(grid.dims.m)], dtype=bool).reshape(grid.x.shape)
    else:
        free = np.asarray(update_mask, dtype=bool)
    out = grid.copy()
    h = grid.field(spec.kappa) if spec.kappa else np.zeros(grid.x.shape)
    run_sweeps(spec.kernel, out.x, h, free, 1, rng)
    return out


def sample_field(spec: ModelSpec, dims: Dims, sweeps: int, rng: np.random.Generator,
                 template: Grid | None = None) -> Grid:
    """Gibbs sampling from an iid fair-coin start.

    ``template`` supplies covariates and the observation mask when given.
    """
    if sweeps < 0:
        raise ValueError("sweeps must be non-negative")
    x = (rng.random((dims.m, dims.n)) < 0.5).astype(np.uint8)
    grid = Grid(x) if template is None else template.with_x(x)
    _check_dims(spec, grid)
    h = grid.field(spec.kappa) if spec.kappa else np.zeros(x.shape)
    run_sweeps(spec.kernel, grid.x, h, np.ones(x.shape, dtype=bool), sweeps, rng)
    return grid


def all_configs(dims: Dims) -> np.ndarray:
    """Every binary field on ``dims`` as rows of a (2**mn, m, n) array.

    Configuration ``c`` has node ``(i, j)`` black iff bit ``i*n + j`` of ``c`` is set.
    """
    size = dims.size
    if size > MAX_EXACT_NODES:
        raise ValueError(f"exact enumeration is limited to {MAX_EXACT_NODES} nodes, got {size}")
    codes = np.arange(2 ** size, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(size)) & 1
    return bits.astype(np.uint8).reshape(-1, dims.m, dims.n)


def config_code(x: np.ndarray) -> int:
    flat = np.asarray(x).ravel()
    return int(sum(int(b) << k for k, b in enumerate(flat)))


def config_energies(spec: ModelSpec, dims: Dims, h: np.ndarray | None = None) -> np.ndarray:
    configs = all_configs(dims)
    u = np.full(configs.shape[0], spec.beta.get(EMPTY, 0.0))
    for ct, b in spec.beta.items():
        if ct.order == 0 or b == 0.0:
            continue
        prod = np.ones_like(configs)
        for oi, oj in ct.offsets:
            prod &= np.roll(configs, (-oi, -oj), axis=(1, 2))
        u += b * (prod.reshape(len(configs), -1).sum(axis=1) // stabilizer_size(ct, dims))
    if h is not None:
        u += configs.reshape(len(configs), -1) @ np.asarray(h, dtype=float).ravel()
    return u


def exact_distribution(spec: ModelSpec, dims: Dims, h: np.ndarray | None = None) -> np.ndarray:
    """Probabilities of all 2**mn fields, indexed by :func:`config_code`."""
    u = config_energies(spec, dims, h)
    u -= u.max()
    p = np.exp(u)
    return p / p.sum()


@njit(cache=True)
def _record_codes(x, h, free, ptr, ri, rj, w, u, thin, out):
    m, n = x.shape
    one = np.ones((1, m, n))
    for k in range(out.shape[0]):
        for s in range(thin):
            one[0] = u[k * thin + s]
            _sweeps(x, h, free, ptr, ri, rj, w, one)
        code = 0
        for i in range(m):
            for j in range(n):
                if x[i, j]:
                    code |= 1 << (i * n + j)
        out[k] = code


def sample_codes(spec: ModelSpec, dims: Dims, n_keep: int, rng: np.random.Generator,
                 burn_in: int = 1000, thin: int = 1, chunk: int = 100_000) -> np.ndarray:
    """Configuration codes of ``n_keep`` Gibbs states, one every ``thin`` sweeps."""
    if dims.size > MAX_EXACT_NODES:
        raise ValueError(f"state codes are limited to {MAX_EXACT_NODES} nodes")
    grid = sample_field(spec, dims, burn_in, rng)
    x = grid.x
    h = np.zeros(x.shape)
    free = np.ones(x.shape, dtype=bool)
    k = spec.kernel
    codes = np.empty(n_keep, dtype=np.int64)
    for start in range(0, n_keep, chunk):
        stop = min(start + chunk, n_keep)
        u = rng.random(((stop - start) * thin,) + x.shape)
        _record_codes(x, h, free, k.ptr, k.ri, k.rj, k.w, u, thin, codes[start:stop])
    return codes


def local_statistics(x: np.ndarray, types, dims: Dims) -> np.ndarray:
    """(m*n, len(types)) array: for each node, the number of instances of each
    type through that node whose other members are black."""
    xf = np.asarray(x, dtype=float)
    cols = []
    for ct in types:
        f = np.zeros(xf.shape)
        for oi, oj in ct.offsets:
            prod = np.ones(xf.shape)
            for pi, pj in ct.offsets:
                if (pi, pj) != (oi, oj):
                    prod *= np.roll(xf, (oi - pi, oj - pj), axis=(0, 1))
            f += prod
        cols.append((f / stabilizer_size(ct, dims)).ravel())
    return np.stack(cols, axis=1) if cols else np.zeros((dims.size, 0))


def pseudo_likelihood_fit(grid: Grid, types, max_iter: int = 100,
                          tol: float = 1e-10) -> tuple[dict[CliqueType, float], tuple[float, ...]]:
    """Maximum pseudo-likelihood beta (and kappa) for a fixed structure.

    Newton iterations on the logistic regression of each observed node on its
    local statistics; beta of the empty type is returned as zero.
    """
    dims = grid.dims
    types = [ct for ct in types if ct != EMPTY]
    feats = local_statistics(grid.x, types, dims)
    if grid.n_covariates:
        feats = np.hstack([feats, grid.covariates.reshape(grid.n_covariates, -1).T])
    obs = grid.observed.ravel()
    feats, y = feats[obs], grid.x.ravel()[obs].astype(float)
    coef = np.zeros(feats.shape[1])
    ridge = 1e-8 * np.eye(len(coef))
    for _ in range(max_iter):
        p = 1.0 / (1.0 + np.exp(-(feats @ coef)))
        hess = (feats * (p * (1 - p))[:, None]).T @ feats + ridge
        step = np.linalg.solve(hess, feats.T @ (y - p))
        coef += step
        if np.abs(step).max() < tol:
            break
    beta = {EMPTY: 0.0}
    beta.update((ct, float(b)) for ct, b in zip(types, coef))
    return beta, tuple(float(k) for k in coef[len(types):])

"""Reversible-jump MCMC over (M, partition, phi, theta, kappa, x_b).

Every iteration draws one move from ``proposal_probs``:

    0 random walk on one phi cell      3 replace a clique type
    1 switch a type between cells      4 add/delete a type in an existing cell
    2 split/merge cells                5 add/delete a type with its own cell
    6 covariate coefficient (only with covariates)

then scans the latent boundary nodes (if any) and updates the three
hyper-parameters.  Likelihood ratios use the approximate exchange algorithm:
an auxiliary field is drawn by Gibbs sweeps under the candidate parameters.
Each proposal returns the exact log ratio of reverse to forward proposal
densities, including all uniform-choice counting factors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from functools import lru_cache
from typing import Iterator

import numpy as np

from .lattice import (
    DEFAULT_WINDOW,
    EMPTY,
    SINGLE,
    CliqueType,
    Dims,
    canonicalize,
    in_window,
    is_dense,
    layer,
    named_types,
    signed_offset,
)
from .mrf import Grid, ModelSpec, _Kernel, clique_count, pseudo_likelihood_fit, run_sweeps
from .parametrization import (
    SUM_TOL,
    TiedState,
    beta_from_phi,
    expand_tied,
    phi_from_beta,
    phi_of_type,
    project_sum_to_zero,
)
from .priors import (
    NEG_INF,
    HyperParams,
    PriorConfig,
    log_hyper_prior,
    log_prior_higher,
    log_prior_kappa,
    log_prior_m2,
    log_prior_model,
    log_prior_phi,
)

MOVE_NAMES = ("random_walk", "switch", "split_merge", "replace", "add_delete_fixed",
              "add_delete_cell", "kappa")
DEFAULT_P_O = (0.1, 0.15, 0.15, 0.15, 0.20, 0.25)
DEFAULT_P_O_COVARIATES = (0.1, 0.1, 0.15, 0.15, 0.20, 0.25, 0.05)
DIRECTIONS = ((0, 1), (1, 0), (0, -1), (-1, 0))
LOG_2PI = math.log(2 * math.pi)


class InvariantViolation(AssertionError):
    pass


@dataclass(frozen=True)
class ModelState:
    types: frozenset
    z: TiedState
    theta: HyperParams = HyperParams()
    kappa: tuple[float, ...] = ()
    x_b: np.ndarray | None = field(default=None, compare=False)

    @classmethod
    def initial(cls, theta: HyperParams = HyperParams(), n_covariates: int = 0,
                x_b: np.ndarray | None = None) -> "ModelState":
        return cls(frozenset({EMPTY}), TiedState.build([[EMPTY]], [0.0]), theta,
                   (0.0,) * n_covariates, x_b)

    def spec(self, dims: Dims) -> ModelSpec:
        return ModelSpec(dims, self.types, self.z, self.kappa)

    def with_z(self, types, z: TiedState) -> "ModelState":
        return replace(self, types=frozenset(types), z=z)

    def to_json(self) -> dict:
        out = {"M": [ct.to_list() for ct in sorted(self.types)]}
        out.update(self.z.to_json())
        out["theta"] = self.theta.to_json()
        out["kappa"] = list(self.kappa)
        return out


INIT_CHOICES = ("empty", "second_order")


@dataclass
class SamplerConfig:
    proposal_probs: tuple[float, ...] = DEFAULT_P_O
    sigma_w: float = 0.2
    sigma_g: float = 0.3
    sigma_c: float = 0.3
    sigma_eta: float = 2.0
    sigma_sigma_phi: float = 0.7
    rho: float = 0.1
    kappa_step: float = 0.2
    aux_burn_in: int = 200
    aux_init: str = "random"
    init: str = "empty"
    iterations: int = 1000
    seed: int = 0
    thin: int = 1
    window: int | None = DEFAULT_WINDOW
    init_eta: float = 3.0
    init_p_star: float = 0.5
    init_sigma_phi_sq: float = 10.0
    kappa_sd: float = 10.0
    reproject_every: int = 10_000
    fixed_hypers: bool = False
    debug: bool = False

    def __post_init__(self):
        self.proposal_probs = tuple(float(p) for p in self.proposal_probs)
        self.validate()

    def validate(self) -> None:
        p = self.proposal_probs
        if len(p) not in (6, 7):
            raise ValueError("proposal_probs must have 6 or 7 entries")
        if any(v < 0 for v in p) or abs(sum(p) - 1.0) > 1e-9:
            raise ValueError("proposal_probs must be non-negative and sum to 1")
        for name in ("sigma_w", "sigma_g", "sigma_c", "sigma_eta", "sigma_sigma_phi",
                     "rho", "kappa_step", "kappa_sd"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.aux_burn_in < 1:
            raise ValueError("aux_burn_in must be at least 1")
        if self.aux_init not in ("random", "data"):
            raise ValueError("aux_init must be 'random' or 'data'")
        if self.init not in INIT_CHOICES:
            raise ValueError(f"init must be one of {INIT_CHOICES}")
        if self.iterations < 0 or self.thin < 1 or self.reproject_every < 1:
            raise ValueError("iterations must be >= 0, thin and reproject_every >= 1")
        if self.window is not None and self.window < 2:
            raise ValueError("window must be at least 2")
        if not HyperParams(self.init_eta, self.init_p_star, self.init_sigma_phi_sq).is_valid():
            raise ValueError("initial hyper-parameters are outside their support")

    @classmethod
    def from_dict(cls, data: dict) -> "SamplerConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["proposal_probs"] = list(self.proposal_probs)
        return out

    @property
    def prior(self) -> PriorConfig:
        return PriorConfig(window=self.window, kappa_sd=self.kappa_sd)

    def initial_theta(self) -> HyperParams:
        return HyperParams(self.init_eta, self.init_p_star, self.init_sigma_phi_sq)


@dataclass
class MoveProposal:
    kind: str
    candidate: ModelState | None = None
    log_proposal_ratio: float = 0.0
    log_jacobian: float = 0.0

    @property
    def valid(self) -> bool:
        return self.candidate is not None


def _invalid(kind: str) -> MoveProposal:
    return MoveProposal(kind)


def _log_normal(x: float, sd: float) -> float:
    return -0.5 * LOG_2PI - math.log(sd) - 0.5 * (x / sd) ** 2


@lru_cache(maxsize=256)
def state_beta(z: TiedState, dims: Dims) -> dict[CliqueType, float]:
    return beta_from_phi(expand_tied(z), dims)


@lru_cache(maxsize=64)
def state_kernel(z: TiedState, dims: Dims) -> _Kernel:
    return _Kernel(state_beta(z, dims), dims)


def _rebuild(cells: list, phi) -> TiedState:
    return TiedState.build(cells, [float(v) for v in phi])


# -- parameter moves -----------------------------------------------------------

def propose_random_walk(state: ModelState, rng: np.random.Generator, sigma_w: float) -> MoveProposal:
    z = state.z
    c = len(z)
    k = int(rng.integers(c))
    eps = float(rng.normal(0.0, sigma_w))
    phi = np.array(z.phi) - eps / c
    phi[k] += eps
    return MoveProposal("random_walk", state.with_z(state.types, TiedState(z.cells, tuple(phi.tolist()))))


def _switch_weights(cells, phi) -> tuple[list[tuple[int, int]], np.ndarray]:
    pairs = [(a, b) for a in range(len(cells)) for b in range(len(cells))
             if a != b and len(cells[a]) > 1]
    return pairs, np.array([-(phi[a] - phi[b]) ** 2 for a, b in pairs])


def _normalize_log(logw: np.ndarray) -> np.ndarray:
    top = logw.max()
    return logw - (top + math.log(np.exp(logw - top).sum()))


def propose_switch_cell(state: ModelState, rng: np.random.Generator) -> MoveProposal:
    z = state.z
    cells, phi = list(z.cells), z.phi
    pairs, logw = _switch_weights(cells, phi)
    if not pairs:
        return _invalid("switch")
    logq = _normalize_log(logw)
    pick = int(rng.choice(len(pairs), p=np.exp(logq)))
    a, b = pairs[pick]
    members = sorted(cells[a])
    ct = members[int(rng.integers(len(members)))]
    new_cells = [set(c) for c in cells]
    new_cells[a].discard(ct)
    new_cells[b].add(ct)
    pairs_new, logw_new = _switch_weights(new_cells, phi)
    log_fwd = logq[pick] - math.log(len(members))
    log_rev = _normalize_log(logw_new)[pairs_new.index((b, a))] - math.log(len(new_cells[b]))
    return MoveProposal("switch", state.with_z(state.types, _rebuild(new_cells, phi)), log_rev - log_fwd)


def _merge_weights(cells, phi) -> tuple[list[tuple[int, int]], np.ndarray]:
    pairs = [(s, t) for s in range(len(cells)) for t in range(len(cells))
             if s != t and len(cells[s]) == 1]
    return pairs, np.array([-(phi[s] - phi[t]) ** 2 for s, t in pairs])


def split(z: TiedState, cell: int, ct: CliqueType, eps: float) -> TiedState:
    """Move ``ct`` out of ``cell`` into a new cell valued phi[cell] + eps, then re-center."""
    c = len(z)
    new_val = z.phi[cell] + eps
    shift = new_val / (c + 1)
    cells = [set(s) for s in z.cells]
    cells[cell].discard(ct)
    return _rebuild(cells + [{ct}], [v - shift for v in z.phi] + [new_val - shift])


def merge(z: TiedState, source: int, target: int) -> TiedState:
    """Fold singleton cell ``source`` into ``target``, spreading its value over the rest."""
    c = len(z)
    shift = z.phi[source] / (c - 1)
    cells = [set(s) for s in z.cells]
    cells[target] |= cells[source]
    keep = [k for k in range(c) if k != source]
    return _rebuild([cells[k] for k in keep], [z.phi[k] + shift for k in keep])


def split_jacobian(n_cells: int) -> float:
    return n_cells / (n_cells + 1)


def merge_jacobian(n_cells: int) -> float:
    return n_cells / (n_cells - 1)


def _log_split_density(z: TiedState, cell: int, eps: float, sigma_g: float) -> float:
    eligible = sum(1 for s in z.cells if len(s) > 1)
    return -math.log(eligible) - math.log(len(z.cells[cell])) + _log_normal(eps, sigma_g)


def _log_merge_density(z: TiedState, source: int, target: int) -> float:
    pairs, logw = _merge_weights(z.cells, z.phi)
    return float(_normalize_log(logw)[pairs.index((source, target))])


def propose_split_merge(state: ModelState, rng: np.random.Generator, sigma_g: float) -> MoveProposal:
    z = state.z
    if rng.random() < 0.5:
        eligible = [k for k, s in enumerate(z.cells) if len(s) > 1]
        if not eligible:
            return _invalid("split")
        cell = eligible[int(rng.integers(len(eligible)))]
        members = sorted(z.cells[cell])
        ct = members[int(rng.integers(len(members)))]
        eps = float(rng.normal(0.0, sigma_g))
        new = split(z, cell, ct, eps)
        rest = z.cells[cell] - {ct}
        log_q = (_log_merge_density(new, new.cell_index(ct), new.cells.index(rest))
                 - _log_split_density(z, cell, eps, sigma_g))
        return MoveProposal("split", state.with_z(state.types, new), log_q,
                            math.log(split_jacobian(len(z))))
    pairs, logw = _merge_weights(z.cells, z.phi)
    if not pairs:
        return _invalid("merge")
    logq = _normalize_log(logw)
    pick = int(rng.choice(len(pairs), p=np.exp(logq)))
    source, target = pairs[pick]
    new = merge(z, source, target)
    merged = z.cells[source] | z.cells[target]
    eps = z.phi[source] - z.phi[target]
    log_q = (_log_split_density(new, new.cells.index(merged), eps, sigma_g)
             - logq[pick])
    return MoveProposal("merge", state.with_z(state.types, new), log_q,
                        math.log(merge_jacobian(len(z))))


# -- structural moves ----------------------------------------------------------

def _replace_outcomes(ct: CliqueType, dims: Dims) -> dict[CliqueType, int]:
    """Number of (node, direction) choices turning ``ct`` into each other type."""
    out: dict[CliqueType, int] = {}
    pts = ct.offsets
    for idx, (i, j) in enumerate(pts):
        others = pts[:idx] + pts[idx + 1:]
        for di, dj in DIRECTIONS:
            new = ((i + di) % dims.m, (j + dj) % dims.n)
            if new in others:
                continue
            res = canonicalize(others + (new,), dims)
            out[res] = out.get(res, 0) + 1
    return out


def propose_replace_type(state: ModelState, rng: np.random.Generator, dims: Dims) -> MoveProposal:
    movable = sorted(ct for ct in state.types if ct.order > 1)
    if not movable:
        return _invalid("replace")
    ct = movable[int(rng.integers(len(movable)))]
    idx = int(rng.integers(ct.order))
    di, dj = DIRECTIONS[int(rng.integers(4))]
    i, j = ct.offsets[idx]
    others = ct.offsets[:idx] + ct.offsets[idx + 1:]
    new_node = ((i + di) % dims.m, (j + dj) % dims.n)
    if new_node in others:
        return _invalid("replace")
    new_ct = canonicalize(others + (new_node,), dims)
    if new_ct in state.types:
        return _invalid("replace")
    fwd = _replace_outcomes(ct, dims)[new_ct]
    rev = _replace_outcomes(new_ct, dims).get(ct, 0)
    if rev == 0:
        return _invalid("replace")
    cells = [{new_ct if t == ct else t for t in c} for c in state.z.cells]
    types = (state.types - {ct}) | {new_ct}
    return MoveProposal("replace", state.with_z(types, _rebuild(cells, state.z.phi)),
                        math.log(rev) - math.log(fwd))


@lru_cache(maxsize=None)
def offset_table(dims: Dims, rho: float, window: int | None) -> tuple[np.ndarray, np.ndarray, dict]:
    """Signed offsets (k, l) != (0, 0) with weights exp(-rho(|k|+|l|)).

    Returns the offsets, their probabilities, and the probability mass per
    offset reduced mod the lattice (several signed offsets can alias).
    """
    if window is None:
        ks = sorted({signed_offset(a, dims.m) for a in range(dims.m)})
        ls = sorted({signed_offset(b, dims.n) for b in range(dims.n)})
    else:
        ks = ls = list(range(-(window - 1), window))
    offs = np.array([(k, l) for k in ks for l in ls if (k, l) != (0, 0)], dtype=np.int64)
    w = np.exp(-rho * np.abs(offs).sum(axis=1))
    p = w / w.sum()
    reduced: dict[tuple[int, int], float] = {}
    for (k, l), pk in zip(offs.tolist(), p.tolist()):
        key = (k % dims.m, l % dims.n)
        reduced[key] = reduced.get(key, 0.0) + pk
    return offs, p, reduced


def _draw_addition(types: frozenset, rng: np.random.Generator, dims: Dims, rho: float,
                   window: int | None) -> CliqueType | None:
    """Grow a uniformly chosen member by one node; None for a void draw."""
    members = sorted(types)
    base = members[int(rng.integers(len(members)))]
    if base == EMPTY:
        return SINGLE
    i, j = base.offsets[int(rng.integers(base.order))]
    offs, p, _ = offset_table(dims, rho, window)
    k, l = offs[int(rng.choice(len(offs), p=p))]
    new = ((i + int(k)) % dims.m, (j + int(l)) % dims.n)
    if new in base.offsets:
        return None
    return canonicalize(base.offsets + (new,), dims)


def log_addition_probability(types: frozenset, target: CliqueType, dims: Dims, rho: float,
                             window: int | None) -> float:
    """log P(the growth draw from ``types`` yields ``target``)."""
    members = sorted(types)
    total = 0.0
    if target == SINGLE and EMPTY in types:
        total += 1.0
    if target.order >= 2:
        offs, _, reduced = offset_table(dims, rho, window)
        for base in members:
            if base.order != target.order - 1:
                continue
            pts = base.offsets
            pset = set(pts)
            reach = {((i + int(k)) % dims.m, (j + int(l)) % dims.n)
                     for i, j in pts for k, l in offs}
            acc = 0.0
            for v in reach - pset:
                if canonicalize(pts + (v,), dims) != target:
                    continue
                for i, j in pts:
                    acc += reduced.get(((v[0] - i) % dims.m, (v[1] - j) % dims.n), 0.0)
            total += acc / base.order
    if total <= 0.0:
        return NEG_INF
    return math.log(total / len(members))


def _in_support(types, dims: Dims, window: int | None) -> bool:
    return EMPTY in types and all(in_window(ct, dims, window) for ct in types) and is_dense(types, dims)


def propose_add_delete_fixed(state: ModelState, rng: np.random.Generator, dims: Dims,
                             rho: float, window: int | None = DEFAULT_WINDOW) -> MoveProposal:
    z = state.z
    if rng.random() < 0.5:
        new_ct = _draw_addition(state.types, rng, dims, rho, window)
        if new_ct is None or new_ct in state.types:
            return _invalid("add_fixed")
        cell = int(rng.integers(len(z)))
        cells = [set(c) for c in z.cells]
        cells[cell].add(new_ct)
        types = state.types | {new_ct}
        new_z = _rebuild(cells, z.phi)
        cand = state.with_z(types, new_z)
        if not _in_support(types, dims, window):
            return MoveProposal("add_fixed", cand)
        deletable = sum(len(c - {EMPTY}) for c in new_z.cells if len(c) > 1)
        log_fwd = log_addition_probability(state.types, new_ct, dims, rho, window) - math.log(len(z))
        return MoveProposal("add_fixed", cand, -math.log(deletable) - log_fwd)
    deletable = sorted(ct for c in z.cells if len(c) > 1 for ct in c if ct != EMPTY)
    if not deletable:
        return _invalid("delete_fixed")
    ct = deletable[int(rng.integers(len(deletable)))]
    cells = [set(c) - {ct} for c in z.cells]
    types = state.types - {ct}
    cand = state.with_z(types, _rebuild(cells, z.phi))
    if not _in_support(types, dims, window):
        return MoveProposal("delete_fixed", cand)
    log_rev = log_addition_probability(types, ct, dims, rho, window) - math.log(len(z))
    if log_rev == NEG_INF:
        return _invalid("delete_fixed")
    return MoveProposal("delete_fixed", cand, log_rev + math.log(len(deletable)))


def add_cell(z: TiedState, ct: CliqueType, value: float) -> TiedState:
    c = len(z)
    shift = value / (c + 1)
    return _rebuild([set(s) for s in z.cells] + [{ct}], [v - shift for v in z.phi] + [value - shift])


def delete_cell(z: TiedState, cell: int) -> TiedState:
    c = len(z)
    shift = z.phi[cell] / (c - 1)
    keep = [k for k in range(c) if k != cell]
    return _rebuild([z.cells[k] for k in keep], [z.phi[k] + shift for k in keep])


def implied_phi(z: TiedState, ct: CliqueType, dims: Dims) -> float:
    """phi of ``ct`` implied by the current beta (beta of ``ct`` itself taken as zero)."""
    return phi_of_type(state_beta(z, dims), ct, dims) if ct not in z.types else expand_tied(z)[ct]


def propose_add_delete_with_cell(state: ModelState, rng: np.random.Generator, dims: Dims,
                                 rho: float, sigma_c: float,
                                 window: int | None = DEFAULT_WINDOW) -> MoveProposal:
    z = state.z
    c = len(z)
    if rng.random() < 0.5:
        new_ct = _draw_addition(state.types, rng, dims, rho, window)
        if new_ct is None or new_ct in state.types:
            return _invalid("add_cell")
        eps = float(rng.normal(0.0, sigma_c))
        types = state.types | {new_ct}
        if not _in_support(types, dims, window):
            return MoveProposal("add_cell", state.with_z(types, add_cell(z, new_ct, eps)),
                                log_jacobian=math.log(split_jacobian(c)))
        new_z = add_cell(z, new_ct, implied_phi(z, new_ct, dims) + eps)
        removable = sum(1 for s in new_z.cells if len(s) == 1 and EMPTY not in s)
        log_fwd = log_addition_probability(state.types, new_ct, dims, rho, window) + _log_normal(eps, sigma_c)
        return MoveProposal("add_cell", state.with_z(types, new_z), -math.log(removable) - log_fwd,
                            math.log(split_jacobian(c)))
    removable = [k for k, s in enumerate(z.cells) if len(s) == 1 and EMPTY not in s]
    if not removable:
        return _invalid("delete_cell")
    k = removable[int(rng.integers(len(removable)))]
    (ct,) = z.cells[k]
    types = state.types - {ct}
    new_z = delete_cell(z, k)
    cand = state.with_z(types, new_z)
    if not _in_support(types, dims, window):
        return MoveProposal("delete_cell", cand, log_jacobian=math.log(merge_jacobian(c)))
    log_gen = log_addition_probability(types, ct, dims, rho, window)
    if log_gen == NEG_INF:
        return _invalid("delete_cell")
    eps = c * z.phi[k] / (c - 1) - implied_phi(new_z, ct, dims)
    log_rev = log_gen + _log_normal(eps, sigma_c)
    return MoveProposal("delete_cell", cand, log_rev + math.log(len(removable)),
                        math.log(merge_jacobian(c)))


def propose_kappa(state: ModelState, rng: np.random.Generator, step: float) -> MoveProposal:
    if not state.kappa:
        return _invalid("kappa")
    k = int(rng.integers(len(state.kappa)))
    kappa = list(state.kappa)
    kappa[k] += float(rng.normal(0.0, step))
    return MoveProposal("kappa", replace(state, kappa=tuple(kappa)))


# -- acceptance ------------------------------------------------------------------

def log_prior(state: ModelState, dims: Dims, config: PriorConfig = PriorConfig()) -> float:
    """Prior of (M, partition, phi, kappa) given theta."""
    lp = log_prior_model(state.types, state.z, state.theta, dims, config)
    if lp == NEG_INF:
        return lp
    return lp + log_prior_kappa(state.kappa, config.kappa_sd)


class ExchangeEvaluator:
    """Approximate-exchange likelihood ratios using sufficient statistics.

    ``U(x | params) = sum_T beta_T * count_T(x) + sum_k kappa_k * Y_k(x)``, so
    the log-likelihood ratio needs only counts on the data and on the
    auxiliary field.  Counts on the data are cached until the data change.
    """

    def __init__(self, data: Grid, aux_burn_in: int = 200, aux_init: str = "random"):
        self.data = data
        self.dims = data.dims
        self.aux_burn_in = aux_burn_in
        self.aux_init = aux_init
        self.aux_runs = 0
        self._cache: dict[CliqueType, int] = {}
        self._free = np.ones(data.x.shape, dtype=bool)

    def data_changed(self) -> None:
        self._cache.clear()

    def _data_count(self, ct: CliqueType) -> int:
        if ct not in self._cache:
            self._cache[ct] = clique_count(self.data.x, ct)
        return self._cache[ct]

    def auxiliary(self, state: ModelState, rng: np.random.Generator) -> np.ndarray:
        dims = self.dims
        if self.aux_init == "data":
            w = self.data.x.copy()
        else:
            w = (rng.random(self.data.x.shape) < 0.5).astype(np.uint8)
        h = self.data.field(state.kappa) if state.kappa else np.zeros(w.shape)
        run_sweeps(state_kernel(state.z, dims), w, h, self._free, self.aux_burn_in, rng)
        self.aux_runs += 1
        return w

    def log_likelihood_ratio(self, current: ModelState, candidate: ModelState,
                             rng: np.random.Generator) -> float:
        b_cur = state_beta(current.z, self.dims)
        b_new = state_beta(candidate.z, self.dims)
        delta = {}
        for ct in set(b_cur) | set(b_new):
            if ct == EMPTY:
                continue
            d = b_new.get(ct, 0.0) - b_cur.get(ct, 0.0)
            if d != 0.0:
                delta[ct] = d
        dk = [a - b for a, b in zip(candidate.kappa, current.kappa)]
        if not delta and not any(dk):
            return 0.0
        w = self.auxiliary(candidate, rng)
        out = 0.0
        for ct, d in delta.items():
            out += d * (self._data_count(ct) - clique_count(w, ct))
        if any(dk):
            diff = self.data.covariate_totals() - self.data.covariate_totals(w)
            out += float(np.dot(dk, diff))
        return out


def exchange_log_acceptance(current: ModelState, proposal: MoveProposal, data: Grid,
                            rng: np.random.Generator, aux_burn_in: int = 200,
                            prior: PriorConfig = PriorConfig(),
                            evaluator: ExchangeEvaluator | None = None) -> float:
    if not proposal.valid:
        return NEG_INF
    dims = data.dims
    lp_new = log_prior(proposal.candidate, dims, prior)
    if lp_new == NEG_INF:
        return NEG_INF
    lp_cur = log_prior(current, dims, prior)
    if evaluator is None:
        evaluator = ExchangeEvaluator(data, aux_burn_in)
    ll = evaluator.log_likelihood_ratio(current, proposal.candidate, rng)
    return ll + lp_new - lp_cur + proposal.log_proposal_ratio + proposal.log_jacobian


# -- hyper-parameters -----------------------------------------------------------

def update_hypers(state: ModelState, rng: np.random.Generator, config: SamplerConfig,
                  dims: Dims) -> tuple[ModelState, dict[str, bool]]:
    prior = config.prior
    theta = state.theta
    accepted = {}
    m2 = layer(state.types, 2)

    eta = theta.eta + float(rng.normal(0.0, config.sigma_eta))
    ok = False
    if eta > 0:
        new = replace(theta, eta=eta)
        log_a = (log_prior_m2(m2, eta, dims, prior.window) + log_hyper_prior(new, prior)
                 - log_prior_m2(m2, theta.eta, dims, prior.window) - log_hyper_prior(theta, prior))
        ok = math.log(rng.random()) < log_a
        if ok:
            theta = new
    accepted["eta"] = ok

    p_star = float(rng.random())
    log_a = (log_prior_higher(state.types, p_star, dims, prior.window)
             - log_prior_higher(state.types, theta.p_star, dims, prior.window))
    ok = 0 < p_star < 1 and math.log(rng.random()) < log_a
    if ok:
        theta = replace(theta, p_star=p_star)
    accepted["p_star"] = ok

    s2 = theta.sigma_phi_sq + float(rng.normal(0.0, config.sigma_sigma_phi))
    ok = False
    if s2 > 0:
        new = replace(theta, sigma_phi_sq=s2)
        log_a = (log_prior_phi(state.z, s2) + log_hyper_prior(new, prior)
                 - log_prior_phi(state.z, theta.sigma_phi_sq) - log_hyper_prior(theta, prior))
        ok = math.log(rng.random()) < log_a
        if ok:
            theta = new
    accepted["sigma_phi_sq"] = ok
    return replace(state, theta=theta), accepted


def update_kappa(state: ModelState, data: Grid, rng: np.random.Generator, step: float,
                 aux_burn_in: int = 200, prior: PriorConfig = PriorConfig(),
                 evaluator: ExchangeEvaluator | None = None) -> tuple[ModelState, bool]:
    prop = propose_kappa(state, rng, step)
    if not prop.valid:
        return state, False
    log_a = exchange_log_acceptance(state, prop, data, rng, aux_burn_in, prior, evaluator)
    if math.log(rng.random()) < log_a:
        return prop.candidate, True
    return state, False


# -- chain ----------------------------------------------------------------------

def check_state(state: ModelState, dims: Dims) -> None:
    if EMPTY not in state.types:
        raise InvariantViolation("empty clique type missing from M")
    if not is_dense(state.types, dims):
        raise InvariantViolation("M is not dense")
    if state.z.types != state.types:
        raise InvariantViolation("partition does not cover M exactly")
    if abs(state.z.phi_sum()) >= SUM_TOL:
        raise InvariantViolation(f"sum-to-zero violated: {state.z.phi_sum()}")


@dataclass
class ChainCounters:
    proposed: dict = field(default_factory=dict)
    accepted: dict = field(default_factory=dict)
    invalid: int = 0
    prior_rejected: int = 0
    aux_skipped: int = 0
    boundary_scans: int = 0
    hyper_accepted: dict = field(default_factory=lambda: {"eta": 0, "p_star": 0, "sigma_phi_sq": 0})
    hyper_proposed: int = 0

    def record(self, kind: str, ok: bool) -> None:
        self.proposed[kind] = self.proposed.get(kind, 0) + 1
        self.accepted[kind] = self.accepted.get(kind, 0) + int(ok)

    def rates(self) -> dict:
        out = {k: {"proposed": n, "accepted": self.accepted.get(k, 0),
                   "rate": self.accepted.get(k, 0) / n if n else None}
               for k, n in sorted(self.proposed.items())}
        for k, n in self.hyper_accepted.items():
            p = self.hyper_proposed
            out[k] = {"proposed": p, "accepted": n, "rate": n / p if p else None}
        return out

    def to_json(self) -> dict:
        return {"proposed": self.proposed, "accepted": self.accepted, "invalid": self.invalid,
                "prior_rejected": self.prior_rejected, "aux_skipped": self.aux_skipped,
                "boundary_scans": self.boundary_scans, "hyper_accepted": self.hyper_accepted,
                "hyper_proposed": self.hyper_proposed}

    @classmethod
    def from_json(cls, data: dict) -> "ChainCounters":
        return cls(**data)


def second_order_state(data: Grid, config: SamplerConfig,
                       x_b: np.ndarray | None = None) -> ModelState:
    """Untied start on the single and the four nearest-neighbour pair types,
    with phi and kappa taken from the pseudo-likelihood fit to the data."""
    nt = named_types(data.dims)
    types = {EMPTY} | {nt[k] for k in ("single", "vpair", "hpair", "diag", "antidiag")
                       if in_window(nt[k], data.dims, config.window)}
    beta, kappa = pseudo_likelihood_fit(data, types)
    phi = phi_from_beta(beta, data.dims)
    z = TiedState.untied(phi)
    z = TiedState(z.cells, tuple(project_sum_to_zero(z.phi)))
    return ModelState(z.types, z, config.initial_theta(), kappa, x_b)


def iteration_rng(seed: int, iteration: int) -> np.random.Generator:
    return np.random.default_rng([seed, iteration])


class Chain:
    """One RJMCMC chain; ``step(i)`` performs iteration ``i`` with its own keyed stream."""

    def __init__(self, data: Grid, config: SamplerConfig, state: ModelState | None = None,
                 counters: ChainCounters | None = None, aux_runs: int = 0):
        n_cov = data.n_covariates
        if len(config.proposal_probs) == 7 and n_cov == 0:
            raise ValueError("a 7-entry proposal_probs needs covariates in the data")
        if len(config.proposal_probs) == 6 and n_cov > 0:
            raise ValueError("data with covariates needs a 7-entry proposal_probs")
        self.config = config
        self.dims = data.dims
        self.data = data.copy()
        self.prior = config.prior
        if state is None:
            x_b = self.data.x[~self.data.observed].copy() if self.data.has_boundary else None
            if config.init == "second_order":
                state = second_order_state(self.data, config, x_b)
            else:
                state = ModelState.initial(config.initial_theta(), n_cov, x_b)
        elif state.x_b is not None:
            self.data.x[~self.data.observed] = state.x_b
        if len(state.kappa) != n_cov:
            raise ValueError("kappa length does not match the number of covariates")
        self.state = state
        self.counters = counters or ChainCounters()
        self.evaluator = ExchangeEvaluator(self.data, config.aux_burn_in, config.aux_init)
        self.evaluator.aux_runs = aux_runs
        self._boundary = ~self.data.observed

    def propose(self, move: int, rng: np.random.Generator) -> MoveProposal:
        cfg, s, dims, win = self.config, self.state, self.dims, self.config.window
        if move == 0:
            return propose_random_walk(s, rng, cfg.sigma_w)
        if move == 1:
            return propose_switch_cell(s, rng)
        if move == 2:
            return propose_split_merge(s, rng, cfg.sigma_g)
        if move == 3:
            return propose_replace_type(s, rng, dims)
        if move == 4:
            return propose_add_delete_fixed(s, rng, dims, cfg.rho, win)
        if move == 5:
            return propose_add_delete_with_cell(s, rng, dims, cfg.rho, cfg.sigma_c, win)
        return propose_kappa(s, rng, cfg.kappa_step)

    def step(self, iteration: int) -> dict:
        rng = iteration_rng(self.config.seed, iteration)
        cfg = self.config
        move = int(rng.choice(len(cfg.proposal_probs), p=cfg.proposal_probs))
        prop = self.propose(move, rng)
        ok = False
        if not prop.valid:
            self.counters.invalid += 1
        else:
            lp_new = log_prior(prop.candidate, self.dims, self.prior)
            if lp_new == NEG_INF:
                self.counters.prior_rejected += 1
            else:
                before = self.evaluator.aux_runs
                ll = self.evaluator.log_likelihood_ratio(self.state, prop.candidate, rng)
                if self.evaluator.aux_runs == before:
                    self.counters.aux_skipped += 1
                log_a = (ll + lp_new - log_prior(self.state, self.dims, self.prior)
                         + prop.log_proposal_ratio + prop.log_jacobian)
                ok = math.log(rng.random()) < log_a
        if ok:
            self.state = prop.candidate
        self.counters.record(prop.kind, ok)

        if self.data.has_boundary:
            self._scan_boundary(rng)

        if not cfg.fixed_hypers:
            self.state, hyp = update_hypers(self.state, rng, cfg, self.dims)
            self.counters.hyper_proposed += 1
            for k, v in hyp.items():
                self.counters.hyper_accepted[k] += int(v)

        if (iteration + 1) % cfg.reproject_every == 0:
            self.state = replace(self.state, z=self.state.z.centered())
        if cfg.debug:
            check_state(self.state, self.dims)
        return {"move": prop.kind, "accepted": bool(ok)}

    def _scan_boundary(self, rng: np.random.Generator) -> None:
        s = self.state
        h = self.data.field(s.kappa) if s.kappa else np.zeros(self.data.x.shape)
        run_sweeps(state_kernel(s.z, self.dims), self.data.x, h, self._boundary, 1, rng)
        self.evaluator.data_changed()
        self.counters.boundary_scans += 1
        self.state = replace(s, x_b=self.data.x[self._boundary].copy())

    def record(self, iteration: int, accept: dict) -> dict:
        out = {"iter": iteration}
        out.update(self.state.to_json())
        out["accept"] = accept
        return out

    def run(self, start: int = 0, stop: int | None = None) -> Iterator[dict]:
        stop = self.config.iterations if stop is None else stop
        for it in range(start, stop):
            accept = self.step(it)
            if (it + 1) % self.config.thin == 0:
                yield self.record(it, accept)


def run_chain(data: Grid, config: SamplerConfig, state: ModelState | None = None) -> Iterator[dict]:
    """Trace records of a fresh chain, one every ``config.thin`` iterations."""
    yield from Chain(data, config, state).run()

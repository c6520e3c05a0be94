"""Prior over clique structure, parameter tying, phi values and hyper-parameters.

The structure prior factorizes over orders: independent inclusion of pair
types with probability ``exp(-eta * d)``, a fair coin for the single-node
type when no pairs are on, and sequential inclusion of higher-order types
that keep the set dense, each with probability ``p_star``.  All types are
restricted to an offset window so that the candidate universe is finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

import numpy as np

from .lattice import (
    DEFAULT_WINDOW,
    EMPTY,
    SINGLE,
    CliqueType,
    Dims,
    in_window,
    is_dense,
    layer,
    pair_distance,
    pair_types,
    upsilon,
)
from .parametrization import SUM_TOL, TiedState, project_sum_to_zero

NEG_INF = -math.inf
LOG_HALF = math.log(0.5)


@dataclass(frozen=True)
class HyperParams:
    eta: float = 1.5
    p_star: float = 0.5
    sigma_phi_sq: float = 10.0

    def is_valid(self) -> bool:
        return self.eta > 0 and 0 < self.p_star < 1 and self.sigma_phi_sq > 0

    def to_json(self) -> dict:
        return {"eta": self.eta, "p_star": self.p_star, "sigma_phi_sq": self.sigma_phi_sq}


@dataclass(frozen=True)
class PriorConfig:
    """Fixed constants of the prior.

    The gamma shapes and rates reproduce mean 3 / sd sqrt(3) for eta and
    mean 10 / variance 100 for sigma_phi_sq.
    """

    window: int | None = DEFAULT_WINDOW
    eta_shape: float = 3.0
    eta_rate: float = 1.0
    sigma_shape: float = 1.0
    sigma_rate: float = 0.1
    kappa_sd: float = 10.0


def _log_gamma_pdf(x: float, shape: float, rate: float) -> float:
    if x <= 0:
        return NEG_INF
    return shape * math.log(rate) - math.lgamma(shape) + (shape - 1) * math.log(x) - rate * x


def _log_normal_pdf(x: float, sd_sq: float) -> float:
    return -0.5 * math.log(2 * math.pi * sd_sq) - 0.5 * x * x / sd_sq


def inclusion_probability(ct: CliqueType, eta: float, dims: Dims) -> float:
    return math.exp(-eta * pair_distance(ct, dims))


def log_prior_m2(m2: Iterable[CliqueType], eta: float, dims: Dims,
                 window: int | None = DEFAULT_WINDOW, universe=None) -> float:
    """Independent inclusion of every pair type in ``universe``.

    ``universe`` defaults to all pair types inside the offset window.
    """
    members = set(m2)
    if any(ct.order != 2 for ct in members):
        raise ValueError("log_prior_m2 takes order-2 types only")
    universe = pair_types(dims, window) if universe is None else tuple(universe)
    if not members.issubset(universe):
        return NEG_INF
    if eta < 0:
        return NEG_INF
    total = 0.0
    for ct in universe:
        a = eta * pair_distance(ct, dims)
        if ct in members:
            total -= a
        elif a == 0.0:
            return NEG_INF
        else:
            total += math.log(-math.expm1(-a))
    return total


def expected_neighbours(eta: float, dims: Dims, window: int | None = DEFAULT_WINDOW) -> float:
    return 2.0 * sum(inclusion_probability(ct, eta, dims) for ct in pair_types(dims, window))


def log_prior_m1_given_m2(m1_nonempty: bool, m2_nonempty: bool) -> float:
    if not m2_nonempty:
        return LOG_HALF
    return 0.0 if m1_nonempty else NEG_INF


@lru_cache(maxsize=4096)
def _higher_counts(members: frozenset, dims: Dims, window: int | None) -> tuple[int, int] | None:
    """(candidates switched on, candidates left off) over all orders k >= 3.

    ``None`` when the set lies outside the support (non-dense, or a type of
    order k that is not an order-k candidate).
    """
    if not is_dense(members, dims):
        return None
    on_total = off_total = 0
    k = 3
    while True:
        cands = upsilon(members, k, dims, window)
        if not cands:
            break
        on = sum(1 for ct in cands if ct in members)
        if on != len(layer(members, k)):
            return None
        on_total += on
        off_total += len(cands) - on
        k += 1
    if any(ct.order >= k for ct in members):
        return None
    return on_total, off_total


def log_prior_higher(types: Iterable[CliqueType], p_star: float, dims: Dims,
                     window: int | None = DEFAULT_WINDOW) -> float:
    counts = _higher_counts(frozenset(types), dims, window)
    if counts is None or not 0 < p_star < 1:
        return NEG_INF
    on, off = counts
    return on * math.log(p_star) + off * math.log1p(-p_star)


def log_prior_structure(types: Iterable[CliqueType], theta: HyperParams, dims: Dims,
                        window: int | None = DEFAULT_WINDOW) -> float:
    """log p(M | eta, p_star): support checks plus the three factors."""
    members = set(types)
    if EMPTY not in members or not is_dense(members, dims):
        return NEG_INF
    if any(not in_window(ct, dims, window) for ct in members):
        return NEG_INF
    m2 = layer(members, 2)
    total = log_prior_m2(m2, theta.eta, dims, window)
    if total == NEG_INF:
        return total
    total += log_prior_m1_given_m2(SINGLE in members, bool(m2))
    if total == NEG_INF:
        return total
    return total + log_prior_higher(members, theta.p_star, dims, window)


def stirling2(n: int, r: int) -> int:
    """Stirling number of the second kind, exact."""
    if r < 0 or n < 0:
        raise ValueError("stirling2 needs non-negative arguments")
    if r > n:
        return 0
    if n == 0:
        return 1
    total = sum(math.comb(r, k) * (-1) ** (r - k) * k ** n for k in range(r + 1))
    return total // math.factorial(r)


@lru_cache(maxsize=None)
def _partition_size_log_probs(n: int) -> tuple[float, ...]:
    """log p(number of cells = r | n types) for r = 1..n."""
    g = [stirling2(n, r) for r in range(1, n + 1)]
    r_max = 1 + max(range(n), key=lambda k: (g[k], -k))
    log_g = [math.log(v) for v in g]
    log_w = []
    for r in range(1, n + 1):
        if r < r_max:
            log_w.append(0.0)
        else:
            log_w.append(log_g[r - 1] - log_g[r_max - 1] - (r - r_max) * math.log(2.0))
    top = max(log_w)
    log_norm = top + math.log(sum(math.exp(v - top) for v in log_w))
    return tuple(v - log_norm for v in log_w)


def partition_size_log_prob(n: int, r: int) -> float:
    if not 1 <= r <= n:
        return NEG_INF
    return _partition_size_log_probs(n)[r - 1]


@lru_cache(maxsize=None)
def _log_stirling2(n: int, r: int) -> float:
    return math.log(stirling2(n, r))


def log_prior_partition(cells) -> float:
    """log p(partition | M) for a TiedState or an iterable of cells."""
    if isinstance(cells, TiedState):
        cells = cells.cells
    cells = list(cells)
    if any(len(c) == 0 for c in cells):
        raise ValueError("partition cells must be nonempty")
    n = sum(len(c) for c in cells)
    r = len(cells)
    if n == 0:
        raise ValueError("cannot partition an empty set")
    return partition_size_log_prob(n, r) - _log_stirling2(n, r)


def log_prior_phi(z: TiedState, sigma_phi_sq: float) -> float:
    if abs(z.phi_sum()) > SUM_TOL * max(1, len(z)):
        raise ValueError(f"phi values violate the sum-to-zero constraint: sum={z.phi_sum()}")
    if sigma_phi_sq <= 0:
        return NEG_INF
    return sum(_log_normal_pdf(v, sigma_phi_sq) for v in z.phi)


def log_hyper_prior(theta: HyperParams, config: PriorConfig = PriorConfig()) -> float:
    if not 0 < theta.p_star < 1:
        return NEG_INF
    return (_log_gamma_pdf(theta.eta, config.eta_shape, config.eta_rate)
            + _log_gamma_pdf(theta.sigma_phi_sq, config.sigma_shape, config.sigma_rate))


def log_prior_kappa(kappa: Iterable[float], sd: float = 10.0) -> float:
    return sum(_log_normal_pdf(k, sd * sd) for k in kappa)


def log_prior_model(types, z: TiedState, theta: HyperParams, dims: Dims,
                    config: PriorConfig = PriorConfig()) -> float:
    """log p(z | M, theta) + log p(M | theta), without the hyper-prior."""
    lp = log_prior_structure(types, theta, dims, config.window)
    if lp == NEG_INF:
        return lp
    return lp + log_prior_partition(z) + log_prior_phi(z, theta.sigma_phi_sq)


def _uniform_partition(items: list, r: int, rng: np.random.Generator) -> list[list]:
    """Uniform draw among partitions of ``items`` into exactly ``r`` cells."""
    n = len(items)
    if r == 0:
        return []
    if n == r:
        return [[it] for it in items]
    last = items[-1]
    p_alone = stirling2(n - 1, r - 1) / stirling2(n, r)
    if rng.random() < p_alone:
        return _uniform_partition(items[:-1], r - 1, rng) + [[last]]
    cells = _uniform_partition(items[:-1], r, rng)
    cells[int(rng.integers(r))].append(last)
    return cells


def sample_prior(theta: HyperParams, dims: Dims, rng: np.random.Generator,
                 window: int | None = DEFAULT_WINDOW) -> tuple[frozenset, TiedState]:
    members = {EMPTY}
    for ct in pair_types(dims, window):
        if rng.random() < inclusion_probability(ct, theta.eta, dims):
            members.add(ct)
    if len(members) > 1 or rng.random() < 0.5:
        members.add(SINGLE)
    k = 3
    while True:
        cands = sorted(upsilon(members, k, dims, window))
        if not cands:
            break
        for ct in cands:
            if rng.random() < theta.p_star:
                members.add(ct)
        k += 1
    types = sorted(members)
    probs = np.exp(_partition_size_log_probs(len(types)))
    r = 1 + int(rng.choice(len(types), p=probs / probs.sum()))
    cells = _uniform_partition(types, r, rng)
    phi = project_sum_to_zero(rng.normal(0.0, math.sqrt(theta.sigma_phi_sq), size=r))
    return frozenset(members), TiedState.build(cells, phi.tolist())

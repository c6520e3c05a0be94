"""Interaction (beta) and energy-value (phi) parametrizations.

``phi[T]`` is the energy of the configuration with one instance of ``T``
black and everything else white; ``beta[T]`` is the pseudo-Boolean
interaction coefficient shared by all instances of ``T``.  On a dense set of
types the two are related by a triangular (Moebius) transform.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .lattice import EMPTY, CliqueType, Dims, is_dense, sub_type_counts

SUM_TOL = 1e-9


class NotDenseError(ValueError):
    pass


def _check_dense(domain: Iterable[CliqueType], dims: Dims) -> None:
    if not is_dense(domain, dims):
        raise NotDenseError("assignment domain is not a dense set of clique types")


def phi_from_beta(beta: Mapping[CliqueType, float], dims: Dims) -> dict[CliqueType, float]:
    _check_dense(beta, dims)
    phi = {}
    for ct in sorted(beta):
        val = beta[ct]
        for sub, count in sub_type_counts(ct, dims).items():
            val += count * beta[sub]
        phi[ct] = val
    return phi


def beta_from_phi(phi: Mapping[CliqueType, float], dims: Dims) -> dict[CliqueType, float]:
    _check_dense(phi, dims)
    beta = {}
    for ct in sorted(phi):
        val = phi[ct]
        for sub, count in sub_type_counts(ct, dims).items():
            sign = -1.0 if (ct.order - sub.order - 1) % 2 else 1.0
            val -= sign * count * phi[sub]
        beta[ct] = val
    return beta


def phi_of_type(beta: Mapping[CliqueType, float], ct: CliqueType, dims: Dims) -> float:
    """phi for any type, on or off, given beta on a dense set (zero elsewhere)."""
    val = beta.get(ct, 0.0)
    for sub, count in sub_type_counts(ct, dims).items():
        val += count * beta.get(sub, 0.0)
    return val


def project_sum_to_zero(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    return arr - arr.mean() if arr.size else arr.copy()


@dataclass(frozen=True)
class TiedState:
    """Partition of a set of clique types into cells sharing one phi value.

    Cells are kept sorted by their smallest member so that equal states
    compare and serialize identically.
    """

    cells: tuple[frozenset[CliqueType], ...]
    phi: tuple[float, ...]

    def __post_init__(self):
        if len(self.cells) != len(self.phi):
            raise ValueError("cells and phi must have equal length")
        if any(len(c) == 0 for c in self.cells):
            raise ValueError("partition cells must be nonempty")
        seen = set()
        for c in self.cells:
            if seen & c:
                raise ValueError("partition cells overlap")
            seen |= c

    @classmethod
    def build(cls, cells: Iterable[Iterable[CliqueType]], phi: Iterable[float]) -> "TiedState":
        pairs = [(frozenset(c), float(v)) for c, v in zip(cells, phi)]
        pairs.sort(key=lambda p: min(p[0]).sort_key())
        return cls(tuple(c for c, _ in pairs), tuple(v for _, v in pairs))

    @classmethod
    def untied(cls, phi: Mapping[CliqueType, float]) -> "TiedState":
        return cls.build([[ct] for ct in phi], [phi[ct] for ct in phi])

    @property
    def types(self) -> frozenset[CliqueType]:
        return frozenset().union(*self.cells)

    def __len__(self) -> int:
        return len(self.cells)

    def cell_index(self, ct: CliqueType) -> int:
        for k, c in enumerate(self.cells):
            if ct in c:
                return k
        raise KeyError(ct)

    def phi_sum(self) -> float:
        return float(sum(self.phi))

    def centered(self) -> "TiedState":
        return TiedState(self.cells, tuple(project_sum_to_zero(self.phi).tolist()))

    def to_json(self) -> dict:
        return {
            "partition": [[ct.to_list() for ct in sorted(c)] for c in self.cells],
            "phi_S": list(self.phi),
        }


def expand_tied(z: TiedState) -> dict[CliqueType, float]:
    return {ct: v for cell, v in zip(z.cells, z.phi) for ct in cell}


def tie_equal(phi: Mapping[CliqueType, float], tol: float = 1e-9) -> TiedState:
    """Group types with (numerically) equal phi values into shared cells."""
    groups: list[tuple[float, list[CliqueType]]] = []
    for ct in sorted(phi):
        for val, members in groups:
            if abs(val - phi[ct]) <= tol:
                members.append(ct)
                break
        else:
            groups.append((phi[ct], [ct]))
    return TiedState.build([g[1] for g in groups], [g[0] for g in groups])


def relative_phi(phi: Mapping[CliqueType, float]) -> dict[CliqueType, float]:
    """phi of each nonempty type measured from phi of the empty type."""
    base = phi[EMPTY]
    return {ct: v - base for ct, v in phi.items() if ct != EMPTY}

"""Shared model builders for the tests."""

from mrfstruct.lattice import EMPTY, SINGLE, Dims, named_types
from mrfstruct.mrf import ModelSpec
from mrfstruct.parametrization import TiedState, project_sum_to_zero

# phi cell values of the 2x2-clique model (empty, single, nearest pairs,
# diagonal pairs, triples, square)
THREE_PHASE_PHI = (0.4667, 0.3667, -0.2833, 0.6667, -0.5833, -0.6333)


def ising_beta(dims: Dims, coupling: float) -> dict:
    """Ising model in beta form: single -4c, nearest-neighbour pairs 2c."""
    nt = named_types(dims)
    return {EMPTY: 0.0, SINGLE: -4 * coupling, nt["vpair"]: 2 * coupling, nt["hpair"]: 2 * coupling}


def ising_spec(dims: Dims, coupling: float = 0.4) -> ModelSpec:
    return ModelSpec.from_beta(ising_beta(dims, coupling), dims)


def three_phase_state(dims: Dims) -> TiedState:
    nt = named_types(dims)
    cells = [
        [EMPTY],
        [SINGLE],
        [nt["hpair"], nt["vpair"]],
        [nt["diag"], nt["antidiag"]],
        [nt["triple_nw"], nt["triple_ne"], nt["triple_sw"], nt["triple_se"]],
        [nt["square"]],
    ]
    return TiedState.build(cells, project_sum_to_zero(THREE_PHASE_PHI).tolist())


def three_phase_spec(dims: Dims) -> ModelSpec:
    return ModelSpec.from_tied(three_phase_state(dims), dims)

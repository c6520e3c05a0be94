"""Bayesian structure inference for stationary binary Markov random fields on torus lattices."""

from .lattice import EMPTY, SINGLE, CliqueType, Dims, canonicalize, clique_type, named_types
from .mrf import Grid, ModelSpec, energy, exact_distribution, gibbs_sweep, pseudo_likelihood_fit, sample_field
from .parametrization import TiedState, beta_from_phi, expand_tied, phi_from_beta
from .priors import HyperParams, sample_prior
from .sampler import Chain, ModelState, SamplerConfig, run_chain

__all__ = [
    "EMPTY", "SINGLE", "CliqueType", "Dims", "canonicalize", "clique_type", "named_types",
    "Grid", "ModelSpec", "energy", "exact_distribution", "gibbs_sweep", "pseudo_likelihood_fit",
    "sample_field",
    "TiedState", "beta_from_phi", "expand_tied", "phi_from_beta",
    "HyperParams", "sample_prior",
    "Chain", "ModelState", "SamplerConfig", "run_chain",
]
__version__ = "0.1.0"

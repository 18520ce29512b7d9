"""Samplers, couplings and Monte-Carlo checks for the vertex-reinforced
jump process, the edge-reinforced random walk and the beta-field."""

from .betafield import BetaSample, green, h_from_beta, nu_log_density, sample_beta, sample_gig_half
from .coupling import CoupledTriple, GammaZ, TiltedCouple, couple_tilted, couple_triple
from .electrical import effective_conductance, effective_weight, psi_ratio, z_law_density
from .graphs import WeightedGraph, ball_quotient, build_graph, lattice_box, quotient
from .linalg import NotPositiveDefiniteError, block_inverse, invert_pd
from .stats import McEstimate, TestReport

__version__ = "0.1.0"

__all__ = [
    "BetaSample",
    "CoupledTriple",
    "GammaZ",
    "McEstimate",
    "NotPositiveDefiniteError",
    "TestReport",
    "TiltedCouple",
    "WeightedGraph",
    "ball_quotient",
    "block_inverse",
    "build_graph",
    "couple_tilted",
    "couple_triple",
    "effective_conductance",
    "effective_weight",
    "green",
    "h_from_beta",
    "invert_pd",
    "lattice_box",
    "nu_log_density",
    "psi_ratio",
    "quotient",
    "sample_beta",
    "sample_gig_half",
    "z_law_density",
]

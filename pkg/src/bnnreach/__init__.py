"""Certified reach-avoid lower bounds for closed loops with Bayesian neural network dynamics."""

from .abstraction import OUTSIDE, Label, Obstacle, Partition, RegionSpec, build_partition, cells_intersecting, locate
from .certifier import CertConfig, ValueTable, WeightBoxUnion, accept_box, certify, epsilon_from_eta, insert_disjoint
from .core import Box, Interval, erf, erf_inv, interval_affine, make_rng
from .neural import MLPArchitecture, Network, forward, gradient
from .oracle import exact_value_oracle
from .posterior import DiagGaussianPosterior, DynamicsDataset, VIConfig, box_mass, fit_vi, sample_weights
from .propagation import ibp_bnn, ibp_policy, inflate
from .simulation import Environment, bnn_step, env_step, estimate_reach, generate_dataset
from .synthesis import ActionGrid, SynthesizedStrategy, improve_policy, synthesize_grid

__version__ = "0.1.0"

__all__ = [
    "OUTSIDE",
    "Label",
    "Obstacle",
    "Partition",
    "RegionSpec",
    "build_partition",
    "cells_intersecting",
    "locate",
    "CertConfig",
    "ValueTable",
    "WeightBoxUnion",
    "accept_box",
    "certify",
    "epsilon_from_eta",
    "insert_disjoint",
    "Box",
    "Interval",
    "erf",
    "erf_inv",
    "interval_affine",
    "make_rng",
    "MLPArchitecture",
    "Network",
    "forward",
    "gradient",
    "exact_value_oracle",
    "DiagGaussianPosterior",
    "DynamicsDataset",
    "VIConfig",
    "box_mass",
    "fit_vi",
    "sample_weights",
    "ibp_bnn",
    "ibp_policy",
    "inflate",
    "Environment",
    "bnn_step",
    "env_step",
    "estimate_reach",
    "generate_dataset",
    "ActionGrid",
    "SynthesizedStrategy",
    "improve_policy",
    "synthesize_grid",
]

"""
Data models for the thermodynamic-formalism toolkit
"""

from . import cylinder_space, experiment_config, fields, generator, gibbs_chain, rate_function, trajectory

__all__ = [
    "cylinder_space",
    "fields",
    "generator",
    "gibbs_chain",
    "rate_function",
    "trajectory",
    "experiment_config",
]

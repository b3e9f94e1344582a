"""Sophisticated active-inference planning on the windy grid-world, with Q-learning baselines."""
from .genmodel import GenerativeModel, LikelihoodModel, ModelError, make_preferences, mdp_model, pomdp_model
from .gridworld import DEFAULT_GEOMETRY, Action, Environment, GridGeometry, Stochasticity, make_environment
from .harness import AgentSpec, BenchmarkConfig, ConfigError, ResultRow, emit_results, run_benchmark

__version__ = "0.1.0"

__all__ = [
    "Action", "AgentSpec", "BenchmarkConfig", "ConfigError", "DEFAULT_GEOMETRY", "Environment",
    "GenerativeModel", "GridGeometry", "LikelihoodModel", "ModelError", "ResultRow", "Stochasticity",
    "emit_results", "make_environment", "make_preferences", "mdp_model", "pomdp_model", "run_benchmark",
]

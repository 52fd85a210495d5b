"""J2-perturbed multi-revolution Lambert solver with a learned initial guess."""

from .astro import JUPITER, BodyParams, DomainError, OrbitalElements, StateCartesian, get_body
from .lambert import LambertError, LambertQuery, LambertSolution, solve_kepler_lambert
from .mlp import MlpConfig, MlpModel, TrainConfig, load_model, save_model, train
from .pipeline import PerturbedLambertQuery, PipelineResult, solve_perturbed_lambert
from .propagator import PropagationError, PropagatorConfig, propagate, propagate_rv
from .samples import EXTENDED_RANGES, TABLE1_RANGES, SampleForm, SampleRanges, generate_dataset
from .shooting import ShootingConfig, ShootingResult, shoot

__version__ = "0.1.0"

__all__ = [
    "JUPITER", "BodyParams", "DomainError", "OrbitalElements", "StateCartesian", "get_body",
    "LambertError", "LambertQuery", "LambertSolution", "solve_kepler_lambert",
    "MlpConfig", "MlpModel", "TrainConfig", "load_model", "save_model", "train",
    "PerturbedLambertQuery", "PipelineResult", "solve_perturbed_lambert",
    "PropagationError", "PropagatorConfig", "propagate", "propagate_rv",
    "EXTENDED_RANGES", "TABLE1_RANGES", "SampleForm", "SampleRanges", "generate_dataset",
    "ShootingConfig", "ShootingResult", "shoot",
]

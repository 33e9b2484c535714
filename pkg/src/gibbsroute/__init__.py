"""Gibbsian multihop routeing in dense wireless networks.

Submodules: pathloss, geometry, interference (spatial core); limit
(high-density trajectory measures); gibbs (finite-density Gibbs model and
annealing); asymptotics; dense (dense subarea); game (routeing game);
config, manifest, experiments, cli (experiment runner).
"""
from .pathloss import PathLoss, IdealHertz, ShiftedPower, Exponential, DivergenceError
from .geometry import Geometry, UserConfiguration, sample_users, sir, sir_inverse_table
from .interference import InterferenceField, build_interference_field, ball_interference
from .limit import LimitKernel, Estimate
from .gibbs import GibbsModel, TrajectorySpace, run_chain, anneal, total_variation
from .asymptotics import RateFunction, argmax_k_probe, hop_scale, strong_gamma_check
from .dense import SubareaSpec, twohop_condition, ma_rate_field
from .game import GameInstance, Strategy, costs, equilibria_and_optima, best_response_dynamics, example_nonselfish
from .seeds import derive_seed, rng_for

__version__ = "0.1.0"

"""Distributed adaptive output-consensus toolkit.

Builds per-agent observer chains that share only measured scalar outputs,
synthesizes the Riccati-based injection gain that makes the stacked
observer bank contract, generates adaptive backstepping controllers for
parametric strict-feedback agents, and integrates the full closed loop with
deterministic fixed-step Runge-Kutta.
"""

from .compensator import CompensatorState, NeighborOutput, compensator_deriv, \
    compensator_output, observer_error
from .controller import AgentController, AgentModel, BackstepTrace, \
    ControllerState, InputLayout, lyapunov_value, nussbaum_control, nussbaum_fn, \
    step1
from .expr import compile_expr, diff, evaluate, max_var_index, parse, to_source
from .gain import GainDesign, LeaderModel, design_gain, required_mu, solve_care, \
    synthesize_k, verify_stacked_hurwitz
from .graph import AugmentedSpec, DiGraph, build_augmented_h, build_h, \
    has_spanning_tree, min_real_part
from .sim import AgentInit, IntegrationSettings, Scenario, TrajectoryLog, \
    agent_deriv, forced_response_probe, leader_deriv, metrics, \
    observer_decay_probe, rk4_step, run, write_csv, write_errors_csv

__version__ = "0.1.0"

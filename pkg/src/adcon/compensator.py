"""Per-agent observer chain driven only by measured scalar outputs.

Each agent i runs a chain of r_i + 1 copies of the leader state estimate:

    eta_l'       = A eta_l - K C (eta_l - eta_{l+1})           l = 1..r_i
    eta_{r_i+1}' = A eta_{r_i+1}
                   - K C (sum_j a_ij) (eta_{r_i+1} - eta_1)
                   - K sum_j a_ij (y_i - y_j)

The update signature takes neighbor *outputs* only -- there is no way to
pass a neighbor's chain in, which is the whole point of the information
pattern: nothing but measured scalars crosses the network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .gain import LeaderModel

__all__ = [
    "CompensatorState",
    "NeighborOutput",
    "compensator_deriv",
    "compensator_output",
    "observer_error",
]


class NeighborOutput(NamedTuple):
    """One received measurement: sender id, link weight, scalar output."""

    node: int
    weight: float
    y: float


@dataclass(frozen=True, eq=False)
class CompensatorState:
    """Chain of leader-state estimates, stacked as an (r+1, nu) array."""

    eta: np.ndarray

    def __post_init__(self):
        eta = self.eta
        if not (isinstance(eta, np.ndarray) and eta.ndim == 2
                and eta.dtype == np.float64):
            eta = np.atleast_2d(np.asarray(eta, dtype=float))
        if eta.shape[0] < 2:
            raise ValueError("the chain needs at least two stages (order >= 1)")
        # a single reduction: any nan/inf entry makes the sum non-finite
        if not math.isfinite(float(eta.sum())):
            raise ValueError("chain entries must be finite")
        object.__setattr__(self, "eta", eta)

    @property
    def order(self) -> int:
        return self.eta.shape[0] - 1


def compensator_deriv(state: CompensatorState, y_i: float,
                      neighbors: Sequence[NeighborOutput],
                      leader: LeaderModel, K: np.ndarray) -> np.ndarray:
    """Right-hand side of the chain, shape (r+1, nu)."""
    eta = state.eta
    k = np.asarray(K, dtype=float).reshape(-1)
    if eta.shape[1] != leader.dim or k.shape[0] != leader.dim:
        raise ValueError(
            f"dimension mismatch: chain width {eta.shape[1]}, gain {k.shape[0]}, "
            f"exosystem {leader.dim}")
    c = leader.C
    deriv = eta @ leader.A.T
    # chain rows: inject the mismatch with the next stage
    gaps = (eta[:-1] - eta[1:]) @ c  # scalar C(eta_l - eta_{l+1}) per row
    deriv[:-1] -= gaps[:, None] * k
    # closing row: total in-weight times the wrap-around gap, plus the
    # weighted disagreement of measured outputs
    total_weight = 0.0
    e_v = 0.0
    for nbr in neighbors:
        total_weight += nbr.weight
        e_v += nbr.weight * (y_i - nbr.y)
    wrap = float(c @ (eta[-1] - eta[0]))
    deriv[-1] -= (total_weight * wrap + e_v) * k
    return deriv


def compensator_output(state: CompensatorState, leader: LeaderModel) -> float:
    """Reconstructed reference output, C eta_1."""
    return float(leader.C @ state.eta[0])


def observer_error(state: CompensatorState, x0: np.ndarray) -> np.ndarray:
    """Chain-wise deviation from the true leader state (diagnostic only).

    The true x0 is never available to an agent at runtime; this exists for
    the simulator's omniscient logging.
    """
    return state.eta - np.asarray(x0, dtype=float).reshape(1, -1)

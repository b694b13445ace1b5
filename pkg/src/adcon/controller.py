"""Adaptive backstepping controller generation for strict-feedback agents.

Given an agent model (order r, regressor matrix, positive stage gains) and
the observer chain parameters (A, C, K), the controller is generated
mechanically from the stage recursion:

    e_1   = y - C eta_1
    tau_1 = psi_1 e_1
    a_1   = -c_1 e_1 - psi_1' th + C A eta_1 - C K C (eta_1 - eta_2)

    e_k   = x_k - a_{k-1}
    w_k   = psi_k - sum_l psi_l  (d a_{k-1} / d x_l)
    tau_k = tau_{k-1} + w_k e_k
    a_k   = -c_k e_k - e_{k-1} - psi_k' th
            + sum_l (d a_{k-1}/d x_l) (x_{l+1} + psi_l' th)
            + sum_l (d a_{k-1}/d eta_l) (A eta_l - K C (eta_l - eta_{l+1}))
            + (d a_{k-1}/d th) tau_k
            + sum_{l=2}^{k-1} e_l (d a_{l-1}/d th) w_k

with u = a_r and the update law th' = tau_r.  The stage partials are exact:
every intermediate quantity is carried as a truncated Taylor expansion in
the controller inputs (state, own chain, parameter estimate), so the
derivatives a later stage consumes are read off the coefficients of an
earlier one.  Stage k only ever needs order r - k, which keeps the cost of
the expansion bounded; the regressor leaf derivatives are seeded from the
symbolic differentiator.

For agents whose input direction is unknown, the same final stage feeds a
gain-swept modulation u = -N(kappa) a_r with kappa' = -e_r a_r, where N is
a function whose running averages swing unbounded in both signs
(default kappa^2 cos kappa).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import expr as ex
from .gain import LeaderModel
from .taylor import Taylor, TaylorSpace

__all__ = [
    "AgentModel",
    "ControllerState",
    "BackstepTrace",
    "InputLayout",
    "AgentController",
    "ModelError",
    "step1",
    "nussbaum_fn",
    "nussbaum_control",
    "lyapunov_value",
]

MODES = ("known", "nussbaum")


class ModelError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AgentModel:
    """One strict-feedback agent: dynamics structure plus true parameters.

    ``regressors[l][j]`` is the expression multiplying theta_j in stage
    l + 1; it may reference x1..x(l+1) only.  ``theta`` and ``b`` are ground
    truth for simulation and are never shown to the controller; in
    ``known`` mode the input gain b is fixed to 1, in ``nussbaum`` mode it
    is any nonzero constant whose sign the controller must discover.
    """

    order: int
    regressors: tuple[tuple[ex.Expr, ...], ...]
    theta: np.ndarray
    gains: np.ndarray
    mode: str = "known"
    b: float = 1.0

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float).reshape(-1)
        gains = np.asarray(self.gains, dtype=float).reshape(-1)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "regressors",
                           tuple(tuple(row) for row in self.regressors))
        r, m = self.order, theta.shape[0]
        if r < 1:
            raise ModelError(f"agent order must be >= 1, got {r}")
        if m < 1:
            raise ModelError("at least one unknown parameter is required")
        if len(self.regressors) != r or any(len(row) != m for row in self.regressors):
            raise ModelError(
                f"regressor matrix must be {r} stages x {m} parameters")
        for l, row in enumerate(self.regressors, start=1):
            for j, e in enumerate(row):
                top = ex.max_var_index(e)
                if top > l:
                    raise ModelError(
                        f"stage {l} regressor {j + 1} references x{top}; "
                        f"stage l may only use x1..x{l} (strict feedback)")
        if gains.shape[0] != r:
            raise ModelError(f"need {r} stage gains, got {gains.shape[0]}")
        if np.any(gains <= 0):
            raise ModelError("stage gains must be strictly positive")
        if self.mode not in MODES:
            raise ModelError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "known" and self.b != 1.0:
            raise ModelError("known-direction mode fixes the input gain b to 1")
        if self.b == 0.0:
            raise ModelError("the input gain b must be nonzero")

    @property
    def n_params(self) -> int:
        return self.theta.shape[0]


@dataclass
class ControllerState:
    """Adapted quantities owned by one agent's controller."""

    theta_hat: np.ndarray
    nussbaum_k: float = 0.0

    def __post_init__(self):
        self.theta_hat = np.asarray(self.theta_hat, dtype=float).reshape(-1)


@dataclass(frozen=True)
class InputLayout:
    """Index map of the flat controller input (x, chain, estimate)."""

    order: int
    chain_width: int
    n_params: int

    @property
    def n(self) -> int:
        return self.order + (self.order + 1) * self.chain_width + self.n_params

    def x_index(self, l: int) -> int:
        return l - 1

    def eta_index(self, l: int, p: int = 0) -> int:
        return self.order + (l - 1) * self.chain_width + p

    def theta_index(self, j: int) -> int:
        return self.order + (self.order + 1) * self.chain_width + j

    def pack(self, x, eta, theta_hat) -> np.ndarray:
        return np.concatenate([
            np.asarray(x, dtype=float).reshape(-1),
            np.asarray(eta, dtype=float).reshape(-1),
            np.asarray(theta_hat, dtype=float).reshape(-1),
        ])


@dataclass(frozen=True, eq=False)
class BackstepTrace:
    """Everything one controller evaluation produced."""

    ehat: np.ndarray                    # (r,) stage errors
    alphas: np.ndarray                  # (r,) stage controls; alphas[-1] is u
    taus: tuple[np.ndarray, ...]        # stage tuning vectors, each (m,)
    u: float
    theta_hat_dot: np.ndarray           # (m,) update law value
    psi_values: np.ndarray              # (r, m) regressor values at the state
    alpha_grads: tuple                  # per stage: gradient over the flat input, or None
    layout: InputLayout


class AgentController:
    """Generated controller for one agent; pure function of own state."""

    def __init__(self, model: AgentModel, leader: LeaderModel, K: np.ndarray):
        self.model = model
        self.leader = leader
        r, m, nu = model.order, model.n_params, leader.dim
        self.r, self.m, self.nu = r, m, nu
        self.K = np.asarray(K, dtype=float).reshape(-1)
        if self.K.shape[0] != nu:
            raise ModelError(
                f"gain has {self.K.shape[0]} entries, exosystem dimension is {nu}")
        self.A = leader.A
        self.C = leader.C
        self.KC = np.outer(self.K, self.C)
        self.CA = self.C @ self.A
        self.CKC = float(self.C @ self.K) * self.C
        self.gains = model.gains

        self.layout = InputLayout(order=r, chain_width=nu, n_params=m)
        n = self.layout.n
        self.space = TaylorSpace(n)

        # constant gradient rows for the linear building blocks
        ehat1_row = np.zeros(n)
        ehat1_row[0] = 1.0
        e1s = self.layout.eta_index(1)
        ehat1_row[e1s:e1s + nu] = -self.C
        alpha1_lin = np.zeros(n)
        alpha1_lin[e1s:e1s + nu] = self.CA - self.CKC
        e2s = self.layout.eta_index(2)
        alpha1_lin[e2s:e2s + nu] = self.CKC
        chain_rows = np.zeros((r, nu, n))
        for l in range(1, r + 1):
            s0 = self.layout.eta_index(l)
            s1 = self.layout.eta_index(l + 1)
            chain_rows[l - 1, :, s0:s0 + nu] = self.A - self.KC
            chain_rows[l - 1, :, s1:s1 + nu] = self.KC
        for arr in (ehat1_row, alpha1_lin, chain_rows):
            arr.flags.writeable = False
        self._ehat1_row = ehat1_row
        self._alpha1_lin_row = alpha1_lin
        self._chain_rows = chain_rows

        # compiled regressors and their symbolic partials, per stage
        self._psi_fns = []
        self._psi_partials = []  # [l-1][j][p-1] -> {sorted multi-index: fn}
        for l in range(1, r + 1):
            fns_row, partials_row = [], []
            depth = max(r - l, 1)
            for e in model.regressors[l - 1]:
                fns_row.append(ex.compile_expr(e))
                levels = []
                trees = {(): e}
                for _ in range(depth):
                    nxt = {}
                    for midx, tree in trees.items():
                        start = midx[-1] if midx else 0
                        for a in range(start, l):
                            nxt[midx + (a,)] = ex.diff(tree, a + 1)
                    trees = nxt
                    levels.append({midx: ex.compile_expr(t) for midx, t in trees.items()})
                partials_row.append(levels)
            self._psi_fns.append(fns_row)
            self._psi_partials.append(partials_row)

    # -- regressor expansions ------------------------------------------------

    def _psi_jets(self, l: int, x: np.ndarray, order: int) -> list[Taylor]:
        n = self.layout.n
        jets = []
        for j in range(self.m):
            value = self._psi_fns[l - 1][j](x)
            if order == 0:
                jets.append(Taylor(0, (float(value),)))
                continue
            tensors = [value]
            for p in range(1, order + 1):
                t = np.zeros((n,) * p)
                for midx, fn in self._psi_partials[l - 1][j][p - 1].items():
                    v = fn(x)
                    if v != 0.0:
                        for perm in set(itertools.permutations(midx)):
                            t[perm] = v
                tensors.append(t)
            jets.append(self.space.from_partials(tensors, order))
        return jets

    # -- the stage recursion -------------------------------------------------

    def trace(self, x, eta, theta_hat, jacobians: bool = False) -> BackstepTrace:
        """Run the full stage recursion at one state snapshot.

        The result depends only on this agent's own (x, chain, estimate);
        nothing about any other agent can reach this computation.
        """
        r, m, nu = self.r, self.m, self.nu
        sp = self.space
        lay = self.layout
        x = np.asarray(x, dtype=float).reshape(r)
        eta = np.asarray(eta, dtype=float).reshape(r + 1, nu)
        th = np.asarray(theta_hat, dtype=float).reshape(m)

        orders = [r - k for k in range(1, r + 1)]
        if r == 1 and jacobians:
            orders[0] = 1

        # chain-stage drifts A eta_l - KC (eta_l - eta_{l+1}), values only;
        # their input gradients are the precomputed constant rows
        chain_vals = eta[:-1] @ self.A.T - (eta[:-1] - eta[1:]) @ self.KC.T

        def theta_taylor(j: int, order: int) -> Taylor:
            return sp.var(th[j], lay.theta_index(j), order)

        # stage 1
        o = orders[0]
        e1 = sp.linear(x[0] - float(self.C @ eta[0]), self._ehat1_row, o)
        psi = self._psi_jets(1, x, o)
        psi_cache = {1: psi}
        psi_vals = {1: np.array([t.value for t in psi])}
        tau = [psi[j] * e1 for j in range(m)]
        tau_values = [np.array([t.value for t in tau])]
        phith = psi[0] * theta_taylor(0, o)
        for j in range(1, m):
            phith = phith + psi[j] * theta_taylor(j, o)
        phith_cache = {1: phith}
        lin_val = float(self.CA @ eta[0] - self.CKC @ (eta[0] - eta[1]))
        alpha = sp.linear(lin_val, self._alpha1_lin_row, o) + \
            e1.scaled(-self.gains[0]) + (-phith)
        ehat_values = [e1.value]
        ehat_taylors = [e1]
        alpha_taylors = [alpha]
        alpha_values = [alpha.value]
        dth_by_stage: dict[int, list[Taylor]] = {}

        for k in range(2, r + 1):
            ok = orders[k - 1]
            prev = alpha_taylors[k - 2]
            if ok == 0:
                # final stage: only values are needed, and every partial of
                # the previous stage is already a gradient entry
                pg = prev.coef[1]
                dax = pg[:k - 1]
                pg_eta = pg[lay.eta_index(1):lay.eta_index(k + 1)].reshape(k, nu)
                dath = pg[lay.theta_index(0):lay.theta_index(m)]
                ek = float(x[k - 1]) - prev.coef[0]
                pvals = np.array([fn(x) for fn in self._psi_fns[k - 1]])
                psi_vals[k] = pvals
                w = pvals - sum(psi_vals[l] * dax[l - 1] for l in range(1, k))
                tau_k = tau_values[k - 2] + w * ek
                tau_values.append(tau_k)
                a_val = (-self.gains[k - 1] * ek - ehat_values[k - 2]
                         - float(pvals @ th)
                         + float((pg_eta * chain_vals[:k]).sum())
                         + float(dath @ tau_k))
                for l in range(1, k):
                    a_val += dax[l - 1] * (x[l] + float(psi_vals[l] @ th))
                for l in range(2, k):
                    dth_l = alpha_taylors[l - 2].coef[1][
                        lay.theta_index(0):lay.theta_index(m)]
                    a_val += ehat_values[l - 1] * float(dth_l @ w)
                ehat_values.append(ek)
                alpha_values.append(a_val)
                ehat_taylors.append(Taylor(0, (ek,)))
                alpha_taylors.append(Taylor(0, (a_val,)))
                continue

            dax = [prev.partial(lay.x_index(l)) for l in range(1, k)]
            daeta = [[prev.partial(lay.eta_index(l, p)) for p in range(nu)]
                     for l in range(1, k + 1)]
            dath = [prev.partial(lay.theta_index(j)) for j in range(m)]
            dth_by_stage[k] = dath

            ek = sp.var(x[k - 1], lay.x_index(k), ok) - prev.truncate(ok)
            psi = self._psi_jets(k, x, ok)
            psi_cache[k] = psi
            psi_vals[k] = np.array([t.value for t in psi])
            w = []
            for j in range(m):
                acc = psi[j]
                for l in range(1, k):
                    acc = acc - psi_cache[l][j].truncate(ok) * dax[l - 1]
                w.append(acc)
            tau = [tau[j].truncate(ok) + w[j] * ek for j in range(m)]
            tau_values.append(np.array([t.value for t in tau]))

            phith = psi[0] * theta_taylor(0, ok)
            for j in range(1, m):
                phith = phith + psi[j] * theta_taylor(j, ok)
            phith_cache[k] = phith

            alpha = ek.scaled(-self.gains[k - 1]) - \
                ehat_taylors[k - 2].truncate(ok) - phith
            for l in range(1, k):
                follower = sp.var(x[l], lay.x_index(l + 1), ok) + \
                    phith_cache[l].truncate(ok)
                alpha = alpha + dax[l - 1] * follower
            for l in range(1, k + 1):
                for p in range(nu):
                    drift = sp.linear(chain_vals[l - 1, p],
                                      self._chain_rows[l - 1, p], ok)
                    alpha = alpha + daeta[l - 1][p] * drift
            for j in range(m):
                alpha = alpha + dath[j] * tau[j]
            for l in range(2, k):
                dot = dth_by_stage[l][0].truncate(ok) * w[0]
                for j in range(1, m):
                    dot = dot + dth_by_stage[l][j].truncate(ok) * w[j]
                alpha = alpha + ehat_taylors[l - 1].truncate(ok) * dot

            ehat_values.append(ek.value)
            alpha_values.append(alpha.value)
            ehat_taylors.append(ek)
            alpha_taylors.append(alpha)

        psi_values = np.empty((r, m))
        for l in range(1, r + 1):
            psi_values[l - 1] = psi_vals[l]
        # coefficient arrays are never mutated, so the gradient views are safe
        grads = tuple(
            a.grad if a.order >= 1 else None for a in alpha_taylors)
        return BackstepTrace(
            ehat=np.array(ehat_values),
            alphas=np.array(alpha_values),
            taus=tuple(tau_values),
            u=alpha_values[-1],
            theta_hat_dot=tau_values[-1],
            psi_values=psi_values,
            alpha_grads=grads,
            layout=lay,
        )


def step1(x1: float, eta, theta_hat, model: AgentModel,
          leader: LeaderModel, K) -> tuple[float, np.ndarray, float]:
    """First-stage quantities (e_1, tau_1, a_1), computed directly.

    Independent of the Taylor machinery on purpose; the tests use it to
    cross-check the recursion's first stage.
    """
    eta = np.asarray(eta, dtype=float).reshape(-1, leader.dim)
    th = np.asarray(theta_hat, dtype=float).reshape(-1)
    k = np.asarray(K, dtype=float).reshape(-1)
    psi1 = np.array([ex.evaluate(e, [x1]) for e in model.regressors[0]])
    e1 = float(x1) - float(leader.C @ eta[0])
    tau1 = psi1 * e1
    ck = float(leader.C @ k)
    alpha1 = (-model.gains[0] * e1 - float(psi1 @ th)
              + float(leader.C @ leader.A @ eta[0])
              - ck * float(leader.C @ (eta[0] - eta[1])))
    return e1, tau1, alpha1


# -- unknown control direction --------------------------------------------

def nussbaum_fn(k: float) -> float:
    """Default direction-sweeping gain, kappa^2 cos kappa."""
    return k * k * np.cos(k)


def nussbaum_control(trace: BackstepTrace, state: ControllerState,
                     fn: Callable[[float], float] = nussbaum_fn) -> tuple[float, float]:
    """Modulated input and gain dynamics for unknown-direction agents."""
    alpha_r = trace.alphas[-1]
    u = -fn(state.nussbaum_k) * alpha_r
    k_dot = -trace.ehat[-1] * alpha_r
    return float(u), float(k_dot)


# -- energy bookkeeping ----------------------------------------------------

def lyapunov_value(trace: BackstepTrace, state: ControllerState,
                   model: AgentModel) -> tuple[float, float]:
    """Stage-error energy and its predicted decay rate.

    V = (1/2) sum e_l^2 + (1/2)|th_hat - th|^2, with predicted derivative
    -sum c_l e_l^2 along known-direction closed loops.  Needs the true
    parameters, so it only exists in the simulator's omniscient view.
    """
    err = state.theta_hat - model.theta
    v = 0.5 * float(trace.ehat @ trace.ehat) + 0.5 * float(err @ err)
    v_dot = -float(model.gains @ (trace.ehat * trace.ehat))
    return v, v_dot

"""Closed-loop integration of leader, agents, observer chains, controllers.

A Scenario bundles everything needed to reproduce a run: the leader model,
the agent models with their initial conditions, the communication graph,
the coupling scale mu (or automatic selection), and fixed-step integration
settings.  Integration is classical fourth-order Runge-Kutta with all four
stage evaluations taken from synchronous snapshots, so a run is
deterministic down to the bit for a fixed scenario.

Any non-finite value or magnitude above ESCAPE_LIMIT truncates the run with
an escape marker instead of raising, so a finite-escape plant still yields
an inspectable (flagged) log.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .compensator import CompensatorState, NeighborOutput, compensator_deriv
from .controller import (AgentController, AgentModel, ControllerState,
                         lyapunov_value, nussbaum_fn)
from .gain import (GainDesign, LeaderModel, check_neutral_stability,
                   design_gain, stacked_matrix)
from .graph import AugmentedSpec, DiGraph, build_augmented_h, has_spanning_tree

__all__ = [
    "AgentInit",
    "IntegrationSettings",
    "Scenario",
    "ScenarioError",
    "TrajectoryLog",
    "RunMetrics",
    "leader_deriv",
    "agent_deriv",
    "rk4_step",
    "SimContext",
    "run",
    "metrics",
    "observer_decay_probe",
    "forced_response_probe",
    "write_csv",
    "write_errors_csv",
]

ESCAPE_LIMIT = 1e9
ERROR_TOLERANCE = 0.05


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AgentInit:
    """Initial conditions for one agent and its controller."""

    x0: np.ndarray
    theta_hat0: np.ndarray
    eta0: np.ndarray       # (r+1, nu)
    k0: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float).reshape(-1))
        object.__setattr__(self, "theta_hat0",
                           np.asarray(self.theta_hat0, dtype=float).reshape(-1))
        object.__setattr__(self, "eta0", np.atleast_2d(np.asarray(self.eta0, dtype=float)))


@dataclass(frozen=True)
class IntegrationSettings:
    h: float = 1e-3
    T: float = 30.0
    stride: int = 10

    def __post_init__(self):
        if self.h <= 0 or self.T <= 0 or self.stride < 1:
            raise ScenarioError(
                f"integration settings must be positive (h={self.h}, "
                f"T={self.T}, stride={self.stride})")


@dataclass(eq=False)
class Scenario:
    leader: LeaderModel
    agents: list[AgentModel]
    inits: list[AgentInit]
    graph: DiGraph
    mu: float | None = None   # None selects the automatic margin over the bound
    integration: IntegrationSettings = field(default_factory=IntegrationSettings)

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    def augmented_spec(self) -> AugmentedSpec:
        return AugmentedSpec(tuple(a.order for a in self.agents))

    def validate(self) -> None:
        n = len(self.agents)
        if n == 0:
            raise ScenarioError("a scenario needs at least one agent")
        if len(self.inits) != n:
            raise ScenarioError(
                f"{n} agents but {len(self.inits)} initial-condition blocks")
        if self.graph.n_agents != n:
            raise ScenarioError(
                f"graph has {self.graph.n_agents} agents, scenario has {n}")
        if not has_spanning_tree(self.graph):
            raise ScenarioError(
                "communication graph violates the reachability requirement: "
                "the leader cannot reach every agent along directed edges")
        check_neutral_stability(self.leader.A)
        nu = self.leader.dim
        for idx, (model, init) in enumerate(zip(self.agents, self.inits), start=1):
            r, m = model.order, model.n_params
            if init.x0.shape != (r,):
                raise ScenarioError(
                    f"agent {idx}: x0 has shape {init.x0.shape}, expected ({r},)")
            if init.theta_hat0.shape != (m,):
                raise ScenarioError(
                    f"agent {idx}: theta_hat0 has shape {init.theta_hat0.shape}, "
                    f"expected ({m},)")
            if init.eta0.shape != (r + 1, nu):
                raise ScenarioError(
                    f"agent {idx}: eta0 has shape {init.eta0.shape}, "
                    f"expected ({r + 1}, {nu})")

    def design(self) -> GainDesign:
        h_aug = build_augmented_h(self.graph, self.augmented_spec())
        return design_gain(self.leader, h_aug, mu=self.mu)


# --------------------------------------------------------------------------
# Elementary right-hand sides
# --------------------------------------------------------------------------

def leader_deriv(x0: np.ndarray, leader: LeaderModel) -> np.ndarray:
    return leader.A @ np.asarray(x0, dtype=float)


def agent_deriv(x: np.ndarray, u: float, model: AgentModel) -> np.ndarray:
    """Strict-feedback plant right-hand side with the true parameters."""
    x = np.asarray(x, dtype=float).reshape(model.order)
    psi = np.array([[ex.evaluate(e, x) for e in row] for row in model.regressors])
    dx = np.empty(model.order)
    dx[:-1] = x[1:] + psi[:-1] @ model.theta
    dx[-1] = model.b * u + psi[-1] @ model.theta
    return dx


def rk4_step(f, t: float, y: np.ndarray, h: float,
             k1: np.ndarray | None = None) -> np.ndarray:
    """One classical Runge-Kutta step of y' = f(t, y).

    The first stage slope may be passed in when the caller already
    evaluated f(t, y), e.g. to reuse it for logging.
    """
    if k1 is None:
        k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + (0.5 * h) * k1)
    k3 = f(t + 0.5 * h, y + (0.5 * h) * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


# --------------------------------------------------------------------------
# Full closed loop
# --------------------------------------------------------------------------

class SimContext:
    """Precompiled closed loop: controllers, gain design, state packing."""

    def __init__(self, scenario: Scenario):
        scenario.validate()
        self.scenario = scenario
        self.design = scenario.design()
        self.leader = scenario.leader
        nu = self.leader.dim
        self.K = self.design.K
        self.controllers = [AgentController(a, self.leader, self.K)
                            for a in scenario.agents]
        # neighbor lists as (node, weight) with node 0 meaning the leader
        self.neighbors = [scenario.graph.in_neighbors(i + 1)
                          for i in range(scenario.n_agents)]

        offset = nu
        self.x_slices, self.eta_slices, self.th_slices, self.k_index = [], [], [], []
        for model in scenario.agents:
            r, m = model.order, model.n_params
            self.x_slices.append(slice(offset, offset + r))
            offset += r
            self.eta_slices.append(slice(offset, offset + (r + 1) * nu))
            offset += (r + 1) * nu
            self.th_slices.append(slice(offset, offset + m))
            offset += m
            if model.mode == "nussbaum":
                self.k_index.append(offset)
                offset += 1
            else:
                self.k_index.append(None)
        self.dim = offset

    def initial_state(self) -> np.ndarray:
        s = np.empty(self.dim)
        s[:self.leader.dim] = self.leader.x0_init
        for i, init in enumerate(self.scenario.inits):
            s[self.x_slices[i]] = init.x0
            s[self.eta_slices[i]] = init.eta0.ravel()
            s[self.th_slices[i]] = init.theta_hat0
            if self.k_index[i] is not None:
                s[self.k_index[i]] = init.k0
        return s

    def rhs(self, state: np.ndarray, telemetry: bool = False):
        """Synchronous right-hand side over the stacked state."""
        nu = self.leader.dim
        x0 = state[:nu]
        y0 = self.leader.output(x0)
        outputs = [float(state[self.x_slices[i].start])
                   for i in range(len(self.controllers))]

        deriv = np.empty(self.dim)
        deriv[:nu] = self.leader.A @ x0
        traces = [] if telemetry else None
        us = [] if telemetry else None
        for i, (ctrl, model) in enumerate(zip(self.controllers, self.scenario.agents)):
            r, m = model.order, model.n_params
            x = state[self.x_slices[i]]
            eta = state[self.eta_slices[i]].reshape(r + 1, nu)
            th = state[self.th_slices[i]]
            tr = ctrl.trace(x, eta, th)
            if model.mode == "nussbaum":
                kappa = float(state[self.k_index[i]])
                alpha_r = tr.alphas[-1]
                u = -nussbaum_fn(kappa) * alpha_r
                deriv[self.k_index[i]] = -tr.ehat[-1] * alpha_r
            else:
                u = tr.u
            dx = deriv[self.x_slices[i]]
            if r > 1:
                dx[:-1] = x[1:] + tr.psi_values[:-1] @ model.theta
            dx[-1] = model.b * u + tr.psi_values[-1] @ model.theta
            nbrs = [NeighborOutput(j, w, y0 if j == 0 else outputs[j - 1])
                    for j, w in self.neighbors[i]]
            chain = compensator_deriv(CompensatorState(eta), outputs[i],
                                      nbrs, self.leader, self.K)
            deriv[self.eta_slices[i]] = chain.ravel()
            deriv[self.th_slices[i]] = tr.theta_hat_dot
            if telemetry:
                traces.append(tr)
                us.append(float(u))
        if telemetry:
            return deriv, us, traces
        return deriv

    def step(self, state: np.ndarray, h: float | None = None,
             k1: np.ndarray | None = None) -> np.ndarray:
        """One RK4 step of the closed loop."""
        if h is None:
            h = self.scenario.integration.h
        return rk4_step(lambda _t, s: self.rhs(s), 0.0, state, h, k1=k1)


@dataclass(eq=False)
class TrajectoryLog:
    """Strided record of one run, plus full state snapshots."""

    t: np.ndarray
    y0: np.ndarray
    y: np.ndarray            # (S, N)
    e: np.ndarray            # (S, N) tracking errors y_i - y0
    ehat1: np.ndarray        # (S, N) first stage errors y_i - yhat_i
    u: np.ndarray            # (S, N)
    v: np.ndarray            # (S, N) stage-error energy
    v_dot_pred: np.ndarray   # (S, N) predicted energy decay rate
    v_pred_integral: np.ndarray  # (S, N) cumulative predicted decay, substep accuracy
    eta_err: np.ndarray      # (S, N) chain deviation norms |eta_i - x0|
    theta_hat: list          # per agent (S, m_i)
    ehat_all: list           # per agent (S, r_i)
    nussbaum_k: dict         # agent index -> (S,), only for nussbaum agents
    states: np.ndarray       # (S, dim) raw snapshots
    escaped: bool
    escape_time: float | None
    scenario: Scenario
    design: GainDesign

    @property
    def n_agents(self) -> int:
        return self.y.shape[1]


def _finite(state: np.ndarray) -> bool:
    peak = np.abs(state).max()
    return bool(np.isfinite(peak) and peak <= ESCAPE_LIMIT)


def run(scenario: Scenario, h: float | None = None, T: float | None = None,
        stride: int | None = None) -> TrajectoryLog:
    """Integrate the closed loop and log every ``stride`` steps."""
    settings = scenario.integration
    h = settings.h if h is None else float(h)
    T = settings.T if T is None else float(T)
    stride = settings.stride if stride is None else int(stride)
    if h <= 0 or T <= 0 or stride < 1:
        raise ScenarioError("integration overrides must be positive")
    ctx = SimContext(scenario)
    n = scenario.n_agents
    nu = scenario.leader.dim
    n_steps = int(round(T / h))

    rows = []  # (t, state, us, traces, cumulative predicted decay)
    state = ctx.initial_state()
    escaped = False
    escape_time = None
    w_prev = None
    w_integral = np.zeros(n)
    for step_index in range(n_steps + 1):
        t = step_index * h
        try:
            k1, us, traces = ctx.rhs(state, telemetry=True)
        except (ZeroDivisionError, OverflowError):
            escaped, escape_time = True, t
            break
        # predicted decay rate, accumulated at full step resolution so the
        # logged integral carries quadrature error O(h^2) only
        w_now = np.array([float(model.gains @ (tr.ehat * tr.ehat))
                          for model, tr in zip(scenario.agents, traces)])
        if w_prev is not None:
            w_integral += (0.5 * h) * (w_prev + w_now)
        w_prev = w_now
        if step_index % stride == 0 or step_index == n_steps:
            rows.append((t, state.copy(), us, traces, w_integral.copy()))
        if step_index == n_steps:
            break
        try:
            nxt = ctx.step(state, h=h, k1=k1)
        except (ZeroDivisionError, OverflowError):
            nxt = None
        if nxt is None or not _finite(nxt):
            escaped, escape_time = True, t + h
            break
        state = nxt

    s = len(rows)
    log = TrajectoryLog(
        t=np.array([row[0] for row in rows]),
        y0=np.empty(s), y=np.empty((s, n)), e=np.empty((s, n)),
        ehat1=np.empty((s, n)), u=np.empty((s, n)), v=np.empty((s, n)),
        v_dot_pred=np.empty((s, n)),
        v_pred_integral=np.array([row[4] for row in rows]).reshape(s, n),
        eta_err=np.empty((s, n)),
        theta_hat=[np.empty((s, a.n_params)) for a in scenario.agents],
        ehat_all=[np.empty((s, a.order)) for a in scenario.agents],
        nussbaum_k={i: np.empty(s) for i in range(n)
                    if scenario.agents[i].mode == "nussbaum"},
        states=np.empty((s, ctx.dim)),
        escaped=escaped, escape_time=escape_time,
        scenario=scenario, design=ctx.design,
    )
    for row_index, (t, st, us, traces, _) in enumerate(rows):
        x0 = st[:nu]
        y0 = scenario.leader.output(x0)
        log.y0[row_index] = y0
        log.states[row_index] = st
        for i, model in enumerate(scenario.agents):
            y_i = float(st[ctx.x_slices[i].start])
            th = st[ctx.th_slices[i]]
            eta = st[ctx.eta_slices[i]].reshape(model.order + 1, nu)
            cs = ControllerState(theta_hat=th)
            v, v_dot = lyapunov_value(traces[i], cs, model)
            log.y[row_index, i] = y_i
            log.e[row_index, i] = y_i - y0
            log.ehat1[row_index, i] = traces[i].ehat[0]
            log.u[row_index, i] = us[i]
            log.v[row_index, i] = v
            log.v_dot_pred[row_index, i] = v_dot
            log.eta_err[row_index, i] = float(np.linalg.norm(eta - x0))
            log.theta_hat[i][row_index] = th
            log.ehat_all[i][row_index] = traces[i].ehat
            if i in log.nussbaum_k:
                log.nussbaum_k[i][row_index] = st[ctx.k_index[i]]
    return log


# --------------------------------------------------------------------------
# Summary metrics
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class RunMetrics:
    sup_state: tuple          # per agent sup |x|
    sup_theta_hat: tuple
    sup_u: tuple
    final_error: tuple        # |e_i| at the last sample
    peak_error: tuple
    time_to_tolerance: tuple  # first time after which |e_i| stays < tolerance
    bounded: tuple            # per-agent boundedness flags
    all_bounded: bool
    max_lyap_residual: float
    escaped: bool
    escape_time: float | None
    tolerance: float


def metrics(log: TrajectoryLog, tolerance: float = ERROR_TOLERANCE) -> RunMetrics:
    n = log.n_agents
    if len(log.t) == 0:
        nans = tuple(math.nan for _ in range(n))
        return RunMetrics(
            sup_state=nans, sup_theta_hat=nans, sup_u=nans, final_error=nans,
            peak_error=nans, time_to_tolerance=tuple(math.inf for _ in range(n)),
            bounded=tuple(False for _ in range(n)), all_bounded=False,
            max_lyap_residual=math.nan, escaped=log.escaped,
            escape_time=log.escape_time, tolerance=tolerance,
        )
    ctx_slices = _state_slices(log.scenario)
    sup_state, sup_th, sup_u = [], [], []
    final_e, peak_e, ttt, bounded = [], [], [], []
    for i in range(n):
        abs_e = np.abs(log.e[:, i])
        xs = log.states[:, ctx_slices[i]]
        sup_state.append(float(np.abs(xs).max()))
        sup_th.append(float(np.abs(log.theta_hat[i]).max()))
        sup_u.append(float(np.abs(log.u[:, i]).max()))
        final_e.append(float(abs_e[-1]))
        peak_e.append(float(abs_e.max()))
        below = abs_e < tolerance
        idx = None
        for j in range(len(below) - 1, -1, -1):
            if not below[j]:
                break
            idx = j
        ttt.append(float(log.t[idx]) if idx is not None else math.inf)
        bounded.append(bool(not log.escaped
                            and np.isfinite(sup_state[i])
                            and np.isfinite(sup_th[i])
                            and np.isfinite(sup_u[i])))
    residual = lyapunov_residual(log)
    return RunMetrics(
        sup_state=tuple(sup_state), sup_theta_hat=tuple(sup_th),
        sup_u=tuple(sup_u), final_error=tuple(final_e),
        peak_error=tuple(peak_e), time_to_tolerance=tuple(ttt),
        bounded=tuple(bounded), all_bounded=bool(all(bounded)),
        max_lyap_residual=residual, escaped=log.escaped,
        escape_time=log.escape_time, tolerance=tolerance,
    )


def _state_slices(scenario: Scenario) -> list[slice]:
    nu = scenario.leader.dim
    offset = nu
    slices = []
    for model in scenario.agents:
        slices.append(slice(offset, offset + model.order))
        offset += model.order + (model.order + 1) * nu + model.n_params
        if model.mode == "nussbaum":
            offset += 1
    return slices


def lyapunov_residual(log: TrajectoryLog) -> float:
    """Max energy-identity defect |dV/dt + avg(sum c e^2)| over the log.

    The measured energy drop per log interval is compared against the
    predicted decay integrated at full step resolution, so the residual
    shrinks quadratically with the step size exactly when the update law
    and controller satisfy the decay identity.
    """
    if len(log.t) < 2 or log.escaped:
        return math.nan if log.escaped else 0.0
    dt = np.diff(log.t)[:, None]
    dv = np.diff(log.v, axis=0) / dt
    pred = np.diff(log.v_pred_integral, axis=0) / dt
    return float(np.abs(dv + pred).max())


# --------------------------------------------------------------------------
# Observer-bank probes (controllers replaced by synthetic outputs)
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ObserverProbeResult:
    t: np.ndarray
    error_norm: np.ndarray       # global |eta - x0| over all agents
    spectral_abscissa: float
    initial_norm: float


def _bank_context(scenario: Scenario):
    ctx = SimContext(scenario)
    nu = scenario.leader.dim
    orders = [a.order for a in scenario.agents]
    offsets = np.concatenate(([nu], nu + np.cumsum([(r + 1) * nu for r in orders])))
    return ctx, orders, offsets


def _bank_rhs(ctx: SimContext, orders, offsets, state, injections):
    """Observer bank with agent outputs forced to yhat_i + injection_i."""
    leader = ctx.leader
    nu = leader.dim
    x0 = state[:nu]
    y0 = leader.output(x0)
    etas = [state[offsets[i]:offsets[i + 1]].reshape(orders[i] + 1, nu)
            for i in range(len(orders))]
    ys = [float(leader.C @ etas[i][0]) + injections[i] for i in range(len(orders))]
    deriv = np.empty_like(state)
    deriv[:nu] = leader.A @ x0
    for i in range(len(orders)):
        nbrs = [NeighborOutput(j, w, y0 if j == 0 else ys[j - 1])
                for j, w in ctx.neighbors[i]]
        chain = compensator_deriv(CompensatorState(etas[i]), ys[i],
                                  nbrs, leader, ctx.K)
        deriv[offsets[i]:offsets[i + 1]] = chain.ravel()
    return deriv


def _bank_norm(state, orders, offsets, nu):
    x0 = state[:nu]
    total = 0.0
    for i in range(len(orders)):
        eta = state[offsets[i]:offsets[i + 1]].reshape(orders[i] + 1, nu)
        diff = eta - x0
        total += float(np.sum(diff * diff))
    return math.sqrt(total)


def observer_decay_probe(scenario: Scenario, eta0: np.ndarray | None = None,
                         seed: int = 0, horizon: float | None = None,
                         max_steps: int = 400_000) -> ObserverProbeResult:
    """Free decay of the observer bank with stage errors forced to zero.

    Every agent's measured output is replaced by its own reconstruction, so
    the bank error obeys the stacked linear dynamics exactly and must decay
    at the certified rate.
    """
    ctx, orders, offsets = _bank_context(scenario)
    nu = scenario.leader.dim
    big = stacked_matrix(scenario.leader,
                         ctx.design.K,
                         build_augmented_h(scenario.graph, scenario.augmented_spec()))
    eigs = np.linalg.eigvals(big)
    abscissa = float(eigs.real.max())
    rho = float(np.abs(eigs).max())
    t_final = horizon if horizon is not None else 20.0 / abs(abscissa)

    state = np.empty(offsets[-1])
    state[:nu] = scenario.leader.x0_init
    if eta0 is None:
        rng = np.random.default_rng(seed)
        state[nu:] = rng.uniform(-1.0, 1.0, offsets[-1] - nu)
    else:
        state[nu:] = np.asarray(eta0, dtype=float).ravel()

    h = min(0.8 / max(rho, 1e-9), t_final / 100.0)
    n_steps = min(int(math.ceil(t_final / h)), max_steps)
    h = t_final / n_steps
    zero = [0.0] * len(orders)
    f = lambda _t, s: _bank_rhs(ctx, orders, offsets, s, zero)
    stride = max(1, n_steps // 2000)
    ts, norms = [0.0], [_bank_norm(state, orders, offsets, nu)]
    for step_index in range(1, n_steps + 1):
        state = rk4_step(f, 0.0, state, h)
        if step_index % stride == 0 or step_index == n_steps:
            ts.append(step_index * h)
            norms.append(_bank_norm(state, orders, offsets, nu))
    return ObserverProbeResult(
        t=np.array(ts), error_norm=np.array(norms),
        spectral_abscissa=abscissa, initial_norm=norms[0],
    )


def forced_response_probe(scenario: Scenario, amplitude: float,
                          T: float = 200.0, omega: float = 1.3) -> float:
    """Sup of the bank error norm under sinusoidal stage-error injection.

    The bank starts on the synchronized manifold so the response is purely
    forced; by linearity the sup must scale with the injected amplitude.
    """
    ctx, orders, offsets = _bank_context(scenario)
    nu = scenario.leader.dim
    big = stacked_matrix(scenario.leader, ctx.design.K,
                         build_augmented_h(scenario.graph, scenario.augmented_spec()))
    rho = float(np.abs(np.linalg.eigvals(big)).max())
    h = min(0.8 / max(rho, 1e-9), 0.02)
    n_steps = int(math.ceil(T / h))
    h = T / n_steps

    state = np.empty(offsets[-1])
    state[:nu] = scenario.leader.x0_init
    for i in range(len(orders)):
        state[offsets[i]:offsets[i + 1]] = np.tile(scenario.leader.x0_init,
                                                   orders[i] + 1)
    phases = [0.7 * i for i in range(len(orders))]

    def f(t, s):
        injections = [amplitude * math.sin(omega * t + phases[i])
                      for i in range(len(orders))]
        return _bank_rhs(ctx, orders, offsets, s, injections)

    sup = _bank_norm(state, orders, offsets, nu)
    t = 0.0
    for _ in range(n_steps):
        state = rk4_step(f, t, state, h)
        t += h
        sup = max(sup, _bank_norm(state, orders, offsets, nu))
    return sup


# --------------------------------------------------------------------------
# CSV output
# --------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return repr(float(x))


def write_csv(log: TrajectoryLog, path) -> None:
    """Serialize a log: t, y0, then per-agent column groups."""
    n = log.n_agents
    header = ["t", "y0"]
    for i in range(1, n + 1):
        header += [f"y{i}", f"e{i}", f"u{i}", f"ehat{i}", f"V{i}", f"etaerr{i}"]
        header += [f"thetahat{i}_{j}"
                   for j in range(1, log.theta_hat[i - 1].shape[1] + 1)]
        if (i - 1) in log.nussbaum_k:
            header.append(f"k{i}")
    lines = [",".join(header)]
    for s in range(len(log.t)):
        row = [_fmt(log.t[s]), _fmt(log.y0[s])]
        for i in range(n):
            row += [_fmt(log.y[s, i]), _fmt(log.e[s, i]), _fmt(log.u[s, i]),
                    _fmt(log.ehat1[s, i]), _fmt(log.v[s, i]),
                    _fmt(log.eta_err[s, i])]
            row += [_fmt(v) for v in log.theta_hat[i][s]]
            if i in log.nussbaum_k:
                row.append(_fmt(log.nussbaum_k[i][s]))
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def write_errors_csv(log: TrajectoryLog, path) -> None:
    """Plot-ready tracking errors: t, e1..eN."""
    n = log.n_agents
    lines = [",".join(["t"] + [f"e{i}" for i in range(1, n + 1)])]
    for s in range(len(log.t)):
        lines.append(",".join([_fmt(log.t[s])] +
                              [_fmt(log.e[s, i]) for i in range(n)]))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")

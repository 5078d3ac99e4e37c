#!/usr/bin/env python3
"""
Engine - iteration-synchronous multi-agent CC-DQM simulator
Each iteration runs: local primal steps (barrier) -> event-triggered
compressed broadcast of innovations -> dual steps. DQM, C-DQM and Q-DQM
are the same loop with the zero threshold and/or the identity compressor.

Also hosts the centralized Newton oracle for x*, the matrix-form oracle
used to cross-check the per-agent loop, and the Lyapunov / error
recursion diagnostics.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.linalg import LinAlgError, cho_factor, cho_solve, solve

import analysis
import objectives as obj_mod
from compressors import Compressor, CompressorKind, agent_stream, compress
from netgraph import Graph, incidence, laplacians, spectra, validate_assumptions
from sim_errors import AssumptionError, DiagnosticError, ObjectiveError, SolverError

logger = logging.getLogger(__name__)

NEWTON_MAX_ITER = 200
MIN_LINE_STEP = 1e-10
DUAL_CONSISTENCY_TOL = 1e-8
DEFAULT_REPLICAS = 20

METRIC_COLUMNS = ['iter', 'err', 'consensus_err', 'dual_residual', 'bits_cum', 'rounds_cum',
                  'triggers', 'hess_refresh', 'V_total', 'V_primal', 'V_dual', 'V_error']


class ScheduleKind(Enum):
    ZERO = "zero"
    GEOMETRIC = "geometric"


class BitAccounting(Enum):
    PER_LINK = "per_link"             # one message per receiving neighbor
    PER_BROADCAST = "per_broadcast"   # one message per transmitting agent


class Variant(Enum):
    DQM = "dqm"
    C_DQM = "cdqm"
    Q_DQM = "qdqm"
    CC_DQM = "ccdqm"

    @property
    def label(self) -> str:
        return {"dqm": "DQM", "cdqm": "C-DQM", "qdqm": "Q-DQM", "ccdqm": "CC-DQM"}[self.value]

    @property
    def censored(self) -> bool:
        return self in (Variant.C_DQM, Variant.CC_DQM)

    @property
    def compressed(self) -> bool:
        return self in (Variant.Q_DQM, Variant.CC_DQM)


@dataclass(frozen=True)
class ThresholdSchedule:
    """mu(k) = alpha * rho^k is the threshold applied on the step k -> k+1"""
    kind: ScheduleKind = ScheduleKind.ZERO
    alpha: float = 0.0
    rho: float = 0.0

    def __post_init__(self):
        if self.kind is ScheduleKind.GEOMETRIC:
            if self.alpha <= 0:
                raise ValueError(f"threshold alpha must be > 0, got {self.alpha}")
            if not (0.0 < self.rho < 1.0):
                raise ValueError(f"threshold rho must lie in (0, 1), got {self.rho}")

    def mu(self, k: int) -> float:
        if self.kind is ScheduleKind.ZERO:
            return 0.0
        return self.alpha * self.rho ** k

    @classmethod
    def zero(cls) -> 'ThresholdSchedule':
        return cls()

    @classmethod
    def geometric(cls, alpha: float, rho: float) -> 'ThresholdSchedule':
        return cls(kind=ScheduleKind.GEOMETRIC, alpha=alpha, rho=rho)


@dataclass(frozen=True)
class RunConfig:
    c: float
    compressor: Compressor
    schedule: ThresholdSchedule = ThresholdSchedule()
    max_iter: int = 500
    tol: float = 1e-12
    seed: int = 0
    replica: int = 0
    bit_accounting: BitAccounting = BitAccounting.PER_LINK
    cache_hessian: bool = True
    diagnostics: bool = False
    r_weight: Optional[float] = None
    beta: Optional[float] = None
    record_trajectory: bool = False
    workers: int = 1
    log_every: int = 50

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError(f"penalty parameter c must be > 0, got {self.c}")
        if self.max_iter < 0:
            raise ValueError(f"max_iter must be >= 0, got {self.max_iter}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")

    @property
    def variant(self) -> Variant:
        censored = self.schedule.kind is ScheduleKind.GEOMETRIC
        compressed = self.compressor.kind is not CompressorKind.IDENTITY
        if censored:
            return Variant.CC_DQM if compressed else Variant.C_DQM
        return Variant.Q_DQM if compressed else Variant.DQM


@dataclass
class AgentState:
    index: int
    neighbors: Tuple[int, ...]
    x: np.ndarray
    y_self: np.ndarray
    y_neighbors: Dict[int, np.ndarray]
    phi: np.ndarray
    hess_version: int = 0          # iteration at which y_self last changed
    factor_version: int = -1       # hess_version the cached factor was built for
    cached_factor: Optional[Tuple[np.ndarray, bool]] = field(default=None, repr=False)
    trigger_count: int = 0
    refresh_count: int = 0

    @property
    def degree(self) -> int:
        return len(self.neighbors)


@dataclass
class RunRow:
    iter: int
    err: float
    consensus_err: float
    dual_residual: float
    bits_cum: int
    rounds_cum: int
    triggers: int
    hess_refresh: int
    V_total: float = float('nan')
    V_primal: float = float('nan')
    V_dual: float = float('nan')
    V_error: float = float('nan')


@dataclass
class RunRecord:
    rows: List[RunRow] = field(default_factory=list)
    meta: Dict[str, str] = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    @property
    def final(self) -> RunRow:
        return self.rows[-1]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([[getattr(r, f.name) for f in fields(RunRow)] for r in self.rows],
                            columns=METRIC_COLUMNS)


@dataclass
class Trajectory:
    """Snapshots kept for the error recursion check"""
    X: List[np.ndarray] = field(default_factory=list)          # x_k, n x d
    Y: List[np.ndarray] = field(default_factory=list)          # y_k, n x d
    triggered: List[np.ndarray] = field(default_factory=list)  # per step k -> k+1, n bools
    mu: List[float] = field(default_factory=list)              # threshold of step k -> k+1


def write_metrics_csv(record: RunRecord, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    record.to_frame().to_csv(path, index=False, float_format='%.17g', na_rep='')
    return path


# ---------------------------------------------------------------------------
# Centralized oracle

def centralized_solve(objectives: Sequence, tol: float = 1e-12,
                      max_iter: int = NEWTON_MAX_ITER) -> Tuple[np.ndarray, float]:
    """Damped Newton on f(x) = sum_i f_i(x); returns (x*, f(x*))"""
    try:
        constants = obj_mod.aggregate_constants([obj_mod.convexity_constants(o) for o in objectives])
        if constants.v <= 0:
            raise ObjectiveError("aggregate strong convexity is zero")
    except ObjectiveError as e:
        logger.warning("⚠️ %s; centralized solve falls back to gradient-norm stopping only", e)

    d = objectives[0].dimension
    x = np.zeros(d)
    for it in range(max_iter + 1):
        value, grad, hess = obj_mod.total_value_grad_hess(objectives, x)
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= tol:
            logger.debug("centralized Newton converged in %d steps (|grad|=%.3e)", it, gnorm)
            return x, value
        if it == max_iter:
            break
        try:
            step = solve(hess, -grad, assume_a='pos')
        except (LinAlgError, ValueError):
            step = np.linalg.lstsq(hess, -grad, rcond=None)[0]
        # Armijo backtracking
        t, slope = 1.0, float(grad @ step)
        while t >= MIN_LINE_STEP:
            trial = obj_mod.total_value_grad_hess(objectives, x + t * step)[0]
            if trial <= value + 1e-4 * t * slope:
                break
            t *= 0.5
        else:
            # value decrease lost in round-off: the full step must still shrink the gradient
            full_gnorm = float(np.linalg.norm(obj_mod.total_value_grad_hess(objectives, x + step)[1]))
            if not full_gnorm < gnorm:
                if np.linalg.norm(step) <= 1e-8 * (1.0 + np.linalg.norm(x)):
                    logger.warning("⚠️ Newton stalled at round-off with |grad|=%.3e", gnorm)
                    return x, value
                raise SolverError(f"line search failed (|grad|={gnorm:.3e}, full step gives "
                                  f"{full_gnorm:.3e})", iteration=it)
            t = 1.0
        x_next = x + t * step
        if np.linalg.norm(x_next - x) <= 1e-15 * (1.0 + np.linalg.norm(x)):
            logger.warning("⚠️ Newton stalled at machine precision with |grad|=%.3e", gnorm)
            return x_next, obj_mod.total_value_grad_hess(objectives, x_next)[0]
        x = x_next
    raise SolverError(f"centralized Newton did not reach |grad| <= {tol} "
                      f"in {max_iter} iterations", iteration=max_iter)


# ---------------------------------------------------------------------------
# Matrix-form oracle: x+ = x - D~^{-1}(grad f(x) + phi + c L y),  phi+ = phi + c L y+

def matrix_form_step(graph: Graph, objectives: Sequence, c: float,
                     X: np.ndarray, Y: np.ndarray, Phi: np.ndarray) -> np.ndarray:
    n, d = X.shape
    L, _ = laplacians(graph)
    D_tilde = np.kron(np.diag(2.0 * c * graph.degrees), np.eye(d))
    grads = np.empty_like(X)
    for i, o in enumerate(objectives):
        D_tilde[i * d:(i + 1) * d, i * d:(i + 1) * d] += obj_mod.hessian(o, Y[i])
        grads[i] = obj_mod.gradient(o, X[i])
    rhs = (grads + Phi + c * (L @ Y)).ravel()
    return X - np.linalg.solve(D_tilde, rhs).reshape(n, d)


def dqm_oracle_trajectory(graph: Graph, objectives: Sequence, c: float,
                          X0: np.ndarray, iterations: int) -> List[np.ndarray]:
    """Uncompressed, always-communicating iterates in matrix form (y_0 = 0, then y = x)"""
    L, _ = laplacians(graph)
    X, Y, Phi = X0.copy(), np.zeros_like(X0), np.zeros_like(X0)
    out = [X.copy()]
    for _ in range(iterations):
        X = matrix_form_step(graph, objectives, c, X, Y, Phi)
        Y = X
        Phi = Phi + c * (L @ Y)
        out.append(X.copy())
    return out


# ---------------------------------------------------------------------------
# Lyapunov diagnostics: V = c/2 ||x - x*||^2_{L_s} + 4c ||r - r*||^2 + r_w ||e||^2

@dataclass
class LyapunovComponents:
    primal: float
    dual: float
    error: float

    @property
    def total(self) -> float:
        return self.primal + self.dual + self.error


class LyapunovTracker:
    """Keeps r_{k+1} = r_k + 1/4 M y_{k+1} and checks phi_k = 2c M^T r_k"""

    def __init__(self, graph: Graph, objectives: Sequence, x_star: np.ndarray,
                 c: float, r_weight: float):
        self.c = c
        self.r_weight = r_weight
        self.M = incidence(graph).M
        _, self.L_s = laplacians(graph)
        n, d = graph.n, x_star.shape[0]
        self.X_star = np.tile(x_star, (n, 1))
        # optimality: phi* = -grad f_i(x*)
        self.Phi_star = -np.vstack([obj_mod.gradient(o, x_star) for o in objectives])
        # minimum-norm solution lies in the column space of M
        self.R_star = np.linalg.lstsq(2.0 * c * self.M.T, self.Phi_star, rcond=None)[0]
        self.R = np.zeros((self.M.shape[0], d))

    def advance(self, Y_next: np.ndarray) -> None:
        self.R += 0.25 * (self.M @ Y_next)

    def check_dual(self, Phi: np.ndarray, k: int) -> float:
        rebuilt = 2.0 * self.c * (self.M.T @ self.R)
        gap = float(np.max(np.abs(rebuilt - Phi))) if Phi.size else 0.0
        scale = max(1.0, float(np.max(np.abs(Phi))))
        if gap > DUAL_CONSISTENCY_TOL * scale:
            raise DiagnosticError(f"iteration {k}: phi differs from 2c M^T r by {gap:.3e}")
        return gap

    def components(self, X: np.ndarray, Y: np.ndarray) -> LyapunovComponents:
        dx = X - self.X_star
        primal = 0.5 * self.c * float(np.sum(dx * (self.L_s @ dx)))
        dual = 4.0 * self.c * float(np.sum((self.R - self.R_star) ** 2))
        error = self.r_weight * float(np.sum((Y - X) ** 2))
        return LyapunovComponents(primal=primal, dual=dual, error=error)


def lyapunov_diagnostics(sim: 'Simulator') -> LyapunovComponents:
    """V_k components at the simulator's current iterate"""
    if sim.lyapunov is None:
        raise DiagnosticError("diagnostics were not enabled for this run")
    return sim.lyapunov.components(sim.X, sim.Y)


# ---------------------------------------------------------------------------
# Simulator

class Simulator:
    """Owns every agent state; not shared between threads of the caller"""

    def __init__(self, graph: Graph, objectives: Sequence, config: RunConfig,
                 x0: Optional[np.ndarray] = None, x_star: Optional[np.ndarray] = None):
        # 1. Assumption checks
        report = validate_assumptions(spectra(graph))
        if not report.passed:
            raise AssumptionError(f"graph rejected: {report}")
        if len(objectives) != graph.n:
            raise ObjectiveError(f"{len(objectives)} objectives for {graph.n} agents")
        dims = {o.dimension for o in objectives}
        if len(dims) != 1:
            raise ObjectiveError(f"objectives disagree on dimension: {sorted(dims)}")
        d = dims.pop()
        if config.compressor.dim != d:
            raise ObjectiveError(f"compressor dimension {config.compressor.dim} != problem dimension {d}")

        self.graph = graph
        self.objectives = list(objectives)
        self.config = config
        self.n, self.d = graph.n, d
        self.k = 0
        self.bits = 0
        self.rounds = 0

        # 2. x_0 seeded standard normal unless supplied; y_0 = phi_0 = 0
        if x0 is None:
            x0 = np.random.default_rng(config.seed).standard_normal((self.n, d))
        x0 = np.asarray(x0, dtype=float).reshape(self.n, d)
        self.agents: List[AgentState] = []
        for i in range(self.n):
            nbrs = graph.neighbors(i)
            self.agents.append(AgentState(
                index=i,
                neighbors=nbrs,
                x=x0[i].copy(),
                y_self=np.zeros(d),
                y_neighbors={j: np.zeros(d) for j in nbrs},
                phi=np.zeros(d),
            ))

        # 3. Initial factorizations at y = 0
        for agent in self.agents:
            self._refresh_factor(agent)

        # 4. Oracle and diagnostics
        if x_star is None:
            x_star, _ = centralized_solve(self.objectives)
        self.x_star = np.asarray(x_star, dtype=float)
        self.err_denominator = float(np.sum((x0 - self.x_star) ** 2))
        self.lyapunov: Optional[LyapunovTracker] = None
        if config.diagnostics:
            self.lyapunov = LyapunovTracker(graph, self.objectives, self.x_star,
                                            config.c, self._resolve_r_weight())
        self.trajectory: Optional[Trajectory] = Trajectory() if config.record_trajectory else None
        if self.trajectory is not None:
            self.trajectory.X.append(self.X)
            self.trajectory.Y.append(self.Y)
        self._pool: Optional[ThreadPoolExecutor] = None
        self.record = RunRecord(meta={'variant': config.variant.label})
        self.record.rows.append(self._metrics_row(triggers=0, refreshes=self.n))

    # -- views ---------------------------------------------------------------

    @property
    def X(self) -> np.ndarray:
        return np.vstack([a.x for a in self.agents])

    @property
    def Y(self) -> np.ndarray:
        return np.vstack([a.y_self for a in self.agents])

    @property
    def Phi(self) -> np.ndarray:
        return np.vstack([a.phi for a in self.agents])

    def _map(self, fn: Callable, items):
        if self._pool is None:
            return [fn(item) for item in items]
        return list(self._pool.map(fn, items))

    def _resolve_r_weight(self) -> float:
        if self.config.r_weight is not None:
            return self.config.r_weight
        delta = self.config.compressor.delta_bound
        if delta is None:
            logger.warning("⚠️ compressor has no analytic delta bound; r_weight uses delta = 0")
            delta = 0.0
        s = spectra(self.graph)
        beta = self.config.beta if self.config.beta is not None else analysis.beta_star(s)
        return analysis.lyapunov_r_weight(s, self.config.c, beta, delta)

    def _refresh_factor(self, agent: AgentState) -> None:
        H = obj_mod.hessian(self.objectives[agent.index], agent.y_self)
        mat = 2.0 * self.config.c * agent.degree * np.eye(self.d) + H
        try:
            agent.cached_factor = cho_factor(mat, lower=True)
        except LinAlgError as e:
            raise SolverError(f"internal error: 2c d_i I + hessian of agent {agent.index} "
                              f"is not positive definite ({e})", iteration=self.k)
        agent.factor_version = agent.hess_version
        agent.refresh_count += 1

    # -- the three phases ----------------------------------------------------

    def local_primal_step(self, i: int) -> np.ndarray:
        agent = self.agents[i]
        if not self.config.cache_hessian:
            self._refresh_factor(agent)
        elif agent.factor_version != agent.hess_version:
            raise SolverError(f"stale factorization for agent {i}", iteration=self.k)
        grad = obj_mod.gradient(self.objectives[i], agent.x)
        lap = agent.degree * agent.y_self - sum(agent.y_neighbors[j] for j in agent.neighbors)
        rhs = grad + self.config.c * lap + agent.phi
        try:
            step = cho_solve(agent.cached_factor, rhs)
        except (LinAlgError, ValueError) as e:
            raise SolverError(f"primal solve failed for agent {i}: {e}", iteration=self.k)
        return agent.x - step

    def trigger_and_communicate(self, x_next: Sequence[np.ndarray]) -> Tuple[int, int]:
        """Returns (triggers, factor refreshes) for the step k -> k+1"""
        k = self.k
        mu = self.config.schedule.mu(k)
        comp = self.config.compressor

        def encode(i: int):
            agent = self.agents[i]
            innovation = x_next[i] - agent.y_self
            if np.linalg.norm(innovation) < mu:
                return None
            rng = agent_stream(self.config.seed, self.config.replica, i, k) if comp.stochastic else None
            return compress(comp, innovation, rng)

        messages = self._map(encode, range(self.n))
        triggers = refreshes = 0
        flags = np.zeros(self.n, dtype=bool)
        for agent, msg in zip(self.agents, messages):
            if msg is None:
                continue
            flags[agent.index] = True
            agent.y_self = agent.y_self + msg.payload
            for j in agent.neighbors:
                self.agents[j].y_neighbors[agent.index] = agent.y_self.copy()
            if self.config.bit_accounting is BitAccounting.PER_LINK:
                self.bits += msg.bits * agent.degree
            else:
                self.bits += msg.bits
            self.rounds += 1
            triggers += 1
            agent.trigger_count += 1
            agent.hess_version = k + 1
        if self.config.cache_hessian:
            stale = [a for a in self.agents if a.factor_version != a.hess_version]
            self._map(self._refresh_factor, stale)
            refreshes = len(stale)
        if self.trajectory is not None:
            self.trajectory.triggered.append(flags)
            self.trajectory.mu.append(mu)
        return triggers, refreshes

    def dual_step(self, i: int) -> np.ndarray:
        agent = self.agents[i]
        lap = agent.degree * agent.y_self - sum(agent.y_neighbors[j] for j in agent.neighbors)
        return agent.phi + self.config.c * lap

    def iterate(self) -> RunRow:
        before = sum(a.refresh_count for a in self.agents)
        x_next = self._map(self.local_primal_step, range(self.n))
        triggers, _ = self.trigger_and_communicate(x_next)
        for agent, x in zip(self.agents, x_next):
            agent.x = x
        phi_next = self._map(self.dual_step, range(self.n))
        for agent, phi in zip(self.agents, phi_next):
            agent.phi = phi
        self.k += 1
        if self.lyapunov is not None:
            self.lyapunov.advance(self.Y)
            self.lyapunov.check_dual(self.Phi, self.k)
        if self.trajectory is not None:
            self.trajectory.X.append(self.X)
            self.trajectory.Y.append(self.Y)
        refreshes = sum(a.refresh_count for a in self.agents) - before
        row = self._metrics_row(triggers, refreshes)
        self.record.rows.append(row)
        return row

    def _metrics_row(self, triggers: int, refreshes: int) -> RunRow:
        X = self.X
        dx = X - self.x_star
        err = float(np.sum(dx ** 2)) / self.err_denominator if self.err_denominator > 0 else 0.0
        centered = X - X.mean(axis=0)
        grads = np.vstack([obj_mod.gradient(o, a.x) for o, a in zip(self.objectives, self.agents)])
        row = RunRow(
            iter=self.k,
            err=err,
            consensus_err=float(np.linalg.norm(centered)),
            dual_residual=float(np.linalg.norm(grads + self.Phi)),
            bits_cum=self.bits,
            rounds_cum=self.rounds,
            triggers=triggers,
            hess_refresh=refreshes,
        )
        if self.lyapunov is not None:
            v = self.lyapunov.components(X, self.Y)
            row.V_total, row.V_primal, row.V_dual, row.V_error = v.total, v.primal, v.dual, v.error
        return row

    # -- loop ----------------------------------------------------------------

    def run(self, max_iter: Optional[int] = None, tol: Optional[float] = None,
            on_row: Optional[Callable[[RunRow], None]] = None) -> RunRecord:
        max_iter = self.config.max_iter if max_iter is None else max_iter
        tol = self.config.tol if tol is None else tol
        cfg = self.config
        logger.info("%s: n=%d d=%d c=%g compressor=%s schedule=%s", cfg.variant.label, self.n,
                    self.d, cfg.c, cfg.compressor.describe(), cfg.schedule.kind.value)
        reason = 'max_iter'
        if cfg.workers > 1:
            self._pool = ThreadPoolExecutor(max_workers=cfg.workers)
        try:
            if self.record.final.err <= tol:
                reason = 'tol'
            while reason != 'tol' and self.k < max_iter:
                row = self.iterate()
                if on_row is not None:
                    on_row(row)
                if cfg.log_every and row.iter % cfg.log_every == 0:
                    logger.debug("k=%d err=%.3e bits=%d rounds=%d", row.iter, row.err,
                                 row.bits_cum, row.rounds_cum)
                if not np.isfinite(row.err):
                    raise SolverError("iterates diverged (non-finite error)", iteration=row.iter)
                if row.err <= tol:
                    reason = 'tol'
        finally:
            if self._pool is not None:
                self._pool.shutdown()
                self._pool = None
        final = self.record.final
        self.record.meta.update({
            'stop_reason': reason,
            'iterations': str(final.iter),
            'final_err': repr(final.err),
            'bits_cum': str(final.bits_cum),
            'rounds_cum': str(final.rounds_cum),
        })
        logger.info("%s stopped (%s) at k=%d err=%.3e bits=%d", cfg.variant.label, reason,
                    final.iter, final.err, final.bits_cum)
        return self.record


def init(graph: Graph, objectives: Sequence, config: RunConfig,
         x0: Optional[np.ndarray] = None, x_star: Optional[np.ndarray] = None) -> Simulator:
    return Simulator(graph, objectives, config, x0=x0, x_star=x_star)


# ---------------------------------------------------------------------------
# Error recursion check:
#   E||e+||^2 <= sqrt(delta) E||e||^2 + delta/(1 - sqrt(delta)) E||dx||^2 + n mu^2

@dataclass
class ErrorRecursionReport:
    slack: np.ndarray
    min_slack: float
    untriggered_ok: bool
    replicas: int


def error_recursion_check(trajectories: Sequence[Trajectory], delta: float) -> ErrorRecursionReport:
    if not trajectories:
        raise DiagnosticError("no trajectories given")
    if not (0.0 <= delta < 1.0):
        raise DiagnosticError(f"delta must lie in [0, 1), got {delta}")
    steps = min(len(t.triggered) for t in trajectories)
    n = trajectories[0].X[0].shape[0]
    e_sq = np.zeros((len(trajectories), steps + 1))
    dx_sq = np.zeros((len(trajectories), steps))
    untriggered_ok = True
    for r, t in enumerate(trajectories):
        for k in range(steps + 1):
            E = t.Y[k] - t.X[k]
            e_sq[r, k] = float(np.sum(E ** 2))
        for k in range(steps):
            dx_sq[r, k] = float(np.sum((t.X[k + 1] - t.X[k]) ** 2))
            e_next = np.linalg.norm(t.Y[k + 1] - t.X[k + 1], axis=1)
            quiet = ~t.triggered[k]
            if np.any(e_next[quiet] >= t.mu[k]) and np.any(quiet):
                untriggered_ok = False
            if delta == 0.0 and np.any(t.triggered[k]):
                scale = 1.0 + float(np.max(np.abs(t.X[k + 1])))
                if np.max(e_next[t.triggered[k]]) > 1e-12 * scale:
                    raise DiagnosticError(f"compressor declared delta = 0 but step {k} left "
                                          f"compression error {np.max(e_next):.3e}")
    mu_sq = np.array([t_mu ** 2 for t_mu in trajectories[0].mu[:steps]])
    root = np.sqrt(delta)
    e_mean, dx_mean = e_sq.mean(axis=0), dx_sq.mean(axis=0)
    slack = root * e_mean[:-1] + delta / (1.0 - root) * dx_mean + n * mu_sq - e_mean[1:]
    return ErrorRecursionReport(slack=slack, min_slack=float(slack.min()) if steps else 0.0,
                                untriggered_ok=untriggered_ok, replicas=len(trajectories))

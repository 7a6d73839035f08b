"""Cost functionals, admissible sets, adjoint gradients and the outer
optimization loop for the boundary control problems.

Costs use the trapezoid rule in time and the lumped trapezoid pairing in
space.  Gradients come from the adjoint solvers of
:mod:`fracstar.edge_solver` and :mod:`fracstar.graph_solver`, whose boundary
series are scaled to make these gradients exact for the discrete cost; a
central finite difference of the cost therefore reproduces them to roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .edge_solver import Trajectory, solve_adjoint_edge, solve_forward_edge
from .errors import SolverFailure
from .graph_solver import (
    GraphTrajectory,
    StarGraphProblem,
    assemble_graph_system,
    solve_adjoint_graph,
    solve_forward_graph,
)
from .grids import TimeGrid
from .sturm import EdgeOperator

__all__ = [
    "AdmissibleSet",
    "CostConfig",
    "EdgeControlProblem",
    "OptimResult",
    "cost_edge",
    "cost_graph",
    "gradient_edge",
    "gradient_graph",
    "project",
    "optimize",
]


@dataclass(frozen=True)
class AdmissibleSet:
    """Closed convex set of control values: unconstrained, or a pointwise box
    ``[lo, hi]`` (scalars or series)."""

    lo: float | np.ndarray | None = None
    hi: float | np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.lo is not None and self.hi is not None:
            if np.any(np.asarray(self.lo) > np.asarray(self.hi)):
                raise ValueError("box bounds must satisfy lo <= hi pointwise")

    @classmethod
    def unconstrained(cls) -> "AdmissibleSet":
        return cls()

    @classmethod
    def box(cls, lo, hi) -> "AdmissibleSet":
        return cls(lo=lo, hi=hi)

    @property
    def kind(self) -> str:
        return "unconstrained" if self.lo is None and self.hi is None else "box"

    def project(self, candidate: np.ndarray) -> np.ndarray:
        candidate = np.asarray(candidate, dtype=float)
        if self.kind == "unconstrained":
            return candidate.copy()
        return np.clip(candidate, self.lo, self.hi)


def project(admissible: AdmissibleSet, candidate: np.ndarray) -> np.ndarray:
    """Pointwise projection onto the admissible set (idempotent, nonexpansive)."""
    return admissible.project(candidate)


@dataclass(frozen=True)
class CostConfig:
    """Tracking target and control penalties.

    ``n_tikhonov`` weights the single-edge control; ``channel_weights`` the
    graph channels (edges ``2..n``), all one by default.  For the edge
    problem the target lives here; graph targets live on the problem.
    """

    n_tikhonov: float = 1.0
    channel_weights: np.ndarray | None = None
    y_d: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.n_tikhonov <= 0.0:
            raise ValueError(f"Tikhonov weight must be positive, got {self.n_tikhonov}")
        if self.channel_weights is not None and np.any(
            np.asarray(self.channel_weights) <= 0.0
        ):
            raise ValueError("channel weights must be positive")

    def weights_for(self, problem: StarGraphProblem) -> np.ndarray:
        nch = problem.n - 1
        if self.channel_weights is None:
            return np.ones(nch)
        w = np.asarray(self.channel_weights, dtype=float)
        if w.shape != (nch,):
            raise ValueError(f"expected {nch} channel weights, got shape {w.shape}")
        return w


@dataclass(frozen=True)
class EdgeControlProblem:
    """Single-edge tracking problem: Neumann control at ``b``, data fixed."""

    edge_op: EdgeOperator
    time_grid: TimeGrid
    f: np.ndarray | None
    y0: np.ndarray


@dataclass
class OptimResult:
    controls: np.ndarray = field(repr=False)
    cost_history: np.ndarray = field(repr=False)
    residual_history: np.ndarray = field(repr=False)
    state: Trajectory | GraphTrajectory = field(repr=False)
    adjoint: Trajectory | GraphTrajectory | None = field(repr=False)
    converged: bool = False
    reason: str = ""
    iterations: int = 0


def _space_weights(grid) -> np.ndarray:
    return grid.trapezoid_weights()


def cost_edge(y: Trajectory, v: np.ndarray, cfg: CostConfig) -> float:
    """Trapezoid space-time tracking cost plus the Tikhonov control penalty."""
    if cfg.y_d is None:
        raise ValueError("edge cost needs cfg.y_d")
    y_d = np.asarray(cfg.y_d, dtype=float)
    if y_d.shape != y.y.shape:
        raise ValueError(f"target shape {y_d.shape} != state shape {y.y.shape}")
    omega = y.time_grid.trapezoid_weights()
    wx = _space_weights(y.grid)
    diff = y.y - y_d
    track = 0.5 * float(np.einsum("k,kj,j,kj->", omega, diff, wx, diff))
    v = np.asarray(v, dtype=float)
    return track + 0.5 * cfg.n_tikhonov * float(omega @ v**2)


def gradient_edge(u: np.ndarray, p: Trajectory, cfg: CostConfig) -> np.ndarray:
    """Optimality-system integrand ``N u(t_k) - (I^(1-alpha) p)(b^-, t_k)``."""
    return cfg.n_tikhonov * np.asarray(u, dtype=float) - p.trace_b


def cost_graph(
    y: GraphTrajectory,
    controls: np.ndarray,
    problem: StarGraphProblem,
    cfg: CostConfig,
) -> float:
    """Tracking over all edges plus the per-channel control penalties."""
    omega = problem.time_grid.trapezoid_weights()
    total = 0.0
    for i in range(problem.n):
        ydi = problem.y_d[i]
        si = y.samples[i]
        diff = si if ydi is None else si - np.asarray(ydi, dtype=float)
        wx = problem.grids[i].trapezoid_weights()
        total += 0.5 * float(np.einsum("k,kj,j,kj->", omega, diff, wx, diff))
    w = cfg.weights_for(problem)
    controls = np.asarray(controls, dtype=float)
    for j in range(problem.n - 1):
        total += 0.5 * w[j] * float(omega @ controls[j] ** 2)
    return total


def gradient_graph(
    controls: np.ndarray,
    p: GraphTrajectory,
    problem: StarGraphProblem,
    cfg: CostConfig,
) -> np.ndarray:
    """Channel-wise optimality integrands: ``w_i u_i - (beta D^alpha p)(b_i^-)``
    on Dirichlet channels, ``w_i u_i + (I^(1-alpha) p)(b_i^-)`` on Neumann ones.
    """
    if p.dirichlet_flux_series is None or p.neumann_trace_series is None:
        raise ValueError("gradient_graph needs an adjoint GraphTrajectory")
    controls = np.asarray(controls, dtype=float)
    if controls.shape[0] != problem.n - 1:
        raise ValueError(
            f"expected {problem.n - 1} control channels, got {controls.shape[0]}"
        )
    w = cfg.weights_for(problem)
    g = np.empty_like(controls)
    nd = problem.n_dirichlet_channels
    for j in range(nd):
        g[j] = w[j] * controls[j] - p.dirichlet_flux_series[:, j + 1]
    for j in range(problem.n - 1 - nd):
        g[nd + j] = w[nd + j] * controls[nd + j] + p.neumann_trace_series[:, j]
    return g


class _EdgeDriver:
    """Simulation/cost/gradient closures for the single-edge problem."""

    def __init__(self, problem: EdgeControlProblem, cfg: CostConfig):
        self.problem = problem
        self.cfg = cfg
        self.nchannels = 1
        self.omega = problem.time_grid.trapezoid_weights()
        self.tikhonov = np.array([cfg.n_tikhonov])

    def simulate(self, ctrl: np.ndarray) -> Trajectory:
        pr = self.problem
        return solve_forward_edge(pr.edge_op, pr.time_grid, pr.f, pr.y0, ctrl[0])

    def cost(self, state: Trajectory, ctrl: np.ndarray) -> float:
        return cost_edge(state, ctrl[0], self.cfg)

    def adjoint(self, state: Trajectory) -> Trajectory:
        pr = self.problem
        return solve_adjoint_edge(pr.edge_op, pr.time_grid, state, self.cfg.y_d)

    def gradient(self, ctrl: np.ndarray, adj: Trajectory) -> np.ndarray:
        return gradient_edge(ctrl[0], adj, self.cfg)[None, :]

    def optimality_map(self, adj: Trajectory) -> np.ndarray:
        return (adj.trace_b / self.cfg.n_tikhonov)[None, :]


class _GraphDriver:
    """Simulation/cost/gradient closures for the graph problem; the global
    system is assembled once and shared across all solves."""

    def __init__(self, problem: StarGraphProblem, cfg: CostConfig):
        self.problem = problem
        self.cfg = cfg
        self.system = assemble_graph_system(problem)
        self.nchannels = problem.n - 1
        self.omega = problem.time_grid.trapezoid_weights()
        self.tikhonov = cfg.weights_for(problem)

    def _split(self, ctrl: np.ndarray):
        nd = self.problem.n_dirichlet_channels
        return ctrl[:nd], ctrl[nd:]

    def simulate(self, ctrl: np.ndarray) -> GraphTrajectory:
        u, v = self._split(ctrl)
        return solve_forward_graph(self.problem, u, v, system=self.system)

    def cost(self, state: GraphTrajectory, ctrl: np.ndarray) -> float:
        return cost_graph(state, ctrl, self.problem, self.cfg)

    def adjoint(self, state: GraphTrajectory) -> GraphTrajectory:
        return solve_adjoint_graph(self.problem, state, system=self.system)

    def gradient(self, ctrl: np.ndarray, adj: GraphTrajectory) -> np.ndarray:
        return gradient_graph(ctrl, adj, self.problem, self.cfg)

    def optimality_map(self, adj: GraphTrajectory) -> np.ndarray:
        nd = self.problem.n_dirichlet_channels
        out = np.empty((self.nchannels, self.problem.time_grid.Nt + 1))
        for j in range(nd):
            out[j] = adj.dirichlet_flux_series[:, j + 1] / self.tikhonov[j]
        for j in range(self.nchannels - nd):
            out[nd + j] = -adj.neumann_trace_series[:, j] / self.tikhonov[nd + j]
        return out


def _make_driver(problem, cfg: CostConfig):
    if isinstance(problem, EdgeControlProblem):
        return _EdgeDriver(problem, cfg)
    if isinstance(problem, StarGraphProblem):
        return _GraphDriver(problem, cfg)
    raise TypeError(f"cannot optimize a {type(problem).__name__}")


def _normalize_sets(admissible, nchannels: int) -> list[AdmissibleSet]:
    if isinstance(admissible, AdmissibleSet):
        return [admissible] * nchannels
    sets = list(admissible)
    if len(sets) != nchannels:
        raise ValueError(f"expected {nchannels} admissible sets, got {len(sets)}")
    return sets


# Armijo parameters: fixed, deterministic defaults.
_ARMIJO_DECREASE = 1e-4
_ARMIJO_BACKTRACK = 0.5
_MAX_HALVINGS = 40


def optimize(
    problem,
    cfg: CostConfig,
    admissible,
    algo: str = "projected_gradient",
    tol: float = 1e-6,
    max_iter: int = 200,
    u0: np.ndarray | None = None,
) -> OptimResult:
    """Minimize the tracking cost over the admissible controls.

    ``algo`` is ``"projected_gradient"`` (Armijo backtracking along the
    projection arc) or ``"fixed_point"`` (damped iteration of the projected
    optimality map).  Termination uses the stationarity measure
    ``||u - P(u - g)|| / max(1, ||u||)`` in the trapezoid norm; exceeding
    ``max_iter`` flags the result as non-converged instead of raising.
    """
    driver = _make_driver(problem, cfg)
    sets = _normalize_sets(admissible, driver.nchannels)
    omega = driver.omega

    def proj(ctrl: np.ndarray) -> np.ndarray:
        return np.stack([sets[j].project(ctrl[j]) for j in range(len(sets))])

    def inner(a: np.ndarray, b: np.ndarray) -> float:
        return float(np.einsum("jk,k,jk->", a, omega, b))

    def norm(a: np.ndarray) -> float:
        return float(np.sqrt(max(inner(a, a), 0.0)))

    nt = driver.omega.shape[0] - 1
    if u0 is None:
        ctrl = np.zeros((driver.nchannels, nt + 1))
    else:
        ctrl = np.asarray(u0, dtype=float).reshape(driver.nchannels, nt + 1).copy()
    ctrl = proj(ctrl)

    state = driver.simulate(ctrl)
    cost = driver.cost(state, ctrl)
    cost_hist = [cost]
    res_hist: list[float] = []
    adj = None
    converged = False
    reason = "max_iter"
    iterations = 0

    damping = 1.0
    if algo == "fixed_point" and float(np.min(driver.tikhonov)) < 1.0:
        damping = 0.5

    for it in range(1, max_iter + 1):
        iterations = it
        adj = driver.adjoint(state)
        grad = driver.gradient(ctrl, adj)
        residual = norm(ctrl - proj(ctrl - grad)) / max(1.0, norm(ctrl))
        res_hist.append(residual)
        if residual <= tol:
            converged, reason = True, "stationarity"
            break

        if algo == "projected_gradient":
            step = 1.0
            accepted = stalled = False
            for _ in range(_MAX_HALVINGS + 1):
                cand = proj(ctrl - step * grad)
                decrease = inner(grad, ctrl - cand)
                if decrease <= 0.0:
                    # projection-arc fixed point at machine precision
                    stalled = True
                    break
                cand_state = driver.simulate(cand)
                cand_cost = driver.cost(cand_state, cand)
                if cand_cost <= cost - _ARMIJO_DECREASE * decrease:
                    ctrl, state, cost = cand, cand_state, cand_cost
                    accepted = True
                    break
                step *= _ARMIJO_BACKTRACK
            if stalled:
                converged = residual <= tol
                reason = "stationarity" if converged else "rounding-limited"
                break
            if not accepted:
                raise SolverFailure(
                    f"line search failed after {_MAX_HALVINGS} halvings at "
                    f"iteration {it} (cost {cost}, residual {residual})"
                )
            cost_hist.append(cost)
        elif algo == "fixed_point":
            target = proj(driver.optimality_map(adj))
            ctrl = (1.0 - damping) * ctrl + damping * target
            state = driver.simulate(ctrl)
            cost = driver.cost(state, ctrl)
            cost_hist.append(cost)
        else:
            raise ValueError(f"unknown algorithm {algo!r}")

    return OptimResult(
        controls=ctrl,
        cost_history=np.array(cost_hist),
        residual_history=np.array(res_hist),
        state=state,
        adjoint=adj,
        converged=converged,
        reason=reason,
        iterations=iterations,
    )

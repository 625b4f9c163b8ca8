"""Multi-agent consensus formulation and its distributed PAL flow.

Each agent ``i`` keeps its own copy ``x_i`` of the decision variable and
knows only its local ``f_i``, ``g_i`` and ``h_i``. Consensus is imposed
through the indicator of ``{(T ⊗ I) x_hat = 0}`` where ``T`` is the edge
incidence matrix. Writing ``w'_i`` for agent ``i``'s block of
``(T ⊗ I)' w`` the flow becomes local::

    x_i'   = (1/mu) sum_{j in N_i} (x_j - x_i) - grad f_i - Jg_i' lam_i - Jh_i' nu_i - w'_i
    lam_i' = lam_i / (1 + eta lam_i) * g_i(x_i)
    nu_i'  = h_i(x_i)
    w'_i'  = -sum_{j in N_i} (x_j - x_i)

The sum of the ``w'_i`` never changes, so only initial values with zero
sum (the range of ``(T ⊗ I)'``) lead to the consensus optimum.
"""
from __future__ import annotations

import itertools
import warnings
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from palflow import rosen_suzuki as rs
from palflow.dynamics import DynamicsParams, PrimalDualState
from palflow.engine import (
    LAMBDA_FLOOR,
    ContinuationRound,
    IntegratorConfig,
    RateEstimate,
    StopReason,
    Trajectory,
    check_schedule,
    estimate_rate,
    run_flow,
)
from palflow.errors import ContractError, EstimationError, ParameterError
from palflow.problem import (
    KktPoint,
    Oracle,
    ProblemSpec,
    ResidualReport,
    kkt_residual,
    recover_multipliers,
)
from palflow.polynomial import Polynomial, PolySystem
from palflow.prox import ProxFunction


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on nodes ``0..num_nodes-1``; must be connected."""

    num_nodes: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        N = int(self.num_nodes)
        if N <= 0:
            raise ContractError("a graph needs at least one node")
        norm = []
        seen = set()
        for a, b in self.edges:
            a, b = int(a), int(b)
            if a == b:
                raise ContractError(f"self-loop at node {a}")
            if not (0 <= a < N and 0 <= b < N):
                raise ContractError(f"edge ({a}, {b}) references a missing node")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise ContractError(f"duplicate edge {key}")
            seen.add(key)
            norm.append(key)
        object.__setattr__(self, "edges", tuple(norm))
        if not self._connected():
            raise ContractError("graph is not connected")

    def _connected(self) -> bool:
        nbrs = self.neighbors
        seen = {0}
        queue = deque([0])
        while queue:
            u = queue.popleft()
            for v in nbrs[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return len(seen) == self.num_nodes

    @property
    def neighbors(self) -> list[list[int]]:
        out = [[] for _ in range(self.num_nodes)]
        for a, b in self.edges:
            out[a].append(b)
            out[b].append(a)
        return [sorted(x) for x in out]

    def laplacian(self) -> np.ndarray:
        """Degree minus adjacency, built without the incidence matrix."""
        L = np.zeros((self.num_nodes, self.num_nodes), dtype=np.int64)
        for a, b in self.edges:
            L[a, b] -= 1
            L[b, a] -= 1
            L[a, a] += 1
            L[b, b] += 1
        return L

    @classmethod
    def path(cls, num_nodes: int) -> Graph:
        return cls(num_nodes, tuple((i, i + 1) for i in range(num_nodes - 1)))

    @classmethod
    def cycle(cls, num_nodes: int) -> Graph:
        return cls(num_nodes, tuple((i, (i + 1) % num_nodes) for i in range(num_nodes)))


def default_five_agent_graph() -> Graph:
    """5-cycle plus the chord between agents 1 and 3 (0-based: 0 and 2)."""
    return Graph(5, ((0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (0, 2)))


def incidence_matrix(graph: Graph) -> np.ndarray:
    """Edge-by-node incidence: ``+1`` at the lower endpoint, ``-1`` at the higher."""
    T = np.zeros((len(graph.edges), graph.num_nodes), dtype=np.int64)
    for k, (a, b) in enumerate(graph.edges):
        T[k, a] = 1
        T[k, b] = -1
    return T


@dataclass(frozen=True, eq=False)
class LocalProblem:
    f: Oracle
    g: tuple[Oracle, ...] = ()
    h: tuple[Oracle, ...] = ()

    @property
    def r(self) -> int:
        return len(self.g)

    @property
    def s(self) -> int:
        return len(self.h)


@dataclass(frozen=True, eq=False)
class NetworkSpec:
    graph: Graph
    local_problems: tuple[LocalProblem, ...]
    n: int
    known_optimum: np.ndarray | None = None
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "local_problems", tuple(self.local_problems))
        if len(self.local_problems) != self.graph.num_nodes:
            raise ContractError(
                f"{len(self.local_problems)} local problems for {self.graph.num_nodes} nodes")
        x = np.zeros(self.n)
        for i, lp in enumerate(self.local_problems):
            object.__setattr__(lp, "g", tuple(lp.g))
            object.__setattr__(lp, "h", tuple(lp.h))
            for o in (lp.f, *lp.g, *lp.h):
                if np.asarray(o.grad(x)).shape != (self.n,):
                    raise ContractError(f"agent {i}: oracle gradient has the wrong shape")
        if self.known_optimum is not None:
            object.__setattr__(self, "known_optimum",
                               np.asarray(self.known_optimum, dtype=float))

    @property
    def N(self) -> int:
        return self.graph.num_nodes

    @property
    def r_sizes(self) -> list[int]:
        return [lp.r for lp in self.local_problems]

    @property
    def s_sizes(self) -> list[int]:
        return [lp.s for lp in self.local_problems]


@dataclass(frozen=True, eq=False)
class NetworkState:
    """Per-agent ``x_i``, ``lam_i``, ``nu_i`` and transformed multiplier ``w'_i``."""

    x: np.ndarray
    lam: tuple[np.ndarray, ...]
    nu: tuple[np.ndarray, ...]
    w: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_2d(np.asarray(self.x, dtype=float)))
        object.__setattr__(self, "w", np.atleast_2d(np.asarray(self.w, dtype=float)))
        object.__setattr__(self, "lam", tuple(np.asarray(a, dtype=float).reshape(-1) for a in self.lam))
        object.__setattr__(self, "nu", tuple(np.asarray(a, dtype=float).reshape(-1) for a in self.nu))
        if self.x.shape != self.w.shape:
            raise ContractError("x and w' must both have shape (N, n)")
        if any(np.any(a < 0) for a in self.lam):
            raise ContractError("inequality multipliers must be nonnegative")

    def check_shapes(self, net: NetworkSpec):
        if self.x.shape != (net.N, net.n):
            raise ContractError(f"x has shape {self.x.shape}, expected ({net.N}, {net.n})")
        if [a.size for a in self.lam] != net.r_sizes or [a.size for a in self.nu] != net.s_sizes:
            raise ContractError("multiplier sizes do not match the local constraints")


@dataclass(frozen=True, eq=False)
class NetworkDerivative:
    x: np.ndarray
    lam: tuple[np.ndarray, ...]
    nu: tuple[np.ndarray, ...]
    w: np.ndarray

    def flat(self) -> np.ndarray:
        return np.concatenate([self.x.ravel(), *self.lam, *self.nu, self.w.ravel()])

    def norm(self) -> float:
        return float(np.linalg.norm(self.flat()))


class NetworkLayout:
    """Flat ordering ``(x_1..x_N, lam_1..lam_N, nu_1..nu_N, w'_1..w'_N)``."""

    def __init__(self, net: NetworkSpec):
        self.N, self.n = net.N, net.n
        self.r_sizes = net.r_sizes
        self.s_sizes = net.s_sizes
        self.R = sum(self.r_sizes)
        self.S = sum(self.s_sizes)
        self.nx = self.N * self.n
        self.size = 2 * self.nx + self.R + self.S
        self.lam_offsets = np.concatenate([[0], np.cumsum(self.r_sizes)]).astype(int)
        self.nu_offsets = np.concatenate([[0], np.cumsum(self.s_sizes)]).astype(int)

    @property
    def lam_index(self) -> np.ndarray:
        return np.arange(self.nx, self.nx + self.R)

    def split(self, z):
        nx, R, S = self.nx, self.R, self.S
        X = z[:nx].reshape(self.N, self.n)
        lam = z[nx:nx + R]
        nu = z[nx + R:nx + R + S]
        W = z[nx + R + S:].reshape(self.N, self.n)
        return X, lam, nu, W

    def pack(self, state: NetworkState) -> np.ndarray:
        return np.concatenate([state.x.ravel(), *state.lam, *state.nu, state.w.ravel()])

    def unpack(self, z, t=0.0) -> NetworkState:
        X, lam, nu, W = self.split(z)
        lo, no = self.lam_offsets, self.nu_offsets
        return NetworkState(
            X.copy(),
            tuple(lam[lo[i]:lo[i + 1]].copy() for i in range(self.N)),
            tuple(nu[no[i]:no[i + 1]].copy() for i in range(self.N)),
            W.copy(), t)


def local_field(lp: LocalProblem, x_i, neighbor_x: Sequence[np.ndarray], lam_i, nu_i, w_i,
                mu: float, eta: float | np.ndarray = 1.0):
    """Derivative of one agent's variables from its own state and its neighbors' ``x``."""
    diffusion = np.zeros_like(x_i)
    for xj in neighbor_x:
        diffusion += xj - x_i
    dx = diffusion / mu - np.asarray(lp.f.grad(x_i), dtype=float) - w_i
    dlam = np.zeros(lp.r)
    dnu = np.zeros(lp.s)
    if lp.r:
        gx = np.array([o.value(x_i) for o in lp.g])
        dx -= np.array([o.grad(x_i) for o in lp.g]).T @ lam_i
        dlam = lam_i / (1.0 + eta * lam_i) * gx
    if lp.s:
        dx -= np.array([o.grad(x_i) for o in lp.h]).T @ nu_i
        dnu = np.array([o.value(x_i) for o in lp.h])
    return dx, dlam, dnu, -diffusion


def _eta_blocks(params: DynamicsParams, net: NetworkSpec) -> list[np.ndarray]:
    eta = params.eta_for(sum(net.r_sizes))
    offs = np.concatenate([[0], np.cumsum(net.r_sizes)]).astype(int)
    return [eta[offs[i]:offs[i + 1]] for i in range(net.N)]


def distributed_field(net: NetworkSpec, state: NetworkState,
                      params: DynamicsParams) -> NetworkDerivative:
    """Evaluate every agent's local dynamics (each agent sees only its neighbors)."""
    state.check_shapes(net)
    nbrs = net.graph.neighbors
    etas = _eta_blocks(params, net)
    dX, dW, dlam, dnu = [], [], [], []
    for i, lp in enumerate(net.local_problems):
        dx, dl, dn, dw = local_field(
            lp, state.x[i], [state.x[j] for j in nbrs[i]], state.lam[i], state.nu[i],
            state.w[i], params.mu, etas[i])
        dX.append(dx)
        dlam.append(dl)
        dnu.append(dn)
        dW.append(dw)
    return NetworkDerivative(np.array(dX), tuple(dlam), tuple(dnu), np.array(dW))


def consensus_error(state: NetworkState | np.ndarray) -> float:
    """Largest distance between any two agents' copies of ``x``."""
    X = state.x if isinstance(state, NetworkState) else np.asarray(state, dtype=float)
    worst = 0.0
    for i, j in itertools.combinations(range(X.shape[0]), 2):
        worst = max(worst, float(np.linalg.norm(X[i] - X[j])))
    return worst


class _BlockOracle:
    """Lift an oracle on ``R^n`` to the stacked variable, acting on block ``i``."""

    def __init__(self, inner, i: int, n: int, N: int):
        self.inner, self.sl, self.size = inner, slice(i * n, (i + 1) * n), N * n
        self.name = f"{getattr(inner, 'name', '')}@{i}"
        self.is_affine = getattr(inner, "is_affine", None)

    def value(self, xh):
        return float(self.inner.value(np.asarray(xh)[self.sl]))

    def grad(self, xh):
        out = np.zeros(self.size)
        out[self.sl] = self.inner.grad(np.asarray(xh)[self.sl])
        return out


class _SumOracle:
    def __init__(self, parts: Sequence[_BlockOracle]):
        self.parts = list(parts)
        self.name = "F"
        self.is_affine = None

    def value(self, xh):
        return float(sum(p.value(xh) for p in self.parts))

    def grad(self, xh):
        return np.sum([p.grad(xh) for p in self.parts], axis=0)


def stacked_problem(net: NetworkSpec) -> ProblemSpec:
    """Centralized form: ``min F(x_hat) + phi((T ⊗ I) x_hat)`` with stacked ``G``, ``H``.

    ``phi`` is the indicator of zero. ``T ⊗ I`` is rank deficient, so the
    full-column-rank check is skipped for this problem.
    """
    N, n = net.N, net.n
    F = _SumOracle([_BlockOracle(lp.f, i, n, N) for i, lp in enumerate(net.local_problems)])
    G = tuple(_BlockOracle(o, i, n, N) for i, lp in enumerate(net.local_problems) for o in lp.g)
    H = tuple(_BlockOracle(o, i, n, N) for i, lp in enumerate(net.local_problems) for o in lp.h)
    That = np.kron(incidence_matrix(net.graph).astype(float), np.eye(n))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        spec = ProblemSpec(
            n=N * n, f=F, g=G, h=H, T=That,
            phi=ProxFunction.indicator_zero(That.shape[0]),
            known_optimum=None if net.known_optimum is None else np.tile(net.known_optimum, N),
            name=f"{net.name}-stacked", check_rank=False)
    return spec


def edge_to_node_multiplier(net: NetworkSpec, w_edges) -> np.ndarray:
    """``w' = (T ⊗ I)' w`` with ``w_edges`` shaped ``(|E|, n)``; returns ``(N, n)``."""
    T = incidence_matrix(net.graph).astype(float)
    return T.T @ np.asarray(w_edges, dtype=float).reshape(T.shape[0], net.n)


def node_to_edge_multiplier(net: NetworkSpec, w_nodes) -> np.ndarray:
    """Least-squares ``w`` with ``(T ⊗ I)' w`` closest to ``w_nodes``; shape ``(|E|, n)``."""
    T = incidence_matrix(net.graph).astype(float)
    W = np.asarray(w_nodes, dtype=float).reshape(net.N, net.n)
    return np.linalg.lstsq(T.T, W, rcond=None)[0]


class NetworkFlow:
    """Distributed flow on a flat vector, for :func:`palflow.engine.run_flow`."""

    def __init__(self, net: NetworkSpec, params: DynamicsParams):
        self.net = net
        self.params = params
        self.layout = NetworkLayout(net)
        self.size = self.layout.size
        self.lam_index = self.layout.lam_index
        self.L = net.graph.laplacian().astype(float)
        self.T = incidence_matrix(net.graph).astype(float)
        self.Tpinv_t = np.linalg.pinv(self.T.T)
        self.stacked = stacked_problem(net)
        self.eta = params.eta_for(self.layout.R)
        self._poly = self._compile_polynomials()

    def _compile_polynomials(self):
        """Batch all local oracles into one system when every one is a polynomial."""
        n = self.net.n
        fs, gs, hs = [], [], []
        for i, lp in enumerate(self.net.local_problems):
            fs.append((lp.f, i * n))
            gs.extend((o, i * n) for o in lp.g)
            hs.extend((o, i * n) for o in lp.h)
        parts = fs + gs + hs
        if not all(isinstance(o, Polynomial) and o.n == n for o, _ in parts):
            return None
        return PolySystem(parts, self.layout.nx)

    def field(self, z):
        if self._poly is not None:
            return self._field_batched(z)
        return self._field_loop(z)

    def _field_batched(self, z):
        lay = self.layout
        nx, R, S, N = lay.nx, lay.R, lay.S, lay.N
        X, lam, nu, W = lay.split(z)
        vals, jac = self._poly.evaluate(z[:nx])
        diffusion = -(self.L @ X)
        # f rows have disjoint blocks, so their sum is the stacked gradient
        grad = jac[:N].sum(axis=0)
        if R:
            grad += lam @ jac[N:N + R]
        if S:
            grad += nu @ jac[N + R:]
        out = np.empty_like(z)
        out[:nx] = (diffusion / self.params.mu - W).ravel() - grad
        out[nx:nx + R] = lam / (1.0 + self.eta * lam) * vals[N:N + R]
        out[nx + R:nx + R + S] = vals[N + R:]
        out[nx + R + S:] = -diffusion.ravel()
        return out

    def _field_loop(self, z):
        lay = self.layout
        X, lam, nu, W = lay.split(z)
        diffusion = -(self.L @ X)
        dX = diffusion / self.params.mu - W
        out = np.empty_like(z)
        lo, no = lay.lam_offsets, lay.nu_offsets
        dlam = out[lay.nx:lay.nx + lay.R]
        dnu = out[lay.nx + lay.R:lay.nx + lay.R + lay.S]
        for i, lp in enumerate(self.net.local_problems):
            xi = X[i]
            dX[i] -= lp.f.grad(xi)
            if lp.g:
                li = lam[lo[i]:lo[i + 1]]
                for k, o in enumerate(lp.g):
                    dX[i] -= li[k] * o.grad(xi)
                    e = self.eta[lo[i] + k]
                    dlam[lo[i] + k] = li[k] / (1.0 + e * li[k]) * o.value(xi)
            if lp.h:
                ni = nu[no[i]:no[i + 1]]
                for k, o in enumerate(lp.h):
                    dX[i] -= ni[k] * o.grad(xi)
                    dnu[no[i] + k] = o.value(xi)
        out[:lay.nx] = dX.ravel()
        out[lay.nx + lay.R + lay.S:] = -diffusion.ravel()
        return out

    def kkt_point(self, z) -> KktPoint:
        X, lam, nu, W = self.layout.split(z)
        w_edges = self.Tpinv_t @ W
        return KktPoint(X.ravel(), np.maximum(lam, 0.0), nu, w_edges.ravel())

    def kkt(self, z) -> ResidualReport:
        return kkt_residual(self.stacked, self.kkt_point(z), self.params.mu)

    def unpack(self, z, t=0.0):
        return self.layout.unpack(z, t)

    def extras(self, z):
        X = z[:self.layout.nx].reshape(self.layout.N, self.layout.n)
        return {"consensus_error": consensus_error(X)}


def network_kkt_residual(net: NetworkSpec, state: NetworkState, mu: float) -> ResidualReport:
    """KKT residual of the stacked problem, with ``w`` recovered from ``w'`` by least squares.

    The component of ``w'`` outside the range of ``(T ⊗ I)'`` shows up in
    the stationarity residual.
    """
    flow = NetworkFlow(net, DynamicsParams(mu))
    return flow.kkt(flow.layout.pack(state))


def stacked_state(net: NetworkSpec, state: NetworkState, w_edges) -> PrimalDualState:
    """Centralized state matching ``state`` with edge multiplier ``w_edges``."""
    return PrimalDualState(state.x.ravel(), np.concatenate([np.zeros(0), *state.lam]),
                           np.concatenate([np.zeros(0), *state.nu]),
                           np.asarray(w_edges, dtype=float).ravel(), state.t)


@dataclass(eq=False)
class NetworkSolution:
    x: np.ndarray
    state: NetworkState
    converged: bool
    stop_reason: StopReason
    kkt: ResidualReport
    consensus_error: float
    trajectory: Trajectory = field(repr=False)
    rate_estimate: RateEstimate | None = None

    @property
    def kkt_total(self) -> float:
        return self.kkt.total


def simulate(net: NetworkSpec, state0: NetworkState, params: DynamicsParams,
             cfg: IntegratorConfig | None = None, kkt_tol: float | None = 1e-6, *,
             fit_rate: bool = True) -> NetworkSolution:
    """Run the distributed flow with one global integrator.

    Stops early once the stacked KKT total reaches ``kkt_tol`` (pass
    ``None`` to always run to ``cfg.t_end``).
    """
    if kkt_tol is not None and not kkt_tol > 0:
        raise ParameterError("kkt_tol must be positive")
    cfg = cfg or IntegratorConfig()
    state0.check_shapes(net)
    flow = NetworkFlow(net, params)
    traj = run_flow(flow, flow.layout.pack(state0), cfg, stop_tol=kkt_tol, t0=state0.t)
    final = traj.final_state
    rate = None
    if fit_rate:
        try:
            rate = estimate_rate(traj)
        except EstimationError:
            rate = None
    return NetworkSolution(
        x=final.x.copy(),
        state=final,
        converged=traj.stop_reason is StopReason.KKT_TOL,
        stop_reason=traj.stop_reason,
        kkt=traj.final_kkt,
        consensus_error=consensus_error(final),
        trajectory=traj,
        rate_estimate=rate,
    )


def simulate_continuation(net: NetworkSpec, mu_schedule: Sequence[float],
                          params_template: DynamicsParams, cfg: IntegratorConfig | None = None,
                          kkt_tol: float = 1e-6, state0: NetworkState | None = None
                          ) -> tuple[NetworkSolution, list[ContinuationRound]]:
    """Distributed counterpart of :func:`palflow.engine.continuation`."""
    schedule = check_schedule(mu_schedule)
    if state0 is None:
        raise ContractError("a network continuation needs an initial state")
    state, sol, rounds = state0, None, []
    for mu in schedule:
        sol = simulate(net, state, params_template.with_mu(mu), cfg, kkt_tol)
        rounds.append(ContinuationRound(mu, sol.converged, sol.stop_reason, sol.kkt_total,
                                        float(sol.trajectory.times[-1]), sol.trajectory))
        st = sol.state
        state = replace(st, lam=tuple(np.maximum(l, LAMBDA_FLOOR) for l in st.lam))
    return sol, rounds


W_INIT_MODES = ("uniform", "edge")


def rosen_suzuki_network(graph: Graph | None = None,
                         w_init: str = "uniform") -> tuple[NetworkSpec, NetworkState]:
    """Five-agent split of the Rosen-Suzuki problem with its reference start.

    Agent 1 holds ``f1, g1, h1``, agent 2 holds ``f2, g2`` and agents 3-5
    hold only their objective piece. ``w_init`` controls the transformed
    multiplier:

    ``"uniform"``
        every ``w'_i(0) = (1, 2, 3, 4)``. Their sum is conserved and nonzero,
        which shifts the equilibrium away from ``(0, 1, 2, -1)``.
    ``"edge"``
        every edge multiplier starts at ``(1, 2, 3, 4)`` and
        ``w'(0) = (T ⊗ I)' w(0)``, which lies in the admissible range.
    """
    if w_init not in W_INIT_MODES:
        raise ParameterError(f"w_init must be one of {W_INIT_MODES}, got {w_init!r}")
    graph = graph or default_five_agent_graph()
    if graph.num_nodes != 5:
        raise ContractError("the Rosen-Suzuki split uses exactly five agents")
    fs = rs.local_objectives()
    lps = [
        LocalProblem(fs[0], (rs.g1(),), (rs.h1(),)),
        LocalProblem(fs[1], (rs.g2(),)),
        LocalProblem(fs[2]),
        LocalProblem(fs[3]),
        LocalProblem(fs[4]),
    ]
    net = NetworkSpec(graph, lps, rs.N_VARS, known_optimum=rs.OPTIMUM.copy(),
                      name="rosen-suzuki-distributed")
    if w_init == "uniform":
        W0 = np.tile(rs.W0, (5, 1))
    else:
        W0 = edge_to_node_multiplier(net, np.tile(rs.W0, (len(graph.edges), 1)))
    state = NetworkState(
        rs.AGENT_X0.copy(),
        (np.array([rs.LAMBDA0]), np.array([rs.LAMBDA0]), np.zeros(0), np.zeros(0), np.zeros(0)),
        (np.array([rs.NU0]), np.zeros(0), np.zeros(0), np.zeros(0), np.zeros(0)),
        W0,
    )
    return net, state


def network_equilibrium(net: NetworkSpec, x) -> tuple[NetworkState, np.ndarray]:
    """Consensus state at ``x`` with stacked least-squares multipliers.

    Returns the network state and the edge multiplier it was built from.
    """
    stacked = stacked_problem(net)
    kp = recover_multipliers(stacked, np.tile(np.asarray(x, dtype=float), net.N))
    w_edges = kp.w.reshape(len(net.graph.edges), net.n)
    lay = NetworkLayout(net)
    z = np.concatenate([kp.x, kp.lam, kp.nu, edge_to_node_multiplier(net, w_edges).ravel()])
    return lay.unpack(z), w_edges


__all__ = [
    "Graph", "LocalProblem", "NetworkSpec", "NetworkState", "NetworkDerivative",
    "NetworkSolution", "incidence_matrix", "distributed_field", "consensus_error",
    "rosen_suzuki_network", "stacked_problem", "simulate", "network_kkt_residual",
    "default_five_agent_graph", "edge_to_node_multiplier", "node_to_edge_multiplier",
    "network_equilibrium", "stacked_state", "local_field", "W_INIT_MODES",
    "NetworkFlow", "NetworkLayout", "simulate_continuation",
]

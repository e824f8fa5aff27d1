"""Consensus ADMM over agent subproblems, plus a dual-decomposition baseline.

The iteration is bulk-synchronous: all agents minimize their augmented
local costs in parallel, the consensus vector is refreshed by component
averaging, then every agent takes a dual step. Reduction order is fixed
by agent index so parallel runs reproduce serial results bitwise.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor

from .problem import (augment_with_admm_terms, condense, condensed_bounds,
                      condensed_maps, copy_counts)
from .qp import BoxQp, power_iteration_lmax, solve_box_qp


class SolverFailure(RuntimeError):
    def __init__(self, agent, iteration, detail):
        super().__init__(f"subproblem of agent {agent} failed at iteration {iteration}: {detail}")
        self.agent = agent
        self.iteration = iteration


@dataclass
class AdmmState:
    x: list            # per-agent local vectors
    lam: list          # per-agent duals, same shapes
    z: np.ndarray
    rho: float
    k: int = 0
    history: list = field(default_factory=list)  # (r_primal, r_dual) per iteration


@dataclass
class AdmmResult:
    plans: list        # final per-agent local vectors
    z: np.ndarray
    state: AdmmState
    history: list      # rows (k, r_primal, r_dual, objective)
    converged: bool
    solve_times: list = field(default_factory=list)
    max_dual_avg_violation: float = 0.0


def x_update(i, state, problem, map_, qp_tol=1e-6, qp_max_iter=20000, warm=None):
    """Augmented local minimization for agent i (direct, uncached path)."""
    aug = augment_with_admm_terms(problem, state.z, state.lam[i - 1], state.rho, map_)
    qp, exp = condense(aug)
    sol = solve_box_qp(qp, tol=qp_tol, max_iter=qp_max_iter, x0=warm)
    if sol.status != "optimal":
        raise SolverFailure(i, state.k, f"{sol.status}: {sol.message}")
    return exp.expand(sol.x_star)


def z_update(state, maps, counts=None):
    """Componentwise average of every local copy mapping to each z entry."""
    z_dim = state.z.shape[0]
    if counts is None:
        counts = copy_counts(maps, z_dim)
    acc = np.zeros(z_dim)
    for m, x in zip(maps, state.x):
        np.add.at(acc, m.global_idx, x)
    return acc / counts


def dual_update(i, state, map_):
    """lam_i <- lam_i + rho (x_i - E_i z), with x and z at the new iterate."""
    return state.lam[i - 1] + state.rho * (state.x[i - 1] - state.z[map_.global_idx])


def residuals(state, maps, z_prev, counts=None):
    """Primal: copy disagreement with z. Dual: scaled z motion."""
    rp2 = 0.0
    for m, x in zip(maps, state.x):
        d = x - state.z[m.global_idx]
        rp2 += float(d @ d)
    if counts is None:
        counts = copy_counts(maps, state.z.shape[0])
    dz = state.z - z_prev
    rd = state.rho * float(np.sqrt(np.sum(counts * dz * dz)))
    return float(np.sqrt(rp2)), rd


class _AgentCache:
    """Per-agent condensed structure reused across iterations and MPC steps.

    Everything that depends only on topology, horizon, and rho is
    factorized once; rebinding measured states refreshes only the affine
    offset and the static part of the gradient.
    """

    def __init__(self, problem, rho, qp_tol):
        self.problem = problem
        self.rho = rho
        self.qp_tol = qp_tol
        M, c = condensed_maps(problem)
        self.M = M
        self.Mt = M.T
        self.HM = problem.H @ M
        P = M.T @ self.HM + rho * (M.T @ M)
        self.P = 0.5 * (P + P.T)
        self.cho = cho_factor(self.P)
        self.lipschitz = power_iteration_lmax(self.P)
        self.lo, self.hi = condensed_bounds(problem)
        self.warm = None
        self._bind(c)

    def _bind(self, c):
        self.c = c
        # q = M'((H + rho I)c + g + lam - rho z_loc); the first two terms are static
        self.q_static = self.Mt @ (self.problem.H @ c + self.problem.g) \
            + self.rho * (self.Mt @ c)
        self.Hc = self.problem.H @ c

    def rebind_states(self, x0_per_member):
        from dataclasses import replace
        self.problem = replace(self.problem, x0=tuple(np.asarray(v, float) for v in x0_per_member))
        _, c = condensed_maps(self.problem)
        self._bind(c)

    def solve(self, lam, z_loc, qp_max_iter=20000):
        q = self.q_static + self.Mt @ (lam - self.rho * z_loc)
        qp = BoxQp(self.P, q, self.lo, self.hi)
        sol = solve_box_qp(qp, tol=self.qp_tol, max_iter=qp_max_iter,
                           x0=self.warm, lipschitz=self.lipschitz, cho=self.cho)
        if sol.status != "optimal":
            raise RuntimeError(f"{sol.status}: {sol.message}")
        self.warm = sol.x_star
        return self.M @ sol.x_star + self.c

    def cost(self, x):
        return self.problem.cost(x)


class AdmmEngine:
    """Runs Algorithm-style ADMM sweeps over a fixed set of subproblems."""

    def __init__(self, problems, maps, rho, z_dim=None, qp_tol=1e-6, parallel=False):
        if rho <= 0:
            raise ValueError("rho must be positive")
        self.problems = list(problems)
        self.maps = list(maps)
        self.rho = rho
        self.z_dim = z_dim if z_dim is not None else int(max(m.global_idx.max() for m in maps) + 1)
        self.counts = copy_counts(self.maps, self.z_dim)
        self.caches = [_AgentCache(p, rho, qp_tol) for p in self.problems]
        self.pool = ThreadPoolExecutor(max_workers=len(problems)) if parallel else None

    def rebind_states(self, initial_states):
        for prob, cache in zip(self.problems, self.caches):
            cache.rebind_states([initial_states[j - 1] for j in prob.members])
        self.problems = [c.problem for c in self.caches]

    def reset_warm_starts(self):
        for c in self.caches:
            c.warm = None

    def run(self, max_iter, eps_primal=0.0, eps_dual=0.0, init=None,
            track_dual_average=False, record_times=False):
        N = len(self.problems)
        if init is None:
            state = AdmmState(
                x=[np.zeros(p.dim) for p in self.problems],
                lam=[np.zeros(p.dim) for p in self.problems],
                z=np.zeros(self.z_dim), rho=self.rho)
        else:
            state = init
        history = []
        solve_times = []
        max_viol = 0.0
        converged = False
        for k in range(1, max_iter + 1):
            if self.pool is not None:
                futures = [
                    self.pool.submit(self.caches[i].solve,
                                     state.lam[i], state.z[self.maps[i].global_idx])
                    for i in range(N)]
                for i, fut in enumerate(futures):
                    try:
                        state.x[i] = fut.result()
                    except RuntimeError as exc:
                        raise SolverFailure(i + 1, k, str(exc))
            else:
                for i in range(N):
                    t0 = time.perf_counter() if record_times else 0.0
                    try:
                        state.x[i] = self.caches[i].solve(
                            state.lam[i], state.z[self.maps[i].global_idx])
                    except RuntimeError as exc:
                        raise SolverFailure(i + 1, k, str(exc))
                    if record_times:
                        solve_times.append(time.perf_counter() - t0)
            z_prev = state.z
            state.z = z_update(state, self.maps, self.counts)
            for i in range(N):
                state.lam[i] = dual_update(i + 1, state, self.maps[i])
            if track_dual_average:
                acc = np.zeros(self.z_dim)
                for m, lam in zip(self.maps, state.lam):
                    np.add.at(acc, m.global_idx, lam)
                max_viol = max(max_viol, float(np.max(np.abs(acc), initial=0.0)))
            rp, rd = residuals(state, self.maps, z_prev, self.counts)
            state.k = k
            state.history.append((rp, rd))
            obj = sum(c.cost(x) for c, x in zip(self.caches, state.x))
            history.append((k, rp, rd, obj))
            if rp <= eps_primal and rd <= eps_dual:
                converged = True
                break
        return AdmmResult(plans=list(state.x), z=state.z, state=state,
                          history=history, converged=converged,
                          solve_times=solve_times, max_dual_avg_violation=max_viol)


def run_admm(problems, maps, rho, max_iter, eps_primal=0.0, eps_dual=0.0,
             init=None, qp_tol=1e-6, parallel=False, track_dual_average=False):
    """One-shot ADMM solve; initialization is lam = 0, z = 0 unless given."""
    engine = AdmmEngine(problems, maps, rho, qp_tol=qp_tol, parallel=parallel)
    try:
        return engine.run(max_iter, eps_primal, eps_dual, init=init,
                          track_dual_average=track_dual_average)
    finally:
        if engine.pool is not None:
            engine.pool.shutdown()


def history_csv_rows(history):
    """Rows (iter, r_primal, r_dual, objective) formatted for CSV export."""
    lines = ["iter,r_primal,r_dual,objective"]
    for k, rp, rd, obj in history:
        lines.append(f"{k},{rp:.17g},{rd:.17g},{obj:.17g}")
    return lines


# --- dual decomposition baseline -------------------------------------------

def _consistency_pairs(problems):
    """Constraints: each copy of a neighbor's block equals that neighbor's own block.

    Returned as (copy_owner_pos, member_pos_in_owner, var_owner_pos,
    own_pos_in_var_owner) index tuples over the problems list.
    """
    pairs = []
    for ip, p in enumerate(problems):
        for kp, j in enumerate(p.members):
            if j == p.owner:
                continue
            jp = j - 1
            own_pos = problems[jp].members.index(j)
            pairs.append((ip, kp, jp, own_pos))
    return pairs


def _member_block(p, pos):
    start = p.member_offsets()[pos]
    mdl = p.models[pos]
    return slice(start, start + mdl.n * (p.T + 1) + mdl.m * p.T)


def run_dual_decomposition(problems, maps, alpha_schedule, max_iter,
                           qp_tol=1e-8, qp_max_iter=50000):
    """Unaugmented dual ascent on the copy-consistency constraints.

    `alpha_schedule` maps iteration k (1-based) to a positive step size.
    History records the disagreement norm per iteration; runs abort if it
    blows up by 1e6 over its initial value.
    """
    if callable(alpha_schedule):
        alpha = alpha_schedule
    else:
        seq = list(alpha_schedule)
        alpha = lambda k: seq[min(k - 1, len(seq) - 1)]

    pairs = _consistency_pairs(problems)
    lams = [np.zeros(_member_block(problems[ip], kp).stop
                     - _member_block(problems[ip], kp).start)
            for ip, kp, _, _ in pairs]
    caches = []
    for p in problems:
        M, c = condensed_maps(p)
        P = M.T @ p.H @ M
        P = 0.5 * (P + P.T)
        lo, hi = condensed_bounds(p)
        caches.append({
            "M": M, "Mt": M.T, "c": c, "P": P, "lo": lo, "hi": hi,
            "q0": M.T @ (p.H @ c + p.g),
            "L": power_iteration_lmax(P), "warm": None,
        })

    x = [np.zeros(p.dim) for p in problems]
    history = []
    initial_norm = None
    for k in range(1, max_iter + 1):
        # linear dual term on each agent's local vector
        lin = [np.zeros(p.dim) for p in problems]
        for (ip, kp, jp, op), lam in zip(pairs, lams):
            lin[ip][_member_block(problems[ip], kp)] += lam
            lin[jp][_member_block(problems[jp], op)] -= lam
        for i, (p, cc) in enumerate(zip(problems, caches)):
            q = cc["q0"] + cc["Mt"] @ lin[i]
            sol = solve_box_qp(BoxQp(cc["P"], q, cc["lo"], cc["hi"]),
                               tol=qp_tol, max_iter=qp_max_iter,
                               x0=cc["warm"], lipschitz=cc["L"])
            if sol.status != "optimal":
                raise SolverFailure(p.owner, k, f"{sol.status}: {sol.message}")
            cc["warm"] = sol.x_star
            x[i] = cc["M"] @ sol.x_star + cc["c"]
        ak = alpha(k)
        dis2 = 0.0
        for idx, (ip, kp, jp, op) in enumerate(pairs):
            r = x[ip][_member_block(problems[ip], kp)] - x[jp][_member_block(problems[jp], op)]
            lams[idx] = lams[idx] + ak * r
            dis2 += float(r @ r)
        dis = float(np.sqrt(dis2))
        history.append((k, dis))
        if initial_norm is None:
            initial_norm = max(dis, 1e-12)
        if dis > 1e6 * initial_norm:
            raise RuntimeError(f"dual decomposition diverging: disagreement {dis:.3e} "
                               f"vs initial {initial_norm:.3e}")
    return x, history

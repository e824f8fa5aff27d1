"""Per-agent subproblem construction with local variable copies.

Each agent owns a stacked variable holding copies of its own and its
neighbors' state/input trajectories over the horizon. Selector maps tie
every copy to an entry of the global consensus vector z, whose layout is
agent-major: for each agent, states t=0..T then inputs t=0..T-1.
"""

from collections import namedtuple
from dataclasses import dataclass, replace

import numpy as np

from .dynamics import prediction_matrices
from .qp import BoxQp

Tag = namedtuple("Tag", ["agent", "kind", "t", "comp"])  # kind: "state" | "input"


class ZLayout:
    """Index arithmetic for the global consensus vector."""

    def __init__(self, agents, T):
        self.T = T
        self.dims = [(a.n, a.m) for a in agents]
        self.starts = []
        off = 0
        for n, m in self.dims:
            self.starts.append(off)
            off += n * (T + 1) + m * T
        self.dim = off

    def state_offset(self, agent, t, comp=0):
        n, _ = self.dims[agent - 1]
        return self.starts[agent - 1] + t * n + comp

    def input_offset(self, agent, t, comp=0):
        n, m = self.dims[agent - 1]
        return self.starts[agent - 1] + (self.T + 1) * n + t * m + comp

    def decode(self, z):
        """Split z into per-agent state (T+1, n) and input (T, m) arrays."""
        states, inputs = [], []
        for j, (n, m) in enumerate(self.dims, start=1):
            s0 = self.state_offset(j, 0)
            states.append(z[s0:s0 + (self.T + 1) * n].reshape(self.T + 1, n))
            u0 = self.input_offset(j, 0)
            inputs.append(z[u0:u0 + self.T * m].reshape(self.T, m))
        return states, inputs

    def tags(self):
        out = []
        for j, (n, m) in enumerate(self.dims, start=1):
            for t in range(self.T + 1):
                out.extend(Tag(j, "state", t, c) for c in range(n))
            for t in range(self.T):
                out.extend(Tag(j, "input", t, c) for c in range(m))
        return out


@dataclass(frozen=True)
class LocalIndexMap:
    """Map from an agent's local copies into the global consensus vector."""

    owner: int
    global_idx: np.ndarray  # local offset -> z offset
    tags: tuple

    @property
    def entries(self):
        return [(k, int(self.global_idx[k]), self.tags[k]) for k in range(len(self.tags))]


@dataclass(frozen=True)
class LocalProblem:
    """Agent `owner`'s quadratic subproblem over its copy vector.

    Layout of the local vector: for each member (owner and neighbors, in
    ascending index order) the states t=0..T then the inputs t=0..T-1.
    Cost is 0.5 x'Hx + g'x; dynamics and measured initial states enter as
    equality constraints, input boxes as bounds.
    """

    owner: int
    T: int
    members: tuple          # sorted agent indices, owner included
    models: tuple           # LtiAgent per member
    x0: tuple               # measured initial state per member
    H: np.ndarray
    g: np.ndarray

    @property
    def dim(self):
        return self.H.shape[0]

    def member_offsets(self):
        """Start offset of each member's block in the local vector."""
        offs = []
        off = 0
        for mdl in self.models:
            offs.append(off)
            off += mdl.n * (self.T + 1) + mdl.m * self.T
        return offs

    def state_slice(self, member_pos, t):
        mdl = self.models[member_pos]
        start = self.member_offsets()[member_pos] + t * mdl.n
        return slice(start, start + mdl.n)

    def input_slice(self, member_pos, t):
        mdl = self.models[member_pos]
        start = self.member_offsets()[member_pos] + (self.T + 1) * mdl.n + t * mdl.m
        return slice(start, start + mdl.m)

    def cost(self, x):
        return 0.5 * x @ self.H @ x + self.g @ x

    def dynamics_equalities(self):
        """Dense (A_eq, b_eq): x(0) pinned to measurements, rollout equalities."""
        T = self.T
        rows = sum(mdl.n * (T + 1) for mdl in self.models)
        A_eq = np.zeros((rows, self.dim))
        b_eq = np.zeros(rows)
        r = 0
        for pos, mdl in enumerate(self.models):
            s0 = self.state_slice(pos, 0)
            A_eq[r:r + mdl.n, s0] = np.eye(mdl.n)
            b_eq[r:r + mdl.n] = self.x0[pos]
            r += mdl.n
            for t in range(T):
                A_eq[r:r + mdl.n, self.state_slice(pos, t + 1)] = np.eye(mdl.n)
                A_eq[r:r + mdl.n, self.state_slice(pos, t)] -= mdl.A
                A_eq[r:r + mdl.n, self.input_slice(pos, t)] -= mdl.B
                r += mdl.n
        return A_eq, b_eq


@dataclass(frozen=True)
class Expansion:
    """Affine map from condensed inputs back to the full local vector."""

    M: np.ndarray
    c: np.ndarray

    def expand(self, u):
        return self.M @ u + self.c


def build_local_problems(g, agents, T, initial_states):
    """Construct every agent's subproblem, its selector map, and dim(z).

    The edge coupling a_ij ||x_i - x_j||^2 is split half to each endpoint's
    subproblem; input energy is charged once, to the owning agent.
    """
    N = g.num_agents
    if len(agents) != N:
        raise ValueError(f"expected {N} agent models, got {len(agents)}")
    if len(initial_states) != N:
        raise ValueError(f"expected {N} initial states, got {len(initial_states)}")
    if T < 1:
        raise ValueError("horizon must be >= 1")
    initial_states = [np.asarray(x, dtype=float) for x in initial_states]
    for j, (a, x) in enumerate(zip(agents, initial_states), start=1):
        if x.shape != (a.n,):
            raise ValueError(f"initial state of agent {j} has shape {x.shape}, expected ({a.n},)")

    layout = ZLayout(agents, T)
    all_tags = layout.tags()
    problems, maps = [], []
    for i in range(1, N + 1):
        members = tuple(sorted(g.neighbors(i) | {i}))
        models = tuple(agents[j - 1] for j in members)
        x0 = tuple(initial_states[j - 1] for j in members)
        prob = LocalProblem(owner=i, T=T, members=members, models=models, x0=x0,
                            H=np.zeros((0, 0)), g=np.zeros(0))
        dim = sum(m.n * (T + 1) + m.m * T for m in models)
        prob = replace(prob, H=np.zeros((dim, dim)), g=np.zeros(dim))
        pos = {j: k for k, j in enumerate(members)}

        H = prob.H
        own = pos[i]
        for j in g.neighbors(i):
            # (a_ij/2)||x_i - x_j||^2 at each endpoint; with the 0.5 x'Hx
            # convention the block pattern carries the full weight a_ij
            w = g.weight(i, j)
            pj = pos[j]
            nj = models[pj].n
            if nj != models[own].n:
                raise ValueError("edge coupling requires matching state dimensions")
            for t in range(T + 1):
                so, sj = prob.state_slice(own, t), prob.state_slice(pj, t)
                idx_o = np.arange(so.start, so.stop)
                idx_j = np.arange(sj.start, sj.stop)
                H[idx_o, idx_o] += w
                H[idx_j, idx_j] += w
                H[idx_o, idx_j] -= w
                H[idx_j, idx_o] -= w
        for t in range(T):
            su = prob.input_slice(own, t)
            idx = np.arange(su.start, su.stop)
            H[idx, idx] += 2.0  # u'u == 0.5 x'(2I)x on the owner's inputs

        gidx = np.empty(dim, dtype=np.int64)
        tags = []
        for k, j in enumerate(members):
            mdl = models[k]
            for t in range(T + 1):
                sl = prob.state_slice(k, t)
                gidx[sl] = layout.state_offset(j, t) + np.arange(mdl.n)
            for t in range(T):
                sl = prob.input_slice(k, t)
                gidx[sl] = layout.input_offset(j, t) + np.arange(mdl.m)
        tags = tuple(all_tags[c] for c in gidx)
        problems.append(prob)
        maps.append(LocalIndexMap(owner=i, global_idx=gidx, tags=tags))
    return problems, maps, layout.dim


def copy_counts(maps, z_dim):
    """How many local copies map to each z component."""
    counts = np.zeros(z_dim, dtype=np.int64)
    for m in maps:
        np.add.at(counts, m.global_idx, 1)
    if np.any(counts == 0):
        raise RuntimeError("z component with no mapped copies: construction bug")
    return counts


def consistent_local_vector(map_, z):
    """Agent's local vector when every copy agrees with z."""
    return z[map_.global_idx]


def global_cost(g, state_traj, input_traj):
    """Coupling-plus-energy cost of full trajectories.

    sum_t sum_edges a_ij ||x_i(t)-x_j(t)||^2 + sum_t u(t)'u(t). State
    trajectories are (S, n_i) arrays, inputs (S_u, m_i).
    """
    N = g.num_agents
    if len(state_traj) != N or len(input_traj) != N:
        raise ValueError("one trajectory per agent required")
    steps = state_traj[0].shape[0]
    for x in state_traj:
        if x.shape[0] != steps:
            raise ValueError("state trajectories must share their length")
    total = 0.0
    for (i, j), w in g.weights.items():
        d = state_traj[i - 1] - state_traj[j - 1]
        total += w * float(np.sum(d * d))
    for u in input_traj:
        total += float(np.sum(np.asarray(u) ** 2))
    return total


def condense(p):
    """Eliminate states through the dynamics; returns (BoxQp, Expansion).

    The condensed variable stacks each member's inputs in member order;
    box bounds come from the members' u_max.
    """
    M, c = condensed_maps(p)
    P = M.T @ p.H @ M
    P = 0.5 * (P + P.T)
    q = M.T @ (p.H @ c + p.g)
    lo, hi = condensed_bounds(p)
    return BoxQp(P, q, lo, hi), Expansion(M, c)


def condensed_maps(p):
    """Affine map local_vector = M @ stacked_inputs + c."""
    T = p.T
    udim = sum(m.m * T for m in p.models)
    M = np.zeros((p.dim, udim))
    c = np.zeros(p.dim)
    ucol = 0
    for pos, mdl in enumerate(p.models):
        Phi, Gam = prediction_matrices(mdl, T)
        srows = slice(p.state_slice(pos, 0).start, p.state_slice(pos, T).stop)
        M[srows, ucol:ucol + mdl.m * T] = Gam
        c[srows] = Phi @ p.x0[pos]
        urows = slice(p.input_slice(pos, 0).start, p.input_slice(pos, T - 1).stop)
        M[urows, ucol:ucol + mdl.m * T] = np.eye(mdl.m * T)
        ucol += mdl.m * T
    return M, c


def condensed_bounds(p):
    lo, hi = [], []
    for mdl in p.models:
        lo.append(np.full(mdl.m * p.T, -mdl.u_max))
        hi.append(np.full(mdl.m * p.T, mdl.u_max))
    return np.concatenate(lo), np.concatenate(hi)


def augment_with_admm_terms(p, z, lam, rho, map_):
    """Add the consensus penalty lam'(x - E z) + (rho/2)||x - E z||^2."""
    lam = np.asarray(lam, dtype=float)
    if lam.shape != (p.dim,):
        raise ValueError(f"dual has shape {lam.shape}, expected ({p.dim},)")
    z_loc = z[map_.global_idx]
    H = p.H.copy()
    H[np.diag_indices_from(H)] += rho
    g = p.g + lam - rho * z_loc
    return replace(p, H=H, g=g)


def build_centralized_qp(g, agents, T, initial_states):
    """Whole-network condensed box QP over all agents' stacked inputs.

    Returns (BoxQp, Expansion to the global trajectory vector, Hessian of
    the trajectory cost) so callers can evaluate the objective exactly.
    """
    N = g.num_agents
    layout = ZLayout(agents, T)
    H = np.zeros((layout.dim, layout.dim))
    for (i, j), w in g.weights.items():
        ni = agents[i - 1].n
        if agents[j - 1].n != ni:
            raise ValueError("edge coupling requires matching state dimensions")
        for t in range(T + 1):
            oi = layout.state_offset(i, t) + np.arange(ni)
            oj = layout.state_offset(j, t) + np.arange(ni)
            H[oi, oi] += 2.0 * w
            H[oj, oj] += 2.0 * w
            H[oi, oj] -= 2.0 * w
            H[oj, oi] -= 2.0 * w
    for j in range(1, N + 1):
        mj = agents[j - 1].m
        for t in range(T):
            oj = layout.input_offset(j, t) + np.arange(mj)
            H[oj, oj] += 2.0

    udim = sum(a.m * T for a in agents)
    M = np.zeros((layout.dim, udim))
    c = np.zeros(layout.dim)
    ucol = 0
    for j, a in enumerate(agents, start=1):
        Phi, Gam = prediction_matrices(a, T)
        s0 = layout.state_offset(j, 0)
        M[s0:s0 + (T + 1) * a.n, ucol:ucol + a.m * T] = Gam
        c[s0:s0 + (T + 1) * a.n] = Phi @ np.asarray(initial_states[j - 1], dtype=float)
        u0 = layout.input_offset(j, 0)
        M[u0:u0 + a.m * T, ucol:ucol + a.m * T] = np.eye(a.m * T)
        ucol += a.m * T
    P = M.T @ H @ M
    P = 0.5 * (P + P.T)
    q = M.T @ (H @ c)
    lo = np.concatenate([np.full(a.m * T, -a.u_max) for a in agents])
    hi = np.concatenate([np.full(a.m * T, a.u_max) for a in agents])
    return BoxQp(P, q, lo, hi), Expansion(M, c), H

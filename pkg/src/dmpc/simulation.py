"""Receding-horizon closed-loop simulation and iteration-budget sweeps."""

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .admm import AdmmEngine, run_dual_decomposition
from .dynamics import double_integrator_3d, step
from .problem import ZLayout, build_local_problems, global_cost
from .qp import solve_box_qp
from .problem import build_centralized_qp

SOLVER_KINDS = ("admm", "dual_decomp", "centralized")


@dataclass
class SimConfig:
    num_steps: int = 250
    horizon: int = 10
    admm_iterations: int = 30
    rho: float = 1.0
    noise_variance: float = 0.1
    rng_seed: int = 0
    solver_kind: str = "admm"
    warm_start: bool = True
    ts: float = 0.1
    u_max: float = 1.0
    mass: float = 1.0
    pos_range: tuple = (-5.0, 5.0)
    vel_range: tuple = (-1.0, 1.0)
    apply_consensus_input: bool = False  # apply z-averaged first input instead of own copy
    qp_tol: float = 1e-6
    parallel_agents: bool = False

    def __post_init__(self):
        if self.num_steps < 1:
            raise ValueError("num_steps must be >= 1")
        if self.solver_kind not in SOLVER_KINDS:
            raise ValueError(f"solver_kind must be one of {SOLVER_KINDS}")
        if self.solver_kind == "admm" and self.admm_iterations < 1:
            raise ValueError("admm_iterations must be >= 1")
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be nonnegative")


@dataclass
class SimLog:
    states: np.ndarray        # (num_steps + 1, N, n)
    inputs: np.ndarray        # (num_steps, N, m)
    stage_costs: np.ndarray   # (num_steps,)
    total_cost: float
    solver_stats: list        # per step: dict(iterations, r_primal, r_dual, wall_time)
    solve_times: np.ndarray   # all per-subproblem solve times, seconds
    noise_draws: np.ndarray   # (num_steps, N, noise_dim), for paired-run audits
    config: SimConfig
    max_dual_avg_violation: float = 0.0
    aborted_at: int = None    # step index if a solver failure cut the run short


def default_agents(g, cfg):
    return [double_integrator_3d(cfg.ts, cfg.mass, cfg.u_max) for _ in range(g.num_agents)]


def draw_initial_states(g, cfg, rng):
    """Positions and velocities uniform over the configured ranges."""
    out = []
    for _ in range(g.num_agents):
        p = rng.uniform(cfg.pos_range[0], cfg.pos_range[1], size=3)
        v = rng.uniform(cfg.vel_range[0], cfg.vel_range[1], size=3)
        x = np.empty(6)
        x[0::2] = p
        x[1::2] = v
        out.append(x)
    return out


def draw_noise(g, cfg, rng, noise_dim=3):
    """Gaussian accelerations, variance `noise_variance` per component."""
    sigma = np.sqrt(cfg.noise_variance)
    return sigma * rng.standard_normal((cfg.num_steps, g.num_agents, noise_dim))


def _stage_cost(g, states_now, inputs_now):
    return global_cost(g, [x[None, :] for x in states_now], [u[None, :] for u in inputs_now])


class _CentralizedCache:
    """Factorized whole-network QP; only the gradient changes per step."""

    def __init__(self, g, agents, T, initial_states, qp_tol):
        from scipy.linalg import cho_factor
        from .qp import power_iteration_lmax

        self.g = g
        self.agents = agents
        self.T = T
        self.qp_tol = qp_tol
        qp, exp, H = build_centralized_qp(g, agents, T, initial_states)
        self.H = H
        self.M = exp.M
        self.P = qp.P
        self.lo, self.hi = qp.lower, qp.upper
        self.cho = cho_factor(self.P)
        self.lipschitz = power_iteration_lmax(self.P)
        self.layout = ZLayout(agents, T)
        self.warm = None

    def solve(self, initial_states):
        from .qp import BoxQp

        c = np.zeros(self.layout.dim)
        for j, a in enumerate(self.agents, start=1):
            from .dynamics import prediction_matrices
            Phi, _ = prediction_matrices(a, self.T)
            s0 = self.layout.state_offset(j, 0)
            c[s0:s0 + (self.T + 1) * a.n] = Phi @ np.asarray(initial_states[j - 1], float)
        q = self.M.T @ (self.H @ c)
        sol = solve_box_qp(BoxQp(self.P, q, self.lo, self.hi), tol=self.qp_tol,
                           max_iter=50000, x0=self.warm,
                           lipschitz=self.lipschitz, cho=self.cho)
        if sol.status != "optimal":
            raise RuntimeError(f"centralized step failed: {sol.status} ({sol.message})")
        self.warm = sol.x_star
        plans = []
        off = 0
        for a in self.agents:
            plans.append(sol.x_star[off:off + self.T * a.m].reshape(self.T, a.m))
            off += self.T * a.m
        return plans


def _shift_warm_state(engine, result, layout):
    """Receding-horizon warm start: shift plans, duals, and z one step forward.

    The final horizon entry is duplicated to fill the freed slot.
    """
    from .admm import AdmmState

    x_new, lam_new = [], []
    for prob, x, lam in zip(engine.problems, result.plans, result.state.lam):
        xs = x.copy()
        ls = lam.copy()
        for pos, mdl in enumerate(prob.models):
            for t in range(prob.T):
                xs[prob.state_slice(pos, t)] = x[prob.state_slice(pos, t + 1)]
                ls[prob.state_slice(pos, t)] = lam[prob.state_slice(pos, t + 1)]
            for t in range(prob.T - 1):
                xs[prob.input_slice(pos, t)] = x[prob.input_slice(pos, t + 1)]
                ls[prob.input_slice(pos, t)] = lam[prob.input_slice(pos, t + 1)]
        x_new.append(xs)
        lam_new.append(ls)
    z = result.z.copy()
    T = layout.T
    for j, (n, m) in enumerate(layout.dims, start=1):
        s0 = layout.state_offset(j, 0)
        zs = z[s0:s0 + (T + 1) * n].reshape(T + 1, n)
        zs[:-1] = zs[1:].copy()
        u0 = layout.input_offset(j, 0)
        zu = z[u0:u0 + T * m].reshape(T, m)
        if T > 1:
            zu[:-1] = zu[1:].copy()
    return AdmmState(x=x_new, lam=lam_new, z=z, rho=engine.rho)


def run_closed_loop(g, cfg, agents=None, initial_states=None, noise=None,
                    track_dual_average=False):
    """Simulate the receding-horizon loop for cfg.num_steps plant updates.

    Pre-drawn `initial_states` / `noise` override the seeded generator so
    paired comparisons consume byte-identical randomness.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    if agents is None:
        agents = default_agents(g, cfg)
    if initial_states is None:
        initial_states = draw_initial_states(g, cfg, rng)
    initial_states = [np.asarray(x, float) for x in initial_states]
    if noise is None:
        noise = draw_noise(g, cfg, rng)
    N = g.num_agents
    n, m = agents[0].n, agents[0].m
    T = cfg.horizon

    states = np.zeros((cfg.num_steps + 1, N, n))
    inputs = np.zeros((cfg.num_steps, N, m))
    stage_costs = np.zeros(cfg.num_steps)
    solver_stats = []
    solve_times = []
    max_viol = 0.0
    aborted_at = None
    for j, x in enumerate(initial_states):
        states[0, j] = x

    if cfg.solver_kind == "centralized":
        central = _CentralizedCache(g, agents, T, initial_states, cfg.qp_tol)
        engine = None
    else:
        problems, maps, z_dim = build_local_problems(g, agents, T, initial_states)
        engine = AdmmEngine(problems, maps, cfg.rho, z_dim=z_dim,
                            qp_tol=cfg.qp_tol, parallel=cfg.parallel_agents)
        central = None
    layout = ZLayout(agents, T)
    warm_state = None

    try:
        for t in range(cfg.num_steps):
            measured = [states[t, j].copy() for j in range(N)]
            t0 = time.perf_counter()
            if cfg.solver_kind == "centralized":
                plans = central.solve(measured)
                first_inputs = [plans[j][0] for j in range(N)]
                solver_stats.append({"iterations": 1, "r_primal": 0.0, "r_dual": 0.0,
                                     "wall_time": time.perf_counter() - t0})
            elif cfg.solver_kind == "admm":
                engine.rebind_states(measured)
                if not cfg.warm_start:
                    engine.reset_warm_starts()
                    warm_state = None
                result = engine.run(cfg.admm_iterations, init=warm_state,
                                    track_dual_average=track_dual_average,
                                    record_times=True)
                solve_times.extend(result.solve_times)
                max_viol = max(max_viol, result.max_dual_avg_violation)
                if cfg.apply_consensus_input:
                    _, zin = layout.decode(result.z)
                    first_inputs = [zin[j][0] for j in range(N)]
                else:
                    first_inputs = []
                    for prob, plan in zip(engine.problems, result.plans):
                        pos = prob.members.index(prob.owner)
                        first_inputs.append(plan[prob.input_slice(pos, 0)])
                rp, rd = result.history[-1][1], result.history[-1][2]
                solver_stats.append({"iterations": len(result.history), "r_primal": rp,
                                     "r_dual": rd, "wall_time": time.perf_counter() - t0})
                warm_state = _shift_warm_state(engine, result, layout) if cfg.warm_start else None
            else:  # dual_decomp
                problems, maps, _ = build_local_problems(g, agents, T, measured)
                plans, history = run_dual_decomposition(
                    problems, maps, lambda k: 1.0 / k, cfg.admm_iterations)
                first_inputs = []
                for prob, plan in zip(problems, plans):
                    pos = prob.members.index(prob.owner)
                    first_inputs.append(plan[prob.input_slice(pos, 0)])
                solver_stats.append({"iterations": len(history),
                                     "r_primal": history[-1][1], "r_dual": np.nan,
                                     "wall_time": time.perf_counter() - t0})

            for j in range(N):
                u = np.clip(first_inputs[j], -agents[j].u_max, agents[j].u_max)
                inputs[t, j] = u
                states[t + 1, j] = step(agents[j], states[t, j], u, noise[t, j])
            stage_costs[t] = _stage_cost(g, [states[t, j] for j in range(N)],
                                         [inputs[t, j] for j in range(N)])
    except RuntimeError:
        aborted_at = t
        states = states[:t + 1]
        inputs = inputs[:t]
        stage_costs = stage_costs[:t]
    finally:
        if engine is not None and engine.pool is not None:
            engine.pool.shutdown()

    return SimLog(states=states, inputs=inputs, stage_costs=stage_costs,
                  total_cost=float(np.sum(stage_costs)), solver_stats=solver_stats,
                  solve_times=np.asarray(solve_times), noise_draws=noise,
                  config=cfg, max_dual_avg_violation=max_viol, aborted_at=aborted_at)


def closed_loop_cost(log):
    return float(np.sum(log.stage_costs))


def performance_ratio(admm_log, central_log):
    """Excess closed-loop cost of a run over its centralized pairing, in %."""
    if not np.array_equal(admm_log.noise_draws, central_log.noise_draws):
        raise ValueError("paired runs must share the same noise sequence")
    if not np.array_equal(admm_log.states[0], central_log.states[0]):
        raise ValueError("paired runs must share initial conditions")
    cc = closed_loop_cost(central_log)
    if cc == 0.0:
        raise ValueError("centralized cost is zero; ratio undefined")
    return 100.0 * (closed_loop_cost(admm_log) - cc) / cc


def _sweep_trial(args):
    g, cfg, k_values, seed = args
    rng = np.random.default_rng(seed)
    agents = default_agents(g, cfg)
    x0 = draw_initial_states(g, cfg, rng)
    noise = draw_noise(g, cfg, rng)
    central_cfg = replace(cfg, solver_kind="centralized", rng_seed=seed)
    central_log = run_closed_loop(g, central_cfg, agents=agents,
                                  initial_states=x0, noise=noise)
    row = []
    for K in k_values:
        admm_cfg = replace(cfg, solver_kind="admm", admm_iterations=K, rng_seed=seed)
        admm_log = run_closed_loop(g, admm_cfg, agents=agents,
                                   initial_states=x0, noise=noise)
        row.append(performance_ratio(admm_log, central_log))
    return row


def iteration_sweep(g, cfg, k_values, num_trials, base_seed=None, n_jobs=1):
    """Paired ADMM-vs-centralized closed loops per trial, aggregated per K.

    Returns rows (K, mean excess %, std %, num_trials). Each trial reuses
    one centralized reference run across every K value.
    """
    if num_trials < 1:
        raise ValueError("num_trials must be >= 1")
    seed0 = cfg.rng_seed if base_seed is None else base_seed
    jobs = [(g, cfg, list(k_values), seed0 + trial) for trial in range(num_trials)]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            ratios = list(ex.map(_sweep_trial, jobs))
    else:
        ratios = [_sweep_trial(j) for j in jobs]
    ratios = np.asarray(ratios)  # (trials, len(k_values))
    rows = []
    for col, K in enumerate(k_values):
        rows.append((K, float(np.mean(ratios[:, col])),
                     float(np.std(ratios[:, col])), num_trials))
    return rows

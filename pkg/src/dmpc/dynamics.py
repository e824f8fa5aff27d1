"""Discrete-time LTI agent models and horizon prediction matrices."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LtiAgent:
    """Agent model x(t+1) = A x(t) + B u(t), inputs bounded in infinity norm.

    `noise_input` is the channel through which process noise enters the
    plant; it defaults to B when not given.
    """

    A: np.ndarray
    B: np.ndarray
    u_max: float = np.inf
    noise_input: np.ndarray = None

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        B = np.asarray(self.B, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError(f"A must be square, got {A.shape}")
        if B.ndim != 2 or B.shape[0] != A.shape[0]:
            raise ValueError(f"B shape {B.shape} inconsistent with A {A.shape}")
        if not self.u_max > 0:
            raise ValueError("u_max must be positive (or +inf)")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        if self.noise_input is not None:
            W = np.asarray(self.noise_input, dtype=float)
            if W.shape != B.shape:
                raise ValueError("noise_input must match B in shape")
            object.__setattr__(self, "noise_input", W)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]


def double_integrator_3d(ts, mass, u_max=1.0):
    """Euler-discretized 3D double integrator.

    State is (p_x, v_x, p_y, v_y, p_z, v_z); input is the force on each
    axis. Process noise acts directly on each acceleration component, so
    the noise channel is B with unit mass.
    """
    if not ts > 0:
        raise ValueError("ts must be positive")
    if not mass > 0:
        raise ValueError("mass must be positive")
    blk_a = np.array([[1.0, ts], [0.0, 1.0]])
    blk_b = np.array([[0.0], [ts / mass]])
    blk_w = np.array([[0.0], [ts]])
    A = np.kron(np.eye(3), blk_a)
    B = np.kron(np.eye(3), blk_b)
    W = np.kron(np.eye(3), blk_w)
    return LtiAgent(A=A, B=B, u_max=u_max, noise_input=W)


def step(agent, x, u, w=None):
    """One plant update A x + B u (+ noise through the noise channel)."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != (agent.n,):
        raise ValueError(f"state has shape {x.shape}, expected ({agent.n},)")
    if u.shape != (agent.m,):
        raise ValueError(f"input has shape {u.shape}, expected ({agent.m},)")
    out = agent.A @ x + agent.B @ u
    if w is not None:
        w = np.asarray(w, dtype=float)
        channel = agent.noise_input if agent.noise_input is not None else agent.B
        if w.shape != (channel.shape[1],):
            raise ValueError(f"noise has shape {w.shape}, expected ({channel.shape[1]},)")
        out += channel @ w
    return out


def rollout(agent, x0, u_seq):
    """Noiseless forward simulation; returns T+1 states including x0."""
    x0 = np.asarray(x0, dtype=float)
    states = np.empty((len(u_seq) + 1, agent.n))
    states[0] = x0
    for t, u in enumerate(u_seq):
        states[t + 1] = step(agent, states[t], u)
    return states


def prediction_matrices(agent, T):
    """Stacked maps x(0..T) = Phi x0 + Gam [u(0); ...; u(T-1)]."""
    n, m = agent.n, agent.m
    Phi = np.zeros(((T + 1) * n, n))
    Gam = np.zeros(((T + 1) * n, T * m))
    Phi[:n] = np.eye(n)
    for t in range(1, T + 1):
        Phi[t * n:(t + 1) * n] = agent.A @ Phi[(t - 1) * n:t * n]
        # row t inherits row t-1 shifted through A, plus a fresh B block
        Gam[t * n:(t + 1) * n] = agent.A @ Gam[(t - 1) * n:t * n]
        Gam[t * n:(t + 1) * n, (t - 1) * m:t * m] = agent.B
    return Phi, Gam

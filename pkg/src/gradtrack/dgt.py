"""Discrete-time gradient tracking in original (x, s) and causal (x, z) form.

The causal coordinates z = s - grad f(x) remove the next-iterate gradient
from the tracker update; with the mixing choice W = I - gamma L one causal
step coincides with an explicit-Euler step of the continuous flow, which
is exercised by the cross-module equivalence tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cgt import DivergenceError
from .costs import Problem, solve_centralized
from .trace import Trace


@dataclass
class DgtState:
    x: np.ndarray  # stacked (N d,)
    gamma: float
    k: int = 0
    s: np.ndarray | None = None  # original-form tracker
    z: np.ndarray | None = None  # causal-form tracker


def init_original(problem: Problem, x0: np.ndarray, gamma: float) -> DgtState:
    """Original form requires s_0 = grad f(x_0)."""
    x0 = np.asarray(x0, dtype=float)
    return DgtState(x=x0, gamma=gamma, s=problem.grad_stacked(x0))


def init_causal(problem: Problem, x0: np.ndarray, gamma: float) -> DgtState:
    """Causal form requires 1^T z_0 = 0; z_0 = 0 realizes it locally."""
    x0 = np.asarray(x0, dtype=float)
    return DgtState(x=x0, gamma=gamma, z=np.zeros_like(x0))


def dgt_step_original(state: DgtState, w_big: np.ndarray, problem: Problem) -> DgtState:
    """x+ = W x - gamma s;  s+ = W s + grad f(x+) - grad f(x)."""
    gx = problem.grad_stacked(state.x)
    x_next = w_big @ state.x - state.gamma * state.s
    s_next = w_big @ state.s + problem.grad_stacked(x_next) - gx
    return DgtState(x=x_next, gamma=state.gamma, k=state.k + 1, s=s_next)


def dgt_step_causal(state: DgtState, w_big: np.ndarray, problem: Problem) -> DgtState:
    """x+ = W x - gamma z - gamma grad f(x);  z+ = W z - (I - W) grad f(x)."""
    gx = problem.grad_stacked(state.x)
    x_next = w_big @ state.x - state.gamma * (state.z + gx)
    z_next = w_big @ state.z - (gx - w_big @ gx)
    return DgtState(x=x_next, gamma=state.gamma, k=state.k + 1, z=z_next)


def run_dgt(
    problem: Problem,
    w: np.ndarray,
    gamma: float,
    k_max: int,
    form: str = "causal",
    x0: np.ndarray | None = None,
    record_states: bool = False,
    err_guard: float = 1e8,
) -> Trace:
    """Iterate gradient tracking and trace the distance from the optimum.

    ``w`` is the N x N doubly stochastic mixing matrix (lifted internally).
    One iteration costs one communication round per agent.  The time column
    of the returned trace holds the iteration index.
    """
    if form not in ("original", "causal"):
        raise ValueError(f"unknown form {form!r}")
    n, d = problem.n, problem.dim
    w_big = np.kron(np.asarray(w, dtype=float), np.eye(d))
    if problem.x_star is None:
        solve_centralized(problem)
    x_star_tile = np.tile(problem.x_star, n)
    if x0 is None:
        x0 = np.zeros(n * d)

    state = init_original(problem, x0, gamma) if form == "original" else init_causal(
        problem, x0, gamma
    )
    step = dgt_step_original if form == "original" else dgt_step_causal

    ks, errs, zns, agent_err = [], [], [], []
    xs = [] if record_states else None

    def record(st: DgtState):
        ks.append(float(st.k))
        errs.append(float(np.linalg.norm(st.x - x_star_tile)))
        tracker = st.z if form == "causal" else st.s - problem.grad_stacked(st.x)
        zns.append(float(np.linalg.norm(tracker.reshape(n, d).sum(axis=0))))
        agent_err.append(np.linalg.norm((st.x - x_star_tile).reshape(n, d), axis=1))
        if record_states:
            xs.append(st.x.copy())

    record(state)
    for _ in range(k_max):
        state = step(state, w_big, problem)
        if not np.isfinite(state.x).all() or np.linalg.norm(state.x - x_star_tile) > err_guard:
            raise DivergenceError(
                f"error guard tripped at iteration {state.k}; stepsize too large?"
            )
        record(state)

    k_arr = np.array(ks)
    return Trace(
        t=k_arr,
        err_x=np.array(errs),
        z_mean_norm=np.array(zns),
        comm_total=(k_arr * n).astype(int),
        per_agent_err=np.array(agent_err),
        per_agent_comm=np.tile(k_arr[:, None], (1, n)).astype(int),
        states_x=np.array(xs) if record_states else None,
    )

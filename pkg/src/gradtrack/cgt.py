"""Continuous-time gradient tracking: vector field and fixed-step integration.

The flow couples a consensus term, an integral tracker z and the local
gradients:

    dx = -L x - z - grad f(x)
    dz = -L z - L grad f(x)

Integration is deterministic fixed-step RK4 (or explicit Euler), which
keeps runs bitwise reproducible and aligned with the trigger-check grid
used by the sampled-communication variants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph, laplacian
from .costs import Problem, solve_centralized
from .trace import Trace


class DivergenceError(RuntimeError):
    """State became non-finite or the error guard tripped."""


@dataclass
class CgtState:
    x: np.ndarray  # stacked (N d,)
    z: np.ndarray
    t: float = 0.0


@dataclass(frozen=True)
class IntegratorConfig:
    h: float
    t_end: float
    method: str = "rk4"

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("step size must be positive")
        if self.t_end < 0:
            raise ValueError("horizon must be nonnegative")
        if self.method not in ("rk4", "euler"):
            raise ValueError(f"unknown method {self.method!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.h)) if self.t_end > 0 else 0


def cgt_rhs(state: CgtState, l_big: np.ndarray, problem: Problem):
    """Aggregate right-hand side; returns (dx, dz)."""
    gx = problem.grad_stacked(state.x)
    dx = -l_big @ state.x - state.z - gx
    dz = -l_big @ (state.z + gx)
    return dx, dz


def cgt_rhs_local(state: CgtState, g: Graph, problem: Problem):
    """Per-agent form using mixing weights w_ij = (degree - Laplacian)_ij.

    Slow reference implementation used to cross-check the aggregate form.
    """
    n, d = problem.n, problem.dim
    x = state.x.reshape(n, d)
    z = state.z.reshape(n, d)
    w = g.w_adj  # equals degree matrix minus Laplacian
    dx = np.zeros_like(x)
    dz = np.zeros_like(z)
    grads = problem.grad_block(x)
    for i in range(n):
        for j in range(n):
            if w[i, j] == 0.0:
                continue
            dx[i] -= w[i, j] * (x[i] - x[j])
            dz[i] -= w[i, j] * (z[i] - z[j])
            dz[i] -= w[i, j] * (grads[i] - grads[j])
        dx[i] -= z[i] + grads[i]
    return dx.ravel(), dz.ravel()


def rk4_step(f, t: float, y: np.ndarray, h: float) -> np.ndarray:
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def euler_step(f, t: float, y: np.ndarray, h: float) -> np.ndarray:
    return y + h * f(t, y)


_STEPPERS = {"rk4": rk4_step, "euler": euler_step}


def integrate(rhs, y0: np.ndarray, cfg: IntegratorConfig, observers=None, t0: float = 0.0):
    """Fixed-step integration collecting observer samples on the step grid.

    ``observers`` is a callable (t, y) -> tuple of floats evaluated at every
    grid point (including t0 and the final time).  Returns (times, samples,
    y_final) where samples stacks the observer rows.
    """
    stepper = _STEPPERS[cfg.method]
    y = np.array(y0, dtype=float)
    times = [t0]
    rows = [observers(t0, y)] if observers else []
    for k in range(cfg.n_steps):
        t = t0 + k * cfg.h
        y = stepper(rhs, t, y, cfg.h)
        if not np.all(np.isfinite(y)):
            raise DivergenceError(
                f"non-finite state at t={t + cfg.h:.6g}; step size too large?"
            )
        times.append(t0 + (k + 1) * cfg.h)
        if observers:
            rows.append(observers(times[-1], y))
    return np.array(times), (np.array(rows) if observers else None), y


def default_x0(problem: Problem, seed: int, low: float = -5.0, high: float = 5.0) -> np.ndarray:
    """Default initialization: i.i.d. uniform entries per agent."""
    rng = np.random.default_rng(seed)
    return rng.uniform(low, high, size=problem.n * problem.dim)


def run_cgt(
    problem: Problem,
    g: Graph,
    x0: np.ndarray,
    cfg: IntegratorConfig,
    certificate=None,
    noise=None,
    record_states: bool = False,
    record_per_agent: bool = False,
    decimation: int = 1,
) -> Trace:
    """Integrate the flow from x0 with z(0) = 0 and record the error trace.

    The zero tracker initialization enforces the conserved quantity
    1^T z(t) = 0.  When a certificate is attached, the Lyapunov value
    V(zeta(t)) is recorded per sample.  ``noise`` (a NoiseSampler) injects
    the bounded-disturbance channels, held constant over each step.
    """
    n, d = problem.n, problem.dim
    l_big = laplacian(g, d).l_big
    if problem.x_star is None:
        solve_centralized(problem)
    x_star_tile = np.tile(problem.x_star, n)

    nd = n * d

    def rhs(t, y):
        x, z = y[:nd], y[nd:]
        gx = problem.grad_stacked(x)
        dx = -l_big @ x - z - gx
        dz = -l_big @ (z + gx)
        if noise is not None:
            vx, vz, vg = noise.held
            dx += -(l_big @ vx) - vz - vg
            dz += -(l_big @ (vz + vg))
        return np.concatenate([dx, dz])

    y = np.concatenate([np.asarray(x0, dtype=float), np.zeros(nd)])
    rows_t, rows_err, rows_zn, rows_v = [], [], [], []
    agent_err = [] if record_per_agent else None
    xs, zs = ([], []) if record_states else (None, None)

    def record(t, y):
        x, z = y[:nd], y[nd:]
        rows_t.append(t)
        rows_err.append(float(np.linalg.norm(x - x_star_tile)))
        rows_zn.append(float(np.linalg.norm(z.reshape(n, d).sum(axis=0))))
        if certificate is not None:
            zeta, _ = certificate.zeta_of(x, z)
            rows_v.append(float(zeta @ certificate.p @ zeta))
        if agent_err is not None:
            agent_err.append(
                np.linalg.norm((x - x_star_tile).reshape(n, d), axis=1)
            )
        if record_states:
            xs.append(x.copy())
            zs.append(z.copy())

    stepper = _STEPPERS[cfg.method]
    record(0.0, y)
    for k in range(cfg.n_steps):
        t = k * cfg.h
        if noise is not None:
            noise.hold(k, t, nd)
        y = stepper(rhs, t, y, cfg.h)
        if not np.all(np.isfinite(y)):
            raise DivergenceError(f"non-finite state at t={t + cfg.h:.6g}")
        if (k + 1) % decimation == 0 or k + 1 == cfg.n_steps:
            record((k + 1) * cfg.h, y)

    return Trace(
        t=np.array(rows_t),
        err_x=np.array(rows_err),
        z_mean_norm=np.array(rows_zn),
        comm_total=np.zeros(len(rows_t), dtype=int),
        lyap=np.array(rows_v) if certificate is not None else None,
        per_agent_err=np.array(agent_err) if agent_err is not None else None,
        states_x=np.array(xs) if record_states else None,
        states_z=np.array(zs) if record_states else None,
    )

"""Per-agent cost oracles and the centralized reference solver.

Every oracle carries its strong-convexity coefficient ``alpha`` and a
gradient-Lipschitz constant ``lips`` (an upper bound is fine, the analysis
holds for any valid one).  A :class:`Problem` stacks N oracles of equal
dimension and can evaluate all agent gradients in one vectorized call,
which is what the simulation hot loops use.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit


class SolverError(RuntimeError):
    """Centralized solve failed to reach the requested stationarity."""


class CostOracle:
    """Base class: differentiable cost with smoothness metadata."""

    dim: int
    alpha: float
    lips: float

    def eval(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def grad(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class QuadraticCost(CostOracle):
    """f(x) = 1/2 x^T A x + b^T x with A symmetric positive definite."""

    def __init__(self, a: np.ndarray, b: np.ndarray):
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] != b.shape[0]:
            raise ValueError("need square A matching b")
        if not np.allclose(a, a.T, atol=1e-12):
            raise ValueError("A must be symmetric")
        eigs = np.linalg.eigvalsh(a)
        if eigs[0] <= 0:
            raise ValueError("A must be positive definite")
        self.a = a
        self.b = b
        self.dim = b.shape[0]
        self.alpha = float(eigs[0])
        self.lips = float(eigs[-1])

    def eval(self, x):
        return 0.5 * float(x @ self.a @ x) + float(self.b @ x)

    def grad(self, x):
        return self.a @ x + self.b


def quadratic_cost(a: np.ndarray, b: np.ndarray) -> QuadraticCost:
    return QuadraticCost(a, b)


class LogisticCost(CostOracle):
    """Regularized logistic loss over local data points.

    The variable is x = (w, b) in R^d; each point lives in R^(d-1) with a
    label in {-1, +1}.  The cost is

        sum_h log(1 + exp(-l_h (w^T p_h + b))) + C (||w||^2 + b^2) / 2.

    alpha = C; lips uses the 1/4 bound on the sigmoid derivative.
    """

    def __init__(self, points: np.ndarray, labels: np.ndarray, c: float):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        labels = np.asarray(labels, dtype=float).ravel()
        if c <= 0:
            raise ValueError("regularizer must be positive")
        if points.size == 0:
            points = points.reshape(0, points.shape[1] if points.ndim == 2 else 0)
        if points.shape[0] != labels.shape[0]:
            raise ValueError("points and labels disagree in length")
        if labels.size and not np.all(np.isin(labels, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        self.c = float(c)
        self.labels = labels
        # features with the bias column appended: q_h = (p_h, 1)
        self.feats = np.hstack([points, np.ones((points.shape[0], 1))])
        self.dim = self.feats.shape[1]
        self.alpha = self.c
        self.lips = self.c + 0.25 * float(np.sum(self.feats**2))

    def eval(self, x):
        margins = self.labels * (self.feats @ x)
        return float(np.sum(np.logaddexp(0.0, -margins))) + 0.5 * self.c * float(x @ x)

    def grad(self, x):
        margins = self.labels * (self.feats @ x)
        sig = expit(-margins)
        return -(self.labels * sig) @ self.feats + self.c * x


def logistic_cost(points: np.ndarray, labels: np.ndarray, c: float) -> LogisticCost:
    return LogisticCost(points, labels, c)


@dataclass
class Problem:
    """N cost oracles of equal dimension plus a cached optimum."""

    oracles: list
    x_star: np.ndarray | None = field(default=None)

    def __post_init__(self):
        dims = {o.dim for o in self.oracles}
        if len(dims) != 1:
            raise ValueError("all oracles must share one dimension")
        (self.dim,) = dims
        self.n = len(self.oracles)
        self.alpha = min(o.alpha for o in self.oracles)
        self.lips = max(o.lips for o in self.oracles)
        self._batch = _make_batch_grad(self.oracles)
        if self.x_star is not None:
            res = np.linalg.norm(self.grad_total(self.x_star))
            if res >= 1e-9:
                raise ValueError(f"cached optimum has residual {res:.2e}")

    def grad_block(self, x_block: np.ndarray) -> np.ndarray:
        """Per-agent gradients for per-agent states, shape (N, d) -> (N, d)."""
        return self._batch(x_block)

    def grad_stacked(self, x: np.ndarray) -> np.ndarray:
        """Stacked gradient for a flat (N d,) state vector."""
        return self._batch(x.reshape(self.n, self.dim)).ravel()

    def grad_total(self, x: np.ndarray) -> np.ndarray:
        """Gradient of the summed cost at a common point x in R^d."""
        return self.grad_block(np.tile(x, (self.n, 1))).sum(axis=0)

    def eval_total(self, x: np.ndarray) -> float:
        return sum(o.eval(x) for o in self.oracles)


def _make_batch_grad(oracles):
    """Vectorized all-agents gradient when the oracle family allows it."""
    if all(isinstance(o, QuadraticCost) for o in oracles):
        a = np.stack([o.a for o in oracles])
        b = np.stack([o.b for o in oracles])

        def batch(x_block):
            return np.einsum("nij,nj->ni", a, x_block) + b

        return batch
    if all(isinstance(o, LogisticCost) for o in oracles) and len(
        {o.feats.shape[0] for o in oracles}
    ) == 1 and len({o.c for o in oracles}) == 1:
        feats = np.stack([o.feats for o in oracles])  # (N, m, d)
        labels = np.stack([o.labels for o in oracles])  # (N, m)
        c = oracles[0].c

        def batch(x_block):
            margins = labels * np.einsum("nmd,nd->nm", feats, x_block)
            sig = expit(-margins)
            return -np.einsum("nm,nmd->nd", labels * sig, feats) + c * x_block

        return batch

    def batch(x_block):
        return np.stack([o.grad(x_block[i]) for i, o in enumerate(oracles)])

    return batch


def solve_centralized(problem: Problem, tol: float = 1e-12, max_iter: int = 500_000) -> np.ndarray:
    """Solve min_x sum_i f_i(x) to stationarity ||sum grad|| < tol.

    A quasi-Newton warm start is polished by plain gradient descent with
    step 1/(sum lips_i), which contracts under strong convexity.  The
    result is cached on the problem.
    """
    lips_total = sum(o.lips for o in problem.oracles)

    def total(x):
        return problem.eval_total(x)

    def total_grad(x):
        return problem.grad_total(x)

    x = np.zeros(problem.dim)
    warm = minimize(total, x, jac=total_grad, method="L-BFGS-B",
                    options={"maxiter": 10_000, "gtol": 1e-14, "ftol": 0.0})
    x = warm.x
    step = 1.0 / lips_total
    for _ in range(max_iter):
        g = total_grad(x)
        if np.linalg.norm(g) < tol:
            problem.x_star = x.copy()
            return problem.x_star
        x = x - step * g
    raise SolverError(
        f"no point with residual < {tol} within {max_iter} iterations; "
        "problem may be ill-conditioned"
    )


# ---------------------------------------------------------------------------
# fixtures


def quadratic_fixture(n_agents: int, d: int, seed: int, cond: float = 4.0) -> Problem:
    """Random strongly convex quadratics with eigenvalues in [1, cond]."""
    rng = np.random.default_rng(seed)
    oracles = []
    for _ in range(n_agents):
        q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        eigs = np.concatenate([[1.0, cond], rng.uniform(1.0, cond, size=max(d - 2, 0))])[:d]
        a = q @ np.diag(eigs) @ q.T
        a = 0.5 * (a + a.T)
        b = rng.uniform(-2.0, 2.0, size=d)
        oracles.append(QuadraticCost(a, b))
    return Problem(oracles)


def isotropic_quadratic_fixture(n_agents: int, d: int, seed: int) -> Problem:
    """f_i(x) = 1/2 ||x - a_i||^2, so alpha = lips = 1 for every agent."""
    rng = np.random.default_rng(seed)
    targets = rng.uniform(-3.0, 3.0, size=(n_agents, d))
    return Problem([QuadraticCost(np.eye(d), -t) for t in targets])


def logistic_fixture(n_agents: int, d: int, m_i: int, c: float, seed: int) -> Problem:
    """Binary classification data: two Gaussian clouds at +-(1,...,1).

    Each agent holds m_i points in R^(d-1) with labels matching their cloud.
    This is declared fixture policy, not recovered ground truth.
    """
    rng = np.random.default_rng(seed)
    mean = np.ones(d - 1)
    oracles = []
    for _ in range(n_agents):
        signs = rng.choice([-1.0, 1.0], size=m_i)
        points = signs[:, None] * mean + rng.standard_normal((m_i, d - 1))
        oracles.append(LogisticCost(points, signs, c))
    return Problem(oracles)


def save_dataset_csv(path, problem: Problem):
    """Write logistic data as columns p_1..p_{d-1}, label, agent_id."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        d = problem.dim
        writer.writerow([f"p_{k}" for k in range(1, d)] + ["label", "agent_id"])
        for idx, oracle in enumerate(problem.oracles, start=1):
            if not isinstance(oracle, LogisticCost):
                raise ValueError("dataset export only applies to logistic oracles")
            for q, l in zip(oracle.feats[:, :-1], oracle.labels):
                writer.writerow([repr(float(v)) for v in q] + [int(l), idx])


def load_dataset_csv(path, c: float) -> Problem:
    """Rebuild a logistic problem from the dataset CSV format."""
    by_agent: dict[int, list] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = [name for name in reader.fieldnames if name.startswith("p_")]
        for row in reader:
            point = [float(row[c_]) for c_ in cols]
            by_agent.setdefault(int(row["agent_id"]), []).append(
                (point, float(row["label"]))
            )
    oracles = []
    for agent in sorted(by_agent):
        pts = np.array([p for p, _ in by_agent[agent]])
        labels = np.array([l for _, l in by_agent[agent]])
        oracles.append(LogisticCost(pts, labels, c))
    return Problem(oracles)

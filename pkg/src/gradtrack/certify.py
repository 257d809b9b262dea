"""Numerical stability certificates for the gradient-tracking flow.

Builds the coordinate transforms that reduce the flow to its error form,
the quadratic Lyapunov matrix P, the decrement margin q, the perturbation
constants c1..c6 and from them the certified thresholds: a maximum
broadcast period delta_star, a maximum trigger gain lambda_star and a
minimum threshold-decay rate nu_star(lambda).

All checks are eigenvalue computations on dense symmetric matrices, so a
certificate is exact up to floating-point roundoff at desk scale.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .costs import Problem, solve_centralized
from .graph import Graph, consensus_basis, laplacian


class CertificateError(RuntimeError):
    """No valid Lyapunov certificate found with the configured policies."""


@dataclass(frozen=True)
class CoordinateMaps:
    """Transforms and system matrices of the reduced error dynamics.

    State ordering: zeta = (y, psi) with y in R^{Nd} the estimate error and
    psi in R^{(N-1)d} the consensus-basis part of the tracker error; the
    invariant average mode is split off by t2.
    """

    n: int
    d: int
    l_small: np.ndarray
    l_big: np.ndarray
    r: np.ndarray  # (Nd, (N-1)d) consensus-orthogonal basis
    t1: np.ndarray  # involutory (2Nd, 2Nd)
    t2: np.ndarray  # orthogonal (2Nd, 2Nd)
    t_y: np.ndarray  # first block-rows of t2, (n_red, 2Nd)
    a: np.ndarray  # reduced drift (n_red, n_red)
    b: np.ndarray  # input map (n_red, Nd)
    b2: np.ndarray  # broadcast perturbation map (2Nd, 3Nd)
    b3: np.ndarray  # disturbance map (2Nd, 3Nd)
    e: np.ndarray  # reduced sync perturbation map (n_red, n_red + Nd)
    d_mat: np.ndarray  # reduced async perturbation map (n_red, 3Nd)
    t1t2t: np.ndarray  # t1 @ t2.T
    l2_pinv: np.ndarray  # pseudoinverse of l_small^2

    @property
    def nd(self) -> int:
        return self.n * self.d

    @property
    def n_red(self) -> int:
        return (2 * self.n - 1) * self.d


def _pinv_of_l_squared(l_small: np.ndarray) -> np.ndarray:
    """Moore-Penrose pseudoinverse of L^2 via symmetric eigendecomposition."""
    lam, v = np.linalg.eigh(l_small @ l_small)
    cut = 1e-10 * lam[-1]
    inv = np.where(lam > cut, 1.0 / np.where(lam > cut, lam, 1.0), 0.0)
    return (v * inv) @ v.T


def build_maps(g: Graph, d: int, problem: Problem | None = None) -> CoordinateMaps:
    """Assemble every transform used by the certificate construction."""
    if not g.connected:
        raise ValueError("certificates require a connected graph")
    if problem is not None and problem.dim != d:
        raise ValueError("problem dimension does not match d")
    n = g.n
    lap = laplacian(g, d)
    l = lap.l_big
    r = consensus_basis(n, d).r
    nd = n * d
    i_nd = np.eye(nd)
    zero = np.zeros((nd, nd))

    t1 = np.block([[i_nd, zero], [l, -i_nd]])
    t_y = np.block(
        [[i_nd, zero], [np.zeros((r.shape[1], nd)), r.T]]
    )
    ones_lift = np.kron(np.ones((n, 1)), np.eye(d))  # (Nd, d)
    t_eta = np.hstack([np.zeros((d, nd)), ones_lift.T / np.sqrt(n)])
    t2 = np.vstack([t_y, t_eta])

    rtl = r.T @ l
    a = np.block(
        [[-2.0 * l, r], [-(rtl @ l), np.zeros((r.shape[1], r.shape[1]))]]
    )
    b = np.vstack([i_nd, np.zeros((r.shape[1], nd))])
    b2 = np.block([[-l, zero, zero], [zero, -l, -l]])
    b3 = np.block([[-l, -i_nd, -i_nd], [zero, -l, -l]])
    e = np.block(
        [
            [-l, np.zeros((nd, r.shape[1])), zero],
            [np.zeros((r.shape[1], nd)), -(rtl @ r), rtl],
        ]
    )
    d_mat = np.block([[-l, zero, zero], [-(rtl @ l), rtl, rtl]])

    return CoordinateMaps(
        n=n,
        d=d,
        l_small=lap.l_small,
        l_big=l,
        r=r,
        t1=t1,
        t2=t2,
        t_y=t_y,
        a=a,
        b=b,
        b2=b2,
        b3=b3,
        e=e,
        d_mat=d_mat,
        t1t2t=t1 @ t2.T,
        l2_pinv=_pinv_of_l_squared(lap.l_small),
    )


def _laplacian_spectrum(maps: CoordinateMaps):
    eigs = np.linalg.eigvalsh(maps.l_small)
    lam_max = eigs[-1]
    nonzero = eigs[eigs > 1e-12 * max(lam_max, 1.0)]
    if nonzero.size == 0:
        raise CertificateError("Laplacian numerically rank zero")
    return lam_max, nonzero[0]


def m_lower_bounds(maps: CoordinateMaps, alpha: float, beta: float, eps: float):
    """The three lower bounds on the Lyapunov weight m.

    (i) positive definiteness of P via the Schur complement, (ii) positive
    semidefiniteness of the drift quadratic Q, (iii) positive definiteness
    of the damped form Qtilde at the given eps.
    """
    lam_max, lam_min_nz = _laplacian_spectrum(maps)
    k = maps.r.T @ np.kron(maps.l2_pinv, np.eye(maps.d)) @ maps.r
    b1 = 1.0 / np.sqrt(np.linalg.eigvalsh(0.5 * (k + k.T))[0])
    ratio = lam_max**2 / lam_min_nz
    b2 = ratio
    b3 = max((1.0 + 1.0 / (2.0 - beta * eps)) * ratio / 2.0, beta / (2.0 * alpha * eps))
    return b1, b2, b3


def lyapunov_p(maps: CoordinateMaps, m: float) -> np.ndarray:
    """P = [[m I, -R], [-R^T, m R^T (L^2)^+ R]]."""
    p3 = m * maps.r.T @ np.kron(maps.l2_pinv, np.eye(maps.d)) @ maps.r
    p = np.block([[m * np.eye(maps.nd), -maps.r], [-maps.r.T, p3]])
    return 0.5 * (p + p.T)


def qtilde(maps: CoordinateMaps, p: np.ndarray, m: float, alpha: float, beta: float, eps: float) -> np.ndarray:
    """Damped decrement form: -(A^T P + P A) minus the gradient cross-term.

    The cross-term bound contributes diag((-2 m alpha + beta/eps) I,
    beta eps I) after strong convexity, Lipschitz continuity and Young's
    inequality are applied.
    """
    q = -(maps.a.T @ p + p @ maps.a)
    q0 = np.zeros_like(q)
    nd = maps.nd
    q0[:nd, :nd] = (-2.0 * m * alpha + beta / eps) * np.eye(nd)
    q0[nd:, nd:] = beta * eps * np.eye(q.shape[0] - nd)
    qt = q - q0
    return 0.5 * (qt + qt.T)


def choose_m_eps(maps: CoordinateMaps, alpha: float, beta: float):
    """Pick the Lyapunov weight and cross-term parameter.

    eps = 1/beta always satisfies the eps < 2/beta requirement; m starts at
    1.05x the largest lower bound and is escalated (up to 2x) until both P
    and Qtilde verify positive definite by eigendecomposition.
    """
    if alpha <= 0 or beta <= 0:
        raise ValueError("need positive convexity and Lipschitz constants")
    eps = 1.0 / beta
    bounds = m_lower_bounds(maps, alpha, beta, eps)
    base = max(bounds)
    for safety in (1.05, 1.2, 1.4, 1.7, 2.0):
        m = safety * base
        p = lyapunov_p(maps, m)
        if np.linalg.eigvalsh(p)[0] <= 0:
            continue
        qt = qtilde(maps, p, m, alpha, beta, eps)
        if np.linalg.eigvalsh(qt)[0] > 0:
            return m, eps
    raise CertificateError(
        "no positive definite (P, Qtilde) up to safety factor 2; "
        "Laplacian may be numerically degenerate"
    )


def margin_q(qt: np.ndarray, p: np.ndarray, eps_start: float, beta: float):
    """Margin q = min eig(Qtilde - eps P^2) with geometric eps reduction.

    Starting from the cross-term eps, halve until eps < min eig(Qtilde) /
    max eig(P^2), which guarantees a positive margin.  Returns (q, eps).
    """
    qt_min = np.linalg.eigvalsh(qt)[0]
    p2 = p @ p
    p2_max = np.linalg.eigvalsh(0.5 * (p2 + p2.T))[-1]
    if qt_min <= 0:
        raise CertificateError("Qtilde is not positive definite")
    eps = min(eps_start, 1.0 / beta)
    for _ in range(600):
        if eps < qt_min / p2_max:
            q = float(np.linalg.eigvalsh(qt - eps * p2)[0])
            if q > 0:
                return q, eps
        eps *= 0.5
        if eps == 0.0:
            break
    raise CertificateError("no eps in (0, 1/beta] yields a positive margin")


def perturbation_growth(tau: float, beta: float, c2: float) -> float:
    """Worst-case drift ratio r after tau seconds without broadcasts.

    Solution of dr = beta (1 + r) + c2 (1 + r)^2 started from zero; blows
    up at tau = ln((beta + c2)/c2) / beta.
    """
    grow = np.exp(beta * tau)
    denom = beta + c2 - c2 * grow
    if denom <= 0:
        return np.inf
    return (beta + c2) * (grow - 1.0) / denom


def sync_constants(maps: CoordinateMaps, beta: float, eps: float):
    """c1 scales the squared broadcast error in the Lyapunov decrement;
    c2 bounds the relative growth rate of the drift ratio."""
    e_norm = np.linalg.norm(maps.e, 2)
    a_norm = np.linalg.norm(maps.a, 2)
    c1 = (1.0 / eps) * e_norm**2 * (1.0 + beta**2)
    c2 = max(a_norm, (1.0 + beta) * e_norm)
    return c1, c2


def delta_star(maps: CoordinateMaps, q: float, beta: float, eps: float) -> float:
    """Closed-form largest certified broadcast period.

    Inverts the drift-ratio growth curve at the level s = sqrt(q / c1):

        delta* = (1/beta) ln( (1+s)(beta+c2) / (beta+c2+s c2) ).

    The result always lies below the blow-up time of the growth curve.
    """
    if q < 0:
        raise ValueError("margin must be nonnegative")
    c1, c2 = sync_constants(maps, beta, eps)
    s = np.sqrt(q / c1)
    delta = (1.0 / beta) * np.log((1.0 + s) * (beta + c2) / (beta + c2 + s * c2))
    blowup = (1.0 / beta) * np.log((beta + c2) / c2)
    assert delta < blowup
    return float(delta)


def async_constants(maps: CoordinateMaps, p: np.ndarray, beta: float):
    """c3..c6: norms bounding the event-triggered perturbation channel."""
    c3 = np.linalg.norm(maps.d_mat, 2)
    c4 = c3 * np.sqrt(maps.n)
    c5 = c4 * max(1.0, beta) * np.sqrt(2.0) * np.linalg.norm(maps.t1t2t, 2)
    c6 = c4 * np.linalg.norm(p, 2)
    return c3, c4, c5, c6


def lambda_nu_star(maps: CoordinateMaps, p: np.ndarray, q_tilde: float, beta: float):
    """Trigger-gain threshold and the matching decay-rate threshold.

    lambda* = q~ / (2 c5 ||P||); for lambda below it, nu*(lambda) =
    c6^2 / (q~ - 2 lambda c5 ||P||).  Returns (lambda*, nu_star_fn).
    """
    c3, c4, c5, c6 = async_constants(maps, p, beta)
    p_norm = np.linalg.norm(p, 2)
    lam_star = q_tilde / (2.0 * c5 * p_norm)

    def nu_star(lam: float) -> float:
        q_lam = q_tilde - 2.0 * lam * c5 * p_norm
        if q_lam <= 0:
            return np.inf
        return c6**2 / q_lam

    return float(lam_star), nu_star


def to_zeta(x: np.ndarray, z: np.ndarray, x_star: np.ndarray, problem: Problem, maps: CoordinateMaps):
    """Reduced error coordinates of a stacked state.

    Returns (zeta, eta_avg) where zeta = (y, psi) and eta_avg is the
    conserved average mode (zero along admissible trajectories).
    """
    n, d = maps.n, maps.d
    x_star_tile = np.tile(x_star, n)
    g_star = problem.grad_stacked(x_star_tile)
    x_err = x - x_star_tile
    z_err = z + g_star
    eta = maps.l_big @ x_err - z_err
    psi = maps.r.T @ eta
    eta_avg = eta.reshape(n, d).sum(axis=0) / np.sqrt(n)
    return np.concatenate([x_err, psi]), eta_avg


def from_zeta(zeta: np.ndarray, maps: CoordinateMaps):
    """Inverse of :func:`to_zeta` on the invariant slice eta_avg = 0.

    Returns the error pair (x_err, z_err).
    """
    full = maps.t1t2t @ np.concatenate([zeta, np.zeros(maps.d)])
    return full[: maps.nd], full[maps.nd :]


def lyapunov(zeta: np.ndarray, p: np.ndarray) -> float:
    return float(zeta @ p @ zeta)


def lyapunov_tilde(zeta: np.ndarray, xi: np.ndarray, p: np.ndarray) -> float:
    return float(zeta @ p @ zeta) + 0.5 * float(xi @ xi)


@dataclass
class Certificate:
    """Everything the monitors and threshold formulas need, precomputed."""

    maps: CoordinateMaps
    alpha: float
    beta: float
    m: float
    eps: float  # margin-splitting parameter (the certified one)
    eps_cross: float  # cross-term parameter baked into Qtilde
    p: np.ndarray
    qtilde_mat: np.ndarray
    q: float
    c1: float
    c2: float
    c3: float
    c4: float
    c5: float
    c6: float
    delta_star: float
    lambda_star: float
    x_star: np.ndarray
    g_star: np.ndarray  # stacked gradient at the consensual optimum

    def nu_star(self, lam: float) -> float:
        q_lam = self.q - 2.0 * lam * self.c5 * np.linalg.norm(self.p, 2)
        return np.inf if q_lam <= 0 else self.c6**2 / q_lam

    @property
    def r_limit(self) -> float:
        """Certified ceiling sqrt(q/c1) for the sync drift ratio."""
        return float(np.sqrt(self.q / self.c1))

    def zeta_of(self, x: np.ndarray, z: np.ndarray):
        n, d = self.maps.n, self.maps.d
        x_err = x - np.tile(self.x_star, n)
        z_err = z + self.g_star
        eta = self.maps.l_big @ x_err - z_err
        psi = self.maps.r.T @ eta
        eta_avg = eta.reshape(n, d).sum(axis=0) / np.sqrt(n)
        return np.concatenate([x_err, psi]), eta_avg

    def zeta_error(self, x, z, x_hat, z_hat):
        """Broadcast drift mapped into the reduced coordinates."""
        dx = x_hat - x
        dz = z_hat - z
        return np.concatenate([dx, self.maps.r.T @ (self.maps.l_big @ dx - dz)])

    def drift_ratio(self, x, z, cache) -> float:
        zeta, _ = self.zeta_of(x, z)
        nz = np.linalg.norm(zeta)
        if nz == 0.0:
            return 0.0
        e = self.zeta_error(x, z, cache.x_hat, cache.z_hat)
        return float(np.linalg.norm(e) / nz)

    def perturbation_bound(self, x, z, grads, cache, lam, xi):
        """(||D e||, lam c5 ||zeta|| + c4 ||xi||) at the current sample."""
        e = np.concatenate(
            [cache.x_hat - x, cache.z_hat - z, cache.g_hat - grads]
        )
        de = self.maps.d_mat @ e
        zeta, _ = self.zeta_of(x, z)
        bound = lam * self.c5 * np.linalg.norm(zeta) + self.c4 * np.linalg.norm(xi)
        return float(np.linalg.norm(de)), float(bound)

    def to_json(self, lam_for_nu: float | None = None) -> str:
        lam = self.lambda_star / 2.0 if lam_for_nu is None else lam_for_nu
        return json.dumps(
            {
                "m": self.m,
                "eps": self.eps,
                "q": self.q,
                "c1": self.c1,
                "c2": self.c2,
                "c3": self.c3,
                "c4": self.c4,
                "c5": self.c5,
                "c6": self.c6,
                "delta_star": self.delta_star,
                "lambda_star": self.lambda_star,
                "nu_star_at_lambda": self.nu_star(lam),
                "lambda_for_nu_star": lam,
                "eig_min_P": float(np.linalg.eigvalsh(self.p)[0]),
                "eig_min_Qtilde": float(np.linalg.eigvalsh(self.qtilde_mat)[0]),
            },
            indent=2,
        )


def build_certificate(g: Graph, problem: Problem, d: int | None = None) -> Certificate:
    """Construct and verify the full certificate for a problem on a graph."""
    d = problem.dim if d is None else d
    maps = build_maps(g, d, problem)
    alpha, beta = problem.alpha, problem.lips
    m, eps_cross = choose_m_eps(maps, alpha, beta)
    p = lyapunov_p(maps, m)
    qt = qtilde(maps, p, m, alpha, beta, eps_cross)
    q, eps = margin_q(qt, p, eps_cross, beta)
    c1, c2 = sync_constants(maps, beta, eps)
    dstar = delta_star(maps, q, beta, eps)
    c3, c4, c5, c6 = async_constants(maps, p, beta)
    lam_star, _ = lambda_nu_star(maps, p, q, beta)
    if problem.x_star is None:
        solve_centralized(problem)
    x_star = problem.x_star
    g_star = problem.grad_stacked(np.tile(x_star, problem.n))
    return Certificate(
        maps=maps,
        alpha=alpha,
        beta=beta,
        m=m,
        eps=eps,
        eps_cross=eps_cross,
        p=p,
        qtilde_mat=qt,
        q=q,
        c1=c1,
        c2=c2,
        c3=c3,
        c4=c4,
        c5=c5,
        c6=c6,
        delta_star=dstar,
        lambda_star=lam_star,
        x_star=x_star,
        g_star=g_star,
    )

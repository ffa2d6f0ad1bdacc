"""Stable fibers by Picard iteration on the exponentially weighted integral equations.

A point ``(zeta, value)`` lies on the stable fiber through ``X0`` exactly when
the difference trajectory ``U = (U1, U2)`` between its orbit and the base
orbit solves a pair of convolution equations: the slow block integrates the
forcing difference backward from infinity, the stable block integrates it
forward from ``U2(0) = zeta - X0_2``.  Under the gap condition ``k < 1`` the
pair is a contraction in the norm ``sup_t exp(beta t) |.|_alpha`` and Picard
iteration converges geometrically; the fiber map evaluates the converged slow
component at ``t = 0``.

Discretization: the infinite backward horizon is truncated at ``T`` with zero
tail, and both convolutions use a piecewise-constant forcing density per step
with exact exponential kernel weights.  The stable-block density is anchored
at cell left endpoints, which reproduces the integrator's stepping; the
slow-block density is anchored at cell right endpoints.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import sqrt
from typing import Optional

import numpy as np
import scipy.signal

from .dynamics import NonlinearitySpec, Trajectory, estimate_LF, nodal_delta
from .noise import NoisePath
from .spectral import SpectralModel, gamma_weight

__all__ = [
    "GapConditionError",
    "PicardConvergenceError",
    "GapReport",
    "FiberQuery",
    "FiberSolution",
    "gap_k",
    "select_beta",
    "lyapunov_perron",
    "fiber_point",
    "shift_fiber_by_noise",
    "weighted_pair_norm",
    "recurse_linear",
]


class GapConditionError(ValueError):
    """The spectral gap does not admit a contraction (or is degenerate)."""


class PicardConvergenceError(RuntimeError):
    """Picard iteration failed to reach tolerance; carries the measured ratios."""

    def __init__(self, message, increments=None, estimates=None):
        super().__init__(message)
        self.increments = list(increments or [])
        self.estimates = list(estimates or [])


def gap_k(lam_n: float, lam_n1: float, L_F: float, alpha: float, beta: float) -> float:
    """Contraction constant of the fiber map for a trial decay rate ``beta``.

    ``k = L_F (lam_N^a/(beta-lam_N) + lam_{N+1}^a/(lam_{N+1}-beta)
    + C_a/(lam_{N+1}-beta)^(1-a))`` with ``C_a = a^a Gamma(1-a)``; the fiber
    construction is admissible iff ``k < 1``.
    """
    if not 0.0 <= alpha < 1.0:
        raise GapConditionError("alpha must lie in [0,1)")
    if not lam_n < beta < lam_n1:
        raise GapConditionError(f"beta must lie strictly inside ({lam_n}, {lam_n1}), got {beta}")
    c_alpha = gamma_weight(alpha)
    return L_F * (
        lam_n**alpha / (beta - lam_n)
        + lam_n1**alpha / (lam_n1 - beta)
        + c_alpha / (lam_n1 - beta) ** (1.0 - alpha)
    )


@dataclass(frozen=True)
class GapReport:
    """Outcome of the decay-rate selection over one spectral gap."""

    N: int
    alpha: float
    L_F: float
    beta: float
    C_alpha: float
    k: float
    lambdas_at_split: tuple
    beta_implicit: Optional[float] = None
    k_at_beta_implicit: Optional[float] = None

    @property
    def admissible(self) -> bool:
        return self.k < 1.0

    def as_dict(self) -> dict:
        return {
            "N": self.N,
            "alpha": self.alpha,
            "L_F": self.L_F,
            "beta": self.beta,
            "C_alpha": self.C_alpha,
            "k": self.k,
            "lambda_N": self.lambdas_at_split[0],
            "lambda_N1": self.lambdas_at_split[1],
            "admissible": self.admissible,
            "beta_implicit": self.beta_implicit,
            "k_at_beta_implicit": self.k_at_beta_implicit,
        }


def select_beta(model: SpectralModel, L_F: float, alpha: float, N: int) -> GapReport:
    """Pick the decay rate that minimizes the contraction constant over the gap.

    ``k(beta)`` is strictly convex on ``(lam_N, lam_{N+1})`` with poles at both
    ends, so golden-section search finds the unique minimizer (tolerance 1e-8
    in beta).  The report also records the rate solving the implicit relation
    ``beta = lam_N + (2 L_F / k(beta)) lam_N^alpha`` when it exists, purely
    for reference.
    """
    lam = model.lambdas
    if not 1 <= N < lam.shape[0]:
        raise GapConditionError(f"split index must satisfy 1 <= N < dof, got {N}")
    lam_n, lam_n1 = float(lam[N - 1]), float(lam[N])
    gap = lam_n1 - lam_n
    if gap <= 1e-12 * max(1.0, lam_n1):
        raise GapConditionError(f"degenerate gap: lambda_{N}={lam_n:.6g}, lambda_{N+1}={lam_n1:.6g}")
    c_alpha = gamma_weight(alpha)
    if L_F == 0.0:
        beta = lam_n + 0.5 * gap
        return GapReport(N, alpha, 0.0, beta, c_alpha, 0.0, (lam_n, lam_n1))

    k_of = lambda b: gap_k(lam_n, lam_n1, L_F, alpha, b)
    pad = 1e-12 * gap
    a, b = lam_n + pad, lam_n1 - pad
    invphi = (sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = k_of(c), k_of(d)
    while (b - a) > 1e-8:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = k_of(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = k_of(d)
    beta = 0.5 * (a + b)
    k_min = k_of(beta)

    # Reference only: the implicit relation defines beta through k while k
    # depends on beta; solve it by bracketing when the sign changes.
    beta_imp = k_imp = None
    rel = lambda bb: bb - lam_n - (2.0 * L_F / k_of(bb)) * lam_n**alpha
    lo, hi = lam_n + 1e-9 * gap, lam_n1 - 1e-9 * gap
    if rel(lo) * rel(hi) < 0.0:
        import scipy.optimize

        beta_imp = float(scipy.optimize.brentq(rel, lo, hi, xtol=1e-12))
        k_imp = k_of(beta_imp)

    return GapReport(N, alpha, float(L_F), float(beta), c_alpha, float(k_min),
                     (lam_n, lam_n1), beta_imp, k_imp)


@dataclass
class FiberQuery:
    """One fiber evaluation: base point, fiber parameter, noise, and solver knobs.

    ``zeta`` is a full-length coordinate vector supported on the stable block.
    ``gap`` may carry a precomputed :class:`GapReport`; otherwise the rate is
    selected internally from the nonlinearity's Lipschitz data.
    """

    X0: np.ndarray
    zeta: np.ndarray
    path: Optional[NoisePath]
    eps: float
    T: float
    h: float
    tol: float
    max_iter: int
    alpha: float
    gap: Optional[GapReport] = None


@dataclass
class FiberSolution:
    """Converged difference trajectory and the fiber value it determines."""

    U1: Trajectory
    U2: Trajectory
    fiber_value: np.ndarray
    iterations: int
    final_residual: float
    contraction_estimates: list
    gap: GapReport

    @property
    def states(self) -> np.ndarray:
        """Full difference trajectory (slow and stable blocks combined)."""
        return self.U1.states + self.U2.states


def recurse_linear(phi: np.ndarray, w: np.ndarray, density: np.ndarray, y0: np.ndarray) -> np.ndarray:
    """Vectorized scalar recursions ``y[m+1] = phi y[m] + w density[:, m]``.

    ``density`` has one column per step; the output gains a leading column
    ``y0``.  Implemented with per-mode IIR filtering, which performs exactly
    the multiply-add of the plain loop.
    """
    kmodes, n = density.shape
    out = np.empty((kmodes, n + 1))
    out[:, 0] = y0
    if n == 0:
        return out
    for i in range(kmodes):
        zi = np.array([phi[i] * y0[i]])
        out[i, 1:], _ = scipy.signal.lfilter(
            np.array([w[i]]), np.array([1.0, -phi[i]]), density[i], zi=zi
        )
    return out


def _backward_slow(e_h: np.ndarray, w_back: np.ndarray, density: np.ndarray) -> np.ndarray:
    """Solve ``y[m] = e_h y[m+1] - w_back density[:, m+1]`` down from ``y[n] = 0``."""
    rev = recurse_linear(e_h, -w_back, density[:, :0:-1], np.zeros(density.shape[0]))
    return rev[:, ::-1].copy()


def weighted_pair_norm(U: np.ndarray, times: np.ndarray, beta: float, alpha: float,
                       model: SpectralModel) -> float:
    """Discrete norm ``sup_t e^(beta t) |U1|_alpha + sup_t e^(beta t) |U2|_alpha``.

    Evaluated in the log domain so large ``beta * T`` cannot overflow before
    the decay of ``U`` is taken into account.
    """
    lam = model.lambdas
    wgt = lam ** (2.0 * alpha) if alpha != 0.0 else np.ones_like(lam)

    def sup_part(sl):
        sq = np.einsum("i,ij->j", wgt[sl], U[sl] * U[sl])
        with np.errstate(divide="ignore"):
            logs = beta * times + 0.5 * np.log(sq)
        m = np.max(logs)
        return 0.0 if m == -np.inf else float(np.exp(m))

    return sup_part(model.slow) + sup_part(model.stable)


def lyapunov_perron(query: FiberQuery, base: Trajectory, model: SpectralModel,
                    nl: NonlinearitySpec) -> FiberSolution:
    """Solve the pair of fiber integral equations by Picard iteration.

    ``base`` must be the orbit of ``query.X0`` on ``[0, T]`` computed by
    :func:`foliage.dynamics.integrate` with the same noise path and ``eps``.
    Iteration starts from the forcing-free solution (slow block zero, stable
    block the freely decayed initial difference), so a vanishing forcing
    difference converges in one sweep.  Each sweep evaluates the forcing
    difference along the current iterate, then refreshes both blocks with the
    exact-kernel convolutions; the weighted-norm increment must fall below
    ``tol`` within ``max_iter`` sweeps.
    """
    h = query.h
    n = int(round(query.T / h))
    if abs(query.T - n * h) > 1e-9 * max(1.0, query.T) or n < 1:
        raise ValueError(f"horizon T={query.T} must be a positive integer multiple of h={h}")
    if abs(base.h - h) > 1e-12 * h:
        raise ValueError(f"base trajectory step {base.h} does not match query step {h}")
    if base.n_steps < n:
        raise ValueError(f"base trajectory covers [0, {base.T}], need [0, {query.T}]")
    if base.eps != query.eps:
        raise ValueError(f"base trajectory eps={base.eps} does not match query eps={query.eps}")
    if np.any(query.zeta[model.slow] != 0.0):
        raise ValueError("zeta must be supported on the stable block (zero slow components)")
    if query.tol <= 0.0 or query.max_iter < 1:
        raise ValueError("tol must be positive and max_iter at least 1")

    gap = query.gap
    if gap is None:
        gap = select_beta(model, estimate_LF(nl, model, query.alpha), query.alpha, model.N)
    if not gap.admissible:
        raise GapConditionError(
            f"gap condition fails: k={gap.k:.6g} >= 1 at beta={gap.beta:.6g} "
            f"(lambda_N={gap.lambdas_at_split[0]:.6g}, lambda_N1={gap.lambdas_at_split[1]:.6g})"
        )

    lam = model.lambdas
    slow, stable = model.slow, model.stable
    times = np.arange(n + 1) * h
    phi2 = np.exp(-lam[stable] * h)
    w2 = (1.0 - phi2) / lam[stable]
    e1 = np.exp(lam[slow] * h)
    w1 = (e1 - 1.0) / lam[slow]

    arg_coords = base.states[:, : n + 1]
    if query.eps != 0.0:
        if query.path is None:
            raise ValueError("a noise path is required when eps is nonzero")
        arg_coords = arg_coords + query.eps * query.path.coords_matrix(0.0, n, h, model.dof)
    arg_nodal = model.modes @ arg_coords

    u2_0 = (query.zeta - query.X0)[stable]
    U = np.zeros((model.dof, n + 1))
    U[stable] = recurse_linear(phi2, w2, np.zeros((lam[stable].shape[0], n)), u2_0)

    increments: list[float] = []
    ratios: list[float] = []
    converged = False
    for _ in range(query.max_iter):
        delta_nodal = nodal_delta(nl, arg_nodal, model.modes @ U)
        D = model._projector.T @ delta_nodal
        U_new = np.zeros_like(U)
        U_new[slow] = _backward_slow(e1, w1, D[slow])
        U_new[stable] = recurse_linear(phi2, w2, D[stable][:, :n], u2_0)
        step = weighted_pair_norm(U_new - U, times, gap.beta, query.alpha, model)
        if increments and increments[-1] > 0.0:
            ratios.append(step / increments[-1])
        increments.append(step)
        U = U_new
        if step <= query.tol:
            converged = True
            break
    if not converged:
        raise PicardConvergenceError(
            f"no convergence after {query.max_iter} sweeps "
            f"(last increment {increments[-1]:.3g}, tol {query.tol:.3g}, k={gap.k:.4g})",
            increments=increments,
            estimates=ratios,
        )

    states1 = np.zeros_like(U)
    states1[slow] = U[slow]
    states2 = np.zeros_like(U)
    states2[stable] = U[stable]
    fiber_value = np.zeros(model.dof)
    fiber_value[slow] = query.X0[slow] + U[slow, 0]
    return FiberSolution(
        U1=Trajectory(h=h, states=states1, eps=query.eps, meta={"part": 1}),
        U2=Trajectory(h=h, states=states2, eps=query.eps, meta={"part": 2}),
        fiber_value=fiber_value,
        iterations=len(increments),
        final_residual=increments[-1],
        contraction_estimates=ratios,
        gap=gap,
    )


def fiber_point(query: FiberQuery, base: Trajectory, model: SpectralModel,
                nl: NonlinearitySpec) -> np.ndarray:
    """Fiber map value: slow-block coordinates of the point over ``zeta``."""
    return lyapunov_perron(query, base, model, nl).fiber_value


def shift_fiber_by_noise(fiber_value: np.ndarray, path: NoisePath, eps: float,
                         model: SpectralModel) -> np.ndarray:
    """Transport a fiber value of the transformed system back to the original one.

    The original equation and its noise-free transform differ by the
    stationary path, so fibers shift by ``eps`` times the noise state at the
    anchor time; only the slow block of the value is affected.
    """
    out = np.asarray(fiber_value, dtype=float).copy()
    out[model.slow] += eps * path.coords_at(0.0, model.dof)[model.slow]
    return out

"""Small-noise expansion of the fiber map and the measured quadratic remainder.

For small noise amplitude ``eps`` the fiber map splits as
``value(eps) = f_d + eps f_1 + R2`` with ``|R2| = O(eps^2)``:

* ``f_d`` comes from the noise-free fiber solve (the deterministic fiber).
* ``f_1`` solves a *linear* fixed-point problem: the formal derivative of the
  fiber equations in ``eps``.  Its unknown initial slow component is exactly
  ``f_1``, so it is computed by the same Picard machinery with the linearized
  forcing ``G = J|_(U+X) V + (J|_(U+X) - J|_X)(X1 + Z)``, where ``X1`` is the
  first-order response of the base orbit to the noise.
* ``R2`` is always measured against a fully nonlinear fiber solve, never
  modeled.

Every solve here discretizes with the same grid, kernel weights, and
endpoint conventions as the nonlinear fiber solver, so ``f_1`` is the exact
derivative of the discrete fiber map and finite differences of it converge at
the expected rates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dynamics import (
    NonlinearitySpec,
    Trajectory,
    integrate,
    nodal_jacobian,
    nodal_jacobian_delta,
)
from .foliation import (
    FiberQuery,
    FiberSolution,
    GapReport,
    PicardConvergenceError,
    _backward_slow,
    lyapunov_perron,
    recurse_linear,
    weighted_pair_norm,
)
from .noise import NoisePath
from .spectral import SpectralModel, alpha_norm

__all__ = [
    "ExpansionResult",
    "RemainderStudy",
    "base_deterministic",
    "base_noise_response",
    "fiber_deterministic",
    "fiber_noise_correction",
    "first_order_fd_check",
    "remainder_study",
]


@dataclass
class ExpansionResult:
    """Expansion pieces at one noise amplitude; norms are slow-block fractional norms."""

    eps: float
    f_d: np.ndarray
    f_1: np.ndarray
    f_eps: np.ndarray
    R2_norm: float


@dataclass
class RemainderStudy:
    """Per-amplitude remainders and the fitted log-log slope (None if degenerate)."""

    results: list
    slope: Optional[float]
    c_omega: float

    def as_dict(self) -> dict:
        return {
            "slope": self.slope,
            "c_omega": self.c_omega,
            "per_eps": [
                {"eps": r.eps, "R2_norm": r.R2_norm} for r in self.results
            ],
        }


def base_deterministic(X0: np.ndarray, T: float, h: float, model: SpectralModel,
                       nl: NonlinearitySpec) -> Trajectory:
    """Noise-free base orbit (shares the integrator code path with ``eps = 0``)."""
    return integrate(X0, None, 0.0, T, h, model, nl)


def base_noise_response(base: Trajectory, path: NoisePath, T: float, h: float,
                        model: SpectralModel, nl: NonlinearitySpec) -> Trajectory:
    """First-order response of the base orbit to the noise.

    Solves the linear nonautonomous system driven by ``X1 + Z`` through the
    nodewise Jacobian along the deterministic orbit, with the same stepping as
    the nonlinear integrator, so the result is the exact amplitude derivative
    of the discrete orbit at zero noise.
    """
    n = int(round(T / h))
    if abs(T - n * h) > 1e-9 * max(1.0, T) or n < 1:
        raise ValueError(f"horizon T={T} must be a positive integer multiple of h={h}")
    if abs(base.h - h) > 1e-12 * h or base.n_steps < n:
        raise ValueError("base trajectory grid does not cover the requested horizon")
    lam = model.lambdas
    phi = np.exp(-lam * h)
    w = (1.0 - phi) / lam
    base_nodal = model.modes @ base.states[:, : n + 1]
    jac = nodal_jacobian(nl, base_nodal)
    Z = path.coords_matrix(0.0, n, h, model.dof)

    states = np.zeros((model.dof, n + 1))
    x1 = np.zeros(model.dof)
    for m in range(n):
        forced = jac[:, m] * (model.modes @ (x1 + Z[:, m]))
        x1 = phi * x1 + w * (model._projector.T @ forced)
        states[:, m + 1] = x1
    return Trajectory(h=h, states=states, eps=0.0, meta={"kind": "noise_response"})


def fiber_deterministic(zeta: np.ndarray, X0: np.ndarray, base: Trajectory, T: float,
                        h: float, tol: float, max_iter: int, alpha: float,
                        model: SpectralModel, nl: NonlinearitySpec,
                        gap: Optional[GapReport] = None) -> FiberSolution:
    """Noise-free fiber solve; ``fiber_value`` is the deterministic term ``f_d``."""
    query = FiberQuery(X0=X0, zeta=zeta, path=None, eps=0.0, T=T, h=h, tol=tol,
                       max_iter=max_iter, alpha=alpha, gap=gap)
    return lyapunov_perron(query, base, model, nl)


def fiber_noise_correction(ud: FiberSolution, base_det: Trajectory, base_resp: Trajectory,
                           path: NoisePath, T: float, h: float, tol: float, max_iter: int,
                           alpha: float, model: SpectralModel, nl: NonlinearitySpec):
    """First-order fiber correction ``f_1`` via the linearized fixed point.

    Returns ``(trajectory, f_1)`` where ``f_1`` is the slow-block initial value
    of the converged linear solution.  The linear sweep reuses the nonlinear
    solver's kernels and endpoint conventions; it contracts at the same rate,
    since the Jacobians are bounded by the Lipschitz data.
    """
    n = int(round(T / h))
    gap = ud.gap
    lam = model.lambdas
    slow, stable = model.slow, model.stable
    times = np.arange(n + 1) * h
    phi2 = np.exp(-lam[stable] * h)
    w2 = (1.0 - phi2) / lam[stable]
    e1 = np.exp(lam[slow] * h)
    w1 = (e1 - 1.0) / lam[slow]

    xd_nodal = model.modes @ base_det.states[:, : n + 1]
    ud_nodal = model.modes @ ud.states[:, : n + 1]
    jac_at = nodal_jacobian(nl, xd_nodal + ud_nodal)
    jac_jump = nodal_jacobian_delta(nl, xd_nodal, ud_nodal)
    drive = base_resp.states[:, : n + 1] + path.coords_matrix(0.0, n, h, model.dof)
    inhom_nodal = jac_jump * (model.modes @ drive)

    V = np.zeros((model.dof, n + 1))
    increments: list[float] = []
    converged = False
    for _ in range(max_iter):
        g_nodal = jac_at * (model.modes @ V) + inhom_nodal
        G = model._projector.T @ g_nodal
        V_new = np.zeros_like(V)
        V_new[slow] = _backward_slow(e1, w1, G[slow])
        V_new[stable] = recurse_linear(phi2, w2, G[stable][:, :n], np.zeros(lam[stable].shape[0]))
        step = weighted_pair_norm(V_new - V, times, gap.beta, alpha, model)
        increments.append(step)
        V = V_new
        if step <= tol:
            converged = True
            break
    if not converged:
        raise PicardConvergenceError(
            f"linear correction sweep did not converge in {max_iter} iterations "
            f"(last increment {increments[-1]:.3g})",
            increments=increments,
        )
    f_1 = np.zeros(model.dof)
    f_1[slow] = V[slow, 0]
    return Trajectory(h=h, states=V, eps=0.0, meta={"kind": "fiber_correction"}), f_1


def _nonlinear_fiber(zeta, X0, path, eps, T, h, tol, max_iter, alpha, model, nl, gap):
    base = integrate(X0, path, eps, T, h, model, nl)
    query = FiberQuery(X0=X0, zeta=zeta, path=path, eps=eps, T=T, h=h, tol=tol,
                       max_iter=max_iter, alpha=alpha, gap=gap)
    return lyapunov_perron(query, base, model, nl).fiber_value


def first_order_fd_check(zeta, X0, path, fd_eps, T, h, tol, max_iter, alpha, model, nl,
                         gap=None, f_1=None) -> dict:
    """Compare ``f_1`` with the centered difference of the fiber map in ``eps``.

    Returns the two slow-block vectors and their relative discrepancy in the
    slow fractional norm.  ``f_1`` is recomputed unless supplied.
    """
    if gap is None or f_1 is None:
        base_det = base_deterministic(X0, T, h, model, nl)
        ud = fiber_deterministic(zeta, X0, base_det, T, h, tol, max_iter, alpha, model, nl, gap)
        gap = ud.gap
        resp = base_noise_response(base_det, path, T, h, model, nl)
        _, f_1 = fiber_noise_correction(ud, base_det, resp, path, T, h, tol, max_iter,
                                        alpha, model, nl)
    f_plus = _nonlinear_fiber(zeta, X0, path, +fd_eps, T, h, tol, max_iter, alpha, model, nl, gap)
    f_minus = _nonlinear_fiber(zeta, X0, path, -fd_eps, T, h, tol, max_iter, alpha, model, nl, gap)
    fd = (f_plus - f_minus) / (2.0 * fd_eps)
    denom = alpha_norm(f_1, alpha, model)
    rel = alpha_norm(fd - f_1, alpha, model) / denom if denom > 0.0 else np.inf
    return {"f_1": f_1, "fd": fd, "rel_error": float(rel), "fd_eps": fd_eps}


def remainder_study(zeta, X0, path, eps_list, T, h, tol, max_iter, alpha,
                    model: SpectralModel, nl: NonlinearitySpec) -> RemainderStudy:
    """Measure ``R2(eps) = value(eps) - f_d - eps f_1`` over a list of amplitudes.

    Fits the log-log slope of the remainder norm against ``eps`` by least
    squares; the slope is ``None`` when any remainder sits at the solver floor
    (as happens for linear forcing, where the expansion is exact).  At least
    two amplitudes are required for the fit to make sense.
    """
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 2:
        raise ValueError("remainder study needs at least two amplitudes")
    if any(e <= 0.0 for e in eps_list):
        raise ValueError("amplitudes must be positive")

    base_det = base_deterministic(X0, T, h, model, nl)
    ud = fiber_deterministic(zeta, X0, base_det, T, h, tol, max_iter, alpha, model, nl)
    gap = ud.gap
    f_d = ud.fiber_value
    resp = base_noise_response(base_det, path, T, h, model, nl)
    _, f_1 = fiber_noise_correction(ud, base_det, resp, path, T, h, tol, max_iter,
                                    alpha, model, nl)

    results = []
    for eps in eps_list:
        f_eps = _nonlinear_fiber(zeta, X0, path, eps, T, h, tol, max_iter, alpha, model, nl, gap)
        r2 = f_eps - f_d - eps * f_1
        results.append(ExpansionResult(eps=eps, f_d=f_d, f_1=f_1, f_eps=f_eps,
                                       R2_norm=alpha_norm(r2, alpha, model)))

    norms = np.array([r.R2_norm for r in results])
    floor = 100.0 * np.finfo(float).eps * max(1.0, alpha_norm(f_d, alpha, model))
    slope = None
    if np.all(norms > floor):
        slope = float(np.polyfit(np.log(eps_list), np.log(norms), 1)[0])
    c_omega = float(np.max(norms / np.array(eps_list) ** 2))
    return RemainderStudy(results=results, slope=slope, c_omega=c_omega)

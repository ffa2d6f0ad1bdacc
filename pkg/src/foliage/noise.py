"""Two-sided stationary Ornstein-Uhlenbeck paths in eigencoordinates.

The forcing is diagonal in the eigenbasis with finitely many active modes, so
the stationary solution of ``dZ + A Z dt = dW`` is a vector of independent
scalar OU processes with reversion rates ``lambda_i`` and intensities ``q_i``.
Sampling uses the exact discrete transition, so the path law carries no
step-size bias; the time shift relabels the grid, realizing the shifted noise
used by the fiber invariance checks.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.signal

__all__ = [
    "NoiseError",
    "NoiseSpec",
    "TimeGrid",
    "NoisePath",
    "sample_stationary",
    "shift",
    "scale",
]


class NoiseError(ValueError):
    """Invalid noise specification or window overflow."""


@dataclass(frozen=True)
class NoiseSpec:
    """Per-mode intensities ``q`` (zero beyond ``m_noise``) and the seed."""

    m_noise: int
    q: np.ndarray
    seed: int

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        object.__setattr__(self, "q", q)
        if np.any(q < 0.0):
            raise NoiseError("noise intensities q must be non-negative")
        if np.any(q[self.m_noise:] != 0.0):
            raise NoiseError("q must vanish for modes beyond m_noise")

    @staticmethod
    def uniform(m_noise: int, dof: int, amplitude: float = 1.0, seed: int = 0) -> "NoiseSpec":
        q = np.zeros(dof)
        q[:m_noise] = float(amplitude)
        return NoiseSpec(m_noise=m_noise, q=q, seed=int(seed))


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid on ``[-t_minus, t_plus]`` with step ``h``; 0 is a grid point."""

    t_minus: float
    t_plus: float
    h: float

    def __post_init__(self):
        if self.h <= 0.0:
            raise NoiseError("grid step must be positive")
        if self.t_minus < 0.0 or self.t_plus < 0.0:
            raise NoiseError("window bounds must be non-negative")
        for name, val in (("t_minus", self.t_minus), ("t_plus", self.t_plus)):
            steps = val / self.h
            if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
                raise NoiseError(f"{name}={val} is not an integer multiple of h={self.h}")

    @property
    def n_minus(self) -> int:
        return int(round(self.t_minus / self.h))

    @property
    def n_plus(self) -> int:
        return int(round(self.t_plus / self.h))


@dataclass(frozen=True)
class NoisePath:
    """Sampled per-mode OU values on a uniform two-sided grid.

    ``samples[i, j]`` is mode ``i`` at time ``(i0 + j) h``.  ``innovations``
    stores the Gaussian increments that generated the path, so a restart from
    any stored state replays the remaining samples bit-for-bit.
    """

    i0: int
    h: float
    samples: np.ndarray
    innovations: np.ndarray
    spec: NoiseSpec
    lambdas: np.ndarray
    amplitude: float = 1.0

    @property
    def n_times(self) -> int:
        return self.samples.shape[1]

    @property
    def t_min(self) -> float:
        return self.i0 * self.h

    @property
    def t_max(self) -> float:
        return (self.i0 + self.n_times - 1) * self.h

    @property
    def times(self) -> np.ndarray:
        return (self.i0 + np.arange(self.n_times)) * self.h

    def index(self, t: float) -> int:
        j = round(t / self.h) - self.i0
        if abs(t - (self.i0 + j) * self.h) > 1e-9 * max(1.0, abs(t)) + 1e-12:
            raise NoiseError(f"time {t} is not on the noise grid (step {self.h})")
        if not 0 <= j < self.n_times:
            raise NoiseError(
                f"time {t} outside the sampled window [{self.t_min:.6g}, {self.t_max:.6g}]; "
                f"regenerate with T_minus >= {max(0.0, -t):.6g} and T_plus >= {max(0.0, t):.6g}"
            )
        return int(j)

    def coords_at(self, t: float, dof: int) -> np.ndarray:
        """Full eigencoordinate vector at time ``t`` (zeros beyond the forced modes)."""
        out = np.zeros(dof)
        out[: self.samples.shape[0]] = self.samples[:, self.index(t)]
        return out

    def coords_matrix(self, t0: float, n_steps: int, step: float, dof: int) -> np.ndarray:
        """Coordinates at ``t0 + k*step`` for ``k = 0..n_steps`` as a ``dof x (n_steps+1)`` matrix."""
        ratio = step / self.h
        if abs(ratio - round(ratio)) > 1e-9:
            raise NoiseError(f"step {step} does not align with the noise grid step {self.h}")
        stride = int(round(ratio))
        j0 = self.index(t0)
        j1 = self.index(t0 + n_steps * step)
        out = np.zeros((dof, n_steps + 1))
        out[: self.samples.shape[0], :] = self.samples[:, j0 : j1 + 1 : stride]
        return out

    def csv_rows(self):
        """Rows ``(t, z_1, ..., z_m)`` for diagnostics dumps."""
        for j, t in enumerate(self.times):
            yield (t, *self.samples[:, j])


def sample_stationary(spec: NoiseSpec, lambdas: np.ndarray, grid: TimeGrid) -> NoisePath:
    """Draw a stationary OU path with the exact discrete transition.

    Mode ``i`` starts from its stationary marginal ``N(0, q_i / (2 lambda_i))``
    at the left edge of the window and advances with
    ``z(t+h) = exp(-lambda_i h) z(t) + eta``,
    ``eta ~ N(0, q_i (1 - exp(-2 lambda_i h)) / (2 lambda_i))``.
    The same ``(seed, grid, spec, lambdas)`` always reproduces the same path.
    """
    lam = np.asarray(lambdas, dtype=float)
    if np.any(lam <= 0.0):
        raise NoiseError("all eigenvalues must be positive for a stationary path")
    m = int(spec.m_noise)
    if m > lam.shape[0]:
        raise NoiseError(f"m_noise={m} exceeds the number of available modes {lam.shape[0]}")
    lam_a = lam[:m]
    q_a = spec.q[:m]
    n = grid.n_minus + grid.n_plus
    rng = np.random.default_rng(spec.seed)
    std0 = np.sqrt(q_a / (2.0 * lam_a))
    phi = np.exp(-lam_a * grid.h)
    std_inc = np.sqrt(q_a * (1.0 - phi * phi) / (2.0 * lam_a))
    z0 = rng.standard_normal(m) * std0
    eta = rng.standard_normal((n, m)) * std_inc

    samples = np.empty((m, n + 1))
    samples[:, 0] = z0
    # Per-mode IIR filtering performs exactly the multiply-add of the plain
    # recursion, so restarting from any stored state replays bit-for-bit.
    if n > 0:
        for i in range(m):
            samples[i, 1:], _ = scipy.signal.lfilter(
                np.array([1.0]), np.array([1.0, -phi[i]]), eta[:, i],
                zi=np.array([phi[i] * z0[i]]),
            )

    return NoisePath(
        i0=-grid.n_minus,
        h=grid.h,
        samples=samples,
        innovations=eta.T.copy(),
        spec=spec,
        lambdas=lam,
    )


def shift(path: NoisePath, tau: float) -> NoisePath:
    """Time shift: the returned path evaluated at ``t`` equals the original at ``t + tau``.

    ``tau`` must be grid aligned, and the shifted window must still contain 0;
    otherwise the error reports the window the caller would need.
    """
    steps = tau / path.h
    if abs(steps - round(steps)) > 1e-9 * max(1.0, abs(steps)):
        raise NoiseError(f"shift tau={tau} is not an integer multiple of the grid step {path.h}")
    m = int(round(steps))
    # Relabel the grid: sample j keeps its value but moves from time (i0+j)h
    # to (i0-m+j)h, so the new path at time t reads the old one at t+tau.
    i0_new = path.i0 - m
    if not i0_new <= 0 <= i0_new + path.n_times - 1:
        raise NoiseError(
            f"shift by tau={tau} leaves no usable window around 0: the shifted path covers "
            f"[{i0_new * path.h:.6g}, {(i0_new + path.n_times - 1) * path.h:.6g}]; "
            f"regenerate with T_minus >= {max(0.0, -path.t_min, -tau):.6g} and "
            f"T_plus >= {max(0.0, path.t_max, tau):.6g}"
        )
    return replace(path, i0=i0_new)


def scale(path: NoisePath, eps: float) -> NoisePath:
    """Multiply the path (and its stored increments) by ``eps >= 0``."""
    if eps < 0.0:
        raise NoiseError("scale factor must be non-negative")
    return replace(
        path,
        samples=path.samples * eps,
        innovations=path.innovations * eps,
        amplitude=path.amplitude * eps,
    )

"""Finite-element assembly for a diffusion operator with dynamic boundary values.

The state space couples an interior profile on ``[x_lo, x_hi]`` with the two
endpoint values, which remain independent unknowns (they are never eliminated
by a boundary condition).  Piecewise-linear elements on a uniform mesh give a
symmetric positive definite pencil ``(K, M)``:

* ``K`` carries the energy form: a weighted Dirichlet integral, a positive
  zeroth-order interior term, and positive point terms at the two endpoints.
* ``M`` is the inner product: the consistent interior mass matrix plus a unit
  point mass at each endpoint (the boundary measure on an interval is counting
  measure on two points).

Coefficient integrals use the midpoint rule per cell, matching the element
order; the pure mass integrals in ``M`` are exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "AssemblyError",
    "DomainSpec",
    "CoefficientSet",
    "AssembledForms",
    "assemble",
]


class AssemblyError(ValueError):
    """Raised when mesh or coefficient data violate the assembly contract."""


@dataclass(frozen=True)
class DomainSpec:
    """Uniform mesh on an interval; both endpoint values are unknowns."""

    x_lo: float
    x_hi: float
    n_cells: int

    def __post_init__(self):
        if not self.x_lo < self.x_hi:
            raise AssemblyError(f"domain endpoints must satisfy x_lo < x_hi, got [{self.x_lo}, {self.x_hi}]")
        if int(self.n_cells) != self.n_cells or self.n_cells < 2:
            raise AssemblyError(f"n_cells must be an integer >= 2, got {self.n_cells}")

    @property
    def h(self) -> float:
        return (self.x_hi - self.x_lo) / self.n_cells

    @property
    def dof(self) -> int:
        """Total unknowns: interior nodes plus the two endpoint values."""
        return self.n_cells + 1

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.x_lo, self.x_hi, self.dof)

    @property
    def midpoints(self) -> np.ndarray:
        x = self.nodes
        return 0.5 * (x[:-1] + x[1:])


@dataclass(frozen=True)
class CoefficientSet:
    """Spatial coefficients: diffusion ``a``, interior reaction ``a0``, endpoint weights."""

    a: Callable[[np.ndarray], np.ndarray]
    a0: Callable[[np.ndarray], np.ndarray]
    c_lo: float
    c_hi: float

    @staticmethod
    def constant(a: float = 1.0, a0: float = 1.0, c_lo: float = 1.0, c_hi: float = 1.0) -> "CoefficientSet":
        return CoefficientSet(a=lambda x: np.full_like(x, float(a)),
                              a0=lambda x: np.full_like(x, float(a0)),
                              c_lo=float(c_lo), c_hi=float(c_hi))


@dataclass(frozen=True)
class AssembledForms:
    """Stiffness/energy matrix ``K`` and inner-product matrix ``M`` (dense, symmetric)."""

    K: np.ndarray
    M: np.ndarray

    @property
    def dof(self) -> int:
        return self.K.shape[0]


def _sample(fn, x: np.ndarray, name: str) -> np.ndarray:
    vals = np.asarray(fn(x), dtype=float)
    if vals.shape != x.shape:
        vals = np.broadcast_to(vals, x.shape).astype(float)
    if not np.all(np.isfinite(vals)):
        bad = int(np.argmax(~np.isfinite(vals)))
        raise AssemblyError(f"coefficient {name} is not finite at cell midpoint x={x[bad]:.6g} (cell {bad})")
    return vals


def assemble(domain: DomainSpec, coeffs: CoefficientSet) -> AssembledForms:
    """Assemble the symmetric positive definite pencil ``(K, M)``.

    Parameters
    ----------
    domain : DomainSpec
        Uniform mesh description.
    coeffs : CoefficientSet
        Diffusion ``a > 0`` and reaction ``a0 > 0`` sampled at cell midpoints;
        endpoint weights ``c_lo, c_hi > 0``.

    Returns
    -------
    AssembledForms
        Dense ``K`` and ``M`` of size ``dof x dof`` with ``dof = n_cells + 1``.

    Raises
    ------
    AssemblyError
        If a coefficient is non-positive at a sampled midpoint, naming the
        violating cell, or if an endpoint weight is non-positive.
    """
    h = domain.h
    mids = domain.midpoints
    am = _sample(coeffs.a, mids, "a")
    a0m = _sample(coeffs.a0, mids, "a0")

    for name, vals in (("a", am), ("a0", a0m)):
        if np.any(vals <= 0.0):
            bad = int(np.argmax(vals <= 0.0))
            raise AssemblyError(
                f"coefficient {name} must be positive on the mesh; "
                f"{name}({mids[bad]:.6g}) = {vals[bad]:.6g} at cell {bad}"
            )
    if coeffs.c_lo <= 0.0 or coeffs.c_hi <= 0.0:
        raise AssemblyError(f"endpoint weights must be positive, got c_lo={coeffs.c_lo}, c_hi={coeffs.c_hi}")

    n = domain.n_cells
    dof = domain.dof
    K = np.zeros((dof, dof))
    M = np.zeros((dof, dof))

    lo = np.arange(n)
    hi = lo + 1

    # Energy form: midpoint-rule quadrature per cell for both coefficient terms.
    # Gradient term: hat gradients are +-1/h, so the cell block is (a/h) [[1,-1],[-1,1]].
    # Reaction term: both hats equal 1/2 at the midpoint, giving (a0 h/4) on all
    # four block entries.
    kd = am / h
    km = a0m * h / 4.0
    np.add.at(K, (lo, lo), kd + km)
    np.add.at(K, (hi, hi), kd + km)
    np.add.at(K, (lo, hi), -kd + km)
    np.add.at(K, (hi, lo), -kd + km)
    K[0, 0] += coeffs.c_lo
    K[-1, -1] += coeffs.c_hi

    # Inner product: exact consistent mass (h/6)[[2,1],[1,2]] per cell, plus the
    # unit point masses at the endpoints.
    md = np.full(n, 2.0 * h / 6.0)
    mo = np.full(n, h / 6.0)
    np.add.at(M, (lo, lo), md)
    np.add.at(M, (hi, hi), md)
    np.add.at(M, (lo, hi), mo)
    np.add.at(M, (hi, lo), mo)
    M[0, 0] += 1.0
    M[-1, -1] += 1.0

    return AssembledForms(K=K, M=M)

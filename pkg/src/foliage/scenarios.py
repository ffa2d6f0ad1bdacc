"""Turn a validated config into concrete problem objects.

A :class:`Problem` bundles the discretized operator, the nonlinearity (plus a
linear sibling used for calibration), the base point, the selected decay
rates, and seeded factories for noise paths and fiber parameters.  Everything
the experiments touch comes from here, so a config fully pins a run.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import partial

import numpy as np

from .assembly import AssembledForms, CoefficientSet, DomainSpec, assemble
from .config import RunConfig
from .dynamics import (
    NonlinearitySpec,
    estimate_LF,
    linear_nonlinearity,
    table_nonlinearity,
    tanh_nonlinearity,
    zero_nonlinearity,
)
from .foliation import GapReport, select_beta
from .noise import NoisePath, NoiseSpec, TimeGrid, sample_stationary
from .spectral import SpectralModel, eigendecompose

__all__ = ["Problem", "build_problem", "build_forms", "build_nonlinearity"]


def _interp_coeff(xs, ys):
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    return lambda x: np.interp(x, xs, ys)


def build_forms(cfg: RunConfig) -> AssembledForms:
    domain = DomainSpec(cfg.x_lo, cfg.x_hi, cfg.dof - 1)
    if cfg.coeffs == "unit":
        coeffs = CoefficientSet.constant(1.0, 1.0, 1.0, 1.0)
    elif cfg.coeffs == "const":
        coeffs = CoefficientSet.constant(cfg.a_const, cfg.a0_const, cfg.c_lo, cfg.c_hi)
    else:
        coeffs = CoefficientSet(
            a=_interp_coeff(cfg.a_x, cfg.a_y),
            a0=_interp_coeff(cfg.a0_x, cfg.a0_y),
            c_lo=cfg.c_lo,
            c_hi=cfg.c_hi,
        )
    return assemble(domain, coeffs)


def build_nonlinearity(cfg: RunConfig) -> NonlinearitySpec:
    if cfg.nonlinearity == "zero":
        return zero_nonlinearity()
    if cfg.nonlinearity == "linear":
        return linear_nonlinearity(cfg.nl_c, cfg.nl_c_boundary)
    if cfg.nonlinearity == "tanh":
        return tanh_nonlinearity(cfg.nl_scale, cfg.nl_scale_boundary)
    return table_nonlinearity(cfg.nl_table_u, cfg.nl_table_f,
                              cfg.nl_table_g if cfg.nl_table_g else None)


@dataclass
class Problem:
    """Model, nonlinearities, base point, gaps, and seeded factories for one run."""

    cfg: RunConfig
    forms: AssembledForms
    model: SpectralModel
    nl: NonlinearitySpec
    nl_linear: NonlinearitySpec
    x0: np.ndarray
    gap: GapReport
    gap_linear: GapReport

    @property
    def alpha(self) -> float:
        return self.cfg.alpha

    def path(self, seed: int) -> NoisePath:
        cfg = self.cfg
        if cfg.q_values:
            q = np.zeros(self.model.dof)
            q[: cfg.m_noise] = cfg.q_values
            spec = NoiseSpec(m_noise=cfg.m_noise, q=q, seed=int(seed))
        else:
            spec = NoiseSpec.uniform(cfg.m_noise, self.model.dof, cfg.q_amplitude, seed)
        grid = TimeGrid(cfg.t_minus, cfg.t_plus, cfg.h / cfg.noise_step_div)
        return sample_stationary(spec, self.model.lambdas, grid)

    def sample_zeta(self, rng: np.random.Generator, scale=None) -> np.ndarray:
        """Fiber parameter near the base point: a decaying random stable-block offset."""
        cfg = self.cfg
        scale = cfg.zeta_scale if scale is None else scale
        model = self.model
        zeta = np.zeros(model.dof)
        zeta[model.stable] = self.x0[model.stable]
        k = min(4, model.dof - model.N)
        offsets = rng.standard_normal(k) * scale / (1.0 + np.arange(k))
        zeta[model.N : model.N + k] += offsets
        return zeta


def build_problem(cfg: RunConfig) -> Problem:
    forms = build_forms(cfg)
    model = eigendecompose(forms, cfg.n_split)
    nl = build_nonlinearity(cfg)
    # Calibration sibling: a mode-coupling linear map with the same interior
    # Lipschitz constant (distinct boundary slope so the fiber is not flat).
    c_cal = nl.lip if nl.lip > 0.0 else 0.25
    nl_linear = linear_nonlinearity(c_cal, 0.4 * c_cal)
    x0 = np.zeros(model.dof)
    x0[: len(cfg.x0_coeffs)] = cfg.x0_coeffs
    gap = select_beta(model, estimate_LF(nl, model, cfg.alpha), cfg.alpha, cfg.n_split)
    gap_linear = select_beta(model, estimate_LF(nl_linear, model, cfg.alpha), cfg.alpha,
                             cfg.n_split)
    return Problem(cfg=cfg, forms=forms, model=model, nl=nl, nl_linear=nl_linear,
                   x0=x0, gap=gap, gap_linear=gap_linear)

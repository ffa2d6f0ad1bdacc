"""Flat key=value run configuration, validation, and deterministic manifests.

A config file holds one ``key = value`` per line with ``#`` comments; values
are numbers, whitespace-separated number lists, or bare strings.  Every field
has a default, unknown keys are rejected, and all solver preconditions are
checked at load time with the offending key named.  The emitted manifest
spells out every resolved value (defaults included) and reloads to an equal
config, so a manifest fully determines a run.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, fields, replace

__all__ = [
    "ConfigError",
    "RunConfig",
    "load_config",
    "loads_config",
    "normalize",
    "manifest_text",
    "manifest_hash",
]

_INT_RE = re.compile(r"^[+-]?\d+$")


class ConfigError(ValueError):
    """Malformed or invalid configuration input."""


@dataclass(frozen=True)
class RunConfig:
    # mesh and coefficients
    x_lo: float = 0.0
    x_hi: float = 1.0
    dof: int = 128
    coeffs: str = "unit"
    a_const: float = 1.0
    a0_const: float = 1.0
    c_lo: float = 1.0
    c_hi: float = 1.0
    a_x: tuple = ()
    a_y: tuple = ()
    a0_x: tuple = ()
    a0_y: tuple = ()
    # spectral split
    n_split: int = 2
    alpha: float = 0.25
    # nonlinearity
    nonlinearity: str = "tanh"
    nl_scale: float = 0.25
    nl_scale_boundary: float = None  # resolved to nl_scale when absent
    nl_c: float = 0.25
    nl_c_boundary: float = None  # resolved to nl_c when absent
    nl_table_u: tuple = ()
    nl_table_f: tuple = ()
    nl_table_g: tuple = ()
    # noise
    m_noise: int = 8
    q_amplitude: float = 1.0
    q_values: tuple = ()  # per-mode intensities; empty means uniform q_amplitude
    noise_step_div: int = 2
    t_plus: float = 10.5
    t_minus: float = None  # resolved to t_plus when absent
    # solver
    eps: float = 0.05
    h: float = 0.001
    fiber_t: float = 5.5
    sim_t: float = 10.0
    tol: float = 1e-08
    max_iter: int = 60
    approx_tol: float = 1e-09
    # experiments
    seeds: tuple = tuple(range(16))
    tau: float = 0.5
    approach_t: float = 1.2
    fit_lo: float = 0.25
    fit_hi: float = 0.75
    rate_slack: float = 0.85
    defect_safety: float = 8.0
    lip_seeds: int = 2
    lip_fibers: int = 8
    zeta_scale: float = 0.3
    x0_coeffs: tuple = (0.6, -0.4, 0.25, -0.15)
    # expansion
    fd_eps: float = 0.001
    eps_list: tuple = (0.1, 0.05, 0.025, 0.0125)
    # spectrum checks
    check_alphas: tuple = (0.0, 0.25, 0.5)
    check_times: tuple = (0.01, 0.1, 1.0, 10.0)
    # output
    output_basis: str = "coords"
    sweep_count: int = 9
    sweep_scale: float = 0.5


_FLOAT_LIST_KEYS = {
    "a_x", "a_y", "a0_x", "a0_y", "nl_table_u", "nl_table_f", "nl_table_g",
    "x0_coeffs", "eps_list", "check_alphas", "check_times", "q_values",
}
_INT_LIST_KEYS = {"seeds"}
_INT_KEYS = {"dof", "n_split", "m_noise", "noise_step_div", "max_iter",
             "lip_seeds", "lip_fibers", "sweep_count"}
_STR_KEYS = {"coeffs", "nonlinearity", "output_basis"}
_FIELD_NAMES = {f.name for f in fields(RunConfig)}


def _parse_value(key: str, raw: str, lineno: int):
    raw = raw.strip()
    if key in _FLOAT_LIST_KEYS or key in _INT_LIST_KEYS:
        if raw == "":
            return ()
        items = raw.split()
        try:
            if key in _INT_LIST_KEYS:
                return tuple(int(tok) for tok in items)
            return tuple(float(tok) for tok in items)
        except ValueError:
            raise ConfigError(f"line {lineno}: key '{key}' expects a number list, got {raw!r}")
    if key in _STR_KEYS:
        return raw
    try:
        if key in _INT_KEYS:
            if not _INT_RE.match(raw):
                raise ValueError
            return int(raw)
        return float(raw)
    except ValueError:
        kind = "an integer" if key in _INT_KEYS else "a number"
        raise ConfigError(f"line {lineno}: key '{key}' expects {kind}, got {raw!r}")


def _resolve(cfg: RunConfig) -> RunConfig:
    updates = {}
    if cfg.nl_scale_boundary is None:
        updates["nl_scale_boundary"] = cfg.nl_scale
    if cfg.nl_c_boundary is None:
        updates["nl_c_boundary"] = cfg.nl_c
    if cfg.t_minus is None:
        updates["t_minus"] = cfg.t_plus
    return replace(cfg, **updates) if updates else cfg


def _validate(cfg: RunConfig) -> RunConfig:
    cfg = _resolve(cfg)

    def need(cond, msg):
        if not cond:
            raise ConfigError(msg)

    need(cfg.x_lo < cfg.x_hi, "x_lo must be smaller than x_hi")
    need(cfg.dof >= 4, "dof must be at least 4")
    need(cfg.coeffs in ("unit", "const", "table"), "coeffs must be one of unit|const|table")
    if cfg.coeffs == "const":
        need(cfg.a_const > 0 and cfg.a0_const > 0, "a_const and a0_const must be positive")
    need(cfg.c_lo > 0 and cfg.c_hi > 0, "c_lo and c_hi must be positive")
    if cfg.coeffs == "table":
        for nm in ("a_x", "a_y", "a0_x", "a0_y"):
            need(len(getattr(cfg, nm)) >= 2, f"{nm} needs at least two entries for coeffs = table")
    need(1 <= cfg.n_split < cfg.dof, "n_split must satisfy 1 <= n_split < dof")
    need(0.0 <= cfg.alpha < 1.0, "alpha must lie in [0,1)")
    need(cfg.nonlinearity in ("zero", "linear", "tanh", "table"),
         "nonlinearity must be one of zero|linear|tanh|table")
    if cfg.nonlinearity == "table":
        need(len(cfg.nl_table_u) >= 2 and len(cfg.nl_table_f) == len(cfg.nl_table_u),
             "nl_table_u and nl_table_f must be equal-length lists (>= 2 entries)")
        need(len(cfg.nl_table_g) in (0, len(cfg.nl_table_u)),
             "nl_table_g must be empty or match nl_table_u in length")
    need(cfg.m_noise >= 0 and cfg.m_noise <= cfg.dof, "m_noise must lie in [0, dof]")
    need(cfg.q_amplitude >= 0.0, "q_amplitude must be non-negative")
    if cfg.q_values:
        need(len(cfg.q_values) == cfg.m_noise, "q_values must list exactly m_noise intensities")
        need(all(q >= 0.0 for q in cfg.q_values), "q_values must be non-negative")
    need(cfg.noise_step_div >= 1, "noise_step_div must be at least 1")
    need(cfg.eps >= 0.0, "eps must be non-negative")
    need(cfg.h > 0.0, "h must be positive")
    need(cfg.tol > 0.0 and cfg.approx_tol > 0.0, "tol and approx_tol must be positive")
    need(cfg.max_iter >= 1, "max_iter must be at least 1")
    need(cfg.fiber_t > 0.0 and cfg.sim_t > 0.0 and cfg.approach_t > 0.0,
         "fiber_t, sim_t and approach_t must be positive")
    need(len(cfg.seeds) > 0, "seeds must be non-empty")
    need(all(s >= 0 for s in cfg.seeds), "seeds must be non-negative integers")
    need(cfg.tau >= 0.0, "tau must be non-negative")
    steps = cfg.tau / cfg.h
    need(abs(steps - round(steps)) <= 1e-9 * max(1.0, steps), "tau must be an integer multiple of h")
    need(0.0 <= cfg.fit_lo < cfg.fit_hi <= 1.0, "fit window must satisfy 0 <= fit_lo < fit_hi <= 1")
    need(cfg.rate_slack > 0.0, "rate_slack must be positive")
    need(cfg.defect_safety >= 1.0, "defect_safety must be at least 1")
    need(cfg.lip_seeds >= 1 and cfg.lip_fibers >= 3, "lip_seeds >= 1 and lip_fibers >= 3 required")
    need(cfg.fd_eps > 0.0, "fd_eps must be positive")
    need(len(cfg.eps_list) >= 2 and all(e > 0 for e in cfg.eps_list),
         "eps_list needs at least two positive amplitudes")
    need(all(0.0 <= a < 1.0 for a in cfg.check_alphas), "check_alphas must lie in [0,1)")
    need(cfg.output_basis in ("coords", "nodal"), "output_basis must be coords or nodal")
    need(cfg.sweep_count >= 1, "sweep_count must be at least 1")
    need(len(cfg.x0_coeffs) <= cfg.dof, "x0_coeffs cannot exceed dof entries")
    horizon = max(cfg.sim_t, cfg.fiber_t + cfg.tau, cfg.approach_t)
    need(cfg.t_plus >= horizon,
         f"t_plus must cover the longest horizon ({horizon:g}); increase t_plus")
    need(cfg.t_minus >= 0.0, "t_minus must be non-negative")
    return cfg


def normalize(cfg: RunConfig) -> RunConfig:
    """Resolve derived defaults and run the full validation pass."""
    return _validate(cfg)


def loads_config(text: str) -> RunConfig:
    """Parse config text; unknown keys and malformed lines are rejected."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.rstrip()!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if key not in _FIELD_NAMES:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        values[key] = _parse_value(key, raw, lineno)
    return _validate(RunConfig(**values))


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return loads_config(text)


def _format_value(val) -> str:
    if isinstance(val, tuple):
        return " ".join(_format_value(v) for v in val)
    if isinstance(val, bool):  # pragma: no cover - no bool keys today
        return str(int(val))
    if isinstance(val, int):
        return str(val)
    if isinstance(val, float):
        return repr(val)
    return str(val)


def manifest_text(cfg: RunConfig, version: str) -> str:
    """Full run manifest: every resolved value, one key per line, sorted."""
    cfg = _validate(cfg)
    lines = [f"# foliage run manifest (version {version})"]
    for f in sorted(fields(RunConfig), key=lambda f: f.name):
        lines.append(f"{f.name} = {_format_value(getattr(cfg, f.name))}")
    return "\n".join(lines) + "\n"


def manifest_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()

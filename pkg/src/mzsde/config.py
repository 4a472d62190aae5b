"""Experiment configuration: flat INI-style key = value files.

Sections: [model], [basis], [projection], [time], [tolerances], [mc],
[validate], [output].  Unknown sections or keys are errors so typos cannot
silently fall back to defaults.  The effective (defaulted, overridden)
configuration is what gets echoed into reports and hashed for output
headers.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .operator import GeneralDiffusion1D, Langevin1D, OrnsteinUhlenbeck

__all__ = [
    "ExperimentConfig",
    "parse_config",
    "config_hash",
    "resolve_observables",
]


@dataclass
class ModelConfig:
    variant: str = "ou"
    theta: float = 1.0
    sigma: float = float(np.sqrt(2.0))
    mu: float = 1.0
    gamma: float = 1.0
    beta: float = 1.0
    potential: tuple[float, ...] = (0.0, 0.0, 0.5)
    drift: tuple[float, ...] = (0.0, -1.0)
    diffusion_const: float = 1.0
    weight_scale: float = 1.0


@dataclass
class BasisConfig:
    n: int = 40
    n_q: int = 16
    n_p: int = 16
    support_lo: float = -6.0
    support_hi: float = 6.0


@dataclass
class ProjectionConfig:
    observables: tuple[str, ...] = ()


@dataclass
class TimeConfig:
    start: float = 0.0
    stop: float = 5.0
    step: float = 1e-3


@dataclass
class ToleranceConfig:
    re_tol: float = 1e-6
    im_tol: float = 1e-6
    kernel_svd_tol: float = 1e-8
    fit_window_lo: float = 1e-10
    fit_window_hi: float = 1e-2
    rate_match_rtol: float = 0.10
    zscore_max: float = 3.0


@dataclass
class McSection:
    n_paths: int = 10000
    dt: float = 1e-3
    horizon: float = 10.0
    burn_in: float = 0.0
    record_stride: int = 50
    seed: int = 2024
    integrator: str = "auto"
    initial: str = "equilibrium"  # "equilibrium" | "delta"
    x0: tuple[float, ...] = (1.0,)


@dataclass
class ValidateConfig:
    negative_control_theta_factor: float = 1.0


@dataclass
class OutputConfig:
    directory: str = "out"
    write_csv: bool = True
    write_json: bool = True
    write_plots: bool = True


@dataclass
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    basis: BasisConfig = field(default_factory=BasisConfig)
    projection: ProjectionConfig = field(default_factory=ProjectionConfig)
    time: TimeConfig = field(default_factory=TimeConfig)
    tolerances: ToleranceConfig = field(default_factory=ToleranceConfig)
    mc: McSection = field(default_factory=McSection)
    validate: ValidateConfig = field(default_factory=ValidateConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def build_model(self):
        m = self.model
        if m.variant == "ou":
            return OrnsteinUhlenbeck(theta=m.theta, sigma=m.sigma)
        if m.variant == "langevin":
            return Langevin1D(mu=m.mu, gamma=m.gamma, beta=m.beta, potential=m.potential)
        if m.variant == "general":
            drift = tuple(m.drift)
            sig = float(m.diffusion_const)
            return GeneralDiffusion1D(
                drift=lambda x, _c=drift: np.polynomial.polynomial.polyval(x, _c),
                diffusion=lambda x, _s=sig: np.full_like(np.asarray(x, float), _s),
            )
        raise ConfigError(f"model.variant: unknown variant {m.variant!r}")

    def time_grid(self) -> np.ndarray:
        t = self.time
        span = t.stop - t.start
        if span <= 0 or t.step <= 0:
            raise ConfigError("time: need stop > start and step > 0")
        n = round(span / t.step)
        if abs(n * t.step - span) > 1e-9 * span:
            raise ConfigError("time.step: grid step must divide the grid span")
        return t.start + t.step * np.arange(int(n) + 1)

    def as_flat_dict(self) -> dict[str, object]:
        out: dict[str, object] = {}
        for section_field in dc_fields(self):
            section = getattr(self, section_field.name)
            for f in dc_fields(section):
                val = getattr(section, f.name)
                if isinstance(val, tuple):
                    val = " ".join(repr(x) for x in val)
                out[f"{section_field.name}.{f.name}"] = val
        return out


def config_hash(cfg: ExperimentConfig) -> str:
    """Stable short hash of the effective configuration."""
    lines = [f"{k}={v!r}" for k, v in sorted(cfg.as_flat_dict().items())]
    return hashlib.sha256("\n".join(lines).encode()).hexdigest()[:12]


_TUPLE_FIELDS = {"potential", "drift", "x0", "observables"}
_BOOL_FIELDS = {"write_csv", "write_json", "write_plots"}


def _convert(section: str, key: str, raw: str, current):
    where = f"{section}.{key}"
    raw = raw.strip()
    try:
        if key in _TUPLE_FIELDS:
            parts = [p for chunk in raw.split(",") for p in chunk.split()]
            if key == "observables":
                return tuple(parts)
            return tuple(float(p) for p in parts)
        if key in _BOOL_FIELDS:
            low = raw.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(current, bool):
            raise ValueError("internal: unhandled bool")
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def parse_config(path: str | Path) -> ExperimentConfig:
    """Read and validate a configuration file, applying defaults."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"config syntax error in {path}: {exc}") from exc

    cfg = ExperimentConfig()
    sections = {f.name: getattr(cfg, f.name) for f in dc_fields(cfg)}
    for section_name in parser.sections():
        if section_name not in sections:
            raise ConfigError(f"unknown config section [{section_name}]")
        target = sections[section_name]
        known = {f.name for f in dc_fields(target)}
        for key, raw in parser.items(section_name):
            if key not in known:
                raise ConfigError(f"unknown key {section_name}.{key}")
            setattr(target, key, _convert(section_name, key, raw, getattr(target, key)))
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    m = cfg.model
    if m.variant not in ("ou", "langevin", "general"):
        raise ConfigError(f"model.variant: must be ou | langevin | general, got {m.variant!r}")
    positive = {
        "model.theta": m.theta, "model.sigma": m.sigma, "model.mu": m.mu,
        "model.gamma": m.gamma, "model.beta": m.beta,
        "time.step": cfg.time.step,
        "mc.dt": cfg.mc.dt, "mc.horizon": cfg.mc.horizon,
        "tolerances.re_tol": cfg.tolerances.re_tol,
        "tolerances.im_tol": cfg.tolerances.im_tol,
        "tolerances.kernel_svd_tol": cfg.tolerances.kernel_svd_tol,
        "tolerances.fit_window_lo": cfg.tolerances.fit_window_lo,
        "tolerances.fit_window_hi": cfg.tolerances.fit_window_hi,
        "tolerances.rate_match_rtol": cfg.tolerances.rate_match_rtol,
        "tolerances.zscore_max": cfg.tolerances.zscore_max,
    }
    for name, val in positive.items():
        if not val > 0:
            raise ConfigError(f"{name}: must be positive, got {val}")
    if cfg.basis.n < 2 or cfg.basis.n_q < 2 or cfg.basis.n_p < 2:
        raise ConfigError("basis: sizes must be at least 2")
    if cfg.mc.n_paths < 2:
        raise ConfigError("mc.n_paths: must be at least 2")
    if cfg.mc.burn_in < 0:
        raise ConfigError("mc.burn_in: must be nonnegative")
    if cfg.mc.seed < 0:
        raise ConfigError("mc.seed: must be a nonnegative integer")
    if cfg.mc.initial not in ("equilibrium", "delta"):
        raise ConfigError("mc.initial: must be equilibrium | delta")
    if cfg.validate.negative_control_theta_factor <= 0:
        raise ConfigError("validate.negative_control_theta_factor: must be positive")
    cfg.time_grid()  # raises on bad grid
    for token in cfg.projection.observables:
        _check_observable_token(token, m.variant)


def _check_observable_token(token: str, variant: str) -> None:
    onedim = variant in ("ou", "general")
    plain = {"x"} if onedim else {"q", "p", "p2", "q2"}
    prefixes = ("poly:",) if onedim else ("qpoly:", "ppoly:")
    if token in plain:
        return
    for pre in prefixes:
        if token.startswith(pre):
            try:
                coeffs = [float(c) for chunk in token[len(pre):].split(",") for c in chunk.split()]
            except ValueError as exc:
                raise ConfigError(f"projection.observables: bad coefficients in {token!r}") from exc
            if not coeffs:
                raise ConfigError(f"projection.observables: empty coefficients in {token!r}")
            return
    raise ConfigError(
        f"projection.observables: unknown token {token!r} for variant {variant!r} "
        f"(allowed: {sorted(plain)} or {[p + 'c0,c1,...' for p in prefixes]})"
    )


def _poly_coeffs(token: str, prefix: str) -> np.ndarray:
    return np.array(
        [float(c) for chunk in token[len(prefix):].split(",") for c in chunk.split()]
    )


def resolve_observables(cfg: ExperimentConfig):
    """Named observable tokens -> (phase-space callable, series callable) pairs.

    The phase-space callable feeds basis projection; the series callable
    evaluates the same observable on recorded Monte Carlo arrays.
    """
    variant = cfg.model.variant
    out = []
    for token in cfg.projection.observables:
        if variant in ("ou", "general"):
            if token == "x":
                fn = lambda x: x
                series = lambda s: s["x"]
            else:
                c = _poly_coeffs(token, "poly:")
                fn = lambda x, _c=c: np.polynomial.polynomial.polyval(x, _c)
                series = lambda s, _c=c: np.polynomial.polynomial.polyval(s["x"], _c)
        else:
            if token == "q":
                fn = lambda q, p: q + 0.0 * p
                series = lambda s: s["q"]
            elif token == "p":
                fn = lambda q, p: p + 0.0 * q
                series = lambda s: s["p"]
            elif token == "p2":
                fn = lambda q, p: p**2 + 0.0 * q
                series = lambda s: s["p"] ** 2
            elif token == "q2":
                fn = lambda q, p: q**2 + 0.0 * p
                series = lambda s: s["q"] ** 2
            elif token.startswith("qpoly:"):
                c = _poly_coeffs(token, "qpoly:")
                fn = lambda q, p, _c=c: np.polynomial.polynomial.polyval(q, _c) + 0.0 * p
                series = lambda s, _c=c: np.polynomial.polynomial.polyval(s["q"], _c)
            else:
                c = _poly_coeffs(token, "ppoly:")
                fn = lambda q, p, _c=c: np.polynomial.polynomial.polyval(p, _c) + 0.0 * q
                series = lambda s, _c=c: np.polynomial.polynomial.polyval(s["p"], _c)
        out.append((token, fn, series))
    return out

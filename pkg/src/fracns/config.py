"""INI run configuration: parsing, validation, serialization and problem assembly."""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field, fields
from typing import Any, Optional

import numpy as np

from .delaysolver import DelayedForce, HistorySegment, SolverConfig
from .spectral import SpectralGrid, SpectralOperator, random_field, taylor_green


class ConfigError(ValueError):
    pass


def _opt(section: str, default: Any = None, kind: type = float):
    return field(default=default, metadata={"section": section, "kind": kind})


def _parse_list(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.replace(",", " ").split())


@dataclass(frozen=True)
class RunConfig:
    """Every recognised key, grouped by INI section in the field metadata."""

    alpha: float = _opt("problem", 0.5)
    dim: int = _opt("problem", 2, int)
    n_modes: int = _opt("problem", 32, int)
    nu: float = _opt("problem", 1.0)
    delay_r: float = _opt("problem", 1.0)
    t_end: float = _opt("problem", 1.0)
    n_steps: int = _opt("problem", 100, int)
    seed: int = _opt("problem", 20240601, int)
    nonlinear: bool = _opt("problem", True, bool)
    eigenvalues: Optional[tuple[float, ...]] = _opt("problem", None, tuple)

    init_kind: str = _opt("init", "random", str)
    init_amplitude: float = _opt("init", 1.0)
    init_decay: float = _opt("init", 2.0)
    init_values: Optional[tuple[float, ...]] = _opt("init", None, tuple)

    force_kind: str = _opt("force", "none", str)
    force_kappa: float = _opt("force", 0.0)
    force_lf: Optional[float] = _opt("force", None)
    force_omega_amp: float = _opt("force", 0.0)
    force_omega_freq: float = _opt("force", 1.0)
    force_p: float = _opt("force", math.inf)

    mesh_gamma: float = _opt("mesh", 1.0)
    picard_tol: float = _opt("picard", 1e-10)
    picard_max_iters: int = _opt("picard", 50, int)
    blowup_threshold: float = _opt("blowup", 1e8)
    blowup_norm_beta: float = _opt("blowup", 0.5)
    monitor_radius: float = _opt("monitor", 1.0)
    monitor_samples: int = _opt("monitor", 200, int)
    monitor_strict: bool = _opt("monitor", False, bool)
    output_dir: str = _opt("output", "run", str)
    output_checkpoints: int = _opt("output", 4, int)
    threads: int = _opt("run", 1, int)

    def __post_init__(self) -> None:
        try:
            self.solver_config()
            if self.synthetic:
                SpectralOperator.synthetic(self.eigenvalues)
            else:
                SpectralGrid(self.dim, self.n_modes, self.nu)
            self.force()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.init_kind not in ("random", "taylor_green", "values"):
            raise ConfigError(f"init kind must be random, taylor_green or values, got {self.init_kind!r}")
        if self.synthetic:
            if self.nonlinear:
                raise ConfigError("nonlinear runs need a spectral grid; unset eigenvalues or set nonlinear = false")
            if self.init_kind != "values" or self.init_values is None:
                raise ConfigError("synthetic runs need init kind = values with one value per eigenvalue")
            if len(self.init_values) != len(self.eigenvalues):
                raise ConfigError("init values and eigenvalues differ in length")
        elif self.init_kind == "values":
            raise ConfigError("init kind = values is only valid with a synthetic eigenvalue list")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if self.monitor_samples < 100:
            raise ConfigError(f"monitor samples must be >= 100, got {self.monitor_samples}")
        if self.output_checkpoints < 0:
            raise ConfigError("output checkpoints must be >= 0")

    @property
    def synthetic(self) -> bool:
        return self.eigenvalues is not None

    # {{{ assembly

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            alpha=self.alpha,
            t_end=self.t_end,
            n_steps=self.n_steps,
            mesh_gamma=self.mesh_gamma,
            picard_tol=self.picard_tol,
            picard_max_iters=self.picard_max_iters,
            blowup_threshold=self.blowup_threshold,
            half_norm_beta=self.blowup_norm_beta,
            strict_radius=self.monitor_radius if self.monitor_strict else None,
        )

    def operator(self) -> SpectralOperator:
        if self.synthetic:
            return SpectralOperator.synthetic(self.eigenvalues)
        return SpectralOperator.stokes(SpectralGrid(self.dim, self.n_modes, self.nu))

    def force(self) -> DelayedForce:
        omega = None
        if self.force_kind == "modulated_point_delay":
            amp, freq = self.force_omega_amp, self.force_omega_freq
            omega = lambda t: 1.0 + amp * math.sin(freq * t)  # noqa: E731
        return DelayedForce(
            kind=self.force_kind,
            kappa=self.force_kappa,
            delay_r=self.delay_r,
            omega=omega,
            p_exponent=self.force_p,
            lipschitz=self.force_lf,
        )

    def initial_value(self) -> np.ndarray:
        if self.synthetic:
            return self.init_amplitude * np.asarray(self.init_values, dtype=float)
        grid = SpectralGrid(self.dim, self.n_modes, self.nu)
        if self.init_kind == "taylor_green":
            return taylor_green(grid, self.init_amplitude).coeffs
        rng = np.random.default_rng(self.seed)
        u = random_field(grid, self.init_decay, rng).coeffs
        norm = float(np.sqrt(np.sum(np.abs(u) ** 2)))
        return self.init_amplitude * u / norm

    def history(self) -> HistorySegment:
        """Constant history equal to the initial value."""
        return HistorySegment.constant(self.delay_r, self.initial_value())

    # }}}

    # {{{ INI round trip

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        for f in fields(self):
            sec = f.metadata["section"]
            key = f.name[len(sec) + 1 :] if f.name.startswith(sec + "_") else f.name
            val = getattr(self, f.name)
            if val is None:
                continue
            if not cp.has_section(sec):
                cp.add_section(sec)
            cp.set(sec, key, _format(val))
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str, **overrides: Any) -> RunConfig:
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}") from None
        known: dict[tuple[str, str], Any] = {}
        for f in fields(cls):
            sec = f.metadata["section"]
            key = f.name[len(sec) + 1 :] if f.name.startswith(sec + "_") else f.name
            known[(sec, key)] = f
        kwargs: dict[str, Any] = {}
        for sec in cp.sections():
            for key, raw in cp.items(sec):
                f = known.get((sec, key))
                if f is None:
                    raise ConfigError(f"unknown key {key!r} in section [{sec}]")
                kwargs[f.name] = _coerce(f.metadata["kind"], raw, f"{sec}.{key}")
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path, **overrides: Any) -> RunConfig:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.from_ini(text, **overrides)

    def as_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    # }}}


def _format(val: Any) -> str:
    if isinstance(val, bool):
        return "true" if val else "false"
    if isinstance(val, float):
        return repr(val)
    if isinstance(val, tuple):
        return ", ".join(repr(float(v)) for v in val)
    return str(val)


def _coerce(kind: type, raw: str, name: str) -> Any:
    raw = raw.strip()
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is tuple:
            return _parse_list(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{name}: cannot read {raw!r} as {kind.__name__}") from None

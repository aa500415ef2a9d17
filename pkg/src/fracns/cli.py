"""Command-line entry point: ``fracns solve | verify | convergence``.

Exit status: 0 success, 1 configuration or operational failure, 2 the blow-up
monitor halted the run, 3 a verification check failed.
"""

from __future__ import annotations

import argparse
import json
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import mpmath
import numpy as np
import scipy
from scipy import fft as sfft

from . import __version__
from .analysis import ConvergenceProblem, ReferenceFailure, estimate_bilinear_constants, run_convergence_study
from .config import ConfigError, RunConfig
from .delaysolver import (
    BallExitError,
    HistoryGapError,
    MonitorConstants,
    PicardError,
    RunState,
    b3_constant,
    solve,
    write_trajectory_csv,
)
from .spectral import SpectralField, write_field, write_spectrum_csv
from .suites import SUITES, run_suites

EXIT_OK, EXIT_ERROR, EXIT_BLOWUP, EXIT_VERIFY = 0, 1, 2, 3


@dataclass
class RunManifest:
    command: str
    seed: int
    threads: int
    config: dict[str, Any] = field(default_factory=dict)
    config_text: str = ""
    versions: dict[str, str] = field(default_factory=dict)
    constants: dict[str, float] = field(default_factory=dict)
    monitors: dict[str, Any] = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)

    def write(self, directory: Path) -> Path:
        path = directory / "manifest.json"
        with open(path, "w") as fh:
            json.dump(self.__dict__, fh, indent=2, sort_keys=True, default=_jsonable)
            fh.write("\n")
        return path


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, tuple):
        return list(obj)
    return str(obj)


def _versions() -> dict[str, str]:
    return {
        "fracns": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "mpmath": mpmath.__version__,
        "python": platform.python_version(),
    }


def _finite(x: float) -> Optional[float]:
    return float(x) if np.isfinite(x) else None


def _load(args: argparse.Namespace) -> RunConfig:
    overrides = {"seed": args.seed, "threads": args.threads, "output_dir": args.output}
    return RunConfig.from_file(args.config, **overrides)


def _monitor_constants(cfg: RunConfig) -> MonitorConstants:
    c1 = 0.0
    if cfg.nonlinear:
        grid = cfg.operator().grid
        c1 = estimate_bilinear_constants(grid, n_samples=cfg.monitor_samples, seed=cfg.seed).c1
    return MonitorConstants(c1=c1, B3=b3_constant(cfg.alpha), radius=cfg.monitor_radius)


def cmd_solve(args: argparse.Namespace) -> int:
    cfg = _load(args)
    with sfft.set_workers(cfg.threads):
        return _solve(cfg)


def _solve(cfg: RunConfig) -> int:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    t_start = time.perf_counter()
    op = cfg.operator()
    consts = _monitor_constants(cfg)
    t_consts = time.perf_counter() - t_start
    manifest = RunManifest("solve", cfg.seed, cfg.threads, cfg.as_dict(), cfg.to_ini(), _versions())
    manifest.constants = {"c1": consts.c1, "B3": consts.B3, "R": consts.radius}

    marks = set()
    if cfg.output_checkpoints > 0:
        marks = {int(round(k * cfg.n_steps / cfg.output_checkpoints)) for k in range(1, cfg.output_checkpoints + 1)}

    def checkpoint(state: RunState) -> None:
        if state.step in marks and op.grid is not None:
            path = out / f"field_{state.step:06d}.bin"
            write_field(path, SpectralField(op.grid, state.history.current))
            manifest.outputs.append(str(path))

    try:
        state = solve(
            op,
            cfg.solver_config(),
            cfg.history(),
            cfg.force(),
            nonlinear=cfg.nonlinear,
            constants=consts,
            callback=checkpoint,
        )
    except (PicardError, BallExitError, HistoryGapError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    t_run = time.perf_counter() - t_start - t_consts

    traj = out / "trajectory.csv"
    write_trajectory_csv(traj, state)
    manifest.outputs.insert(0, str(traj))
    if op.grid is not None:
        spec = out / "spectrum_final.csv"
        write_spectrum_csv(spec, SpectralField(op.grid, state.history.current))
        manifest.outputs.append(str(spec))
    manifest.monitors = {
        "verdict": state.verdict.status,
        "t_max": state.verdict.t_max,
        "t_reached": state.t,
        "max_M": _finite(max(state.contraction_M)),
        "max_panel_ratio": _finite(max(state.panel_ratio)),
        "max_picard_ratio": _finite(max(state.picard_ratio)),
        "max_picard_iters": int(max(state.picard_iters)),
        "norm_half_initial": state.norm_half[0],
        "norm_half_final": _finite(state.norm_half[-1]),
        "M_warning": state.warned_M,
    }
    manifest.timings = {"constants_s": t_consts, "solve_s": t_run}
    manifest.write(out)
    if state.verdict.status == "halt":
        print(f"blow-up monitor halted the run at t={state.t:.6g}; t_max ~ {state.verdict.t_max:.6g}")
        return EXIT_BLOWUP
    print(f"completed t_end={cfg.t_end:g} in {cfg.n_steps} steps; output in {out}")
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    out = Path(args.output or "verify")
    seed = 20240601 if args.seed is None else args.seed
    t0 = time.perf_counter()
    with sfft.set_workers(args.threads or 1):
        checks = run_suites(names, out, seed)
    failed = [c for c in checks if not c.passed]
    for c in checks:
        status = "PASS" if c.passed else "FAIL"
        print(f"{status} {c.suite}.{c.name} value={c.value:.3e} limit={c.limit:.3e}")
    print(f"{len(checks) - len(failed)} passed, {len(failed)} failed")
    manifest = RunManifest("verify", seed, args.threads or 1, {"suite": args.suite}, versions=_versions())
    manifest.outputs = sorted(str(p) for p in out.glob("*.csv"))
    manifest.monitors = {"passed": len(checks) - len(failed), "failed": [f"{c.suite}.{c.name}" for c in failed]}
    manifest.timings = {"verify_s": time.perf_counter() - t0}
    manifest.write(out)
    return EXIT_VERIFY if failed else EXIT_OK


def _ladder(text: Optional[str], n_steps: int) -> list[int]:
    if text is None:
        return [n_steps * 2**k for k in range(4)]
    try:
        return [int(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"ladder must be a list of integers, got {text!r}") from None


def cmd_convergence(args: argparse.Namespace) -> int:
    cfg = _load(args)
    with sfft.set_workers(cfg.threads):
        return _convergence(cfg, args.ladder)


def _convergence(cfg: RunConfig, ladder_text: Optional[str]) -> int:
    out = Path(cfg.output_dir)
    try:
        ladder = _ladder(ladder_text, cfg.n_steps)
        problem = ConvergenceProblem(cfg.operator(), cfg.solver_config(), cfg.history(), cfg.force(), cfg.nonlinear)
        t0 = time.perf_counter()
        rep = run_convergence_study(problem, ladder)
    except (ValueError, ReferenceFailure, PicardError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out.mkdir(parents=True, exist_ok=True)
    path = out / "convergence.csv"
    rep.write_csv(path)
    manifest = RunManifest("convergence", cfg.seed, cfg.threads, cfg.as_dict(), cfg.to_ini(), _versions())
    manifest.outputs = [str(path)]
    manifest.monitors = {
        "ladder": ladder,
        "reference_steps": rep.reference_steps,
        "order": _finite(rep.order),
        "exact": rep.exact,
        "monotone": rep.monotone,
    }
    manifest.timings = {"convergence_s": time.perf_counter() - t0}
    manifest.write(out)
    flag = "exact" if rep.exact else f"order {rep.order:.3f}"
    print(f"errors {', '.join(f'{e:.3e}' for e in rep.errors)}; {flag}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracns", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp: argparse.ArgumentParser, needs_config: bool) -> None:
        if needs_config:
            sp.add_argument("--config", required=True, metavar="PATH", help="INI run configuration")
        sp.add_argument("--output", metavar="DIR", help="output directory (overrides [output] dir)")
        sp.add_argument("--seed", type=int, metavar="N", help="random seed (overrides [problem] seed)")
        sp.add_argument("--threads", type=int, metavar="N", help="FFT worker threads")

    sp = sub.add_parser("solve", help="run the delay solver")
    common(sp, True)
    sp.set_defaults(func=cmd_solve)
    sp = sub.add_parser("verify", help="run self-check suites")
    common(sp, False)
    sp.add_argument("--suite", default="all", choices=list(SUITES) + ["all"], metavar="NAME")
    sp.set_defaults(func=cmd_verify)
    sp = sub.add_parser("convergence", help="self-convergence study over a doubling mesh ladder")
    common(sp, True)
    sp.add_argument("--ladder", metavar="N,N,...", help="step counts, each double the previous")
    sp.set_defaults(func=cmd_convergence)
    return p


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_ERROR
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

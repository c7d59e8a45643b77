"""Command line front end: ``carleman {kinetic,diffusion,sweep,audit,steady}``.

Exit codes: 0 success, 1 validation error, 2 numerical abort, 3 failed
acceptance flags (sweep) or failed property checks (audit).
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import logging
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .core import BoundaryData, BoundaryFunction, Grid1D, InitialData, validate_admissible
from .diffusion import DiffusionConfig, NewtonOptions, solve, steady_state
from .diffusion import write_snapshot as write_rho_snapshot
from .harness import SweepConfig, property_audit, run_sweep
from .kinetic import KineticConfig, NumericalAbort, run, write_snapshot

log = logging.getLogger("carleman")

EXIT_OK, EXIT_INVALID, EXIT_ABORT, EXIT_FLAGS = 0, 1, 2, 3

_DECIMAL = re.compile(r"^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")
_INTEGER = re.compile(r"^[+-]?\d+$")


class ConfigError(ValueError):
    pass


def _real(s: str) -> float:
    if not _DECIMAL.match(s):
        raise ValueError(f"not a decimal literal: {s!r}")
    return float(s)


def _int(s: str) -> int:
    if not _INTEGER.match(s):
        raise ValueError(f"not an integer literal: {s!r}")
    return int(s)


def _reals(s: str) -> tuple:
    parts = [p.strip() for p in s.split(",")]
    if not parts or any(not p for p in parts):
        raise ValueError(f"empty entry in list {s!r}")
    return tuple(_real(p) for p in parts)


def _word(s: str) -> str:
    if not s:
        raise ValueError("empty value")
    return s


_SIDE_KEYS = {"kind": _word, "a": _real, "b": _real, "omega": _real}

KEYS = {
    "alpha": _real,
    "epsilon": _real,
    "epsilons": _reals,
    "nx": _int,
    "cfl": _real,
    "t_end": _real,
    "dt_par": _real,
    **{f"bc.{side}.{k}": f for side in ("left", "right") for k, f in _SIDE_KEYS.items()},
    "init.kind": _word,
    "init.file": _word,
    "init.u": _real,
    "init.v": _real,
    "init.u_right": _real,
    "init.v_right": _real,
    "init.x0": _real,
    "init.amp": _real,
    "init.width": _real,
    "init.seed": _int,
    "init.low": _real,
    "init.high": _real,
    "window.t_start_frac": _real,
    "window.delta": _real,
    "ledger.betas": _reals,
    "output.stride": _int,
    "output.samples": _int,
    "output.snapshot_stride": _int,
    "newton.max_iter": _int,
    "newton.tol": _real,
    "newton.damping": _real,
    "diffusion.refine": _int,
}

REQUIRED = ("alpha", "nx", "t_end", "bc.left.kind", "bc.left.a", "bc.right.kind", "bc.right.a")


@dataclass
class RunConfig:
    """Typed view of a parsed config file; unset optional keys use documented defaults."""

    values: dict
    lines: dict = field(default_factory=dict)  # key -> line number
    source: str = ""

    def get(self, key, default=None):
        return self.values.get(key, default)

    def require(self, key):
        if key not in self.values:
            raise ConfigError(f"{self.source}: missing required key {key!r}")
        return self.values[key]

    @property
    def alpha(self) -> float:
        return self.require("alpha")

    @property
    def grid(self) -> Grid1D:
        return Grid1D(self.require("nx"))

    @property
    def t_end(self) -> float:
        return self.require("t_end")

    @property
    def epsilons(self) -> tuple:
        if "epsilons" in self.values:
            return self.values["epsilons"]
        if "epsilon" in self.values:
            return (self.values["epsilon"],)
        raise ConfigError(f"{self.source}: missing required key 'epsilon' (or 'epsilons')")

    @property
    def epsilon(self) -> float:
        if "epsilon" in self.values:
            return self.values["epsilon"]
        eps = self.epsilons
        if len(eps) != 1:
            raise ConfigError(f"{self.source}: a single run needs 'epsilon', got list {eps}")
        return eps[0]

    def _side(self, side: str) -> BoundaryFunction:
        kind = self.require(f"bc.{side}.kind")
        a = self.require(f"bc.{side}.a")
        b = self.get(f"bc.{side}.b", 0.0)
        omega = self.get(f"bc.{side}.omega", 0.0)
        try:
            return BoundaryFunction(kind, a, b, omega)
        except ValueError as exc:
            raise ConfigError(f"{self._where(f'bc.{side}.kind')}: {exc}") from None

    def boundary(self) -> BoundaryData:
        return BoundaryData(self._side("left"), self._side("right"), self.t_end)

    def initial(self, grid: Grid1D) -> InitialData:
        if "init.file" in self.values:
            path = Path(self.values["init.file"])
            if not path.is_absolute() and self.source:
                path = Path(self.source).parent / path
            return InitialData.from_file(path, grid.nx)
        kind = self.get("init.kind", "constant")
        params = {k[5:]: v for k, v in self.values.items() if k.startswith("init.") and k not in ("init.kind", "init.file")}
        try:
            return InitialData.preset(kind, grid, **params)
        except ValueError as exc:
            raise ConfigError(f"{self._where('init.kind')}: {exc}") from None

    def newton(self) -> NewtonOptions:
        d = NewtonOptions()
        return NewtonOptions(
            max_iter=self.get("newton.max_iter", d.max_iter),
            tol=self.get("newton.tol", d.tol),
            damping=self.get("newton.damping", d.damping),
        )

    def _where(self, key):
        line = self.lines.get(key)
        return f"{self.source}:{line}" if line else self.source

    def echo(self) -> str:
        return "\n".join(f"{k}={_echo(v)}" for k, v in sorted(self.values.items()))


def _echo(v) -> str:
    if isinstance(v, tuple):
        return ",".join(repr(x) for x in v)
    return repr(v) if isinstance(v, float) else str(v)


def parse_config(path) -> RunConfig:
    """Parse a flat ``key=value`` file; ``#`` starts a comment."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: no such config file")
    values, lines = {}, {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = KEYS[key](val)
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from None
        lines[key] = lineno
    cfg = RunConfig(values, lines, str(path))
    for key in REQUIRED:
        cfg.require(key)
    if not (-1.0 <= cfg.alpha <= 1.0):
        raise ConfigError(f"{path}:{lines['alpha']}: alpha={cfg.alpha:g} violates alpha in [-1, 1]")
    if "init.file" in values and "init.kind" in values:
        raise ConfigError(f"{path}:{lines['init.file']}: give either init.kind or init.file, not both")
    bc = cfg.boundary()
    for side, f in (("left", bc.phi_minus), ("right", bc.phi_plus)):
        msg = f.positivity_violation(bc.T)
        if msg:
            raise ConfigError(f"{cfg._where(f'bc.{side}.kind')}: positivity of phi violated: {msg}")
    return cfg


# ---------------------------------------------------------------------------
# subcommands


def _kinetic(args, cfg: RunConfig, out: Path) -> int:
    grid = cfg.grid
    bc = cfg.boundary()
    init = cfg.initial(grid)
    report = validate_admissible(bc, init, cfg.alpha)
    if not report.ok:
        raise ConfigError(str(report))
    stride = args.stride or cfg.get("output.stride", 100)
    kc = KineticConfig(
        alpha=cfg.alpha,
        epsilon=cfg.epsilon,
        grid=grid,
        bc=bc,
        init=init,
        t_end=cfg.t_end,
        cfl=cfg.get("cfl", 1.0),
        ledger_betas=cfg.get("ledger.betas", (cfg.alpha,)),
        stride=stride,
    )
    kc.snapshot_stride = cfg.get("output.snapshot_stride") or kc.n_steps
    res = run(kc)
    for k, st in res.snapshots:
        write_snapshot(out / f"fields_{k:08d}.csv", grid, st, kc.epsilon)
    for b, ledger in res.ledgers.items():
        ledger.write_csv(out / f"ledger_beta_{b:+.2f}.csv")
    print(
        f"kinetic alpha={kc.alpha:g} eps={kc.epsilon:g}: {res.n_steps} steps, "
        f"mass balance error {res.mass_balance_error:.3e}"
    )
    return EXIT_OK


def _diffusion(args, cfg: RunConfig, out: Path) -> int:
    grid = cfg.grid
    bc = cfg.boundary()
    init = cfg.initial(grid)
    stride = args.stride or cfg.get("output.stride", 100)
    dc = DiffusionConfig(
        alpha=cfg.alpha,
        grid=grid,
        dt_par=cfg.get("dt_par", 1e-4),
        t_end=cfg.t_end,
        bc=bc,
        rho0=init.rho0,
        newton=cfg.newton(),
        record_every=stride,
    )
    res = solve(dc)
    n = len(res.newton_iterations)
    steps = [min(i * stride, n) for i in range(len(res.times))]
    for k, rho in zip(steps, res.rho):
        write_rho_snapshot(out / f"fields_{k:08d}.csv", grid, rho)
    print(f"diffusion alpha={dc.alpha:g}: {n} steps, max Newton iterations {max(res.newton_iterations, default=0)}")
    return EXIT_OK


def _sweep(args, cfg: RunConfig, out: Path) -> int:
    grid = cfg.grid
    sc = SweepConfig(
        alpha=cfg.alpha,
        bc=cfg.boundary(),
        init=cfg.initial(grid),
        t_end=cfg.t_end,
        epsilons=cfg.epsilons,
        grid=grid,
        cfl=cfg.get("cfl", 1.0),
        ref_refine=cfg.get("diffusion.refine", 2),
        dt_par=cfg.get("dt_par"),
        t_start_frac=cfg.get("window.t_start_frac", 0.05),
        delta=cfg.get("window.delta", 0.0),
        ledger_betas=cfg.get("ledger.betas"),
        n_samples=cfg.get("output.samples", 200),
        newton=cfg.newton(),
    )
    report = validate_admissible(sc.bc, sc.init, sc.alpha)
    if not report.ok:
        raise ConfigError(str(report))
    if args.stride:
        sc.n_samples = max(1, int(round(sc.t_end / (sc.cfl * sc.epsilons[-1] * grid.dx) / args.stride)))
    rep = run_sweep(sc, jobs=args.jobs)
    rep.write(out)
    for r in rep.rows:
        if r.failure:
            print(f"eps={r.epsilon:g}: FAILED {r.failure}")
        else:
            print(f"eps={r.epsilon:g}: l2_err={r.l2_err:.4e} boundary=({r.boundary_err_left:.3e}, {r.boundary_err_right:.3e})")
    flags = rep.flags()
    for name, ok in flags.items():
        print(f"{name}: {'true' if ok else 'false'}")
    if rep.failed:
        return EXIT_ABORT
    return EXIT_OK if all(flags.values()) else EXIT_FLAGS


def _audit(args, cfg, out: Path) -> int:
    t0 = time.perf_counter()
    counts = property_audit(seed=args.seed)
    with open(out / "properties.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("check", "passed", "total"))
        for name, (p, n) in counts.items():
            w.writerow((name, p, n))
    for name, (p, n) in counts.items():
        print(f"{name}: {p}/{n} passed")
    log.info("audit took %.2f s", time.perf_counter() - t0)
    return EXIT_OK if all(p == n for p, n in counts.values()) else EXIT_FLAGS


def _steady(args, cfg: RunConfig | None, out: Path) -> int:
    if cfg is not None:
        bc = cfg.boundary()
        if not bc.is_constant:
            raise ConfigError("steady needs constant boundary data")
        alphas = (cfg.alpha,)
        left, right = bc.phi_minus.a, bc.phi_plus.a
    else:
        alphas = (-1.0, -0.5, 0.0, 0.5, 1.0)
        left, right = 1.0, 2.0
    xs = np.linspace(0.0, 1.0, 11)
    table = np.array([steady_state(a, left, right, xs) for a in alphas])
    with open(out / "steady.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("x", *(f"alpha={a:g}" for a in alphas)))
        for i, x in enumerate(xs):
            w.writerow((repr(float(x)), *(repr(float(v)) for v in table[:, i])))
    print(f"steady states for phi- = {left:g}, phi+ = {right:g}")
    print("   x  " + "".join(f"{f'alpha={a:g}':>12}" for a in alphas))
    for i, x in enumerate(xs):
        print(f"{x:5.2f} " + "".join(f"{v:12.6f}" for v in table[:, i]))
    return EXIT_OK


COMMANDS = {"kinetic": _kinetic, "diffusion": _diffusion, "sweep": _sweep, "audit": _audit, "steady": _steady}
NEEDS_CONFIG = ("kinetic", "diffusion", "sweep")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="carleman", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, required=name in NEEDS_CONFIG)
        s.add_argument("--out", type=Path, default=None, help="run directory (default runs/<timestamp>)")
        s.add_argument("--jobs", type=int, default=1)
        s.add_argument("--seed", type=int, default=42)
        s.add_argument("--stride", type=int, default=None)
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def _write_manifest(out: Path, args, cfg, start: float, end: float, status: int, message: str) -> None:
    fmt = "%Y-%m-%dT%H:%M:%S"
    lines = [
        f"subcommand={args.command}",
        f"version={__version__}",
        f"start={_dt.datetime.fromtimestamp(start).strftime(fmt)}",
        f"end={_dt.datetime.fromtimestamp(end).strftime(fmt)}",
        f"exit_status={status}",
        f"seed={args.seed}",
        f"jobs={args.jobs}",
        f"stride={args.stride}",
        f"config_path={args.config}",
    ]
    if message:
        lines.append(f"message={message}")
    lines.append("[config]")
    if cfg is not None:
        lines.append(cfg.echo())
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    if args.stride is not None and args.stride < 1:
        print("error: --stride must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    out = args.out or Path("runs") / _dt.datetime.now().strftime("%Y%m%d-%H%M%S")
    out.mkdir(parents=True, exist_ok=True)
    start = time.time()
    cfg = None
    status, message = EXIT_INVALID, ""
    try:
        if args.config is not None:
            cfg = parse_config(args.config)
        status = COMMANDS[args.command](args, cfg, out)
    except NumericalAbort as exc:
        status, message = EXIT_ABORT, f"numerical abort: {exc}"
    except (ConfigError, ValueError) as exc:
        status, message = EXIT_INVALID, f"invalid input: {exc}"
    except OSError as exc:
        status, message = EXIT_INVALID, f"i/o error: {exc}"
    finally:
        _write_manifest(out, args, cfg, start, time.time(), status, message)
    if message:
        print(f"error: {message}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())

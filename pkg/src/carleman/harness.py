"""Epsilon sweeps, convergence metrics, bound audits and property suites."""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .core import BoundaryData, EntropyParams, Grid1D, InitialData, KineticState
from .diffusion import DiffusionConfig, NewtonOptions, solve
from .entropy import (
    CUMULATIVE_NAMES,
    Profile,
    big_phi,
    coercivity_constant,
    dphi,
    phi,
    phi_dual,
    production_integrand,
    relative_entropy,
)
from .kinetic import KineticConfig, NumericalAbort, run

__all__ = [
    "SweepConfig",
    "SweepRow",
    "ConvergenceReport",
    "Window",
    "space_time_l2",
    "boundary_trace_error",
    "resample",
    "restrict",
    "heat_oracle",
    "bound_audit",
    "run_sweep",
    "entropy_tolerance",
    "brute_force_dual",
    "property_audit",
]

log = logging.getLogger(__name__)

UNIFORM_RATIO = 2.0
TEST_BETAS = (-1.0, -0.5, 0.0, 0.5, 1.0)


@dataclass(frozen=True)
class Window:
    t_start: float
    t_end: float
    delta: float = 0.0


def restrict(rho: np.ndarray, factor: int) -> np.ndarray:
    """Average groups of ``factor`` neighbouring cells (last axis)."""
    if factor == 1:
        return rho
    shape = rho.shape[:-1] + (rho.shape[-1] // factor, factor)
    return rho.reshape(shape).mean(axis=-1)


def resample(times_src, series_src, times_dst) -> np.ndarray:
    """Linear interpolation in time of a (n_times, nx) series."""
    times_src = np.asarray(times_src)
    idx = np.searchsorted(times_src, times_dst).clip(1, len(times_src) - 1)
    t0, t1 = times_src[idx - 1], times_src[idx]
    w = np.clip((np.asarray(times_dst) - t0) / (t1 - t0), 0.0, 1.0)[:, None]
    return (1.0 - w) * series_src[idx - 1] + w * series_src[idx]


def space_time_l2(series_a, series_b, times, grid: Grid1D, window: Window) -> float:
    """sqrt of the (trapezoid in t) x (midpoint in x) integral of (a - b)^2 over the window."""
    a = np.asarray(series_a, dtype=float)
    b = np.asarray(series_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"series shapes differ: {a.shape} vs {b.shape}")
    if a.shape[-1] != grid.nx:
        raise ValueError(f"series have {a.shape[-1]} cells, grid has {grid.nx}")
    times = np.asarray(times, dtype=float)
    tm = (times >= window.t_start - 1e-12) & (times <= window.t_end + 1e-12)
    x = grid.x
    xm = (x >= window.delta) & (x <= 1.0 - window.delta)
    diff2 = ((a[tm][:, xm] - b[tm][:, xm]) ** 2).sum(axis=1) * grid.dx
    if tm.sum() < 2:
        return math.sqrt(float(diff2.sum()) * 0.0) if tm.sum() == 0 else 0.0
    return math.sqrt(float(np.trapezoid(diff2, times[tm])))


def boundary_trace_error(times, trace, target, window: Window) -> float:
    times = np.asarray(times)
    tm = (times >= window.t_start - 1e-12) & (times <= window.t_end + 1e-12)
    d2 = (np.asarray(trace)[tm] - np.asarray(target)[tm]) ** 2
    return math.sqrt(float(np.trapezoid(d2, times[tm]))) if tm.sum() >= 2 else 0.0


def heat_oracle(bc_left: float, bc_right: float, rho0, grid: Grid1D, t: float, modes: int = 64) -> np.ndarray:
    """Sine-series solution of rho_t = rho_xx / 2 with constant Dirichlet values.

    ``bc_left``/``bc_right`` are the density values at the walls.  Sine
    coefficients of the initial deviation are midpoint sums on ``grid``.
    """
    if modes < 32:
        raise ValueError("modes must be >= 32")
    x = grid.x
    steady = bc_left * (1.0 - x) + bc_right * x
    w0 = np.asarray(rho0, dtype=float) - steady
    k = np.arange(1, modes + 1)
    S = np.sin(np.pi * np.outer(k, x))
    coef = 2.0 * (S @ w0) * grid.dx
    decay = np.exp(-0.5 * (k * np.pi) ** 2 * t)
    return steady + (coef * decay) @ S


def bound_audit(cumulatives: list[dict]) -> list[tuple[str, float, bool]]:
    """max/min ratio across the sweep of each cumulative integral; uniform iff ratio < 2."""
    table = []
    for name in CUMULATIVE_NAMES:
        vals = np.array([c[name] for c in cumulatives], dtype=float)
        vmax, vmin = float(np.max(vals)), float(np.min(vals))
        if vmax == 0.0:
            ratio = 1.0
        elif vmin <= 0.0:
            ratio = math.inf
        else:
            ratio = vmax / vmin
        table.append((name, ratio, bool(ratio < UNIFORM_RATIO)))
    return table


def entropy_tolerance(dx: float, dt: float) -> float:
    return 10.0 * (dx + dt)


# ---------------------------------------------------------------------------
# sweeps


@dataclass
class SweepConfig:
    alpha: float
    bc: BoundaryData
    init: InitialData
    t_end: float
    epsilons: tuple
    grid: Grid1D
    cfl: float = 1.0
    ref_refine: int = 2
    dt_par: float | None = None
    t_start_frac: float = 0.05
    delta: float = 0.0
    ledger_betas: tuple | None = None
    n_samples: int = 200
    newton: NewtonOptions = field(default_factory=NewtonOptions)
    gamma: float | None = None
    relaxation: bool = True

    def __post_init__(self):
        eps = tuple(float(e) for e in self.epsilons)
        if not eps or any(e <= 0 for e in eps):
            raise ValueError("epsilon list must be nonempty and positive")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError(f"epsilon list must be strictly decreasing, got {eps}")
        self.epsilons = eps
        if not (0.0 <= self.t_start_frac < 1.0):
            raise ValueError("t_start_frac must lie in [0, 1)")
        if not (0.0 <= self.delta < 0.5):
            raise ValueError("delta must lie in [0, 0.5)")
        if int(self.ref_refine) < 1:
            raise ValueError("ref_refine must be >= 1")

    @property
    def betas(self) -> tuple:
        if self.ledger_betas is None:
            return tuple(dict.fromkeys((float(self.alpha), 0.0)))
        return tuple(float(b) for b in self.ledger_betas)

    @property
    def window(self) -> Window:
        return Window(self.t_start_frac * self.t_end, self.t_end, self.delta)

    def kinetic_config(self, eps: float) -> KineticConfig:
        dt = self.cfl * eps * self.grid.dx
        stride = max(1, int(self.t_end / dt) // self.n_samples)
        return KineticConfig(
            alpha=self.alpha,
            epsilon=eps,
            grid=self.grid,
            bc=self.bc,
            init=self.init,
            t_end=self.t_end,
            cfl=self.cfl,
            ledger_betas=self.betas,
            stride=stride,
            gamma=self.gamma,
            relaxation=self.relaxation,
        )

    def diffusion_config(self) -> DiffusionConfig:
        ref_grid = Grid1D(self.grid.nx * self.ref_refine)
        dt_cap = min(self.epsilons) * self.grid.dx
        dt_par = dt_cap if self.dt_par is None else min(self.dt_par, dt_cap)
        return DiffusionConfig(
            alpha=self.alpha,
            grid=ref_grid,
            dt_par=dt_par,
            t_end=self.t_end,
            bc=self.bc,
            rho0=np.repeat(self.init.rho0, self.ref_refine),
            newton=self.newton,
        )


@dataclass
class SweepRow:
    epsilon: float
    l2_err: float = math.nan
    boundary_err_left: float = math.nan
    boundary_err_right: float = math.nan
    cumulative: dict = field(default_factory=dict)
    entropy: dict = field(default_factory=dict)  # beta -> (fraction ok, max normalized, tol)
    coercivity_gap: float = math.nan
    mass_balance_rel: float = math.nan
    failure: str | None = None


@dataclass
class ConvergenceReport:
    alpha: float
    rows: list
    audit: list
    reference_failure: str | None = None

    def _errs(self, attr):
        return [getattr(r, attr) for r in self.rows]

    @staticmethod
    def _strictly_decreasing(vals) -> bool:
        return all(math.isfinite(v) for v in vals) and all(b < a for a, b in zip(vals, vals[1:]))

    @property
    def failed(self) -> bool:
        return self.reference_failure is not None or any(r.failure for r in self.rows)

    @property
    def l2_decreasing(self) -> bool:
        return self._strictly_decreasing(self._errs("l2_err"))

    @property
    def l2_halved(self) -> bool:
        e = self._errs("l2_err")
        return math.isfinite(e[0]) and math.isfinite(e[-1]) and e[-1] <= 0.5 * e[0]

    @property
    def boundary_decreasing(self) -> bool:
        return self._strictly_decreasing(self._errs("boundary_err_left")) and self._strictly_decreasing(
            self._errs("boundary_err_right")
        )

    @property
    def uniform(self) -> bool:
        return all(flag for _, _, flag in self.audit)

    @property
    def entropy_ok(self) -> bool:
        for r in self.rows:
            for frac, worst, tol in r.entropy.values():
                if frac < 0.99 or worst > 10.0 * tol:
                    return False
        return bool(self.rows)

    def flags(self) -> dict:
        return {
            "l2_decreasing": self.l2_decreasing,
            "l2_halved": self.l2_halved,
            "boundary_decreasing": self.boundary_decreasing,
            "uniform": self.uniform,
            "entropy_ok": self.entropy_ok,
            "no_failures": not self.failed,
        }

    def uniform_flags(self) -> str:
        return "|".join(f"{name}={'true' if ok else 'false'}" for name, _, ok in self.audit)

    def write(self, out_dir) -> None:
        from pathlib import Path

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "convergence.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(
                ("epsilon", "l2_err", "boundary_err_left", "boundary_err_right", *CUMULATIVE_NAMES, "uniform_flags")
            )
            for r in self.rows:
                cum = [r.cumulative.get(k, math.nan) for k in CUMULATIVE_NAMES]
                status = self.uniform_flags() if not r.failure else f"FAILED: {r.failure}"
                w.writerow(
                    (
                        _f(r.epsilon),
                        _f(r.l2_err),
                        _f(r.boundary_err_left),
                        _f(r.boundary_err_right),
                        *map(_f, cum),
                        status,
                    )
                )
        with open(out / "audit.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("integral_name", "max_over_min_ratio", "uniform"))
            for name, ratio, ok in self.audit:
                w.writerow((name, _f(ratio), "true" if ok else "false"))


def _f(v) -> str:
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(v)


def _kinetic_job(args):
    cfg, eps = args
    try:
        return eps, run(cfg.kinetic_config(eps)), None
    except (NumericalAbort, ValueError, AssertionError) as exc:
        return eps, None, str(exc)


def _evaluate_row(cfg: SweepConfig, eps: float, res, ref_times, ref_rho) -> SweepRow:
    row = SweepRow(eps)
    grid = cfg.grid
    win = cfg.window
    ts = res.sample_times
    ref = resample(ref_times, ref_rho, ts)
    row.l2_err = space_time_l2(res.rho_samples, ref, ts, grid, win)
    lo = 2.0 * cfg.bc.phi_minus.value(ts)
    hi = 2.0 * cfg.bc.phi_plus.value(ts)
    row.boundary_err_left = boundary_trace_error(ts, res.rho_samples[:, 0], lo, win)
    row.boundary_err_right = boundary_trace_error(ts, res.rho_samples[:, -1], hi, win)
    row.cumulative = dict(res.cumulative)
    tol = entropy_tolerance(grid.dx, res.config.dt)
    for b, ledger in res.ledgers.items():
        norm = np.array(ledger.normalized)
        frac = float(np.mean(norm <= tol)) if norm.size else 1.0
        worst = float(np.max(norm)) if norm.size else -math.inf
        row.entropy[b] = (frac, worst, tol)
    row.coercivity_gap = res.coercivity_gap
    scale = max(abs(res.mass_initial), abs(res.mass_final), 1.0)
    row.mass_balance_rel = res.mass_balance_error / scale
    return row


def run_sweep(cfg: SweepConfig, jobs: int = 1, keep_results: bool = False) -> ConvergenceReport:
    """One diffusion reference plus one kinetic run per epsilon, compared on the kinetic grid."""
    try:
        ref = solve(cfg.diffusion_config())
        ref_rho = restrict(ref.rho, cfg.ref_refine)
        ref_times = ref.times
        ref_failure = None
    except (NumericalAbort, ValueError) as exc:
        ref_failure = str(exc)

    tasks = [(cfg, e) for e in cfg.epsilons]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_kinetic_job, tasks))
    else:
        outcomes = [_kinetic_job(t) for t in tasks]

    rows = []
    results = {}
    for eps, res, err in outcomes:
        if err is not None or ref_failure is not None:
            rows.append(SweepRow(eps, failure=err or f"reference: {ref_failure}"))
            continue
        rows.append(_evaluate_row(cfg, eps, res, ref_times, ref_rho))
        if keep_results:
            results[eps] = res
    good = [r.cumulative for r in rows if not r.failure]
    audit = bound_audit(good) if good else [(n, math.nan, False) for n in CUMULATIVE_NAMES]
    report = ConvergenceReport(cfg.alpha, rows, audit, ref_failure)
    if keep_results:
        report.results = results
    return report


# ---------------------------------------------------------------------------
# convex-analysis property suite


def brute_force_dual(beta: float, xi, y_max: float = 100.0, n_coarse: int = 100_001, n_fine: int = 2001):
    """sup_{0 <= y <= y_max} (xi y - phi_beta(y)) by grid search plus a local re-grid."""
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    y = np.linspace(0.0, y_max, n_coarse)
    h = y[1] - y[0]
    py = phi(beta, y)
    out = np.empty_like(xi)
    for i, s in enumerate(xi):
        k = int(np.argmax(s * y - py))
        yf = np.linspace(max(0.0, y[k] - h), min(y_max, y[k] + h), n_fine)
        out[i] = np.max(s * yf - phi(beta, yf))
    return out


def property_audit(seed: int = 42, n: int = 1000) -> dict:
    """Seeded convex-analysis checks; returns name -> (passed, total)."""
    rng = np.random.default_rng(seed)
    out = {}

    passed = total = 0
    for b in TEST_BETAS:
        y = rng.uniform(0.0, 20.0, n)
        y[y == 0.0] = 1e-3
        xi = rng.uniform(0.0, 20.0, n)
        xi[xi == 0.0] = 1e-3
        gap = phi(b, y) + phi_dual(b, xi) - xi * y
        passed += int(np.sum(gap >= -1e-12))
        total += n
    out["young"] = (passed, total)

    passed = total = 0
    for b in TEST_BETAS:
        xi = rng.uniform(0.1, 10.0, n)
        # the log member's maximizer exp(xi - 1) leaves [0, 100] once xi > 1 + log 100
        y_max = 1.2 * math.exp(9.0) if b == 1.0 else 100.0
        exact = phi_dual(b, xi)
        brute = brute_force_dual(b, xi, y_max=y_max)
        passed += int(np.sum(np.abs(brute - exact) <= 1e-4 * np.abs(exact)))
        total += n
    out["dual_oracle"] = (passed, total)

    passed = total = 0
    for b in TEST_BETAS:
        for nu in (0.5, 1.0, 3.0):
            y = rng.uniform(0.0, 10.0 * nu, n)
            y[0] = 0.0
            params = EntropyParams(nu=nu, phi_m=min(nu, 0.5))
            lhs = big_phi(b, y, params) - dphi(b, nu) * y
            passed += int(np.sum(lhs - y >= -1e-12 * np.maximum(1.0, np.abs(lhs))))
            total += n
    out["shifted_lower_bound"] = (passed, total)

    passed = total = 0
    grid = Grid1D(64)
    for _ in range(n):
        lo, hi = rng.uniform(0.2, 3.0, 2)
        bc = BoundaryData.constant(lo, hi, 1.0)
        params = EntropyParams(nu=max(lo, hi), phi_m=min(lo, hi))
        st = KineticState(0.0, rng.uniform(0.0, 4.0, grid.nx), rng.uniform(0.0, 4.0, grid.nx))
        prof = Profile(bc)
        f = prof(0.0, grid.x)
        h_formula = relative_entropy(0.0, st, prof, params, grid)
        h_direct = 0.5 * (np.sum((st.u - f) ** 2) + np.sum((st.v - f) ** 2)) * grid.dx
        passed += int(abs(h_formula - h_direct) <= 1e-12 * abs(h_direct))
        total += 1
    out["h0_identity"] = (passed, total)

    passed = total = 0
    for b in TEST_BETAS:
        for a in TEST_BETAS:
            u = rng.uniform(0.0, 5.0, n // 5)
            v = rng.uniform(0.0, 5.0, n // 5)
            u[:3] = v[:3]
            P = production_integrand(b, a, u, v)
            passed += int(np.sum(P >= 0.0))
            total += u.size
    out["production_nonnegative"] = (passed, total)

    expected = {1.0: 1.0, 0.5: 0.5, 0.0: 1.0, -0.5: 2.0**-0.5, -1.0: 0.5}
    passed = sum(int(coercivity_constant(a) == c) for a, c in expected.items())
    total = len(expected)
    for a in TEST_BETAS:
        eps = 10.0 ** rng.uniform(-3, 0)
        u = rng.uniform(1e-3, 5.0, n)
        v = rng.uniform(1e-3, 5.0, n)
        lhs = production_integrand(a, a, u, v) / eps**2
        rhs = coercivity_constant(a) * ((u - v) / eps) ** 2
        passed += int(np.sum(lhs >= rhs * (1.0 - 1e-12)))
        total += n
    out["coercivity"] = (passed, total)
    return out


def with_relaxation_disabled(cfg: SweepConfig) -> SweepConfig:
    return replace(cfg, relaxation=False)

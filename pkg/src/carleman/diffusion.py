"""Backward-Euler finite volume solver for the limiting diffusion equations.

    rho_t = d_xx G(rho),   G(rho) = rho^(1-alpha) / (2 (1-alpha))   (alpha < 1)
                           G(rho) = log(rho) / 2                     (alpha = 1)

with Dirichlet data rho(t, 0) = 2 phi^-(t), rho(t, 1) = 2 phi^+(t).  The
wall values enter through ghost cells G_ghost = 2 G(2 phi) - G(rho_edge).
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .core import BoundaryData, Grid1D
from .kinetic import NumericalAbort

__all__ = [
    "NewtonOptions",
    "DiffusionConfig",
    "DiffusionResult",
    "nonlinearity",
    "nonlinearity_prime",
    "step_residual",
    "implicit_step",
    "solve",
    "steady_state",
    "RHO_MIN",
    "write_snapshot",
]

log = logging.getLogger(__name__)

RHO_MIN = 1e-8
JAC_REG = 1e-12


def nonlinearity(alpha: float, rho):
    rho = np.asarray(rho, dtype=float)
    if alpha == 1.0:
        if np.any(rho <= 0):
            raise ValueError("logarithmic diffusion needs rho > 0")
        return 0.5 * np.log(rho)
    return rho ** (1.0 - alpha) / (2.0 * (1.0 - alpha))


def _g_rel(alpha: float, rho):
    """G(rho) - G(1); avoids the 1/(1 - alpha) offset that swamps differences near alpha = 1."""
    rho = np.asarray(rho, dtype=float)
    with np.errstate(divide="ignore"):
        lr = np.log(rho)
    if alpha == 1.0:
        if np.any(rho <= 0):
            raise ValueError("logarithmic diffusion needs rho > 0")
        return 0.5 * lr
    m = 1.0 - alpha
    return np.expm1(m * lr) / (2.0 * m)


def nonlinearity_prime(alpha: float, rho):
    rho = np.asarray(rho, dtype=float)
    if alpha == 1.0:
        return 0.5 / rho
    with np.errstate(divide="ignore"):
        return 0.5 * rho ** (-alpha)


@dataclass(frozen=True)
class NewtonOptions:
    max_iter: int = 50
    tol: float = 1e-12
    damping: float = 1.0
    jac_reg: float = JAC_REG


@dataclass
class DiffusionConfig:
    alpha: float
    grid: Grid1D
    dt_par: float
    t_end: float
    bc: BoundaryData
    rho0: np.ndarray
    newton: NewtonOptions = field(default_factory=NewtonOptions)
    record_every: int = 1

    def __post_init__(self):
        if not (-1.0 <= self.alpha <= 1.0):
            raise ValueError(f"alpha={self.alpha} violates alpha in [-1, 1]")
        if not self.dt_par > 0 or not self.t_end > 0:
            raise ValueError("dt_par and t_end must be positive")
        rho0 = np.asarray(self.rho0, dtype=float)
        if rho0.shape != (self.grid.nx,):
            raise ValueError(f"rho0 has shape {rho0.shape}, grid has {self.grid.nx} cells")
        if np.any(rho0 < 0):
            raise ValueError("rho0 must be nonnegative")
        if self.alpha == 1.0 and np.any(rho0 < RHO_MIN):
            raise ValueError(f"alpha = 1 needs rho0 >= {RHO_MIN} in every cell")
        for f in (self.bc.phi_minus, self.bc.phi_plus):
            msg = f.positivity_violation(self.bc.T)
            if msg:
                raise ValueError(f"positivity of phi: {msg}")


def _ghosts(alpha, bc: BoundaryData, t: float):
    left, right = bc.values(min(t, bc.T))
    return float(_g_rel(alpha, 2.0 * left)), float(_g_rel(alpha, 2.0 * right))


def step_residual(rho_new, rho_old, c: float, alpha: float, g_left: float, g_right: float):
    """F(rho) = rho - rho_old - c * (second difference of G with Dirichlet ghosts).

    ``g_left``/``g_right`` are wall values of G(rho) - G(1).
    """
    G = _g_rel(alpha, rho_new)
    lap = np.empty_like(G)
    lap[1:-1] = G[2:] - 2.0 * G[1:-1] + G[:-2]
    lap[0] = G[1] - 3.0 * G[0] + 2.0 * g_left
    lap[-1] = G[-2] - 3.0 * G[-1] + 2.0 * g_right
    return rho_new - rho_old - c * lap


def boundary_flux(G_edges, g_left: float, g_right: float, dx: float) -> float:
    """Net inflow d/dt int rho implied by the wall G-differences."""
    G0, Gn = G_edges
    return (2.0 * (g_right - Gn) - 2.0 * (G0 - g_left)) / dx


@dataclass
class StepInfo:
    iterations: int
    residual: float
    flux: float  # net inflow rate at the new time


def implicit_step(rho, dt_par: float, config: DiffusionConfig, t_new: float, info: list | None = None):
    """One backward Euler step solved by damped Newton with a tridiagonal Jacobian."""
    alpha = config.alpha
    opts = config.newton
    grid = config.grid
    dx = grid.dx
    c = dt_par / dx**2
    gl, gr = _ghosts(alpha, config.bc, t_new)
    rho_old = np.asarray(rho, dtype=float)
    x = rho_old.copy()
    nx = len(x)
    ab = np.zeros((3, nx))
    F = step_residual(x, rho_old, c, alpha, gl, gr)
    res = float(np.max(np.abs(F)))
    it = 0
    while res > opts.tol:
        if it >= opts.max_iter:
            raise NumericalAbort(
                f"Newton did not converge in {opts.max_iter} iterations (alpha={alpha}, "
                f"t={t_new:g}, residual={res:.3e})"
            )
        dG = nonlinearity_prime(alpha, x)
        diag = 1.0 + 2.0 * c * dG + opts.jac_reg
        diag[0] += c * dG[0]
        diag[-1] += c * dG[-1]
        ab[0, 1:] = -c * dG[1:]
        ab[1] = diag
        ab[2, :-1] = -c * dG[:-1]
        delta = solve_banded((1, 1), ab, F)
        theta = opts.damping
        if alpha == 1.0:
            # halve until strictly positive
            cand = x - theta * delta
            while np.any(cand <= 0.0):
                theta *= 0.5
                if theta < 1e-12:
                    raise NumericalAbort(f"Newton damping underflow at t={t_new:g}")
                cand = x - theta * delta
        else:
            # projected step: vacuum cells may sit exactly at 0
            cand = np.maximum(x - theta * delta, 0.0)
        it += 1
        step_size = float(np.max(np.abs(cand - x)))
        x = cand
        F = step_residual(x, rho_old, c, alpha, gl, gr)
        res = float(np.max(np.abs(F)))
        # rounding floor: the update no longer moves the iterate
        if step_size <= 4e-16 * max(1.0, float(np.max(np.abs(x)))) and res <= max(opts.tol, 1e-10):
            break
    if info is not None:
        G = _g_rel(alpha, x)
        info.append(StepInfo(it, res, boundary_flux((G[0], G[-1]), gl, gr, dx)))
    return x


@dataclass
class DiffusionResult:
    config: DiffusionConfig
    times: np.ndarray
    rho: np.ndarray  # (n_records, nx)
    inflow_integral: float
    newton_iterations: list

    @property
    def final(self) -> np.ndarray:
        return self.rho[-1]


def solve(config: DiffusionConfig) -> DiffusionResult:
    """March to ``t_end``; the last step is shortened to land on it."""
    rho = np.asarray(config.rho0, dtype=float).copy()
    t = 0.0
    n = int(math.ceil(config.t_end / config.dt_par - 1e-9))
    times = [0.0]
    out = [rho.copy()]
    inflow = 0.0
    iters = []
    info: list = []
    for k in range(1, n + 1):
        dt = config.dt_par if k < n else config.t_end - t
        if dt <= 0:
            break
        t_new = t + dt if k < n else config.t_end
        rho = implicit_step(rho, dt, config, t_new, info)
        if not np.all(np.isfinite(rho)):
            raise NumericalAbort("non-finite diffusion state", step=k)
        inflow += dt * info[-1].flux
        iters.append(info[-1].iterations)
        info.clear()
        t = t_new
        if k % config.record_every == 0 or k == n:
            times.append(t)
            out.append(rho.copy())
    log.debug("diffusion alpha=%g: %d steps, max Newton its %d", config.alpha, n, max(iters, default=0))
    return DiffusionResult(config, np.array(times), np.array(out), inflow, iters)


def steady_state(alpha: float, phi_minus_val: float, phi_plus_val: float, x):
    """Stationary solution with constant Dirichlet data 2 phi^-, 2 phi^+."""
    if not (phi_minus_val > 0 and phi_plus_val > 0):
        raise ValueError("steady state needs positive boundary values")
    x = np.asarray(x, dtype=float)
    a, b = 2.0 * phi_minus_val, 2.0 * phi_plus_val
    if alpha == 1.0:
        return a ** (1.0 - x) * b**x
    m = 1.0 - alpha
    return ((1.0 - x) * a**m + x * b**m) ** (1.0 / m)


def write_snapshot(path, grid: Grid1D, rho) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("x", "rho"))
        for x, r in zip(grid.x, rho):
            w.writerow((repr(float(x)), repr(float(r))))

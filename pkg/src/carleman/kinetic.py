"""Splitting integrator for the diffusively scaled two-speed Carleman system.

After division by eps^2 the system reads

    u_t + u_x / eps = rho^alpha (v - u) / eps^2
    v_t - v_x / eps = rho^alpha (u - v) / eps^2

with inflow data u(t, 0) = phi^-(t), v(t, 1) = phi^+(t).  One step is
relax(dt/2) . transport(dt) . relax(dt/2).  The relaxation ODE keeps rho
fixed, so it is integrated exactly; transport is first-order upwind with
dt = cfl * eps * dx.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    BoundaryData,
    Grid1D,
    InitialData,
    KineticState,
    entropy_params,
    validate_admissible,
)
from .entropy import (
    EntropyLedger,
    Profile,
    bound_integrands,
    coercivity_constant,
    entropy_balance,
    production,
    relative_entropy,
)

__all__ = [
    "KineticConfig",
    "KineticResult",
    "NumericalAbort",
    "RHO_FLOOR",
    "transport_substep",
    "relaxation_substep",
    "step",
    "run",
    "write_snapshot",
    "kinetic_steady_state",
]

log = logging.getLogger(__name__)

RHO_FLOOR = 1e-30


class NumericalAbort(RuntimeError):
    """Raised when a solver produces non-finite values or fails to converge."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


@dataclass
class KineticConfig:
    alpha: float
    epsilon: float
    grid: Grid1D
    bc: BoundaryData
    init: InitialData
    t_end: float
    cfl: float = 1.0
    ledger_betas: tuple = ()
    stride: int = 1
    gamma: float | None = None
    snapshot_stride: int | None = None
    relaxation: bool = True  # False only for negative-control runs

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if not (0.0 < self.cfl <= 1.0):
            raise ValueError(f"cfl must lie in (0, 1], got {self.cfl}")
        if not self.t_end > 0:
            raise ValueError(f"t_end must be > 0, got {self.t_end}")
        if self.t_end > self.bc.T * (1 + 1e-12):
            raise ValueError(f"t_end={self.t_end} exceeds the boundary data horizon T={self.bc.T}")
        if int(self.stride) < 1:
            raise ValueError("stride must be >= 1")
        if len(self.init.u_in) != self.grid.nx:
            raise ValueError(f"initial data has {len(self.init.u_in)} cells, grid has {self.grid.nx}")

    @property
    def dt(self) -> float:
        return self.cfl * self.epsilon * self.grid.dx

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.t_end / self.dt - 1e-9))

    @property
    def gamma_value(self) -> float:
        return self.gamma if self.gamma is not None else 0.5 * coercivity_constant(self.alpha)


def transport_substep(state: KineticState, dt: float, epsilon: float, bc: BoundaryData) -> KineticState:
    """Upwind advection at speed +-1/eps with inflow ghosts taken at ``state.t``."""
    nx = len(state.u)
    r = dt * nx / epsilon
    if r > 1.0 + 1e-9:
        raise ValueError(f"transport CFL number {r} exceeds 1")
    left, right = bc.values(min(state.t, bc.T))
    u, v = state.u, state.v
    u_new = np.empty_like(u)
    v_new = np.empty_like(v)
    u_new[0] = u[0] - r * (u[0] - left)
    u_new[1:] = u[1:] - r * (u[1:] - u[:-1])
    v_new[-1] = v[-1] + r * (right - v[-1])
    v_new[:-1] = v[:-1] + r * (v[1:] - v[:-1])
    return KineticState(state.t, u_new, v_new)


def relaxation_substep(state: KineticState, dt: float, epsilon: float, alpha: float) -> KineticState:
    """Exact solution of d' = -2 rho^alpha d / eps^2 with rho frozen, d = u - v."""
    rho = state.u + state.v
    d = state.u - state.v
    vac = rho <= RHO_FLOOR
    assert np.all(np.abs(d[vac]) <= RHO_FLOOR), "vacuum cell with nonzero u - v"
    with np.errstate(divide="ignore", over="ignore"):
        rate = np.power(np.where(vac, 1.0, rho), alpha)
    factor = np.where(vac, 0.0, np.exp(-2.0 * rate * dt / epsilon**2))
    d = d * factor
    return KineticState(state.t, 0.5 * (rho + d), 0.5 * (rho - d))


def step(state: KineticState, dt: float, config: KineticConfig, fluxes: list | None = None) -> KineticState:
    """One Strang step; appends the transport inflow dt * flux to ``fluxes`` if given."""
    eps, a = config.epsilon, config.alpha
    s = state
    if config.relaxation:
        s = relaxation_substep(s, 0.5 * dt, eps, a)
    if fluxes is not None:
        fluxes.append(dt * inflow_flux(s, config.bc, eps))
    s = transport_substep(s, dt, eps, config.bc)
    if config.relaxation:
        s = relaxation_substep(s, 0.5 * dt, eps, a)
    s.t = state.t + dt
    return s


def inflow_flux(state: KineticState, bc: BoundaryData, epsilon: float) -> float:
    """Net mass flux into (0, 1) seen by the transport substep."""
    left, right = bc.values(min(state.t, bc.T))
    return (left + right - state.u[-1] - state.v[0]) / epsilon


@dataclass
class KineticResult:
    config: KineticConfig
    state: KineticState
    ledgers: dict = field(default_factory=dict)
    sample_times: np.ndarray = None
    rho_samples: np.ndarray = None  # shape (n_samples, nx)
    snapshots: list = field(default_factory=list)  # (step, KineticState)
    cumulative: dict = field(default_factory=dict)
    mass_initial: float = 0.0
    inflow_integral: float = 0.0
    coercivity_gap: float = math.inf  # min over recorded steps of P_alpha/eps^2 - C_alpha int j^2
    n_steps: int = 0

    @property
    def mass_final(self) -> float:
        return float(np.sum(self.state.u + self.state.v) * self.config.grid.dx)

    @property
    def mass_balance_error(self) -> float:
        return abs(self.mass_final - self.mass_initial - self.inflow_integral)


def run(config: KineticConfig) -> KineticResult:
    """Integrate to ``t_end`` recording ledgers, density samples and snapshots.

    Samples and ledger rows are taken every ``stride`` steps and at the final
    step.  Space-time integrals use the trapezoid rule in time over every step.
    """
    report = validate_admissible(config.bc, config.init, config.alpha)
    if not report.ok:
        raise ValueError(f"inadmissible data: {report}")
    grid, eps, alpha = config.grid, config.epsilon, config.alpha
    dx = grid.dx
    params = entropy_params(config.bc)
    prof = Profile(config.bc)
    gamma = config.gamma_value
    c_alpha = coercivity_constant(alpha)

    state = KineticState(0.0, config.init.u_in.astype(float).copy(), config.init.v_in.astype(float).copy())
    ledgers = {float(b): EntropyLedger(float(b), alpha, gamma) for b in config.ledger_betas}
    result = KineticResult(config, state, ledgers)
    result.mass_initial = float(np.sum(state.rho) * dx)

    times = [0.0]
    samples = [state.rho.copy()]
    snap_every = config.snapshot_stride
    if snap_every:
        result.snapshots.append((0, state.copy()))

    cum = np.zeros(5)
    integ_prev = bound_integrands(alpha, state.u, state.v, eps).sum(axis=1) * dx
    fluxes: list = []
    n = config.n_steps
    dt_full = config.dt
    for k in range(1, n + 1):
        t_next = k * dt_full if k < n else config.t_end
        dt = t_next - state.t
        before = state
        state = step(before, dt, config, fluxes)
        state.t = t_next
        if not (np.all(np.isfinite(state.u)) and np.all(np.isfinite(state.v))):
            raise NumericalAbort("non-finite kinetic state", step=k)

        integ = bound_integrands(alpha, state.u, state.v, eps).sum(axis=1) * dx
        cum += 0.5 * dt * (integ_prev + integ)
        integ_prev = integ

        record = (k % config.stride == 0) or k == n
        if record:
            times.append(state.t)
            samples.append(state.rho.copy())
            for b, ledger in ledgers.items():
                bal = entropy_balance(b, alpha, before, state, dt, eps, prof, params, gamma, grid)
                H = relative_entropy(b, state, prof, params, grid)
                ledger.append(state.t, bal, H, cum)
            P_a = production(alpha, alpha, state, grid)
            j2 = float(np.sum(((state.u - state.v) / eps) ** 2) * dx)
            result.coercivity_gap = min(result.coercivity_gap, P_a / eps**2 - c_alpha * j2)
        if snap_every and (k % snap_every == 0 or k == n):
            result.snapshots.append((k, state.copy()))

    result.state = state
    result.n_steps = n
    result.inflow_integral = math.fsum(fluxes)
    result.sample_times = np.array(times)
    result.rho_samples = np.array(samples)
    result.cumulative = dict(zip(("cum_j2", "cum_rho2", "cum_rap1_j2", "cum_ram1_j2", "cum_r2a_j2"), map(float, cum)))
    log.debug("kinetic run eps=%g alpha=%g: %d steps", eps, alpha, n)
    return result


def write_snapshot(path, grid: Grid1D, state: KineticState, epsilon: float) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("x", "u", "v", "rho", "j"))
        for x, u, v in zip(grid.x, state.u, state.v):
            w.writerow((repr(float(x)), repr(float(u)), repr(float(v)), repr(float(u + v)), repr(float((u - v) / epsilon))))


def kinetic_steady_state(alpha: float, phi_minus_val: float, phi_plus_val: float, epsilon: float, x):
    """Exact stationary solution (rho, j) of the kinetic system with constant inflow data.

    j is constant, G(rho) is affine with slope -j, and the inflow conditions
    fix the wall densities at 2 phi^- - eps j and 2 phi^+ + eps j.
    """
    from scipy.optimize import brentq

    from .diffusion import nonlinearity

    if not (phi_minus_val > 0 and phi_plus_val > 0):
        raise ValueError("steady state needs positive boundary values")
    x = np.asarray(x, dtype=float)

    def wall(j):
        return 2.0 * phi_minus_val - epsilon * j, 2.0 * phi_plus_val + epsilon * j

    def mismatch(j):
        r0, r1 = wall(j)
        return float(nonlinearity(alpha, r1) - nonlinearity(alpha, r0)) + j

    # wall densities stay positive for |j| < jmax
    jmax = min(2.0 * phi_minus_val, 2.0 * phi_plus_val) / epsilon
    lo, hi = -jmax * (1 - 1e-12), jmax * (1 - 1e-12)
    j = brentq(mismatch, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=200)
    r0, r1 = wall(j)
    g = (1.0 - x) * float(nonlinearity(alpha, r0)) + x * float(nonlinearity(alpha, r1))
    if alpha == 1.0:
        rho = np.exp(2.0 * g)
    else:
        m = 1.0 - alpha
        rho = (2.0 * m * g) ** (1.0 / m)
    return rho, j

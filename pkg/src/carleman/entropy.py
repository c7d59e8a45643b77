"""Convex family, relative entropy and entropy production diagnostics.

The family is indexed by ``beta`` in [-1, 1]:

    phi_beta(y) = y**(2 - beta) / (2 - beta)      beta < 1
    phi_1(y)    = y log y,  phi_1(0) = 0

``Phi_beta`` is ``phi_beta`` shifted by the constant ``phi*_beta(phi'_beta(nu) + 1)``
so that ``Phi_beta(y) - Phi'_beta(nu) y >= y``.  Relative entropy is taken with
respect to the affine profile ``f(t, x) = (1 - x) phi^-(t) + x phi^+(t)``.

Entropy balance used by the residual check (exact for smooth solutions):

    dH/dt + P/eps^2 + B = -int d_x Phi'(f) j - int d_t Phi'(f) (u + v)
                          + int Phi''(f) d_t (f^2)

with ``B >= 0`` the boundary dissipation.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .core import BoundaryData, EntropyParams, Grid1D, KineticState

__all__ = [
    "ConvexIndex",
    "phi",
    "dphi",
    "d2phi",
    "phi_dual",
    "big_phi",
    "Profile",
    "profile_eval",
    "relative_entropy",
    "relative_entropy_integrand",
    "production",
    "production_integrand",
    "coercivity_constant",
    "boundary_term",
    "ProfileNorms",
    "profile_norms",
    "EntropyBalance",
    "entropy_balance",
    "entropy_residual",
    "EntropyLedger",
    "LEDGER_HEADER",
]


@dataclass(frozen=True)
class ConvexIndex:
    beta: float

    def __post_init__(self):
        if not (-1.0 <= float(self.beta) <= 1.0):
            raise ValueError(f"beta={self.beta} outside [-1, 1]")

    def __float__(self):
        return float(self.beta)


def _b(beta) -> float:
    b = float(beta)
    if not (-1.0 <= b <= 1.0):
        raise ValueError(f"beta={beta} outside [-1, 1]")
    return b


def phi(beta, y):
    b = _b(beta)
    y = np.asarray(y, dtype=float)
    if b == 1.0:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(y > 0, y * np.log(np.where(y > 0, y, 1.0)), 0.0)
        return out[()] if out.ndim == 0 else out
    return y ** (2.0 - b) / (2.0 - b)


def dphi(beta, y):
    """First derivative; ``-inf`` at y = 0 for beta = 1."""
    b = _b(beta)
    y = np.asarray(y, dtype=float)
    if b == 1.0:
        with np.errstate(divide="ignore"):
            return np.log(y) + 1.0
    return y ** (1.0 - b)


def d2phi(beta, y):
    b = _b(beta)
    y = np.asarray(y, dtype=float)
    if b == 1.0:
        return 1.0 / y
    return (1.0 - b) * y ** (-b)


def phi_dual(beta, xi):
    """Legendre dual sup_{y >= 0} (xi y - phi_beta(y)) for xi > 0."""
    b = _b(beta)
    xi = np.asarray(xi, dtype=float)
    if b == 1.0:
        return np.exp(xi - 1.0)
    return (1.0 - b) / (2.0 - b) * xi ** ((2.0 - b) / (1.0 - b))


def _shift(beta, nu: float) -> float:
    return float(phi_dual(beta, dphi(beta, nu) + 1.0))


def big_phi(beta, y, params: EntropyParams):
    return phi(beta, y) + _shift(beta, params.nu)


# ---------------------------------------------------------------------------
# profile


@dataclass(frozen=True)
class Profile:
    """Affine interpolation of the inflow data between x = 0 and x = 1."""

    bc: BoundaryData

    def __call__(self, t, x):
        lo, hi = self.bc.values(t)
        x = np.asarray(x, dtype=float)
        return (1.0 - x) * lo + x * hi

    def dt(self, t, x):
        dlo, dhi = self.bc.derivatives(t)
        x = np.asarray(x, dtype=float)
        return (1.0 - x) * dlo + x * dhi

    def lower_bound(self) -> float:
        T = self.bc.T
        return min(self.bc.phi_minus.inf(T), self.bc.phi_plus.inf(T))

    def upper_bound(self) -> float:
        T = self.bc.T
        return max(self.bc.phi_minus.sup(T), self.bc.phi_plus.sup(T))


def profile_eval(p: Profile, t: float, x: float) -> float:
    return float(p(t, x))


# ---------------------------------------------------------------------------
# relative entropy and production


def relative_entropy_integrand(beta, u, v, f, params: EntropyParams):
    Bu = big_phi(beta, u, params)
    Bv = big_phi(beta, v, params)
    Bf = big_phi(beta, f, params)
    return Bu + Bv - 2.0 * Bf - dphi(beta, f) * (u + v - 2.0 * f)


def relative_entropy(beta, state: KineticState, p: Profile, params: EntropyParams, grid: Grid1D) -> float:
    f = p(state.t, grid.x)
    return float(np.sum(relative_entropy_integrand(beta, state.u, state.v, f, params)) * grid.dx)


def production_integrand(beta, alpha: float, u, v):
    """(Phi'(u) - Phi'(v)) (u + v)^alpha (u - v), cellwise.

    Zero wherever u == v; ``+inf`` for beta = 1 when exactly one of u, v vanishes.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    same = u == v
    rho = np.where(same, 1.0, u + v)
    with np.errstate(divide="ignore", invalid="ignore"):
        dd = dphi(beta, u) - dphi(beta, v)
        val = dd * rho**alpha * (u - v)
    val = np.where(same, 0.0, val)
    # log(0) = -inf on one side only gives (+inf) * (nonzero of matching sign)
    return np.where(np.isnan(val), np.inf, val)


def production(beta, alpha: float, state: KineticState, grid: Grid1D) -> float:
    return float(np.sum(production_integrand(beta, alpha, state.u, state.v)) * grid.dx)


def coercivity_constant(alpha: float) -> float:
    a = float(alpha)
    if not (-1.0 <= a <= 1.0):
        raise ValueError(f"alpha={alpha} outside [-1, 1]")
    if a == 1.0:
        return 1.0
    if a >= 0.0:
        return 1.0 - a
    return 2.0**a


def _bregman(beta, y, f, params):
    return big_phi(beta, y, params) - big_phi(beta, f, params) - dphi(beta, f) * (y - f)


def boundary_term(beta, state: KineticState, p: Profile, params: EntropyParams, epsilon: float) -> float:
    """Outflow dissipation: Bregman divergences of u at x = 1 and v at x = 0, over eps.

    The outflow traces are read from the edge cells.
    """
    f0, f1 = p.bc.values(state.t)
    right = _bregman(beta, state.u[-1], f1, params)
    left = _bregman(beta, state.v[0], f0, params)
    return float((right + left) / epsilon)


# ---------------------------------------------------------------------------
# exact sup norms of profile-derived factors


def _sup_power_affine(f0: float, s: float, p: float, h0: float, q: float) -> float:
    """sup over x in [0, 1] of |(f0 + s x)^p (h0 + q x)| for f0 + s x > 0."""
    xs = [0.0, 1.0]
    den = (p + 1.0) * s * q
    if den != 0.0:
        xc = -(p * s * h0 + f0 * q) / den
        if 0.0 < xc < 1.0:
            xs.append(xc)
    return max(abs((f0 + s * x) ** p * (h0 + q * x)) for x in xs)


@dataclass(frozen=True)
class ProfileNorms:
    """Sup over x of the profile factors at a fixed time."""

    dx_dphi: float  # |d_x Phi'(f)|
    dt_dphi: float  # |d_t Phi'(f)|
    d2phi_dt_f2: float  # |Phi''(f) d_t f^2|
    psi: float  # |Phi(f) - Phi'(f) f|


def profile_norms(beta, bc: BoundaryData, t: float, params: EntropyParams) -> ProfileNorms:
    b = _b(beta)
    c, pw = (1.0, -1.0) if b == 1.0 else (1.0 - b, -b)
    f0, f1 = bc.values(t)
    g0, g1 = bc.derivatives(t)
    s, q = f1 - f0, g1 - g0
    dx_dphi = c * _sup_power_affine(f0, s, pw, s, 0.0)
    dt_dphi = c * _sup_power_affine(f0, s, pw, g0, q)
    d2 = 2.0 * c * _sup_power_affine(f0, s, pw + 1.0, g0, q)
    # Phi(f) - f Phi'(f) is monotone in f, so its extremes sit at the ends
    ends = np.array([f0, f1])
    psi = float(np.max(np.abs(big_phi(b, ends, params) - ends * dphi(b, ends))))
    return ProfileNorms(dx_dphi, dt_dphi, d2, psi)


# ---------------------------------------------------------------------------
# discrete entropy inequality


@dataclass(frozen=True)
class EntropyBalance:
    lhs: float
    rhs: float
    dHdt: float
    P: float
    boundary: float
    scale: float

    @property
    def residual(self) -> float:
        return self.lhs - self.rhs

    @property
    def normalized(self) -> float:
        return self.residual / self.scale


def entropy_balance(
    beta,
    alpha: float,
    before: KineticState,
    after: KineticState,
    dt: float,
    epsilon: float,
    p: Profile,
    params: EntropyParams,
    gamma: float,
    grid: Grid1D,
    mode: str = "direct",
) -> EntropyBalance:
    """Both sides of the relative entropy inequality over one step.

    LHS = (H(after) - H(before))/dt + P(mid)/eps^2, ``mid`` the average state.
    RHS = gamma/2 int j^2 + |d_x Phi'(f)|^2/(2 gamma) + T2 + |Phi''(f) d_t f^2|,
    where T2 is ``-int d_t Phi'(f)(u + v)`` evaluated directly (``mode='direct'``)
    or bounded by ``|d_t Phi'(f)| (H + 2 |Phi(f) - Phi'(f) f|)`` (``mode='gronwall'``).
    """
    if not 0.0 < gamma:
        raise ValueError("gamma must be positive")
    H0 = relative_entropy(beta, before, p, params, grid)
    H1 = relative_entropy(beta, after, p, params, grid)
    tm = 0.5 * (before.t + after.t)
    mid = KineticState(tm, 0.5 * (before.u + after.u), 0.5 * (before.v + after.v))
    P = production(beta, alpha, mid, grid)
    dHdt = (H1 - H0) / dt
    lhs = dHdt + P / epsilon**2

    norms = profile_norms(beta, p.bc, tm, params)
    j2 = float(np.sum(((mid.u - mid.v) / epsilon) ** 2) * grid.dx)
    rhs = 0.5 * gamma * j2 + norms.dx_dphi**2 / (2.0 * gamma) + norms.d2phi_dt_f2
    if mode == "direct":
        f = p(tm, grid.x)
        dtdphi = d2phi(beta, f) * p.dt(tm, grid.x)
        rhs -= float(np.sum(dtdphi * (mid.u + mid.v)) * grid.dx)
    elif mode == "gronwall":
        Hm = relative_entropy(beta, mid, p, params, grid)
        rhs += norms.dt_dphi * (Hm + 2.0 * norms.psi)
    else:
        raise ValueError(f"unknown mode {mode!r}")

    bterm = boundary_term(beta, mid, p, params, epsilon)
    scale = max(1.0, abs(dHdt), abs(P) / epsilon**2, abs(rhs))
    return EntropyBalance(lhs, rhs, dHdt, P, bterm, scale)


def entropy_residual(beta, alpha, before, after, dt, epsilon, p, params, gamma, grid, mode="direct") -> float:
    """LHS - RHS of the discrete entropy inequality; <= 0 certifies the step."""
    return entropy_balance(beta, alpha, before, after, dt, epsilon, p, params, gamma, grid, mode).residual


# ---------------------------------------------------------------------------
# ledger

LEDGER_HEADER = (
    "t",
    "H",
    "P",
    "boundary_term",
    "residual",
    "cum_j2",
    "cum_rho2",
    "cum_rap1_j2",
    "cum_ram1_j2",
    "cum_r2a_j2",
)
CUMULATIVE_NAMES = LEDGER_HEADER[5:]


def bound_integrands(alpha: float, u, v, epsilon: float) -> np.ndarray:
    """The five monitored space integrands, stacked: j^2, rho^2, rho^(a+1) j^2, rho^(a-1) j^2, rho^(2a) j^2."""
    rho = u + v
    j2 = ((u - v) / epsilon) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        rp1 = np.where(j2 > 0, rho ** (alpha + 1.0) * j2, 0.0)
        rm1 = np.where(j2 > 0, rho ** (alpha - 1.0) * j2, 0.0)
        r2a = np.where(j2 > 0, rho ** (2.0 * alpha) * j2, 0.0)
    return np.stack([j2, rho**2, rp1, rm1, r2a])


@dataclass
class EntropyLedger:
    """Per-step entropy rows for one ``beta`` plus running space-time integrals."""

    beta: float
    alpha: float
    gamma: float
    rows: list[tuple] = field(default_factory=list)
    normalized: list[float] = field(default_factory=list)
    coercivity_gap: list[float] = field(default_factory=list)

    def append(self, t: float, bal: EntropyBalance, H: float, cumulative) -> None:
        self.rows.append((t, H, bal.P, bal.boundary, bal.residual, *map(float, cumulative)))
        self.normalized.append(bal.normalized)

    @property
    def times(self) -> np.ndarray:
        return np.array([r[0] for r in self.rows])

    def column(self, name: str) -> np.ndarray:
        return np.array([r[LEDGER_HEADER.index(name)] for r in self.rows], dtype=float)

    def cumulative(self) -> dict[str, float]:
        if not self.rows:
            return {k: 0.0 for k in CUMULATIVE_NAMES}
        return dict(zip(CUMULATIVE_NAMES, self.rows[-1][5:]))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LEDGER_HEADER)
            for row in self.rows:
                w.writerow([_fmt(v) for v in row])


def _fmt(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v))

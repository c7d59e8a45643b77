"""Grids, state containers, boundary/initial data and quadrature.

Everything here is shared by the kinetic solver, the diffusion solver and
the entropy diagnostics.  Integrals over the unit interval are always
midpoint sums over cell centers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Grid1D",
    "KineticState",
    "MacroField",
    "BoundaryFunction",
    "BoundaryData",
    "InitialData",
    "EntropyParams",
    "ValidationReport",
    "validate_admissible",
    "eval_boundary",
    "entropy_params",
    "l2_norm_sq",
    "integrate",
    "macro_from_kinetic",
    "kinetic_from_macro",
]

# slack for evaluating boundary data at t = T after floating point stepping
_T_SLACK = 1e-12


@dataclass(frozen=True)
class Grid1D:
    """Uniform cell-centered grid on (0, 1)."""

    nx: int

    def __post_init__(self):
        if int(self.nx) != self.nx or self.nx < 4:
            raise ValueError(f"nx must be an integer >= 4, got {self.nx!r}")

    @property
    def dx(self) -> float:
        return 1.0 / self.nx

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.nx) + 0.5) / self.nx


@dataclass
class KineticState:
    """Cell averages of right movers ``u`` and left movers ``v`` at time ``t``."""

    t: float
    u: np.ndarray
    v: np.ndarray

    def copy(self) -> KineticState:
        return KineticState(self.t, self.u.copy(), self.v.copy())

    @property
    def rho(self) -> np.ndarray:
        return self.u + self.v


@dataclass(frozen=True)
class MacroField:
    rho: np.ndarray
    j: np.ndarray
    epsilon: float


def macro_from_kinetic(state: KineticState, epsilon: float) -> MacroField:
    return MacroField(state.u + state.v, (state.u - state.v) / epsilon, epsilon)


def kinetic_from_macro(m: MacroField) -> tuple[np.ndarray, np.ndarray]:
    d = m.epsilon * m.j
    return 0.5 * (m.rho + d), 0.5 * (m.rho - d)


# ---------------------------------------------------------------------------
# boundary data

_KINDS = ("constant", "ramp", "sinusoid")


@dataclass(frozen=True)
class BoundaryFunction:
    """Closed-form inflow density of time.

    ``constant``: a;  ``ramp``: a + b t;  ``sinusoid``: a + b sin(omega t).
    """

    kind: str
    a: float
    b: float = 0.0
    omega: float = 0.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown boundary kind {self.kind!r}; expected one of {_KINDS}")

    @classmethod
    def constant(cls, c: float) -> BoundaryFunction:
        return cls("constant", float(c))

    @classmethod
    def ramp(cls, a: float, b: float) -> BoundaryFunction:
        return cls("ramp", float(a), float(b))

    @classmethod
    def sinusoid(cls, a: float, b: float, omega: float) -> BoundaryFunction:
        return cls("sinusoid", float(a), float(b), float(omega))

    def value(self, t):
        if self.kind == "constant":
            return self.a + 0.0 * np.asarray(t, dtype=float)
        if self.kind == "ramp":
            return self.a + self.b * np.asarray(t, dtype=float)
        return self.a + self.b * np.sin(self.omega * np.asarray(t, dtype=float))

    def derivative(self, t):
        if self.kind == "constant":
            return 0.0 * np.asarray(t, dtype=float)
        if self.kind == "ramp":
            return self.b + 0.0 * np.asarray(t, dtype=float)
        return self.b * self.omega * np.cos(self.omega * np.asarray(t, dtype=float))

    def _extreme_times(self, T: float) -> list[float]:
        # endpoints plus interior critical points of the sinusoid
        times = [0.0, T]
        if self.kind == "sinusoid" and self.omega != 0.0 and self.b != 0.0:
            w = abs(self.omega)
            k = 0
            while True:
                tk = (math.pi / 2 + k * math.pi) / w
                if tk > T:
                    break
                times.append(tk)
                k += 1
        return times

    def sup_abs(self, T: float) -> float:
        return max(abs(float(self.value(t))) for t in self._extreme_times(T))

    def inf(self, T: float) -> float:
        return min(float(self.value(t)) for t in self._extreme_times(T))

    def sup(self, T: float) -> float:
        return max(float(self.value(t)) for t in self._extreme_times(T))

    def sup_abs_derivative(self, T: float) -> float:
        if self.kind == "constant":
            return 0.0
        if self.kind == "ramp":
            return abs(self.b)
        # |b omega cos(omega t)| reaches |b omega| at t = 0
        return abs(self.b * self.omega)

    def positivity_violation(self, T: float) -> str | None:
        if self.kind == "constant" and not self.a > 0:
            return f"constant value {self.a} must be > 0"
        if self.kind == "ramp" and not (self.a > 0 and self.a + self.b * T > 0):
            return f"ramp {self.a} + {self.b} t must stay > 0 on [0, {T}]"
        if self.kind == "sinusoid" and not self.a - abs(self.b) > 0:
            return f"sinusoid requires a - |b| > 0, got {self.a} - {abs(self.b)}"
        return None

    def describe(self) -> str:
        if self.kind == "constant":
            return f"constant({self.a:g})"
        if self.kind == "ramp":
            return f"ramp({self.a:g} + {self.b:g} t)"
        return f"sinusoid({self.a:g} + {self.b:g} sin({self.omega:g} t))"


@dataclass(frozen=True)
class BoundaryData:
    """Inflow data: ``phi_minus`` enters at x = 0, ``phi_plus`` at x = 1."""

    phi_minus: BoundaryFunction
    phi_plus: BoundaryFunction
    T: float

    @classmethod
    def constant(cls, left: float, right: float, T: float) -> BoundaryData:
        return cls(BoundaryFunction.constant(left), BoundaryFunction.constant(right), float(T))

    @property
    def is_constant(self) -> bool:
        return self.phi_minus.kind == "constant" and self.phi_plus.kind == "constant"

    def side(self, side: str) -> BoundaryFunction:
        if side == "left":
            return self.phi_minus
        if side == "right":
            return self.phi_plus
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")

    def values(self, t: float) -> tuple[float, float]:
        return float(self.phi_minus.value(t)), float(self.phi_plus.value(t))

    def derivatives(self, t: float) -> tuple[float, float]:
        return float(self.phi_minus.derivative(t)), float(self.phi_plus.derivative(t))


def eval_boundary(bc: BoundaryData, side: str, t: float) -> float:
    """Inflow value phi^-(t) (``side='left'``) or phi^+(t) (``side='right'``)."""
    if not (0.0 <= t <= bc.T * (1 + _T_SLACK) + _T_SLACK):
        raise ValueError(f"t={t} outside the data horizon [0, {bc.T}]")
    return float(bc.side(side).value(t))


@dataclass(frozen=True)
class EntropyParams:
    nu: float
    phi_m: float


def entropy_params(bc: BoundaryData) -> EntropyParams:
    """W^{1,inf} bound ``nu`` and infimum ``phi_m`` of the boundary data on [0, T]."""
    sides = (bc.phi_minus, bc.phi_plus)
    nu = max(f.sup_abs(bc.T) + f.sup_abs_derivative(bc.T) for f in sides)
    phi_m = min(f.inf(bc.T) for f in sides)
    return EntropyParams(nu=nu, phi_m=phi_m)


# ---------------------------------------------------------------------------
# initial data

_PRESETS = ("constant", "step", "bump", "random")


@dataclass(frozen=True)
class InitialData:
    u_in: np.ndarray
    v_in: np.ndarray
    description: str = field(default="", compare=False)

    @property
    def rho0(self) -> np.ndarray:
        return self.u_in + self.v_in

    @classmethod
    def constant(cls, grid: Grid1D, u: float, v: float) -> InitialData:
        return cls(np.full(grid.nx, float(u)), np.full(grid.nx, float(v)), f"constant({u:g}, {v:g})")

    @classmethod
    def preset(cls, kind: str, grid: Grid1D, **p) -> InitialData:
        """Build one of the named presets on ``grid``.

        constant: u, v
        step: u, v left of x0 and u_right, v_right beyond it
        bump: u, v plus amp * exp(-((x - x0)/width)^2) added to both
        random: uniform in [low, high) per cell, seeded
        """
        x = grid.x
        if kind == "constant":
            return cls.constant(grid, p.get("u", 1.0), p.get("v", 1.0))
        if kind == "step":
            x0 = p.get("x0", 0.5)
            left = x < x0
            u = np.where(left, p.get("u", 1.0), p.get("u_right", 0.5))
            v = np.where(left, p.get("v", 1.0), p.get("v_right", 0.5))
            return cls(u.astype(float), v.astype(float), f"step(x0={x0:g})")
        if kind == "bump":
            g = p.get("amp", 1.0) * np.exp(-(((x - p.get("x0", 0.5)) / p.get("width", 0.1)) ** 2))
            return cls(p.get("u", 1.0) + g, p.get("v", 1.0) + g, "bump")
        if kind == "random":
            rng = np.random.default_rng(int(p.get("seed", 0)))
            lo, hi = p.get("low", 0.0), p.get("high", 2.0)
            u = rng.uniform(lo, hi, grid.nx)
            v = rng.uniform(lo, hi, grid.nx)
            return cls(u, v, f"random(seed={int(p.get('seed', 0))})")
        raise ValueError(f"unknown initial preset {kind!r}; expected one of {_PRESETS}")

    @classmethod
    def from_file(cls, path, nx: int) -> InitialData:
        """Read ``nx`` lines of whitespace-separated ``u v`` pairs."""
        rows = []
        for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'u v', got {line!r}")
            try:
                rows.append((float(parts[0]), float(parts[1])))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: unparsable number in {line!r}") from None
        if len(rows) != nx:
            raise ValueError(f"{path}: expected {nx} lines, found {len(rows)}")
        arr = np.array(rows, dtype=float)
        return cls(arr[:, 0].copy(), arr[:, 1].copy(), f"file({path})")

    def to_file(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            for a, b in zip(self.u_in, self.v_in):
                fh.write(f"{float(a)!r} {float(b)!r}\n")


# ---------------------------------------------------------------------------
# admissibility


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def __str__(self):
        if self.ok:
            return "admissible"
        return "; ".join(self.violations)


def validate_admissible(bc: BoundaryData, init: InitialData | None, alpha: float) -> ValidationReport:
    """Check the data against the admissibility conditions; never raises."""
    report = ValidationReport()
    try:
        a = float(alpha)
    except (TypeError, ValueError):
        report.violations.append(f"alpha={alpha!r} is not a number; need alpha in [-1, 1]")
        a = None
    if a is not None and not (-1.0 <= a <= 1.0):
        report.violations.append(f"alpha={alpha} violates alpha in [-1, 1]")
    if not bc.T > 0:
        report.violations.append(f"horizon T={bc.T} must be > 0")
    for name, f in (("phi_minus", bc.phi_minus), ("phi_plus", bc.phi_plus)):
        msg = f.positivity_violation(bc.T)
        if msg:
            report.violations.append(f"positivity of phi: {name} {msg}")
        for v in (f.a, f.b, f.omega):
            if not math.isfinite(v):
                report.violations.append(f"{name} has non-finite parameter {v}")
    if init is not None:
        for name, arr in (("u_in", init.u_in), ("v_in", init.v_in)):
            arr = np.asarray(arr)
            if not np.all(np.isfinite(arr)):
                report.violations.append(f"{name} has non-finite entries")
            elif np.any(arr < 0):
                bad = int(np.argmin(arr))
                report.violations.append(f"nonnegativity: {name}[{bad}] = {arr[bad]} < 0")
        if len(init.u_in) != len(init.v_in):
            report.violations.append("u_in and v_in lengths differ")
    return report


# ---------------------------------------------------------------------------
# quadrature


def integrate(values, grid: Grid1D) -> float:
    """Midpoint rule for the integral over (0, 1)."""
    return float(np.sum(values) * grid.dx)


def l2_norm_sq(values, grid: Grid1D) -> float:
    values = np.asarray(values, dtype=float)
    return float(np.dot(values, values) * grid.dx)

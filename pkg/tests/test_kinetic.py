import math

import numpy as np
import pytest

from carleman.core import BoundaryData, BoundaryFunction, Grid1D, InitialData, KineticState
from carleman.diffusion import nonlinearity, steady_state
from carleman.kinetic import (
    KineticConfig,
    NumericalAbort,
    inflow_flux,
    kinetic_steady_state,
    relaxation_substep,
    run,
    step,
    transport_substep,
    write_snapshot,
)

ALPHAS = (-1.0, -0.5, 0.0, 0.5, 1.0)


def _config(alpha=0.0, eps=0.1, nx=50, bc=None, init=None, t_end=0.2, **kw):
    g = Grid1D(nx)
    bc = bc or BoundaryData.constant(1.0, 2.0, max(t_end, 1.0))
    init = init or InitialData.constant(g, 1.0, 1.0)
    return KineticConfig(alpha=alpha, epsilon=eps, grid=g, bc=bc, init=init, t_end=t_end, **kw)


def _rk4_decay(d0, rate, dt, n=20_000):
    # independent oracle: classical RK4 on d' = -rate d
    h = dt / n
    d = d0
    for _ in range(n):
        k1 = -rate * d
        k2 = -rate * (d + 0.5 * h * k1)
        k3 = -rate * (d + 0.5 * h * k2)
        k4 = -rate * (d + h * k3)
        d += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return d


@pytest.mark.parametrize(
    "rho, alpha, eps, dt, factor",
    [
        (1.0, 0.0, 1.0, 0.5, math.exp(-1.0)),
        (2.0, 1.0, 0.1, 0.01, math.exp(-4.0)),
        (3.0, -0.5, 0.3, 0.02, None),
        (0.4, 0.5, 0.05, 0.001, None),
    ],
)
def test_relaxation_factor(rho, alpha, eps, dt, factor):
    d0 = 0.25 * rho
    st = KineticState(0.0, np.array([0.5 * (rho + d0)]), np.array([0.5 * (rho - d0)]))
    out = relaxation_substep(st, dt, eps, alpha)
    got = (out.u - out.v)[0] / d0
    oracle = _rk4_decay(1.0, 2.0 * rho**alpha / eps**2, dt)
    assert got == pytest.approx(oracle, rel=1e-8)
    if factor is not None:
        assert got == pytest.approx(factor, rel=1e-12)


@pytest.mark.parametrize("alpha", ALPHAS)
def test_relaxation_keeps_rho(alpha):
    rng = np.random.default_rng(1)
    u, v = rng.uniform(0.0, 5.0, (2, 1000))
    out = relaxation_substep(KineticState(0.0, u, v), 0.01, 0.05, alpha)
    assert np.max(np.abs(out.rho - (u + v))) <= 4 * np.finfo(float).eps * np.max(u + v)


def test_relaxation_equilibrium_and_vacuum():
    u = np.array([0.0, 1.0, 2.5])
    out = relaxation_substep(KineticState(0.0, u.copy(), u.copy()), 0.3, 0.1, -1.0)
    assert np.array_equal(out.u, u) and np.array_equal(out.v, u)


def test_transport_exact_shift():
    g = Grid1D(20)
    eps = 0.1
    bc = BoundaryData(BoundaryFunction.ramp(1.0, 1.0), BoundaryFunction.constant(0.5), 1.0)
    u = 1.0 + g.x
    v = 2.0 - g.x
    out = transport_substep(KineticState(0.3, u, v), eps * g.dx, eps, bc)
    assert out.u[0] == pytest.approx(1.3, rel=1e-15)
    assert np.allclose(out.u[1:], u[:-1], rtol=1e-15, atol=0)
    assert out.v[-1] == pytest.approx(0.5, rel=1e-15)
    assert np.allclose(out.v[:-1], v[1:], rtol=1e-15, atol=0)


def test_transport_rejects_large_cfl():
    g = Grid1D(10)
    st = KineticState(0.0, np.ones(10), np.ones(10))
    with pytest.raises(ValueError, match="CFL"):
        transport_substep(st, 0.2 * g.dx, 0.1, BoundaryData.constant(1.0, 1.0, 1.0))


@pytest.mark.parametrize("cfl", [1.0, 0.6, 0.1])
def test_transport_mass_change(cfl):
    g = Grid1D(40)
    eps = 0.2
    rng = np.random.default_rng(7)
    st = KineticState(0.0, rng.uniform(0, 3, g.nx), rng.uniform(0, 3, g.nx))
    bc = BoundaryData.constant(1.5, 0.7, 1.0)
    dt = cfl * eps * g.dx
    out = transport_substep(st, dt, eps, bc)
    change = (np.sum(out.rho) - np.sum(st.rho)) * g.dx
    assert change == pytest.approx(dt * inflow_flux(st, bc, eps), abs=1e-14)


def test_equilibrium_fixed_point():
    cfg = _config(alpha=0.5, bc=BoundaryData.constant(1.0, 1.0, 1.0))
    st = KineticState(0.0, np.ones(50), np.ones(50))
    out = step(st, cfg.dt, cfg)
    assert np.array_equal(out.u, st.u) and np.array_equal(out.v, st.v)
    assert out.t == cfg.dt


@pytest.mark.parametrize("alpha", ALPHAS)
def test_positivity_random_states(alpha):
    rng = np.random.default_rng(2024)
    cfg = _config(alpha=alpha, nx=32, eps=0.05)
    for _ in range(1000):
        u = rng.uniform(0.0, 4.0, 32) * (rng.random(32) > 0.2)
        v = rng.uniform(0.0, 4.0, 32) * (rng.random(32) > 0.2)
        out = step(KineticState(0.0, u, v), cfg.dt * rng.uniform(0.1, 1.0), cfg)
        assert np.all(out.u >= 0.0) and np.all(out.v >= 0.0)


@pytest.mark.parametrize("alpha", ALPHAS)
def test_strang_local_error_is_third_order(alpha):
    # affine data: upwind transport is exact in the interior, leaving only the splitting error
    g = Grid1D(400)
    init = InitialData(1.0 + 0.5 * g.x, 1.2 + 0.6 * g.x)
    cfg = KineticConfig(alpha=alpha, epsilon=1.0, grid=g, bc=BoundaryData.constant(1.0, 2.0, 1.0), init=init, t_end=1.0)
    diffs = []
    for c in (1.0, 0.5, 0.25):
        dt = c * g.dx
        s = KineticState(0.0, init.u_in.copy(), init.v_in.copy())
        one = step(s, dt, cfg)
        two = step(step(s, dt / 2, cfg), dt / 2, cfg)
        diffs.append(np.max(np.abs(one.u - two.u)[20:-20]))
    orders = np.log2(np.array(diffs[:-1]) / np.array(diffs[1:]))
    assert np.all(orders > 2.8)


def test_run_equilibrium():
    g = Grid1D(40)
    cfg = KineticConfig(
        alpha=0.0,
        epsilon=0.1,
        grid=g,
        bc=BoundaryData.constant(1.0, 1.0, 1.0),
        init=InitialData.constant(g, 1.0, 1.0),
        t_end=0.5,
        ledger_betas=(0.0, 1.0),
        stride=10,
    )
    res = run(cfg)
    assert np.array_equal(res.state.u, np.ones(40)) and np.array_equal(res.state.v, np.ones(40))
    for ledger in res.ledgers.values():
        assert np.all(ledger.column("residual") <= 0.0)
    assert res.cumulative["cum_j2"] == 0.0
    assert res.cumulative["cum_rho2"] == pytest.approx(4.0 * 0.5, rel=1e-12)
    assert res.state.t == 0.5


@pytest.mark.parametrize("alpha", ALPHAS)
def test_run_mass_balance(alpha):
    bc = BoundaryData(BoundaryFunction.sinusoid(1.5, 0.5, 2 * math.pi), BoundaryFunction.constant(1.0), 0.5)
    g = Grid1D(60)
    init = InitialData.preset("bump", g, u=0.8, v=1.1, amp=0.7)
    res = run(KineticConfig(alpha=alpha, epsilon=0.1, grid=g, bc=bc, init=init, t_end=0.5, cfl=0.8))
    assert res.mass_balance_error <= 1e-12 * max(abs(res.mass_initial), abs(res.mass_final))
    assert np.all(res.state.u >= 0) and np.all(res.state.v >= 0)


def test_run_lands_on_t_end():
    cfg = _config(t_end=0.0137, eps=0.07, nx=30)
    res = run(cfg)
    assert res.state.t == 0.0137
    assert res.sample_times[-1] == 0.0137
    assert res.n_steps == math.ceil(0.0137 / cfg.dt - 1e-9)


def test_run_rejects_inadmissible():
    g = Grid1D(10)
    init = InitialData(-np.ones(10), np.ones(10))
    with pytest.raises(ValueError, match="nonnegativity"):
        run(KineticConfig(alpha=0.0, epsilon=0.1, grid=g, bc=BoundaryData.constant(1, 1, 1), init=init, t_end=0.1))


@pytest.mark.parametrize(
    "kw, match",
    [
        ({"eps": 0.0}, "epsilon"),
        ({"cfl": 1.5}, "cfl"),
        ({"t_end": 5.0, "bc": BoundaryData.constant(1, 1, 1)}, "horizon"),
    ],
)
def test_config_validation(kw, match):
    with pytest.raises(ValueError, match=match):
        _config(**kw)


def test_non_finite_state_aborts(monkeypatch):
    import carleman.kinetic as kin

    def broken(state, dt, epsilon, bc):
        return KineticState(state.t, state.u * np.nan, state.v)

    monkeypatch.setattr(kin, "transport_substep", broken)
    with pytest.raises(NumericalAbort, match="step 1"):
        run(_config(t_end=0.1))


def test_snapshots(tmp_path):
    cfg = _config(t_end=0.05, snapshot_stride=5)
    res = run(cfg)
    steps = [k for k, _ in res.snapshots]
    assert steps[0] == 0 and steps[-1] == res.n_steps
    k, st = res.snapshots[-1]
    path = tmp_path / f"fields_{k:08d}.csv"
    write_snapshot(path, cfg.grid, st, cfg.epsilon)
    rows = path.read_text().splitlines()
    assert rows[0] == "x,u,v,rho,j"
    assert len(rows) == cfg.grid.nx + 1
    x, u, v, rho, j = map(float, rows[1].split(","))
    assert rho == u + v and j == pytest.approx((u - v) / cfg.epsilon)


@pytest.mark.parametrize("alpha", ALPHAS)
def test_kinetic_steady_state_satisfies_stationary_system(alpha):
    eps = 0.1
    x = np.linspace(0.0, 1.0, 2001)
    rho, j = kinetic_steady_state(alpha, 1.0, 2.0, eps, x)
    # rho_x = -2 rho^alpha j and the inflow conditions
    h = x[1] - x[0]
    rho_x = np.gradient(rho, h, edge_order=2)
    assert np.allclose(rho_x, -2.0 * rho**alpha * j, rtol=1e-5)
    assert 0.5 * (rho[0] + eps * j) == pytest.approx(1.0, rel=1e-12)
    assert 0.5 * (rho[-1] - eps * j) == pytest.approx(2.0, rel=1e-12)


def test_kinetic_steady_state_heat_case():
    rho, j = kinetic_steady_state(0.0, 1.0, 2.0, 0.05, [0.0, 1.0])
    assert j == pytest.approx(-1.0 / 1.05, rel=1e-13)
    assert rho[0] == pytest.approx(2.0 + 0.05 / 1.05, rel=1e-13)


@pytest.mark.parametrize("alpha", ALPHAS)
def test_kinetic_steady_state_tends_to_limit(alpha):
    x = np.linspace(0, 1, 11)
    errs = [np.max(np.abs(kinetic_steady_state(alpha, 1.0, 2.0, e, x)[0] - steady_state(alpha, 1.0, 2.0, x))) for e in (0.1, 0.01, 0.001)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-2


def test_relaxed_profile_approaches_limit():
    # alpha = 0, rho -> 2 + 2x as eps -> 0 once t is large
    g = Grid1D(100)
    errs = []
    for eps in (0.2, 0.1, 0.05):
        res = run(
            KineticConfig(
                alpha=0.0,
                epsilon=eps,
                grid=g,
                bc=BoundaryData.constant(1.0, 2.0, 2.0),
                init=InitialData.constant(g, 1.0, 1.0),
                t_end=2.0,
                stride=10**9,
            )
        )
        errs.append(math.sqrt(np.sum((res.state.rho - (2 + 2 * g.x)) ** 2) * g.dx))
    assert errs[0] > errs[1] > errs[2]


def test_cumulative_j2_bounded_across_eps():
    g = Grid1D(50)
    vals = []
    for eps in (0.2, 0.025):
        res = run(
            KineticConfig(
                alpha=0.0,
                epsilon=eps,
                grid=g,
                bc=BoundaryData.constant(1.0, 2.0, 0.5),
                init=InitialData.constant(g, 1.0, 1.0),
                t_end=0.5,
                stride=10**9,
            )
        )
        vals.append(res.cumulative["cum_j2"])
    assert max(vals) / min(vals) < 2.0


def test_uses_nonlinearity_consistently():
    # wall densities of the kinetic steady state obey G(rho1) - G(rho0) = -j
    rho, j = kinetic_steady_state(0.5, 0.7, 1.9, 0.2, [0.0, 1.0])
    assert float(nonlinearity(0.5, rho[1]) - nonlinearity(0.5, rho[0])) == pytest.approx(-j, rel=1e-12)

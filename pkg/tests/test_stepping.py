import numpy as np
import pytest

from conftest import random_velocity
from evcorr import (
    ClosureSpec,
    SaddleSystem,
    StateError,
    SteppingConfig,
    assemble_convection_skew,
    assemble_mass,
    assemble_total_stiffness,
    audit_energy_equality,
    initial_state,
    interpolate_velocity,
    method1_step,
    method2_step,
    method3_step,
    ode_integrate,
    ode_method2_step,
    ode_step,
    solve_saddle,
    startup_method3,
    step,
    startup_method3 as _startup,
    velocity_function,
)
from evcorr.closures import closure_field
from evcorr.spaces import pressure_function, pressure_integral_vector
from evcorr.stepping import StepperState


def smagorinsky_config(space, nu=1e-3, k=0.02, beta=1e-4, delta=0.5, mode="strain"):
    closure = ClosureSpec(kind="smagorinsky", cs=0.1, delta=delta, mode=mode, nu=nu)
    return SteppingConfig(space=space, closure=closure, k=k, beta=beta)


def smooth_forcing(space):
    def fn(t):
        return interpolate_velocity(
            space,
            lambda x, y: (np.sin(np.pi * y) * np.cos(t), np.sin(np.pi * x) * np.sin(t)),
        )

    return fn


def test_zero_forcing_zero_start_stays_zero(square2):
    _, space = square2
    cfg = smagorinsky_config(space)
    f0 = velocity_function(space)

    state = initial_state(cfg, velocity_function(space), method=1)
    for _ in range(3):
        state, _ = method1_step(state, f0)
        assert np.all(state.w.coeffs == 0.0)

    state = initial_state(cfg, velocity_function(space), method=2)
    for _ in range(3):
        state, _ = method2_step(state, f0)
        assert np.all(state.w.coeffs == 0.0)

    state, recs = startup_method3(cfg, velocity_function(space), lambda t: f0)
    for r in recs:
        assert r.residual == 0.0
    for _ in range(3):
        state, _ = method3_step(state, f0)
        assert np.all(state.w.coeffs == 0.0)


def test_method1_beta_zero_matches_plain_backward_euler_ev(square2):
    """With beta = 0 a step must equal an independently assembled EV step."""
    _, space = square2
    cfg = smagorinsky_config(space, beta=0.0)
    f = smooth_forcing(space)
    w0 = random_velocity(space, seed=3, scale=0.1)
    state = initial_state(cfg, w0, method=1)
    new_state, _ = method1_step(state, f(cfg.k))

    # independent assembly of the uncorrected system
    m = assemble_mass(space)
    cf = closure_field(cfg.closure, w0)
    a_op = m / cfg.k + assemble_total_stiffness(
        space, cfg.nu, cf.nu_t, cfg.closure.mode
    ) + assemble_convection_skew(space, w0)
    rhs = m @ w0.coeffs / cfg.k + m @ f(cfg.k).coeffs
    u, _ = solve_saddle(
        SaddleSystem(
            A=a_op,
            B=cfg.div,
            rhs_u=rhs,
            dirichlet=space.velocity_dirichlet,
            mean_weights=pressure_integral_vector(space),
        ),
        tol=1e-10,
    )
    assert np.max(np.abs(new_state.w.coeffs - u)) < 1e-13


def test_frozen_weight_recurrence_per_dof(square2):
    """Constant a, no convection, no viscosity: (1+b^2c^2)(w+ - w)/k = f."""
    _, space = square2
    c, beta, k = 3.0, 0.5, 0.05
    closure = ClosureSpec(kind="constant", a_const=c, nu=1.0)
    cfg = SteppingConfig(
        space=space,
        closure=closure,
        k=k,
        beta=beta,
        include_convection=False,
        include_viscous=False,
    )
    # discretely divergence-free forcing so the pressure stays identically 0
    m = assemble_mass(space)
    raw = random_velocity(space, seed=31)
    proj, _ = solve_saddle(
        SaddleSystem(
            A=m,
            B=cfg.div,
            rhs_u=m @ raw.coeffs,
            dirichlet=space.velocity_dirichlet,
            mean_weights=pressure_integral_vector(space),
        ),
        tol=1e-12,
    )
    f = velocity_function(space, proj)
    state = initial_state(cfg, velocity_function(space), method=1)
    w_expected = np.zeros(space.n_velocity)
    for _ in range(4):
        state, _ = method1_step(state, f)
        w_expected = w_expected + k * f.coeffs / (1.0 + beta**2 * c**2)
        assert np.max(np.abs(state.w.coeffs - w_expected)) < 1e-12


def test_method2_beta_zero_projection_is_identity(square2):
    _, space = square2
    cfg = smagorinsky_config(space, beta=0.0)
    f = smooth_forcing(space)
    state = initial_state(cfg, random_velocity(space, seed=4, scale=0.1), method=2)
    new_state, rec = method2_step(state, f(cfg.k))
    assert np.max(np.abs(new_state.w.coeffs - rec.w_temp.coeffs)) < 1e-11


def test_energy_equalities_small_run(square2):
    _, space = square2
    cfg = smagorinsky_config(space)
    f = smooth_forcing(space)
    for method in (1, 2):
        state = initial_state(cfg, velocity_function(space), method=method)
        records = []
        for _ in range(10):
            state, rec = step(state, f(state.t + cfg.k))
            records.append(rec)
        report = audit_energy_equality(records, method=method, tol=1e-8)
        assert len(report.flagged) == 0
        assert abs(report.telescoped) <= 10 * 1e-8 * report.telescoped_scale

    state, records = startup_method3(cfg, velocity_function(space), f)
    m3_records = []
    for _ in range(10):
        state, rec = method3_step(state, f(state.t + cfg.k))
        m3_records.append(rec)
    report = audit_energy_equality(m3_records, method=3, tol=1e-8)
    assert len(report.flagged) == 0


def test_lemma_identity_every_step(square2):
    _, space = square2
    cfg = smagorinsky_config(space)
    f = smooth_forcing(space)
    state = initial_state(cfg, velocity_function(space), method=1)
    for _ in range(8):
        state, rec = method1_step(state, f(state.t + cfg.k))
        denom = max(abs(rec.MD), abs(rec.md_equiv), 1e-300)
        assert abs(rec.MD - rec.md_equiv) / denom < 1e-12


def test_method3_preserves_steady_discrete_solution(square2):
    """Constant-in-time exact discrete solutions are fixed points of the scheme."""
    _, space = square2
    nu = 0.3
    closure = ClosureSpec(kind="smagorinsky", cs=0.1, delta=0.5, mode="strain", nu=nu)
    cfg = SteppingConfig(space=space, closure=closure, k=0.1, beta=2e-2)
    m = assemble_mass(space)

    # a discretely divergence-free W: projection of a random field
    raw = random_velocity(space, seed=9, scale=0.1)
    proj_sys = SaddleSystem(
        A=m,
        B=cfg.div,
        rhs_u=m @ raw.coeffs,
        dirichlet=space.velocity_dirichlet,
        mean_weights=pressure_integral_vector(space),
    )
    w_coeffs, _ = solve_saddle(proj_sys, tol=1e-12)
    w = velocity_function(space, w_coeffs)

    # forcing that makes W a steady solution: M f = N(W) W + K(W) W
    cf = closure_field(closure, w)
    k_op = assemble_total_stiffness(space, nu, cf.nu_t, "strain")
    n_op = assemble_convection_skew(space, w)
    rhs = n_op @ w_coeffs + k_op @ w_coeffs
    import scipy.sparse.linalg as spla

    f_coeffs = spla.spsolve(m.tocsc(), rhs)
    f = velocity_function(space, f_coeffs)

    state = StepperState(
        config=cfg,
        method=3,
        n=3,
        t=0.3,
        w=w,
        q=pressure_function(space),
        a=cf.a,
        a_prev=cf.a,
        nu_t=cf.nu_t,
        nu_t_prev=cf.nu_t,
        w_prev=w.copy(),
        a_hist=[cf.a] * 4,
        nu_t_hist=[cf.nu_t] * 2,
    )
    for _ in range(3):
        state, _ = method3_step(state, f)
        assert np.max(np.abs(state.w.coeffs - w_coeffs)) < 1e-9


def test_method3_requires_startup(square2):
    _, space = square2
    cfg = smagorinsky_config(space)
    state = initial_state(cfg, velocity_function(space), method=1)
    with pytest.raises(StateError):
        method3_step(state, velocity_function(space))


def test_startup_states_satisfy_method1_equality(square2):
    _, space = square2
    cfg = smagorinsky_config(space)
    f = smooth_forcing(space)
    _, records = startup_method3(cfg, random_velocity(space, seed=5, scale=0.1), f)
    assert len(records) == 3
    for rec in records:
        assert rec.method == 1
        assert abs(rec.residual) <= 1e-10 * rec.scale


def test_divergence_error_carries_step(square2):
    _, space = square2
    cfg = smagorinsky_config(space)
    state = initial_state(cfg, velocity_function(space), method=1)
    bad = velocity_function(space)
    bad.coeffs[~space.velocity_dirichlet] = np.nan
    from evcorr import DivergenceError, SolverError

    with pytest.raises((DivergenceError, SolverError)):
        method1_step(state, bad)


# ---------------------------------------------------------------------------
# ODE analogues
# ---------------------------------------------------------------------------


def test_ode_a_zero_is_backward_euler_and_bdf2():
    def f(t, y):
        return -2.0 * y + np.sin(t)

    k = 0.1
    zero_a = lambda y: 0.0 * np.asarray(y)
    y1 = ode_step(1, [np.asarray(1.0)], k, k, 0.7, zero_a, f)
    # backward Euler by hand for linear f: y1 = (y0 + k sin(t1)) / (1 + 2k)
    assert y1 == pytest.approx((1.0 + k * np.sin(k)) / (1.0 + 2.0 * k), rel=1e-12)

    hist = [np.asarray(v) for v in (0.9, 0.95, 1.0, 1.0)]
    y_next = ode_step(3, hist, 4 * k, k, 0.7, zero_a, f)
    # BDF2 by hand: (3y+ - 4*0.9 + 0.95)/(2k) = f(t, y+)
    expected = (4 * 0.9 - 0.95 + 2 * k * np.sin(4 * k)) / (3.0 + 4.0 * k)
    assert y_next == pytest.approx(expected, rel=1e-12)


def test_ode_constant_a_no_forcing_constant_solution():
    one = lambda y: np.ones_like(np.asarray(y))
    zero_f = lambda t, y: np.zeros_like(np.asarray(y))
    y = np.asarray(2.5)
    hist = [y]
    for n in range(5):
        y_next = ode_step(1, hist, 0.1 * (n + 1), 0.1, 0.8, one, zero_f)
        assert y_next == pytest.approx(2.5, rel=1e-14)
        hist.insert(0, y_next)


def test_ode_manufactured_orders():
    beta = 0.5

    def a(y):
        return np.sqrt(np.abs(y))

    def y_ex(t):
        return 2.0 + np.sin(t)

    def f(t, y):
        return np.cos(t) * (1.0 + 1.5 * beta**2 * (2.0 + np.sin(t)))

    T = 2.0
    ks = [T / 2**j for j in range(5, 10)]
    slopes = {}
    for method in (1, 2, 3):
        errs = []
        for k in ks:
            res = ode_integrate(
                method, y_ex(0.0), 0.0, T, k, beta, a, f,
                startup_fn=y_ex if method == 3 else None,
            )
            errs.append(abs(float(res.ys[-1]) - y_ex(T)))
        slopes[method] = np.polyfit(np.log(ks), np.log(errs), 1)[0]
    assert abs(slopes[1] - 1.0) <= 0.15
    assert abs(slopes[2] - 1.0) <= 0.15
    assert abs(slopes[3] - 2.0) <= 0.15


def test_ode_method2_elimination_identity_and_gap_rate():
    beta = 0.5

    def a(y):
        return np.sqrt(np.abs(y))

    def y_ex(t):
        return 2.0 + np.sin(t)

    def f(t, y):
        return np.cos(t) * (1.0 + 1.5 * beta**2 * (2.0 + np.sin(t)))

    T = 2.0
    gaps = []
    ks = [0.1, 0.05, 0.025, 0.0125]
    for k in ks:
        res = ode_integrate(2, y_ex(0.0), 0.0, T, k, beta, a, f)
        worst = 0.0
        for n in range(len(res.y_temps)):
            y_n = res.ys[n]
            y_np = res.ys[n + 1]
            y_nm = res.ys[n - 1] if n >= 1 else res.ys[0]
            a_n, a_nm = a(y_n), a(y_nm)
            lhs = (y_np - y_n) / k + beta**2 * a_n * (a_n * y_np - a_nm * y_n) / k
            worst = max(worst, abs(float(lhs - f((n + 1) * k, res.y_temps[n]))))
        assert worst <= 1e-13
        gaps.append(np.max(np.abs(res.y_temps - res.ys[1:])))
    rate = np.polyfit(np.log(ks), np.log(gaps), 1)[0]
    assert abs(rate - 1.0) <= 0.1


def test_ode_method2_step_returns_temp():
    y_next, y_temp = ode_method2_step(
        [np.asarray(1.0)], 0.1, 0.1, 0.4, lambda y: np.abs(y), lambda t, y: 1.0 + 0 * y
    )
    assert np.isfinite(y_next) and np.isfinite(y_temp)


def test_ode_vector_valued():
    def a(y):
        return np.abs(y)

    def f(t, y):
        return np.array([np.cos(t), -np.sin(t)])

    res = ode_integrate(1, np.array([1.0, 2.0]), 0.0, 1.0, 0.05, 0.3, a, f)
    assert res.ys.shape == (21, 2)
    assert np.all(np.isfinite(res.ys))

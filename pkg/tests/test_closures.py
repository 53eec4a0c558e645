import numpy as np
import pytest

from evcorr import (
    ClosureSpec,
    Mesh,
    TaylorHood,
    closure_field,
    eval_a,
    eval_nu_t,
    interpolate_velocity,
    velocity_function,
)


def test_spec_validation():
    with pytest.raises(ValueError):
        ClosureSpec(cs=0.0, delta=1.0, nu=1.0)
    with pytest.raises(ValueError):
        ClosureSpec(cs=0.1, delta=-1.0, nu=1.0)
    with pytest.raises(ValueError):
        ClosureSpec(cs=0.1, delta=1.0, nu=0.0)
    with pytest.raises(ValueError):
        ClosureSpec(kind="mystery")


def test_eval_nu_t_zero_gradient():
    spec = ClosureSpec(cs=0.1, delta=1.0, mode="gradient", nu=1.0)
    assert eval_nu_t(spec, np.zeros((2, 2))) == 0.0


def test_eval_nu_t_pure_shear_both_modes():
    shear = np.array([[0.0, 1.0], [0.0, 0.0]])
    grad = ClosureSpec(cs=0.1, delta=1.0, mode="gradient", nu=1.0)
    strain = ClosureSpec(cs=0.1, delta=1.0, mode="strain", nu=1.0)
    # cs * delta = 0.1: gradient |G| = 1; strain |S~| = sqrt(2 * 0.5) = 1
    assert eval_nu_t(grad, shear) == pytest.approx(0.01, rel=1e-14)
    assert eval_nu_t(strain, shear) == pytest.approx(0.01, rel=1e-14)


def test_eval_nu_t_reference_parameter_formula():
    # nu_t = (0.1 dx)^2 |S~| at cs = 0.1, delta = dx
    dx = 0.0110964
    spec = ClosureSpec(cs=0.1, delta=dx, mode="strain", nu=1e-4)
    sym = np.array([[0.3, -0.2], [-0.2, 0.1]])
    expected = (0.1 * dx) ** 2 * np.sqrt(2.0 * np.sum(sym**2))
    assert eval_nu_t(spec, sym) == pytest.approx(expected, rel=1e-14)


def test_eval_nu_t_rejects_nonfinite():
    spec = ClosureSpec(cs=0.1, delta=1.0, nu=1.0)
    with pytest.raises(FloatingPointError):
        eval_nu_t(spec, np.array([[np.inf, 0.0], [0.0, 0.0]]))


def test_eval_a_values():
    spec = ClosureSpec(cs=0.1, delta=1.0, nu=1e-4)
    assert eval_a(spec, 0.0) == 0.0
    assert eval_a(spec, 1e-4) == pytest.approx(1.0, rel=1e-14)
    assert eval_a(spec, 0.01) == pytest.approx(10.0, rel=1e-14)
    with pytest.raises(ValueError):
        eval_a(spec, -1e-9)


def test_eval_a_roundtrip_invariant():
    spec = ClosureSpec(cs=0.1, delta=1.0, nu=3.7e-4)
    for nu_t in np.geomspace(1e-12, 10.0, 20):
        a = eval_a(spec, nu_t)
        assert a**2 * spec.nu == pytest.approx(nu_t, rel=1e-12)


def test_positive_homogeneity_degree_one():
    rng = np.random.default_rng(3)
    for mode in ("gradient", "strain"):
        spec = ClosureSpec(cs=0.17, delta=0.3, mode=mode, nu=1.0)
        for _ in range(25):
            g = rng.standard_normal((2, 2))
            lam = float(rng.uniform(0.1, 10.0))
            assert eval_nu_t(spec, lam * g) == pytest.approx(
                lam * eval_nu_t(spec, g), rel=1e-12
            )


def test_eval_a_monotone():
    spec = ClosureSpec(cs=0.1, delta=1.0, nu=2e-3)
    values = [eval_a(spec, v) for v in np.linspace(0.0, 1.0, 50)]
    assert np.all(np.diff(values) >= 0.0)


def test_modes_agree_on_symmetric_tensors():
    rng = np.random.default_rng(11)
    spec_s = ClosureSpec(cs=0.1, delta=0.5, mode="strain", nu=1.0)
    for _ in range(50):
        raw = rng.standard_normal((2, 2))
        g = 0.5 * (raw + raw.T)
        expected = (spec_s.cs * spec_s.delta) ** 2 * np.sqrt(2.0 * np.sum(g * g))
        assert eval_nu_t(spec_s, g) == pytest.approx(expected, rel=1e-13)


def test_closure_field_zero_velocity(square2):
    _, space = square2
    spec = ClosureSpec(cs=0.1, delta=0.5, mode="strain", nu=1e-3)
    field = closure_field(spec, velocity_function(space))
    assert np.all(field.nu_t == 0.0)
    assert np.all(field.a == 0.0)


def test_closure_field_uniform_shear(square2):
    _, space = square2
    nu = 1e-3
    spec = ClosureSpec(cs=0.1, delta=0.5, mode="gradient", nu=nu)
    w = interpolate_velocity(space, lambda x, y: (y, np.zeros_like(x)))
    field = closure_field(spec, w)
    expected = (0.1 * 0.5) ** 2 * 1.0
    assert np.allclose(field.nu_t, expected, rtol=1e-12)
    assert np.allclose(field.a, np.sqrt(expected / nu), rtol=1e-12)
    assert np.allclose(field.a**2 * nu, field.nu_t, rtol=1e-12)


def test_closure_field_local_delta_scales_with_element():
    # two triangles of different size
    vertices = [(0, 0), (1, 0), (0, 1), (3, 3)]
    triangles = [(0, 1, 2), (1, 3, 2)]
    markers = [1, 1, 1, 1]
    mesh = Mesh(vertices, triangles, markers)
    space = TaylorHood(mesh)
    h_e = mesh.element_min_edge()
    assert h_e[0] != h_e[1]
    spec = ClosureSpec(cs=0.1, delta=h_e, mode="gradient", nu=1.0)
    w = interpolate_velocity(space, lambda x, y: (y, np.zeros_like(x)))
    field = closure_field(spec, w)
    ratio = field.nu_t[1, 0] / field.nu_t[0, 0]
    assert ratio == pytest.approx((h_e[1] / h_e[0]) ** 2, rel=1e-12)


def test_constant_closure_kind(square2):
    _, space = square2
    spec = ClosureSpec(kind="constant", a_const=2.0, nu=1e-2)
    field = closure_field(spec, velocity_function(space))
    assert np.all(field.a == 2.0)
    assert np.allclose(field.nu_t, 4.0 * 1e-2, rtol=1e-15)

import numpy as np
import pytest
from hypothesis import given, strategies as st

from eulerhopf.geometry import Generic, unit_ball
from eulerhopf.kfield import CriticalPointSpec, KField, check_assumptions, from_config, morse_like_index

from conftest import on_axis


def field():
    pts = [CriticalPointSpec(np.array([0.3, 0, 0, 0]), 3.0, np.array([-1.0, 2.0, -0.5, 1.5]), 0.1),
           CriticalPointSpec(np.array([-0.3, 0.1, 0, 0]), 2.5, -np.ones(4), 0.08, K0=1.2)]
    return KField.on_domain(unit_ball(4), pts)


def test_template_reproduced_inside_eta_ball():
    f = field()
    p = f.points[0]
    for k in range(4):
        for t in (0.01, 0.05, 0.099):
            x = p.y + t * np.eye(4)[k]
            assert f.eval(x) == pytest.approx(p.K0 + p.b[k] * t ** p.beta, rel=1e-14)
            assert np.linalg.norm(f.grad(x)) == pytest.approx(p.beta * abs(p.b[k]) * t ** (p.beta - 1),
                                                              rel=1e-12)


def test_gradient_vanishes_at_critical_points():
    f = field()
    for p in f.points:
        assert np.allclose(f.grad(p.y), 0.0, atol=1e-15)


def test_gradient_matches_differences_everywhere():
    f = field()
    rng = np.random.default_rng(2)
    X = unit_ball(4).sample_interior(50, rng)
    h = 1e-6
    fd = np.stack([(f.eval(X + h * e) - f.eval(X - h * e)) / (2 * h) for e in np.eye(4)], axis=1)
    assert np.allclose(f.grad(X), fd, rtol=1e-5, atol=1e-7)


def test_outer_radius_respects_neighbours():
    f = KField.on_domain(unit_ball(4), on_axis(-0.1, 0.1, eta=0.08))
    # half the separation caps the blending radius
    assert np.allclose(f.outer, 0.1)


def test_scaled_field():
    f = field()
    g = f.scaled(2.5)
    X = unit_ball(4).sample_interior(30, np.random.default_rng(0))
    assert np.allclose(g.eval(X), 2.5 * f.eval(X), rtol=1e-14)
    assert np.allclose(g.grad(X), 2.5 * f.grad(X), rtol=1e-13, atol=1e-15)


@pytest.mark.parametrize("b,idx", [((1, 2, 3, 4), 0), ((-1, -1, -1, -1), 4), ((-1, 2, -3, 5), 2)])
def test_morse_like_index(b, idx):
    assert morse_like_index(CriticalPointSpec(np.zeros(4), 3.0, np.array(b, float), 0.1)) == idx


def test_constant_field_fails_boundary_condition():
    f = KField(4, [], decay_rate=0.0)
    rep = check_assumptions(unit_ball(4), f, budget=200)
    assert not rep.a1_pass and "A1" in rep.failures()
    assert rep.a1_min_margin == pytest.approx(0.0, abs=1e-14)


def test_decaying_envelope_passes():
    rep = check_assumptions(unit_ball(4), field(), budget=500)
    assert rep.a1_pass and rep.passed


def test_beta_equal_to_n_rejected():
    f = KField.on_domain(unit_ball(4), [CriticalPointSpec(np.zeros(4), 4.0, -np.ones(4), 0.1)])
    rep = check_assumptions(unit_ball(4), f, budget=100)
    assert rep.beta_violations and not rep.passed


def test_zero_coefficient_and_containment():
    f = KField.on_domain(unit_ball(4), [
        CriticalPointSpec(np.zeros(4), 3.0, np.array([-1.0, 0, -1, -1]), 0.1),
        CriticalPointSpec(np.array([0.9, 0, 0, 0]), 3.0, -np.ones(4), 0.1)])
    rep = check_assumptions(unit_ball(4), f, budget=100)
    assert rep.zero_coefficients and rep.containment_violations


def test_negative_level_fails_positivity():
    f = KField(4, [], level=-1.0)
    rep = check_assumptions(unit_ball(4), f, budget=100)
    assert not rep.positivity_pass and rep.nonpositive_locations


def test_generic_domain_normals_used():
    e = Generic.builtin("ellipsoid", center=np.zeros(4), semi_axes=[1, 0.8, 0.7, 0.6])
    f = KField.on_domain(e, [])
    rep = check_assumptions(e, f, budget=300)
    assert rep.a1_pass


def test_from_config():
    f = from_config({"critical_points": [{"y": [0, 0, 0, 0], "beta": 3, "b": [-1] * 4, "eta": 0.1}],
                     "envelope": {"decay_rate": 2.0}}, unit_ball(4))
    assert f.decay_rate == 2.0 and len(f.points) == 1 and f.points[0].K0 == 1.0


@given(st.floats(0.1, 10.0))
def test_envelope_positive(c):
    f = field().scaled(c)
    X = unit_ball(4).sample_interior(20, np.random.default_rng(0))
    assert np.all(f.eval(X) > 0)

import numpy as np
import pytest
from hypothesis import given, strategies as st

from eulerhopf.bubbles import (BubbleConfiguration, QuadratureRule, c_n, delta,
                               dimensional_constants, epsilon_a_derivative, epsilon_ij,
                               epsilon_lambda_derivative, fit_parameters, functional_J,
                               load_point_list, membership_V_p_eps, p_delta,
                               projection_correction, reduced_J, slaved_alpha)
from eulerhopf.errors import FitError, QuadratureError
from eulerhopf.geometry import Ball, Generic, unit_ball
from eulerhopf.greens import GreensEvaluator
from eulerhopf.kfield import KField

# radial integrals at 30 digits
CONST = {4: (315.8273408348594758, 52.637890139143245967, 105.27578027828649193),
         5: (4586.977617488941535, 422.18013238136927985, 844.36026476273855969),
         6: (71438.461471410785684, 3571.9230735705392842, 7143.8461471410785684)}

FLAT = KField(4, [], decay_rate=0.0)


def fd_laplacian(f, X, h):
    n = X.shape[1]
    out = -2 * n * f(X)
    for e in np.eye(n):
        out = out + f(X + h * e) + f(X - h * e)
    return out / h ** 2


def test_bubble_value_at_centre():
    assert delta(np.zeros(4), 1.0, np.zeros(4)) == pytest.approx(2 * np.sqrt(2), rel=1e-15)


@given(st.floats(0.5, 50), st.lists(st.floats(-1, 1), min_size=4, max_size=4),
       st.lists(st.floats(-1, 1), min_size=4, max_size=4))
def test_bubble_scaling_identity(lam, a, x):
    a, x = np.array(a), np.array(x)
    assert delta(a, lam, x) == pytest.approx(lam * delta(np.zeros(4), 1.0, lam * (x - a)), rel=1e-12)


@pytest.mark.parametrize("n", [4, 5])
def test_bubble_solves_critical_equation(n):
    rng = np.random.default_rng(n)
    lam = 3.0
    a = rng.uniform(-0.2, 0.2, n)
    X = a + rng.normal(size=(100, n)) / lam
    f = lambda Y: delta(a, lam, Y)
    lap = -fd_laplacian(f, X, 1e-3 / lam)
    rhs = f(X) ** ((n + 2) / (n - 2))
    assert np.max(np.abs(lap - rhs) / rhs) < 1e-4


@pytest.mark.parametrize("n", [4, 5, 6])
def test_dimensional_constants(n):
    c = dimensional_constants(n)
    c2, c4, S = CONST[n]
    assert c.c2 == pytest.approx(c2, rel=1e-10)
    assert c.c4 == pytest.approx(c4, rel=1e-10)
    assert c.S_n == pytest.approx(S, rel=1e-10)
    assert c.c5(3.0) == pytest.approx(3.0 * c4 / n, rel=1e-10)


def test_closed_forms_in_dimension_four():
    c = dimensional_constants(4)
    assert 2 * c.c2 == pytest.approx(64 * np.pi ** 2, rel=1e-12)
    assert c.c4 == pytest.approx(16 * np.pi ** 2 / 3, rel=1e-12)
    assert c.S_n == pytest.approx(32 * np.pi ** 2 / 3, rel=1e-12)


def test_projection_vanishes_on_boundary():
    a = np.array([0.3, -0.1, 0.2, 0.0])
    rng = np.random.default_rng(0)
    Z = rng.normal(size=(50, 4))
    Z /= np.linalg.norm(Z, axis=1, keepdims=True)
    for lam in (2.0, 30.0):
        assert np.max(np.abs(p_delta(a, lam, Z, domain=unit_ball(4)))) < 1e-10 * delta(a, lam, a)


def test_projection_on_shifted_ball():
    B = Ball(np.array([1.0, -1, 0, 0]), 1.5)
    a = B.center_point + 0.4
    z = B.center_point + 1.5 * np.array([0.6, 0.8, 0, 0])
    assert abs(p_delta(a, 7.0, z, domain=B)) < 1e-10


def test_comparison_principle():
    rng = np.random.default_rng(3)
    X = unit_ball(4).sample_interior(300, rng)
    a = np.array([0.2, 0.1, -0.3, 0.0])
    P = p_delta(a, 5.0, X, domain=unit_ball(4))
    D = delta(a, 5.0, X)
    assert np.all(P >= -1e-12) and np.all(P <= D + 1e-12)


def test_projection_expansion_at_large_lambda():
    g = GreensEvaluator(unit_ball(4))
    a = np.array([0.1, 0.2, 0.0, -0.1])
    lam = 1e3
    for x in (np.zeros(4), np.array([0.5, -0.3, 0.2, 0.1])):
        lead = c_n(4) * lam ** -1 * g.regular_part(a, x).value
        assert projection_correction(a, lam, x, domain=unit_ball(4)) == pytest.approx(lead, rel=0.05)


def test_projection_by_walks_on_generic_ball():
    G = Generic.builtin("ball", center=np.zeros(4), radius=1.0)
    mc = GreensEvaluator(G, "montecarlo", walks=20_000, seed=0)
    a, lam, x = np.array([0.2, 0, 0.1, 0]), 4.0, np.array([-0.1, 0.3, 0, 0])
    exact = projection_correction(a, lam, x, domain=unit_ball(4))
    est = mc.harmonic_extension(x, lambda B: delta(a, lam, B))
    assert abs(est.value - exact) < 4 * est.stderr + 1e-4
    assert projection_correction(a, lam, x, greens=mc, walks=20_000) == pytest.approx(est.value)


def test_epsilon_examples():
    assert epsilon_ij(np.zeros(4), 3.0, np.zeros(4), 3.0) == pytest.approx(0.5)
    assert epsilon_ij(np.zeros(4), 10.0, np.r_[1.0, 0, 0, 0], 10.0) == pytest.approx(1 / 102)
    lam = 1e6
    e = epsilon_ij(np.zeros(4), lam, np.r_[1.0, 0, 0, 0], lam)
    assert e * lam ** 2 == pytest.approx(1.0, abs=1e-6)


@given(st.floats(1, 100), st.floats(1, 100), st.floats(0.01, 1), st.sampled_from([4, 5, 6]))
def test_epsilon_derivatives_match_differences(li, lj, r, n):
    ai = np.zeros(n)
    aj = np.r_[r, np.zeros(n - 1)] * 0.7 + 0.1
    h = 1e-6
    fd = (epsilon_ij(ai, li * np.exp(h), aj, lj) - epsilon_ij(ai, li * np.exp(-h), aj, lj)) / (2 * h)
    assert epsilon_lambda_derivative(ai, li, aj, lj) == pytest.approx(fd, rel=1e-5, abs=1e-14)
    g = np.array([(epsilon_ij(ai + h * e, li, aj, lj) - epsilon_ij(ai - h * e, li, aj, lj)) / (2 * h)
                  for e in np.eye(n)]) / li
    assert np.allclose(epsilon_a_derivative(ai, li, aj, lj), g, rtol=1e-5, atol=1e-12)


def test_epsilon_lambda_derivative_closed_form():
    # lam_i d eps / d lam_i = -(n-2)/2 eps (1 - 2 (lam_j/lam_i) eps^{2/(n-2)}) < 0 when separated
    ai, aj = np.zeros(4), np.r_[0.5, 0, 0, 0]
    e = epsilon_ij(ai, 20.0, aj, 20.0)
    v = epsilon_lambda_derivative(ai, 20.0, aj, 20.0)
    assert v == pytest.approx(-(e * (1 - 2 * e)), rel=1e-12) and v < 0


def test_single_bubble_energy():
    cfg = BubbleConfiguration([1.0], [np.zeros(4)], [1e3])
    J = functional_J(cfg, FLAT, unit_ball(4), budget=200_000)
    assert J.value == pytest.approx(np.sqrt(32 * np.pi ** 2 / 3), rel=0.03)
    assert J.stderr > 0


@pytest.mark.parametrize("t", [0.5, 2.0, 10.0])
def test_energy_is_scale_invariant(t):
    cfg = BubbleConfiguration([1.0, 0.7], [[0.3, 0, 0, 0], [-0.3, 0.1, 0, 0]], [20.0, 40.0])
    rule = QuadratureRule.make(4, 2, 20_000, 1)
    f = KField.on_domain(unit_ball(4), [])
    J1 = functional_J(cfg, f, unit_ball(4), rule=rule).value
    J2 = functional_J(BubbleConfiguration(t * cfg.alpha, cfg.a, cfg.lam), f, unit_ball(4),
                      rule=rule).value
    assert J2 == pytest.approx(J1, rel=1e-10)
    assert J1 >= 0


def test_energy_of_separated_pair_matches_reduced():
    a = np.array([[0.4, 0, 0, 0], [-0.4, 0, 0, 0]])
    K = np.ones(2)
    al = slaved_alpha(a, K, 4)
    J = functional_J(BubbleConfiguration(al, a, [300.0, 300.0]), FLAT, unit_ball(4), budget=200_000)
    assert J.value == pytest.approx(reduced_J(al, K, 4), rel=0.03)


def test_nonpositive_weight_raises():
    cfg = BubbleConfiguration([1.0], [np.zeros(4)], [10.0])
    with pytest.raises(QuadratureError):
        functional_J(cfg, lambda X: -np.ones(len(X)), unit_ball(4), budget=2000)


def test_membership_clauses():
    f = KField.on_domain(unit_ball(4), [])
    al = slaved_alpha(np.zeros((1, 4)), [f.eval(np.zeros(4))], 4)
    ok, bad = membership_V_p_eps(BubbleConfiguration(al, [np.zeros(4)], [1e3]), 0.1, f, unit_ball(4))
    assert ok and bad == []
    # lam d = 5
    ok, bad = membership_V_p_eps(BubbleConfiguration([1.0], [[0.9, 0, 0, 0]], [50.0]), 0.1, f,
                                 unit_ball(4))
    assert not ok and "lambda_d" in bad
    two = BubbleConfiguration([1.0, 1.0], [np.zeros(4), np.zeros(4)], [100.0, 100.0])
    ok, bad = membership_V_p_eps(two, 0.1, f, unit_ball(4))
    assert not ok and "epsilon_ij" in bad


def _sample(cfg, m=300, seed=0):
    X = unit_ball(4).sample_interior(m, np.random.default_rng(seed))
    # concentrate half the samples around the centres
    near = np.concatenate([ai + 0.5 / li * np.random.default_rng(seed + 1).normal(size=(m // 2, 4))
                           for ai, li in zip(cfg.a, cfg.lam)])
    near = near[unit_ball(4).signed_distance_many(near) < 0]
    X = np.concatenate([X, near])
    return X, cfg.evaluate(X, domain=unit_ball(4))


def test_fit_single_bubble():
    truth = BubbleConfiguration([1.0], [np.zeros(4)], [50.0])
    X, v = _sample(truth)
    init = BubbleConfiguration([0.8], [[0.02, -0.01, 0.0, 0.01]], [40.0])
    res = fit_parameters(X, v, 1, init, unit_ball(4))
    assert res.residual <= 1e-8
    assert np.allclose(res.config.a, truth.a, atol=1e-6)
    assert res.config.lam[0] == pytest.approx(50.0, rel=1e-6)


def test_fit_two_bubbles_up_to_order():
    truth = BubbleConfiguration([1.0, 0.6], [[0.4, 0, 0, 0], [-0.3, 0.2, 0, 0]], [20.0, 30.0])
    X, v = _sample(truth)
    init = BubbleConfiguration([0.5, 0.9], [[-0.28, 0.19, 0, 0], [0.41, 0.01, 0, 0]], [27.0, 22.0])
    res = fit_parameters(X, v, 2, init, unit_ball(4))
    assert res.residual <= 1e-8
    got = res.config.canonical()
    want = truth.canonical()
    assert np.allclose(got.a, want.a, atol=1e-6) and np.allclose(got.alpha, want.alpha, atol=1e-6)
    assert np.allclose(got.lam, want.lam, rtol=1e-6)


def test_fit_with_perturbation():
    truth = BubbleConfiguration([1.0], [np.zeros(4)], [50.0])
    X, v = _sample(truth)
    noise = np.random.default_rng(9).normal(size=len(v))
    noise *= 1e-3 / np.sqrt(np.mean(noise ** 2))
    res = fit_parameters(X, v + noise, 1, truth, unit_ball(4), threshold=2e-3)
    assert res.in_model and res.residual == pytest.approx(1e-3, rel=0.2)
    assert np.allclose(res.config.a, truth.a, atol=1e-2)
    assert res.config.lam[0] == pytest.approx(50.0, rel=1e-2)


def test_fit_failure_reports_best_iterate():
    truth = BubbleConfiguration([1.0], [np.zeros(4)], [50.0])
    X, v = _sample(truth)
    init = BubbleConfiguration([0.3], [[0.3, 0.2, 0.0, 0.0]], [5.0])
    with pytest.raises(FitError) as ei:
        fit_parameters(X, v, 1, init, unit_ball(4), max_iter=1)
    assert ei.value.best is not None and ei.value.residual > 0


def test_point_list_round_trip(tmp_path):
    X = np.random.default_rng(0).normal(size=(5, 4)) * 0.1
    p = tmp_path / "pts.txt"
    np.savetxt(p, np.column_stack([X, np.arange(5.0)]))
    Y, v = load_point_list(p)
    assert np.allclose(Y, X) and np.array_equal(v, np.arange(5.0))


def test_canonical_order_and_permutation():
    cfg = BubbleConfiguration([1, 2, 3], [[0, 0, 0, 0], [0.1, 0, 0, 0], [0, 0.1, 0, 0]],
                              [10.0, 30.0, 30.0])
    assert cfg.canonical_order() == [2, 1, 0]
    assert np.array_equal(cfg.permuted([2, 0, 1]).alpha, [3, 1, 2])

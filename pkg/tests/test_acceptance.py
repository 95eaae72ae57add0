"""Acceptance criteria, each at its stated tolerance and runtime budget.

Every test records a single PASS/FAIL line which is printed in the terminal
summary (and immediately with ``-s``).
"""
import contextlib
import itertools
import time

import numpy as np
import pytest

from eulerhopf.bubbles import (BubbleConfiguration, delta, dimensional_constants,
                               fit_parameters, slaved_alpha)
from eulerhopf.cli import run
from eulerhopf.criterion import (EXISTENCE_CERTIFIED, INCONCLUSIVE, all_tuples,
                                 euler_hopf_verdict)
from eulerhopf.geometry import unit_ball
from eulerhopf.greens import GreensEvaluator
from eulerhopf.kfield import CriticalPointSpec, KField
from eulerhopf.pseudoflow import BLEW_UP, FlowModel, detect_blowup, integrate_flow

import brute
from conftest import ACCEPTANCE, on_axis

B4 = unit_ball(4)


@contextlib.contextmanager
def criterion(num, title, budget):
    t0 = time.perf_counter()
    ok = False
    detail = ""
    try:
        yield
        elapsed = time.perf_counter() - t0
        ok = elapsed < budget
        detail = f"{elapsed:.1f}s of {budget:g}s"
        assert ok, f"runtime {elapsed:.1f}s exceeds {budget:g}s"
    except Exception as exc:
        if not detail:
            detail = f"{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
        raise
    finally:
        line = f"[{'PASS' if ok else 'FAIL'}] {num}. {title} ({detail})"
        ACCEPTANCE[num] = line
        print("\n" + line)


# 1 -------------------------------------------------------------------------------------------
def _laplacian4(f, X, h):
    # fourth-order central stencil along each axis
    n = X.shape[1]
    out = np.zeros(len(X))
    for e in np.eye(n):
        out += (-f(X + 2 * h * e) + 16 * f(X + h * e) - 30 * f(X)
                + 16 * f(X - h * e) - f(X - 2 * h * e)) / (12 * h * h)
    return out


@pytest.mark.parametrize("n", [4, 5])
def test_bubble_pde_residual(n):
    with criterion(f"1-n{n}", f"bubble PDE residual n={n}", 5.0):
        rng = np.random.default_rng(100 + n)
        worst = 0.0
        for _ in range(100):
            lam = rng.uniform(1.0, 50.0)
            a = rng.uniform(-0.5, 0.5, n)
            x = a + rng.normal(size=n) * rng.uniform(0.0, 3.0) / lam
            X = x[None, :]
            lhs = -_laplacian4(lambda Y: delta(a, lam, Y), X, 1e-3 / lam)
            rhs = delta(a, lam, X) ** ((n + 2) / (n - 2))
            worst = max(worst, float(np.max(np.abs(lhs - rhs) / rhs)))
        assert worst < 1e-4, worst


# 2 -------------------------------------------------------------------------------------------
def _images(x, y):
    ry = np.linalg.norm(y)
    if ry == 0:
        return 1.0
    return (ry * np.linalg.norm(x - y / ry ** 2)) ** -2.0


def test_montecarlo_green_function():
    with criterion("2", "Monte Carlo H vs images, 20 pairs, 1e5 walks", 120.0):
        mc = GreensEvaluator(B4, "montecarlo", walks=100_000, seed=2024)
        rng = np.random.default_rng(7)
        pairs = []
        while len(pairs) < 20:
            x, y = rng.uniform(-0.7, 0.7, (2, 4))
            if max(np.linalg.norm(x), np.linalg.norm(y)) < 0.75 and np.linalg.norm(x - y) > 0.1:
                pairs.append((x, y))
        for x, y in pairs:
            hxy = mc.regular_part(x, y)
            hyx = mc.regular_part(y, x)
            h = _images(x, y)
            for est in (hxy, hyx):
                assert abs(est.value - h) / h <= 0.02, (x, y, est.value, h)
                assert est.walks == 100_000
            g_xy = np.linalg.norm(x - y) ** -2 - hxy.value
            g_yx = np.linalg.norm(x - y) ** -2 - hyx.value
            assert abs(g_xy - g_yx) <= 3 * np.hypot(hxy.stderr, hyx.stderr)


# 3 -------------------------------------------------------------------------------------------
def test_dimensional_constants():
    with criterion("3", "c2 = 32 pi^2 for n=4", 1.0):
        c = dimensional_constants(4)
        assert abs(c.c2 / (32 * np.pi ** 2) - 1) <= 1e-8
        assert abs(2 * c.c2 / (64 * np.pi ** 2) - 1) <= 1e-8


# 4 -------------------------------------------------------------------------------------------
def _synthetic(seed):
    rng = np.random.default_rng(seed)
    m = 2 + seed % 3
    pts = []
    while len(pts) < m:
        y = rng.uniform(-0.6, 0.6, 4)
        if np.linalg.norm(y) < 0.6 and all(np.linalg.norm(y - q) > 0.2 for q in pts):
            pts.append(y)
    specs = [CriticalPointSpec(y, rng.uniform(2.2, 3.8), rng.choice([-1.0, -2.0, 1.0], 4), 0.05)
             for y in pts]
    return KField.on_domain(B4, specs)


FIELDS = range(12)


@pytest.mark.parametrize("seed", FIELDS)
def test_criterion_engine(seed):
    with criterion(f"4-{seed:02d}", f"criterion engine, synthetic field {seed}", 60.0):
        kf = _synthetic(seed)
        mc = GreensEvaluator(B4, "montecarlo", walks=100_000, seed=seed)
        rep = euler_hopf_verdict(kf, mc, sample_budget=500, seed=seed)
        assert not rep.flagged, rep.flagged
        members, S, _ = brute.brute_force(kf, mc)
        assert sorted(rep.c_infinity) == sorted(members)
        assert rep.S == S
        # interlacing: a principal submatrix's least eigenvalue is no smaller
        by = {im.tau: im for im in rep.tuples}
        for tau, im in by.items():
            for r in range(1, len(tau)):
                for sub in itertools.combinations(tau, r):
                    assert by[sub].rho >= im.rho - im.tolerance
        # K -> cK
        for c in (0.3, 4.0):
            scaled = euler_hopf_verdict(kf.scaled(c), GreensEvaluator(B4, "montecarlo",
                                                                      walks=100_000, seed=seed),
                                        assumptions=rep.assumptions)
            assert scaled.c_infinity == rep.c_infinity
            assert scaled.indices == rep.indices and scaled.S == rep.S


# 5 -------------------------------------------------------------------------------------------
@pytest.mark.parametrize("backend", ["analytic", "montecarlo"])
def test_worked_verdicts(backend):
    with criterion(f"5-{backend}", f"worked verdicts ({backend})", 120.0):
        greens = GreensEvaluator(B4, backend, walks=100_000, seed=5)
        cases = [(on_axis(-0.2, 0.2), -1, 2, EXISTENCE_CERTIFIED),
                 (on_axis(-0.7, 0.7, eta=0.05), 1, 1, INCONCLUSIVE),
                 (on_axis(0.0), None, 1, INCONCLUSIVE)]
        for pts, sign, S, verdict in cases:
            kf = KField.on_domain(B4, pts)
            rep = euler_hopf_verdict(kf, greens, sample_budget=1000)
            assert rep.assumptions.passed
            members, S_brute, rhos = brute.brute_force(kf, greens)
            if sign is not None:
                assert np.sign(rhos[(0, 1)]) == sign
            assert rep.S == S == S_brute and rep.verdict == verdict


# 6 -------------------------------------------------------------------------------------------
def _cfg(model, a, lam):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    K = [model.kfield.eval(x) for x in a]
    return BubbleConfiguration(slaved_alpha(a, K, 4), a, np.asarray(lam, dtype=float))


def _battery():
    """(region family, model, start) for >= 20 seeded initial configurations."""
    near = FlowModel(B4, KField.on_domain(B4, on_axis(-0.2, 0.2)))
    far = FlowModel(B4, KField.on_domain(B4, on_axis(-0.7, 0.7, eta=0.05)))
    one = FlowModel(B4, KField.on_domain(B4, on_axis(0.0)))
    rng = np.random.default_rng(2026)

    def jitter(scale=0.02):
        return rng.normal(size=4) * scale

    out = []
    for _ in range(4):
        out.append(("V1", one, _cfg(one, [jitter()], [rng.uniform(15, 40)])))
        y0, y1 = far.kfield.points[0].y, far.kfield.points[1].y
        out.append(("V1", far, _cfg(far, [y0 + jitter(0.01), y1 + jitter(0.01)],
                                    rng.uniform(15, 40, 2))))
        y0, y1 = near.kfield.points[0].y, near.kfield.points[1].y
        out.append(("V2", near, _cfg(near, [y0 + jitter(), y1 + jitter()],
                                     rng.uniform(15, 40, 2))))
        out.append(("V3", near, _cfg(near, [y1 + jitter(), y1 + jitter()],
                                     [rng.uniform(15, 30), rng.uniform(200, 400)])))
        out.append(("V4", near, _cfg(near, [[rng.uniform(0.05, 0.15), rng.uniform(0.4, 0.6), 0, 0]],
                                     [rng.uniform(20, 60)])))
        d0 = near.params.d0
        edge = np.r_[0.3, 0.0, 1.0, 0.0]
        edge = edge / np.linalg.norm(edge) * (1 - rng.uniform(0.3, 0.8) * d0)
        out.append(("Vb", near, _cfg(near, [edge, y0 + jitter()],
                                     [rng.uniform(300, 600), rng.uniform(20, 40)])))
    return out


def test_pseudoflow_dichotomy():
    with criterion("6", "pseudoflow dichotomy battery", 600.0):
        runs = _battery()
        assert len(runs) >= 20
        seen = set()
        blowups = 0
        for family, model, c0 in runs:
            tr = integrate_flow(c0, model)
            first = tr.labels[0]
            seen.add(family)
            if family == "Vb":
                assert first.B
            else:
                assert first.interior == family, (family, first.name)
            rep = detect_blowup(tr, model)
            blew = float(np.max(tr.max_lambda)) > model.params.lambda_max
            assert blew == (tr.verdict.kind == BLEW_UP)
            if blew:
                blowups += 1
                last = tr.labels[-1]
                assert last.interior == "V1" and not last.B2
                assert rep.in_c_infinity and not rep.alarm
            # distance to the boundary never falls while below d0
            d = tr.min_distance(model.domain)
            below = d[:-1] < model.params.d0
            assert np.all(d[1:][below] >= d[:-1][below])
            J, se = np.array(tr.J), np.array(tr.J_se)
            assert np.all(np.diff(J) <= 3 * np.maximum(se[:-1], se[1:]))
        assert seen == {"V1", "V2", "V3", "V4", "Vb"}
        assert blowups > 0


# 7 -------------------------------------------------------------------------------------------
def _samples(cfg, m=300, seed=0):
    rng = np.random.default_rng(seed)
    X = B4.sample_interior(m, rng)
    near = np.concatenate([ai + 0.5 / li * rng.normal(size=(m // 2, 4))
                           for ai, li in zip(cfg.a, cfg.lam)])
    X = np.concatenate([X, near[B4.signed_distance_many(near) < 0]])
    return X, cfg.evaluate(X, domain=B4)


def test_fit_round_trip():
    with criterion("7", "fit round-trip, one and two bubbles", 30.0):
        cases = [
            (BubbleConfiguration([1.0], [[0.1, -0.05, 0, 0]], [50.0]),
             BubbleConfiguration([0.8], [[0.12, -0.04, 0.01, 0]], [40.0])),
            (BubbleConfiguration([1.0, 0.6], [[0.4, 0, 0, 0], [-0.3, 0.2, 0, 0]], [20.0, 30.0]),
             BubbleConfiguration([0.5, 0.9], [[-0.28, 0.19, 0, 0], [0.41, 0.01, 0, 0]],
                                 [27.0, 22.0])),
        ]
        for truth, init in cases:
            X, v = _samples(truth)
            res = fit_parameters(X, v, truth.p, init, B4)
            assert res.residual <= 1e-8
            got, want = res.config.canonical(), truth.canonical()
            err = max(np.max(np.abs(got.alpha - want.alpha)), np.max(np.abs(got.a - want.a)),
                      np.max(np.abs(got.lam - want.lam) / want.lam))
            assert err <= 1e-6, err


# 8 -------------------------------------------------------------------------------------------
CONFIG = """\
seed: 17
domain: {type: ball, center: [0, 0, 0, 0], radius: 1}
kfield:
  critical_points:
    - {y: [-0.2, 0, 0, 0], beta: 3, b: [-1, -1, -1, -1], eta: 0.1}
    - {y: [0.2, 0, 0, 0], beta: 3, b: [-1, -1, -1, -1], eta: 0.1}
greens: {backend: montecarlo, walks: 20000}
analyses: {flow: true, bubbles: true}
flow:
  params: {horizon: 3, quadrature_budget: 2000}
  random_starts: {count: 2}
bubbles:
  quadrature_budget: 5000
  configurations: [{a: [[0.1, 0, 0, 0]], lambda: [30]}]
"""


def test_reproducible_reports(tmp_path):
    with criterion("8", "byte-identical reports", 300.0):
        p = tmp_path / "run.yaml"
        p.write_text(CONFIG)
        _, a = run(p, out=str(tmp_path / "a"), timestamp=False, trajectories=True)
        _, b = run(p, out=str(tmp_path / "b"), timestamp=False, trajectories=True)
        assert open(a, "rb").read() == open(b, "rb").read()
        for f in sorted((tmp_path / "a").glob("trajectory_*.csv")):
            assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()

"""Bubbles, their projections, interaction parameters and the functional J."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import gamma, pi

import numpy as np
from scipy import integrate, special

from .errors import QuadratureError
from .greens import Estimate, GreensEvaluator
from .geometry import Ball, Domain


def c_n(n):
    return (n * (n - 2.0)) ** ((n - 2.0) / 4.0)


def delta(a, lam, x):
    """Bubble c_n (lam / (1 + lam^2 |x - a|^2))^((n-2)/2); ``x`` may be (m, n)."""
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    r2 = np.sum((x - a) ** 2, axis=-1)
    return c_n(n) * (lam / (1.0 + lam * lam * r2)) ** ((n - 2) / 2.0)


def _ball_correction(a, lam, x, n):
    """Harmonic extension of the bubble's trace on the unit ball (closed form).

    The trace equals that of a point charge at q a/|a|^2 outside the ball,
    with q the larger root of q^2 - A q + |a|^2 = 0, A = 1 + |a|^2 + 1/lam^2.
    """
    aa = float(np.dot(a, a))
    A = 1.0 + aa + 1.0 / (lam * lam)
    q = 0.5 * (A + np.sqrt(A * A - 4.0 * aa))
    xa = x @ a
    xx = np.sum(x * x, axis=-1)
    base = q - 2.0 * xa + aa * xx / q
    return c_n(n) * lam ** (-(n - 2) / 2.0) * base ** (-(n - 2) / 2.0)


def projection_correction(a, lam, x, greens: GreensEvaluator = None, domain: Domain = None,
                          walks=None):
    """h = delta - P delta.  Closed form on balls, walk-on-spheres otherwise."""
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    dom = domain if domain is not None else greens.domain
    n = a.shape[0]
    if isinstance(dom, Ball) and (greens is None or greens.backend == "analytic"):
        R, c = dom.radius, dom.center_point
        return R ** (-(n - 2) / 2.0) * _ball_correction((a - c) / R, lam * R, (x - c) / R, n)
    if greens is None:
        raise ValueError("a Green evaluator is needed off the ball")
    X = np.atleast_2d(x)
    out = np.array([greens.harmonic_extension(xi, lambda B: delta(a, lam, B), walks).value
                    if dom.signed_distance(xi) < 0 else float(delta(a, lam, xi))
                    for xi in X])
    return out if x.ndim > 1 else float(out[0])


def p_delta(a, lam, x, greens: GreensEvaluator = None, domain: Domain = None, walks=None):
    """Projected bubble P delta = delta - h (vanishes on the boundary)."""
    return delta(a, lam, x) - projection_correction(a, lam, x, greens, domain, walks)


def epsilon_ij(ai, li, aj, lj):
    ai = np.asarray(ai, dtype=float)
    aj = np.asarray(aj, dtype=float)
    n = ai.shape[0]
    d2 = float(np.sum((ai - aj) ** 2))
    return (li / lj + lj / li + li * lj * d2) ** (-(n - 2) / 2.0)


def epsilon_lambda_derivative(ai, li, aj, lj):
    """lam_i * d eps_ij / d lam_i."""
    ai = np.asarray(ai, dtype=float)
    aj = np.asarray(aj, dtype=float)
    n = ai.shape[0]
    d2 = float(np.sum((ai - aj) ** 2))
    A = li / lj + lj / li + li * lj * d2
    return -(n - 2) / 2.0 * A ** (-n / 2.0) * (li / lj - lj / li + li * lj * d2)


def epsilon_a_derivative(ai, li, aj, lj):
    """(1/lam_i) * grad_{a_i} eps_ij."""
    ai = np.asarray(ai, dtype=float)
    aj = np.asarray(aj, dtype=float)
    n = ai.shape[0]
    d2 = float(np.sum((ai - aj) ** 2))
    A = li / lj + lj / li + li * lj * d2
    return -(n - 2) * A ** (-n / 2.0) * lj * (ai - aj)


# -- constants ---------------------------------------------------------------------
def sphere_area(n):
    """Surface measure of the unit sphere in R^n."""
    return 2.0 * pi ** (n / 2.0) / gamma(n / 2.0)


def radial_integral(f, n):
    """int_{R^n} f(|x|) dx by adaptive quadrature on the radial profile."""
    val, _ = integrate.quad(lambda r: r ** (n - 1) * f(r), 0.0, np.inf,
                            epsabs=0.0, epsrel=1e-13, limit=400)
    return sphere_area(n) * val


@dataclass(frozen=True)
class DimensionalConstants:
    n: int
    c_n: float
    c2: float
    c4: float
    S_n: float

    def c5(self, beta):
        return beta / self.n * self.c4

    def as_dict(self):
        return {"n": self.n, "c_n": self.c_n, "c2": self.c2, "c4": self.c4, "S_n": self.S_n}


@lru_cache(maxsize=None)
def dimensional_constants(n) -> DimensionalConstants:
    n = int(n)
    if n < 3:
        raise ValueError("dimension must be at least 3")
    cn = c_n(n)
    w = cn ** (2.0 * n / (n - 2))
    c2 = w * radial_integral(lambda r: (1 + r * r) ** (-(n + 2) / 2.0), n)
    c4 = w * radial_integral(lambda r: r * r * (1 + r * r) ** (-(n + 1.0)), n)
    Sn = w * radial_integral(lambda r: (1 + r * r) ** (-float(n)), n)
    return DimensionalConstants(n, cn, c2, c4, Sn)


# -- configurations ------------------------------------------------------------------
@dataclass
class BubbleConfiguration:
    alpha: np.ndarray
    a: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float).ravel()
        self.a = np.atleast_2d(np.asarray(self.a, dtype=float))
        self.lam = np.asarray(self.lam, dtype=float).ravel()
        if not (len(self.alpha) == len(self.lam) == len(self.a)):
            raise ValueError("alpha, a and lam must describe the same number of bubbles")

    @property
    def p(self):
        return len(self.lam)

    @property
    def n(self):
        return self.a.shape[1]

    def validate(self, domain: Domain):
        if np.any(self.alpha <= 0) or np.any(self.lam <= 0):
            raise ValueError("alpha and lam must be positive")
        for ai in self.a:
            if domain.signed_distance(ai) >= 0:
                raise ValueError(f"bubble centre {ai.tolist()} is not interior")

    def canonical_order(self):
        """Descending lam, ties by lexicographic a."""
        keys = [(-float(l), tuple(float(v) for v in ai)) for l, ai in zip(self.lam, self.a)]
        return sorted(range(self.p), key=lambda i: keys[i])

    def canonical(self):
        o = self.canonical_order()
        return BubbleConfiguration(self.alpha[o], self.a[o], self.lam[o])

    def permuted(self, order):
        order = list(order)
        return BubbleConfiguration(self.alpha[order], self.a[order], self.lam[order])

    def copy(self):
        return BubbleConfiguration(self.alpha.copy(), self.a.copy(), self.lam.copy())

    def evaluate(self, x, greens=None, domain=None):
        """u = sum alpha_i P delta_i at points ``x``."""
        return sum(al * p_delta(ai, li, x, greens, domain)
                   for al, ai, li in zip(self.alpha, self.a, self.lam))

    def as_dict(self):
        return {"alpha": self.alpha.tolist(), "a": self.a.tolist(), "lambda": self.lam.tolist()}


def slaved_alpha(a, kvals, n):
    """alpha_i with alpha_i^{4/(n-2)} K(a_i) J^{n/(n-2)} = 1 at leading order.

    With alpha_i proportional to K_i^{-(n-2)/4}, the leading-order J is
    S_n^{2/n} Q^{2/n} with Q = sum K_i^{-(n-2)/2}, giving
    alpha_i = (S_n Q)^{-1/2} K_i^{-(n-2)/4}.
    """
    kvals = np.asarray(kvals, dtype=float)
    Sn = dimensional_constants(n).S_n
    Q = float(np.sum(kvals ** (-(n - 2) / 2.0)))
    return (Sn * Q) ** -0.5 * kvals ** (-(n - 2) / 4.0)


def reduced_J(alpha, kvals, n):
    """Leading-order J for well separated, concentrated bubbles."""
    Sn = dimensional_constants(n).S_n
    alpha = np.asarray(alpha, dtype=float)
    kvals = np.asarray(kvals, dtype=float)
    num = Sn * np.sum(alpha ** 2)
    den = Sn * np.sum(alpha ** (2 * n / (n - 2.0)) * kvals)
    return num / den ** ((n - 2.0) / n)


# -- quadrature for J ------------------------------------------------------------------
@dataclass
class QuadratureRule:
    """Standardised samples reused across calls (common random numbers).

    ``uniform`` lives in [0, 1]^n; each ``layers[i]`` holds multivariate-t
    draws (nu = n) that are mapped to a_i + z / lam_i.
    """
    n: int
    uniform: np.ndarray
    layers: list
    weight0: float
    nu: float

    @classmethod
    def make(cls, n, p, budget=200_000, seed=0, weight0=0.2):
        rng = np.random.default_rng([int(seed), int(n), int(p), int(budget)])
        n0 = int(round(weight0 * budget)) if p else budget
        per = (budget - n0) // p if p else 0
        U = rng.random((n0, n))
        layers = []
        for _ in range(p):
            g = rng.standard_normal((per, n))
            chi = rng.chisquare(n, size=per)
            layers.append(g / np.sqrt(chi / n)[:, None])
        return cls(n, U, layers, n0 / max(n0 + per * p, 1), float(n))

    @property
    def size(self):
        return len(self.uniform) + sum(len(z) for z in self.layers)


def _t_logpdf(z, n, nu):
    c = (special.gammaln((nu + n) / 2) - special.gammaln(nu / 2) - 0.5 * n * np.log(nu * np.pi))
    return c - 0.5 * (nu + n) * np.log1p(np.sum(z * z, axis=1) / nu)


def functional_J(config: BubbleConfiguration, kfield, domain: Domain, budget=200_000, seed=0,
                 rule: QuadratureRule = None, greens: GreensEvaluator = None,
                 correction_walks=256) -> Estimate:
    """Importance-sampled J(sum alpha_i P delta_i).

    Uses int |grad u|^2 = int u sum alpha_i delta_i^((n+2)/(n-2)), which holds
    because -Laplacian(P delta) = delta^((n+2)/(n-2)) and u = 0 on the boundary.
    Error bar by the delta method.
    """
    n = config.n
    p = config.p
    cfg = config.canonical()
    if rule is None:
        rule = QuadratureRule.make(n, p, budget, seed)
    if len(rule.layers) != p or rule.n != n:
        raise ValueError("quadrature rule does not match the configuration")
    lo, hi = domain.bounding_box()
    vol = float(np.prod(hi - lo))
    N0 = len(rule.uniform)
    Ns = [N0] + [len(z) for z in rule.layers]
    N = sum(Ns)
    w = np.array(Ns, dtype=float) / N

    strata = [lo + rule.uniform * (hi - lo)]
    for z, ai, li in zip(rule.layers, cfg.a, cfg.lam):
        strata.append(ai + z / li)

    pw = (n + 2.0) / (n - 2.0)
    q2 = 2.0 * n / (n - 2.0)
    contribs = []
    for X in strata:
        inside = domain.signed_distance_many(X) < 0
        # deterministic-mixture density
        in_box = np.all((X >= lo) & (X <= hi), axis=1)
        dens = w[0] * in_box / vol
        for k, (ai, li) in enumerate(zip(cfg.a, cfg.lam)):
            dens = dens + w[k + 1] * np.exp(_t_logpdf((X - ai) * li, n, rule.nu)) * li ** n
        fnum = np.zeros(len(X))
        fden = np.zeros(len(X))
        Xi = X[inside]
        if len(Xi):
            u = np.zeros(len(Xi))
            src = np.zeros(len(Xi))
            for al, ai, li in zip(cfg.alpha, cfg.a, cfg.lam):
                d = delta(ai, li, Xi)
                if greens is not None and greens.backend == "montecarlo":
                    h = _leading_correction(ai, li, Xi, greens, correction_walks)
                else:
                    h = projection_correction(ai, li, Xi, domain=domain)
                u += al * (d - h)
                src += al * d ** pw
            K = kfield.eval(Xi) if hasattr(kfield, "eval") else kfield(Xi)
            fnum[inside] = u * src / dens[inside]
            fden[inside] = K * np.abs(u) ** q2 / dens[inside]
        contribs.append(np.stack([fnum, fden], axis=1))

    # stratified totals: the estimate is the pooled mean over all N samples
    tot = np.concatenate(contribs).sum(axis=0) / N
    cov = np.zeros((2, 2))
    for C in contribs:
        if len(C) > 1:
            cov += len(C) * np.cov(C.T) / N ** 2
    num, den = tot
    if not (den > 0) or not np.isfinite(den):
        raise QuadratureError(f"nonpositive denominator estimate {den!r}")
    th = (n - 2.0) / n
    J = num / den ** th
    grad = np.array([1.0 / den ** th, -th * num / den ** (th + 1)])
    se = float(np.sqrt(max(grad @ cov @ grad, 0.0)))
    return Estimate(float(J), se, int(N), 0)


def _leading_correction(a, lam, X, greens, walks):
    """c_n lam^{-(n-2)/2} H(a, x): walks from each bubble centre are shared by all x."""
    n = len(a)
    ex, _ = greens.exits(a, walks=walks)
    out = np.empty(len(X))
    for s in range(0, len(X), 2048):
        Y = X[s:s + 2048]
        out[s:s + 2048] = np.mean(np.sum((ex[None, :, :] - Y[:, None, :]) ** 2, axis=2)
                                  ** (-(n - 2) / 2.0), axis=1)
    return c_n(n) * lam ** (-(n - 2) / 2.0) * out


# -- V(p, eps) ---------------------------------------------------------------------------
def membership_V_p_eps(config: BubbleConfiguration, eps, kfield, domain: Domain):
    """Clause-by-clause membership.  Returns ``(member, violated_clauses)``."""
    n = config.n
    bad = []
    if np.any(config.lam <= 1.0 / eps):
        bad.append("lambda")
    for i in range(config.p):
        for j in range(i + 1, config.p):
            if epsilon_ij(config.a[i], config.lam[i], config.a[j], config.lam[j]) >= eps:
                bad.append("epsilon_ij")
                break
        else:
            continue
        break
    try:
        d = np.array([domain.dist_boundary(ai) for ai in config.a])
    except Exception:
        d = np.zeros(config.p)
    if np.any(config.lam * d <= 1.0 / eps):
        bad.append("lambda_d")
    K = np.array([kfield.eval(ai) for ai in config.a])
    s = config.alpha ** (4.0 / (n - 2)) * K
    if np.any(np.abs(s[:, None] / s[None, :] - 1.0) >= eps):
        bad.append("alpha_ratio")
    return (not bad), bad


SATISFIED_BY_CONSTRUCTION = ("v_norm",)


# -- fitting -----------------------------------------------------------------------------
@dataclass
class FitResult:
    config: BubbleConfiguration
    residual: float
    iterations: int
    in_model: bool
    history: list = field(default_factory=list)


def _pack(cfg):
    return np.concatenate([cfg.alpha, cfg.a.ravel(), np.log(cfg.lam)])


def _unpack(theta, p, n):
    return BubbleConfiguration(theta[:p], theta[p:p + p * n].reshape(p, n),
                               np.exp(theta[p + p * n:]))


def load_point_list(path):
    """Rows ``x_1 ... x_n value``; returns ``(X, values)``."""
    data = np.loadtxt(path, ndmin=2)
    return data[:, :-1], data[:, -1]


def fit_parameters(X, values, p, initial: BubbleConfiguration, domain: Domain,
                   greens: GreensEvaluator = None, max_iter=200, xtol=1e-14, threshold=None,
                   fd_step=1e-7):
    """Damped Gauss-Newton (Levenberg-Marquardt) fit of sum alpha_i P delta_i.

    Parameters are (alpha, a, log lam) with a central-difference Jacobian.
    ``residual`` is the root mean square misfit over the samples.  Raises
    :class:`FitError` if the iteration limit is reached first.
    """
    from .errors import FitError

    X = np.atleast_2d(np.asarray(X, dtype=float))
    values = np.asarray(values, dtype=float)
    if initial.p != p:
        raise ValueError("initial guess has the wrong number of bubbles")
    n = X.shape[1]

    def model(theta):
        return _unpack(theta, p, n).evaluate(X, greens, domain)

    def feasible(theta):
        c = _unpack(theta, p, n)
        return np.all(c.alpha > 0) and all(domain.signed_distance(ai) < 0 for ai in c.a)

    theta = _pack(initial)
    r = model(theta) - values
    cost = float(r @ r)
    mu = None
    hist = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        Jm = np.empty((len(X), len(theta)))
        for k in range(len(theta)):
            h = fd_step * max(1.0, abs(theta[k]))
            e = np.zeros_like(theta)
            e[k] = h
            Jm[:, k] = (model(theta + e) - model(theta - e)) / (2 * h)
        A = Jm.T @ Jm
        g = Jm.T @ r
        D = np.maximum(np.diag(A), 1e-300)
        if mu is None:
            mu = 1e-3
        step_taken = False
        for _ in range(60):
            try:
                step = np.linalg.solve(A + mu * np.diag(D), -g)
            except np.linalg.LinAlgError:
                mu *= 4
                continue
            trial = theta + step
            if feasible(trial):
                rt = model(trial) - values
                ct = float(rt @ rt)
                if ct <= cost:
                    theta, r, cost = trial, rt, ct
                    mu = max(mu / 3.0, 1e-12)
                    step_taken = True
                    break
            mu *= 4.0
        hist.append(np.sqrt(cost / len(X)))
        if not step_taken or np.linalg.norm(step) <= xtol * (np.linalg.norm(theta) + xtol) \
                or cost == 0.0:
            converged = True
            break
    cfg = _unpack(theta, p, n).canonical()
    res = float(np.sqrt(cost / len(X)))
    if not converged:
        raise FitError(f"no convergence after {max_iter} iterations", best=cfg, residual=res)
    ok = True if threshold is None else res <= threshold
    return FitResult(cfg, res, it, ok, hist)

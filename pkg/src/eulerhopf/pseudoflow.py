"""Reduced pseudo-gradient dynamics on bubble centres and scales.

Velocities use normalised coordinates: ``s_i = lam_i'/lam_i`` and
``v_i = lam_i a_i'``.  A field written as a combination of
``lam_i dPdelta_i/dlam_i`` and ``(1/lam_i) dPdelta_i/da_i`` has exactly
these coefficients.  The weights alpha_i are slaved to the centres.
"""
from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

import numpy as np

from .bubbles import (BubbleConfiguration, QuadratureRule, dimensional_constants,
                      epsilon_a_derivative, epsilon_ij, epsilon_lambda_derivative,
                      functional_J, reduced_J, slaved_alpha)
from .criterion import build_full_matrix, FullMatrix
from .errors import AssumptionsViolated, IntegratorError
from .geometry import Ball, Domain
from .greens import GreensEvaluator
from .kfield import KField
from .linalg import least_eigenpair

BLEW_UP = "BlewUpAt"
BOUNDED = "BoundedOverHorizon"
EXITED = "ExitedModel"
ABORTED = "AssumptionsViolated"


@dataclass(frozen=True)
class FlowParams:
    """Constants of the pseudo-gradient.  ``None`` means derived from the problem."""
    eps: float = 0.1
    d0: Optional[float] = None          # 0.05 * diameter
    eta: Optional[float] = None         # half the smallest critical point separation
    delta: float = 0.1
    gamma: float = 0.2
    C: float = 10.0
    c1: float = 0.1
    c2: float = 0.1
    M: float = 10.0
    M3: float = 10.0
    m: float = 10.0
    m1: float = 10.0
    lambda_max: float = 1e6
    hysteresis: float = 0.05
    horizon: float = 200.0
    dt_max: float = 0.1
    max_rel_lambda: float = 0.02
    a_step_fraction: float = 0.1
    brake_width: float = 0.5
    quadrature_budget: int = 10_000
    quadrature_seed: int = 0
    max_steps: int = 100_000

    def resolved(self, domain: Domain, kfield: KField):
        d0 = self.d0 if self.d0 is not None else 0.05 * domain.diameter
        eta = self.eta
        if eta is None:
            ys = [p.y for p in kfield.points]
            if len(ys) >= 2:
                eta = 0.5 * min(float(np.linalg.norm(ys[i] - ys[j]))
                                for i in range(len(ys)) for j in range(i + 1, len(ys)))
            elif ys:
                eta = float(kfield.points[0].eta)
            else:
                eta = 0.05 * domain.diameter
        return replace(self, d0=float(d0), eta=float(eta))

    def as_dict(self):
        return asdict(self)


def _smooth3(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def psi(t, C):
    """1 below C, 0 above 2C, cubic bridge in between."""
    return 1.0 - _smooth3((np.asarray(t, dtype=float) - C) / C)


def chi(t, gamma):
    """0 below gamma, 1 above 1, cubic bridge in between."""
    return _smooth3((np.asarray(t, dtype=float) - gamma) / (1.0 - gamma))


# -- model bundle ---------------------------------------------------------------------------
class FlowModel:
    """Everything the dynamics needs: domain, K, Green evaluator and constants."""

    def __init__(self, domain: Domain, kfield: KField, params: FlowParams = None,
                 greens: GreensEvaluator = None, full: FullMatrix = None):
        self.domain = domain
        self.kfield = kfield
        if greens is None:
            greens = GreensEvaluator(domain, "analytic" if isinstance(domain, Ball) else
                                     "montecarlo")
        self.greens = greens
        self.params = (params or FlowParams()).resolved(domain, kfield)
        self.n = domain.n
        self.consts = dimensional_constants(self.n)
        self._full = full

    @property
    def full(self):
        if self._full is None:
            self._full = build_full_matrix(self.kfield, self.greens)
        return self._full

    def tuple_rho(self, tau):
        sub, var = self.full.sub(tau)
        rho, e = least_eigenpair(sub)
        from .criterion import rho_tolerance
        tol, _ = rho_tolerance(e, var, self.full.analytic)
        return rho, e, tol

    def H(self, x, y):
        return self.greens.regular_part(x, y).value

    def dist(self, a):
        return self.domain.dist_boundary(a)

    def normal(self, a):
        return self.domain.outward_normal(a, shell=np.inf)


@dataclass
class Velocity:
    s: np.ndarray   # lam'/lam
    v: np.ndarray   # lam * a'

    @property
    def lam_rate(self):
        return self.s

    def a_dot(self, cfg):
        return self.v / cfg.lam[:, None]


# -- labels -------------------------------------------------------------------------------------
@dataclass
class RegionLabel:
    B: tuple
    B1: tuple
    B2: tuple
    capture: tuple                 # critical point index per bubble, -1 if none
    interior: Optional[str]        # V1..V4 for the B1 part
    case: Optional[int] = None     # case of the top-level interior region
    subcase: Optional[str] = None
    T1: tuple = ()
    T2: tuple = ()
    sets: dict = field(default_factory=dict)

    @property
    def name(self):
        parts = []
        if self.interior:
            parts.append(self.interior + (f".{self.case}" if self.case else ""))
        if self.B2:
            parts.append("Vb")
        return "+".join(parts) if parts else "empty"

    def as_dict(self):
        d = asdict(self)
        d["name"] = self.name
        return d


def _order_lambda(cfg, idx):
    return sorted(idx, key=lambda i: (float(cfg.lam[i]), tuple(float(v) for v in cfg.a[i])))


def _chain_closure(cfg, seeds, pool, link):
    """Indices in ``pool`` reachable from ``seeds`` by hops shorter than ``link``."""
    got = set(seeds)
    frontier = list(seeds)
    while frontier:
        i = frontier.pop()
        for j in pool:
            if j not in got and np.linalg.norm(cfg.a[i] - cfg.a[j]) < link:
                got.add(j)
                frontier.append(j)
    return got


def _band(value, threshold, h, prev_in, above=True):
    """Hysteresis test ``value >= threshold`` (or ``<`` when ``above`` is false)."""
    if prev_in is None:
        thr = threshold
    elif prev_in:
        thr = threshold * (1 - h) if above else threshold * (1 + h)
    else:
        thr = threshold * (1 + h) if above else threshold * (1 - h)
    return value >= thr if above else value < thr


def _captures(model, cfg, previous):
    """Nearest critical point within eta of each centre, or -1."""
    P = model.params
    out = []
    for i in range(cfg.p):
        cands = []
        for j, cp in enumerate(model.kfield.points):
            d = float(np.linalg.norm(cfg.a[i] - cp.y))
            prev_in = None if previous is None else previous.capture[i] == j
            if _band(d, P.eta, P.hysteresis, prev_in, above=False):
                cands.append((d, j))
        out.append(min(cands)[1] if cands else -1)
    return tuple(out)


def classify_region(config: BubbleConfiguration, kfield: KField = None, domain: Domain = None,
                    params: FlowParams = None, greens: GreensEvaluator = None,
                    previous: RegionLabel = None, model: FlowModel = None) -> RegionLabel:
    """Region label of a configuration.

    Pure in ``(config, previous)``: thresholds carry a relative hysteresis band
    whose side is chosen by the previous label, so replaying a stored
    trajectory reproduces its labels.
    """
    if model is None:
        model = FlowModel(domain, kfield, params, greens)
    return _classify(config, model, previous)[0]


def _classify(cfg, model, previous):
    """Label and field in one pass, so the field uses exactly the label's decisions."""
    P = model.params
    p = cfg.p
    s = np.zeros(p)
    v = np.zeros((p, cfg.n))
    d = np.array([model.dist(ai) for ai in cfg.a])
    B = tuple(i for i in range(p) if _band(d[i], 2 * P.d0, P.hysteresis,
                                           None if previous is None else i in previous.B))
    B1 = tuple(sorted(_chain_closure(cfg, B, range(p), P.d0 / p))) if B else ()
    B2 = tuple(i for i in range(p) if i not in B1)
    capture = _captures(model, cfg, previous)
    label = RegionLabel(B, B1, B2, capture, None)
    if B1:
        info = {}
        ss, vv = _interior_field(model, cfg, list(B1), capture, previous, info, top=True)
        label.interior = info["region"]
        label.case = info.get("case")
        label.subcase = info.get("subcase")
        label.sets.update({k: v for k, v in info.items() if k not in ("region", "case", "subcase")})
        for i in ss:
            s[i] += ss[i]
            v[i] += vv[i]
    if B2:
        info = {}
        ss, vv = _boundary_field(model, cfg, list(B2), info)
        label.T1 = info["T1"]
        label.T2 = info["T2"]
        label.sets.update({k: v for k, v in info.items() if k not in ("T1", "T2")})
        for i in ss:
            s[i] += ss[i]
            v[i] += vv[i]
    return label, Velocity(s, v)


# -- interior fields ------------------------------------------------------------------------------
def _xbar(model, cfg, i, cap):
    cp = model.kfield.points[cap]
    t = cfg.a[i] - cp.y
    w = 1.0 - psi(cfg.lam[i] * np.abs(t), model.params.C)
    return w * cp.b * np.sign(t)


def _v1_condition(model, cfg, i, cap, prev_case2):
    """Bubble i is far from its point on the scale lam^-alpha and X-bar is fully switched on.

    The second clause (psi = 0, i.e. lam*max|t_k| >= 2C) keeps the drift from
    stalling where its cutoff weight is nearly zero.
    """
    P = model.params
    cp = model.kfield.points[cap]
    t = cfg.a[i] - cp.y
    alpha = (model.n - 3.0) / (cp.beta - 1.0)
    far = cfg.lam[i] ** alpha * np.linalg.norm(t)
    active = cfg.lam[i] * np.max(np.abs(t))
    return (_band(far, P.delta, P.hysteresis, prev_case2)
            and _band(active, 2.0 * P.C, P.hysteresis, prev_case2))


def _interior_field(model, cfg, idx, capture, previous, info, top=False):
    """Returns ``(s, v)`` dicts over ``idx`` and fills ``info`` with the region data."""
    P = model.params
    n = model.n
    s = {i: 0.0 for i in idx}
    v = {i: np.zeros(n) for i in idx}
    order = _order_lambda(cfg, idx)
    prev_region = previous.interior if (top and previous is not None) else None
    prev_case = previous.case if (top and previous is not None) else None

    def add(sub_s, sub_v, w=1.0):
        for k in sub_s:
            s[k] += w * sub_s[k]
            v[k] = v[k] + w * sub_v[k]

    def add_xbar(which):
        for k in which:
            v[k] = v[k] + _xbar(model, cfg, k, capture[k])

    free = [i for i in order if capture[i] < 0]
    if free:
        info["region"] = "V4"
        pos = order.index(free[0])
        i1 = order[pos]
        info["i1"] = int(i1)
        if pos:
            sub_s, sub_v = _interior_field(model, cfg, order[:pos], capture, None, {})
            add(sub_s, sub_v)
        g = model.kfield.grad(cfg.a[i1])
        gn = float(np.linalg.norm(g))
        if gn > 1e-14 or not np.isfinite(gn):
            v[i1] = v[i1] + P.M * g / gn
        for r in range(pos, len(order)):
            s[order[r]] -= P.M * P.M3 * 2.0 ** (r + 1)
        return s, v

    caps = [capture[i] for i in idx]
    if len(set(caps)) < len(caps):
        info["region"] = "V3"
        groups = {}
        for i in idx:
            groups.setdefault(capture[i], []).append(i)
        clustered = {i for g in groups.values() if len(g) >= 2 for i in g}
        chibar = {}
        for i in clustered:
            mates = [j for j in groups[capture[i]] if j != i]
            chibar[i] = float(sum(chi(cfg.lam[i] / cfg.lam[j], P.gamma) for j in mates))
        i0 = order[0]
        w3 = {i: -chibar.get(i, 0.0) for i in idx}
        if i0 in clustered and chibar[i0] != 0.0:
            info["case"] = 1
            add(w3, {i: np.zeros(n) for i in idx})
        else:
            info["case"] = 2
            D = [i for i in order if ((i in clustered and chibar[i] == 0.0) or i not in clustered)
                 and cfg.lam[i] / cfg.lam[i0] < 1.0 / P.gamma]
            info["D"] = tuple(int(i) for i in D)
            add(w3, {i: np.zeros(n) for i in idx}, P.M)
            sub_s, sub_v = _interior_field(model, cfg, D, capture, None, {})
            add(sub_s, sub_v)
        add_xbar(idx)
        return s, v

    tau = tuple(caps)
    rho, e, tol = model.tuple_rho(tau)
    if abs(rho) <= tol:
        raise AssumptionsViolated(f"least eigenvalue of {tuple(sorted(tau))} within tolerance of 0",
                                  subset=tuple(sorted(tau)), rho=rho, tolerance=tol)
    info["rho"] = float(rho)
    if rho > 0:
        info["region"] = "V1"
        keep2 = (prev_region == "V1" and prev_case == 2) if prev_region is not None else None
        viol = [i for i in order if _v1_condition(model, cfg, i, capture[i], keep2)]
        if not viol:
            info["case"] = 1
            for i in idx:
                s[i] = 1.0
            return s, v
        info["case"] = 2
        pos1 = order.index(viol[0])
        pos0 = pos1
        while pos0 > 0 and cfg.lam[order[pos0 - 1]] >= cfg.lam[order[pos0]] / P.M:
            pos0 -= 1
        info["I"] = tuple(int(i) for i in order[pos0:pos1 + 1])
        if pos0 > 0:
            info["subcase"] = "2.1"
            sub_s, sub_v = _interior_field(model, cfg, order[:pos0], capture, None, {})
            add(sub_s, sub_v)
            add_xbar(order[pos0:])
        else:
            info["subcase"] = "2.2"
            add_xbar(order)
        return s, v

    info["region"] = "V2"
    Lam = np.array([cfg.lam[i] ** (-(n - 2) / 2.0) for i in idx])
    nL = float(np.linalg.norm(Lam))
    gap = float(np.linalg.norm(Lam / nL - e))
    keep1 = (prev_region == "V2" and prev_case == 1) if prev_region is not None else None
    if _band(gap, P.gamma, P.hysteresis, keep1, above=False):
        info["case"] = 1
        for i in idx:
            s[i] = -1.0
    else:
        info["case"] = 2
        y0 = Lam
        y1 = nL * e - Lam
        beta = y1 / nL - y0 * float(y0 @ y1) / nL ** 3
        for k, i in enumerate(idx):
            s[i] = -nL * beta[k] / Lam[k]
    add_xbar(idx)
    return s, v


# -- boundary fields ---------------------------------------------------------------------------------
def _boundary_field(model, cfg, idx, info):
    P = model.params
    n = model.n
    p = len(idx)
    s = {i: 0.0 for i in idx}
    v = {i: np.zeros(n) for i in idx}
    d = {i: model.dist(cfg.a[i]) for i in idx}
    key = lambda i: (float(cfg.lam[i]), tuple(float(x) for x in cfg.a[i]))
    nu = {i: model.normal(cfg.a[i]) for i in idx}

    # I_2 along increasing lam*d, then I_{lam_is} along increasing lam
    by_ld = sorted(idx, key=lambda i: (float(cfg.lam[i] * d[i]),) + key(i))
    I2 = [by_ld[0]]
    for k in range(1, p):
        if P.c1 * cfg.lam[by_ld[k]] * d[by_ld[k]] <= cfg.lam[by_ld[k - 1]] * d[by_ld[k - 1]]:
            I2.append(by_ld[k])
        else:
            break
    I2s = sorted(I2, key=key)
    Is = [I2s[-1]]
    for k in range(len(I2s) - 2, -1, -1):
        if P.c2 * cfg.lam[I2s[k + 1]] <= cfg.lam[I2s[k]]:
            Is.append(I2s[k])
        else:
            break
    i_s = I2s[-1]

    # T_1 / T_2 split
    T1, T2 = [], []
    for i in idx:
        lhs = sum(epsilon_ij(cfg.a[k], cfg.lam[k], cfg.a[i], cfg.lam[i]) for k in idx if k != i)
        rhs = sum(model.H(cfg.a[i], cfg.a[j]) / (cfg.lam[i] * cfg.lam[j]) ** ((n - 2) / 2.0)
                  for j in idx)
        (T1 if lhs / 2.0 ** (p + 1) <= rhs else T2).append(i)

    # X_1 = Y_1 + m Y_2
    for i in Is:
        v[i] = v[i] - P.m1 * (cfg.lam[i] / cfg.lam[i_s]) * nu[i]
    for k, i in enumerate(sorted(T2, key=key)):
        s[i] -= P.m1 * P.m * 2.0 ** (k + 1)

    # X_2 on the group around the smallest lam
    by_l = sorted(idx, key=key)
    first = by_l[0]
    d1 = d[first]
    I1p = {i for i in idx if np.linalg.norm(cfg.a[i] - cfg.a[first]) >= 2.0 * d1 / P.M}
    I1pp = _chain_closure(cfg, I1p, [i for i in idx if i not in I1p], d1 / (p * P.M)) - I1p
    I1 = [i for i in idx if i not in I1p and i not in I1pp]
    Il1 = [first]
    for k in range(1, p):
        if P.c2 * cfg.lam[by_l[k]] <= cfg.lam[by_l[k - 1]]:
            Il1.append(by_l[k])
        else:
            break
    group = [i for i in I1 if i in Il1]
    for i in group:
        v[i] = v[i] - (cfg.lam[i] / cfg.lam[first]) * nu[i]

    info.update(T1=tuple(sorted(T1)), T2=tuple(sorted(T2)), I2=tuple(sorted(I2)),
                I_lambda_is=tuple(sorted(Is)), I1_prime=tuple(sorted(I1p)),
                I1_second=tuple(sorted(I1pp)), I1=tuple(sorted(I1)),
                I_lambda1=tuple(sorted(Il1)))
    return s, v


def assemble_pseudogradient(config: BubbleConfiguration, label: RegionLabel,
                            model: FlowModel) -> Velocity:
    """Field of a labelled configuration.  The label's own side of every
    hysteresis band is kept, so the decisions it records are reproduced."""
    if label is None:
        raise ValueError("configuration has no region label")
    return _classify(config, model, label)[1]


# -- leading-order gradients ---------------------------------------------------------------------------
def _J_of(config, model):
    K = np.array([model.kfield.eval(ai) for ai in config.a])
    return reduced_J(config.alpha, K, model.n)


def reduced_gradient_lambda(config: BubbleConfiguration, i, model: FlowModel, J=None):
    """Leading-order <dJ(u), lam_i dP delta_i / d lam_i>."""
    n = model.n
    c2 = model.consts.c2
    J = _J_of(config, model) if J is None else J
    a, lam, al = config.a, config.lam, config.alpha
    val = -(n - 2) / 2.0 * al[i] * model.H(a[i], a[i]) / lam[i] ** (n - 2)
    for j in range(config.p):
        if j == i:
            continue
        val -= al[j] * (epsilon_lambda_derivative(a[i], lam[i], a[j], lam[j])
                        + (n - 2) / 2.0 * model.H(a[i], a[j]) / (lam[i] * lam[j]) ** ((n - 2) / 2.0))
    return 2.0 * c2 * J * val


def reduced_gradient_a(config: BubbleConfiguration, i, model: FlowModel, J=None):
    """Leading-order <dJ(u), (1/lam_i) dP delta_i / d a_i>.

    Inside a template ball, components with lam_i |(a_i - y)_k| >= C use the
    componentwise template form.
    """
    n = model.n
    c2, c4 = model.consts.c2, model.consts.c4
    J = _J_of(config, model) if J is None else J
    a, lam, al = config.a, config.lam, config.alpha
    pw = (n + 2.0) / (n - 2.0)
    kterm = -al[i] ** pw * (n - 2.0) / n * c4 * J ** (n / (n - 2.0)) * model.kfield.grad(a[i]) / lam[i]
    j0, dist = model.kfield.nearest_point(a[i])
    if j0 is not None:
        cp = model.kfield.points[j0]
        if dist < cp.eta:
            t = a[i] - cp.y
            c5 = model.consts.c5(cp.beta)
            comp = (-(n - 2.0) * J ** (2 * (n - 1.0) / (n - 2.0) - 1.0) * al[i] ** pw
                    * np.sign(t) * np.abs(t) ** (cp.beta - 1) * cp.b * c5 / lam[i])
            use = lam[i] * np.abs(t) >= model.params.C
            kterm = np.where(use, comp, kterm)
    hterm = al[i] * c2 * lam[i] ** (1 - n) * model.greens.grad_regular_part(a[i], a[i], "diag")
    inter = np.zeros(n)
    for j in range(config.p):
        if j == i:
            continue
        inter += al[j] * (epsilon_a_derivative(a[i], lam[i], a[j], lam[j])
                          - model.greens.grad_regular_part(a[i], a[j], "x")
                          / ((lam[i] * lam[j]) ** ((n - 2) / 2.0) * lam[i]))
    return 2.0 * J * (kterm + hterm - c2 * inter)


def model_rate(config, vel: Velocity, model: FlowModel):
    """Leading-order dJ/dt along the field."""
    J = _J_of(config, model)
    tot = 0.0
    for i in range(config.p):
        tot += config.alpha[i] * (vel.s[i] * reduced_gradient_lambda(config, i, model, J)
                                  + vel.v[i] @ reduced_gradient_a(config, i, model, J))
    return float(tot)


# -- integration ------------------------------------------------------------------------------------------
@dataclass
class FlowVerdict:
    kind: str
    time: float
    tuple: Optional[tuple] = None
    reason: str = ""

    def as_dict(self):
        return {"verdict": self.kind, "time": self.time,
                "tuple": None if self.tuple is None else list(self.tuple), "reason": self.reason}


@dataclass
class FlowTrajectory:
    times: list
    configs: list
    labels: list
    speeds: list
    J: list
    J_se: list
    verdict: FlowVerdict
    params: dict = field(default_factory=dict)

    @property
    def max_lambda(self):
        return np.array([float(np.max(c.lam)) for c in self.configs])

    def min_distance(self, domain):
        """min_i d(a_i, boundary) at every recorded step."""
        return np.array([min(domain.dist_boundary(ai) for ai in c.a) for c in self.configs])

    def summary(self):
        last = self.configs[-1]
        return {"steps": len(self.times) - 1, "final_time": self.times[-1],
                "final_label": self.labels[-1].name, "final_config": last.as_dict(),
                "max_lambda": float(np.max(self.max_lambda)),
                "J_initial": self.J[0], "J_final": self.J[-1], **self.verdict.as_dict()}


def _with_alpha(cfg, model):
    K = np.array([model.kfield.eval(ai) for ai in cfg.a])
    return BubbleConfiguration(slaved_alpha(cfg.a, K, model.n), cfg.a, cfg.lam)


def _floor(model, lam, d):
    eps = model.params.eps
    return np.maximum(1.0 / eps, 1.0 / (eps * np.maximum(d, 1e-300)))


def integrate_flow(config0: BubbleConfiguration, model: FlowModel, horizon=None,
                   record_J=True, rule: QuadratureRule = None) -> FlowTrajectory:
    """Explicit adaptive Euler on (a, lam)."""
    P = model.params
    horizon = P.horizon if horizon is None else horizon
    cfg = _with_alpha(config0, model)
    for ai in cfg.a:
        if model.domain.signed_distance(ai) >= 0:
            raise ValueError("initial bubble centre outside the domain")
    if record_J and rule is None:
        rule = QuadratureRule.make(model.n, cfg.p, P.quadrature_budget, P.quadrature_seed)

    def jest(c):
        if not record_J:
            return np.nan, np.nan
        e = functional_J(c, model.kfield, model.domain, rule=rule, greens=model.greens)
        return e.value, e.stderr

    times, configs, labels, speeds, Js, Jse = [0.0], [cfg], [], [], [], []
    try:
        label, vel = _classify(cfg, model, None)
    except AssumptionsViolated as exc:
        j, se = jest(cfg)
        return FlowTrajectory(times, configs, [RegionLabel((), (), (), (), None)], [0.0], [j], [se],
                              FlowVerdict(ABORTED, 0.0, reason=str(exc)), P.as_dict())
    labels.append(label)
    j, se = jest(cfg)
    Js.append(j)
    Jse.append(se)
    speeds.append(0.0)
    t = 0.0
    verdict = None
    for _ in range(P.max_steps):
        if t >= horizon * (1 - 1e-12):
            verdict = FlowVerdict(BOUNDED, t)
            break
        d = np.array([model.dist(ai) for ai in cfg.a])
        floor = _floor(model, cfg.lam, d)
        brake = np.where(vel.s < 0, _smooth3((cfg.lam - floor) / (P.brake_width * floor)), 1.0)
        rate = vel.s * brake
        adot = vel.a_dot(cfg)
        if not (np.all(np.isfinite(rate)) and np.all(np.isfinite(adot))):
            raise IntegratorError("non-finite velocity", last_state=cfg)
        dt = min(P.dt_max, horizon - t)
        mr = float(np.max(np.abs(rate)))
        if mr > 0:
            dt = min(dt, P.max_rel_lambda / mr)
        ma = float(np.max(np.linalg.norm(adot, axis=1)))
        if ma > 0:
            dt = min(dt, P.a_step_fraction * P.eta / ma)
        new = BubbleConfiguration(cfg.alpha, cfg.a + dt * adot, cfg.lam * (1.0 + dt * rate))
        t += dt
        if any(model.domain.signed_distance(ai) >= 0 for ai in new.a):
            verdict = FlowVerdict(EXITED, t, reason="centre left the domain")
            break
        new = _with_alpha(new, model)
        try:
            label, vel = _classify(new, model, label)
        except AssumptionsViolated as exc:
            cfg = new
            times.append(t)
            configs.append(cfg)
            labels.append(labels[-1])
            speeds.append(float(np.linalg.norm(np.concatenate([rate, adot.ravel()]))))
            j, se = jest(cfg)
            Js.append(j)
            Jse.append(se)
            verdict = FlowVerdict(ABORTED, t, reason=str(exc))
            break
        cfg = new
        times.append(t)
        configs.append(cfg)
        labels.append(label)
        speeds.append(float(np.linalg.norm(np.concatenate([rate, adot.ravel()]))))
        j, se = jest(cfg)
        Js.append(j)
        Jse.append(se)
        dn = np.array([model.dist(ai) for ai in cfg.a])
        if np.any(cfg.lam * dn <= 1.0):
            verdict = FlowVerdict(EXITED, t, reason="lambda * d dropped to 1")
            break
        if np.max(cfg.lam) > P.lambda_max:
            if label.interior == "V1" and not label.B2:
                tau = tuple(int(c) for c in label.capture)
                verdict = FlowVerdict(BLEW_UP, t, tuple(sorted(tau)))
            else:
                verdict = FlowVerdict(EXITED, t, reason=f"lambda unbounded in {label.name}")
            break
    if verdict is None:
        verdict = FlowVerdict(BOUNDED, t, reason="step limit reached")
    return FlowTrajectory(times, configs, labels, speeds, Js, Jse, verdict, P.as_dict())


@dataclass
class BlowupReport:
    verdict: str
    tuple: Optional[tuple]
    in_c_infinity: Optional[bool]
    alarm: bool
    rho: Optional[float] = None
    message: str = ""

    def as_dict(self):
        return {"verdict": self.verdict, "tuple": None if self.tuple is None else list(self.tuple),
                "in_C_infinity": self.in_c_infinity, "consistency_alarm": self.alarm,
                "rho": self.rho, "message": self.message}


def detect_blowup(trajectory: FlowTrajectory, model: FlowModel, full: FullMatrix = None):
    """Limit tuple of a blow-up and its membership in C_infinity.

    ``full`` overrides the interaction matrix (used to inject faults in tests).
    """
    v = trajectory.verdict
    if v.kind != BLEW_UP:
        return BlowupReport(v.kind, None, None, False)
    last = trajectory.configs[-1]
    near = [model.kfield.nearest_point(ai)[0] for ai in last.a]
    tau = tuple(sorted(int(j) for j in near))
    if len(set(tau)) != len(tau):
        return BlowupReport(v.kind, tau, False, True, None, "repeated critical point")
    full = full or model.full
    sub, var = full.sub(tau)
    rho, e = least_eigenpair(sub)
    from .criterion import rho_tolerance
    tol, _ = rho_tolerance(e, var, full.analytic)
    member = rho > tol
    msg = "" if member else f"blow-up tuple {tau} has rho={rho:.6g} <= {tol:.3g}"
    return BlowupReport(v.kind, tau, bool(member), not member, float(rho), msg)


def dump_trajectory(traj: FlowTrajectory, fh=None, delimiter=","):
    """One row per step: time, per-bubble (a, lam, alpha), label, J and its error."""
    out = fh or io.StringIO()
    w = csv.writer(out, delimiter=delimiter, lineterminator="\n")
    p = traj.configs[0].p
    n = traj.configs[0].n
    head = ["step", "time"]
    for i in range(p):
        head += [f"a{i}_{k}" for k in range(n)] + [f"lambda{i}", f"alpha{i}"]
    head += ["label", "J", "J_stderr"]
    w.writerow(head)
    for s, (t, c, lab, J, se) in enumerate(zip(traj.times, traj.configs, traj.labels, traj.J,
                                               traj.J_se)):
        row = [s, repr(float(t))]
        for i in range(p):
            row += [repr(float(x)) for x in c.a[i]] + [repr(float(c.lam[i])), repr(float(c.alpha[i]))]
        row += [lab.name, repr(float(J)), repr(float(se))]
        w.writerow(row)
    return out.getvalue() if fh is None else None

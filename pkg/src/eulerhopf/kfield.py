"""Prescribed function K built from flat templates at chosen critical points.

    K = (1 - sum_i phi_i) E + sum_i phi_i T_i

with T_i(x) = K0_i + sum_k b_k |(x - y_i)_k|^beta_i, a Gaussian envelope
E(x) = level * exp(-decay |x - c|^2 / R^2), and bumps phi_i equal to 1 on
B(y_i, eta_i) and to 0 outside B(y_i, outer_i).  So K is exactly the
template on each B(y_i, eta_i).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import Domain


@dataclass(frozen=True, eq=False)
class CriticalPointSpec:
    """Flat template at ``y``.  Not validated here; see :func:`check_assumptions`."""
    y: np.ndarray
    beta: float
    b: np.ndarray
    eta: float
    K0: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float).ravel())
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).ravel())

    @property
    def n(self):
        return self.y.shape[0]

    def template(self, X):
        t = np.abs(np.atleast_2d(X) - self.y)
        return self.K0 + np.sum(self.b * t ** self.beta, axis=1)

    def template_grad(self, X):
        d = np.atleast_2d(X) - self.y
        return self.beta * self.b * np.abs(d) ** (self.beta - 1) * np.sign(d)

    def describe(self):
        return {"y": self.y.tolist(), "beta": float(self.beta), "b": self.b.tolist(),
                "eta": float(self.eta), "K0": float(self.K0)}


def morse_like_index(spec: CriticalPointSpec) -> int:
    """Number of negative template coefficients."""
    return int(np.count_nonzero(np.asarray(spec.b) < 0))


def _smooth5(t):
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (t * (6.0 * t - 15.0) + 10.0)


def _smooth5_d(t):
    inside = (t > 0) & (t < 1)
    t = np.clip(t, 0.0, 1.0)
    return np.where(inside, 30.0 * t * t * (t - 1.0) ** 2, 0.0)


class KField:
    def __init__(self, n, points: Sequence[CriticalPointSpec] = (), decay_rate=1.0, level=1.0,
                 center=None, scale=1.0):
        self.n = int(n)
        self.points = list(points)
        self.decay_rate = float(decay_rate)
        self.level = float(level)
        self.center = np.zeros(self.n) if center is None else np.asarray(center, dtype=float)
        self.scale = float(scale)
        self.outer = self._outer_radii()

    @classmethod
    def on_domain(cls, domain: Domain, points=(), decay_rate=1.0, level=1.0, center=None):
        """Envelope centred on the domain (bounding-box centre) with its
        length scale set to half the diameter."""
        c = domain.center if center is None else center
        return cls(domain.n, points, decay_rate, level, c, 0.5 * domain.diameter)

    def _outer_radii(self):
        out = []
        for i, p in enumerate(self.points):
            r = 2.0 * p.eta
            for j, q in enumerate(self.points):
                if j != i:
                    r = min(r, 0.5 * float(np.linalg.norm(p.y - q.y)))
            out.append(max(r, p.eta * (1 + 1e-6)))
        return np.array(out)

    def scaled(self, c):
        """The field c*K."""
        pts = [CriticalPointSpec(p.y, p.beta, p.b * c, p.eta, p.K0 * c) for p in self.points]
        return KField(self.n, pts, self.decay_rate, self.level * c, self.center, self.scale)

    # -- evaluation ---------------------------------------------------------------
    def envelope(self, X):
        r2 = np.sum((np.atleast_2d(X) - self.center) ** 2, axis=1) / self.scale ** 2
        return self.level * np.exp(-self.decay_rate * r2)

    def envelope_grad(self, X):
        X = np.atleast_2d(X)
        e = self.envelope(X)
        return (-2.0 * self.decay_rate / self.scale ** 2 * e)[:, None] * (X - self.center)

    def _bump(self, i, X, value_only=False):
        p = self.points[i]
        d = np.atleast_2d(X) - p.y
        r = np.sqrt(np.einsum("ij,ij->i", d, d))
        w = self.outer[i] - p.eta
        t = (r - p.eta) / w
        phi = 1.0 - _smooth5(t)
        if value_only:
            return phi, None
        dphi = -_smooth5_d(t) / w
        rr = np.where(r > 0, r, 1.0)
        return phi, dphi[:, None] * d / rr[:, None]

    def eval(self, x):
        X = np.asarray(x, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        E = self.envelope(X)
        K = E.copy()
        for i, p in enumerate(self.points):
            phi, _ = self._bump(i, X, value_only=True)
            near = phi > 0
            if np.any(near):
                K[near] += phi[near] * (p.template(X[near]) - E[near])
        return float(K[0]) if single else K

    def grad(self, x):
        X = np.asarray(x, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        E = self.envelope(X)
        g = self.envelope_grad(X)
        for i, p in enumerate(self.points):
            phi, dphi = self._bump(i, X)
            near = (phi > 0) | np.any(dphi != 0, axis=1)
            if np.any(near):
                Xn = X[near]
                T = p.template(Xn)
                g[near] += (phi[near, None] * (p.template_grad(Xn) - self.envelope_grad(Xn))
                            + (T - E[near])[:, None] * dphi[near])
        return g[0] if single else g

    def nearest_point(self, x):
        """Index of the nearest registered critical point and its distance."""
        if not self.points:
            return None, np.inf
        d = [float(np.linalg.norm(np.asarray(x) - p.y)) for p in self.points]
        i = int(np.argmin(d))
        return i, d[i]

    def describe(self):
        return {"critical_points": [p.describe() for p in self.points],
                "envelope": {"decay_rate": self.decay_rate, "level": self.level,
                             "center": self.center.tolist(), "length_scale": self.scale}}


@dataclass
class AssumptionReport:
    a1_min_margin: float
    a1_pass: bool
    beta_violations: list = field(default_factory=list)
    zero_coefficients: list = field(default_factory=list)
    containment_violations: list = field(default_factory=list)
    separation_violations: list = field(default_factory=list)
    positivity_min: float = np.inf
    positivity_pass: bool = True
    a1_worst_location: Optional[list] = None
    nonpositive_locations: list = field(default_factory=list)
    samples: int = 0
    notes: list = field(default_factory=list)

    @property
    def flatness_pass(self):
        return not (self.beta_violations or self.zero_coefficients
                    or self.containment_violations or self.separation_violations)

    @property
    def passed(self):
        return self.a1_pass and self.flatness_pass and self.positivity_pass

    def failures(self):
        out = []
        if not self.a1_pass:
            out.append("A1")
        if self.beta_violations:
            out.append("flatness order")
        if self.zero_coefficients:
            out.append("zero coefficient")
        if self.containment_violations:
            out.append("template ball containment")
        if self.separation_violations:
            out.append("critical point separation")
        if not self.positivity_pass:
            out.append("positivity")
        return out

    def as_dict(self):
        return {"passed": self.passed, "failures": self.failures(),
                "A1": {"pass": self.a1_pass, "min_minus_dK_dnu": self.a1_min_margin,
                       "worst_location": self.a1_worst_location},
                "flatness": {"pass": self.flatness_pass,
                             "beta_violations": self.beta_violations,
                             "zero_coefficients": self.zero_coefficients,
                             "containment_violations": self.containment_violations,
                             "separation_violations": self.separation_violations},
                "positivity": {"pass": self.positivity_pass, "min_K": self.positivity_min,
                               "nonpositive_locations": self.nonpositive_locations},
                "boundary_samples": self.samples, "notes": self.notes}


def check_assumptions(domain: Domain, field: KField, budget=2000, seed=0, margin=1e-9):
    """Sample-based check of the boundary sign condition, template validity and K > 0."""
    rng = np.random.default_rng(seed)
    n = domain.n
    Xb = domain.sample_boundary(budget, rng)
    if hasattr(domain, "radius"):
        nu = (Xb - domain.center) / np.linalg.norm(Xb - domain.center, axis=1, keepdims=True)
    else:
        g = domain.sdf_gradient_many(Xb)
        nu = g / np.linalg.norm(g, axis=1, keepdims=True)
    dkdnu = np.sum(field.grad(Xb) * nu, axis=1)
    worst = int(np.argmax(dkdnu))
    a1_min = float(-dkdnu[worst])
    rep = AssumptionReport(a1_min, a1_min > 0, samples=int(budget),
                           a1_worst_location=Xb[worst].tolist())

    for i, p in enumerate(field.points):
        if not (n - 2 + margin < p.beta < n - margin):
            rep.beta_violations.append({"point": i, "beta": float(p.beta)})
        if p.b.shape != (n,) or np.any(p.b == 0):
            rep.zero_coefficients.append({"point": i, "b": p.b.tolist()})
        if p.eta <= 0:
            rep.containment_violations.append({"point": i, "reason": "eta must be positive"})
        else:
            s = domain.signed_distance(p.y)
            if s >= 0 or -s < 4 * p.eta:
                rep.containment_violations.append(
                    {"point": i, "distance_to_boundary": float(max(-s, 0.0)),
                     "needed": 4 * float(p.eta)})
        for j in range(i + 1, len(field.points)):
            q = field.points[j]
            if np.linalg.norm(p.y - q.y) <= 2 * max(p.eta, q.eta):
                rep.separation_violations.append({"points": [i, j]})

    Xi = domain.sample_interior(budget, rng)
    X = np.concatenate([Xi, Xb] + [p.y[None, :] for p in field.points])
    K = field.eval(X)
    rep.positivity_min = float(np.min(K))
    rep.positivity_pass = bool(rep.positivity_min > 0)
    if not rep.positivity_pass:
        rep.nonpositive_locations = X[K <= 0][:10].tolist()
    rep.notes.extend(domain.flags())
    return rep


def from_config(spec, domain: Domain):
    pts = [CriticalPointSpec(np.asarray(c["y"], float), float(c["beta"]),
                             np.asarray(c["b"], float), float(c["eta"]), float(c.get("K0", 1.0)))
           for c in spec.get("critical_points", [])]
    env = spec.get("envelope", {})
    return KField.on_domain(domain, pts, decay_rate=float(env.get("decay_rate", 1.0)),
                            level=float(env.get("level", 1.0)), center=env.get("center"))

"""Interaction matrices over tuples of critical points and the Euler-Hopf count."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import AssumptionsViolated, CapExceededError
from .greens import GreensEvaluator
from .kfield import AssumptionReport, KField, check_assumptions, morse_like_index
from .linalg import least_eigenpair

ANALYTIC_RHO_TOL = 1e-10
DEFAULT_CAP = 12

EXISTENCE_CERTIFIED = "ExistenceCertified"
INCONCLUSIVE = "Inconclusive"
ASSUMPTIONS_VIOLATED = "AssumptionsViolated"


@dataclass
class FullMatrix:
    """M over all registered critical points with per-entry variances.

    Every tuple's matrix is a principal submatrix of this one.
    """
    M: np.ndarray
    var: np.ndarray
    K: np.ndarray
    analytic: bool

    def sub(self, tau):
        idx = np.asarray(tau, dtype=int)
        return self.M[np.ix_(idx, idx)], self.var[np.ix_(idx, idx)]


@dataclass
class InteractionMatrix:
    tau: tuple
    M: np.ndarray
    rho: float
    e: np.ndarray
    tolerance: float
    rho_stderr: float = 0.0

    @property
    def near_zero(self):
        return abs(self.rho) <= self.tolerance


def build_full_matrix(kfield: KField, greens: GreensEvaluator, points=None) -> FullMatrix:
    pts = [p.y for p in kfield.points] if points is None else [np.asarray(p) for p in points]
    m = len(pts)
    n = kfield.n
    Kv = np.array([kfield.eval(y) for y in pts])
    w = (n - 2) / 4.0
    M = np.zeros((m, m))
    V = np.zeros((m, m))
    analytic = greens.backend == "analytic"
    for k in range(m):
        # walks start at y_k; one batch serves the whole column H(y_j, y_k)
        h, se = greens.regular_part_many(np.array(pts), pts[k])
        for j in range(m):
            if j == k:
                M[j, k] = h[j] / Kv[j] ** (2 * w)
                V[j, k] = (se[j] / Kv[j] ** (2 * w)) ** 2
            else:
                g = np.linalg.norm(pts[j] - pts[k]) ** (2 - n) - h[j]
                M[j, k] = -g / (Kv[j] * Kv[k]) ** w
                V[j, k] = (se[j] / (Kv[j] * Kv[k]) ** w) ** 2
    if not analytic:
        d = np.diag(V).copy()
        M = 0.5 * (M + M.T)
        V = 0.25 * (V + V.T)
        np.fill_diagonal(V, d)
    return FullMatrix(M, V, Kv, analytic)


def rho_tolerance(e, var, analytic):
    """3 x first-order standard error of the least eigenvalue (e^T dM e)."""
    if analytic:
        return ANALYTIC_RHO_TOL, 0.0
    s = len(e)
    v = float(np.sum(e ** 4 * np.diag(var)))
    for j in range(s):
        for k in range(j + 1, s):
            v += (2 * e[j] * e[k]) ** 2 * var[j, k]
    se = float(np.sqrt(v))
    return max(3.0 * se, ANALYTIC_RHO_TOL), se


def interaction_matrix(tau, greens: GreensEvaluator, kfield: KField,
                       full: Optional[FullMatrix] = None) -> InteractionMatrix:
    """M(tau) for a tuple of critical-point indices, with its least eigenpair."""
    tau = tuple(int(t) for t in tau)
    if len(set(tau)) != len(tau) or not tau:
        raise ValueError("tuple must list distinct critical points")
    if full is None:
        full = build_full_matrix(kfield, greens)
    M, var = full.sub(tau)
    rho, e = least_eigenpair(M)
    tol, se = rho_tolerance(e, var, full.analytic)
    return InteractionMatrix(tau, M, rho, e, tol, se)


def infinity_index(tau, kfield: KField) -> int:
    n = kfield.n
    return len(tau) - 1 + sum(n - morse_like_index(kfield.points[i]) for i in tau)


def subsets(m):
    for s in range(1, m + 1):
        yield from itertools.combinations(range(m), s)


def all_tuples(kfield, greens, cap=DEFAULT_CAP, full=None):
    m = len(kfield.points)
    if m > cap:
        raise CapExceededError(
            f"{m} critical points exceed the subset cap of {cap}; raise criterion.subset_cap in the config")
    full = full or build_full_matrix(kfield, greens)
    return [interaction_matrix(t, greens, kfield, full) for t in subsets(m)], full


def enumerate_C_infinity(kfield: KField, greens: GreensEvaluator, cap=DEFAULT_CAP, full=None):
    """Tuples with positive least eigenvalue.  A near-zero one aborts."""
    mats, _ = all_tuples(kfield, greens, cap, full)
    bad = [im for im in mats if im.near_zero]
    if bad:
        im = bad[0]
        raise AssumptionsViolated(f"least eigenvalue of {im.tau} is within tolerance of 0",
                                  subset=im.tau, rho=im.rho, tolerance=im.tolerance)
    return [im.tau for im in mats if im.rho > im.tolerance]


@dataclass
class CriterionReport:
    tuples: list
    c_infinity: list
    indices: dict
    S: Optional[int]
    verdict: str
    flagged: list = field(default_factory=list)
    assumptions: Optional[AssumptionReport] = None
    greens: dict = field(default_factory=dict)

    def as_dict(self):
        return {
            "subsets": [{"indices": list(im.tau), "rho": im.rho,
                         "rho_standard_error": im.rho_stderr, "tolerance": im.tolerance,
                         "sign": int(np.sign(im.rho)) if not im.near_zero else 0,
                         "in_C_infinity": im.tau in self.c_infinity,
                         "index": self.indices.get(im.tau)} for im in self.tuples],
            "C_infinity": [list(t) for t in self.c_infinity],
            "euler_hopf_sum": self.S,
            "verdict": self.verdict,
            "near_zero_rho": [list(t) for t in self.flagged],
            "assumptions": None if self.assumptions is None else self.assumptions.as_dict(),
            "green_backend": self.greens,
        }


def euler_hopf_verdict(kfield: KField, greens: GreensEvaluator, assumptions=None,
                       cap=DEFAULT_CAP, sample_budget=2000, seed=0) -> CriterionReport:
    if assumptions is None:
        assumptions = check_assumptions(greens.domain, kfield, sample_budget, seed)
    mats, _ = all_tuples(kfield, greens, cap)
    flagged = [im.tau for im in mats if im.near_zero]
    cinf = [im.tau for im in mats if im.rho > im.tolerance]
    indices = {t: infinity_index(t, kfield) for t in cinf}
    S = int(sum((-1) ** indices[t] for t in cinf))
    if not assumptions.passed or flagged:
        verdict = ASSUMPTIONS_VIOLATED
    elif S != 1:
        verdict = EXISTENCE_CERTIFIED
    else:
        verdict = INCONCLUSIVE
    return CriterionReport(mats, cinf, indices, S, verdict, flagged, assumptions,
                           greens.describe())

"""Dirichlet Green's function G(x, y) = |x - y|^(2-n) - H(x, y).

No dimensional normalising constant is applied.  On balls H comes from the
method of images; otherwise H(., y) is estimated by walk-on-spheres started
at ``y``.
"""
from __future__ import annotations

import warnings
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from . import wos
from ._rng import ALGORITHM, derive_stream
from .errors import DomainError, SingularityError
from .geometry import Ball, Domain


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float = 0.0
    walks: int = 0
    truncated: int = 0

    def __float__(self):
        return float(self.value)

    def as_dict(self):
        return {"estimate": self.value, "standard_error": self.stderr,
                "walks": self.walks, "truncated": self.truncated}


def unit_ball_regular_part(x, y, n):
    """Image-charge H for the unit ball, vectorised over leading axes."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    q = 1.0 - 2.0 * np.sum(x * y, axis=-1) + np.sum(x * x, axis=-1) * np.sum(y * y, axis=-1)
    return q ** (-(n - 2) / 2.0)


def unit_ball_regular_part_grad_x(x, y, n):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    yy = np.sum(y * y, axis=-1)
    q = 1.0 - 2.0 * np.sum(x * y, axis=-1) + np.sum(x * x, axis=-1) * yy
    dq = -2.0 * y + 2.0 * yy[..., None] * x
    return (-(n - 2) / 2.0 * q ** (-n / 2.0))[..., None] * dq


def _pair_stats(vals, antithetic):
    """Mean and standard error; with antithetic pairing errors use pair means."""
    vals = np.asarray(vals, dtype=float)
    m = vals.shape[0]
    if antithetic and m >= 4:
        k = m // 2
        pm = 0.5 * (vals[0:2 * k:2] + vals[1:2 * k:2])
        mean = vals.mean(axis=0)
        se = pm.std(axis=0, ddof=1) / np.sqrt(k)
    else:
        mean = vals.mean(axis=0)
        se = vals.std(axis=0, ddof=1) / np.sqrt(m) if m > 1 else np.zeros_like(mean)
    return mean, se


class GreensEvaluator:
    """Evaluates G and H on a domain.

    ``backend`` is ``"analytic"`` (balls only) or ``"montecarlo"``.
    Monte Carlo exits for a start point are a pure function of
    ``(seed, start)`` and are cached.
    """

    def __init__(self, domain: Domain, backend="analytic", walks=100_000, shell=None,
                 seed=0, max_steps=10_000, antithetic=True, workers=1, kernel=None,
                 cache_size=256):
        if backend not in ("analytic", "montecarlo"):
            raise ValueError(f"unknown Green backend {backend!r}")
        if backend == "analytic" and not isinstance(domain, Ball):
            raise ValueError("the analytic backend needs a ball domain")
        if walks < 1:
            raise ValueError("walk count must be at least 1")
        self.domain = domain
        self.n = domain.n
        self.backend = backend
        self.walks = int(walks)
        self.shell = float(shell) if shell is not None else 1e-4 * domain.diameter
        if not 0 < self.shell < 0.1 * domain.diameter:
            raise ValueError("shell width must be positive and much smaller than the diameter")
        self.seed = int(seed)
        self.max_steps = int(max_steps)
        self.antithetic = bool(antithetic)
        self.workers = int(workers)
        self.kernel = kernel
        self._cache = OrderedDict()
        self._cache_size = cache_size
        self.truncations = 0

    # -- description ----------------------------------------------------------
    def describe(self):
        d = {"backend": self.backend}
        if self.backend == "montecarlo":
            d.update(walks=self.walks, shell_width=self.shell, max_steps=self.max_steps,
                     antithetic=self.antithetic, seed=self.seed, rng_algorithm=ALGORITHM,
                     walk_kernel=self.kernel or wos.BACKEND)
        return d

    # -- walks ----------------------------------------------------------------
    def _interior(self, x, what="point"):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise DomainError(f"{what} must be a point in R^{self.n}")
        if self.domain.signed_distance(x) >= 0:
            raise DomainError(f"{what} {x.tolist()} is not strictly inside the domain")
        return x

    def exits(self, start, walks=None, stream=None):
        """Boundary exit points of walks started at ``start`` (cached)."""
        start = np.asarray(start, dtype=float)
        walks = self.walks if walks is None else int(walks)
        if stream is None:
            stream = derive_stream(self.seed, "walk", start)
        key = (start.tobytes(), walks, stream)
        hit = self._cache.get(key)
        if hit is not None:
            self._cache.move_to_end(key)
            return hit
        spec = self.domain.kernel_spec()
        if spec is not None:
            ex, steps, trunc = wos.walk_exits(spec[0], spec[1], start, stream, walks, self.shell,
                                              self.max_steps, self.antithetic, self.workers,
                                              self.kernel)
        else:
            dom = self.domain
            ex, steps, trunc = wos.walk_exits_callable(
                lambda X: -dom.signed_distance_many(X), dom.project_many, start, stream,
                walks, self.shell, self.max_steps, self.antithetic)
        nt = int(np.count_nonzero(trunc))
        if nt:
            self.truncations += nt
            warnings.warn(f"{nt} of {walks} walks hit the step limit", RuntimeWarning,
                          stacklevel=3)
        out = (ex, nt)
        self._cache[key] = out
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return out

    def _expect(self, start, data, walks=None, stream=None):
        ex, nt = self.exits(start, walks, stream)
        vals = data(ex)
        mean, se = _pair_stats(vals, self.antithetic)
        return mean, se, len(ex), nt

    # -- public API -------------------------------------------------------------
    def regular_part(self, x, y) -> Estimate:
        x = self._interior(x, "x")
        y = self._interior(y, "y")
        if self.backend == "analytic":
            return Estimate(float(self._h_ball(x, y)))
        p = self.n - 2
        m, se, w, nt = self._expect(y, lambda X: np.sum((X - x) ** 2, axis=1) ** (-p / 2.0))
        return Estimate(float(m), float(se), w, nt)

    def regular_part_many(self, xs, y):
        """H(x_j, y) for several x sharing the walks started at ``y``.

        Returns ``(values, standard_errors)``.
        """
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        y = self._interior(y, "y")
        if self.backend == "analytic":
            return self._h_ball(xs, y), np.zeros(len(xs))
        p = self.n - 2
        ex, _ = self.exits(y)
        vals = np.sum((ex[:, None, :] - xs[None, :, :]) ** 2, axis=2) ** (-p / 2.0)
        return _pair_stats(vals, self.antithetic)

    def greens(self, x, y) -> Estimate:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        r = float(np.linalg.norm(x - y))
        if r == 0.0:
            raise SingularityError("G(x, y) is singular at x = y")
        h = self.regular_part(x, y)
        return Estimate(r ** (2 - self.n) - h.value, h.stderr, h.walks, h.truncated)

    def harmonic_extension(self, x, boundary_data, walks=None) -> Estimate:
        """Harmonic function with Dirichlet data ``boundary_data`` evaluated at ``x``.

        ``boundary_data`` is called on an ``(m, n)`` array of boundary points.
        Always uses walks, whatever the backend.
        """
        x = self._interior(x)
        m, se, w, nt = self._expect(x, lambda X: np.asarray(boundary_data(X), dtype=float),
                                    walks)
        return Estimate(float(m), float(se), w, nt)

    def grad_regular_part(self, x, y, which="x", h=None):
        """Gradient of H in its first argument (``which="x"``), or of a -> H(a, a)
        (``which="diag"``).  Finite differences with common walks for Monte Carlo."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.backend == "analytic":
            g1 = self._h_ball_grad_x(x, y)
            if which == "x":
                return g1
            return 2.0 * g1  # H symmetric, so d/da H(a,a) = 2 dH/dx at x=y=a
        h = h or 1e-4 * self.domain.diameter
        stream = derive_stream(self.seed, "fd", y)
        p = self.n - 2
        g = np.zeros(self.n)
        for k in range(self.n):
            e = np.zeros(self.n)
            e[k] = h
            if which == "x":
                ex, _ = self.exits(y, stream=stream)
                f = [np.mean(np.sum((ex - (x + s * e)) ** 2, axis=1) ** (-p / 2)) for s in (1, -1)]
            else:
                # shift the walk start and the pole together, sharing the stream
                f = []
                for s in (1, -1):
                    ex, _ = self.exits(y + s * e, stream=stream)
                    f.append(np.mean(np.sum((ex - (x + s * e)) ** 2, axis=1) ** (-p / 2)))
            g[k] = (f[0] - f[1]) / (2 * h)
        return g

    # -- ball formulas ------------------------------------------------------------
    def _h_ball(self, x, y):
        c, R = self.domain.center_point, self.domain.radius
        return R ** (2 - self.n) * unit_ball_regular_part((x - c) / R, (y - c) / R, self.n)

    def _h_ball_grad_x(self, x, y):
        c, R = self.domain.center_point, self.domain.radius
        return R ** (1 - self.n) * unit_ball_regular_part_grad_x((x - c) / R, (y - c) / R, self.n)

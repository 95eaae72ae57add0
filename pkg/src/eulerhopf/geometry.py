"""Domains: balls (closed form) and signed-distance oracles."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _sdf
from .errors import DegenerateGeometryError, DomainError, ShellError

_BOUNDARY_TOL = 1e-12


class Domain:
    """Common interface.  Subclasses provide ``signed_distance_many``."""

    n: int
    normal_shell: Optional[float] = None

    # -- overridden ---------------------------------------------------------
    def signed_distance_many(self, X):
        raise NotImplementedError

    def bounding_box(self):
        raise NotImplementedError

    def kernel_spec(self):
        """``(shape code, params)`` if the compiled walk kernel can handle it."""
        return None

    def project_many(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        s = self.signed_distance_many(X)
        return X - s[:, None] * self.sdf_gradient_many(X)

    # -- shared -------------------------------------------------------------
    @property
    def diameter(self):
        lo, hi = self.bounding_box()
        return float(np.linalg.norm(hi - lo))

    @property
    def center(self):
        lo, hi = self.bounding_box()
        return 0.5 * (lo + hi)

    def signed_distance(self, x):
        return float(self.signed_distance_many(np.asarray(x, dtype=float)[None, :])[0])

    def contains(self, x):
        return self.signed_distance(x) < 0.0

    def _tol(self):
        return _BOUNDARY_TOL * max(self.diameter, 1.0)

    def dist_boundary(self, x):
        x = self._point(x)
        s = self.signed_distance(x)
        if s > self._tol():
            raise DomainError(f"point {x.tolist()} lies outside the domain (sdf={s:.3e})")
        return max(-s, 0.0)

    def _point(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise DomainError(f"expected a point in R^{self.n}, got shape {x.shape}")
        return x

    def shell_width(self):
        if self.normal_shell is not None:
            return self.normal_shell
        return 1e-2 * self.diameter

    def sdf_gradient_many(self, X, h=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        h = h or 1e-6 * self.diameter
        g = np.empty_like(X)
        for k in range(self.n):
            e = np.zeros(self.n)
            e[k] = h
            g[:, k] = (self.signed_distance_many(X + e) - self.signed_distance_many(X - e)) / (2 * h)
        return g

    def outward_normal(self, x, shell=None):
        x = self._point(x)
        d = self.dist_boundary(x)
        shell = self.shell_width() if shell is None else shell
        if d > shell:
            raise ShellError(f"point is {d:.3e} from the boundary, shell width is {shell:.3e}")
        g = self._normal_direction(x)
        nrm = np.linalg.norm(g)
        if not np.isfinite(nrm) or nrm < 1e-12:
            raise DegenerateGeometryError(f"vanishing distance gradient at {x.tolist()}")
        return g / nrm

    def _normal_direction(self, x):
        return self.sdf_gradient_many(x[None, :])[0]

    def sample_interior(self, m, rng):
        lo, hi = self.bounding_box()
        out = []
        got = 0
        while got < m:
            X = rng.uniform(lo, hi, size=(max(2 * (m - got), 64), self.n))
            X = X[self.signed_distance_many(X) < 0]
            out.append(X)
            got += len(X)
        return np.concatenate(out)[:m]

    def sample_boundary(self, m, rng, iterations=30):
        """Boundary points by projecting interior samples along the distance gradient."""
        X = self.sample_interior(m, rng)
        for _ in range(iterations):
            X = self.project_many(X)
        return X

    def lipschitz_ratio(self, pairs=1000, seed=0):
        """Largest |f(x)-f(y)|/|x-y| seen over random pairs in the bounding box."""
        rng = np.random.default_rng(seed)
        lo, hi = self.bounding_box()
        X = rng.uniform(lo, hi, size=(pairs, self.n))
        Y = rng.uniform(lo, hi, size=(pairs, self.n))
        num = np.abs(self.signed_distance_many(X) - self.signed_distance_many(Y))
        return float(np.max(num / np.linalg.norm(X - Y, axis=1)))

    def flags(self):
        return []


@dataclass(frozen=True, eq=False)
class Ball(Domain):
    center_point: np.ndarray
    radius: float
    normal_shell: Optional[float] = None

    def __post_init__(self):
        c = np.asarray(self.center_point, dtype=float).ravel()
        object.__setattr__(self, "center_point", c)
        if not (self.radius > 0 and np.isfinite(self.radius)):
            raise DomainError(f"ball radius must be positive, got {self.radius}")

    @property
    def n(self):
        return self.center_point.shape[0]

    @property
    def center(self):
        return self.center_point

    @property
    def diameter(self):
        return 2.0 * self.radius

    def bounding_box(self):
        return self.center_point - self.radius, self.center_point + self.radius

    def signed_distance_many(self, X):
        return np.linalg.norm(np.atleast_2d(X) - self.center_point, axis=1) - self.radius

    def dist_boundary(self, x):
        x = self._point(x)
        r = float(np.linalg.norm(x - self.center_point))
        d = self.radius - r
        if d < -self._tol():
            raise DomainError(f"point {x.tolist()} lies outside the ball")
        return max(d, 0.0)

    def _normal_direction(self, x):
        return x - self.center_point

    def sdf_gradient_many(self, X, h=None):
        return _sdf.gradient(_sdf.BALL, self.params(), np.atleast_2d(X))

    def project_many(self, X):
        return _sdf.project(_sdf.BALL, self.params(), np.atleast_2d(X))

    def sample_boundary(self, m, rng, iterations=0):
        g = rng.standard_normal((m, self.n))
        return self.center_point + self.radius * g / np.linalg.norm(g, axis=1, keepdims=True)

    def params(self):
        return np.append(self.center_point, self.radius)

    def kernel_spec(self):
        return _sdf.BALL, self.params()

    def describe(self):
        return {"type": "ball", "center": self.center_point.tolist(), "radius": float(self.radius)}


@dataclass(frozen=True, eq=False)
class Generic(Domain):
    """Domain given by a signed-distance oracle (negative inside).

    ``sdf`` maps a single point to a real.  When ``vectorized`` is true it is
    instead called on ``(m, n)`` arrays.  Built-in shapes set ``shape``.
    """
    dimension: int
    sdf: Callable
    box_lo: np.ndarray
    box_hi: np.ndarray
    vectorized: bool = False
    shape: Optional[tuple] = None
    normal_shell: Optional[float] = None
    validate: bool = True
    notes: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "box_lo", np.asarray(self.box_lo, dtype=float))
        object.__setattr__(self, "box_hi", np.asarray(self.box_hi, dtype=float))
        if self.box_lo.shape != (self.dimension,) or np.any(self.box_hi <= self.box_lo):
            raise DomainError("bounding box does not match the dimension")
        if self.validate:
            ratio = self.lipschitz_ratio()
            if ratio > 1.0 + 1e-6:
                raise DomainError(f"distance oracle is not 1-Lipschitz (ratio {ratio:.6f})")

    @property
    def n(self):
        return self.dimension

    def bounding_box(self):
        return self.box_lo, self.box_hi

    def signed_distance_many(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.vectorized:
            return np.asarray(self.sdf(X), dtype=float).reshape(len(X))
        return np.array([float(self.sdf(x)) for x in X])

    def kernel_spec(self):
        return self.shape

    def project_many(self, X):
        if self.shape is not None:
            return _sdf.project(self.shape[0], self.shape[1], np.atleast_2d(X))
        return super().project_many(X)

    def flags(self):
        return list(self.notes)

    def describe(self):
        d = {"type": "sdf", "kind": "custom" if self.shape is None else
             {v: k for k, v in _sdf.KIND_NAMES.items()}[self.shape[0]]}
        if self.shape is not None:
            d["params"] = np.asarray(self.shape[1]).tolist()
        return d

    @classmethod
    def builtin(cls, kind, n=None, **params):
        """Built-in oracles: ``ball``, ``ellipsoid`` and ``rounded_box``."""
        if kind not in _sdf.KIND_NAMES:
            raise DomainError(f"unknown built-in shape {kind!r}")
        code = _sdf.KIND_NAMES[kind]
        c = np.asarray(params["center"], dtype=float)
        n = n or c.shape[0]
        notes = ()
        if code == _sdf.BALL:
            r = float(params["radius"])
            if r <= 0:
                raise DomainError("radius must be positive")
            flat = np.append(c, r)
        elif code == _sdf.ELLIPSOID:
            ax = np.asarray(params["semi_axes"], dtype=float)
            if ax.shape != (n,) or np.any(ax <= 0):
                raise DomainError("semi_axes must be n positive lengths")
            flat = np.concatenate([c, ax])
        else:
            h = np.asarray(params["half_widths"], dtype=float)
            r = float(params["rounding"])
            if h.shape != (n,) or np.any(h <= 0) or not 0 < r <= np.min(h):
                raise DomainError("need positive half_widths and 0 < rounding <= min half width")
            flat = np.concatenate([c, h, [r]])
            notes = ("boundary is only C^{1,1} along rounded edges",)
        lo, hi = _sdf.bounding_box(code, flat, n)

        def f(X, _code=code, _p=flat):
            return _sdf.signed_distance(_code, _p, X)

        pad = 1e-3 * float(np.linalg.norm(hi - lo))
        return cls(n, f, lo - pad, hi + pad, vectorized=True, shape=(code, flat), notes=notes)


def unit_ball(n):
    return Ball(np.zeros(n), 1.0)


def from_config(spec, n=None):
    """Build a domain from its run-config description."""
    if spec["type"] == "ball":
        return Ball(np.asarray(spec["center"], dtype=float), float(spec["radius"]),
                    normal_shell=spec.get("normal_shell"))
    if spec["type"] == "sdf":
        return Generic.builtin(spec["kind"], n=n, **spec["params"])
    raise DomainError(f"unknown domain type {spec['type']!r}")

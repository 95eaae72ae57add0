"""Vectorised signed-distance functions for the built-in domain shapes.

Convention: negative inside.  Each shape is identified by an integer code
and a flat parameter vector so that the compiled walk kernel can evaluate
the same shapes without calling back into Python.

    BALL        params = [center..., radius]
    ELLIPSOID   params = [center..., semi_axes...]
    ROUNDED_BOX params = [center..., half_widths..., rounding]
"""
import numpy as np

BALL = 0
ELLIPSOID = 1
ROUNDED_BOX = 2

KIND_NAMES = {"ball": BALL, "ellipsoid": ELLIPSOID, "rounded_box": ROUNDED_BOX}


def _split(kind, params, n):
    c = params[:n]
    if kind == BALL:
        return c, params[n]
    if kind == ELLIPSOID:
        return c, params[n:2 * n]
    if kind == ROUNDED_BOX:
        return c, (params[n:2 * n], params[2 * n])
    raise ValueError(f"unknown shape code {kind}")


def signed_distance(kind, params, x):
    x = np.atleast_2d(x)
    n = x.shape[1]
    c, p = _split(kind, params, n)
    y = x - c
    if kind == BALL:
        return np.linalg.norm(y, axis=1) - p
    if kind == ELLIPSOID:
        # (k0 - 1) * min(r) is a 1-Lipschitz lower bound on the true distance
        k0 = np.linalg.norm(y / p, axis=1)
        return (k0 - 1.0) * np.min(p)
    half, rad = p
    q = np.abs(y) - (half - rad)
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
    inside = np.minimum(np.max(q, axis=1), 0.0)
    return outside + inside - rad


def gradient(kind, params, x):
    """Analytic gradient of :func:`signed_distance` (unit length a.e.)."""
    x = np.atleast_2d(x)
    n = x.shape[1]
    c, p = _split(kind, params, n)
    y = x - c
    if kind == BALL:
        r = np.linalg.norm(y, axis=1, keepdims=True)
        return y / np.where(r > 0, r, 1.0)
    if kind == ELLIPSOID:
        g = y / p ** 2
        k0 = np.linalg.norm(y / p, axis=1, keepdims=True)
        return np.min(p) * g / np.where(k0 > 0, k0, 1.0)
    half, rad = p
    sgn = np.where(y >= 0, 1.0, -1.0)
    q = np.abs(y) - (half - rad)
    qp = np.maximum(q, 0.0)
    nq = np.linalg.norm(qp, axis=1, keepdims=True)
    g = np.where(nq > 0, qp * sgn / np.where(nq > 0, nq, 1.0), 0.0)
    core = (nq[:, 0] == 0)
    if np.any(core):
        k = np.argmax(q[core], axis=1)
        gc = np.zeros((k.size, n))
        gc[np.arange(k.size), k] = sgn[core][np.arange(k.size), k]
        g[core] = gc
    return g


def project(kind, params, x):
    """Map points near the boundary onto the boundary."""
    x = np.atleast_2d(x)
    n = x.shape[1]
    c, p = _split(kind, params, n)
    y = x - c
    if kind == BALL:
        r = np.linalg.norm(y, axis=1, keepdims=True)
        r = np.where(r > 0, r, 1.0)
        return c + p * y / r
    if kind == ELLIPSOID:
        k0 = np.linalg.norm(y / p, axis=1, keepdims=True)
        k0 = np.where(k0 > 0, k0, 1.0)
        return c + y / k0
    s = signed_distance(kind, params, x)
    return x - s[:, None] * gradient(kind, params, x)


def bounding_box(kind, params, n):
    c, p = _split(kind, params, n)
    if kind == BALL:
        h = np.full(n, p)
    elif kind == ELLIPSOID:
        h = np.asarray(p, dtype=float)
    else:
        h = np.asarray(p[0], dtype=float)
    return c - h, c + h

"""Pure numpy walk-on-spheres kernel (fallback for the compiled one)."""
import numpy as np

from . import _sdf
from ._rng import gaussians, walk_keys


def _walk(dist, project, start, stream, first, count, shell, max_steps, antithetic):
    start = np.asarray(start, dtype=float)
    n = start.shape[0]
    idx = np.arange(first, first + count, dtype=np.int64)
    if antithetic:
        keys = walk_keys(stream, idx // 2)
        sign = np.where(idx % 2 == 1, -1.0, 1.0)
    else:
        keys = walk_keys(stream, idx)
        sign = np.ones(count)
    x = np.tile(start, (count, 1))
    steps = np.full(count, max_steps, dtype=np.int64)
    active = np.arange(count)
    for s in range(max_steps):
        d = dist(x[active])
        done = d < shell
        if np.any(done):
            steps[active[done]] = s
            active = active[~done]
            d = d[~done]
        if active.size == 0:
            break
        g = gaussians(keys[active], s, n)
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        x[active] += (d * sign[active])[:, None] * g
    truncated = steps >= max_steps
    return project(x), steps, truncated


def walk_exits(kind, params, start, stream, first, count, shell, max_steps, antithetic=True):
    """Exit points of walks ``first .. first+count-1`` for a built-in shape.

    Returns ``(exits, steps, truncated)``; exits are projected onto the
    boundary, including those of truncated walks.
    """
    params = np.asarray(params, dtype=float)

    def dist(x):
        return -_sdf.signed_distance(kind, params, x)

    def project(x):
        return _sdf.project(kind, params, x)

    return _walk(dist, project, start, stream, first, count, shell, max_steps, antithetic)


def walk_exits_callable(dist, project, start, stream, first, count, shell, max_steps,
                        antithetic=True):
    """Same walk for an arbitrary vectorised distance function."""
    return _walk(dist, project, start, stream, first, count, shell, max_steps, antithetic)

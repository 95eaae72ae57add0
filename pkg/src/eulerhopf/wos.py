"""Walk-on-spheres driver with backend selection.

The compiled kernel is used when it imports; setting
``EULERHOPF_PURE_PYTHON=1`` forces the numpy fallback.  Walks are cut into
fixed index blocks, so the ``workers`` setting only changes scheduling,
never results.
"""
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _wos_py

_compiled = None
if os.environ.get("EULERHOPF_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _wos_kernel as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "python"
BLOCK = 8192


def available_backends():
    return ["python"] + (["compiled"] if _compiled is not None else [])


def _kernel(backend):
    backend = backend or BACKEND
    if backend == "compiled":
        if _compiled is None:
            raise RuntimeError("compiled walk kernel is not available")
        return _compiled.walk_exits
    if backend == "python":
        return _wos_py.walk_exits
    raise ValueError(f"unknown backend {backend!r}")


def _blocks(n_walks, antithetic):
    block = BLOCK - (BLOCK % 2) if antithetic else BLOCK
    return [(s, min(block, n_walks - s)) for s in range(0, n_walks, block)]


def walk_exits(kind, params, start, stream, n_walks, shell, max_steps,
               antithetic=True, workers=1, backend=None):
    """Run ``n_walks`` walks from ``start`` inside a built-in shape.

    Returns ``(exits, steps, truncated)`` in walk-index order.
    """
    fn = _kernel(backend)
    params = np.ascontiguousarray(params, dtype=float)
    start = np.ascontiguousarray(start, dtype=float)

    def job(b):
        first, count = b
        return fn(int(kind), params, start, np.uint64(stream), first, count,
                  float(shell), int(max_steps), bool(antithetic))

    blocks = _blocks(int(n_walks), antithetic)
    if workers and workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, blocks))
    else:
        parts = [job(b) for b in blocks]
    return _concat(parts, start.shape[0])


def walk_exits_callable(dist, project, start, stream, n_walks, shell, max_steps,
                        antithetic=True):
    """Python-only path for user supplied distance oracles."""
    start = np.asarray(start, dtype=float)
    parts = [_wos_py.walk_exits_callable(dist, project, start, stream, first, count,
                                         shell, max_steps, antithetic)
             for first, count in _blocks(int(n_walks), antithetic)]
    return _concat(parts, start.shape[0])


def _concat(parts, n):
    if not parts:
        return np.empty((0, n)), np.empty(0, dtype=np.int64), np.empty(0, dtype=bool)
    exits = np.concatenate([p[0] for p in parts])
    steps = np.concatenate([np.asarray(p[1]) for p in parts])
    trunc = np.concatenate([np.asarray(p[2]) for p in parts])
    return exits, steps, trunc

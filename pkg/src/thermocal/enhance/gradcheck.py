from __future__ import annotations

import numpy as np

from ..errors import OptimizationError


def numeric_grad(f, x, step: float = 1e-5, index=None) -> np.ndarray:
    """Central differences of scalar ``f`` at ``x`` (optionally only at ``index`` coordinates)."""
    x = np.array(x, dtype=float)
    flat = x.ravel()
    coords = range(flat.size) if index is None else index
    g = np.zeros_like(flat)
    for i in coords:
        old = flat[i]
        flat[i] = old + step
        fp = f(x)
        flat[i] = old - step
        fm = f(x)
        flat[i] = old
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise OptimizationError(f"non-finite function value while differencing coordinate {i}")
        g[i] = (fp - fm) / (2.0 * step)
    return g.reshape(x.shape)


def relative_error(analytic, numeric, mask=None) -> float:
    a = np.asarray(analytic, dtype=float)
    n = np.asarray(numeric, dtype=float)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(n))):
        raise OptimizationError("non-finite gradient")
    err = np.abs(a - n) / (np.abs(a) + np.abs(n) + 1e-12)
    if mask is not None:
        err = err[np.asarray(mask, dtype=bool)]
    return float(err.max()) if err.size else 0.0


def grad_check(f, grad, x, step: float = 1e-5, index=None) -> float:
    """Max relative error between ``grad(x)`` and central differences of ``f``.

    With ``index`` only those flat coordinates are compared.
    """
    x = np.asarray(x, dtype=float)
    ga = np.asarray(grad(x), dtype=float).ravel()
    gn = numeric_grad(f, x, step, index).ravel()
    if index is not None:
        ga, gn = ga[list(index)], gn[list(index)]
    return relative_error(ga, gn)

"""Independent reference implementations used to check the package.

Everything here is deliberately brute force (grids, enumeration, finite
differences) and shares no code with the implementations under test.
"""

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def _compositions(k, steps):
    """Integer compositions of `steps` into k nonnegative parts, (R, k)."""
    if k == 1:
        return np.array([[steps]], dtype=np.int64)
    rows = []
    for first in range(steps + 1):
        rest = _compositions(k - 1, steps - first)
        sub = np.empty((rest.shape[0], k), dtype=np.int64)
        sub[:, 0] = first
        sub[:, 1:] = rest
        rows.append(sub)
    return np.vstack(rows)


def simplex_grid(k, steps):
    """All weight vectors on the k-simplex with entries j/steps, as (R, k)."""
    return _compositions(k, steps).astype(float) / float(steps)


def bary_min_norm(z, steps):
    """Minimum norm over the barycentric grid of resolution 1/steps."""
    z = np.asarray(z, dtype=float)
    grid = simplex_grid(z.shape[0], steps)
    best = np.inf
    for start in range(0, grid.shape[0], 200_000):
        pts = grid[start:start + 200_000] @ z
        best = min(best, float(np.min(np.einsum("ij,ij->i", pts, pts))))
    return np.sqrt(best)


def central_diff(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    out = np.empty(x.size)
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h
        out[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return out


def gpd_loglik_ref(sigma, kappa, y):
    """Straightforward constant-parameter GPD log-likelihood."""
    z = np.asarray(y, dtype=float) / sigma
    a = 1.0 + kappa * z
    if sigma <= 0.0 or np.any(a <= 0.0):
        return -np.inf
    if abs(kappa) < 1e-9:
        return float(np.sum(-np.log(sigma) - z))
    return float(np.sum(-np.log(sigma) - (1.0 + 1.0 / kappa) * np.log(a)))


def gpd_mle_oracle(y, refinements=8, grid=25):
    """Constant-model GPD MLE by nested grid search on (sigma, kappa)."""
    y = np.asarray(y, dtype=float)
    sig_lo, sig_hi = 0.2 * y.mean(), 5.0 * y.mean()
    kap_lo, kap_hi = -0.45, 0.95
    best = (y.mean(), 0.0)
    for _ in range(refinements):
        sigs = np.linspace(sig_lo, sig_hi, grid)
        kaps = np.linspace(kap_lo, kap_hi, grid)
        vals = np.array([[gpd_loglik_ref(s, k, y) for k in kaps] for s in sigs])
        i, j = np.unravel_index(np.argmax(vals), vals.shape)
        best = (float(sigs[i]), float(kaps[j]))
        ds, dk = sigs[1] - sigs[0], kaps[1] - kaps[0]
        sig_lo, sig_hi = max(best[0] - 2 * ds, 1e-8), best[0] + 2 * ds
        kap_lo, kap_hi = best[1] - 2 * dk, best[1] + 2 * dk
    return best


def theta_ref(sigma, kappa, c):
    """Return level at scale factor c, direct formula."""
    if abs(kappa) < 1e-12:
        return -sigma * np.log(c)
    return (c ** (-kappa) - 1.0) * sigma / kappa


def zeta_ref(sigma, kappa, c):
    return (theta_ref(sigma, kappa, c) + sigma) / (1.0 - kappa)

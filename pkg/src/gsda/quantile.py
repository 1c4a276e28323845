"""Additive quantile regression by sampled-subgradient descent.

The fitted vector of quantile values is updated along the negative of
the sampled pinball subgradient after that subgradient has been
smoothed onto the additive covariate space; an Armijo backtracking step
on the pinball risk controls the move.  The sampling radius eps and the
stationarity tolerance tau halve whenever the subgradient norm drops
below tau or no acceptable step exists, and the run stops when both
reach their floors.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .engine import FitTrace, GsParams, sample_unit_ball
from .errors import InvalidInput, NumericalFailure
from .minnorm import GradientSet, average_fallback, min_norm_point
from .smoothing import AdditiveProjector


def pinball_loss(q, y, alpha):
    """Total pinball risk sum_i rho_alpha(q_i; y_i); zero iff q == y."""
    q, y = _check_pair(q, y, alpha)
    return _kernels.pinball_loss(q, y, alpha)


def pinball_grad(q, y, alpha):
    """Elementwise derivative of the pinball risk in q.

    Entries are ``1 - alpha`` where ``y - q < 0`` and ``-alpha`` where
    ``y - q > 0``; exact ties take the ``1 - alpha`` branch (any
    subgradient value is admissible there).
    """
    q, y = _check_pair(q, y, alpha)
    return _kernels.pinball_grad(q, y, alpha)


def _check_pair(q, y, alpha):
    q = np.asarray(q, dtype=float)
    y = np.asarray(y, dtype=float)
    if q.shape != y.shape:
        raise InvalidInput("q and y must have identical shape")
    if not (0.0 < alpha < 1.0):
        raise InvalidInput("alpha must lie in (0, 1)")
    return q, y


@dataclass
class QuantileModel:
    """Fitted additive quantile model at one level alpha."""

    alpha: float
    q: np.ndarray
    projector: AdditiveProjector
    decomposition: object
    trace: FitTrace


def _sampled_subgradient(q, y, alpha, eps, m, mode, rng):
    """Average (or min-norm) of pinball gradients over the eps-ball sample."""
    u = sample_unit_ball(q.size, m, rng)
    base = _kernels.pinball_grad(q, y, alpha)
    if mode == "qp":
        rows = np.empty((m + 1, q.size))
        rows[0] = base
        resid = y[None, :] - (q[None, :] + eps * u)
        rows[1:] = np.where(resid > 0.0, -alpha, 1.0 - alpha)
        try:
            res = min_norm_point(GradientSet(rows))
        except NumericalFailure:
            res = average_fallback(GradientSet(rows))
        return res.point, res.norm, res.method
    g = (base + _kernels.pinball_sampled_grad_sum(q, y, alpha, eps, u)) / (m + 1)
    return g, float(np.linalg.norm(g)), "average"


def fit_quantile_additive(y, W, alpha, specs, gs=None):
    """Fit q_alpha(w) = intercept + sum_j f_j(w_j) by minimizing pinball risk.

    Parameters
    ----------
    y : (n,) response vector
    W : (n, k) covariate matrix (factor columns as level codes); None or
        a zero-column matrix fits the intercept-only model
    alpha : quantile level in (0, 1)
    specs : one SmootherSpec per covariate column
    gs : GsParams; defaults to the standard parameters with the plain
        averaged subgradient (the min-norm mode is available via
        ``subgradient_mode="qp"``)
    """
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise InvalidInput("y must be finite")
    if not (0.0 < alpha < 1.0):
        raise InvalidInput("alpha must lie in (0, 1)")
    projector = AdditiveProjector(W, specs)
    n = y.size
    if n < projector.k + 2:
        raise InvalidInput("need at least k+2 observations")
    gs = gs if gs is not None else GsParams(subgradient_mode="average")
    m = gs.resolve_m(n)
    rng = np.random.default_rng(gs.seed)

    q = np.full(n, float(np.quantile(y, alpha)))
    f = _kernels.pinball_loss(q, y, alpha)
    eps, tau = gs.eps0, gs.tau0
    trace = FitTrace()

    for it in range(gs.max_iter):
        if eps <= gs.eps_min and tau <= gs.tau_min:
            trace.converged = True
            break
        ghat, gnorm, method = _sampled_subgradient(
            q, y, alpha, eps, m, gs.subgradient_mode, rng)
        if gnorm <= tau:
            eps *= gs.mu
            tau *= gs.lam
            trace.add(it, f, gnorm, eps, tau, 0.0, method, 0, "shrink")
            continue
        dstar = -projector.project(ghat).fitted
        dnorm = float(np.linalg.norm(dstar))
        if dnorm < 1e-15:
            eps *= gs.mu
            tau *= gs.lam
            trace.add(it, f, gnorm, eps, tau, 0.0, method, 0, "shrink")
            continue
        d = dstar / dnorm
        t, accepted_f, backtracks = 1.0, None, 0
        for b in range(gs.max_backtracks + 1):
            ft = _kernels.pinball_loss(q + t * d, y, alpha)
            if ft < f - gs.beta * t * gnorm:
                accepted_f, backtracks = ft, b
                break
            t *= 0.5
        if accepted_f is None:
            eps *= gs.mu
            tau *= gs.lam
            trace.add(it, f, gnorm, eps, tau, 0.0, method,
                      gs.max_backtracks + 1, "shrink")
            continue
        q = q + t * d
        f = accepted_f
        trace.add(it, f, gnorm, eps, tau, t, method, backtracks, "step")
    else:
        trace.message = "max_iter reached"

    # report the additive decomposition of the final iterate; its fitted
    # values are the model's quantile vector, so q and its decomposition
    # agree by construction
    decomposition = projector.project(q)
    return QuantileModel(alpha, decomposition.fitted.copy(), projector,
                         decomposition, trace)


def predict_quantile(model, W_new):
    """Evaluate a fitted quantile model at new covariate values.

    Covariates outside the training range are still evaluated but flag
    :class:`~gsda.errors.ExtrapolationWarning`.
    """
    return model.projector.predict(model.decomposition, W_new)

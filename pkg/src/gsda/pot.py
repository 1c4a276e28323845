"""Smooth peaks-over-threshold fitting on return-level functionals.

Excesses above a high threshold are modeled as generalized Pareto with
per-observation scale sigma_i = exp(eta_i) and shape kappa_i.  Rather
than smoothing (eta, kappa) directly, additivity is imposed on a pair
of tail functionals: either a return level together with its expected
shortfall (``var_es``) or two return levels at different tail levels
(``var_var``).  Gradients move between the two coordinate systems
through the per-observation 2x2 Jacobian blocks of the functional map,
which are inverted blockwise; steps are taken in (eta, kappa) space
where the likelihood is cheap, along the pullback of the smoothed
descent direction.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._kernels import KAPPA_EPS
from .engine import FitTrace, GsParams, sample_unit_ball
from .errors import (
    FunctionalUndefined,
    InfeasiblePoint,
    InvalidInput,
    NumericalFailure,
    SamplingExhausted,
    SingularBlock,
)
from .minnorm import GradientSet, average_fallback, min_norm_point
from .smoothing import AdditiveProjector

_DET_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Lambda:
    """Working GPD parameters: eta = log(scale) and shape kappa."""

    eta: np.ndarray
    kappa: np.ndarray

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=float)
        kappa = np.asarray(self.kappa, dtype=float)
        if eta.shape != kappa.shape or eta.ndim != 1:
            raise InvalidInput("eta and kappa must be 1-d vectors of equal length")
        if not (np.all(np.isfinite(eta)) and np.all(np.isfinite(kappa))):
            raise InvalidInput("eta and kappa must be finite")
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "kappa", kappa)

    @property
    def n(self):
        return self.eta.size

    @property
    def sigma(self):
        return np.exp(self.eta)

    def as_vector(self):
        return np.concatenate([self.eta, self.kappa])

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=float)
        n = v.size // 2
        return cls(v[:n], v[n:])


@dataclass(frozen=True)
class FunctionalSpec:
    """Which pair of tail functionals carries the additive structure.

    ``levels`` holds one tail probability (``var_es``) or two
    (``var_var``); each is scaled by the threshold exceedance
    probability into c = level / exceed_prob.
    """

    pair: str
    levels: tuple
    exceed_prob: float

    def __post_init__(self):
        if self.pair not in ("var_es", "var_var"):
            raise InvalidInput("pair must be 'var_es' or 'var_var'")
        levels = tuple(float(a) for a in np.atleast_1d(self.levels))
        object.__setattr__(self, "levels", levels)
        if not (0.0 < self.exceed_prob < 1.0):
            raise InvalidInput("exceed_prob must lie in (0, 1)")
        if any(a <= 0.0 for a in levels):
            raise InvalidInput("tail levels must be positive")
        want = 1 if self.pair == "var_es" else 2
        if len(levels) != want:
            raise InvalidInput(f"{self.pair} needs exactly {want} level(s)")
        if self.pair == "var_var" and self.c_values[0] == self.c_values[1]:
            raise InvalidInput("var_var requires two distinct scale factors")

    @property
    def c_values(self):
        return tuple(a / self.exceed_prob for a in self.levels)

    @property
    def names(self):
        if self.pair == "var_es":
            return ("return_level", "expected_shortfall")
        return ("return_level_1", "return_level_2")


@dataclass(frozen=True, eq=False)
class PotState:
    """A Lambda iterate with its functionals and Jacobian blocks."""

    lam: Lambda
    theta_pair: tuple
    jac_blocks: np.ndarray  # (n, 2, 2), rows = functionals, cols = (eta, kappa)
    jac_inverses: np.ndarray
    spec: FunctionalSpec

    @classmethod
    def from_lambda(cls, lam, spec):
        pair = functional_map(lam, spec)
        jac, inv = jacobian_blocks(lam, spec)
        return cls(lam, pair, jac, inv, spec)

    @property
    def n(self):
        return self.lam.n


def gpd_loglik(lam, y):
    """GPD log-likelihood of positive excesses y; -inf off the support."""
    y = _check_excesses(lam, y)
    return _kernels.gpd_loglik(lam.eta, lam.kappa, y)


def gpd_loglik_grad(lam, y):
    """Stacked (d/d eta, d/d kappa) of the log-likelihood, shape (2n,)."""
    y = _check_excesses(lam, y)
    if not np.isfinite(_kernels.gpd_loglik(lam.eta, lam.kappa, y)):
        raise InfeasiblePoint("gradient requested where the log-likelihood is -inf")
    return _kernels.gpd_grad(lam.eta, lam.kappa, y)


def _check_excesses(lam, y):
    y = np.asarray(y, dtype=float)
    if y.shape != (lam.n,):
        raise InvalidInput("y must match the parameter length")
    if not np.all(y > 0.0):
        raise InvalidInput("excesses must be strictly positive")
    return y


def _theta_of(sigma, kappa, c):
    logc = np.log(c)
    small = np.abs(kappa) < KAPPA_EPS
    with np.errstate(divide="ignore", invalid="ignore"):
        exact = sigma * np.expm1(-kappa * logc) / kappa
    series = sigma * (-logc + 0.5 * kappa * logc ** 2 - kappa ** 2 * logc ** 3 / 6.0)
    return np.where(small, series, exact)


def _dtheta_dkappa(sigma, kappa, c):
    logc = np.log(c)
    small = np.abs(kappa) < KAPPA_EPS
    with np.errstate(divide="ignore", invalid="ignore"):
        exact = sigma * (-np.expm1(-kappa * logc)
                         - kappa * logc * np.exp(-kappa * logc)) / kappa ** 2
    series = sigma * (0.5 * logc ** 2 - kappa * logc ** 3 / 3.0
                      + kappa ** 2 * logc ** 4 / 8.0)
    return np.where(small, series, exact)


def functional_map(lam, spec):
    """Evaluate the chosen functional pair at lam, as two (n,) vectors.

    The return level at scale factor c is sigma*(c^-kappa - 1)/kappa
    (continued across kappa = 0 by -sigma*log c); the expected shortfall
    is (theta + sigma)/(1 - kappa) and requires kappa < 1.
    """
    sigma = lam.sigma
    if spec.pair == "var_es":
        if np.any(lam.kappa >= 1.0):
            raise FunctionalUndefined("expected shortfall needs kappa < 1 everywhere")
        theta = _theta_of(sigma, lam.kappa, spec.c_values[0])
        zeta = (theta + sigma) / (1.0 - lam.kappa)
        return theta, zeta
    c1, c2 = spec.c_values
    return _theta_of(sigma, lam.kappa, c1), _theta_of(sigma, lam.kappa, c2)


def jacobian_blocks(lam, spec):
    """Per-observation Jacobians of the functional pair in (eta, kappa).

    The pair at observation i depends only on (eta_i, kappa_i), so the
    full Jacobian is block-diagonal and its inverse is n independent
    2x2 inversions.  Returns ``(blocks, inverses)`` with shape
    (n, 2, 2); raises :class:`SingularBlock` when any determinant falls
    to 1e-12 or below in absolute value.
    """
    sigma = lam.sigma
    kappa = lam.kappa
    n = lam.n
    jac = np.empty((n, 2, 2))
    if spec.pair == "var_es":
        theta, zeta = functional_map(lam, spec)
        dtheta = _dtheta_dkappa(sigma, kappa, spec.c_values[0])
        jac[:, 0, 0] = theta
        jac[:, 0, 1] = dtheta
        jac[:, 1, 0] = zeta
        jac[:, 1, 1] = (dtheta + zeta) / (1.0 - kappa)
    else:
        c1, c2 = spec.c_values
        jac[:, 0, 0] = _theta_of(sigma, kappa, c1)
        jac[:, 0, 1] = _dtheta_dkappa(sigma, kappa, c1)
        jac[:, 1, 0] = _theta_of(sigma, kappa, c2)
        jac[:, 1, 1] = _dtheta_dkappa(sigma, kappa, c2)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    bad = np.abs(det) <= _DET_TOL
    if np.any(bad):
        i = int(np.argmax(bad))
        raise SingularBlock(
            f"functional Jacobian singular at observation {i} "
            f"(eta={lam.eta[i]:.6g}, kappa={lam.kappa[i]:.6g}, det={det[i]:.3e})")
    inv = np.empty_like(jac)
    inv[:, 0, 0] = jac[:, 1, 1] / det
    inv[:, 0, 1] = -jac[:, 0, 1] / det
    inv[:, 1, 0] = -jac[:, 1, 0] / det
    inv[:, 1, 1] = jac[:, 0, 0] / det
    return jac, inv


def _blocks_apply(inv, v):
    """Blockwise J^-1 v: maps a functional-space direction to (eta, kappa)."""
    n = inv.shape[0]
    d1, d2 = v[:n], v[n:]
    return np.concatenate([
        inv[:, 0, 0] * d1 + inv[:, 0, 1] * d2,
        inv[:, 1, 0] * d1 + inv[:, 1, 1] * d2,
    ])


def _blocks_apply_t(inv, g):
    """Blockwise (J^T)^-1 g: maps a (eta, kappa) gradient to functional space."""
    n = inv.shape[0]
    g1, g2 = g[:n], g[n:]
    return np.concatenate([
        inv[:, 0, 0] * g1 + inv[:, 1, 0] * g2,
        inv[:, 0, 1] * g1 + inv[:, 1, 1] * g2,
    ])


def negative_loglik_objective(y, spec):
    """Negative log-likelihood as a generic objective over stacked (eta, kappa).

    Evaluation returns +inf wherever the support constraint fails, or
    (under ``var_es``) wherever any kappa reaches 1, so line searches
    reject infeasible steps.
    """
    y = np.asarray(y, dtype=float)
    if not np.all(y > 0.0):
        raise InvalidInput("excesses must be strictly positive")
    n = y.size
    kappa_cap = 1.0 if spec.pair == "var_es" else np.inf

    def f(v):
        eta, kappa = v[:n], v[n:]
        if np.any(kappa >= kappa_cap):
            return np.inf
        return -_kernels.gpd_loglik(eta, kappa, y)

    def g(v):
        return -_kernels.gpd_grad(v[:n], v[n:], y)

    from .engine import Objective

    return Objective(f, g, 2 * n)


def _averaged_lambda_grad(lam, y, eps, m, rng):
    """(grad at lam + sum of grads at feasible perturbations) / (m+1)."""
    base = _kernels.gpd_grad(lam.eta, lam.kappa, y)
    total = base.copy()
    got = 0
    rejected = 0
    cap = 10 * m
    while got < m:
        u = sample_unit_ball(2 * lam.n, m - got, rng)
        gsum, feasible = _kernels.gpd_sampled_grad_sum(lam.eta, lam.kappa, y, eps, u)
        total += gsum
        ok = int(feasible.sum())
        got += ok
        rejected += u.shape[0] - ok
        if rejected > cap:
            raise SamplingExhausted(
                f"more than {cap} infeasible draws at eps={eps:g}")
    return total / (m + 1)


def _per_sample_theta_grad(state, y, eps, m, rng):
    """Unsimplified sampled gradient: fresh Jacobian at every sample."""
    lam, spec, inv = state.lam, state.spec, state.jac_inverses
    total = _blocks_apply_t(inv, _kernels.gpd_grad(lam.eta, lam.kappa, y))
    base = lam.as_vector()
    n = lam.n
    got = 0
    rejected = 0
    cap = 10 * m
    while got < m:
        u = sample_unit_ball(2 * n, m - got, rng)
        for row in u:
            v = base + eps * _blocks_apply(inv, row)
            pert = Lambda(v[:n], v[n:])
            ok = np.isfinite(_kernels.gpd_loglik(pert.eta, pert.kappa, y))
            if ok and spec.pair == "var_es":
                ok = bool(np.all(pert.kappa < 1.0))
            if ok:
                try:
                    _, pinv = jacobian_blocks(pert, spec)
                except SingularBlock:
                    ok = False
            if not ok:
                rejected += 1
                if rejected > cap:
                    raise SamplingExhausted(
                        f"more than {cap} infeasible draws at eps={eps:g}")
                continue
            total += _blocks_apply_t(pinv, _kernels.gpd_grad(pert.eta, pert.kappa, y))
            got += 1
            if got == m:
                break
    return total / (m + 1)


def approx_subgradient_theta(state, y, eps, gs, rng, per_sample_jacobian=False):
    """Sampled log-likelihood gradient in functional space.

    Averages the (eta, kappa) gradient over the base point and m
    feasible ball perturbations, then pulls the average back through
    the blockwise inverse-transpose Jacobian.  With
    ``per_sample_jacobian`` the pullback instead uses a Jacobian
    recomputed at every sampled point (slower; kept for comparison).
    """
    y = _check_excesses(state.lam, y)
    if not np.isfinite(_kernels.gpd_loglik(state.lam.eta, state.lam.kappa, y)):
        raise InfeasiblePoint("subgradient requested at an infeasible point")
    m = gs.resolve_m(2 * state.n)
    if per_sample_jacobian:
        return _per_sample_theta_grad(state, y, eps, m, rng)
    avg = _averaged_lambda_grad(state.lam, y, eps, m, rng)
    return _blocks_apply_t(state.jac_inverses, avg)


def _theta_grad_rows(state, y, eps, m, rng):
    """Base + per-sample functional-space gradients as rows (for qp mode)."""
    lam, inv = state.lam, state.jac_inverses
    n = lam.n
    rows = [_blocks_apply_t(inv, _kernels.gpd_grad(lam.eta, lam.kappa, y))]
    rejected = 0
    cap = 10 * m
    while len(rows) < m + 1:
        u = sample_unit_ball(2 * n, m + 1 - len(rows), rng)
        pe = lam.eta[None, :] + eps * u[:, :n]
        pk = lam.kappa[None, :] + eps * u[:, n:]
        feasible = np.all(1.0 + pk * (y[None, :] * np.exp(-pe)) > 0.0, axis=1)
        for i in range(u.shape[0]):
            if not feasible[i]:
                rejected += 1
                if rejected > cap:
                    raise SamplingExhausted(
                        f"more than {cap} infeasible draws at eps={eps:g}")
                continue
            rows.append(_blocks_apply_t(inv, _kernels.gpd_grad(pe[i], pk[i], y)))
            if len(rows) == m + 1:
                break
    return np.array(rows)


def initial_lambda(y, spec):
    """Constant starting point from method-of-moments GPD estimates.

    kappa_hat = (1 - mean^2/var)/2 and sigma_hat = mean*(mean^2/var+1)/2,
    with kappa_hat clamped to [-0.4, 0.9] and, if needed, raised so the
    largest excess stays inside the support.
    """
    y = np.asarray(y, dtype=float)
    mean = float(y.mean())
    var = float(y.var())
    if var <= 0.0:
        ratio = 1.0
    else:
        ratio = mean * mean / var
    kap = float(np.clip(0.5 * (1.0 - ratio), -0.4, 0.9))
    sig = 0.5 * mean * (ratio + 1.0)
    if kap < 0.0 and 1.0 + kap * y.max() / sig <= 0.0:
        kap = -0.95 * sig / y.max()
    n = y.size
    return Lambda(np.full(n, np.log(sig)), np.full(n, kap))


@dataclass
class PotModel:
    """Fitted smooth POT model."""

    state: PotState
    projector: AdditiveProjector
    decompositions: tuple
    trace: FitTrace

    @property
    def functional_names(self):
        return self.state.spec.names


def fit_pot_additive(y, W, spec, specs, gs=None, per_sample_jacobian=False):
    """Fit GPD excesses with additivity imposed on the functional pair.

    Each iteration: build the Jacobian blocks at the current
    (eta, kappa); form the sampled negative-log-likelihood gradient in
    functional space; smooth each functional half onto the additive
    space; normalize the concatenated direction; pull it back to
    (eta, kappa) and Armijo-search the negative log-likelihood along
    it, rejecting any step that leaves the support.  eps and tau shrink
    whenever the gradient norm drops below tau or no step is accepted.

    Returns a :class:`PotModel`; the reported functional vectors are
    recomputed exactly from the final (eta, kappa), and each is also
    decomposed additively for reporting.
    """
    y = np.asarray(y, dtype=float)
    if not np.all(y > 0.0):
        raise InvalidInput("excesses must be strictly positive")
    projector = AdditiveProjector(W, specs)
    n = y.size
    if projector.k > 0 and projector.W.shape[0] != n:
        raise InvalidInput("W must have one row per observation")
    gs = gs if gs is not None else GsParams(subgradient_mode="average")
    m = gs.resolve_m(2 * n)
    rng = np.random.default_rng(gs.seed)
    objective = negative_loglik_objective(y, spec)

    lam = initial_lambda(y, spec)
    state = PotState.from_lambda(lam, spec)
    f = objective.eval(lam.as_vector())
    if not np.isfinite(f):
        raise NumericalFailure("method-of-moments start is infeasible")
    eps, tau = gs.eps0, gs.tau0
    trace = FitTrace()

    def shrink(it, gnorm, method, backtracks, event):
        nonlocal eps, tau
        eps *= gs.mu
        tau *= gs.lam
        trace.add(it, f, gnorm, eps, tau, 0.0, method, backtracks, event)

    for it in range(gs.max_iter):
        if eps <= gs.eps_min and tau <= gs.tau_min:
            trace.converged = True
            break
        try:
            if gs.subgradient_mode == "qp":
                rows = -_theta_grad_rows(state, y, eps, m, rng)
                try:
                    res = min_norm_point(GradientSet(rows))
                except NumericalFailure:
                    res = average_fallback(GradientSet(rows))
                ghat, gnorm, method = res.point, res.norm, res.method
            else:
                ghat = -approx_subgradient_theta(
                    state, y, eps, gs, rng, per_sample_jacobian)
                gnorm, method = float(np.linalg.norm(ghat)), "average"
        except SamplingExhausted:
            shrink(it, np.nan, "none", 0, "sampling_exhausted")
            continue
        if gnorm <= tau:
            shrink(it, gnorm, method, 0, "shrink")
            continue
        half1 = -projector.project(ghat[:n]).fitted
        half2 = -projector.project(ghat[n:]).fitted
        dstar = np.concatenate([half1, half2])
        dnorm = float(np.linalg.norm(dstar))
        if dnorm < 1e-15:
            shrink(it, gnorm, method, 0, "shrink")
            continue
        d = dstar / dnorm
        v = _blocks_apply(state.jac_inverses, d)
        base = lam.as_vector()
        t, accepted, backtracks = 1.0, None, 0
        for b in range(gs.max_backtracks + 1):
            ft = objective.eval(base + t * v)
            if np.isfinite(ft) and ft < f - gs.beta * t * gnorm:
                accepted, backtracks = ft, b
                break
            t *= 0.5
        if accepted is None:
            shrink(it, gnorm, method, gs.max_backtracks + 1, "shrink")
            continue
        lam = Lambda.from_vector(base + t * v)
        state = PotState.from_lambda(lam, spec)
        f = accepted
        trace.add(it, f, gnorm, eps, tau, t, method, backtracks, "step")
    else:
        trace.message = "max_iter reached"

    decomps = tuple(projector.project(th) for th in state.theta_pair)
    return PotModel(state, projector, decomps, trace)

import numpy as np
import pytest

from gsda import (
    AdditiveProjector,
    SmootherSpec,
    additive_project,
    bandwidth_for_df,
    cell_factor_smooth,
    effective_df,
    local_linear_smooth,
)
from gsda.errors import DegenerateDesignWarning, InvalidInput


def kernel_fit_reference(w, g, bandwidth, targets):
    """Point-by-point weighted degree-1 least squares (independent path)."""
    out = np.empty(targets.size)
    for i, x0 in enumerate(targets):
        k = np.exp(-0.5 * ((w - x0) / bandwidth) ** 2)
        X = np.column_stack([np.ones_like(w), w - x0])
        A = X.T @ (k[:, None] * X)
        b = X.T @ (k * g)
        out[i] = np.linalg.solve(A, b)[0]
    return out


class TestLocalLinear:
    def test_reproduces_affine(self):
        w = np.linspace(0.0, 1.0, 60)
        g = 3.0 * w + 1.0
        fit = local_linear_smooth(w, g, bandwidth=2.0)
        assert np.max(np.abs(fit - g)) <= 1e-8

    def test_reproduces_constant(self):
        w = np.linspace(-2.0, 5.0, 40)
        fit = local_linear_smooth(w, np.full(40, 3.25), bandwidth=0.4)
        assert np.allclose(fit, 3.25, atol=1e-10)

    def test_sine_fit_against_reference_and_truth(self):
        w = np.linspace(0.0, 2.0 * np.pi, 200)
        g = np.sin(w)
        fit = local_linear_smooth(w, g, bandwidth=0.3)
        ref = kernel_fit_reference(w, g, 0.3, w)
        assert np.max(np.abs(fit - ref)) <= 1e-9
        assert np.max(np.abs(fit - np.sin(w))) <= 0.05

    def test_degenerate_design_returns_mean(self):
        w = np.full(10, 2.0)
        g = np.arange(10.0)
        with pytest.warns(DegenerateDesignWarning):
            fit = local_linear_smooth(w, g, bandwidth=1.0)
        assert np.allclose(fit, g.mean())

    def test_linearity_in_response(self):
        rng = np.random.default_rng(0)
        w = rng.uniform(size=50)
        g1, g2 = rng.normal(size=50), rng.normal(size=50)
        a, b = 1.7, -0.3
        lhs = local_linear_smooth(w, a * g1 + b * g2, 0.2)
        rhs = a * local_linear_smooth(w, g1, 0.2) + b * local_linear_smooth(w, g2, 0.2)
        assert np.max(np.abs(lhs - rhs)) <= 1e-10

    def test_rejects_bad_inputs(self):
        with pytest.raises(InvalidInput):
            local_linear_smooth(np.array([1.0]), np.array([1.0]), 0.5)
        with pytest.raises(InvalidInput):
            local_linear_smooth(np.arange(5.0), np.arange(5.0), -1.0)


class TestEffectiveDf:
    def test_wide_bandwidth_gives_affine_df(self):
        w = np.linspace(0.0, 1.0, 80)
        assert effective_df(w, 1e6) == pytest.approx(2.0, abs=1e-6)

    def test_tiny_bandwidth_interpolates(self):
        w = np.linspace(0.0, 1.0, 25)
        assert effective_df(w, 1e-7) == pytest.approx(25.0, abs=1e-8)

    def test_bisection_hits_target(self):
        w = np.linspace(0.0, 1.0, 100)
        bw = bandwidth_for_df(w, 10.0)
        assert 9.9 <= effective_df(w, bw) <= 10.1
        # independent trace: smooth each indicator vector, read its own entry
        trace = sum(kernel_fit_reference(w, np.eye(100)[i], bw,
                                         np.array([w[i]]))[0]
                    for i in range(100))
        assert trace == pytest.approx(effective_df(w, bw), abs=1e-8)

    def test_monotone_nonincreasing_in_bandwidth(self):
        w = np.linspace(0.0, 1.0, 60)
        grid = np.geomspace(1e-3, 10.0, 25)
        dfs = [effective_df(w, b) for b in grid]
        assert np.all(np.diff(dfs) <= 1e-9)


class TestCellFactor:
    def test_single_level(self):
        g = np.array([1.0, 5.0, 3.0])
        assert np.allclose(cell_factor_smooth(np.array(["A"] * 3), g), 3.0)

    def test_two_groups(self):
        fit = cell_factor_smooth(np.array(["A", "A", "B"]),
                                 np.array([1.0, 3.0, 5.0]))
        assert np.allclose(fit, [2.0, 2.0, 5.0])

    def test_matches_groupby_oracle(self):
        rng = np.random.default_rng(4)
        labels = rng.integers(0, 7, size=200)
        g = rng.normal(size=200)
        fit = cell_factor_smooth(labels, g)
        oracle = np.array([g[labels == lab].mean() for lab in labels])
        assert np.max(np.abs(fit - oracle)) <= 1e-12


class TestAdditiveProject:
    def test_single_covariate_equals_centered_smooth(self):
        rng = np.random.default_rng(1)
        w = np.sort(rng.uniform(size=60))
        g = rng.normal(size=60)
        fit = additive_project(g, w[:, None], [SmootherSpec("local_linear", 0,
                                                            bandwidth=0.15)])
        single = local_linear_smooth(w, g - g.mean(), 0.15)
        expect = g.mean() + (single - single.mean())
        assert np.max(np.abs(fit.fitted - expect)) <= 1e-10

    def test_linear_truth_recovered_against_ols_oracle(self):
        rng = np.random.default_rng(2)
        W = rng.uniform(size=(120, 2))
        g = 2.0 + W[:, 0]
        fit = additive_project(g, W, [SmootherSpec("linear", 0),
                                      SmootherSpec("linear", 1)])
        X = np.column_stack([np.ones(120), W])
        coef, *_ = np.linalg.lstsq(X, g, rcond=None)
        ols_comp1 = coef[1] * (W[:, 0] - W[:, 0].mean())
        assert fit.intercept == pytest.approx(g.mean(), abs=1e-9)
        assert np.max(np.abs(fit.components[0] - ols_comp1)) <= 1e-6
        assert np.max(np.abs(fit.components[1])) <= 1e-6
        assert np.max(np.abs(fit.fitted - g)) <= 1e-6

    def test_cell_factor_component_is_centered_cell_means(self):
        rng = np.random.default_rng(3)
        codes = rng.integers(0, 5, size=90).astype(float)
        g = rng.normal(size=90)
        fit = additive_project(g, codes[:, None], [SmootherSpec("cell_factor", 0)])
        means = cell_factor_smooth(codes, g)
        assert np.max(np.abs(fit.fitted - means)) <= 1e-9

    def test_components_mean_zero(self):
        rng = np.random.default_rng(5)
        W = np.column_stack([rng.uniform(size=100),
                             rng.integers(0, 4, 100).astype(float)])
        specs = [SmootherSpec("local_linear", 0), SmootherSpec("cell_factor", 1)]
        fit = additive_project(rng.normal(size=100), W, specs)
        for comp in fit.components:
            assert abs(comp.mean()) <= 1e-8

    def test_idempotent_for_projection_smoothers(self):
        rng = np.random.default_rng(6)
        W = np.column_stack([rng.uniform(size=100),
                             rng.integers(0, 4, 100).astype(float)])
        specs = [SmootherSpec("linear", 0), SmootherSpec("cell_factor", 1)]
        proj = AdditiveProjector(W, specs)
        first = proj.project(rng.normal(size=100))
        second = proj.project(first.fitted)
        assert np.max(np.abs(second.fitted - first.fitted)) <= 1e-6

    def test_kernel_smoother_contracts_under_reprojection(self):
        # kernel hats shrink rather than project, so exact idempotence is
        # not attainable; repeated projection must contract instead
        rng = np.random.default_rng(7)
        w = np.sort(rng.uniform(0.0, 1.0, 150))
        proj = AdditiveProjector(w[:, None], [SmootherSpec("local_linear", 0)])
        prev = proj.project(rng.normal(size=150)).fitted
        diffs = []
        for _ in range(5):
            cur = proj.project(prev).fitted
            diffs.append(np.max(np.abs(cur - prev)))
            prev = cur
        assert np.all(np.diff(diffs) < 0.0)
        # on smooth input the second application moves less than the first
        w = np.linspace(0.0, 2.0 * np.pi, 200)
        proj = AdditiveProjector(w[:, None],
                                 [SmootherSpec("local_linear", 0, bandwidth=0.3)])
        g = np.sin(w)
        first = proj.project(g)
        second = proj.project(first.fitted)
        assert np.max(np.abs(second.fitted - first.fitted)) \
            <= np.max(np.abs(first.fitted - g))

    def test_spec_validation(self):
        with pytest.raises(InvalidInput):
            SmootherSpec("local_linear", 0, bandwidth=0.1, target_df=5.0)
        with pytest.raises(InvalidInput):
            SmootherSpec("linear", 0, bandwidth=0.1)
        with pytest.raises(InvalidInput):
            SmootherSpec("spline", 0)
        with pytest.raises(InvalidInput):
            AdditiveProjector(np.ones((10, 2)),
                              [SmootherSpec("linear", 0), SmootherSpec("linear", 0)])

    def test_intercept_only(self):
        g = np.array([1.0, 2.0, 6.0])
        fit = additive_project(g, None, [])
        assert fit.intercept == pytest.approx(3.0)
        assert np.allclose(fit.fitted, 3.0)

    def test_cycle_cap_sets_nonconvergence_flag(self, monkeypatch):
        import gsda.smoothing as smoothing_mod

        monkeypatch.setattr(smoothing_mod, "BACKFIT_MAX_CYCLES", 1)
        rng = np.random.default_rng(8)
        w = rng.uniform(size=(60, 2))
        W = np.column_stack([w[:, 0], w[:, 0] + 0.01 * w[:, 1]])  # near-collinear
        fit = additive_project(rng.normal(size=60), W,
                               [SmootherSpec("local_linear", 0),
                                SmootherSpec("local_linear", 1)])
        assert not fit.converged
        assert fit.cycles == 1
        assert np.all(np.isfinite(fit.fitted))

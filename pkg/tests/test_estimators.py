import warnings

import numpy as np
import pytest

from tailgarch.estimators import (
    FitConfig,
    _Data,
    _loglad_objective,
    _mnwm_objective,
    _y_keep,
    _qml_objective,
    default_config,
    fit,
    log_lad_fit,
    mnwm_fit,
    mnwm_moments,
    pqml_fit,
    pqmttl_fit,
    pqmttl_schedule,
    qml_fit,
    qmttl_criterion,
    qmttl_fit,
    wlqml_fit,
    wlqml_weights,
)
from tailgarch.exceptions import InvalidConfigError, InvalidDataError
from tailgarch.model import IOTA, ErrorDist, GarchParams, iterate_volatility, simulate_garch
from tailgarch.optimize import OptimizerConfig
from tailgarch.trimming import TrimPlan, fractile_schedule

THETA0 = GarchParams(0.05, 0.05, 0.90)


def grid_oracle(objective, lo=(IOTA, IOTA, IOTA), hi=(2.0, 1 - IOTA, 1 - IOTA),
                points=21, levels=4):
    """Nested grid search: each level zooms to two cells around the best node."""
    lo, hi = np.array(lo, float), np.array(hi, float)
    for _ in range(levels):
        axes = [np.linspace(lo[i], hi[i], points) for i in range(3)]
        grid = np.array(np.meshgrid(*axes, indexing="ij")).reshape(3, -1).T
        vals = np.array([objective(g) for g in grid])
        best = grid[np.argmin(vals)]
        width = (hi - lo) / (points - 1) * 2
        lo = np.maximum(best - width, IOTA)
        hi = np.minimum(best + width, [np.inf, 1 - IOTA, 1 - IOTA])
    return best, float(vals.min())


@pytest.fixture(scope="module")
def gauss800():
    return simulate_garch(THETA0, ErrorDist.gaussian(), 800, 123)


@pytest.fixture(scope="module")
def pareto800():
    return simulate_garch(THETA0, ErrorDist.pareto(2.5), 800, 321)


class TestGridOracle:
    def test_qml_n200(self):
        y = simulate_garch(GarchParams(0.2, 0.2, 0.6), ErrorDist.gaussian(), 200, 1)
        best, val = grid_oracle(_qml_objective(_Data(y)))
        res = qml_fit(y)
        assert np.abs(res.theta - best).max() < 1e-3
        assert res.criterion_value <= val + 1e-9

    def test_qml_50_points(self):
        y = simulate_garch(GarchParams(0.2, 0.2, 0.6), ErrorDist.gaussian(), 50, 4)
        best, _ = grid_oracle(_qml_objective(_Data(y)))
        assert np.abs(qml_fit(y).theta - best).max() < 1e-3

    def test_loglad_50_points(self):
        y = simulate_garch(GarchParams(0.2, 0.2, 0.6), ErrorDist.gaussian(), 50, 4)
        best, val = grid_oracle(_loglad_objective(_Data(y)))
        res = log_lad_fit(y)
        assert np.abs(res.theta - best).max() < 2e-3
        assert res.criterion_value <= val + 1e-9


class TestReduction:
    def test_disabled_trimming_equals_qml(self):
        for seed in range(5):
            y = simulate_garch(THETA0, ErrorDist.pareto(2.5), 400, seed)
            cfg = FitConfig(plan=TrimPlan.disabled(), use_y_trim=False)
            a, b = qmttl_fit(y, cfg), qml_fit(y, cfg)
            assert np.abs(a.theta - b.theta).max() <= 1e-6

    def test_disabled_pqmttl_equals_pqml(self, pareto800):
        cfg = FitConfig(plan=TrimPlan.disabled(), use_y_trim=False)
        a, b = pqmttl_fit(pareto800, cfg), pqml_fit(pareto800, cfg)
        assert np.abs(a.theta - b.theta).max() <= 1e-6


class TestQmttl:
    def test_recovers_parameters(self, gauss800):
        res = qmttl_fit(gauss800)
        assert res.converged
        assert np.abs(res.theta - THETA0.to_array()).max() < 0.15
        assert res.trim.trimmed_neg == 104 and res.trim.trimmed_pos == 2

    def test_exclusive_trims_exact_counts(self, gauss800):
        plan = fractile_schedule(800, exclusive=True)
        res = qmttl_fit(gauss800, FitConfig(plan=plan))
        assert (res.trim.trimmed_neg, res.trim.trimmed_pos) == (105, 3)
        assert res.trim.trimmed_y == 1

    def test_gradient_matches_finite_differences(self, gauss800):
        plan = fractile_schedule(800)
        rng = np.random.default_rng(5)
        checked = 0
        while checked < 20:
            theta = np.array([rng.uniform(0.02, 0.3), rng.uniform(0.02, 0.2), rng.uniform(0.5, 0.93)])
            path = iterate_volatility(GarchParams(*theta), gauss800, h_init="sample")
            e = path.centered[1:]
            neg = np.sort(np.minimum(e, 0))
            pos = np.sort(np.maximum(e, 0))[::-1]
            thresholds = np.array([neg[plan.k1 - 1], pos[plan.k2 - 1]])
            gaps = np.abs(e[:, None] - thresholds[None, :])
            gaps = gaps[gaps > 0]
            if gaps.min() < 1e-4:
                continue
            _, g = qmttl_criterion(gauss800, theta, plan)
            fd = np.empty(3)
            for i in range(3):
                step = 1e-7 * (1 + abs(theta[i]))
                up, dn = theta.copy(), theta.copy()
                up[i] += step
                dn[i] -= step
                fd[i] = (qmttl_criterion(gauss800, up, plan)[0]
                         - qmttl_criterion(gauss800, dn, plan)[0]) / (2 * step)
            assert np.abs(g - fd).max() / np.abs(fd).max() <= 1e-4
            checked += 1

    def test_projected_gradient_close_to_simplex(self, gauss800):
        a = qmttl_fit(gauss800, FitConfig(theta_init=THETA0))
        b = qmttl_fit(gauss800, FitConfig(theta_init=THETA0,
                                          optimizer=OptimizerConfig(method="projected-gradient")))
        assert np.abs(a.theta - b.theta).max() < 0.05

    def test_degenerate_series(self):
        with pytest.raises(InvalidDataError):
            qmttl_fit(np.zeros(200))
        with pytest.raises(InvalidDataError):
            qml_fit(np.full(200, 0.3))

    def test_plan_too_large(self):
        y = simulate_garch(THETA0, ErrorDist.gaussian(), 40, 0)
        with pytest.raises(InvalidConfigError):
            qmttl_fit(y, FitConfig(plan=TrimPlan(35, 3)))

    def test_deterministic(self, pareto800):
        for name in ("qmttl", "mnwm", "qml", "loglad", "wlqml", "pqml", "pqmttl"):
            cfg = default_config(name, 800)
            a, b = fit(name, pareto800, cfg), fit(name, pareto800, cfg)
            assert np.array_equal(a.theta, b.theta), name


class TestScaleEquivariance:
    @pytest.mark.parametrize("name", ["qml", "qmttl"])
    def test_rescaling(self, name, gauss800):
        c = 4.0
        start = GarchParams(0.05, 0.05, 0.9)
        cfg = default_config(name, 800, theta_init=start)
        cfg_c = default_config(name, 800, theta_init=GarchParams(c * 0.05, c * 0.05 / c, 0.9))
        a = fit(name, gauss800, cfg)
        # y -> sqrt(c) y scales omega by c; alpha is dimensionless under y**2 scaling
        b = fit(name, np.sqrt(c) * gauss800, cfg_c)
        assert b.theta[2] == pytest.approx(a.theta[2], abs=5e-3)
        assert b.theta[0] / c == pytest.approx(a.theta[0], abs=5e-3)
        assert b.theta[1] == pytest.approx(a.theta[1], abs=5e-3)


class TestMnwm:
    def test_recentering_identity(self, pareto800):
        m = mnwm_moments(pareto800, THETA0.to_array(), fractile_schedule(800, mode="symmetric"))
        dev_sum = m[:, 0] / iterate_volatility(THETA0, pareto800, "sample").s[1:, 0]
        assert abs(dev_sum.sum()) < 1e-9

    @pytest.mark.parametrize("kind", ["simple", "hampel", "tukey", "exponential"])
    def test_each_redescender_fits(self, kind):
        betas = []
        for seed in range(10):
            y = simulate_garch(THETA0, ErrorDist.gaussian(), 800, 2000 + seed)
            res = mnwm_fit(y, default_config("mnwm", 800, redescender=kind, theta_init=THETA0))
            assert res.converged
            betas.append(res.theta[2])
        assert abs(np.median(betas) - 0.9) < 0.05

    def test_level_set_by_unit_residual_variance(self, gauss800):
        res = mnwm_fit(gauss800, default_config("mnwm", 800, theta_init=THETA0))
        h = iterate_volatility(res.theta_hat, gauss800, "sample").h
        assert np.mean(gauss800[1:] ** 2 / h[1:]) == pytest.approx(1.0, abs=0.02)

    def test_moments_invariant_along_level_ray(self):
        # (c omega, c alpha, beta) rescales h by c when h_1 scales too, so the
        # re-centered moments only pick up the factor diag(1/c, 1/c, 1) / c
        y = simulate_garch(THETA0, ErrorDist.pareto(2.5), 400, 8)
        plan = fractile_schedule(400, mode="symmetric")
        c = 3.0
        theta = np.array([0.07, 0.08, 0.85])
        a = mnwm_moments(y, theta, plan, h_init="omega").sum(0)
        b = mnwm_moments(y, theta * [c, c, 1], plan, h_init="omega").sum(0)
        assert np.allclose(b, a * np.array([1 / c, 1 / c, 1]) / c, rtol=1e-9)

    def test_self_normalized_form_bounded(self):
        # mean(m) mean(m)' <= mean(m m'), so the quadratic form lies in [0, 1]
        y = simulate_garch(THETA0, ErrorDist.pareto(2.5), 800, 2)
        cfg = default_config("mnwm", 800)
        data = _Data(y, cfg.h_init)
        f = _mnwm_objective(data, cfg.plan, cfg.redescender, _y_keep(data, cfg.plan, cfg))
        rng = np.random.default_rng(5)
        for _ in range(300):
            th = np.array([rng.uniform(1e-3, 1), 10 ** rng.uniform(-10, -0.5), rng.uniform(0, 0.999)])
            h = iterate_volatility(GarchParams(*th), y, "sample").h
            level = (np.mean(y[1:] ** 2 / h[1:]) - 1) ** 2
            v = f(th)
            assert v == np.inf or level - 1e-12 <= v <= level + 1 + 1e-9
        # singular moment covariance at alpha ~ 0: undefined, not negative
        assert f(np.array([0.831893998, 1.04484431e-09, 0.325629143])) == np.inf

    def test_threshold_diagnostics(self, gauss800):
        res = mnwm_fit(gauss800)
        assert res.trim.pos_threshold == -res.trim.neg_threshold > 0


class TestDefaultStart:
    @pytest.mark.parametrize("name", ["qmttl", "mnwm"])
    def test_never_worse_than_qml_warm_start(self, name):
        for seed in (2, 3, 6):
            y = simulate_garch(THETA0, ErrorDist.pareto(2.5), 800, seed)
            warm = qml_fit(y, FitConfig(optimizer=OptimizerConfig(restarts=1, tol=1e-6, maxfev=600)))
            single = fit(name, y, default_config(name, 800, theta_init=warm.theta_hat))
            multi = fit(name, y, default_config(name, 800))
            assert multi.criterion_value <= single.criterion_value + 1e-9


class TestOtherCriteria:
    def test_loglad_criterion_zero_only_at_exact_fit(self):
        y = simulate_garch(THETA0, ErrorDist.gaussian(), 60, 2)
        d = _Data(y)
        assert _loglad_objective(d)(THETA0.to_array()) > 0

    def test_loglad_zeros(self):
        y = simulate_garch(THETA0, ErrorDist.gaussian(), 200, 3)
        y[[10, 50]] = 0.0
        with pytest.warns(RuntimeWarning):
            log_lad_fit(y)
        y[:30] = 0.0
        with pytest.raises(InvalidDataError):
            log_lad_fit(y)

    def test_loglad_needs_simplex(self, gauss800):
        with pytest.raises(InvalidConfigError):
            log_lad_fit(gauss800, FitConfig(optimizer=OptimizerConfig(method="pg")))

    def test_wlqml_weights(self):
        assert np.all(wlqml_weights(np.full(30, 0.1)) == 1.0)
        w = wlqml_weights([0, 0, 0, 0, 10, 0], threshold=2.0)
        assert w[5] == pytest.approx(5.0 ** -4)
        assert np.all(w[:5] == 1.0)

    def test_wlqml_short(self):
        with pytest.raises(InvalidDataError):
            wlqml_fit(np.random.default_rng(0).standard_normal(15))

    def test_pqml_shift_invariance(self, pareto800):
        a = pqml_fit(pareto800)
        b = pqml_fit(pareto800, shift=12.5)
        # the offset changes float rounding along the simplex path, not the minimizer
        assert np.abs(a.theta - b.theta).max() < 1e-6
        assert b.criterion_value == pytest.approx(a.criterion_value + 12.5)

    def test_pqml_index_validation(self):
        with pytest.raises(InvalidConfigError):
            FitConfig(pqml_index=1.0)

    def test_pqmttl_u_range(self, pareto800):
        h = iterate_volatility(THETA0, pareto800, "sample").h
        absu = np.abs(pareto800) / np.sqrt(h)
        u = absu / (1 + absu) - 1 / 3.5
        assert np.all(u >= -1 / 3.5) and np.all(u < 1 - 1 / 3.5)

    def test_pqmttl_schedule(self):
        assert (pqmttl_schedule(100, "weak").k1, pqmttl_schedule(100, "weak").k2) == (5, 1)
        assert pqmttl_schedule(800, "strong").k1 == 27
        with pytest.raises(InvalidConfigError):
            pqmttl_schedule(800, "mild")

    @pytest.mark.parametrize("name", ["wlqml", "pqml", "pqmttl"])
    def test_fits_in_box(self, name, pareto800):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            res = fit(name, pareto800)
        t = res.theta
        assert t[0] >= IOTA and IOTA <= t[1] <= 1 - IOTA and IOTA <= t[2] <= 1 - IOTA

    def test_unknown_estimator(self, gauss800):
        with pytest.raises(InvalidConfigError):
            fit("garch-x", gauss800)

    def test_omega_start_option(self, gauss800):
        res = qml_fit(gauss800, FitConfig(h_init="omega"))
        assert res.converged

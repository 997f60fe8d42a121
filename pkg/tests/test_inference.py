import math
import warnings
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from tailgarch.estimators import FitConfig, default_config, mnwm_fit, qml_fit, qmttl_fit
from tailgarch.exceptions import (
    InvalidDataError,
    InvalidInputError,
    InvalidRestrictionError,
    NumericalRankError,
)
from tailgarch.inference import (
    KS_CRIT_5PCT,
    _sym_inverse,
    ks_normality,
    linear_restriction,
    mnwm_scale,
    qmttl_scale,
    wald_test,
)
from tailgarch.model import ErrorDist, GarchParams, sample_error, simulate_garch
from tailgarch.optimize import OptimizerConfig
from tailgarch.trimming import TrimPlan

THETA0 = GarchParams(0.05, 0.05, 0.90)


def loop_scores(theta, y):
    """Plain-loop h_t and s_t with h_1 set to the sample mean of y**2."""
    omega, alpha, beta = theta
    n = len(y)
    h = np.empty(n)
    dh = np.zeros((n, 3))
    h[0] = np.mean(y * y)
    for t in range(1, n):
        h[t] = omega + alpha * y[t - 1] ** 2 + beta * h[t - 1]
        dh[t] = np.array([1.0, y[t - 1] ** 2, h[t - 1]]) + beta * dh[t - 1]
    return h, dh / h[:, None]


@pytest.fixture(scope="module")
def gauss800():
    return simulate_garch(THETA0, ErrorDist.gaussian(), 800, 77)


@pytest.fixture(scope="module")
def qmttl800(gauss800):
    return qmttl_fit(gauss800, default_config("qmttl", 800, theta_init=THETA0))


class TestQmttlScale:
    def test_untrimmed_reduces_to_classic_form(self, gauss800):
        cfg = FitConfig(plan=TrimPlan.disabled(), use_y_trim=False)
        res = qmttl_fit(gauss800, cfg)
        h, s = loop_scores(res.theta, gauss800)
        eps2 = gauss800[1:] ** 2 / h[1:]
        m2, m4 = eps2.mean(), (eps2 ** 2).mean()
        S = s[1:].T @ s[1:] / (len(gauss800) - 1)
        expect = len(gauss800) * S / (m4 - 2 * m2 + 1)
        got = qmttl_scale(res, gauss800).v_hat
        assert np.allclose(got, expect, rtol=1e-8)

    def test_symmetric_positive_definite(self, qmttl800, gauss800):
        sc = qmttl_scale(qmttl800, gauss800)
        assert np.allclose(sc.v_hat, sc.v_hat.T)
        assert np.linalg.eigvalsh(sc.v_hat).min() > 0
        assert np.all(sc.se > 0) and np.all(np.isfinite(sc.se))
        assert np.allclose(sc.cov_theta @ sc.v_hat, np.eye(3), atol=1e-6)
        assert not sc.floored

    def test_scale_grows_with_n(self):
        # nested samples: the first 100 points of each n=800 path
        at_truth, fitted = [], []
        for seed in range(10):
            y = simulate_garch(THETA0, ErrorDist.gaussian(), 800, 500 + seed)
            big = qmttl_fit(y, default_config("qmttl", 800, theta_init=THETA0))
            small = qmttl_fit(y[:100], default_config("qmttl", 100, theta_init=THETA0))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                at_truth.append(
                    qmttl_scale(replace(big, theta_hat=THETA0), y).v_hat[2, 2]
                    > qmttl_scale(replace(small, theta_hat=THETA0), y[:100]).v_hat[2, 2])
                fitted.append((qmttl_scale(big, y).v_hat[2, 2],
                               qmttl_scale(small, y[:100]).v_hat[2, 2]))
        assert all(at_truth)
        fitted = np.array(fitted)
        assert np.median(fitted[:, 0]) > 5 * np.median(fitted[:, 1])

    def test_t_ratio_and_interval(self, qmttl800, gauss800):
        sc = qmttl_scale(qmttl800, gauss800)
        b = qmttl800.theta[2]
        assert sc.t_ratio(qmttl800.theta, 0.9) == pytest.approx((b - 0.9) / sc.se[2])
        lo, hi = sc.confidence_interval(qmttl800.theta)
        assert (hi - lo) == pytest.approx(2 * 1.959964 * sc.se[2], rel=1e-6)

    def test_wrong_estimator_rejected(self, gauss800):
        with pytest.raises(InvalidInputError):
            qmttl_scale(qml_fit(gauss800), gauss800)

    def test_length_mismatch_rejected(self, qmttl800, gauss800):
        with pytest.raises(InvalidInputError):
            qmttl_scale(qmttl800, gauss800[:700])

    def test_rank_deficient_scores(self):
        # constant volatility path: s_t is the same vector for every t
        y = np.tile([1.0, -1.0], 100)
        res = qmttl_fit(y, FitConfig(plan=TrimPlan.disabled(), use_y_trim=False,
                                     theta_init=GarchParams(1.0, 1e-10, 1e-10)))
        with pytest.raises(NumericalRankError):
            qmttl_scale(res, y)


class TestMnwmScale:
    @pytest.fixture
    def fitted(self, gauss800):
        return mnwm_fit(gauss800, default_config("mnwm", 800, theta_init=THETA0))

    def test_positive_definite(self, fitted, gauss800):
        sc = mnwm_scale(fitted, gauss800)
        assert np.linalg.eigvalsh(sc.v_hat).min() > 0
        assert np.all(sc.se > 0)

    def test_uses_centered_scores(self, fitted, gauss800):
        sc = mnwm_scale(fitted, gauss800)
        h, s = loop_scores(fitted.theta, gauss800)
        s = s[1:]
        centered = (s - s.mean(0)).T @ (s - s.mean(0))
        raw = s.T @ s
        ratio_c = sc.v_hat / centered
        assert np.allclose(ratio_c, ratio_c[0, 0], rtol=1e-6)
        assert not np.allclose(sc.v_hat / raw, (sc.v_hat / raw)[0, 0], rtol=1e-3)

    @pytest.mark.parametrize("kind", ["hampel", "tukey", "exponential"])
    def test_smooth_redescenders_give_positive_definite_scale(self, kind):
        # smooth transforms shrink psi**2 well below one, so mean psi**4 - 1 can be negative
        y = simulate_garch(THETA0, ErrorDist.gaussian(), 800, 2003)
        res = mnwm_fit(y, default_config("mnwm", 800, theta_init=THETA0, redescender=kind))
        sc = mnwm_scale(res, y)
        assert np.linalg.eigvalsh(sc.v_hat).min() > 0
        assert not sc.floored

    def test_matches_transformed_moment_oracle(self, gauss800):
        # independent of the package internals: eps from the loop recursion,
        # c by sorting, psi' by central differences
        cfg = default_config("mnwm", 800, theta_init=THETA0, redescender="tukey")
        res = mnwm_fit(gauss800, cfg)
        h, s = loop_scores(res.theta, gauss800)
        eps = gauss800[1:] / np.sqrt(h[1:])
        c = np.sort(np.abs(eps))[::-1][cfg.plan.k2 - 1]
        psi = cfg.redescender.psi(eps, c)
        d = 1e-6
        dpsi = (cfg.redescender.psi(eps + d, c) - cfg.redescender.psi(eps - d, c)) / (2 * d)
        n = len(gauss800)
        g = np.sum(psi * dpsi * eps) / n
        psi2 = psi ** 2
        var_psi2 = np.sum((psi2 - psi2.mean()) ** 2) / n
        sc_ = s[1:] - s[1:].mean(0)
        expect = n * g ** 2 * (sc_.T @ sc_ / n) / var_psi2
        assert np.allclose(mnwm_scale(res, gauss800).v_hat, expect, rtol=1e-5)

    def test_centering_identity_for_mean_zero_scores(self):
        rng = np.random.default_rng(0)
        s = rng.standard_normal((500, 3))
        s -= s.mean(0)
        c = s - s.mean(0)
        assert np.allclose(c.T @ c, s.T @ s)

    def test_ratio_to_qmttl_scale_in_unit_interval(self):
        ratios = []
        for n in (400, 800, 1600):
            y = simulate_garch(THETA0, ErrorDist.gaussian(), n, 900 + n)
            a = mnwm_fit(y, default_config("mnwm", n, theta_init=THETA0))
            b = qmttl_fit(y, default_config("qmttl", n, theta_init=THETA0,
                                            optimizer=OptimizerConfig(restarts=8)))
            ratios.append(mnwm_scale(a, y).v_hat[2, 2] / qmttl_scale(b, y).v_hat[2, 2])
        assert all(0 < r <= 1.0 for r in ratios), ratios

    def test_wrong_estimator_rejected(self, qmttl800, gauss800):
        with pytest.raises(InvalidInputError):
            mnwm_scale(qmttl800, gauss800)


class TestWald:
    def test_self_restriction(self, qmttl800, gauss800):
        sc = qmttl_scale(qmttl800, gauss800)
        w = wald_test(qmttl800, sc, linear_restriction(2, qmttl800.theta[2]))
        assert w.statistic == pytest.approx(0.0, abs=1e-20)
        assert w.p_value == pytest.approx(1.0)
        assert w.df == 1

    @pytest.mark.parametrize("value", [0.5, 0.7, 0.9])
    def test_single_restriction_is_squared_t(self, value, qmttl800, gauss800):
        sc = qmttl_scale(qmttl800, gauss800)
        w = wald_test(qmttl800, sc, linear_restriction(2, value))
        t2 = (qmttl800.theta[2] - value) ** 2 / sc.cov_theta[2, 2]
        assert w.statistic == pytest.approx(t2, rel=1e-10)
        assert w.p_value == pytest.approx(stats.chi2.sf(t2, 1), rel=1e-10)
        assert 0 <= w.p_value <= 1

    def test_joint_restriction(self, qmttl800, gauss800):
        sc = qmttl_scale(qmttl800, gauss800)
        target = np.array([0.05, 0.05, 0.9])
        w = wald_test(qmttl800, sc, lambda th: th - target, lambda th: np.eye(3))
        d = qmttl800.theta - target
        assert w.statistic == pytest.approx(d @ sc.v_hat @ d, rel=1e-8)
        assert w.df == 3

    def test_nonlinear_restriction(self, qmttl800, gauss800):
        # alpha + beta = 0.95 written with its gradient
        sc = qmttl_scale(qmttl800, gauss800)
        w = wald_test(qmttl800, sc, lambda th: np.array([th[1] + th[2] - 0.95]),
                      lambda th: np.array([[0.0, 1.0, 1.0]]))
        D = np.array([0.0, 1.0, 1.0])
        r = qmttl800.theta[1] + qmttl800.theta[2] - 0.95
        assert w.statistic == pytest.approx(r * r / (D @ sc.cov_theta @ D), rel=1e-10)

    def test_rank_deficient_gradient(self, qmttl800, gauss800):
        sc = qmttl_scale(qmttl800, gauss800)
        with pytest.raises(InvalidRestrictionError):
            wald_test(qmttl800, sc, lambda th: th[:2], lambda th: np.array([[0, 0, 1.0], [0, 0, 2.0]]))
        with pytest.raises(InvalidRestrictionError):
            wald_test(qmttl800, sc, lambda th: th[:1], lambda th: np.ones((1, 2)))
        with pytest.raises(InvalidRestrictionError):
            wald_test(qmttl800, sc, lambda th: th[:1])


class TestEigenFloor:
    def test_floor_sets_flag_and_warns(self):
        a = np.diag([1.0, 1.0, 1e-20])
        with pytest.warns(RuntimeWarning):
            inv, floored_m, flag = _sym_inverse(a)
        assert flag
        assert np.all(np.isfinite(inv))
        assert np.linalg.eigvalsh(floored_m).min() == pytest.approx(1e-12 * 2, rel=1e-6)

    def test_no_floor_for_well_conditioned(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            inv, _, flag = _sym_inverse(np.diag([2.0, 3.0, 4.0]))
        assert not flag
        assert np.allclose(inv, np.diag([0.5, 1 / 3, 0.25]))


class TestKs:
    def test_normal_quantiles_accept(self):
        q = stats.norm.ppf((np.arange(1, 1001) - 0.5) / 1000)
        assert ks_normality(q) < 1

    def test_matches_direct_computation(self):
        x = np.random.default_rng(1).standard_normal(500) * 3 + 2
        z = (x - x.mean()) / x.std()
        zs = np.sort(z)
        cdf = stats.norm.cdf(zs)
        i = np.arange(1, 501)
        d = max((i / 500 - cdf).max(), (cdf - (i - 1) / 500).max())
        assert ks_normality(x) == pytest.approx(d * math.sqrt(500) / KS_CRIT_5PCT, rel=1e-12)

    def test_normal_draws_accept_most_of_the_time(self):
        accepted = sum(ks_normality(np.random.default_rng(s).standard_normal(10**4)) < 1
                       for s in range(100))
        # 95% nominal; the binomial 99.9% band at 100 trials is about +-7
        assert accepted >= 86

    def test_pareto_draws_reject(self):
        z = sample_error(ErrorDist.pareto(2.5), 3, 10**4)
        assert ks_normality(z) > 1

    def test_location_scale_invariant(self):
        x = np.random.default_rng(2).standard_normal(200)
        assert ks_normality(5 * x - 7) == pytest.approx(ks_normality(x), rel=1e-12)

    def test_errors(self):
        with pytest.raises(InvalidInputError):
            ks_normality(np.arange(29.0))
        with pytest.raises(InvalidDataError):
            ks_normality(np.ones(50))

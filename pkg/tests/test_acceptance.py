"""Acceptance criteria. A pass/fail line per criterion is printed at the end of the run."""

import math
from math import comb

import numpy as np
import pytest
from scipy import integrate

from gmrk import gp_core
from gmrk.butcher import (check_order_conditions, rk_solve, rk_step, tableau_euler,
                          tableau_second_order, tableau_third_order)
from gmrk.continuation import run_continuation, run_naive, run_smoothing
from gmrk.gmrk_solver import FiniteTau, GMRKConfig, limit_posterior_cov, step
from gmrk.kernels import KernelModel
from gmrk.problems import load
from gmrk.se_baseline import euler_weight_deviation, se_chain
from gmrk.state_space import IntegratorSSM, discretize, filter_smooth

ALPHAS = [0.3, 0.5, 0.7, 1.0]
UV_GRID = [(u, v) for u in (0.4, 0.5, 0.9) for v in (0.6, 2 / 3, 1.0)]
METHODS = [(1, ())] + [(2, (a,)) for a in ALPHAS] + [(3, uv) for uv in UV_GRID]


def _tableau(p, params):
    return {1: tableau_euler, 2: tableau_second_order, 3: tableau_third_order}[p](*params)


@pytest.fixture(scope="module")
def linear():
    return load("linear", 0.0, 10.0)


# 1 ---------------------------------------------------------------------------

@pytest.mark.parametrize("p,params", METHODS)
def test_criterion_1_tableau_fidelity(p, params):
    report = check_order_conditions(_tableau(p, params), p)
    assert all(abs(r) <= 1e-12 for r in report.residuals.values()), report.residuals


# 2 ---------------------------------------------------------------------------

@pytest.mark.parametrize("p,params", METHODS)
def test_criterion_2_rk_match(decay, cosmod, p, params):
    for h in (0.1, 0.5, 1.0):
        cfg = GMRKConfig(p, params, h)
        for prob in (decay, cosmod):
            res = step(cfg, prob, prob.t0, prob.x0)
            x1, _ = rk_step(cfg.tableau, prob, prob.t0, prob.x0, h)
            assert res.x1 == pytest.approx(x1, rel=1e-12)
            np.testing.assert_allclose(res.weights_b, cfg.tableau.b, rtol=1e-12, atol=1e-12)


# 3 ---------------------------------------------------------------------------

def test_criterion_3_tau_convergence(decay):
    h = 1.0
    limit = step(GMRKConfig(2, (0.5,), h), decay, 0.0, 1.0).weights_b
    devs = []
    for lead in (1e1 * h, 1e2 * h, 1e3 * h, 1e4 * h):
        res = step(GMRKConfig(2, (0.5,), h, FiniteTau(-lead)), decay, 0.0, 1.0)
        devs.append(float(np.max(np.abs(res.weights_b - limit))))
    assert all(a > b for a, b in zip(devs, devs[1:])), devs
    assert devs[-1] < 1e-3 * h


# 4 ---------------------------------------------------------------------------

@pytest.mark.parametrize("p,params", [(1, ()), (2, (0.5,)), (3, (0.5, 1.0))])
def test_criterion_4_local_order(decay, p, params):
    hs = np.array([0.2, 0.1, 0.05, 0.025])
    errs = [abs(step(GMRKConfig(p, params, h), decay, 0.0, 1.0).x1 - decay.exact(h)) for h in hs]
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert abs(slope - (p + 1)) <= 0.2, slope


# 5 ---------------------------------------------------------------------------

@pytest.mark.parametrize("p,params", METHODS)
def test_criterion_5_proper_posterior(decay, p, params):
    res = step(GMRKConfig(p, params, 1.0), decay, 0.0, 1.0)
    assert np.isfinite(res.variance_at_end) and res.variance_at_end >= 0
    C = res.posterior.cov_matrix(np.linspace(0.0, 1.0, 5))
    assert np.linalg.eigvalsh(C).min() >= -1e-9 * np.abs(C).max()


@pytest.mark.parametrize("p,params", METHODS)
def test_criterion_5_branch_seams(p, params):
    seams = [0.0] + [ci for ci in _tableau(p, params).c[1:]]
    for k in seams:
        for other in (-0.8, -0.2, 0.1, 0.45, 0.8, 1.3):
            for s, s2 in ((k, other), (other, k)):
                a = limit_posterior_cov(p, params, s, s2)
                b = limit_posterior_cov(p, params, s + 1e-11 if s == k else s,
                                        s2 + 1e-11 if s2 == k else s2)
                assert a == pytest.approx(b, abs=1e-9)


# 6 ---------------------------------------------------------------------------

@pytest.mark.parametrize("p,params", [(1, ()), (2, (0.5,)), (2, (0.3,)), (3, (0.5, 1.0)),
                                      (3, (0.4, 0.6))])
def test_criterion_6_calibration(cosmod, p, params):
    cfg = GMRKConfig(p, params, 0.5)
    res = step(cfg, cosmod, cosmod.t0, cosmod.x0)
    d = 0.05
    coeffs = [(-1) ** (p - k) * comb(p, k) for k in range(p + 1)]
    ts = cosmod.t0 + np.linspace(0.0, cfg.h - p * d, 9)
    fd = np.array([sum(c * res.posterior.mean(t + k * d) for k, c in enumerate(coeffs)) / d**p
                   for t in ts])
    assert np.ptp(fd) <= 1e-8 * np.abs(fd).max()


def test_criterion_6_euler_scale(decay, cosmod):
    for prob in (decay, cosmod):
        res = step(GMRKConfig(1, (), 0.7), prob, prob.t0, prob.x0)
        assert res.sigma2_hat == pytest.approx(res.Y[0] ** 2, rel=1e-12)


# 7 ---------------------------------------------------------------------------

def _fd_pairs(model, t, t2, eps=1e-5):
    kd_fd = (model.k(t, t2 + eps) - model.k(t, t2 - eps)) / (2 * eps)
    dk_fd = (model.k(t + eps, t2) - model.k(t - eps, t2)) / (2 * eps)
    dkd_fd = (model.kd(t + eps, t2) - model.kd(t - eps, t2)) / (2 * eps)
    return [(kd_fd, model.kd(t, t2)), (dk_fd, model.dk(t, t2)), (dkd_fd, model.dkd(t, t2))]


@pytest.mark.parametrize("model", [KernelModel.wiener(1), KernelModel.wiener(2),
                                   KernelModel.wiener(3), KernelModel.square_exponential(1.3, 0.7)],
                         ids=["iwp1", "iwp2", "iwp3", "se"])
def test_criterion_7_kernel_derivatives(model):
    rng = np.random.default_rng(2024)
    checked = 0
    while checked < 100:
        t, t2 = rng.uniform(0.1, 3.0, 2)
        if abs(t - t2) < 1e-3:
            # the Wiener surfaces have a kink on the diagonal
            continue
        for fd, exact in _fd_pairs(model, t, t2):
            assert fd == pytest.approx(exact, rel=1e-5, abs=1e-12)
        checked += 1


@pytest.mark.parametrize("q", [1, 2, 3])
def test_criterion_7_integration_ladder(q):
    rng = np.random.default_rng(q)
    t, t2 = rng.uniform(0.01, 10.0, (2, 200))
    np.testing.assert_allclose(KernelModel.wiener(q).dkd(t, t2), KernelModel.wiener(q - 1).k(t, t2),
                               rtol=1e-12, atol=0)


# 8 ---------------------------------------------------------------------------

@pytest.mark.parametrize("q", [1, 2, 3])
@pytest.mark.parametrize("lead_steps", [10, 100])
def test_criterion_8_filter_equals_batch(q, lead_steps):
    h = 1.0
    lead = lead_steps * h
    rng = np.random.default_rng(7 * q + lead_steps)
    c = np.r_[0.0, [0.5, 1.0][: q - 1]]
    times = np.r_[0.0, h * c, 1.5 * h, 2 * h]
    kinds = [0] + [1] * (q + 2)
    values = np.r_[1.0, rng.normal(size=q + 2)]
    grid = np.linspace(0.0, 2 * h, 11)
    vobs = [(t + lead, v) for t, k, v in zip(times, kinds, values) if k == 0]
    dobs = [(t + lead, v) for t, k, v in zip(times, kinds, values) if k == 1]
    mean, var = filter_smooth(IntegratorSSM(q), vobs, dobs, grid + lead, tau=0.0)
    post = gp_core.Posterior(KernelModel.wiener(q), times + lead, kinds, values, dps=80)
    ref_mean = np.array([post.mean(t + lead) for t in grid])
    ref_var = np.array([post.var(t + lead) for t in grid])
    np.testing.assert_allclose(mean, ref_mean, rtol=1e-8, atol=1e-8 * np.abs(ref_mean).max())
    # variances vanish at observations, so relative to the largest on the grid
    np.testing.assert_allclose(var, ref_var, rtol=0, atol=1e-8 * ref_var.max())


@pytest.mark.parametrize("q", [0, 1, 2, 3])
def test_criterion_8_process_noise(q):
    for h in (0.1, 1.0, 2.5):
        _, Q = discretize(IntegratorSSM(q), h)
        for i in range(q + 1):
            for j in range(q + 1):
                ref, _ = integrate.quad(lambda s: s ** (2 * q - i - j)
                                        / (math.factorial(q - i) * math.factorial(q - j)),
                                        0.0, h, epsabs=0, epsrel=1e-13)
                assert Q[i, j] == pytest.approx(ref, rel=1e-10)


# 9 ---------------------------------------------------------------------------

MIDPOINT = GMRKConfig(2, (0.5,), 1.0)


def test_criterion_9_naive_is_rk_chain(linear):
    tr = run_naive(MIDPOINT, linear)
    _, xs = rk_solve(MIDPOINT.tableau, linear, 1.0)
    np.testing.assert_allclose([tr.global_mean(t) for t in tr.endpoints], xs, rtol=1e-12)


def test_criterion_9_smoothing_through_rk_points(linear):
    tr = run_smoothing(MIDPOINT, linear)
    _, xs = rk_solve(MIDPOINT.tableau, linear, 1.0)
    sigma = math.sqrt(tr.sigma2_hat)
    # value observations: t0 .. t_{N-1}
    for t, x in zip(tr.endpoints[:-1], xs[:-1]):
        assert tr.global_mean(t) == pytest.approx(x, rel=0, abs=1e-10)
        assert tr.global_std(t) < 1e-6 * sigma


def test_criterion_9_continuation_std_grows(linear):
    tr = run_continuation(MIDPOINT, linear)
    assert tr.n_steps == 10
    stds = np.array([tr.global_std(t) for t in tr.endpoints])
    assert np.all(np.diff(stds) >= -1e-12), stds


# 10 --------------------------------------------------------------------------

def test_criterion_10_se_weight_deviation():
    h = 1.0
    assert euler_weight_deviation(h, 2 * h) > 0.05 * h
    assert euler_weight_deviation(h, 100 * h) < 1e-4 * h


def test_criterion_10_gmrk_beats_se(linear):
    h = 1.0
    gmrk_err = abs(run_naive(MIDPOINT, linear).global_mean(linear.tH) - linear.exact(linear.tH))
    for lam in (0.5, 1.0, 2.0, 4.0):
        _, xs = se_chain(linear, h, lam * h)
        se_err = abs(xs[-1] - linear.exact(linear.tH))
        assert gmrk_err < se_err, (lam, gmrk_err, se_err)

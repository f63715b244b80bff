"""Extending GMRK steps over a horizon.

Three policies are offered:

``naive``
    Restart a fresh GMRK step from every step's mean. Means coincide with the
    classic Runge-Kutta chain; there is no joint posterior.
``smoothing``
    Run the naive chain, then condition one joint process on everything it
    produced: the first step's observations plus every later value and
    derivative evaluation.
``continuation``
    Take one GMRK step, then keep adding derivative observations at the
    tableau nodes of each later step, evaluated at the current joint mean,
    without further value observations.

Both joint policies use the first step's limit posterior with unit scale as
their prior, so they agree with a single step when ``N = 1``.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import gp_core
from .butcher import evaluate_rhs, uniform_step_count
from .errors import DomainError, GMRKError, StepError
from .gmrk_solver import LimitPosterior, StepResult, Node, calibrate_sigma2, step

log = logging.getLogger(__name__)

NAIVE = "naive"
SMOOTHING = "smoothing"
CONTINUATION = "continuation"
MODES = (NAIVE, SMOOTHING, CONTINUATION)


@dataclass
class Trajectory:
    """Result of a multi-step run.

    ``global_std`` is ``None`` for the naive chain, which has no joint
    posterior. ``posterior`` is the joint posterior (already scaled by
    ``sigma2_hat``) for the two joint policies.
    """

    mode: str
    steps: list
    global_mean: Callable
    global_std: Optional[Callable]
    t0: float
    h: float
    posterior: object = None
    sigma2_hat: object = None
    truth: Optional[Callable] = field(default=None, repr=False)

    @property
    def n_steps(self):
        return len(self.steps)

    @property
    def endpoints(self):
        return self.t0 + self.h * np.arange(self.n_steps + 1)

    def grid(self, per_step=10):
        """Sample times covering every step with ``per_step`` intervals."""
        n = self.n_steps * per_step
        ts = self.t0 + self.h * self.n_steps * np.arange(n + 1) / n
        ts[::per_step] = self.endpoints
        return ts

    def grid_dump(self, per_step=10):
        """Rows ``(t, mean, std, truth)`` on :meth:`grid`; missing values are nan.

        Vector states yield one row per time with array-valued columns.
        """
        rows = []
        for t in self.grid(per_step):
            mean = self.global_mean(t)
            std = self.global_std(t) if self.global_std is not None else np.full_like(np.asarray(mean), np.nan)
            truth = self.truth(t) if self.truth is not None else np.full_like(np.asarray(mean), np.nan)
            rows.append((float(t),) + tuple(_plain(v) for v in (mean, std, truth)))
        return rows


def _plain(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def _checked_step(cfg, prob, t0, x0, index):
    try:
        return step(cfg, prob, t0, x0)
    except DomainError:
        raise
    except GMRKError as exc:
        raise StepError(str(exc), index) from exc


def _require_limit(cfg, mode):
    if not cfg.is_limit:
        raise DomainError(f"{mode} builds on the limit posterior; use mode='limit'")


def _piecewise(steps, t0, h, query):
    """Evaluate ``query(step_result, t)`` on the step containing ``t``."""
    n = len(steps)

    def f(t):
        t_arr = np.asarray(t, dtype=float)
        idx = np.clip(np.ceil((t_arr - t0) / h - 1e-12).astype(int) - 1, 0, n - 1)
        if t_arr.ndim == 0:
            return query(steps[int(idx)], float(t_arr))
        return np.array([query(steps[int(i)], float(ti)) for i, ti in zip(idx.ravel(), t_arr.ravel())])
    return f


def run_naive(cfg, prob):
    """Chain independent GMRK steps across ``[t0, tH]``."""
    n = uniform_step_count(prob.t0, prob.tH, cfg.h)
    steps = []
    x = prob.x0
    for i in range(n):
        t = prob.t0 + i * cfg.h
        res = _checked_step(cfg, prob, t, x, i)
        steps.append(res)
        x = res.x1
    mean = _piecewise(steps, prob.t0, cfg.h, lambda r, t: r.posterior.mean(t))
    return Trajectory(NAIVE, steps, mean, None, prob.t0, cfg.h, truth=prob.exact)


def _unit_prior(first):
    post = first.posterior
    return LimitPosterior(post.q, post.offsets, post.values, anchor=post.anchor, scale=1.0)


def _first_step_derivatives(first):
    return {first.t0 + first.h * nd.c: nd.y for nd in first.nodes}


def _lookup(seen, t, h):
    for ts, y in seen.items():
        if abs(ts - t) <= 1e-12 * max(h, abs(t)):
            return y
    return None


def _joint(prior, times, kinds, values, sigma2):
    if not times:
        return prior.rebased(sigma2)
    post = gp_core.Posterior(prior, times, kinds, np.array(values), prior_mean=prior.prior_mean)
    return post.rebased(scale=sigma2)


def _trajectory(mode, steps, joint, sigma2, prob, cfg):
    return Trajectory(mode, steps, joint.mean, joint.std, prob.t0, cfg.h,
                      posterior=joint, sigma2_hat=sigma2, truth=prob.exact)


def run_smoothing(cfg, prob):
    """Joint posterior over every observation produced by the naive chain.

    Later value observations are treated as exact, so the marginal variance
    collapses at every step endpoint.
    """
    _require_limit(cfg, SMOOTHING)
    naive = run_naive(cfg, prob)
    steps = naive.steps
    first = steps[0]
    times, kinds, values = [], [], []
    seen = _first_step_derivatives(first)
    for res in steps[1:]:
        times.append(res.t0)
        kinds.append(gp_core.VALUE)
        values.append(res.x0)
        for node in res.nodes:
            tj = res.t0 + cfg.h * node.c
            if _lookup(seen, tj, cfg.h) is not None:
                # a noise-free functional can be observed once; keep the earlier value
                log.debug("smoothing: skipping repeated derivative at t=%g", tj)
                continue
            seen[tj] = node.y
            times.append(tj)
            kinds.append(gp_core.DERIV)
            values.append(node.y)
    sigma2 = first.sigma2_hat
    joint = _joint(_unit_prior(first), times, kinds, values, sigma2)
    return _trajectory(SMOOTHING, steps, joint, sigma2, prob, cfg)


def run_continuation(cfg, prob):
    """One GMRK step followed by derivative observations only.

    The output scale is the running maximum of the per-step calibration
    estimates, each computed from that step's batch of derivatives.
    """
    _require_limit(cfg, CONTINUATION)
    n = uniform_step_count(prob.t0, prob.tH, cfg.h)
    first = _checked_step(cfg, prob, prob.t0, prob.x0, 0)
    prior = _unit_prior(first)
    c = cfg.tableau.c
    steps = [first]
    sigma2 = first.sigma2_hat
    times, kinds, values = [], [], []
    seen = _first_step_derivatives(first)
    joint = prior
    for i in range(1, n):
        t = prob.t0 + i * cfg.h
        x_start = joint.mean(t)
        nodes = []
        try:
            for j, cj in enumerate(c):
                tj = t + cfg.h * cj
                xj = joint.mean(tj)
                yj = _lookup(seen, tj, cfg.h)
                if yj is not None:
                    # node shared with the previous step (c = 1 there): reuse it
                    nodes.append(Node(float(cj), xj, yj))
                    continue
                yj = evaluate_rhs(prob.f, xj, tj, j)
                seen[tj] = yj
                nodes.append(Node(float(cj), xj, yj))
                times.append(tj)
                kinds.append(gp_core.DERIV)
                values.append(yj)
                joint = gp_core.Posterior(prior, times, kinds, np.array(values),
                                          prior_mean=prior.prior_mean)
        except DomainError:
            raise
        except GMRKError as exc:
            raise StepError(str(exc), i) from exc
        batch = calibrate_sigma2(cfg, [nd.y for nd in nodes])
        sigma2 = np.maximum(sigma2, batch)
        log.debug("continuation step %d: batch sigma2 %s, running %s", i, batch, sigma2)
        scaled = joint.rebased(scale=sigma2)
        steps.append(StepResult(t0=t, h=cfg.h, x0=x_start, x1=joint.mean(t + cfg.h), nodes=nodes,
                                weights_b=None, sigma2_hat=batch, posterior=scaled,
                                variance_at_end=scaled.var(t + cfg.h), order=cfg.order,
                                mode=cfg.mode))
    if np.ndim(sigma2) == 0:
        sigma2 = float(sigma2)
    joint = joint.rebased(scale=sigma2) if n > 1 else prior.rebased(sigma2)
    return _trajectory(CONTINUATION, steps, joint, sigma2, prob, cfg)


def run(cfg, prob, mode):
    runners = {NAIVE: run_naive, SMOOTHING: run_smoothing, CONTINUATION: run_continuation}
    if mode not in runners:
        raise DomainError(f"mode must be one of {MODES}, got {mode!r}")
    return runners[mode](cfg, prob)

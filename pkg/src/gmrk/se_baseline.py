"""Square-exponential extrapolation, the baseline the GMRK construction is compared with.

Conditioning an SE process on ``x(t0) = x0`` and ``x'(t0) = y1`` gives the
mean ``exp(-s^2 / 2 lam^2) (x0 + s y1)`` at ``t0 + s``. The weight on ``y1``
tends to Euler's ``h`` only as ``lam -> inf``, so for any finite length-scale
the step is not a Runge-Kutta method.

The amplitude is set to ``theta^2 = lam^2 y1^2`` so the prior variance of
``x'`` matches the first observed slope.
"""

import numpy as np

from . import gp_core
from .butcher import evaluate_rhs, uniform_step_count
from .errors import DomainError
from .kernels import KernelModel


def se_weights(h, lengthscale):
    """Weights of ``(x0, y1)`` in the SE posterior mean at ``t0 + h``."""
    g = np.exp(-h**2 / (2 * lengthscale**2))
    return np.array([g, g * h])


def euler_weight_deviation(h, lengthscale):
    """``|h exp(-h^2 / 2 lam^2) - h|``: distance of the slope weight from Euler's."""
    return h * (1.0 - np.exp(-h**2 / (2 * lengthscale**2)))


def se_model(lengthscale, y1):
    if not lengthscale > 0:
        raise DomainError(f"lengthscale must be positive, got {lengthscale}")
    theta2 = lengthscale**2 * max(float(y1) ** 2, np.finfo(float).tiny)
    return KernelModel.square_exponential(theta2, lengthscale)


def se_step(prob, t0, x0, h, lengthscale):
    """One SE extrapolation step; returns ``(x1, posterior)``."""
    y1 = evaluate_rhs(prob.f, x0, t0, 0)
    post = gp_core.Posterior(se_model(lengthscale, y1), [t0, t0], [gp_core.VALUE, gp_core.DERIV],
                             [x0, y1])
    return post.mean(t0 + h), post


def se_chain(prob, h, lengthscale, n_steps=None):
    """Restart the SE step from each endpoint; returns ``(ts, xs)``."""
    n = n_steps if n_steps is not None else uniform_step_count(prob.t0, prob.tH, h)
    ts, xs = [prob.t0], [float(prob.x0)]
    for i in range(n):
        x1, _ = se_step(prob, ts[-1], xs[-1], h, lengthscale)
        ts.append(prob.t0 + (i + 1) * h)
        xs.append(float(x1))
    return np.array(ts), np.array(xs)


def se_continuation(prob, h, lengthscale, n_steps=None):
    """Joint SE posterior: ``x0`` plus a slope at every step start.

    Each slope is evaluated at the current joint mean, mirroring the GMRK
    continuation policy with Euler's single node.
    """
    n = n_steps if n_steps is not None else uniform_step_count(prob.t0, prob.tH, h)
    y1 = evaluate_rhs(prob.f, prob.x0, prob.t0, 0)
    model = se_model(lengthscale, y1)
    times, kinds, values = [prob.t0, prob.t0], [gp_core.VALUE, gp_core.DERIV], [prob.x0, y1]
    post = gp_core.Posterior(model, times, kinds, values)
    for i in range(1, n):
        t = prob.t0 + i * h
        y = evaluate_rhs(prob.f, post.mean(t), t, 0)
        times.append(t)
        kinds.append(gp_core.DERIV)
        values.append(y)
        post = gp_core.Posterior(model, times, kinds, values)
    return post

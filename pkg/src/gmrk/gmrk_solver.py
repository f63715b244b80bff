"""Gauss-Markov-Runge-Kutta steps.

A GMRK step of order ``p`` regresses on ``x0`` and ``p`` derivative
evaluations with a ``p``-times integrated Wiener prior. Evaluation nodes are
the running posterior mean, except the third node of the third-order method,
which is shifted by ``-h eps(v) (y2 - y1)`` so it lands on the Runge-Kutta
node. With the process origin pushed to ``-inf`` (``mode="limit"``) the
posterior mean at ``t0 + h`` equals the Runge-Kutta estimate exactly; with a
finite origin (:class:`FiniteTau`) the same construction is carried out by
numeric GP regression and converges to the limit as the origin recedes.

In the limit, the prior is equivalent to a flat prior on a degree-``p``
polynomial plus a ``p``-times integrated Wiener process pinned to zero state
at ``t0``. The first step's ``p + 1`` observations identify the polynomial,
so the limit posterior (:class:`LimitPosterior`) is available in closed form
for every derivative order, which is what later continuation steps build on.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import gp_core
from .butcher import evaluate_rhs, tableau_for
from .errors import BranchError, DomainError
from .kernels import IWP_SURFACES, KernelModel

LIMIT = "limit"
AUTO_PRECISION_LEAD = 200.0


@dataclass(frozen=True)
class FiniteTau:
    """Finite process origin ``tau``; kernel inputs are ``t - tau``.

    ``dps`` sets the number of ``mpmath`` digits used for the Gram algebra.
    Left as ``None``, float64 is used while ``(t0 - tau) / h <= 200``.
    Beyond that the Gram entries grow like ``(t0 - tau)^(2q+1)`` while the
    information sits in their differences, so the digit count is chosen
    as ``30 + (4q + 4) log10((t0 - tau) / h)``.
    """

    tau: float
    dps: Optional[int] = None

    def precision(self, lead, h, q):
        if self.dps is not None:
            return self.dps
        if lead / h <= AUTO_PRECISION_LEAD:
            return None
        return int(30 + (4 * q + 4) * math.log10(lead / h))


@dataclass(frozen=True)
class GMRKConfig:
    order: int
    params: tuple = ()
    h: float = 1.0
    mode: object = LIMIT

    def __post_init__(self):
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if not self.h > 0:
            raise DomainError(f"step size must be positive, got {self.h}")
        if not (self.mode == LIMIT or isinstance(self.mode, FiniteTau)):
            raise DomainError(f"mode must be 'limit' or FiniteTau, got {self.mode!r}")
        tableau_for(self.order, self.params)

    @property
    def tableau(self):
        return tableau_for(self.order, self.params)

    @property
    def q(self):
        return self.order

    @property
    def is_limit(self):
        return self.mode == LIMIT


@dataclass(frozen=True)
class Node:
    c: float
    x: object
    y: object


@dataclass
class StepResult:
    t0: float
    h: float
    x0: object
    x1: object
    nodes: list
    weights_b: Optional[np.ndarray]
    sigma2_hat: object
    posterior: object
    variance_at_end: object
    order: int
    mode: object = LIMIT

    @property
    def Y(self):
        return [n.y for n in self.nodes]

    @property
    def t1(self):
        return self.t0 + self.h


# closed-form limit means -------------------------------------------------

def limit_weights(p, params, n_obs, s, h=1.0):
    """Coefficients of the limit posterior mean at offset ``s`` over ``(x0, y1, ...)``.

    ``n_obs`` counts the value observation plus the derivative observations
    collected so far (1 .. p + 1).
    """
    if not 1 <= n_obs <= p + 1:
        raise DomainError(f"order {p} has between 1 and {p + 1} observations, got {n_obs}")
    if n_obs == 1:
        return [1.0]
    if n_obs == 2:
        return [1.0, s]
    if p == 2:
        (alpha,) = params
        ha = h * alpha
        return [1.0, s - s**2 / (2 * ha), s**2 / (2 * ha)]
    u, v = params
    if n_obs == 3:
        hu = h * u
        return [1.0, s - s**2 / (2 * hu), s**2 / (2 * hu)]
    return [
        1.0,
        s - (h * (s**2 * u / 2 + s**2 * v / 2) - s**3 / 3) / (h**2 * u * v),
        s**2 * (2 * s - 3 * h * v) / (6 * h**2 * u * (u - v)),
        -s**2 * (2 * s - 3 * h * u) / (6 * h**2 * v * (u - v)),
    ]


def limit_posterior_mean(p, params, x0, Y, s, h=1.0):
    """Limit posterior mean at ``t0 + s`` after observing ``x0`` and ``Y``."""
    w = limit_weights(p, params, 1 + len(Y), s, h)
    obs = [np.asarray(x0, dtype=float)] + [np.asarray(y, dtype=float) for y in Y]
    out = sum(wi * oi for wi, oi in zip(w, obs))
    return float(out) if np.ndim(out) == 0 else out


# closed-form limit covariances --------------------------------------------

def _sorted_pair(s, s2):
    if not (math.isfinite(s) and math.isfinite(s2)):
        raise BranchError(f"no covariance branch for non-finite offsets ({s}, {s2})")
    return (s, s2) if s >= s2 else (s2, s)


def limit_branch(p, params, s, s2, h=1.0):
    """Label of the piecewise region containing ``(s, s2)``.

    Knots are ``0`` and the scaled node positions; a point on a knot belongs
    to the region on its left.
    """
    a, b = _sorted_pair(s, s2)
    knots = [0.0] + sorted(h * c for c in _node_fractions(p, params)[1:])
    names = ["0"] + {1: [], 2: ["ha"], 3: ["hu", "hv"]}[p]

    def region(x):
        for i in range(len(knots) - 1, -1, -1):
            if x > knots[i]:
                return f">{names[i]}"
        return "<=0"

    return f"s:{region(a)},s':{region(b)}"


def _node_fractions(p, params):
    return tableau_for(p, params).c


def limit_posterior_cov(p, params, s, s2, h=1.0):
    """Unit-scale limit posterior covariance after the full step.

    ``p = 1`` and ``p = 2`` use explicit piecewise polynomials in
    ``(s, s')`` with ``s' <= s``. ``p = 3`` evaluates the same limit through
    the anchored flat-prior construction of :class:`LimitPosterior`.
    """
    a, b = _sorted_pair(float(s), float(s2))
    if p == 1:
        if b > 0:
            return b**2 * (3 * a - b) / 6
        if a > 0:
            return 0.0
        return a**2 * (a - 3 * b) / 6
    if p == 2:
        return _wp2_limit_cov(a, b, h * params[0])
    if p == 3:
        limit_branch(p, params, a, b, h)
        post = LimitPosterior(3, h * _node_fractions(p, params), np.zeros(4))
        return float(post.cov(a, b))
    raise DomainError(f"order must be 1, 2 or 3, got {p}")


def _wp2_limit_cov(s, sp, ha):
    # requires sp <= s
    if sp > ha:
        return ((sp**3 / 12 - ha * sp**2 / 6 + ha**2 * sp / 12 - ha**3 / 48) * s**2
                + (ha**2 * sp**2 / 12 - sp**4 / 24) * s
                + sp**5 / 120 - ha**3 * sp**2 / 48)
    if s > ha and sp > 0:
        return (sp**2 * (20 * ha**3 * s - 10 * ha * s * (ha * s + sp**2) + 2 * ha * sp**3
                         + 5 * (s**2 * sp**2 - ha**4)) / (240 * ha))
    if s > ha:
        return -ha * sp**2 * (ha**2 - 4 * ha * s + 2 * s**2) / 48
    if sp > 0:
        return (sp**2 * (20 * ha * s**2 * (ha - s) - 10 * ha * s * sp**2 + 2 * ha * sp**3
                         + 5 * s**2 * (s**2 + sp**2)) / (240 * ha))
    if s > 0:
        return s**2 * sp**2 * (s - 2 * ha) ** 2 / (48 * ha)
    if s <= 0:
        return -s**2 * (s**3 - 5 * s**2 * sp + 10 * s * sp**2 - 10 * ha * sp**2) / 120
    raise BranchError(f"no p=2 covariance branch for ({s}, {sp})")


# anchored limit posterior ---------------------------------------------------

def _residual_cov(q, s, d1, s2, d2):
    """Covariance of the integrated Wiener residual pinned to zero state at 0.

    Forward of the anchor it is the ``q``-times integrated Wiener process;
    backward it is its mirror image; the two sides are independent.
    """
    s, s2 = np.broadcast_arrays(np.asarray(s, dtype=float), np.asarray(s2, dtype=float))
    surf = IWP_SURFACES[(d1, d2)]
    fwd = surf(q, np.maximum(s, 0.0), np.maximum(s2, 0.0))
    bwd = (-1) ** (d1 + d2) * surf(q, np.maximum(-s, 0.0), np.maximum(-s2, 0.0))
    return np.where((s >= 0) & (s2 >= 0), fwd, np.where((s <= 0) & (s2 <= 0), bwd, 0.0))


def _basis(q, s, d):
    """Derivative ``d`` of the monomials ``s^j / j!``, ``j = 0..q``; shape (..., q+1)."""
    s = np.asarray(s, dtype=float)
    cols = [s ** (j - d) / math.factorial(j - d) if j >= d else np.zeros_like(s)
            for j in range(q + 1)]
    return np.stack(np.broadcast_arrays(*cols), axis=-1)


class LimitPosterior:
    """Limit (``tau -> inf``) posterior after one value and ``q`` derivative observations.

    Parameters
    ----------
    q : int
        Integration count of the Wiener prior.
    deriv_offsets : sequence of float
        Offsets ``h c_i`` of the derivative observations from the anchor.
    values : array (q+1,) or (q+1, N)
        ``[x0, y1, ..., yq]``.
    anchor : float
        Absolute time of the value observation.
    scale : float or array(N)
        Output scale multiplying every covariance.
    """

    def __init__(self, q, deriv_offsets, values, anchor=0.0, scale=1.0):
        self.q = q
        self.offsets = np.asarray(deriv_offsets, dtype=float)
        if len(self.offsets) != q:
            raise DomainError(f"q={q} needs exactly {q} derivative observations")
        self.values = np.asarray(values, dtype=float)
        self.anchor = anchor
        self.scale = scale
        self.obs = [(0.0, 0)] + [(float(o), 1) for o in self.offsets]
        # the value row is e_0 and derivative rows vanish in column 0, so the
        # design matrix is block diagonal; solving the blocks separately keeps
        # the anchor exact
        H = np.array([_basis(q, t, d) for t, d in self.obs])
        self._H11 = H[1:, 1:]
        self._Czz = np.array([[_residual_cov(q, a, da, b, db) for b, db in self.obs]
                              for a, da in self.obs], dtype=float)
        self._coef = np.concatenate([self.values[:1], np.linalg.solve(self._H11, self.values[1:])])

    def rebased(self, scale):
        new = object.__new__(LimitPosterior)
        new.__dict__.update(self.__dict__)
        new.scale = scale
        return new

    def component(self, j):
        if self.values.ndim == 1:
            return self
        scale = np.asarray(self.scale)
        return LimitPosterior(self.q, self.offsets, self.values[:, j], self.anchor,
                              float(scale[j]) if scale.ndim else self.scale)

    @property
    def dim(self):
        return 1 if self.values.ndim == 1 else self.values.shape[1]

    def weights(self, t, d=0):
        """Coefficients of ``x^(d)(t)``'s posterior mean over ``[x0, y1, ..., yq]``."""
        phi = _basis(self.q, np.asarray(t, dtype=float) - self.anchor, d).reshape(-1, self.q + 1)
        tail = np.linalg.solve(self._H11.T, phi[:, 1:].T).T
        return np.concatenate([phi[:, :1], tail], axis=1).reshape(np.shape(t) + (self.q + 1,))

    def polynomial(self):
        """Coefficients ``a_j`` of the mean ``sum_j a_j (t - anchor)^j / j!``."""
        return self._coef

    def mean(self, t, d=0):
        phi = _basis(self.q, np.asarray(t, dtype=float) - self.anchor, d)
        out = phi @ self._coef
        return float(out) if np.ndim(out) == 0 else out

    def prior_mean(self, t, d=0):
        return self.mean(t, d)

    def _cov_unit(self, t, t2, d1, d2):
        s, s2 = np.broadcast_arrays(np.asarray(t, dtype=float) - self.anchor,
                                    np.asarray(t2, dtype=float) - self.anchor)
        w1 = self.weights(s + self.anchor, d1).reshape(-1, self.q + 1)
        w2 = self.weights(s2 + self.anchor, d2).reshape(-1, self.q + 1)
        c12 = _residual_cov(self.q, s, d1, s2, d2).ravel()
        c1z = np.stack([_residual_cov(self.q, s, d1, b, db).ravel() for b, db in self.obs], axis=-1)
        cz2 = np.stack([_residual_cov(self.q, a, da, s2, d2).ravel() for a, da in self.obs], axis=-1)
        out = (c12 - np.sum(w1 * cz2, axis=1) - np.sum(c1z * w2, axis=1)
               + np.einsum("ni,ij,nj->n", w1, self._Czz, w2))
        return out.reshape(s.shape)

    def cov(self, t, t2, d1=0, d2=0):
        out = self._cov_unit(t, t2, d1, d2)
        out = np.multiply.outer(out, self.scale) if np.ndim(self.scale) else out * self.scale
        return float(out) if np.ndim(out) == 0 else out

    def var(self, t, d=0):
        return self.cov(t, t, d, d)

    def std(self, t):
        return np.sqrt(np.maximum(self.var(t), 0.0))

    def cov_matrix(self, ts, d=0):
        ts = np.asarray(ts, dtype=float)
        A, B = np.meshgrid(ts, ts, indexing="ij")
        return self.cov(A, B, d, d)

    # covariance surfaces, so a LimitPosterior can serve as a gp_core prior

    def k(self, t, t2):
        return self.cov(t, t2, 0, 0)

    def kd(self, t, t2):
        return self.cov(t, t2, 0, 1)

    def dk(self, t, t2):
        return self.cov(t, t2, 1, 0)

    def dkd(self, t, t2):
        return self.cov(t, t2, 1, 1)


# node policy and calibration --------------------------------------------

def correction_epsilon(u, v):
    """Offset factor ``eps(v) = v (3v - 2) / (2 (3u - 2))`` for the third node."""
    if abs(3.0 * u - 2.0) < 1e-14:
        raise DomainError("u = 2/3 makes the denominator 3u - 2 of eps(v) vanish")
    return v * (3.0 * v - 2.0) / (2.0 * (3.0 * u - 2.0))


def third_order_node(cfg, mean_at_node, y1, y2):
    """Third evaluation node: posterior mean at ``t0 + h v`` moved onto the RK node.

    The limit mean after ``(x0, y1, y2)`` weights ``y2`` by
    ``h v^2 / (2u)``, which exceeds the Runge-Kutta weight ``w32`` by
    ``h eps(v)``; subtracting ``h eps(v) (y2 - y1)`` restores the tableau.
    """
    if cfg.order != 3:
        raise DomainError("the corrected node exists only for order 3")
    u, v = cfg.params
    eps = correction_epsilon(u, v)
    return mean_at_node - cfg.h * eps * (np.asarray(y2) - np.asarray(y1))


def calibrate_sigma2(cfg, Y):
    """Squared (constant) ``p``-th derivative of the final limit posterior mean."""
    p, h = cfg.order, cfg.h
    Y = [np.asarray(y, dtype=float) for y in Y]
    if len(Y) != p:
        raise DomainError(f"calibration needs all {p} derivative observations")
    if p == 1:
        d = Y[0]
    elif p == 2:
        (alpha,) = cfg.params
        d = (Y[1] - Y[0]) / (h * alpha)
    else:
        u, v = cfg.params
        d = 2.0 / h**2 * (Y[0] / (u * v) + Y[1] / (u * (u - v)) - Y[2] / (v * (u - v)))
    out = d**2
    return float(out) if np.ndim(out) == 0 else out


# the step -------------------------------------------------------------------

def _finite_posterior(cfg, t0, x0, Y, times):
    mode = cfg.mode
    model = KernelModel.wiener(cfg.q, 1.0, mode.tau)
    shifted = np.asarray(times, dtype=float) - mode.tau
    if np.any(shifted <= 0):
        raise DomainError(f"FiniteTau(tau={mode.tau}) needs observation times after tau")
    values = np.array([np.asarray(x0, dtype=float)] + [np.asarray(y, dtype=float) for y in Y])
    kinds = [gp_core.VALUE] + [gp_core.DERIV] * len(Y)
    dps = mode.precision(t0 - mode.tau, cfg.h, cfg.q)
    post = gp_core.Posterior(model, shifted, kinds, values, dps=dps)
    return post.rebased(origin=mode.tau)


def _running_mean(cfg, t0, x0, Y, t):
    """Posterior mean at ``t`` given ``x0`` and the derivatives collected so far."""
    if cfg.is_limit:
        return limit_posterior_mean(cfg.order, cfg.params, x0, Y, t - t0, cfg.h)
    c = cfg.tableau.c
    times = [t0] + [t0 + cfg.h * c[j] for j in range(len(Y))]
    return _finite_posterior(cfg, t0, x0, Y, times).mean(t)


def step(cfg, prob, t0, x0):
    """One GMRK step from ``(t0, x0)``; returns a :class:`StepResult`."""
    tab = cfg.tableau
    h = cfg.h
    x0 = np.asarray(x0, dtype=float)
    x0 = x0 if x0.ndim else float(x0)
    if not cfg.is_limit and not t0 - cfg.mode.tau > 0:
        raise DomainError(f"FiniteTau needs t0 - tau > 0, got t0={t0}, tau={cfg.mode.tau}")
    nodes, Y = [], []
    for i in range(tab.s):
        ti = t0 + h * tab.c[i]
        xi = _running_mean(cfg, t0, x0, Y, ti)
        if cfg.order == 3 and i == 2:
            xi = third_order_node(cfg, xi, Y[0], Y[1])
        if np.ndim(xi) == 0:
            xi = float(xi)
        yi = evaluate_rhs(prob.f, xi, ti, i)
        nodes.append(Node(float(tab.c[i]), xi, yi))
        Y.append(yi)

    sigma2 = calibrate_sigma2(cfg, Y)
    if cfg.is_limit:
        values = np.array([x0] + Y)
        post = LimitPosterior(cfg.q, h * tab.c, values, anchor=t0, scale=sigma2)
        x1 = limit_posterior_mean(cfg.order, cfg.params, x0, Y, h, h)
        weights_b = np.asarray(limit_weights(cfg.order, cfg.params, cfg.q + 1, h, h)[1:]) / h
    else:
        times = t0 + h * np.concatenate([[0.0], tab.c])
        post = _finite_posterior(cfg, t0, x0, Y, times).rebased(scale=sigma2)
        x1 = post.mean(t0 + h)
        weights_b = np.asarray(post.weights(t0 + h)[1:], dtype=float) / h
    return StepResult(t0=t0, h=h, x0=x0, x1=x1, nodes=nodes, weights_b=weights_b,
                      sigma2_hat=sigma2, posterior=post, variance_at_end=post.var(t0 + h),
                      order=cfg.order, mode=cfg.mode)

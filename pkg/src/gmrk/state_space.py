"""The integrated Wiener process as a linear Gaussian state-space model.

The state ``X = (x, x', ..., x^(q))`` obeys ``dX = F X dt + L dW`` with ``F``
the upper shift matrix and ``L`` the last unit vector. Started from an exact
zero state at the origin ``tau``, the ``x`` marginal has exactly the
``q``-times integrated Wiener covariance, so Kalman filtering and
Rauch-Tung-Striebel smoothing reproduce the batch GP posterior at a cost
linear in the number of time points.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, GMRKError


class FilterDivergence(GMRKError, ArithmeticError):
    """Raised when a filter covariance stops being finite."""


@dataclass(frozen=True)
class IntegratorSSM:
    q: int
    sigma2: float = 1.0

    def __post_init__(self):
        if self.q < 0:
            raise DomainError(f"q must be non-negative, got {self.q}")
        if not self.sigma2 >= 0:
            raise DomainError(f"sigma2 must be non-negative, got {self.sigma2}")

    @property
    def dim(self):
        return self.q + 1

    @property
    def F(self):
        return np.eye(self.dim, k=1)

    @property
    def L(self):
        L = np.zeros(self.dim)
        L[-1] = 1.0
        return L


def discretize(ssm, h):
    """Transition ``A = exp(F h)`` and process noise ``Q`` over a step ``h``.

    Both are finite polynomials in ``h`` because ``F`` is nilpotent::

        A[i, j] = h^(j-i) / (j-i)!                       (j >= i)
        Q[i, j] = sigma2 h^m / (m (q-i)! (q-j)!),  m = 2q + 1 - i - j
    """
    if not h > 0:
        raise DomainError(f"step must be positive, got {h}")
    q, n = ssm.q, ssm.dim
    A = np.zeros((n, n))
    Q = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if j >= i:
                A[i, j] = h ** (j - i) / math.factorial(j - i)
            m = 2 * q + 1 - i - j
            Q[i, j] = ssm.sigma2 * h**m / (m * math.factorial(q - i) * math.factorial(q - j))
    return A, Q


def _events(value_obs, deriv_obs, grid, tau):
    """Sorted unique times with the observations made at each."""
    obs = {}
    for t, x in value_obs:
        obs.setdefault(float(t), []).append((0, float(x)))
    for t, y in deriv_obs:
        obs.setdefault(float(t), []).append((1, float(y)))
    times = sorted(set(obs) | {float(t) for t in grid})
    if times and times[0] < tau:
        raise DomainError(f"all times must be >= tau={tau}, got {times[0]}")
    if tau in obs:
        raise DomainError(f"the state is pinned to zero at tau={tau}; it cannot be observed there")
    return times, obs


def _scales(P):
    d = np.sqrt(np.abs(np.diag(P)))
    d[d == 0] = 1.0
    return d


def _exact_update(m, P, H, z):
    """Condition on noise-free ``H X = z``; Joseph form in Jacobi-scaled coordinates.

    The prior variances grow like powers of ``t - tau`` while the posterior
    ones stay of order one, so working with correlations keeps the
    subtraction relative instead of absolute.
    """
    d = _scales(P)
    Pc = P / np.outer(d, d)
    Hc = H * d
    S = Hc @ Pc @ Hc.T
    K = np.linalg.solve(S, Hc @ Pc).T
    IKH = np.eye(len(m)) - K @ Hc
    Pc = IKH @ Pc @ IKH.T
    return m + d * (K @ (z - H @ m)), Pc * np.outer(d, d)


def _rts_update(mf, Pf, A, mp, Pp, ms_next, Ps_next, ssm, dt):
    """One Rauch-Tung-Striebel step, Joseph form, scaled like ``_exact_update``."""
    d = _scales(Pf)
    e = _scales(Pp)
    Pfc = Pf / np.outer(d, d)
    Ppc = Pp / np.outer(e, e)
    Ac = A * np.outer(1 / e, d)
    # G = Pf A^T Pp^-1, written as d Gc / e
    Gc = np.linalg.lstsq(Ppc, Ac @ Pfc, rcond=None)[0].T
    G = Gc * np.outer(d, 1 / e)
    if dt > 0:
        _, Q = discretize(ssm, dt)
    else:
        Q = np.zeros_like(Pf)
    IGA = np.eye(len(mf)) - Gc @ Ac
    cond = IGA @ Pfc @ IGA.T * np.outer(d, d) + G @ Q @ G.T
    return mf + G @ (ms_next - mp), cond + G @ Ps_next @ G.T


def filter_smooth(ssm, value_obs, deriv_obs, grid, tau=0.0):
    """Smoothed mean and variance of ``x`` on ``grid``.

    Parameters
    ----------
    ssm : IntegratorSSM
    value_obs : iterable of (t, x)
        Exact observations of the state's first component.
    deriv_obs : iterable of (t, y)
        Exact observations of the derivative (component 1).
    grid : array_like
        Query times.
    tau : float
        Origin at which the state is exactly zero.

    Returns
    -------
    mean, var : ndarray
        Smoothed marginals of ``x`` at each grid time, in grid order.
    """
    if ssm.q < 1 and any(True for _ in deriv_obs):
        raise DomainError("derivative observations need q >= 1")
    times, obs = _events(value_obs, deriv_obs, grid, tau)
    n = ssm.dim
    I = np.eye(n)
    m, P = np.zeros(n), np.zeros((n, n))
    t_prev = tau
    pred, filt = [], []
    for t in times:
        if t > t_prev:
            A, Q = discretize(ssm, t - t_prev)
            m, P = A @ m, A @ P @ A.T + Q
        else:
            A = I
        pred.append((A, m, P))
        if t in obs:
            H = np.zeros((len(obs[t]), n))
            z = np.zeros(len(obs[t]))
            for r, (comp, val) in enumerate(obs[t]):
                H[r, comp] = 1.0
                z[r] = val
            m, P = _exact_update(m, P, H, z)
        if not np.all(np.isfinite(P)):
            raise FilterDivergence(f"covariance became non-finite at t={t}")
        filt.append((m, P))
        t_prev = t

    ms, Ps = filt[-1]
    smoothed = [None] * len(times)
    smoothed[-1] = (ms, Ps)
    for k in range(len(times) - 2, -1, -1):
        mf, Pf = filt[k]
        A, mp, Pp = pred[k + 1]
        ms, Ps = _rts_update(mf, Pf, A, mp, Pp, ms, Ps, ssm, times[k + 1] - times[k])
        smoothed[k] = (ms, Ps)

    index = {t: k for k, t in enumerate(times)}
    mean = np.array([smoothed[index[float(t)]][0][0] for t in grid])
    var = np.array([smoothed[index[float(t)]][1][0, 0] for t in grid])
    return mean, var


filter = filter_smooth

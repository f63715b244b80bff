r"""Covariance functions for integrated Wiener processes and the SE kernel.

Each family provides four surfaces needed for regression on values and
derivatives::

    k(t, t2)    cov(x(t), x(t2))
    kd(t, t2)   d k / d t2     = cov(x(t), x'(t2))
    dk(t, t2)   d k / d t      = cov(x'(t), x(t2))
    dkd(t, t2)  d2 k / dt dt2  = cov(x'(t), x'(t2))

Wiener kernels take inputs already shifted by the process origin ``tau``, i.e.
``t = t_abs - tau > 0``. All closed forms are written in terms of
``a = min(t, t2)`` and ``b = max(t, t2)`` so no ``|t - t2|`` differences of
large shifted times are formed. On the diagonal the ``t <= t2`` branch is
used. The functions accept floats, numpy arrays or ``mpmath`` numbers.
"""

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import DomainError

WIENER = "wiener"
SE = "se"


def _is_array(*xs):
    return any(isinstance(x, np.ndarray) for x in xs)


def _select(cond, x, y):
    if _is_array(cond, x, y):
        return np.where(cond, x, y)
    return x if cond else y


def _minmax(t, t2):
    if _is_array(t, t2):
        t, t2 = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(t2, dtype=float))
        return np.minimum(t, t2), np.maximum(t, t2)
    return (t, t2) if t <= t2 else (t2, t)


# Raw integrated-Wiener forms with unit scale. Valid for t, t2 >= 0.

def iwp_k(q, t, t2):
    a, b = _minmax(t, t2)
    if q == 0:
        return a
    if q == 1:
        return a**3 / 3 + (b - a) * a**2 / 2
    if q == 2:
        return a**5 / 20 + (b - a) / 12 * ((a + b) * a**3 - a**4 / 2)
    if q == 3:
        return a**7 / 252 + (b - a) * a**4 / 720 * (5 * b**2 + 2 * a * b + 3 * a**2)
    raise DomainError(f"integrated Wiener kernels are implemented for q in 0..3, got {q}")


def iwp_kd(q, t, t2):
    """Derivative of ``iwp_k`` in the second argument."""
    left = t <= t2
    if q == 0:
        return _select(left, 0 * t, 0 * t + 1)
    if q == 1:
        return _select(left, t**2 / 2, t * t2 - t2**2 / 2)
    if q == 2:
        return _select(left,
                       -t**4 / 24 + t2 * t**3 / 6,
                       t2**2 / 24 * (t2**2 - 4 * t * t2 + 6 * t**2))
    if q == 3:
        return _select(left,
                       t**4 / 720 * (15 * t2**2 - 6 * t * t2 + t**2),
                       t2**3 / 720 * (20 * t**3 - 15 * t**2 * t2 + 6 * t * t2**2 - t2**3))
    raise DomainError(f"integrated Wiener kernels are implemented for q in 0..3, got {q}")


def iwp_dk(q, t, t2):
    return iwp_kd(q, t2, t)


def iwp_dkd(q, t, t2):
    """Mixed second derivative; equals the kernel integrated one time fewer."""
    if q == 0:
        raise DomainError("the Wiener process (q=0) has no derivative observations")
    return iwp_k(q - 1, t, t2)


IWP_SURFACES = {(0, 0): iwp_k, (0, 1): iwp_kd, (1, 0): iwp_dk, (1, 1): iwp_dkd}


@dataclass(frozen=True)
class KernelModel:
    """A covariance family with its hyperparameters.

    Parameters
    ----------
    family : {"wiener", "se"}
    q : int
        Number of integrations of the Wiener process (0..3). Ignored for SE.
    sigma2 : float
        Output scale. For SE this is the amplitude ``theta^2``.
    tau : float
        Process origin of the Wiener family; callers shift inputs by it.
    lengthscale : float
        SE length-scale ``lambda``.
    """

    family: str = WIENER
    q: int = 1
    sigma2: float = 1.0
    tau: float = 0.0
    lengthscale: float = 1.0

    def __post_init__(self):
        if self.family not in (WIENER, SE):
            raise DomainError(f"unknown kernel family {self.family!r}")
        if self.family == WIENER and self.q not in (0, 1, 2, 3):
            raise DomainError(f"q must be in 0..3, got {self.q}")
        if not self.sigma2 > 0:
            raise DomainError(f"sigma2 must be positive, got {self.sigma2}")
        if self.family == SE and not self.lengthscale > 0:
            raise DomainError(f"lengthscale must be positive, got {self.lengthscale}")

    @classmethod
    def wiener(cls, q, sigma2=1.0, tau=0.0):
        return cls(family=WIENER, q=q, sigma2=sigma2, tau=tau)

    @classmethod
    def square_exponential(cls, theta2=1.0, lengthscale=1.0):
        return cls(family=SE, q=0, sigma2=theta2, lengthscale=lengthscale)

    def with_scale(self, sigma2):
        return replace(self, sigma2=sigma2)

    def shift(self, t):
        """Map absolute times to kernel inputs."""
        if self.family == WIENER:
            return t - self.tau
        return t

    def k(self, t, t2):
        return k(self, t, t2)

    def kd(self, t, t2):
        return kd(self, t, t2)

    def dk(self, t, t2):
        return dk(self, t, t2)

    def dkd(self, t, t2):
        return dkd(self, t, t2)


def _check_domain(model, t, t2):
    if model.family != WIENER:
        return
    if _is_array(t, t2):
        ok = bool(np.all(np.asarray(t) > 0) and np.all(np.asarray(t2) > 0))
    else:
        ok = t > 0 and t2 > 0
    if not ok:
        raise DomainError("Wiener kernels need shifted inputs t = t_abs - tau > 0")


def _exp(x):
    if isinstance(x, (int, float, np.floating, np.ndarray)):
        return np.exp(x)
    import mpmath
    return mpmath.exp(x)


def _se_parts(model, t, t2):
    d = t - t2
    lam2 = model.lengthscale**2
    return d, lam2, model.sigma2 * _exp(-d**2 / (2 * lam2))


def k(model, t, t2):
    _check_domain(model, t, t2)
    if model.family == SE:
        return _se_parts(model, t, t2)[2]
    return model.sigma2 * iwp_k(model.q, t, t2)


def kd(model, t, t2):
    _check_domain(model, t, t2)
    if model.family == SE:
        d, lam2, base = _se_parts(model, t, t2)
        return d / lam2 * base
    return model.sigma2 * iwp_kd(model.q, t, t2)


def dk(model, t, t2):
    _check_domain(model, t, t2)
    if model.family == SE:
        d, lam2, base = _se_parts(model, t, t2)
        return -d / lam2 * base
    return model.sigma2 * iwp_dk(model.q, t, t2)


def dkd(model, t, t2):
    _check_domain(model, t, t2)
    if model.family == SE:
        d, lam2, base = _se_parts(model, t, t2)
        return (1 / lam2 - (d / lam2) ** 2) * base
    return model.sigma2 * iwp_dkd(model.q, t, t2)


@dataclass(frozen=True)
class StationaryProfile:
    """A stationary kernel as a function of ``r = (t - t2)^2 / h^2``.

    ``k``, ``dk_dr`` and ``d2k_dr2`` are the profile and its first two
    derivatives in ``r``.
    """

    k: Callable
    dk_dr: Callable
    d2k_dr2: Callable


def se_profile(theta2, lengthscale, h):
    c = h**2 / (2 * lengthscale**2)
    return StationaryProfile(
        k=lambda r: theta2 * np.exp(-c * r),
        dk_dr=lambda r: -c * theta2 * np.exp(-c * r),
        d2k_dr2=lambda r: c**2 * theta2 * np.exp(-c * r),
    )


def stationary_derivatives(profile, h, t, t2):
    """Return ``(k, kd, dkd)`` of a stationary kernel via the chain rule in ``r``.

    With ``r = (t - t2)^2 / h^2``::

        kd  = dk/dr * (-2 (t - t2) / h^2)
        dkd = -4 (t - t2)^2 / h^4 * d2k/dr2 - 2 / h^2 * dk/dr
    """
    d = t - t2
    r = d**2 / h**2
    g1 = profile.dk_dr(r)
    g2 = profile.d2k_dr2(r)
    return profile.k(r), g1 * (-2 * d / h**2), -4 * d**2 / h**4 * g2 - 2 / h**2 * g1

"""Noise-free Gaussian process regression on values and first derivatives.

Observations are linear functionals of the latent function: a value ``x(t)``
(kind 0) or a derivative ``x'(t)`` (kind 1). The prior is any object that
exposes the four covariance surfaces ``k, kd, dk, dkd`` (see
:mod:`gmrk.kernels`), optionally with a prior mean ``m(t, d)``; the zero
mean is the default. Times are in the prior's own input coordinates, so for
Wiener kernels the caller shifts by ``tau`` first.

Gram systems are Jacobi-scaled and factorized with symmetric-indefinite
Bunch-Kaufman pivoting (LAPACK ``sytrf``); the 1-norm condition estimate of
the scaled matrix gates a :class:`~gmrk.errors.ConditioningError`. For
extremely large process offsets the same computation can be carried out in
``mpmath`` arbitrary precision by passing ``dps``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack

from .errors import ConditioningError, DomainError

VALUE = 0
DERIV = 1

MAX_CONDITION = 1e14


def cross(prior, t1, d1, t2, d2):
    """Covariance between ``x^(d1)(t1)`` and ``x^(d2)(t2)`` under ``prior``."""
    if d1 == 0:
        return prior.k(t1, t2) if d2 == 0 else prior.kd(t1, t2)
    return prior.dk(t1, t2) if d2 == 0 else prior.dkd(t1, t2)


@dataclass(frozen=True)
class ObservationSet:
    """One value observation followed by derivative observations.

    Parameters
    ----------
    value_obs : (t0, x0)
    deriv_obs : sequence of (t_i, y_i)
    noise : float
        Observation noise; only 0 is supported.
    """

    value_obs: tuple
    deriv_obs: tuple = ()
    noise: float = 0.0

    def __post_init__(self):
        if self.noise != 0.0:
            raise DomainError("only noise-free observations are supported")
        object.__setattr__(self, "deriv_obs", tuple(tuple(o) for o in self.deriv_obs))

    @property
    def times(self):
        return np.array([self.value_obs[0]] + [t for t, _ in self.deriv_obs], dtype=float)

    @property
    def kinds(self):
        return np.array([VALUE] + [DERIV] * len(self.deriv_obs))

    @property
    def values(self):
        return np.array([self.value_obs[1]] + [y for _, y in self.deriv_obs], dtype=float)

    def with_derivative(self, t, y):
        return ObservationSet(self.value_obs, self.deriv_obs + ((t, y),), self.noise)


class _FloatGram:
    def __init__(self, K):
        n = K.shape[0]
        diag = np.diag(K)
        if not np.all(np.isfinite(K)):
            raise ConditioningError("Gram matrix has non-finite entries", size=n)
        if np.any(diag <= 0):
            raise ConditioningError(
                f"Gram matrix has non-positive diagonal entries {diag[diag <= 0]}", size=n)
        self.d = 1.0 / np.sqrt(diag)
        Ks = self.d[:, None] * K * self.d[None, :]
        Ks = 0.5 * (Ks + Ks.T)
        self.lu, self.ipiv, info = lapack.dsytrf(Ks)
        if info > 0:
            raise ConditioningError(f"Gram matrix is exactly singular (pivot {info})",
                                    condition=np.inf, size=n)
        anorm = np.max(np.sum(np.abs(Ks), axis=0))
        rcond, _ = lapack.dsycon(self.lu, self.ipiv, anorm)
        self.condition = np.inf if rcond == 0 else 1.0 / rcond
        if not self.condition <= MAX_CONDITION:
            raise ConditioningError(
                f"scaled Gram matrix condition estimate {self.condition:.3e} exceeds "
                f"{MAX_CONDITION:.0e} (n={n}); consider a smaller offset or extended precision",
                condition=self.condition, size=n)

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        x, info = lapack.dsytrs(self.lu, self.ipiv, self.d[:, None] * b.reshape(len(self.d), -1))
        return (self.d[:, None] * x).reshape(b.shape)


class _MpGram:
    def __init__(self, K, dps):
        import mpmath
        self.dps = dps
        with mpmath.workdps(dps):
            try:
                self.inv = mpmath.inverse(K)
            except ZeroDivisionError as exc:
                raise ConditioningError("Gram matrix is singular in extended precision",
                                        size=K.rows) from exc
        self.condition = None

    def solve(self, b):
        import mpmath
        with mpmath.workdps(self.dps):
            return self.inv * mpmath.matrix(b)


def _as_tuple_obs(times, kinds):
    times = np.asarray(times, dtype=float).ravel()
    kinds = np.asarray(kinds, dtype=int).ravel()
    if times.shape != kinds.shape:
        raise DomainError("times and kinds must have equal length")
    if np.any((kinds != VALUE) & (kinds != DERIV)):
        raise DomainError("observation kinds must be 0 (value) or 1 (derivative)")
    return times, kinds


class Posterior:
    """Posterior GP after conditioning on value/derivative functionals.

    Query methods accept scalars or arrays. ``mean`` and ``cov`` take the
    derivative orders of the queried functionals (0 or 1). ``scale``
    multiplies all covariances and ``origin`` is subtracted from query times
    (so a posterior computed on shifted Wiener inputs can be queried on the
    original time axis).
    """

    def __init__(self, prior, times, kinds, values, prior_mean=None, dps=None,
                 scale=1.0, origin=0.0, _gram=None):
        self.prior = prior
        self.times, self.kinds = _as_tuple_obs(times, kinds)
        self.values = np.asarray(values, dtype=float)
        if self.values.shape[0] != len(self.times):
            raise DomainError("one value per observation is required")
        self.prior_mean = prior_mean
        self.dps = dps
        self.scale = scale
        self.origin = origin
        if dps is not None and prior_mean is not None:
            raise DomainError("extended precision supports a zero prior mean only")
        self._gram = _gram if _gram is not None else self._factorize()
        # in extended precision the mean is formed from float weights instead
        self.alpha = None if dps is not None else self._solve_columns(self._centered_values())

    # construction helpers

    def _factorize(self):
        n = len(self.times)
        if self.dps is None:
            K = np.empty((n, n))
            kinds = np.asarray(self.kinds)
            # one vectorized kernel call per pair of observation kinds
            for d1 in (VALUE, DERIV):
                for d2 in (VALUE, DERIV):
                    I, J = np.flatnonzero(kinds == d1), np.flatnonzero(kinds == d2)
                    if len(I) and len(J):
                        A, B = np.meshgrid(self.times[I], self.times[J], indexing="ij")
                        K[np.ix_(I, J)] = cross(self.prior, A, d1, B, d2)
            return _FloatGram(K)
        import mpmath
        with mpmath.workdps(self.dps):
            T = [mpmath.mpf(float(t)) for t in self.times]
            K = mpmath.matrix(n, n)
            for i in range(n):
                for j in range(n):
                    K[i, j] = cross(self.prior, T[i], self.kinds[i], T[j], self.kinds[j])
        return _MpGram(K, self.dps)

    def _centered_values(self):
        Y = self.values
        if self.prior_mean is None:
            return Y
        m = np.array([self.prior_mean(t, d) for t, d in zip(self.times, self.kinds)])
        return Y - (m if Y.ndim == 1 else m.reshape(len(m), -1))

    def _solve_columns(self, Y):
        if Y.ndim == 1:
            return self._solve(Y)
        return np.stack([self._solve(Y[:, j]) for j in range(Y.shape[1])], axis=1)

    def _solve(self, y):
        return self._gram.solve(y)

    @property
    def condition(self):
        return self._gram.condition

    @property
    def n_obs(self):
        return len(self.times)

    @property
    def dim(self):
        return 1 if self.values.ndim == 1 else self.values.shape[1]

    # copies

    def rebased(self, origin=None, scale=None):
        """Copy sharing the factorization with a new ``origin`` and/or ``scale``."""
        new = object.__new__(Posterior)
        new.__dict__.update(self.__dict__)
        if origin is not None:
            new.origin = origin
        if scale is not None:
            new.scale = scale
        return new

    def component(self, j):
        """Scalar posterior of output dimension ``j`` (shares the factorization)."""
        if self.values.ndim == 1:
            if j != 0:
                raise IndexError(j)
            return self
        new = object.__new__(Posterior)
        new.__dict__.update(self.__dict__)
        new.values = self.values[:, j]
        new.alpha = None if self.alpha is None else self.alpha[:, j]
        scale = np.asarray(self.scale)
        new.scale = float(scale[j]) if scale.ndim else self.scale
        return new

    # queries

    def _kvec(self, t, d):
        """Cross-covariances between the query functional and every observation."""
        t = np.asarray(t, dtype=float)
        out = np.empty(t.shape + (self.n_obs,))
        kinds = np.asarray(self.kinds)
        for k in (VALUE, DERIV):
            idx = np.flatnonzero(kinds == k)
            if len(idx):
                out[..., idx] = cross(self.prior, t[..., None], d, self.times[idx], k)
        return out

    def weights(self, t, d=0):
        """Row vector mapping the observations to the posterior mean at ``t``."""
        t = np.asarray(t, dtype=float) - self.origin
        if self.dps is not None:
            return np.array([float(w) for w in self._mp_weights(float(t), d)])
        kt = np.atleast_2d(self._kvec(t, d))
        w = self._gram.solve(kt.T).T
        return w.reshape(np.shape(t) + (self.n_obs,))

    def _mp_weights(self, t, d):
        import mpmath
        with mpmath.workdps(self.dps):
            kt = [cross(self.prior, mpmath.mpf(t), d, mpmath.mpf(float(ti)), ki)
                  for ti, ki in zip(self.times, self.kinds)]
            return self._gram.inv * mpmath.matrix(kt)

    def mean(self, t, d=0):
        t_arr = np.asarray(t, dtype=float)
        if self.dps is not None:
            W = np.array([self.weights(s, d) for s in t_arr.ravel()])
            out = (W @ self.values).reshape(t_arr.shape + self.values.shape[1:])
            return float(out) if out.ndim == 0 else out
        ts = t_arr - self.origin
        kt = self._kvec(ts, d)
        if self.alpha.ndim == 1:
            out = kt @ self.alpha
        else:
            out = np.stack([kt @ self.alpha[:, j] for j in range(self.alpha.shape[1])], axis=-1)
        if self.prior_mean is not None:
            pm = np.array([self.prior_mean(s, d) for s in np.ravel(ts)])
            out = out + pm.reshape(np.shape(out))
        return float(out) if np.ndim(out) == 0 else out

    def cov(self, t, t2, d1=0, d2=0):
        t, t2 = np.broadcast_arrays(np.asarray(t, dtype=float) - self.origin,
                                    np.asarray(t2, dtype=float) - self.origin)
        if self.dps is not None:
            out = np.vectorize(lambda a, b: self._mp_cov(float(a), float(b), d1, d2))(t, t2)
        else:
            k12 = np.broadcast_to(cross(self.prior, t, d1, t2, d2), t.shape)
            k1 = self._kvec(t, d1).reshape(-1, self.n_obs)
            k2 = self._kvec(t2, d2).reshape(-1, self.n_obs)
            v = self._gram.solve(k2.T)
            out = k12 - np.sum(k1 * v.T, axis=1).reshape(t.shape)
        out = np.multiply.outer(out, self.scale) if np.ndim(self.scale) else out * self.scale
        return float(out) if np.ndim(out) == 0 else out

    def _mp_cov(self, t, t2, d1, d2):
        import mpmath
        with mpmath.workdps(self.dps):
            a, b = mpmath.mpf(t), mpmath.mpf(t2)
            k12 = cross(self.prior, a, d1, b, d2)
            k1 = [cross(self.prior, a, d1, mpmath.mpf(float(ti)), ki)
                  for ti, ki in zip(self.times, self.kinds)]
            v = self._mp_weights(t2, d2)
            return float(k12 - sum(x * y for x, y in zip(k1, v)))

    def var(self, t, d=0):
        return self.cov(t, t, d, d)

    def std(self, t):
        return np.sqrt(np.maximum(self.var(t), 0.0))

    def cov_matrix(self, ts, d=0):
        ts = np.asarray(ts, dtype=float)
        A, B = np.meshgrid(ts, ts, indexing="ij")
        return self.cov(A, B, d, d)


def condition(prior, times, kinds, values, prior_mean=None, dps=None):
    """Posterior of ``prior`` given noise-free functionals (general form of ``posterior``)."""
    return Posterior(prior, times, kinds, values, prior_mean=prior_mean, dps=dps)


def posterior(model, obs, prior_mean=None, dps=None):
    """Posterior given an :class:`ObservationSet` (value first, then derivatives)."""
    return Posterior(model, obs.times, obs.kinds, obs.values, prior_mean=prior_mean, dps=dps)


def extrapolation_weights(model, t_query, obs_times, query_is_value=True, dps=None):
    """Weights ``k_{query,T} K^{-1}`` over ``(x0, y1, ..., ys)``.

    ``obs_times[0]`` is the value-observation time, the rest are derivative
    times. The derivative entries divided by ``h`` are the Runge-Kutta-like
    weights of the extrapolation.
    """
    obs_times = np.asarray(obs_times, dtype=float)
    kinds = [VALUE] + [DERIV] * (len(obs_times) - 1)
    post = Posterior(model, obs_times, kinds, np.zeros(len(obs_times)), dps=dps)
    return post.weights(t_query, 0 if query_is_value else 1)


def multivariate_posterior(model, obs_list, N=None, prior_mean=None, dps=None):
    """Independent per-dimension posteriors sharing one Gram factorization.

    ``obs_list`` is either a sequence of :class:`ObservationSet` (one per
    dimension, identical times) or a single set whose values are ``(n, N)``.
    """
    if isinstance(obs_list, ObservationSet):
        obs_list = [obs_list]
    first = obs_list[0]
    for o in obs_list[1:]:
        if not np.array_equal(o.times, first.times):
            raise DomainError("all dimensions must share observation times")
    Y = np.stack([o.values for o in obs_list], axis=1) if len(obs_list) > 1 else first.values
    if Y.ndim == 1:
        Y = Y[:, None]
    if N is not None and Y.shape[1] != N:
        raise DomainError(f"expected {N} dimensions, got {Y.shape[1]}")
    joint = Posterior(model, first.times, first.kinds, Y, prior_mean=prior_mean, dps=dps)
    return [joint.component(j) for j in range(Y.shape[1])]

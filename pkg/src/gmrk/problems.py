"""Built-in test problems with closed-form solutions."""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .butcher import IVProblem
from .errors import DomainError

TRUTH_CHECK_POINTS = 20
TRUTH_CHECK_TOL = 1e-9


@dataclass(frozen=True)
class ProblemSpec:
    """A named family of IVPs.

    ``build(params)`` returns ``(f, truth)`` where ``truth(t, t0, x0)`` solves
    the ODE from ``(t0, x0)``.
    """

    name: str
    defaults: dict
    build: Callable = field(repr=False)
    description: str = ""

    def problem(self, t0=0.0, tH=1.0, **params):
        unknown = set(params) - set(self.defaults)
        if unknown:
            raise DomainError(f"unknown parameter(s) for {self.name}: {sorted(unknown)}")
        p = {**self.defaults, **{k: v for k, v in params.items() if v is not None}}
        f, truth = self.build(p)
        x0 = float(p["x0"])
        return IVProblem(f, t0, x0, tH, exact=lambda t: truth(t, t0, x0), name=self.name)


def _linear(p):
    lam = float(p["lam"])
    return (lambda x, t: lam * x,
            lambda t, t0, x0: x0 * np.exp(lam * (np.asarray(t) - t0)))


def _logistic(p):
    def truth(t, t0, x0):
        if x0 == 0.0:
            return np.zeros_like(np.asarray(t, dtype=float))
        return 1.0 / (1.0 + (1.0 / x0 - 1.0) * np.exp(-(np.asarray(t) - t0)))
    return (lambda x, t: x * (1.0 - x)), truth


def _cosmod(p):
    return (lambda x, t: np.cos(t) * x,
            lambda t, t0, x0: x0 * np.exp(np.sin(np.asarray(t)) - np.sin(t0)))


PROBLEMS = {
    "linear": ProblemSpec("linear", {"lam": -0.5, "x0": 1.0}, _linear, "x' = lam x"),
    "logistic": ProblemSpec("logistic", {"x0": 0.1}, _logistic, "x' = x (1 - x)"),
    "cosmod": ProblemSpec("cosmod", {"x0": 1.0}, _cosmod, "x' = cos(t) x"),
}


def check_truth(prob, t_lo, t_hi, n=TRUTH_CHECK_POINTS, tol=TRUTH_CHECK_TOL, seed=0):
    """Check ``truth' = f(truth, t)`` at ``n`` random times with a 5-point stencil.

    Returns the largest relative residual; raises ``DomainError`` above ``tol``.
    """
    rng = np.random.default_rng(seed)
    d = 1e-3
    worst = 0.0
    x = prob.exact
    for t in rng.uniform(t_lo, t_hi, n):
        # overflow shows up as a nan residual below
        with np.errstate(over="ignore", invalid="ignore"):
            deriv = (x(t - 2 * d) - 8 * x(t - d) + 8 * x(t + d) - x(t + 2 * d)) / (12 * d)
            rhs = prob.f(x(t), t)
            scale = max(abs(float(rhs)), abs(float(x(t))), 1e-300)
            resid = abs(float(deriv - rhs)) / scale
        # max() would silently drop a nan
        worst = resid if not resid <= worst else worst
    if not worst <= tol:
        raise DomainError(f"truth of {prob.name!r} fails its ODE: residual {worst:.3e}")
    return worst


def load(name, t0=0.0, tH=1.0, check=True, **params):
    """Build a built-in problem; the truth is verified against the ODE unless ``check`` is false."""
    if name not in PROBLEMS:
        raise DomainError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}")
    prob = PROBLEMS[name].problem(t0=t0, tH=tH, **params)
    if check:
        check_truth(prob, t0, tH)
    return prob


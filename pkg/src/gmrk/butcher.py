"""Classic explicit Runge-Kutta methods of orders 1 to 3.

Every consistent explicit method with ``s = p <= 3`` stages is covered by one
of three constructors: Euler, the one-parameter family of second-order methods
and the two-parameter family of third-order methods. ``rk_step`` executes one
step of any tableau and also returns the stage derivatives, so that the
probabilistic solvers can be checked node by node against it.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import DomainError, EvaluationError

ORDER_TOL = 1e-12


@dataclass(frozen=True)
class Tableau:
    """Butcher tableau ``(c | W / b)`` of an explicit method.

    Parameters
    ----------
    c : ndarray(s)
        Node fractions, ``c[0] == 0``.
    W : ndarray(s, s)
        Strictly lower-triangular stage weights.
    b : ndarray(s)
        Output weights.
    p : int
        Claimed order.
    name : str
        Human-readable label.
    """

    c: np.ndarray
    W: np.ndarray
    b: np.ndarray
    p: int
    name: str = ""

    def __post_init__(self):
        c = np.array(self.c, dtype=float)
        W = np.array(self.W, dtype=float)
        b = np.array(self.b, dtype=float)
        s = len(b)
        if W.shape != (s, s) or c.shape != (s,):
            raise DomainError(f"inconsistent tableau shapes: c{c.shape}, W{W.shape}, b{b.shape}")
        if np.any(np.triu(W) != 0.0):
            raise DomainError("W must be strictly lower triangular")
        for arr in (c, W, b):
            arr.setflags(write=False)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)

    @property
    def s(self):
        return len(self.b)

    def __str__(self):
        width = 10
        rows = []
        for i in range(self.s):
            cells = [f"{self.W[i, j]:>{width}.6g}" for j in range(i)]
            rows.append(f"{self.c[i]:>{width}.6g} |" + "".join(cells))
        rows.append("-" * (width + 2 + width * self.s))
        rows.append(" " * width + " |" + "".join(f"{bi:>{width}.6g}" for bi in self.b))
        header = f"{self.name} (s={self.s}, p={self.p})" if self.name else f"s={self.s}, p={self.p}"
        return "\n".join([header] + rows)


@dataclass(frozen=True)
class IVProblem:
    """Initial value problem ``x' = f(x, t)``, ``x(t0) = x0`` on ``[t0, tH]``.

    ``f`` takes the state first and the time second. ``x0`` may be a scalar or
    a 1-d array; vector problems are handled elementwise by every solver.
    """

    f: Callable
    t0: float
    x0: object
    tH: float
    exact: Optional[Callable] = None
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if not self.tH > self.t0:
            raise DomainError(f"horizon tH={self.tH} must exceed t0={self.t0}")
        x0 = np.asarray(self.x0, dtype=float)
        if x0.ndim > 1:
            raise DomainError("x0 must be a scalar or a 1-d array")
        object.__setattr__(self, "x0", x0 if x0.ndim else float(x0))
        if self.exact is not None:
            err = np.max(np.abs(np.asarray(self.exact(self.t0)) - x0))
            if err > 1e-14 * max(1.0, float(np.max(np.abs(x0)))):
                raise DomainError(f"exact(t0) differs from x0 by {err:.3e}")

    @property
    def dim(self):
        return int(np.size(self.x0))


def tableau_euler():
    return Tableau(c=[0.0], W=[[0.0]], b=[1.0], p=1, name="Euler")


def tableau_second_order(alpha):
    """Second-order family; ``alpha = 1/2`` is the midpoint rule, ``alpha = 1`` Heun."""
    if not (0.0 < alpha <= 1.0):
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    W = [[0.0, 0.0], [alpha, 0.0]]
    b = [1.0 - 1.0 / (2.0 * alpha), 1.0 / (2.0 * alpha)]
    names = {0.5: "midpoint", 1.0: "Heun"}
    return Tableau(c=[0.0, alpha], W=W, b=b, p=2, name=names.get(alpha, f"RK2(alpha={alpha:g})"))


def tableau_third_order(u, v):
    """Third-order family parameterized by the node fractions ``u`` and ``v``.

    Raises
    ------
    DomainError
        If ``u`` or ``v`` leave ``(0, 1]``, if ``u == 2/3`` (the stage weight
        ``w32`` has denominator ``u(2 - 3u)``) or if ``u == v`` (the output
        weights divide by ``u - v``).
    """
    for name, val in (("u", u), ("v", v)):
        if not (0.0 < val <= 1.0):
            raise DomainError(f"{name} must lie in (0, 1], got {val}")
    if abs(2.0 - 3.0 * u) < 1e-14:
        raise DomainError("u = 2/3 makes the denominator u(2 - 3u) of w32 vanish")
    if abs(u - v) < 1e-14:
        raise DomainError("u = v makes the denominator (u - v) of b2 and b3 vanish")
    w32 = v * (v - u) / (u * (2.0 - 3.0 * u))
    b2 = (2.0 - 3.0 * v) / (6.0 * u * (u - v))
    b3 = (2.0 - 3.0 * u) / (6.0 * v * (v - u))
    W = [[0.0, 0.0, 0.0], [u, 0.0, 0.0], [v - w32, w32, 0.0]]
    b = [1.0 - b2 - b3, b2, b3]
    return Tableau(c=[0.0, u, v], W=W, b=b, p=3, name=f"RK3(u={u:g}, v={v:g})")


def tableau_for(order, params=()):
    """Dispatch to the constructor for ``order`` with positional ``params``."""
    params = tuple(params)
    expected = {1: 0, 2: 1, 3: 2}
    if order not in expected:
        raise DomainError(f"order must be 1, 2 or 3, got {order}")
    if len(params) != expected[order]:
        raise DomainError(f"order {order} takes {expected[order]} parameter(s), got {len(params)}")
    if order == 1:
        return tableau_euler()
    if order == 2:
        return tableau_second_order(*params)
    return tableau_third_order(*params)


def evaluate_rhs(f, x, t, node):
    y = f(x, t)
    arr = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise EvaluationError(f"f returned a non-finite value at node {node} (t={t!r})", node=node, t=t)
    return arr if arr.ndim else float(arr)


def rk_step(tab, prob, t0, x0, h):
    """Advance one step of size ``h`` from ``(t0, x0)``.

    Returns
    -------
    x1 : float or ndarray
        ``x0 + h * sum_i b_i y_i``.
    Y : list
        Stage derivatives ``y_i = f(x0 + h sum_j w_ij y_j, t0 + h c_i)``.
    """
    if not h > 0:
        raise DomainError(f"step size must be positive, got {h}")
    x0 = np.asarray(x0, dtype=float)
    Y = []
    for i in range(tab.s):
        xi = x0 + h * sum((tab.W[i, j] * Y[j] for j in range(i)), np.zeros_like(x0))
        Y.append(evaluate_rhs(prob.f, xi if xi.ndim else float(xi), t0 + h * tab.c[i], i))
    x1 = x0 + h * sum((tab.b[i] * Y[i] for i in range(tab.s)), np.zeros_like(x0))
    return (x1 if x1.ndim else float(x1)), Y


def rk_solve(tab, prob, h, n_steps=None):
    """Chain ``rk_step`` over the horizon of ``prob``.

    Returns the step times and states, both of length ``n_steps + 1``.
    """
    if n_steps is None:
        n_steps = uniform_step_count(prob.t0, prob.tH, h)
    ts = [prob.t0]
    xs = [prob.x0]
    for n in range(n_steps):
        x1, _ = rk_step(tab, prob, ts[-1], xs[-1], h)
        ts.append(prob.t0 + (n + 1) * h)
        xs.append(x1)
    return np.array(ts), np.array(xs)


def uniform_step_count(t0, tH, h):
    """Number of steps of size ``h`` covering ``[t0, tH]``; partial steps are rejected."""
    if not h > 0:
        raise DomainError(f"step size must be positive, got {h}")
    ratio = (tH - t0) / h
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > 1e-9 * max(1.0, ratio):
        raise DomainError(f"(tH - t0)/h = {ratio:.12g} is not a positive integer")
    return n


@dataclass(frozen=True)
class OrderReport:
    order: int
    residuals: dict
    tol: float = ORDER_TOL

    @property
    def passed(self):
        return all(abs(r) <= self.tol for r in self.residuals.values())

    def __bool__(self):
        return self.passed

    def as_dict(self):
        return {"order": self.order, "passed": self.passed, "tol": self.tol,
                "residuals": dict(self.residuals)}


def check_order_conditions(tab, p):
    """Evaluate the classical order conditions up to order ``p`` (1, 2 or 3)."""
    if p not in (1, 2, 3):
        raise DomainError(f"order conditions are implemented for p in 1..3, got {p}")
    b, c, W = tab.b, tab.c, tab.W
    res = {"sum(b) = 1": b.sum() - 1.0}
    if p >= 2:
        res["sum(b c) = 1/2"] = b @ c - 0.5
    if p >= 3:
        res["sum(b c^2) = 1/3"] = b @ c**2 - 1.0 / 3.0
        res["sum(b W c) = 1/6"] = b @ W @ c - 1.0 / 6.0
    return OrderReport(order=p, residuals={k: float(v) for k, v in res.items()})

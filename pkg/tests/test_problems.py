import numpy as np
import pytest

from gmrk.errors import DomainError
from gmrk.problems import PROBLEMS, check_truth, load


@pytest.mark.parametrize("name", sorted(PROBLEMS))
def test_truth_solves_ode(name):
    prob = load(name, 0.0, 3.0)
    assert prob.exact(0.0) == pytest.approx(prob.x0, rel=1e-15)
    assert check_truth(prob, 0.0, 3.0) < 1e-9


def test_defaults_and_overrides():
    prob = load("linear", 1.0, 2.0, lam=-2.0, x0=3.0)
    assert prob.x0 == 3.0 and prob.t0 == 1.0
    assert prob.exact(2.0) == pytest.approx(3.0 * np.exp(-2.0))
    assert load("linear").f(1.0, 0.0) == -0.5


def test_cosmod_from_nonzero_start():
    prob = load("cosmod", 0.7, 2.0, x0=2.0)
    assert prob.exact(0.7) == pytest.approx(2.0)


def test_logistic_fixed_point():
    prob = load("logistic", 0.0, 1.0, x0=0.0)
    assert np.all(prob.exact(np.linspace(0, 1, 5)) == 0.0)


def test_bad_truth_detected():
    prob = load("linear", 0.0, 1.0)
    broken = type(prob)(prob.f, 0.0, 1.0, 1.0, exact=lambda t: np.exp(-0.4 * np.asarray(t)))
    with pytest.raises(DomainError):
        check_truth(broken, 0.0, 1.0)


def test_unknown_problem_and_parameter():
    with pytest.raises(DomainError):
        load("vanderpol")
    with pytest.raises(DomainError):
        load("cosmod", lam=1.0)

"""Gauss-Markov-Runge-Kutta methods: Runge-Kutta steps as Gaussian process regression."""

from .butcher import (IVProblem, Tableau, check_order_conditions, rk_solve, rk_step,
                      tableau_euler, tableau_for, tableau_second_order, tableau_third_order)
from .errors import (BranchError, ConditioningError, DomainError, EvaluationError,
                     GMRKError, StepError)
from .gmrk_solver import LIMIT, FiniteTau, GMRKConfig, StepResult, step
from .kernels import KernelModel

__version__ = "0.1.0"

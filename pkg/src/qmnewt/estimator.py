"""Estimator-style wrapper around :func:`qmnewt.solver.run`."""

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_point
from .exceptions import ConfigError
from .problems import Problem
from .solver import SolverConfig, run

__all__ = ["ModelNewtonMinimizer"]


class ModelNewtonMinimizer(BaseEstimator):
    """Minimize a black-box objective with the model-based Newton iteration.

    Parameters mirror :class:`~qmnewt.solver.SolverConfig`; ``get_params``
    and ``set_params`` behave as for any scikit-learn estimator.

    Attributes
    ----------
    x_ : ndarray
        Best point found.
    fun_ : float
        Objective value at ``x_``.
    n_iter_ : int
    status_ : str
    report_ : RunReport
    """

    def __init__(
        self,
        epsilon=1e-8,
        max_iter=2000,
        model_variant="simplified",
        step_variant="newton_direct",
        safeguard="backtrack",
        init_spread=None,
        seed=0,
        kkt_coupling="full",
        newton="damped",
        refresh="stall",
    ):
        self.epsilon = epsilon
        self.max_iter = max_iter
        self.model_variant = model_variant
        self.step_variant = step_variant
        self.safeguard = safeguard
        self.init_spread = init_spread
        self.seed = seed
        self.kkt_coupling = kkt_coupling
        self.newton = newton
        self.refresh = refresh

    def to_config(self):
        return SolverConfig(**self.get_params())

    def fit(self, fun, x0):
        """Run the solver from ``x0``.

        Parameters
        ----------
        fun : callable or Problem
            Objective ``x -> float``.
        x0 : array_like
            Starting point.

        Returns
        -------
        self
        """
        x0 = check_point(x0, name="x0")
        if isinstance(fun, Problem):
            problem = fun
        elif callable(fun):
            problem = Problem("callable", x0.shape[0], fun)
        else:
            raise ConfigError("fun must be callable")
        report = run(problem, x0, self.to_config())
        self.report_ = report
        self.x_ = np.asarray(report.x_star)
        self.fun_ = float(report.f_star)
        self.n_iter_ = report.n_iter
        self.status_ = report.status
        return self

"""
The calibrator module contains the differentiable expert calibrator MLA-ROBD
(ML-augmented regularized online balanced descent). At every step it picks

.. math::

    x_t = \\arg\\min_x f(x, y_t) + \\lambda_1 c(x, x_{t-1}) +
          \\lambda_2 c(x, v_t) + \\lambda_3 c(x, \\tilde{x}_t)

where :math:`v_t` minimizes the current hitting cost and
:math:`\\tilde{x}_t` is an ML prediction. The module also provides the
optimal choice of :math:`\\lambda_2` and the implicit Jacobians of the
calibrated action with respect to the prediction and the previous action,
which are needed to train a predictor through the calibrator.
"""

from math import sqrt

import numpy as np
from scipy import linalg

from expert_calibration.core import as_vector
from expert_calibration.core import BoundaryOptimumError
from expert_calibration.core import ConvergenceError
from expert_calibration.core import EpisodeTrace
from expert_calibration.core import NegativeLambda2
from expert_calibration.costmodel import newton_minimize


def optimal_lambda2(m, alpha, beta, lambda1, theta):
    """
    Returns the weight on the hitting cost minimizer that minimizes the
    competitive ratio upper bound of MLA-ROBD for a given trust parameter
    ``theta = lambda3 / lambda1``:

    ``(m lambda1 / 2 beta)(sqrt((1 + beta theta / m)^2 + 4 beta^2 /
    (alpha m)) + 1 - 2 / lambda1 - beta theta / m)``

    :raises NegativeLambda2: when the formula is negative, i.e., lambda1 is
        too small for the given theta.

    >>> round(optimal_lambda2(1.0, 10.0, 10.0, 1.0, 0.0), 5)
    0.27016
    """
    if not (m > 0 and alpha > 0 and beta > 0):
        raise ValueError("m, alpha and beta must be positive.")
    if not 0 < lambda1 <= 1:
        raise ValueError("lambda1 must be in (0, 1], got %r" % lambda1)
    if theta < 0:
        raise ValueError("theta must be non-negative, got %r" % theta)
    bt = beta * theta / m
    value = (m * lambda1 / (2 * beta)) * (
        sqrt((1 + bt) ** 2 + 4 * beta * beta / (alpha * m)) + 1 -
        2 / lambda1 - bt)
    if value < 0:
        raise NegativeLambda2("lambda2 = %r < 0 for lambda1 = %r and theta = "
                              "%r; increase lambda1" % (value, lambda1,
                                                        theta))
    return value


class CalibratorParams(object):
    """
    The weights ``(lambda1, lambda2, lambda3)`` of MLA-ROBD.

    :param lambda1: weight of the switching cost to the previous action, in
        (0, 1]
    :param lambda2: weight of the pull towards the hitting cost minimizer
    :param lambda3: weight of the pull towards the ML prediction

    >>> CalibratorParams(1.0, 0.2, 0.5).theta
    0.5
    """

    def __init__(self, lambda1=1.0, lambda2=0.0, lambda3=0.0):
        if not 0 < lambda1 <= 1:
            raise ValueError("lambda1 must be in (0, 1], got %r" % lambda1)
        if lambda2 < 0 or lambda3 < 0:
            raise ValueError("lambda2 and lambda3 must be non-negative.")
        self.lambda1 = float(lambda1)
        self.lambda2 = float(lambda2)
        self.lambda3 = float(lambda3)

    @property
    def theta(self):
        """
        The trust parameter ``lambda3 / lambda1``.
        """
        return self.lambda3 / self.lambda1

    @property
    def total(self):
        return self.lambda1 + self.lambda2 + self.lambda3

    @classmethod
    def from_theta(cls, model, theta, lambda1=1.0):
        """
        Builds MLA-ROBD weights for a trust parameter with lambda2 set to its
        optimal value.
        """
        lambda2 = optimal_lambda2(model.m, model.alpha, model.beta, lambda1,
                                  theta)
        return cls(lambda1, lambda2, theta * lambda1)

    @classmethod
    def robd(cls, model, lambda1=1.0):
        """
        R-OBD: predictions are ignored and lambda2 is optimal for theta = 0.
        """
        return cls.from_theta(model, 0.0, lambda1)

    @classmethod
    def greedy(cls):
        """
        The greedy algorithm that minimizes the current hitting plus switching
        cost.
        """
        return cls(1.0, 0.0, 0.0)

    @classmethod
    def follow_the_prediction(cls):
        return cls(1.0, 0.0, 1.0)

    def to_dict(self):
        return {'lambda1': self.lambda1, 'lambda2': self.lambda2,
                'lambda3': self.lambda3}

    def __repr__(self):
        return "CalibratorParams(%r, %r, %r)" % (self.lambda1, self.lambda2,
                                                 self.lambda3)


class ActionBounds(object):
    """
    An optional per-coordinate box ``lo <= x <= hi`` for the action set.
    """

    def __init__(self, lo, hi):
        self.lo = as_vector(lo, name='lo')
        self.hi = as_vector(hi, dim=self.lo.shape[0], name='hi')
        if np.any(self.lo > self.hi):
            raise ValueError("Action bounds need lo <= hi in every "
                             "coordinate.")

    def project(self, x):
        return np.clip(x, self.lo, self.hi)

    def is_interior(self, x, tol=1e-9):
        return bool(np.all(x > self.lo + tol) and np.all(x < self.hi - tol))

    @property
    def diameter(self):
        return float(np.linalg.norm(self.hi - self.lo))


def hitting_minimizer(model, y):
    """
    Returns ``v = argmin_x f(x, y)``. For quadratic tracking this is ``y``
    itself; for custom costs it is found with Newton's method.

    >>> from expert_calibration.costmodel import CostModel
    >>> hitting_minimizer(CostModel.quadratic(), [3.0])
    array([3.])
    """
    y = as_vector(y, name='y')
    return model.hitting.minimizer(y, model.dim)


def _anchor(params, x_prev, v, x_tilde):
    """
    Returns ``lambda1 x_prev + lambda2 v + lambda3 x_tilde``.
    """
    anchor = params.lambda1 * x_prev
    if params.lambda2 > 0:
        anchor = anchor + params.lambda2 * v
    if params.lambda3 > 0:
        anchor = anchor + params.lambda3 * x_tilde
    return anchor


def _projected_solve(value, gradient, hessian, x, bounds, tol, max_iter):
    """
    Projected gradient descent with steps ``1 / lambda_max(H)`` and a
    backtracking safeguard. Converged when the projected gradient step is
    below ``tol``.
    """
    x = bounds.project(x)
    for _ in range(max_iter):
        g = gradient(x)
        residual = np.linalg.norm(x - bounds.project(x - g))
        if residual <= tol:
            return x
        step = 1.0 / float(np.linalg.eigvalsh(hessian(x))[-1])
        fx = value(x)
        while True:
            x_new = bounds.project(x - step * g)
            diff = x_new - x
            if (value(x_new) <= fx + float(g @ diff) +
                    float(diff @ diff) / (2 * step) + 1e-15 or step < 1e-14):
                break
            step *= 0.5
        x = x_new
    raise ConvergenceError("projected solver did not converge in %i "
                           "iterations" % max_iter)


def calibrate_step(model, params, y, x_prev, x_tilde=None, bounds=None,
                   v=None):
    """
    Calibrates one ML prediction, returning

    ``argmin_x f(x, y) + lambda1 c(x, x_prev) + lambda2 c(x, v) +
    lambda3 c(x, x_tilde)``.

    For quadratic tracking the minimizer is the solution of the linear system
    ``(I + 2 (lambda1 + lambda2 + lambda3) Q) x = y + 2 Q (lambda1 x_prev +
    lambda2 v + lambda3 x_tilde)``. Custom hitting costs are minimized with a
    damped Newton method. When ``bounds`` are given the minimization is
    restricted to the box with a projected gradient method.

    :param x_tilde: the ML prediction, may be None when lambda3 is 0
    :param v: the hitting cost minimizer, computed when not supplied
    :return: the calibrated action
    :rtype: numpy array

    >>> from expert_calibration.costmodel import CostModel
    >>> x = calibrate_step(CostModel.quadratic(5.0),
    ...                    CalibratorParams(1.0, 0.0, 1.0),
    ...                    [1.0], [0.0], [1.0])
    >>> round(float(x[0]), 5)
    0.52381
    """
    d = model.dim
    y = as_vector(y, name='y')
    x_prev = as_vector(x_prev, dim=d, name='x_prev')
    if params.lambda3 > 0:
        if x_tilde is None:
            raise ValueError("A prediction is required when lambda3 > 0.")
        x_tilde = as_vector(x_tilde, dim=d, name='x_tilde')
    if v is None:
        v = hitting_minimizer(model, y)
    Q = model.Q
    anchor = _anchor(params, x_prev, v, x_tilde)
    weight = 2.0 * params.total

    def value(x):
        u = x - anchor / params.total
        return model.hitting.value(x, y) + params.total * float(u @ Q @ u)

    def gradient(x):
        return (model.hitting.gradient(x, y) +
                weight * Q @ x - 2.0 * Q @ anchor)

    def hessian(x):
        return model.hitting.hessian(x, y) + weight * Q

    if bounds is not None:
        return _projected_solve(value, gradient, hessian, np.array(v), bounds,
                                tol=1e-10, max_iter=100000)
    if model.hitting.kind == 'quadratic_tracking':
        A = np.eye(d) + weight * Q
        return linalg.solve(A, y + 2.0 * Q @ anchor, assume_a='pos')
    return newton_minimize(value, gradient, hessian, np.array(v), tol=1e-10,
                           max_iter=100)


def step_gradient(model, params, y, x_prev, x_tilde, x, v=None):
    """
    Returns the gradient of the per-step calibration objective at ``x``. It
    vanishes at an unconstrained optimum.
    """
    if v is None:
        v = hitting_minimizer(model, y)
    anchor = _anchor(params, np.asarray(x_prev, dtype=np.float64), v,
                     None if x_tilde is None else
                     np.asarray(x_tilde, dtype=np.float64))
    return (model.hitting.gradient(x, y) +
            2.0 * params.total * model.Q @ np.asarray(x) -
            2.0 * model.Q @ anchor)


def step_jacobians(model, params, y, x_prev, x_tilde, x):
    """
    Returns the implicit Jacobians of the calibrated action,
    ``J_pred = dx_t / dx_tilde_t = 2 lambda3 Z^-1 Q`` and
    ``J_prev = dx_t / dx_{t-1} = 2 lambda1 Z^-1 Q`` with
    ``Z = hess f(x_t, y_t) + 2 (lambda1 + lambda2 + lambda3) Q``.

    These follow from differentiating the stationarity condition of the
    calibration problem and are only valid at an unconstrained optimum.

    :return: ``(J_pred, J_prev)``, both d x d
    :raises CalibrationError: if Z is singular

    >>> from expert_calibration.costmodel import CostModel
    >>> J_pred, J_prev = step_jacobians(CostModel.quadratic(5.0),
    ...     CalibratorParams(1.0, 0.0, 1.0), [1.0], [0.0], [1.0], [11 / 21])
    >>> round(float(J_pred[0, 0]), 5), round(float(J_prev[0, 0]), 5)
    (0.47619, 0.47619)
    """
    x = as_vector(x, dim=model.dim, name='x')
    y = as_vector(y, name='y')
    Q = model.Q
    Z = model.hitting.hessian(x, y) + 2.0 * params.total * Q
    try:
        ZinvQ = linalg.solve(Z, Q, assume_a='sym')
    except (linalg.LinAlgError, ValueError) as err:
        raise ConvergenceError("singular calibration Hessian: %s" % err)
    return 2.0 * params.lambda3 * ZinvQ, 2.0 * params.lambda1 * ZinvQ


class MLAROBD(object):
    """
    MLA-ROBD bundled with its cost model, weights, and optional action box.

    :param model: the cost model
    :type model: :class:`CostModel
        <expert_calibration.costmodel.CostModel>`
    :param params: the calibrator weights
    :type params: CalibratorParams
    :param bounds: an optional action box
    :type bounds: ActionBounds or None
    """

    def __init__(self, model, params, bounds=None):
        self.model = model
        self.params = params
        self.bounds = bounds

    def step(self, y, x_prev, x_tilde=None):
        """
        Returns ``(x_t, v_t)`` for one step.
        """
        v = hitting_minimizer(self.model, y)
        x = calibrate_step(self.model, self.params, y, x_prev, x_tilde,
                           bounds=self.bounds, v=v)
        return x, v

    def jacobians(self, y, x_prev, x_tilde, x):
        """
        Returns the implicit Jacobians at a calibrated action, refusing to do
        so when the action lies on the boundary of the action box.
        """
        if self.bounds is not None and not self.bounds.is_interior(x):
            raise BoundaryOptimumError(
                "calibrated action %s lies on the action box boundary; "
                "implicit Jacobians are undefined there" % (x,))
        return step_jacobians(self.model, self.params, y, x_prev, x_tilde, x)

    def run(self, instance, predictor=None, policy='mlarobd',
            reference=None):
        """
        Runs the calibrator over an instance.

        :param predictor: a callable ``predictor(y_t, x_prev) -> x_tilde_t``
            or None when lambda3 is 0
        :return: the episode trace; when no predictor is given, the actions
            are also stored as predictions
        :rtype: :class:`EpisodeTrace <expert_calibration.core.EpisodeTrace>`
        """
        x_prev = instance.x0
        predictions, actions = [], []
        for y in instance.contexts:
            x_tilde = None if predictor is None else predictor(y, x_prev)
            x, _ = self.step(y, x_prev, x_tilde)
            predictions.append(x if x_tilde is None else x_tilde)
            actions.append(x)
            x_prev = x
        hitting, switching = self.model.episode_costs(instance.x0,
                                                      instance.contexts,
                                                      actions)
        return EpisodeTrace(predictions, actions, hitting, switching,
                            reference=reference, policy=policy)

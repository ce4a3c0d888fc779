"""
The bounds module contains the closed form performance guarantees of the
calibrated and uncalibrated optimizers: the lower bound on the competitive
ratio of any standalone ML optimizer with rho-accurate predictions, the upper
bounds on the competitive ratio of MLA-ROBD, the L-constrained regret bound,
and the adversarial predictions that attain the lower bound.
"""

from math import sqrt

import numpy as np
from scipy.optimize import brentq

from expert_calibration.core import as_vector
from expert_calibration.core import ZeroOptimalCost


class BoundInputs(object):
    """
    The constants that enter the competitive ratio bound of MLA-ROBD.

    :param m: the strong convexity constant of the hitting cost
    :param alpha: twice the smallest eigenvalue of Q
    :param beta: twice the largest eigenvalue of Q
    :param lambda1: in (0, 1]
    :param lambda2: >= 0
    :param lambda3: >= 0
    :param rho: the prediction error, >= 0
    """

    def __init__(self, m, alpha, beta, lambda1=1.0, lambda2=0.0,
                 lambda3=0.0, rho=0.0):
        if not (m > 0 and alpha > 0 and beta > 0):
            raise ValueError("m, alpha and beta must be positive.")
        if not 0 < lambda1 <= 1:
            raise ValueError("lambda1 must be in (0, 1], got %r" % lambda1)
        if lambda2 < 0 or lambda3 < 0 or rho < 0:
            raise ValueError("lambda2, lambda3 and rho must be "
                             "non-negative.")
        self.m = float(m)
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.lambda1 = float(lambda1)
        self.lambda2 = float(lambda2)
        self.lambda3 = float(lambda3)
        self.rho = float(rho)

    @property
    def theta(self):
        return self.lambda3 / self.lambda1

    @classmethod
    def from_params(cls, model, params, rho=0.0):
        """
        Collects the constants of a cost model and calibrator weights.
        """
        return cls(model.m, model.alpha, model.beta, params.lambda1,
                   params.lambda2, params.lambda3, rho)


class RegretBoundInputs(object):
    """
    The constants that enter the L-constrained regret bound.

    :param G: an upper bound on ``||Q x||`` over the action set
    :param omega: the diameter of the action set
    :param T: the episode length
    :param L: the switching cost budget of the comparator
    :param L_rho: the squared distance of the predictions to the
        L-constrained oracle
    :param budget_satisfied: whether the calibrated actions themselves
        stayed within the switching budget
    """

    def __init__(self, G, omega, T, L, L_rho, m, alpha, beta, lambda1=1.0,
                 lambda2=0.0, lambda3=0.0, budget_satisfied=True):
        if G < 0 or omega < 0 or L < 0 or L_rho < 0:
            raise ValueError("G, omega, L and L_rho must be non-negative.")
        if T < 1:
            raise ValueError("T must be >= 1.")
        if not (m > 0 and alpha > 0 and beta > 0):
            raise ValueError("m, alpha and beta must be positive.")
        if lambda1 < 1 - m / (4.0 * beta):
            raise ValueError("The regret bound needs lambda1 >= 1 - m / "
                             "(4 beta) = %r, got %r" %
                             (1 - m / (4.0 * beta), lambda1))
        if lambda2 < 0 or lambda3 < 0:
            raise ValueError("lambda2 and lambda3 must be non-negative.")
        self.G = float(G)
        self.omega = float(omega)
        self.T = int(T)
        self.L = float(L)
        self.L_rho = float(L_rho)
        self.m = float(m)
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.lambda1 = float(lambda1)
        self.lambda2 = float(lambda2)
        self.lambda3 = float(lambda3)
        self.budget_satisfied = bool(budget_satisfied)


def cr_lower_pure_ml(m, alpha, rho):
    """
    Returns the lower bound ``1 + (m + 2 alpha) rho / 2`` on the competitive
    ratio of any ML optimizer whose predictions are only rho-accurate.

    >>> cr_lower_pure_ml(1.0, 10.0, 1.0)
    11.5
    """
    if not (m > 0 and alpha > 0) or rho < 0:
        raise ValueError("m and alpha must be positive and rho >= 0.")
    return 1.0 + 0.5 * (m + 2.0 * alpha) * rho


def cr_upper_mla_robd(inputs):
    """
    Returns the competitive ratio upper bound of MLA-ROBD for arbitrary
    weights and rho-accurate predictions:

    ``max((m + lambda2 beta) / (m lambda1), 1 + (beta^2 / alpha) lambda1 /
    ((lambda2 + lambda3) beta + m)) + (lambda3 beta / 2 lambda1) rho``

    :type inputs: BoundInputs
    """
    m, alpha, beta = inputs.m, inputs.alpha, inputs.beta
    first = (m + inputs.lambda2 * beta) / (m * inputs.lambda1)
    second = 1.0 + (beta * beta / alpha) * inputs.lambda1 / (
        (inputs.lambda2 + inputs.lambda3) * beta + m)
    return (max(first, second) +
            inputs.lambda3 * beta / (2.0 * inputs.lambda1) * inputs.rho)


def _consistency_term(m, alpha, beta, theta):
    bt = 1.0 + beta * theta / m
    return 0.5 * (sqrt(bt * bt + 4.0 * beta * beta / (m * alpha)) - bt)


def cr_upper_optimal(m, alpha, beta, theta, rho):
    """
    Returns the competitive ratio upper bound of MLA-ROBD with lambda1 = 1
    and the optimal lambda2 for trust parameter theta:

    ``1 + (sqrt((1 + beta theta / m)^2 + 4 beta^2 / (m alpha)) -
    (1 + beta theta / m)) / 2 + beta theta rho / 2``

    >>> round(cr_upper_optimal(1.0, 10.0, 10.0, 0.0, 0.0), 5)
    3.70156
    """
    if not (m > 0 and alpha > 0 and beta > 0):
        raise ValueError("m, alpha and beta must be positive.")
    if theta < 0 or rho < 0:
        raise ValueError("theta and rho must be non-negative.")
    return (1.0 + _consistency_term(m, alpha, beta, theta) +
            0.5 * beta * theta * rho)


def robd_competitive_ratio(m, alpha, beta):
    """
    The competitive ratio bound of R-OBD, i.e., MLA-ROBD that ignores its
    predictions.
    """
    return cr_upper_optimal(m, alpha, beta, 0.0, 0.0)


def crossing_rho(m, alpha, beta, theta, check=True):
    """
    Returns the prediction error rho* at which the bound for trust parameter
    ``theta > 0`` meets the R-OBD bound. Below rho* trusting the predictions
    gives the better guarantee, above it R-OBD does.

    The closed form ``2 (g(0) - g(theta)) / (beta theta)`` is cross checked
    with Brent's method when ``check`` is set.
    """
    if not theta > 0:
        raise ValueError("theta must be > 0, got %r" % theta)
    gap = (_consistency_term(m, alpha, beta, 0.0) -
           _consistency_term(m, alpha, beta, theta))
    rho_star = 2.0 * gap / (beta * theta)
    if check:
        robd = robd_competitive_ratio(m, alpha, beta)

        def difference(rho):
            return cr_upper_optimal(m, alpha, beta, theta, rho) - robd

        hi = max(1.0, 2.0 * rho_star)
        root = brentq(difference, 0.0, hi, xtol=1e-14)
        if abs(root - rho_star) > 1e-8 * max(1.0, rho_star):
            raise ArithmeticError("closed form %r and root %r disagree" %
                                  (rho_star, root))
    return rho_star


def regret_upper(inputs):
    """
    Returns the upper bound on the L-constrained regret of MLA-ROBD. When
    ``lambda3 < alpha / beta`` and the calibrated actions respect the
    switching budget the bound is

    ``alpha / (alpha - lambda3 beta) ((lambda1 + m / 2 beta) G sqrt(2 T L /
    alpha) + lambda2 beta T omega^2 / 2 + lambda3 beta L_rho / 2)``

    and otherwise ``(lambda1 + m / 2 beta) G sqrt(2 T L / alpha) + (lambda2 +
    lambda3) beta T omega^2 / 2``.

    :type inputs: RegretBoundInputs
    """
    i = inputs
    base = ((i.lambda1 + i.m / (2.0 * i.beta)) * i.G *
            sqrt(2.0 * i.T * i.L / i.alpha))
    if i.lambda3 < i.alpha / i.beta and i.budget_satisfied:
        inner = (base + i.lambda2 * i.beta * i.T * i.omega ** 2 / 2.0 +
                 i.lambda3 * i.beta * i.L_rho / 2.0)
        return i.alpha / (i.alpha - i.lambda3 * i.beta) * inner
    return base + (i.lambda2 + i.lambda3) * i.beta * i.T * i.omega ** 2 / 2.0


def qx_bound(model, bounds):
    """
    Returns ``G = lambda_max(Q) max ||x||`` over the corners of an action
    box, an upper bound on ``||Q x||`` for every action in the box.
    """
    corner = np.maximum(np.abs(bounds.lo), np.abs(bounds.hi))
    return 0.5 * model.beta * float(np.linalg.norm(corner))


def adversarial_prediction(instance, model, oracle, rho, direction=None,
                           seed=None, bounds=None):
    """
    Returns predictions that equal the offline optimal actions except for the
    first one, which is moved by ``sqrt(rho * cost)`` so that the prediction
    error is exactly rho. Played directly, these predictions cost at least
    ``1 + (m + 2 alpha) rho / 2`` times the optimum on quadratic instances.

    :param direction: the perturbation direction; the first basis vector by
        default, or a random unit vector when ``seed`` is given
    :param bounds: an optional action box the perturbation must fit in
    :raises ZeroOptimalCost: if the oracle cost is zero
    """
    if rho < 0:
        raise ValueError("rho must be non-negative, got %r" % rho)
    if not oracle.cost > 0:
        raise ZeroOptimalCost("the offline optimal cost is zero")
    d = oracle.actions.shape[1]
    if direction is not None:
        u = as_vector(direction, dim=d, name='direction')
    elif seed is not None:
        u = np.random.default_rng(seed).normal(size=d)
    else:
        u = np.eye(d)[0]
    norm = np.linalg.norm(u)
    if not norm > 0:
        raise ValueError("The perturbation direction must be non-zero.")
    radius = sqrt(rho * oracle.cost)
    if bounds is not None and radius > bounds.diameter:
        raise ValueError("A perturbation of %r exceeds the action set "
                         "diameter %r" % (radius, bounds.diameter))
    predictions = np.array(oracle.actions)
    predictions[0] = predictions[0] + radius * u / norm
    return predictions


def bound_columns(thetas):
    """
    Returns the header of :func:`bound_curves`.
    """
    return (['rho', 'lower_ml'] +
            ['upper_theta_%s' % repr(float(t)) for t in thetas] +
            ['upper_robd'])


def bound_curves(m, alpha, beta, thetas, rhos):
    """
    Tabulates the lower bound for standalone ML, the MLA-ROBD bound for each
    trust parameter, and the R-OBD bound over a grid of prediction errors.

    :return: a list of rows matching :func:`bound_columns`
    """
    robd = robd_competitive_ratio(m, alpha, beta)
    rows = []
    for rho in rhos:
        row = [float(rho), cr_lower_pure_ml(m, alpha, rho)]
        row.extend(cr_upper_optimal(m, alpha, beta, t, rho) for t in thetas)
        row.append(robd)
        rows.append(row)
    return rows

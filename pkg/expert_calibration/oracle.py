"""
The oracle module contains the offline optimal oracle, which sees the whole
context sequence in advance, the L-constrained oracle, whose total switching
cost is limited by a budget L, and the prediction quality measures that are
defined relative to them.

For the quadratic tracking cost the offline problem is a strongly convex
quadratic program whose Hessian is block tridiagonal, so it is solved exactly
with a banded Cholesky solve. Custom hitting costs use Newton's method on the
whole trajectory with the same banded solve for every Newton step.
"""

import logging

import numpy as np
from scipy import linalg

from expert_calibration.core import as_sequence
from expert_calibration.core import ConvergenceError
from expert_calibration.core import DimensionError
from expert_calibration.core import EpisodeTrace
from expert_calibration.core import ZeroOptimalCost

logger = logging.getLogger(__name__)

COST_FLOOR = 1e-9


class OracleSolution(object):
    """
    An offline optimal trajectory.

    :param actions: x*_1 .. x*_T
    :param cost: the total cost of the trajectory
    :param grad_norm: the norm of the objective gradient at the solution
    :param hitting: per-step hitting costs
    :param switching: per-step switching costs
    """

    def __init__(self, actions, cost, grad_norm, hitting, switching):
        self.actions = as_sequence(actions, name='actions')
        self.cost = float(cost)
        self.grad_norm = float(grad_norm)
        self.hitting = np.asarray(hitting, dtype=np.float64)
        self.switching = np.asarray(switching, dtype=np.float64)

    @property
    def hitting_total(self):
        return float(np.sum(self.hitting))

    @property
    def switching_total(self):
        return float(np.sum(self.switching))

    def to_trace(self, policy='oracle'):
        """
        Returns the solution as an episode trace whose predictions and
        reference are the oracle actions themselves.
        """
        return EpisodeTrace(self.actions, self.actions, self.hitting,
                            self.switching, reference=self.actions,
                            policy=policy)

    def __repr__(self):
        return "%s(T=%i, cost=%0.6f)" % (type(self).__name__,
                                         self.actions.shape[0], self.cost)


class LConstrainedSolution(OracleSolution):
    """
    The solution of the L-constrained oracle, with the dual multiplier ``mu``
    of the switching budget.
    """

    def __init__(self, actions, cost, grad_norm, hitting, switching, budget,
                 dual_mu):
        super(LConstrainedSolution, self).__init__(actions, cost, grad_norm,
                                                   hitting, switching)
        self.budget = float(budget)
        self.dual_mu = float(dual_mu)


def _upper_banded(A, u):
    """
    Converts a symmetric matrix with ``u`` super diagonals into the upper
    banded storage used by :func:`scipy.linalg.solveh_banded`.
    """
    n = A.shape[0]
    ab = np.zeros((u + 1, n))
    for k in range(u + 1):
        ab[u - k, k:] = np.diagonal(A, offset=k)
    return ab


def _trajectory_hessian(model, instance, actions, weight):
    """
    Builds the (dT x dT) block tridiagonal Hessian of
    ``sum_t f(x_t, y_t) + weight * c(x_t, x_{t-1})``.
    """
    T, d = instance.T, model.dim
    Q = model.Q
    H = np.zeros((T * d, T * d))
    for t in range(T):
        block = slice(t * d, (t + 1) * d)
        switching = 4.0 if t < T - 1 else 2.0
        H[block, block] = (model.hitting.hessian(actions[t],
                                                 instance.contexts[t]) +
                           switching * weight * Q)
        if t < T - 1:
            nxt = slice((t + 1) * d, (t + 2) * d)
            H[block, nxt] = -2.0 * weight * Q
            H[nxt, block] = -2.0 * weight * Q
    return H


def trajectory_gradient(model, instance, actions, weight=1.0):
    """
    Returns the gradient of ``sum_t f(x_t, y_t) + weight * c(x_t, x_{t-1})``
    with respect to the whole trajectory, as a (T, d) array.
    """
    actions = as_sequence(actions, dim=model.dim, name='actions')
    T = instance.T
    Q = model.Q
    grad = np.empty((T, model.dim))
    prev = instance.x0
    for t in range(T):
        g = model.hitting.gradient(actions[t], instance.contexts[t])
        g = g + 2.0 * weight * Q @ (actions[t] - prev)
        if t < T - 1:
            g = g - 2.0 * weight * Q @ (actions[t + 1] - actions[t])
        grad[t] = g
        prev = actions[t]
    return grad


def _solve_banded(H, rhs, d):
    try:
        u = min(2 * d - 1, H.shape[0] - 1)
        return linalg.solveh_banded(_upper_banded(H, u), rhs)
    except linalg.LinAlgError as err:
        raise ConvergenceError("banded Cholesky solve failed: %s" % err)


def _solve_quadratic(model, instance, weight):
    """
    Solves the quadratic tracking trajectory problem exactly.
    """
    T, d = instance.T, model.dim
    H = _trajectory_hessian(model, instance, np.zeros((T, d)), weight)
    rhs = np.array(instance.contexts, dtype=np.float64).reshape(-1)
    rhs[:d] += 2.0 * weight * model.Q @ instance.x0
    return _solve_banded(H, rhs, d).reshape(T, d)


def _objective(model, instance, actions, weight):
    hitting, switching = model.episode_costs(instance.x0, instance.contexts,
                                             actions)
    return float(np.sum(hitting) + weight * np.sum(switching))


def _solve_newton(model, instance, weight, tol=1e-8, max_iter=100):
    """
    Minimizes the trajectory objective for custom hitting costs with a damped
    Newton method.
    """
    T, d = instance.T, model.dim
    x = np.array([model.hitting.minimizer(y, d) for y in instance.contexts])
    for it in range(max_iter):
        g = trajectory_gradient(model, instance, x, weight).reshape(-1)
        if np.linalg.norm(g) <= tol:
            return x
        H = _trajectory_hessian(model, instance, x, weight)
        step = _solve_banded(H, g, d).reshape(T, d)
        fx = _objective(model, instance, x, weight)
        slope = float(g @ step.reshape(-1))
        t = 1.0
        while (_objective(model, instance, x - t * step, weight) >
               fx - 0.25 * t * slope and t > 1e-12):
            t *= 0.5
        x = x - t * step
        logger.debug("trajectory newton step %i, grad norm %g", it,
                     np.linalg.norm(g))
    g = trajectory_gradient(model, instance, x, weight)
    if np.linalg.norm(g) <= tol:
        return x
    raise ConvergenceError("trajectory Newton did not converge in %i steps "
                           "(gradient norm %r)" % (max_iter,
                                                   float(np.linalg.norm(g))))


def _solve(model, instance, weight):
    if instance.d != model.dim:
        raise DimensionError("instance has action dimension %i, model %i" %
                             (instance.d, model.dim))
    if model.hitting.kind == 'quadratic_tracking':
        return _solve_quadratic(model, instance, weight)
    return _solve_newton(model, instance, weight)


def _solution(model, instance, actions):
    hitting, switching = model.episode_costs(instance.x0, instance.contexts,
                                             actions)
    grad = trajectory_gradient(model, instance, actions)
    return (float(np.sum(hitting) + np.sum(switching)),
            float(np.linalg.norm(grad)), hitting, switching)


def offline_optimal(instance, model):
    """
    Computes the offline optimal trajectory, i.e., the joint minimizer of
    ``sum_t f(x_t, y_t) + c(x_t, x_{t-1})`` over x_1 .. x_T.

    :param instance: the problem instance
    :type instance: :class:`ProblemInstance
        <expert_calibration.core.ProblemInstance>`
    :param model: the cost model
    :type model: :class:`CostModel
        <expert_calibration.costmodel.CostModel>`
    :rtype: OracleSolution

    >>> from expert_calibration.core import ProblemInstance
    >>> from expert_calibration.costmodel import CostModel
    >>> sol = offline_optimal(ProblemInstance(0.0, [1.0, 1.0]),
    ...                       CostModel.quadratic(0.5))
    >>> [round(float(x), 6) for x in sol.actions[:, 0]], round(sol.cost, 6)
    ([0.6, 0.8], 0.3)
    """
    actions = _solve(model, instance, 1.0)
    cost, grad_norm, hitting, switching = _solution(model, instance, actions)
    return OracleSolution(actions, cost, grad_norm, hitting, switching)


def l_constrained_optimal(instance, model, L, tol=1e-9, max_iter=200):
    """
    Computes the L-constrained oracle, the offline optimum subject to a total
    switching cost of at most ``L``.

    If the unconstrained optimum satisfies the budget it is returned with
    ``mu = 0``. Otherwise the dual multiplier ``mu`` is found by bisection:
    each inner problem minimizes ``sum f + (1 + mu) sum c``, whose switching
    total is non-increasing in mu. With ``L = 0`` every action is pinned to
    ``x0`` and no finite multiplier exists, so ``mu`` is reported as inf.

    :raises ConvergenceError: if no bracket for mu can be found
    :rtype: LConstrainedSolution
    """
    if not L >= 0:
        raise ValueError("The switching budget L must be >= 0, got %r" % L)
    unconstrained = _solve(model, instance, 1.0)
    cost, grad_norm, hitting, switching = _solution(model, instance,
                                                    unconstrained)
    if np.sum(switching) <= L:
        return LConstrainedSolution(unconstrained, cost, grad_norm, hitting,
                                    switching, L, 0.0)
    if L == 0:
        pinned = np.tile(instance.x0, (instance.T, 1))
        cost, grad_norm, hitting, switching = _solution(model, instance,
                                                        pinned)
        return LConstrainedSolution(pinned, cost, grad_norm, hitting,
                                    switching, L, float('inf'))

    def switching_total(mu):
        actions = _solve(model, instance, 1.0 + mu)
        _, sw = model.episode_costs(instance.x0, instance.contexts, actions)
        return float(np.sum(sw)), actions

    lo, hi = 0.0, 1.0
    total_hi, actions = switching_total(hi)
    doublings = 0
    while total_hi > L:
        lo = hi
        hi *= 2.0
        doublings += 1
        if doublings > 200:
            raise ConvergenceError("could not bracket the dual multiplier "
                                   "for L = %r" % L)
        total_hi, actions = switching_total(hi)

    slack = tol * max(1.0, L)
    mu, total = hi, total_hi
    for it in range(max_iter):
        if abs(total - L) <= slack:
            break
        mu = 0.5 * (lo + hi)
        total, actions = switching_total(mu)
        logger.debug("bisection %i: mu=%g switching=%g L=%g", it, mu, total,
                     L)
        if total > L:
            lo = mu
        else:
            hi = mu
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    if abs(total - L) > slack:
        # the bracket collapsed; report the feasible end
        mu = hi
        total, actions = switching_total(hi)
        if total > L + slack:
            raise ConvergenceError("dual bisection did not reach the budget "
                                   "L = %r (switching %r)" % (L, total))
    cost, _, hitting, switching = _solution(model, instance, actions)
    kkt = trajectory_gradient(model, instance, actions, 1.0 + mu)
    return LConstrainedSolution(actions, cost, float(np.linalg.norm(kkt)),
                                hitting, switching, L, mu)


def prediction_error_rho(predictions, oracle, floor=0.0):
    """
    Returns the smallest ``rho`` for which the predictions are rho-accurate,
    ``sum_t ||x_tilde_t - x*_t||^2 / cost(oracle)``.

    :raises ZeroOptimalCost: if the oracle cost is <= floor

    >>> import numpy as np
    >>> sol = OracleSolution([[0.0]], 2.0, 0.0, [1.0], [1.0])
    >>> round(prediction_error_rho([[np.sqrt(0.3)]], sol), 12)
    0.15
    """
    if oracle.cost <= floor:
        raise ZeroOptimalCost("oracle cost %r is not above %r" %
                              (oracle.cost, floor))
    predictions = as_sequence(predictions, dim=oracle.actions.shape[1],
                              name='predictions')
    if predictions.shape[0] != oracle.actions.shape[0]:
        raise DimensionError("predictions and oracle differ in length")
    return float(np.sum((predictions - oracle.actions) ** 2)) / oracle.cost


def usable_cost_mask(costs, rel_floor=COST_FLOOR):
    """
    Flags the optimal costs that can serve as denominators: positive and at
    least ``rel_floor`` times their median.

    >>> usable_cost_mask([2.0, 0.0, 1e-12, 1.0]).tolist()
    [True, False, False, True]
    """
    costs = np.asarray(costs, dtype=np.float64).reshape(-1)
    if costs.size == 0:
        return np.zeros(0, dtype=bool)
    floor = rel_floor * float(np.median(costs))
    return (costs > 0) & (costs >= floor)


def l_rho(predictions, l_solution):
    """
    Returns ``sum_t ||x_tilde_t - x^L_t||^2``, the absolute prediction error
    relative to the L-constrained oracle.
    """
    predictions = as_sequence(predictions, name='predictions')
    if predictions.shape != l_solution.actions.shape:
        raise DimensionError("predictions have shape %s, oracle %s" %
                             (predictions.shape, l_solution.actions.shape))
    return float(np.sum((predictions - l_solution.actions) ** 2))

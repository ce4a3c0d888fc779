"""
The costmodel module contains the hitting and switching cost functions and
the convexity constants (m, alpha, beta) that the competitive ratio and regret
bounds are stated in.

The switching cost is a squared Mahalanobis distance
``c(x, x') = (x - x')^T Q (x - x')`` where the smallest and largest
eigenvalues of Q are alpha / 2 and beta / 2. The hitting cost is either the
quadratic tracking cost ``f(x, y) = 0.5 * ||x - y||^2`` (m = 1) or a custom
m-strongly convex function given through callbacks.
"""

import logging

import numpy as np

from expert_calibration.core import as_vector
from expert_calibration.core import as_sequence
from expert_calibration.core import ConvergenceError
from expert_calibration.core import DimensionError

logger = logging.getLogger(__name__)

CUSTOM_CHECK_TRIALS = 200


def eig_bounds(Q):
    """
    Returns the convexity constants ``(alpha, beta)`` of a switching matrix,
    i.e., twice its smallest and largest eigenvalue.

    :param Q: a symmetric positive definite matrix
    :type Q: 2-D array-like
    :return: ``(2 * lambda_min(Q), 2 * lambda_max(Q))``
    :rtype: (float, float)

    >>> eig_bounds([[5.0]])
    (10.0, 10.0)
    >>> eig_bounds([[1.0, 0.0], [0.0, 2.0]])
    (2.0, 4.0)
    """
    Q = np.atleast_2d(np.array(Q, dtype=np.float64))
    if Q.shape[0] != Q.shape[1]:
        raise DimensionError("Q must be square, got shape %s" % (Q.shape,))
    if not np.allclose(Q, Q.T, rtol=0.0, atol=1e-12):
        raise ValueError("Q must be symmetric.")
    eigs = np.linalg.eigvalsh(Q)
    if eigs[0] <= 0:
        raise ValueError("Q must be positive definite, smallest eigenvalue "
                         "is %r" % float(eigs[0]))
    return 2.0 * float(eigs[0]), 2.0 * float(eigs[-1])


class SwitchingCost(object):
    """
    A squared Mahalanobis switching cost.

    Q can be given as a full matrix or, when ``dim`` is provided, as a scalar
    shorthand ``sigma`` meaning ``Q = sigma * I``.

    :param Q: the switching matrix or a positive scalar
    :type Q: float or 2-D array-like
    :param dim: the action dimension, needed when Q is a scalar
    :type dim: int

    >>> c = SwitchingCost(5.0)
    >>> c.alpha, c.beta
    (10.0, 10.0)
    >>> c.value([1.0], [0.0])
    5.0
    """

    def __init__(self, Q, dim=1):
        Q = np.array(Q, dtype=np.float64)
        if Q.ndim == 0:
            Q = float(Q) * np.eye(dim)
        self.Q = np.atleast_2d(Q)
        self.Q.flags.writeable = False
        self.alpha, self.beta = eig_bounds(self.Q)

    @property
    def dim(self):
        return self.Q.shape[0]

    def value(self, x, x_prev):
        """
        Returns ``(x - x_prev)^T Q (x - x_prev)``.
        """
        u = (as_vector(x, dim=self.dim, name='x') -
             as_vector(x_prev, dim=self.dim, name='x_prev'))
        return float(u @ self.Q @ u)

    def gradient(self, x, x_prev):
        """
        Returns the gradient with respect to the first argument,
        ``2 Q (x - x_prev)``.
        """
        u = (as_vector(x, dim=self.dim, name='x') -
             as_vector(x_prev, dim=self.dim, name='x_prev'))
        return 2.0 * self.Q @ u

    def to_config(self):
        if np.allclose(self.Q, self.Q[0, 0] * np.eye(self.dim)):
            return {'q_scalar': float(self.Q[0, 0]), 'dim': self.dim}
        return {'q_matrix': self.Q.tolist()}


class HittingCost(object):
    """
    Base class for hitting costs ``f(x, y)``. Subclasses provide the value,
    gradient, and Hessian with respect to the action together with the
    declared strong convexity constant ``m``.
    """

    kind = None

    def __init__(self, m):
        if not m > 0:
            raise ValueError("The strong convexity constant m must be > 0.")
        self.m = float(m)

    def value(self, x, y):
        raise NotImplementedError()

    def gradient(self, x, y):
        raise NotImplementedError()

    def hessian(self, x, y):
        raise NotImplementedError()

    def minimizer(self, y, dim):
        """
        Returns ``argmin_x f(x, y)`` using a damped Newton method, stopping
        when the gradient norm drops below 1e-10.
        """
        return newton_minimize(lambda x: self.value(x, y),
                               lambda x: self.gradient(x, y),
                               lambda x: self.hessian(x, y),
                               np.zeros(dim), tol=1e-10, max_iter=100)


class QuadraticTracking(HittingCost):
    """
    The tracking cost ``f(x, y) = 0.5 * ||x - y||^2``, which is 1-strongly
    convex and minimized at ``x = y``.

    >>> f = QuadraticTracking()
    >>> f.value([2.0], [1.0]), f.gradient([2.0], [1.0])
    (0.5, array([1.]))
    """

    kind = 'quadratic_tracking'

    def __init__(self):
        super(QuadraticTracking, self).__init__(1.0)

    def value(self, x, y):
        u = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
        return 0.5 * float(u @ u)

    def gradient(self, x, y):
        return (np.asarray(x, dtype=np.float64) -
                np.asarray(y, dtype=np.float64))

    def hessian(self, x, y):
        return np.eye(np.asarray(x).shape[0])

    def minimizer(self, y, dim):
        return np.array(y, dtype=np.float64).reshape(-1)


class CustomHitting(HittingCost):
    """
    A hitting cost defined by user supplied callbacks. The callbacks receive
    ``(x, y)`` as 1-D arrays and return a float, a vector, and a matrix
    respectively. The declared ``m`` is trusted by the bounds and is only
    spot checked by :func:`check_strong_convexity`.

    :param value: ``f(x, y)``
    :param gradient: ``grad_x f(x, y)``
    :param hessian: ``hess_x f(x, y)``
    :param m: the declared strong convexity constant
    """

    kind = 'custom'

    def __init__(self, value, gradient, hessian, m):
        super(CustomHitting, self).__init__(m)
        self._value = value
        self._gradient = gradient
        self._hessian = hessian

    def value(self, x, y):
        return float(self._value(np.asarray(x, dtype=np.float64),
                                 np.asarray(y, dtype=np.float64)))

    def gradient(self, x, y):
        return np.asarray(self._gradient(np.asarray(x, dtype=np.float64),
                                         np.asarray(y, dtype=np.float64)),
                          dtype=np.float64).reshape(-1)

    def hessian(self, x, y):
        return np.atleast_2d(np.asarray(
            self._hessian(np.asarray(x, dtype=np.float64),
                          np.asarray(y, dtype=np.float64)),
            dtype=np.float64))


def newton_minimize(value, gradient, hessian, x, tol=1e-10, max_iter=100):
    """
    Minimizes a strongly convex function with Newton's method and an Armijo
    backtracking line search.

    :raises ConvergenceError: if the gradient norm is not below ``tol`` after
        ``max_iter`` Newton steps
    """
    x = np.array(x, dtype=np.float64)
    for _ in range(max_iter):
        g = gradient(x)
        if np.linalg.norm(g) <= tol:
            return x
        step = np.linalg.solve(hessian(x), g)
        fx = value(x)
        slope = float(g @ step)
        t = 1.0
        while value(x - t * step) > fx - 0.25 * t * slope and t > 1e-12:
            t *= 0.5
        x = x - t * step
    if np.linalg.norm(gradient(x)) <= tol:
        return x
    raise ConvergenceError("Newton's method did not converge in %i steps "
                           "(gradient norm %r)" %
                           (max_iter, float(np.linalg.norm(gradient(x)))))


class CostModel(object):
    """
    Pairs a hitting cost with a switching cost. This is the ``(f, c)`` of the
    online problem together with the constants ``m``, ``alpha``, and
    ``beta``.

    Custom hitting costs have their declared constants spot checked on
    construction, see :func:`check_strong_convexity` and
    :func:`check_switching_bounds`.

    :param hitting: the hitting cost
    :type hitting: HittingCost
    :param switching: the switching cost
    :type switching: SwitchingCost
    :param check_trials: random pairs sampled by each spot check of a custom
        hitting cost; 0 disables the checks
    :type check_trials: int
    :raises ValueError: if a spot check finds a violated constant
    """

    def __init__(self, hitting, switching, check_trials=CUSTOM_CHECK_TRIALS):
        self.hitting = hitting
        self.switching = switching
        if hitting.kind != 'quadratic_tracking' and check_trials > 0:
            self._spot_check(check_trials)

    def _spot_check(self, trials):
        logger.debug("spot checking declared constants on %i pairs", trials)
        if not check_strong_convexity(self.hitting, self.dim, trials=trials):
            raise ValueError("hitting cost is not %r-strongly convex and "
                             "non-negative on sampled pairs" % self.hitting.m)
        if not check_switching_bounds(self.switching, trials=trials):
            raise ValueError("switching matrix violates its alpha/beta "
                             "bounds on sampled displacements")

    @classmethod
    def quadratic(cls, q_scalar=5.0, dim=1):
        """
        The cost model of the datacenter case study: quadratic tracking and
        ``Q = q_scalar * I`` (alpha = 2 * q_scalar).
        """
        return cls(QuadraticTracking(), SwitchingCost(q_scalar, dim=dim))

    @classmethod
    def from_config(cls, config):
        """
        Builds a cost model from a config dict such as
        ``{"hitting": {"kind": "quadratic_tracking"},
        "switching": {"q_scalar": 5.0}}``. Custom hitting costs cannot be
        described in config files.
        """
        hitting_cfg = config.get('hitting', {'kind': 'quadratic_tracking'})
        kind = hitting_cfg.get('kind', 'quadratic_tracking')
        if kind != 'quadratic_tracking':
            raise ValueError("Unsupported hitting cost kind in config: %r" %
                             kind)
        switching_cfg = config.get('switching', {'q_scalar': 5.0})
        if 'q_matrix' in switching_cfg:
            switching = SwitchingCost(switching_cfg['q_matrix'])
        elif 'q_scalar' in switching_cfg:
            switching = SwitchingCost(switching_cfg['q_scalar'],
                                      dim=int(switching_cfg.get('dim', 1)))
        else:
            raise ValueError("Switching config needs q_scalar or q_matrix.")
        return cls(QuadraticTracking(), switching)

    def to_config(self):
        if self.hitting.kind != 'quadratic_tracking':
            raise ValueError("Custom hitting costs cannot be serialized.")
        return {'hitting': {'kind': self.hitting.kind},
                'switching': self.switching.to_config()}

    @property
    def dim(self):
        return self.switching.dim

    @property
    def Q(self):
        return self.switching.Q

    @property
    def m(self):
        return self.hitting.m

    @property
    def alpha(self):
        return self.switching.alpha

    @property
    def beta(self):
        return self.switching.beta

    def _check_xy(self, x, y):
        x = as_vector(x, dim=self.dim, name='x')
        y = as_vector(y, name='y')
        if (self.hitting.kind == 'quadratic_tracking' and
                y.shape[0] != self.dim):
            raise DimensionError("context has dimension %i, quadratic "
                                 "tracking needs %i" % (y.shape[0], self.dim))
        return x, y

    def switching_cost(self, x, x_prev):
        return self.switching.value(x, x_prev)

    def switching_grad(self, x, x_prev):
        return self.switching.gradient(x, x_prev)

    def hitting_cost(self, x, y):
        x, y = self._check_xy(x, y)
        return self.hitting.value(x, y)

    def hitting_grad(self, x, y):
        x, y = self._check_xy(x, y)
        return self.hitting.gradient(x, y)

    def hitting_hessian(self, x, y):
        x, y = self._check_xy(x, y)
        return self.hitting.hessian(x, y)

    def episode_costs(self, x0, contexts, actions):
        """
        Returns the per-step hitting and switching costs of a trajectory.

        :return: ``(hitting, switching)`` arrays of length T
        """
        contexts = as_sequence(contexts, name='contexts')
        actions = as_sequence(actions, dim=self.dim, name='actions')
        if contexts.shape[0] != actions.shape[0]:
            raise DimensionError("contexts and actions differ in length")
        prev = as_vector(x0, dim=self.dim, name='x0')
        hitting = np.empty(actions.shape[0])
        switching = np.empty(actions.shape[0])
        for t in range(actions.shape[0]):
            hitting[t] = self.hitting_cost(actions[t], contexts[t])
            switching[t] = self.switching_cost(actions[t], prev)
            prev = actions[t]
        return hitting, switching

    def __repr__(self):
        return "CostModel(%s, d=%i, m=%g, alpha=%g, beta=%g)" % (
            self.hitting.kind, self.dim, self.m, self.alpha, self.beta)


def switching_cost(model, x, x_prev):
    """
    Returns ``c(x, x_prev) = (x - x_prev)^T Q (x - x_prev)``.

    >>> switching_cost(CostModel.quadratic(5.0), [1.0], [0.0])
    5.0
    """
    return model.switching_cost(x, x_prev)


def hitting_cost(model, x, y):
    """
    Returns ``f(x, y)``.
    """
    return model.hitting_cost(x, y)


def hitting_grad(model, x, y):
    """
    Returns ``grad_x f(x, y)``.
    """
    return model.hitting_grad(x, y)


def hitting_hessian(model, x, y):
    """
    Returns ``hess_x f(x, y)``.
    """
    return model.hitting_hessian(x, y)


def check_strong_convexity(hitting, dim, ctx_dim=None, trials=10000, seed=0,
                           scale=3.0, slack=1e-9):
    """
    Spot checks the declared strong convexity constant of a hitting cost on
    random pairs: ``f(b) >= f(a) + <grad f(a), b - a> + (m / 2)||b - a||^2``
    and ``f >= 0``.

    :return: True if every sampled pair satisfies both inequalities
    :rtype: bool
    """
    rng = np.random.default_rng(seed)
    ctx_dim = dim if ctx_dim is None else ctx_dim
    for _ in range(trials):
        y = rng.normal(0.0, scale, ctx_dim)
        a = rng.normal(0.0, scale, dim)
        b = rng.normal(0.0, scale, dim)
        fa = hitting.value(a, y)
        fb = hitting.value(b, y)
        if fa < -slack or fb < -slack:
            return False
        u = b - a
        lower = (fa + float(hitting.gradient(a, y) @ u) +
                 0.5 * hitting.m * float(u @ u))
        if fb < lower - slack * max(1.0, abs(lower)):
            return False
    return True


def check_switching_bounds(switching, trials=10000, seed=0, slack=1e-9):
    """
    Spot checks ``(alpha / 2)||u||^2 <= u^T Q u <= (beta / 2)||u||^2`` on
    random displacements.
    """
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        u = rng.normal(0.0, 1.0, switching.dim)
        quad = float(u @ switching.Q @ u)
        sq = float(u @ u)
        if (quad < 0.5 * switching.alpha * sq - slack * sq or
                quad > 0.5 * switching.beta * sq + slack * sq):
            return False
    return True

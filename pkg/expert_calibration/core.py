"""
The core module contains the domain types shared by the rest of the library:
:class:`ProblemInstance`, :class:`EpisodeTrace`, and :class:`EvalResult`, as
well as the exception hierarchy raised by the solvers, the trainer, and the
data pipeline.

All vectors are stored as read-only, double precision numpy arrays so that
instances and traces can be shared freely between threads and processes.
"""

import csv

import numpy as np


class CalibrationError(Exception):
    """
    Base class for all errors raised by expert_calibration.
    """


class DimensionError(CalibrationError, ValueError):
    """
    Raised when vectors or matrices have inconsistent dimensions.
    """


class ConvergenceError(CalibrationError):
    """
    Raised when an iterative solver (Newton, projected gradient, or dual
    bisection) fails to reach its tolerance.
    """


class NegativeLambda2(CalibrationError, ValueError):
    """
    Raised when the optimal regularization weight for the hitting cost
    minimizer is negative, i.e., the (lambda1, theta) pair is infeasible.
    """


class ZeroOptimalCost(CalibrationError, ValueError):
    """
    Raised when a quantity normalized by the offline optimal cost is requested
    for an instance whose optimal cost is (numerically) zero.
    """


class BoundaryOptimumError(CalibrationError):
    """
    Raised when implicit gradients are requested at a calibrated action that
    lies on the boundary of the action box.
    """


class DivergenceError(CalibrationError):
    """
    Raised when network outputs or training losses become non-finite.

    :param epoch: the training epoch in which divergence was detected
    :type epoch: int or None
    """

    def __init__(self, message, epoch=None):
        if epoch is not None:
            message = "epoch %i: %s" % (epoch, message)
        super(DivergenceError, self).__init__(message)
        self.epoch = epoch


class DataValidationError(CalibrationError, ValueError):
    """
    Raised when an input file does not match its schema. The message names
    the file, row, and column where possible.
    """


def as_vector(value, dim=None, name='vector'):
    """
    Converts a scalar or sequence into a read-only 1-D float64 array and
    validates its dimension and finiteness.

    >>> as_vector(2.0)
    array([2.])
    >>> as_vector([1, 2], dim=2).shape
    (2,)
    """
    arr = np.array(value, dtype=np.float64).reshape(-1)
    if dim is not None and arr.shape[0] != dim:
        raise DimensionError("%s has dimension %i, expected %i" %
                             (name, arr.shape[0], dim))
    if not np.all(np.isfinite(arr)):
        raise ValueError("%s contains non-finite values: %s" % (name, arr))
    arr.flags.writeable = False
    return arr


def as_sequence(values, dim=None, name='sequence'):
    """
    Converts a sequence of vectors into a read-only (T, dim) float64 array.
    A 1-D input is read as T scalars (dim = 1).
    """
    arr = np.array(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise DimensionError("%s must be a sequence of vectors" % name)
    if dim is not None and arr.shape[1] != dim:
        raise DimensionError("%s has vectors of dimension %i, expected %i" %
                             (name, arr.shape[1], dim))
    if not np.all(np.isfinite(arr)):
        raise ValueError("%s contains non-finite values" % name)
    arr.flags.writeable = False
    return arr


class ProblemInstance(object):
    """
    A single problem instance, i.e., the complete offline information made of
    an initial action ``x0`` and a sequence of ``T`` contexts.

    :param x0: the initial action (dimension d)
    :type x0: float or sequence of floats
    :param contexts: the contexts y_1 .. y_T (each of dimension q)
    :type contexts: sequence of floats or sequence of vectors
    :param id: an opaque identifier
    :type id: str

    >>> inst = ProblemInstance(0.0, [1.0, 1.0], id='a')
    >>> inst.T, inst.d, inst.q
    (2, 1, 1)
    """

    def __init__(self, x0, contexts, id=''):
        self.x0 = as_vector(x0, name='x0')
        self.contexts = as_sequence(contexts, name='contexts')
        if self.contexts.shape[0] < 1:
            raise ValueError("An instance needs at least one context.")
        self.id = str(id)

    @property
    def T(self):
        return self.contexts.shape[0]

    @property
    def d(self):
        return self.x0.shape[0]

    @property
    def q(self):
        return self.contexts.shape[1]

    def with_x0(self, x0):
        """
        Returns a copy of the instance that starts from a different initial
        action. This is used for continuous testing.
        """
        return ProblemInstance(as_vector(x0, dim=self.d, name='x0'),
                               self.contexts, id=self.id)

    def __repr__(self):
        return "ProblemInstance(id=%r, T=%i, d=%i, q=%i)" % (self.id, self.T,
                                                             self.d, self.q)


class EpisodeTrace(object):
    """
    The full record of one episode: the (uncalibrated) predictions, the
    actions actually played, and the per-step hitting and switching costs.

    :param predictions: x_tilde_1 .. x_tilde_T; policies that make no
        prediction store their actions here.
    :param actions: x_1 .. x_T
    :param hitting_costs: f(x_t, y_t) for every step
    :param switching_costs: c(x_t, x_{t-1}) for every step
    :param reference: optional oracle actions x*_1 .. x*_T
    :param policy: a label for the policy that produced the trace
    """

    def __init__(self, predictions, actions, hitting_costs, switching_costs,
                 reference=None, policy=''):
        self.actions = as_sequence(actions, name='actions')
        T, d = self.actions.shape
        self.predictions = as_sequence(predictions, dim=d, name='predictions')
        self.hitting_costs = as_vector(hitting_costs, dim=T,
                                       name='hitting_costs')
        self.switching_costs = as_vector(switching_costs, dim=T,
                                         name='switching_costs')
        if self.predictions.shape[0] != T:
            raise DimensionError("predictions and actions differ in length")
        if np.any(self.hitting_costs < 0) or np.any(self.switching_costs < 0):
            raise ValueError("Costs must be non-negative.")
        self.reference = None
        if reference is not None:
            self.reference = as_sequence(reference, dim=d, name='reference')
            if self.reference.shape[0] != T:
                raise DimensionError("reference and actions differ in length")
        self.policy = policy

    @property
    def T(self):
        return self.actions.shape[0]

    def total_cost(self):
        """
        Returns the sum of all hitting and switching costs.
        """
        return total_cost(self)

    def __len__(self):
        return self.T

    def __repr__(self):
        return "EpisodeTrace(policy=%r, T=%i, cost=%0.6f)" % (
            self.policy, self.T, self.total_cost())


def total_cost(trace):
    """
    Computes the total cost of an episode, i.e., the sum of every hitting and
    switching cost entry.

    :param trace: a complete episode trace
    :type trace: EpisodeTrace
    :return: the total cost (always >= 0)
    :rtype: float

    >>> total_cost(EpisodeTrace([0, 0], [0, 0], [0.5, 0.5], [0.25, 0.0]))
    1.25
    """
    return float(np.sum(trace.hitting_costs) + np.sum(trace.switching_costs))


def concatenate_traces(first, second):
    """
    Joins two traces into a single longer episode.
    """
    reference = None
    if first.reference is not None and second.reference is not None:
        reference = np.vstack([first.reference, second.reference])
    return EpisodeTrace(np.vstack([first.predictions, second.predictions]),
                        np.vstack([first.actions, second.actions]),
                        np.concatenate([first.hitting_costs,
                                        second.hitting_costs]),
                        np.concatenate([first.switching_costs,
                                        second.switching_costs]),
                        reference=reference, policy=first.policy)


TRACE_COLUMNS = ['step', 'x_tilde', 'x', 'f_cost', 'c_cost']


def _format_vector(vec):
    return ' '.join(repr(float(v)) for v in vec)


def _parse_vector(cell):
    return [float(v) for v in cell.split()]


def write_trace_csv(trace, path):
    """
    Writes a trace to a CSV file with the columns ``step, x_tilde, x, f_cost,
    c_cost``. Vector entries are space separated within a cell.
    """
    with open(path, 'w', newline='') as out:
        writer = csv.writer(out)
        writer.writerow(TRACE_COLUMNS)
        for t in range(trace.T):
            writer.writerow([t + 1, _format_vector(trace.predictions[t]),
                             _format_vector(trace.actions[t]),
                             repr(float(trace.hitting_costs[t])),
                             repr(float(trace.switching_costs[t]))])


def read_trace_csv(path, policy=''):
    """
    Reads a trace written by :func:`write_trace_csv`.
    """
    predictions, actions, hitting, switching = [], [], [], []
    with open(path, newline='') as dat:
        reader = csv.DictReader(dat)
        if reader.fieldnames != TRACE_COLUMNS:
            raise DataValidationError("%s: expected header %s, got %s" %
                                      (path, TRACE_COLUMNS, reader.fieldnames))
        for row in reader:
            predictions.append(_parse_vector(row['x_tilde']))
            actions.append(_parse_vector(row['x']))
            hitting.append(float(row['f_cost']))
            switching.append(float(row['c_cost']))
    return EpisodeTrace(predictions, actions, hitting, switching,
                        policy=policy)


class EvalResult(object):
    """
    The metrics of one policy over one dataset.

    :param avg_cost: the average total cost per instance
    :param normalized_avg_cost: avg_cost divided by the oracle's average cost
    :param empirical_cr: the largest per-instance cost ratio
    :param tail_ratios: a dict mapping percentiles to cost ratios
    :param per_instance_ratios: cost / oracle cost for included instances
    :param excluded: the number of instances excluded for a near-zero oracle
        cost
    """

    def __init__(self, avg_cost, normalized_avg_cost, empirical_cr,
                 tail_ratios, per_instance_ratios, policy='', excluded=0,
                 oracle_avg_cost=None, instance_ids=None):
        self.avg_cost = float(avg_cost)
        self.normalized_avg_cost = float(normalized_avg_cost)
        self.empirical_cr = float(empirical_cr)
        self.tail_ratios = {p: float(r) for p, r in
                            dict(tail_ratios).items()}
        self.per_instance_ratios = tuple(float(r) for r in
                                         per_instance_ratios)
        self.policy = policy
        self.excluded = int(excluded)
        self.oracle_avg_cost = oracle_avg_cost
        self.instance_ids = (tuple(instance_ids) if instance_ids is not None
                             else None)

    @property
    def n_instances(self):
        return len(self.per_instance_ratios)

    def as_row(self, percentiles=(99, 99.9)):
        """
        Formats the result as a row of the metrics CSV.
        """
        row = [self.policy, repr(self.avg_cost),
               repr(self.normalized_avg_cost), repr(self.empirical_cr)]
        row.extend(repr(self.tail_ratios[p]) for p in percentiles)
        row.append(self.excluded)
        return row

    def __repr__(self):
        return ("EvalResult(policy=%r, norm_avg=%0.4f, emp_cr=%0.4f, n=%i, "
                "excluded=%i)" % (self.policy, self.normalized_avg_cost,
                                  self.empirical_cr, self.n_instances,
                                  self.excluded))

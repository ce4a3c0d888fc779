"""
The evaluation module runs online policies over datasets of problem
instances and computes their cost metrics relative to the offline optimal
oracle: the normalized average cost, the empirical competitive ratio, tail
cost ratios and the L-constrained regret.
"""

import csv
import logging
import multiprocessing

import numpy as np

from expert_calibration.baselines import robd_params
from expert_calibration.baselines import run_switch
from expert_calibration.calibrator import CalibratorParams
from expert_calibration.calibrator import MLAROBD
from expert_calibration.core import CalibrationError
from expert_calibration.core import EpisodeTrace
from expert_calibration.core import EvalResult
from expert_calibration.mlopt import forward
from expert_calibration.mlopt import predictor
from expert_calibration.oracle import l_constrained_optimal
from expert_calibration.oracle import offline_optimal
from expert_calibration.oracle import usable_cost_mask
from expert_calibration.utils import nearest_rank

logger = logging.getLogger(__name__)

POLICIES = ['oracle', 'robd', 'greedy', 'ftp', 'mlarobd', 'pureml', 'ecl2o',
            'switch']
SWITCH_LABEL = 'switch-reimplementation'


class SequencePredictor(object):
    """
    A predictor that replays a fixed sequence of predictions, e.g., the
    offline optimal actions. It must be called once per step, in order.
    """

    def __init__(self, predictions):
        self.predictions = np.asarray(predictions, dtype=np.float64)
        self.t = 0

    def __call__(self, y, x_prev):
        if self.t >= self.predictions.shape[0]:
            raise IndexError("ran out of predictions")
        x_tilde = self.predictions[self.t]
        self.t += 1
        return x_tilde


class OraclePolicy(object):
    """
    Plays the offline optimal actions.
    """
    name = 'oracle'

    def run(self, instance, model):
        return offline_optimal(instance, model).to_trace(self.name)


class CalibratorPolicy(object):
    """
    Runs MLA-ROBD with fixed weights. Predictions come from a trained
    network, from the offline optimum (``perfect=True``), or are absent.
    """

    def __init__(self, name, params, weights=None, perfect=False,
                 bounds=None):
        self.name = name
        self.params = params
        self.weights = weights
        self.perfect = perfect
        self.bounds = bounds

    def run(self, instance, model):
        calibrator = MLAROBD(model, self.params, self.bounds)
        if self.perfect:
            oracle = offline_optimal(instance, model)
            return calibrator.run(instance, SequencePredictor(oracle.actions),
                                  policy=self.name, reference=oracle.actions)
        source = None if self.weights is None else predictor(self.weights)
        return calibrator.run(instance, source, policy=self.name)


class PureMLPolicy(object):
    """
    Plays the network's predictions directly.
    """

    def __init__(self, weights, name='pureml'):
        self.weights = weights
        self.name = name

    def run(self, instance, model):
        x_prev = instance.x0
        actions = []
        for y in instance.contexts:
            x_prev = forward(self.weights, y, x_prev)[0]
            actions.append(x_prev)
        hitting, switching = model.episode_costs(instance.x0,
                                                 instance.contexts, actions)
        return EpisodeTrace(actions, actions, hitting, switching,
                            policy=self.name)


class SwitchPolicy(object):
    """
    Switches between R-OBD and a standalone network, see
    :func:`run_switch <expert_calibration.baselines.run_switch>`.
    """
    name = SWITCH_LABEL

    def __init__(self, weights, params, gamma=1.5, gamma_growth=2.0,
                 initial='ml'):
        self.weights = weights
        self.params = params
        self.gamma = gamma
        self.gamma_growth = gamma_growth
        self.initial = initial

    def run(self, instance, model):
        trace, _ = run_switch(instance, model, self.weights, self.params,
                              self.gamma, self.gamma_growth, self.initial)
        trace.policy = self.name
        return trace


def make_policy(name, model, weights=None, theta=0.5, mlarobd_theta=0.3,
                lambda1=1.0, gamma=1.5, gamma_growth=2.0, perfect=False):
    """
    Builds a policy by name.

    :param name: one of ``oracle``, ``robd``, ``greedy``, ``ftp``,
        ``mlarobd``, ``pureml``, ``ecl2o`` or ``switch``
    :param weights: network weights; EC-L2O weights for ``ecl2o`` and
        ``ftp``, PureML-0 weights for ``mlarobd``, ``pureml`` and ``switch``
    :param theta: the trust parameter EC-L2O was trained with
    :param mlarobd_theta: the trust parameter of the MLA-ROBD baseline
    :param perfect: let ``ftp`` follow the offline optimal actions when no
        weights are given
    """
    if name == 'oracle':
        return OraclePolicy()
    if name == 'robd':
        return CalibratorPolicy(name, robd_params(model, lambda1))
    if name == 'greedy':
        return CalibratorPolicy(name, CalibratorParams.greedy())
    if name == 'ftp':
        if weights is None and not perfect:
            raise ValueError("Follow-the-Prediction needs weights or "
                             "perfect predictions.")
        return CalibratorPolicy(name, CalibratorParams.follow_the_prediction(),
                                weights, perfect=weights is None)
    if name not in POLICIES:
        raise ValueError("Unknown policy %r, expected one of %s" %
                         (name, ', '.join(POLICIES)))
    if weights is None:
        raise ValueError("Policy %r needs network weights." % name)
    if name == 'mlarobd':
        return CalibratorPolicy(name, CalibratorParams.from_theta(
            model, mlarobd_theta, lambda1), weights)
    if name == 'ecl2o':
        return CalibratorPolicy(name, CalibratorParams.from_theta(
            model, theta, lambda1), weights)
    if name == 'pureml':
        return PureMLPolicy(weights)
    return SwitchPolicy(weights, robd_params(model, lambda1), gamma,
                        gamma_growth)


def run_policy(policy, instance, model):
    """
    Runs a policy over one instance and returns its :class:`EpisodeTrace
    <expert_calibration.core.EpisodeTrace>`.
    """
    return policy.run(instance, model)


def _run_with_oracle(policy, instance, model):
    trace = policy.run(instance, model)
    oracle = offline_optimal(instance, model)
    return trace.total_cost(), oracle.cost, trace.actions[-1]


def _run_all(policy, dataset, model, chain_x0, jobs):
    if chain_x0:
        outcomes = []
        x0 = dataset[0].x0 if dataset else None
        for instance in dataset:
            cost, oracle_cost, last = _run_with_oracle(
                policy, instance.with_x0(x0), model)
            outcomes.append((cost, oracle_cost))
            x0 = last
        return outcomes
    args = [(policy, instance, model) for instance in dataset]
    if jobs > 1 and len(dataset) > 1:
        with multiprocessing.Pool(processes=jobs) as pool:
            results = pool.starmap(_run_with_oracle, args)
    else:
        results = [_run_with_oracle(*a) for a in args]
    return [(cost, oracle_cost) for cost, oracle_cost, _ in results]


def evaluate(policy, dataset, model, chain_x0=False,
             percentiles=(99, 99.9), jobs=1):
    """
    Evaluates a policy over a dataset.

    Each instance's cost is divided by its offline optimal cost. Instances
    whose optimal cost is below ``1e-9`` times the median optimal cost are
    excluded and counted. The average cost is normalized by the average
    optimal cost, the empirical competitive ratio is the largest ratio and
    tail ratios are nearest-rank percentiles of the ratios.

    :param chain_x0: continuous testing, where every instance starts from the
        last action played on the previous instance; instances then run
        sequentially
    :param jobs: the number of worker processes for independent instances
    :rtype: :class:`EvalResult <expert_calibration.core.EvalResult>`
    :raises CalibrationError: if every instance is excluded
    """
    if len(dataset) == 0:
        raise ValueError("Cannot evaluate on an empty dataset.")
    outcomes = _run_all(policy, dataset, model, chain_x0, jobs)
    costs = np.array([c for c, _ in outcomes])
    oracle_costs = np.array([o for _, o in outcomes])
    keep = usable_cost_mask(oracle_costs)
    excluded = int(np.sum(~keep))
    if not np.any(keep):
        raise CalibrationError("all %i instances have a near zero optimal "
                               "cost" % len(dataset))
    ratios = costs[keep] / oracle_costs[keep]
    if np.any(ratios < 1 - 1e-8):
        logger.warning("%s: cost ratio %g below 1; the offline solution is "
                       "not optimal", policy.name, float(ratios.min()))
    ids = [inst.id for inst, k in zip(dataset, keep) if k]
    ordered = sorted(ratios.tolist())
    tails = {p: nearest_rank(ordered, p) for p in percentiles}
    tails[100] = ordered[-1]
    avg = float(np.mean(costs[keep]))
    oracle_avg = float(np.mean(oracle_costs[keep]))
    result = EvalResult(avg, avg / oracle_avg, ordered[-1], tails,
                        ratios.tolist(), policy=policy.name,
                        excluded=excluded, oracle_avg_cost=oracle_avg,
                        instance_ids=ids)
    logger.info("%r", result)
    return result


def l_constrained_regret(trace, instance, model, L):
    """
    Returns the cost of a trace minus the cost of the L-constrained offline
    optimum of its instance.
    """
    return trace.total_cost() - l_constrained_optimal(instance, model, L).cost


def metric_columns(percentiles=(99, 99.9)):
    """
    >>> metric_columns()
    ['policy', 'avg_cost', 'norm_avg', 'emp_cr', 'p99', 'p99_9', 'excluded']
    """
    return (['policy', 'avg_cost', 'norm_avg', 'emp_cr'] +
            [('p%g' % p).replace('.', '_') for p in percentiles] +
            ['excluded'])


def write_metrics_csv(results, path, percentiles=(99, 99.9)):
    """
    Writes one row per evaluation result.
    """
    with open(path, 'w', newline='') as out:
        writer = csv.writer(out, lineterminator='\n')
        writer.writerow(metric_columns(percentiles))
        for result in results:
            writer.writerow(result.as_row(percentiles))


def write_instance_csv(result, path):
    """
    Writes the per-instance cost ratios of a result.
    """
    ids = result.instance_ids or [str(i) for i in
                                  range(result.n_instances)]
    with open(path, 'w', newline='') as out:
        writer = csv.writer(out, lineterminator='\n')
        writer.writerow(['policy', 'instance_id', 'ratio'])
        for instance_id, ratio in zip(ids, result.per_instance_ratios):
            writer.writerow([result.policy, instance_id, repr(ratio)])


def policy_sweep(dataset, model, factory, values, chain_x0=False,
                 percentiles=(99, 99.9), jobs=1):
    """
    Evaluates ``factory(value)`` for every value of a policy's tuning
    parameter, e.g. the trust parameter of MLA-ROBD or the threshold of the
    switching baseline.

    :param factory: a callable returning the policy for one value
    :return: rows ``(value, norm_avg, emp_cr)``
    """
    rows = []
    for value in values:
        result = evaluate(factory(value), dataset, model, chain_x0,
                          percentiles, jobs)
        logger.info("%s at %g: norm_avg=%.6f emp_cr=%.6f", result.policy,
                    value, result.normalized_avg_cost, result.empirical_cr)
        rows.append((float(value), result.normalized_avg_cost,
                     result.empirical_cr))
    return rows


def tradeoff_sweep(dataset, model, weights, thetas, chain_x0=False,
                   percentiles=(99, 99.9), jobs=1, lambda1=1.0):
    """
    Evaluates MLA-ROBD on a network's predictions for every trust parameter
    in ``thetas``, tracing the trade-off between average cost and
    competitive ratio.

    :return: rows ``(theta, norm_avg, emp_cr)``
    """
    def factory(theta):
        return CalibratorPolicy('mlarobd', CalibratorParams.from_theta(
            model, theta, lambda1), weights)
    return policy_sweep(dataset, model, factory, thetas, chain_x0,
                        percentiles, jobs)


def pareto_boundary(rows):
    """
    Keeps the sweep rows that no other row beats in both the normalized
    average cost and the empirical competitive ratio, sorted by average
    cost. Of identical points only the first is kept.

    >>> pareto_boundary([(0, 1.2, 1.5), (1, 1.1, 2.0), (2, 1.3, 1.6),
    ...                  (3, 1.0, 2.5)])
    [(3, 1.0, 2.5), (1, 1.1, 2.0), (0, 1.2, 1.5)]
    """
    front = []
    best_cr = float('inf')
    for row in sorted(rows, key=lambda r: (r[1], r[2])):
        if row[2] < best_cr:
            front.append(row)
            best_cr = row[2]
    return front

"""
The trainer module trains the ML-based optimizer end to end.

For EC-L2O the network's predictions pass through the MLA-ROBD calibrator
before they are played, and the network is trained on a weighted sum of a
prediction error loss and the post-calibration cost. Gradients flow back
through the calibrator via its implicit Jacobians and through time over the
whole episode. The PureML baseline is trained on the same recurrent pipeline
with the calibrator removed.
"""

import csv
import logging

import numpy as np

from expert_calibration.calibrator import CalibratorParams
from expert_calibration.calibrator import MLAROBD
from expert_calibration.core import DivergenceError
from expert_calibration.core import EpisodeTrace
from expert_calibration.core import ZeroOptimalCost
from expert_calibration.mlopt import backward
from expert_calibration.mlopt import forward
from expert_calibration.mlopt import init_weights
from expert_calibration.mlopt import NetArchitecture
from expert_calibration.oracle import offline_optimal
from expert_calibration.oracle import prediction_error_rho
from expert_calibration.oracle import usable_cost_mask

logger = logging.getLogger(__name__)


class _OptimizerConfig(object):
    """
    Hyperparameters shared by both training modes.
    """

    def __init__(self, epochs=50, batch_size=32, learning_rate=1e-3,
                 beta1=0.9, beta2=0.999, eps=1e-8, seed=0,
                 hidden=(10, 10, 10), patience=None, output_scale=1.0):
        if epochs < 1 or batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1.")
        if not learning_rate > 0:
            raise ValueError("learning_rate must be > 0.")
        self.epochs = int(epochs)
        self.batch_size = int(batch_size)
        self.learning_rate = float(learning_rate)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.seed = int(seed)
        self.hidden = tuple(int(h) for h in hidden)
        self.patience = None if patience is None else int(patience)
        self.output_scale = float(output_scale)

    def architecture(self, instance):
        return NetArchitecture.for_model(instance.q, instance.d, self.hidden,
                                         output_scale=self.output_scale)

    def to_dict(self):
        data = dict(vars(self))
        data['hidden'] = list(self.hidden)
        return data

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(**data)
        except TypeError as err:
            raise ValueError("invalid training configuration: %s" % err)


class TrainConfig(_OptimizerConfig):
    """
    Hyperparameters for EC-L2O.

    :param mu: the weight of the prediction loss, in [0, 1]
    :param rho_bar: the prediction error threshold of the prediction loss
    :param theta: the calibrator's trust parameter lambda3 / lambda1
    :param lambda1: the calibrator's weight on the previous action; lambda2
        is derived from theta and lambda1

    The remaining keyword arguments are the shared training hyperparameters
    (epochs, batch_size, learning_rate, beta1, beta2, eps, seed, hidden,
    patience, output_scale).
    """

    def __init__(self, mu=0.6, rho_bar=0.1, theta=0.5, lambda1=1.0,
                 **kwargs):
        super(TrainConfig, self).__init__(**kwargs)
        if not 0 <= mu <= 1:
            raise ValueError("mu must be in [0, 1], got %r" % mu)
        if rho_bar < 0 or theta < 0:
            raise ValueError("rho_bar and theta must be non-negative.")
        self.mu = float(mu)
        self.rho_bar = float(rho_bar)
        self.theta = float(theta)
        self.lambda1 = float(lambda1)

    def calibrator_params(self, model):
        return CalibratorParams.from_theta(model, self.theta, self.lambda1)


class PureMLConfig(_OptimizerConfig):
    """
    Hyperparameters for the standalone (PureML) optimizer, whose loss is
    ``kappa * cost / oracle cost + (1 - kappa) * cost``. ``kappa = 0`` gives
    PureML-0.
    """

    def __init__(self, kappa=0.0, **kwargs):
        super(PureMLConfig, self).__init__(**kwargs)
        if not 0 <= kappa <= 1:
            raise ValueError("kappa must be in [0, 1], got %r" % kappa)
        self.kappa = float(kappa)


class TrainingSample(object):
    """
    A training instance with its precomputed offline optimal solution.
    """

    def __init__(self, instance, oracle):
        self.instance = instance
        self.oracle = oracle


def prepare_samples(instances, model):
    """
    Computes the offline optimal solution of every instance once, since they
    are constants during training.
    """
    return [TrainingSample(inst, offline_optimal(inst, model))
            for inst in instances]


def prediction_loss(predictions, oracle, rho_bar):
    """
    Returns ``relu(rho - rho_bar)`` where rho is the prediction error
    normalized by the oracle cost.

    :raises ZeroOptimalCost: if the oracle cost is zero
    """
    rho = prediction_error_rho(predictions, oracle)
    return max(rho - rho_bar, 0.0)


def _calibrated_rollout(weights, instance, calibrator):
    predictions, actions, tapes = [], [], []
    x_prev = instance.x0
    for y in instance.contexts:
        x_tilde, tape = forward(weights, y, x_prev)
        x, _ = calibrator.step(y, x_prev, x_tilde)
        predictions.append(x_tilde)
        actions.append(x)
        tapes.append(tape)
        x_prev = x
    return np.array(predictions), np.array(actions), tapes


def _trace(model, instance, predictions, actions, oracle, policy):
    hitting, switching = model.episode_costs(instance.x0, instance.contexts,
                                             actions)
    reference = None if oracle is None else oracle.actions
    return EpisodeTrace(predictions, actions, hitting, switching,
                        reference=reference, policy=policy)


def _cost_adjoint(model, instance, actions, t):
    """
    Returns the derivative of the episode cost with respect to x_t: the
    hitting cost at t, the switching cost at t, and the switching cost at
    t + 1.
    """
    Q = model.Q
    prev = instance.x0 if t == 0 else actions[t - 1]
    a = (model.hitting.gradient(actions[t], instance.contexts[t]) +
         2.0 * Q @ (actions[t] - prev))
    if t < instance.T - 1:
        a = a - 2.0 * Q @ (actions[t + 1] - actions[t])
    return a


def episode_loss(weights, instance, model, params, mu, rho_bar, oracle,
                 bounds=None):
    """
    Rolls out the calibrated pipeline over one instance and returns
    ``mu * prediction_loss + (1 - mu) * cost`` together with the trace.

    :return: ``(loss, trace)``
    """
    calibrator = MLAROBD(model, params, bounds)
    predictions, actions, _ = _calibrated_rollout(weights, instance,
                                                  calibrator)
    trace = _trace(model, instance, predictions, actions, oracle, 'ecl2o')
    loss = (1.0 - mu) * trace.total_cost()
    if mu > 0:
        loss += mu * prediction_loss(predictions, oracle, rho_bar)
    return loss, trace


def loss_and_grad_episode(weights, instance, model, params, mu, rho_bar,
                          oracle, bounds=None):
    """
    Computes the episode loss and its gradient with respect to the network
    weights by backpropagation through time.

    The adjoint of every calibrated action x_t collects the derivatives of
    the hitting cost at t, the switching costs at t and t + 1, the calibrator
    at t + 1 (through its Jacobian with respect to the previous action) and
    the network input at t + 1. Every prediction receives its adjoint through
    the calibrator's Jacobian with respect to the prediction, plus the
    prediction loss term while the relu is open.

    :return: ``(loss, trace, grad_weights)``
    :raises BoundaryOptimumError: if a calibrated action lies on the action
        box boundary
    """
    calibrator = MLAROBD(model, params, bounds)
    predictions, actions, tapes = _calibrated_rollout(weights, instance,
                                                      calibrator)
    trace = _trace(model, instance, predictions, actions, oracle, 'ecl2o')
    loss = (1.0 - mu) * trace.total_cost()
    pred_open = False
    if mu > 0:
        rho = prediction_error_rho(predictions, oracle)
        loss += mu * max(rho - rho_bar, 0.0)
        pred_open = rho > rho_bar

    grad = weights.zeros_like()
    carry = np.zeros(model.dim)
    for t in range(instance.T - 1, -1, -1):
        prev = instance.x0 if t == 0 else actions[t - 1]
        y = instance.contexts[t]
        a = (1.0 - mu) * _cost_adjoint(model, instance, actions, t) + carry
        J_pred, J_prev = calibrator.jacobians(y, prev, predictions[t],
                                              actions[t])
        a_tilde = J_pred.T @ a
        if pred_open:
            a_tilde = a_tilde + (2.0 * mu / oracle.cost) * (
                predictions[t] - oracle.actions[t])
        g_weights, g_prev, _ = backward(weights, tapes[t], a_tilde)
        for k in range(grad.n_layers):
            grad.weights[k] += g_weights.weights[k]
            grad.biases[k] += g_weights.biases[k]
        carry = J_prev.T @ a + g_prev
    return loss, trace, grad


def grad_episode(weights, instance, model, params, mu, rho_bar, oracle,
                 bounds=None):
    """
    Returns the gradient of :func:`episode_loss` with respect to the weights.
    """
    return loss_and_grad_episode(weights, instance, model, params, mu,
                                 rho_bar, oracle, bounds)[2]


def _pureml_rollout(weights, instance):
    actions, tapes = [], []
    x_prev = instance.x0
    for y in instance.contexts:
        x, tape = forward(weights, y, x_prev)
        actions.append(x)
        tapes.append(tape)
        x_prev = x
    return np.array(actions), tapes


def _pureml_weight(kappa, oracle):
    if kappa == 0:
        return 1.0
    return kappa / oracle.cost + (1.0 - kappa)


def pureml_episode_loss(weights, instance, model, kappa, oracle=None):
    """
    Returns ``(loss, trace)`` for the calibrator-free pipeline, where the
    predictions are played directly and the loss is ``kappa * cost /
    oracle cost + (1 - kappa) * cost``.
    """
    actions, _ = _pureml_rollout(weights, instance)
    trace = _trace(model, instance, actions, actions, oracle, 'pureml')
    return _pureml_weight(kappa, oracle) * trace.total_cost(), trace


def loss_and_grad_pureml_episode(weights, instance, model, kappa,
                                 oracle=None):
    """
    The PureML counterpart of :func:`loss_and_grad_episode`; every action is
    the network output, so adjoints flow through the network input only.
    """
    actions, tapes = _pureml_rollout(weights, instance)
    trace = _trace(model, instance, actions, actions, oracle, 'pureml')
    scale = _pureml_weight(kappa, oracle)
    grad = weights.zeros_like()
    carry = np.zeros(model.dim)
    for t in range(instance.T - 1, -1, -1):
        a = scale * _cost_adjoint(model, instance, actions, t) + carry
        g_weights, g_prev, _ = backward(weights, tapes[t], a)
        for k in range(grad.n_layers):
            grad.weights[k] += g_weights.weights[k]
            grad.biases[k] += g_weights.biases[k]
        carry = g_prev
    return scale * trace.total_cost(), trace, grad


def grad_pureml_episode(weights, instance, model, kappa, oracle=None):
    return loss_and_grad_pureml_episode(weights, instance, model, kappa,
                                        oracle)[2]


class AdamState(object):
    """
    The first and second moment estimates and step counter of Adam.
    """

    def __init__(self, m, v, t=0):
        self.m = np.asarray(m, dtype=np.float64)
        self.v = np.asarray(v, dtype=np.float64)
        self.t = int(t)

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(state, weights, grad, lr=1e-3, beta1=0.9, beta2=0.999,
              eps=1e-8):
    """
    Performs one bias-corrected Adam update.

    :param state: the optimizer state, or None to start from zero moments
    :type state: AdamState or None
    :param weights: the current weights
    :type weights: :class:`PolicyWeights
        <expert_calibration.mlopt.PolicyWeights>`
    :param grad: the gradient, with the same structure as the weights
    :return: ``(new_state, new_weights)``
    """
    theta = weights.to_vector()
    g = grad.to_vector()
    if state is None:
        state = AdamState.zeros(theta.shape[0])
    t = state.t + 1
    m = beta1 * state.m + (1.0 - beta1) * g
    v = beta2 * state.v + (1.0 - beta2) * (g * g)
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    theta = theta - lr * m_hat / (np.sqrt(v_hat) + eps)
    return AdamState(m, v, t), weights.from_vector(theta)


class TrainingHistory(object):
    """
    The per-epoch training log.
    """

    columns = ['epoch', 'train_loss', 'val_loss', 'val_avg_cost',
               'val_mean_rho']

    def __init__(self):
        self.rows = []

    def append(self, epoch, train_loss, val_loss, val_avg_cost,
               val_mean_rho):
        self.rows.append((int(epoch), float(train_loss), float(val_loss),
                          float(val_avg_cost), float(val_mean_rho)))

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)


def write_training_log(path, history):
    """
    Writes a training history as CSV with the columns ``epoch, train_loss,
    val_loss, val_avg_cost, val_mean_rho``.
    """
    with open(path, 'w', newline='') as out:
        writer = csv.writer(out)
        writer.writerow(TrainingHistory.columns)
        for row in history:
            writer.writerow([row[0]] + [repr(v) for v in row[1:]])


def _safe_rho(predictions, oracle):
    if oracle is None or oracle.cost <= 0:
        return float('nan')
    return prediction_error_rho(predictions, oracle)


def _usable(samples, label):
    keep = usable_cost_mask([s.oracle.cost for s in samples])
    kept = [s for s, k in zip(samples, keep) if k]
    if len(kept) < len(samples):
        logger.warning("excluding %i of %i %s samples whose optimal cost is "
                       "near zero", len(samples) - len(kept), len(samples),
                       label)
    return kept


def _run_training(samples, model, config, loss_and_grad, monitor,
                  validation, history):
    if not samples:
        raise ValueError("Cannot train on an empty dataset.")
    samples = _usable(samples, 'training')
    if not samples:
        raise ZeroOptimalCost("every training sample has a near zero "
                              "optimal cost")
    if validation:
        validation = _usable(validation, 'validation')
    arch = config.architecture(samples[0].instance)
    weights = init_weights(arch, config.seed)
    rng = np.random.default_rng(config.seed)
    state = None
    watched = validation if validation else samples

    def evaluate(w, epoch):
        losses, costs, rhos = [], [], []
        for s in watched:
            loss, trace = monitor(w, s)
            losses.append(loss)
            costs.append(trace.total_cost())
            rhos.append(_safe_rho(trace.predictions, s.oracle))
        value = float(np.mean(losses))
        if not np.isfinite(value):
            raise DivergenceError("monitored loss is not finite", epoch)
        return value, float(np.mean(costs)), float(np.nanmean(rhos))

    best_loss, _, _ = evaluate(weights, 0)
    best = weights.copy()
    since_best = 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(len(samples))
        batch_losses = []
        for start in range(0, len(samples), config.batch_size):
            batch = [samples[i] for i in
                     order[start:start + config.batch_size]]
            total = np.zeros_like(weights.to_vector())
            for s in batch:
                try:
                    loss, _, grad = loss_and_grad(weights, s)
                except DivergenceError as err:
                    raise DivergenceError(str(err), epoch)
                if not np.isfinite(loss):
                    raise DivergenceError("training loss is not finite on "
                                          "instance %r" % s.instance.id,
                                          epoch)
                batch_losses.append(loss)
                total += grad.to_vector()
            mean_grad = weights.from_vector(total / len(batch))
            state, weights = adam_step(state, weights, mean_grad,
                                       config.learning_rate, config.beta1,
                                       config.beta2, config.eps)
            if not weights.is_finite():
                raise DivergenceError("weights are not finite", epoch)
        train_loss = float(np.mean(batch_losses))
        val_loss, val_cost, val_rho = evaluate(weights, epoch)
        if history is not None:
            history.append(epoch, train_loss, val_loss, val_cost, val_rho)
        logger.info("epoch %i: train_loss=%.6f val_loss=%.6f "
                    "val_avg_cost=%.6f val_mean_rho=%.6f", epoch, train_loss,
                    val_loss, val_cost, val_rho)
        if val_loss < best_loss:
            best_loss = val_loss
            best = weights.copy()
            since_best = 0
        else:
            since_best += 1
            if config.patience is not None and since_best >= config.patience:
                logger.info("early stopping after epoch %i", epoch)
                break
    return best


def train_ecl2o(samples, model, config, validation=None, history=None,
                bounds=None):
    """
    Trains the ML-based optimizer through the MLA-ROBD calibrator with
    mini-batch Adam on ``mu * prediction loss + (1 - mu) * cost``.

    :param samples: training samples with precomputed oracles
    :type samples: [TrainingSample, ...]
    :param model: the cost model
    :param config: the hyperparameters
    :type config: TrainConfig
    :param validation: optional held-out samples used to select the best
        weights; the training samples are used when omitted
    :param history: an optional :class:`TrainingHistory` to fill
    :return: the weights with the lowest monitored loss
    :rtype: :class:`PolicyWeights <expert_calibration.mlopt.PolicyWeights>`
    :raises DivergenceError: if the loss becomes non-finite
    """
    params = config.calibrator_params(model)
    logger.info("training EC-L2O with mu=%g theta=%g (%r) on %i samples",
                config.mu, config.theta, params, len(samples))

    def loss_and_grad(w, s):
        return loss_and_grad_episode(w, s.instance, model, params, config.mu,
                                     config.rho_bar, s.oracle, bounds)

    def monitor(w, s):
        return episode_loss(w, s.instance, model, params, config.mu,
                            config.rho_bar, s.oracle, bounds)

    return _run_training(samples, model, config, loss_and_grad, monitor,
                         validation, history)


def train_pureml(samples, model, config, validation=None, history=None):
    """
    Trains the standalone ML-based optimizer whose predictions are played
    directly, on ``kappa * cost / oracle cost + (1 - kappa) * cost``.

    :type config: PureMLConfig
    :rtype: :class:`PolicyWeights <expert_calibration.mlopt.PolicyWeights>`
    """
    logger.info("training PureML with kappa=%g on %i samples", config.kappa,
                len(samples))

    def loss_and_grad(w, s):
        return loss_and_grad_pureml_episode(w, s.instance, model,
                                            config.kappa, s.oracle)

    def monitor(w, s):
        return pureml_episode_loss(w, s.instance, model, config.kappa,
                                   s.oracle)

    return _run_training(samples, model, config, loss_and_grad, monitor,
                         validation, history)

import numpy as np
import pytest

from expert_calibration.calibrator import CalibratorParams
from expert_calibration.calibrator import MLAROBD
from expert_calibration.core import ProblemInstance
from expert_calibration.core import ZeroOptimalCost
from expert_calibration.costmodel import CostModel
from expert_calibration.mlopt import forward
from expert_calibration.mlopt import init_weights
from expert_calibration.mlopt import NetArchitecture
from expert_calibration.oracle import offline_optimal
from expert_calibration.oracle import prediction_error_rho
from expert_calibration.trainer import AdamState
from expert_calibration.trainer import adam_step
from expert_calibration.trainer import episode_loss
from expert_calibration.trainer import grad_episode
from expert_calibration.trainer import loss_and_grad_episode
from expert_calibration.trainer import loss_and_grad_pureml_episode
from expert_calibration.trainer import prediction_loss
from expert_calibration.trainer import prepare_samples
from expert_calibration.trainer import pureml_episode_loss
from expert_calibration.trainer import PureMLConfig
from expert_calibration.trainer import train_ecl2o
from expert_calibration.trainer import train_pureml
from expert_calibration.trainer import TrainConfig
from expert_calibration.trainer import TrainingHistory
from expert_calibration.trainer import write_training_log


def zero_network():
    return init_weights(NetArchitecture(2, 1, hidden=())).zeros_like()


def small_dataset(n=4, T=5, seed=0):
    rng = np.random.default_rng(seed)
    return [ProblemInstance(0.0, rng.uniform(0.0, 2.0, T), id='s%i' % i)
            for i in range(n)]


def numeric_gradient(loss, weights, h=1e-6):
    vec = weights.to_vector()
    out = np.empty_like(vec)
    for i in range(vec.shape[0]):
        e = np.zeros_like(vec)
        e[i] = h
        out[i] = (loss(weights.from_vector(vec + e)) -
                  loss(weights.from_vector(vec - e))) / (2 * h)
    return out


def test_single_step_greedy_loss():
    model = CostModel.quadratic(5.0)
    inst = ProblemInstance(0.0, [1.0])
    oracle = offline_optimal(inst, model)
    loss, trace = episode_loss(zero_network(), inst, model,
                               CalibratorParams(1.0, 0.0, 0.0), 0.0, 0.1,
                               oracle)
    assert float(trace.actions[0, 0]) == pytest.approx(1 / 11)
    assert loss == pytest.approx(55 / 121)
    assert loss == pytest.approx(0.45455, abs=1e-5)


def test_single_step_follow_the_prediction_loss():
    model = CostModel.quadratic(5.0)
    inst = ProblemInstance(0.0, [1.0])
    oracle = offline_optimal(inst, model)
    loss, trace = episode_loss(zero_network(), inst, model,
                               CalibratorParams(1.0, 0.0, 1.0), 0.0, 0.1,
                               oracle)
    assert float(trace.actions[0, 0]) == pytest.approx(1 / 21)
    assert loss == pytest.approx(205 / 441)


def test_prediction_loss_is_relu():
    model = CostModel.quadratic(5.0)
    oracle = offline_optimal(ProblemInstance(0.0, [1.0, 2.0]), model)
    assert prediction_loss(oracle.actions, oracle, 0.1) == 0.0
    shifted = oracle.actions + 1.0
    rho = 2.0 / oracle.cost
    assert prediction_loss(shifted, oracle, 0.1) == pytest.approx(rho - 0.1)


def kink_free_weights(arch, inst, model, params, oracle, margin=1e-4):
    # finite differences are only valid away from relu kinks
    for seed in range(100):
        weights = init_weights(arch, seed=seed)
        trace = episode_loss(weights, inst, model, params, 0.0, 0.0,
                             oracle)[1]
        prev = np.vstack([inst.x0, trace.actions[:-1]])
        smallest = min(float(np.min(np.abs(z)))
                       for y, x in zip(inst.contexts, prev)
                       for z in forward(weights, y, x)[1].pre_activations)
        if smallest > margin:
            return weights
    raise AssertionError("every initialization is close to a relu kink")


@pytest.mark.parametrize('mu,rho_bar', [(0.0, 0.1), (0.6, 0.0), (1.0, 0.0)])
def test_ecl2o_gradient_matches_finite_differences(mu, rho_bar):
    model = CostModel.quadratic(5.0)
    inst = small_dataset(n=1, T=5, seed=3)[0]
    oracle = offline_optimal(inst, model)
    params = CalibratorParams.from_theta(model, 0.5)
    arch = NetArchitecture(2, 1, hidden=(10, 10, 10))
    weights = kink_free_weights(arch, inst, model, params, oracle)
    loss, _, grad = loss_and_grad_episode(weights, inst, model, params, mu,
                                          rho_bar, oracle)
    assert loss == pytest.approx(episode_loss(weights, inst, model, params,
                                              mu, rho_bar, oracle)[0])
    numeric = numeric_gradient(
        lambda w: episode_loss(w, inst, model, params, mu, rho_bar,
                               oracle)[0], weights)
    assert grad.to_vector() == pytest.approx(numeric, rel=1e-4, abs=1e-6)


@pytest.mark.parametrize('kappa', [0.0, 0.5])
def test_pureml_gradient_matches_finite_differences(kappa):
    model = CostModel.quadratic(5.0)
    inst = small_dataset(n=1, T=4, seed=4)[0]
    oracle = offline_optimal(inst, model)
    weights = init_weights(NetArchitecture(2, 1, hidden=(4,)), seed=6)
    loss, _, grad = loss_and_grad_pureml_episode(weights, inst, model, kappa,
                                                 oracle)
    assert loss == pytest.approx(pureml_episode_loss(weights, inst, model,
                                                     kappa, oracle)[0])
    numeric = numeric_gradient(
        lambda w: pureml_episode_loss(w, inst, model, kappa, oracle)[0],
        weights)
    assert grad.to_vector() == pytest.approx(numeric, rel=1e-4, abs=1e-6)


def test_untrusting_calibrator_has_zero_gradient():
    model = CostModel.quadratic(5.0)
    inst = small_dataset(n=1, T=3)[0]
    oracle = offline_optimal(inst, model)
    weights = init_weights(NetArchitecture(2, 1, hidden=(4,)), seed=1)
    grad = grad_episode(weights, inst, model, CalibratorParams.robd(model),
                        0.0, 0.1, oracle)
    assert not np.any(grad.to_vector())


def test_adam_first_step():
    weights = init_weights(NetArchitecture(2, 1, hidden=()), seed=0)
    grad = weights.from_vector(np.ones_like(weights.to_vector()))
    state, updated = adam_step(None, weights, grad, lr=0.1)
    assert state.t == 1
    assert updated.to_vector() - weights.to_vector() == \
        pytest.approx(-0.1 * np.ones(3), rel=1e-6)


def test_adam_zero_gradient_keeps_weights():
    weights = init_weights(NetArchitecture(2, 1, hidden=(3,)), seed=0)
    state = AdamState.zeros(weights.to_vector().shape[0])
    state, updated = adam_step(state, weights, weights.zeros_like())
    assert np.array_equal(updated.to_vector(), weights.to_vector())


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(mu=1.5)
    with pytest.raises(ValueError):
        PureMLConfig(kappa=-0.1)
    with pytest.raises(ValueError):
        TrainConfig.from_dict({'epochs': 1, 'learning_rte': 0.1})
    config = TrainConfig.from_dict({'epochs': 3, 'hidden': [5, 5]})
    assert config.hidden == (5, 5)
    assert config.to_dict()['hidden'] == [5, 5]


def test_training_is_deterministic():
    model = CostModel.quadratic(5.0)
    samples = prepare_samples(small_dataset(), model)
    config = TrainConfig(epochs=2, batch_size=2, learning_rate=0.01,
                         hidden=(3,), seed=7)
    a = train_ecl2o(samples, model, config)
    b = train_ecl2o(samples, model, config)
    assert np.array_equal(a.to_vector(), b.to_vector())


def test_training_without_trust_returns_initial_weights():
    model = CostModel.quadratic(5.0)
    samples = prepare_samples(small_dataset(), model)
    config = TrainConfig(mu=0.0, theta=0.0, epochs=2, batch_size=2,
                         hidden=(3,), seed=1)
    trained = train_ecl2o(samples, model, config)
    initial = init_weights(config.architecture(samples[0].instance), 1)
    assert np.array_equal(trained.to_vector(), initial.to_vector())


def test_training_history_and_log(tmp_path):
    model = CostModel.quadratic(5.0)
    samples = prepare_samples(small_dataset(n=3), model)
    validation = prepare_samples(small_dataset(n=2, seed=9), model)
    history = TrainingHistory()
    config = PureMLConfig(epochs=3, batch_size=2, learning_rate=0.01,
                          hidden=(3,))
    weights = train_pureml(samples, model, config, validation=validation,
                           history=history)
    assert weights.is_finite()
    assert [row[0] for row in history] == [1, 2, 3]
    path = tmp_path / 'log.csv'
    write_training_log(str(path), history)
    lines = path.read_text().splitlines()
    assert lines[0] == 'epoch,train_loss,val_loss,val_avg_cost,val_mean_rho'
    assert len(lines) == 4


def test_training_needs_samples():
    with pytest.raises(ValueError):
        train_ecl2o([], CostModel.quadratic(), TrainConfig(epochs=1))


def test_training_skips_zero_cost_days(caplog):
    model = CostModel.quadratic(5.0)
    flat = ProblemInstance(0.0, np.zeros(5), id='flat')
    train = prepare_samples(small_dataset(n=3) + [flat], model)
    val = prepare_samples(small_dataset(n=2, seed=1) + [flat], model)
    assert train[-1].oracle.cost == 0.0
    config = TrainConfig(mu=0.6, epochs=2, batch_size=2, hidden=(4,))
    with caplog.at_level('WARNING', logger='expert_calibration.trainer'):
        weights = train_ecl2o(train, model, config, val)
    assert weights.is_finite()
    assert 'excluding 1 of 4 training samples' in caplog.text
    assert 'excluding 1 of 3 validation samples' in caplog.text
    pureml = train_pureml(train, model, PureMLConfig(kappa=0.5, epochs=2,
                                                     batch_size=2,
                                                     hidden=(4,)), val)
    assert pureml.is_finite()
    with pytest.raises(ZeroOptimalCost):
        train_ecl2o(prepare_samples([flat], model), model, config)


def overfit_config(cls, **kwargs):
    return cls(epochs=3000, batch_size=1, learning_rate=0.02, hidden=(),
               **kwargs)


def test_loss_is_linear_in_mu():
    model = CostModel.quadratic(5.0)
    inst = small_dataset(n=1, T=6, seed=2)[0]
    oracle = offline_optimal(inst, model)
    params = CalibratorParams.from_theta(model, 0.5)
    weights = init_weights(NetArchitecture(2, 1, hidden=(5,)), seed=2)
    losses = [episode_loss(weights, inst, model, params, mu, 0.0, oracle)[0]
              for mu in [0.0, 0.25, 0.5, 1.0]]
    for mu, loss in zip([0.25, 0.5], losses[1:3]):
        assert loss == pytest.approx((1 - mu) * losses[0] + mu * losses[3])


def test_cost_training_beats_robd_on_one_day():
    model = CostModel.quadratic(5.0)
    samples = prepare_samples(small_dataset(n=1, T=3, seed=5), model)
    inst, oracle = samples[0].instance, samples[0].oracle
    config = overfit_config(TrainConfig, mu=0.0, theta=0.5)
    params = config.calibrator_params(model)
    initial = init_weights(config.architecture(inst), config.seed)
    weights = train_ecl2o(samples, model, config)
    before = episode_loss(initial, inst, model, params, 0.0, 0.0, oracle)[0]
    after = episode_loss(weights, inst, model, params, 0.0, 0.0, oracle)[0]
    robd = MLAROBD(model, CalibratorParams.robd(model)).run(inst)
    assert after <= before
    assert after <= robd.total_cost()
    assert after >= oracle.cost - 1e-9


def test_pureml_training_approaches_the_oracle():
    model = CostModel.quadratic(5.0)
    samples = prepare_samples(small_dataset(n=1, T=3, seed=5), model)
    weights = train_pureml(samples, model, overfit_config(PureMLConfig))
    cost = pureml_episode_loss(weights, samples[0].instance, model, 0.0,
                               samples[0].oracle)[0]
    assert cost <= 1.05 * samples[0].oracle.cost


def test_prediction_training_meets_the_threshold():
    model = CostModel.quadratic(5.0)
    samples = prepare_samples(small_dataset(n=1, T=3, seed=5), model)
    inst, oracle = samples[0].instance, samples[0].oracle
    config = overfit_config(TrainConfig, mu=1.0, rho_bar=0.2, theta=0.5)
    weights = train_ecl2o(samples, model, config)
    trace = episode_loss(weights, inst, model,
                         config.calibrator_params(model), 1.0, 0.2,
                         oracle)[1]
    assert prediction_error_rho(trace.predictions, oracle) <= 0.2

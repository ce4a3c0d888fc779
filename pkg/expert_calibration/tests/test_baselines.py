import numpy as np
import pytest

from expert_calibration.baselines import EXPERT
from expert_calibration.baselines import ftp_params
from expert_calibration.baselines import greedy_params
from expert_calibration.baselines import ML
from expert_calibration.baselines import robd_params
from expert_calibration.baselines import run_switch
from expert_calibration.baselines import switch_step
from expert_calibration.baselines import SwitchState
from expert_calibration.calibrator import MLAROBD
from expert_calibration.core import ProblemInstance
from expert_calibration.costmodel import CostModel
from expert_calibration.mlopt import forward
from expert_calibration.mlopt import init_weights
from expert_calibration.mlopt import NetArchitecture


def network(seed=0):
    return init_weights(NetArchitecture(2, 1, hidden=(4,)), seed=seed)


def test_presets():
    model = CostModel.quadratic(5.0)
    assert greedy_params().to_dict() == {'lambda1': 1.0, 'lambda2': 0.0,
                                         'lambda3': 0.0}
    assert ftp_params().theta == 1.0
    robd = robd_params(model)
    assert robd.lambda3 == 0.0
    assert robd.lambda2 == pytest.approx(0.270156, abs=1e-6)


def test_state_validation():
    with pytest.raises(ValueError):
        SwitchState('pureml')
    with pytest.raises(ValueError):
        SwitchState(gamma=1.0)
    with pytest.raises(ValueError):
        SwitchState(gamma_growth=0.5)


def test_huge_threshold_never_switches_from_ml():
    model = CostModel.quadratic(5.0)
    weights = network(seed=2)
    inst = ProblemInstance(0.0, [1.0, 0.2, 1.5, 0.7])
    trace, state = run_switch(inst, model, weights, robd_params(model),
                              gamma=1e12)
    assert state.n_switches == 0
    assert state.active == ML
    x_prev = inst.x0
    for t, y in enumerate(inst.contexts):
        x_prev = forward(weights, y, x_prev)[0]
        assert trace.actions[t] == pytest.approx(x_prev)


def test_huge_threshold_never_switches_from_expert():
    model = CostModel.quadratic(5.0)
    inst = ProblemInstance(0.0, [1.0, 0.2, 1.5, 0.7])
    params = robd_params(model)
    trace, state = run_switch(inst, model, network(), params, gamma=1e12,
                              initial=EXPERT)
    robd = MLAROBD(model, params).run(inst)
    assert state.n_switches == 0
    assert trace.policy == 'switch'
    assert trace.actions == pytest.approx(robd.actions)
    assert trace.total_cost() == pytest.approx(robd.total_cost())


def test_bad_ml_policy_hands_over_to_expert():
    model = CostModel.quadratic(5.0)
    zero = network().zeros_like()
    inst = ProblemInstance(5.0, [5.0, 5.0, 5.0])
    trace, state = run_switch(inst, model, zero, robd_params(model))
    assert trace.actions[0, 0] == 0.0
    assert state.n_switches == 1
    assert state.active == EXPERT
    assert state.gamma == 3.0
    assert trace.actions[1, 0] > 0.0


def test_switch_step_leaves_input_state_alone():
    model = CostModel.quadratic(5.0)
    state = SwitchState()
    x, new_state = switch_step(state, model, np.array([5.0]),
                               np.array([5.0]), network().zeros_like(),
                               robd_params(model))
    assert state.active == ML and state.n_switches == 0
    assert state.cum_cost_active == 0.0
    assert new_state.n_switches == 1
    assert x.tolist() == [0.0]

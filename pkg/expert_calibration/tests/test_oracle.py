import itertools

import numpy as np
import pytest
from scipy.optimize import minimize

from expert_calibration.core import ProblemInstance
from expert_calibration.core import ZeroOptimalCost
from expert_calibration.costmodel import CostModel
from expert_calibration.costmodel import CustomHitting
from expert_calibration.costmodel import SwitchingCost
from expert_calibration.oracle import l_constrained_optimal
from expert_calibration.oracle import l_rho
from expert_calibration.oracle import offline_optimal
from expert_calibration.oracle import OracleSolution
from expert_calibration.oracle import prediction_error_rho
from expert_calibration.oracle import trajectory_gradient
from expert_calibration.oracle import usable_cost_mask


def trajectory_cost(model, instance, flat):
    actions = flat.reshape(instance.T, model.dim)
    hitting, switching = model.episode_costs(instance.x0, instance.contexts,
                                             actions)
    return float(np.sum(hitting) + np.sum(switching))


def test_two_step_example():
    sol = offline_optimal(ProblemInstance(0.0, [1.0, 1.0]),
                          CostModel.quadratic(0.5))
    assert sol.actions[:, 0] == pytest.approx([0.6, 0.8])
    assert sol.cost == pytest.approx(0.3)
    assert sol.grad_norm < 1e-12


def test_no_grid_point_beats_the_oracle():
    model = CostModel.quadratic(5.0)
    inst = ProblemInstance(0.2, [1.0, -0.5, 2.0])
    sol = offline_optimal(inst, model)
    grid = np.linspace(-1.0, 2.5, 21)
    for point in itertools.product(grid, repeat=3):
        assert trajectory_cost(model, inst, np.array(point)) >= \
            sol.cost - 1e-12


def test_oracle_matches_generic_minimizer():
    rng = np.random.default_rng(2)
    A = rng.normal(size=(2, 2))
    model = CostModel(CostModel.quadratic().hitting,
                      SwitchingCost(A @ A.T + 0.5 * np.eye(2)))
    inst = ProblemInstance(rng.normal(size=2), rng.normal(size=(6, 2)))
    sol = offline_optimal(inst, model)
    ref = minimize(lambda z: trajectory_cost(model, inst, z),
                   np.zeros(12), method='BFGS', options={'gtol': 1e-10})
    assert sol.cost == pytest.approx(ref.fun, abs=1e-8)
    assert sol.actions.reshape(-1) == pytest.approx(ref.x, abs=1e-4)
    assert np.linalg.norm(trajectory_gradient(model, inst,
                                              sol.actions)) < 1e-9


def test_oracle_with_custom_hitting_cost():
    hitting = CustomHitting(
        lambda x, y: 0.5 * float((x - y) @ (x - y)) + float(np.sum(x ** 4)),
        lambda x, y: x - y + 4 * x ** 3,
        lambda x, y: np.eye(x.shape[0]) + np.diag(12 * x ** 2), m=1.0)
    model = CostModel(hitting, SwitchingCost(2.0))
    inst = ProblemInstance(0.0, [1.0, 1.5, 0.5, 2.0])
    sol = offline_optimal(inst, model)
    ref = minimize(lambda z: trajectory_cost(model, inst, z), np.zeros(4),
                   method='BFGS', options={'gtol': 1e-10})
    assert sol.cost == pytest.approx(ref.fun, abs=1e-8)
    assert sol.grad_norm <= 1e-8


def test_oracle_trace_has_ratio_one():
    model = CostModel.quadratic(5.0)
    sol = offline_optimal(ProblemInstance(0.0, [1.0, 3.0, 2.0]), model)
    trace = sol.to_trace()
    assert trace.policy == 'oracle'
    assert trace.total_cost() / sol.cost == 1.0
    assert np.array_equal(trace.reference, sol.actions)


def test_l_constrained_loose_budget_is_unconstrained():
    model = CostModel.quadratic(5.0)
    inst = ProblemInstance(0.0, [1.0, 0.0, 1.0])
    free = offline_optimal(inst, model)
    sol = l_constrained_optimal(inst, model, float('inf'))
    assert sol.dual_mu == 0.0
    assert np.array_equal(sol.actions, free.actions)
    sol = l_constrained_optimal(inst, model, free.switching_total + 1.0)
    assert sol.cost == pytest.approx(free.cost)


def test_l_constrained_zero_budget_pins_actions():
    model = CostModel.quadratic(5.0)
    inst = ProblemInstance(0.5, [1.0, 0.0, 1.0])
    sol = l_constrained_optimal(inst, model, 0.0)
    assert sol.dual_mu == float('inf')
    assert sol.actions[:, 0].tolist() == [0.5, 0.5, 0.5]
    assert sol.switching_total == 0.0
    assert sol.cost == pytest.approx(0.375)


def test_l_constrained_tight_budget():
    model = CostModel.quadratic(5.0)
    inst = ProblemInstance(0.0, [1.0, 0.0, 1.0, 1.0])
    free = offline_optimal(inst, model)
    L = 0.5 * free.switching_total
    sol = l_constrained_optimal(inst, model, L)
    assert sol.dual_mu > 0
    assert sol.switching_total == pytest.approx(L, abs=1e-8)
    assert sol.cost >= free.cost
    constraint = {'type': 'ineq',
                  'fun': lambda z: L - model.episode_costs(
                      inst.x0, inst.contexts, z.reshape(-1, 1))[1].sum()}
    ref = minimize(lambda z: trajectory_cost(model, inst, z), np.zeros(4),
                   method='SLSQP', constraints=[constraint],
                   options={'ftol': 1e-12, 'maxiter': 500})
    assert sol.cost == pytest.approx(ref.fun, abs=1e-5)


def test_l_constrained_rejects_negative_budget():
    with pytest.raises(ValueError):
        l_constrained_optimal(ProblemInstance(0.0, [1.0]),
                              CostModel.quadratic(), -1.0)


def test_prediction_error_rho():
    sol = OracleSolution([[0.0], [1.0]], 2.0, 0.0, [1.0, 0.0], [0.5, 0.5])
    assert prediction_error_rho(sol.actions, sol) == 0.0
    assert prediction_error_rho([[1.0], [0.0]], sol) == 1.0
    with pytest.raises(ZeroOptimalCost):
        prediction_error_rho([[0.0], [1.0]], sol, floor=2.0)


def test_zero_cost_instance_has_no_rho():
    model = CostModel.quadratic(5.0)
    sol = offline_optimal(ProblemInstance(0.0, [0.0, 0.0]), model)
    assert sol.cost == 0.0
    with pytest.raises(ZeroOptimalCost):
        prediction_error_rho([[1.0], [1.0]], sol)


def test_l_rho():
    model = CostModel.quadratic(5.0)
    inst = ProblemInstance(0.0, [1.0, 1.0])
    sol = l_constrained_optimal(inst, model, 0.0)
    assert l_rho([[1.0], [2.0]], sol) == 5.0


def test_usable_cost_mask():
    assert usable_cost_mask([1.0, 0.0, 2.0]).tolist() == [True, False, True]
    assert usable_cost_mask([1.0, 1e-11, 1.0]).tolist() == \
        [True, False, True]
    assert usable_cost_mask([0.0, 0.0]).tolist() == [False, False]
    assert usable_cost_mask([]).tolist() == []

import numpy as np
import pytest

from expert_calibration.core import ConvergenceError
from expert_calibration.core import DimensionError
from expert_calibration.costmodel import check_strong_convexity
from expert_calibration.costmodel import check_switching_bounds
from expert_calibration.costmodel import CostModel
from expert_calibration.costmodel import CustomHitting
from expert_calibration.costmodel import eig_bounds
from expert_calibration.costmodel import hitting_cost
from expert_calibration.costmodel import hitting_grad
from expert_calibration.costmodel import newton_minimize
from expert_calibration.costmodel import QuadraticTracking
from expert_calibration.costmodel import switching_cost
from expert_calibration.costmodel import SwitchingCost


def random_spd(rng, d):
    A = rng.normal(size=(d, d))
    return A @ A.T + 0.5 * np.eye(d)


def test_switching_cost_values():
    model = CostModel.quadratic(5.0)
    assert switching_cost(model, [0.3], [0.3]) == 0.0
    assert switching_cost(model, [1.0], [0.0]) == 5.0
    assert model.alpha == 10.0 and model.beta == 10.0


def test_switching_cost_is_positive_definite():
    rng = np.random.default_rng(1)
    c = SwitchingCost(random_spd(rng, 3))
    for _ in range(100):
        x, x_prev = rng.normal(size=3), rng.normal(size=3)
        assert c.value(x, x_prev) > 0
        assert c.value(x, x) == 0


def test_quadratic_hitting_cost():
    model = CostModel.quadratic(5.0)
    assert hitting_cost(model, [1.0], [1.0]) == 0.0
    assert list(hitting_grad(model, [1.0], [1.0])) == [0.0]
    assert hitting_cost(model, [2.0], [1.0]) == 0.5
    assert list(hitting_grad(model, [2.0], [1.0])) == [1.0]
    assert model.m == 1.0


def test_eig_bounds():
    assert eig_bounds([[5.0]]) == (10.0, 10.0)
    assert eig_bounds(np.diag([1.0, 2.0])) == (2.0, 4.0)


def test_eig_bounds_match_characteristic_polynomial():
    rng = np.random.default_rng(7)
    for _ in range(20):
        Q = random_spd(rng, 3)
        roots = np.sort(np.real(np.roots(np.poly(Q))))
        alpha, beta = eig_bounds(Q)
        assert alpha == pytest.approx(2 * roots[0], abs=1e-6)
        assert beta == pytest.approx(2 * roots[-1], abs=1e-6)


def test_eig_bounds_rejects_invalid_matrices():
    with pytest.raises(ValueError):
        eig_bounds([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(ValueError):
        eig_bounds([[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(DimensionError):
        eig_bounds([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


def test_dimension_mismatch_is_rejected():
    model = CostModel.quadratic(5.0, dim=2)
    with pytest.raises(DimensionError):
        model.switching_cost([1.0], [0.0, 0.0])
    with pytest.raises(DimensionError):
        model.hitting_cost([1.0, 0.0], [1.0])


def test_config_round_trip():
    model = CostModel.from_config({'hitting': {'kind': 'quadratic_tracking'},
                                   'switching': {'q_scalar': 5.0}})
    assert model.to_config() == {'hitting': {'kind': 'quadratic_tracking'},
                                 'switching': {'q_scalar': 5.0, 'dim': 1}}
    matrix = CostModel.from_config(
        {'switching': {'q_matrix': [[2.0, 0.5], [0.5, 1.0]]}})
    assert matrix.dim == 2
    assert CostModel.from_config(matrix.to_config()).Q.tolist() == \
        [[2.0, 0.5], [0.5, 1.0]]
    with pytest.raises(ValueError):
        CostModel.from_config({'hitting': {'kind': 'cubic'}})


def test_episode_costs():
    model = CostModel.quadratic(0.5)
    hitting, switching = model.episode_costs([0.0], [1.0, 1.0],
                                             [[0.6], [0.8]])
    assert hitting == pytest.approx([0.08, 0.02])
    assert switching == pytest.approx([0.18, 0.02])
    assert float(np.sum(hitting) + np.sum(switching)) == pytest.approx(0.3)


def test_custom_hitting_minimizer_uses_newton():
    f = CustomHitting(lambda x, y: float((x - y) @ (x - y)),
                      lambda x, y: 2 * (x - y),
                      lambda x, y: 2 * np.eye(x.shape[0]), m=2.0)
    assert f.minimizer(np.array([3.0]), 1) == pytest.approx([3.0])


def test_newton_minimizes_random_quadratic():
    rng = np.random.default_rng(5)
    H = random_spd(rng, 3)
    b = rng.normal(size=3)
    x = newton_minimize(lambda x: 0.5 * x @ H @ x - b @ x,
                        lambda x: H @ x - b, lambda x: H, np.zeros(3))
    assert x == pytest.approx(np.linalg.solve(H, b), abs=1e-8)


def test_newton_reports_non_convergence():
    with pytest.raises(ConvergenceError):
        newton_minimize(lambda x: float(np.sum(np.exp(x))),
                        lambda x: np.exp(x),
                        lambda x: np.diag(np.exp(x)), np.zeros(1),
                        max_iter=3)


def test_declared_constants_pass_spot_checks():
    assert check_strong_convexity(QuadraticTracking(), 2, trials=500)
    assert check_switching_bounds(SwitchingCost(5.0, dim=3), trials=500)


def test_overstated_strong_convexity_is_caught():
    f = CustomHitting(lambda x, y: 0.5 * float((x - y) @ (x - y)),
                      lambda x, y: x - y,
                      lambda x, y: np.eye(x.shape[0]), m=3.0)
    assert not check_strong_convexity(f, 1, trials=200)


def test_custom_cost_model_checks_declared_constants():
    def make(m):
        return CustomHitting(lambda x, y: 0.5 * float((x - y) @ (x - y)),
                             lambda x, y: x - y,
                             lambda x, y: np.eye(x.shape[0]), m=m)
    model = CostModel(make(1.0), SwitchingCost(5.0))
    assert model.m == 1.0
    with pytest.raises(ValueError):
        CostModel(make(3.0), SwitchingCost(5.0))
    unchecked = CostModel(make(3.0), SwitchingCost(5.0), check_trials=0)
    assert unchecked.m == 3.0

import numpy as np
import pytest

from expert_calibration.core import CalibrationError
from expert_calibration.core import ProblemInstance
from expert_calibration.costmodel import CostModel
from expert_calibration.evaluation import evaluate
from expert_calibration.evaluation import l_constrained_regret
from expert_calibration.evaluation import make_policy
from expert_calibration.evaluation import metric_columns
from expert_calibration.evaluation import pareto_boundary
from expert_calibration.evaluation import policy_sweep
from expert_calibration.evaluation import run_policy
from expert_calibration.evaluation import SequencePredictor
from expert_calibration.evaluation import SWITCH_LABEL
from expert_calibration.evaluation import tradeoff_sweep
from expert_calibration.evaluation import write_instance_csv
from expert_calibration.evaluation import write_metrics_csv
from expert_calibration.mlopt import init_weights
from expert_calibration.mlopt import NetArchitecture
from expert_calibration.utils import nearest_rank


def dataset(n=8, T=6, seed=0):
    rng = np.random.default_rng(seed)
    return [ProblemInstance(0.0, rng.uniform(0.0, 2.0, T), id='test-%03i' % i)
            for i in range(n)]


def network(seed=0):
    return init_weights(NetArchitecture(2, 1, hidden=(5,)), seed=seed)


def test_oracle_has_unit_ratios():
    model = CostModel.quadratic(5.0)
    result = evaluate(make_policy('oracle', model), dataset(), model)
    assert result.policy == 'oracle'
    assert result.normalized_avg_cost == pytest.approx(1.0)
    assert result.empirical_cr == pytest.approx(1.0)
    assert result.excluded == 0
    assert result.n_instances == 8


def test_robd_respects_its_competitive_ratio():
    model = CostModel.quadratic(5.0)
    data = dataset(n=1000, T=8, seed=1)
    result = evaluate(make_policy('robd', model), data, model)
    assert 1.0 <= result.empirical_cr <= 3.70156
    assert result.normalized_avg_cost <= result.empirical_cr


def test_tails_are_nearest_rank():
    model = CostModel.quadratic(5.0)
    result = evaluate(make_policy('greedy', model), dataset(n=12), model,
                      percentiles=(50, 99))
    ratios = list(result.per_instance_ratios)
    assert result.tail_ratios[50] == nearest_rank(ratios, 50)
    assert result.tail_ratios[99] == max(ratios)
    assert result.tail_ratios[100] == result.empirical_cr == max(ratios)
    assert list(result.instance_ids) == ['test-%03i' % i for i in range(12)]


def test_zero_cost_instances_are_excluded():
    model = CostModel.quadratic(5.0)
    data = dataset(n=3) + [ProblemInstance(0.0, [0.0] * 6, id='flat')]
    result = evaluate(make_policy('robd', model), data, model)
    assert result.excluded == 1
    assert result.n_instances == 3
    assert 'flat' not in result.instance_ids
    with pytest.raises(CalibrationError):
        evaluate(make_policy('robd', model), data[-1:], model)
    with pytest.raises(ValueError):
        evaluate(make_policy('robd', model), [], model)


def test_continuous_testing_chains_initial_actions():
    model = CostModel.quadratic(5.0)
    data = dataset(n=4)
    oracle = evaluate(make_policy('oracle', model), data, model,
                      chain_x0=True)
    assert oracle.empirical_cr == pytest.approx(1.0)
    policy = make_policy('greedy', model)
    chained = evaluate(policy, data, model, chain_x0=True)
    first = run_policy(policy, data[0], model)
    second = run_policy(policy, data[1].with_x0(first.actions[-1]), model)
    assert chained.per_instance_ratios[0] == pytest.approx(
        evaluate(policy, data[:1], model).per_instance_ratios[0])
    separate = evaluate(policy, [data[1].with_x0(first.actions[-1])], model)
    assert chained.per_instance_ratios[1] == pytest.approx(
        separate.per_instance_ratios[0])
    assert second.total_cost() > 0


def test_parallel_evaluation_matches_sequential():
    model = CostModel.quadratic(5.0)
    policy = make_policy('ecl2o', model, weights=network(1))
    data = dataset(n=6)
    serial = evaluate(policy, data, model)
    parallel = evaluate(policy, data, model, jobs=2)
    assert parallel.per_instance_ratios == \
        pytest.approx(serial.per_instance_ratios)


def test_policy_names_and_requirements():
    model = CostModel.quadratic(5.0)
    w = network()
    assert make_policy('switch', model, weights=w).name == SWITCH_LABEL
    assert make_policy('pureml', model, weights=w).name == 'pureml'
    mlarobd = make_policy('mlarobd', model, weights=w)
    assert mlarobd.params.theta == pytest.approx(0.3)
    with pytest.raises(ValueError):
        make_policy('pureml', model)
    with pytest.raises(ValueError):
        make_policy('ftp', model)
    with pytest.raises(ValueError):
        make_policy('hindsight', model, weights=w)


def test_perfect_follow_the_prediction():
    model = CostModel.quadratic(5.0)
    inst = dataset(n=1)[0]
    trace = run_policy(make_policy('ftp', model, perfect=True), inst, model)
    assert trace.policy == 'ftp'
    assert np.array_equal(trace.predictions, trace.reference)


def test_sequence_predictor_runs_out():
    predict = SequencePredictor([[1.0]])
    assert predict([0.0], [0.0]).tolist() == [1.0]
    with pytest.raises(IndexError):
        predict([0.0], [0.0])


def test_every_policy_runs():
    model = CostModel.quadratic(5.0)
    inst = dataset(n=1)[0]
    for name in ['oracle', 'robd', 'greedy', 'mlarobd', 'pureml', 'ecl2o',
                 'switch']:
        policy = make_policy(name, model, weights=network())
        trace = run_policy(policy, inst, model)
        assert trace.T == inst.T
        assert trace.total_cost() > 0


def test_l_constrained_regret():
    model = CostModel.quadratic(5.0)
    inst = dataset(n=1)[0]
    oracle = run_policy(make_policy('oracle', model), inst, model)
    assert l_constrained_regret(oracle, inst, model, float('inf')) == \
        pytest.approx(0.0, abs=1e-12)
    robd = run_policy(make_policy('robd', model), inst, model)
    assert l_constrained_regret(robd, inst, model, 0.0) < \
        l_constrained_regret(robd, inst, model, float('inf'))


def test_metric_files(tmp_path):
    model = CostModel.quadratic(5.0)
    data = dataset(n=3)
    results = [evaluate(make_policy(name, model), data, model)
               for name in ['robd', 'greedy']]
    path = tmp_path / 'metrics.csv'
    write_metrics_csv(results, str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == ','.join(metric_columns())
    assert [line.split(',')[0] for line in lines[1:]] == ['robd', 'greedy']
    path = tmp_path / 'instances.csv'
    write_instance_csv(results[0], str(path))
    lines = path.read_text().splitlines()
    assert lines[0] == 'policy,instance_id,ratio'
    assert lines[1].startswith('robd,test-000,')
    assert len(lines) == 4


def test_tradeoff_sweep():
    model = CostModel.quadratic(5.0)
    data = dataset(n=4)
    rows = tradeoff_sweep(data, model, network(2), [0.0, 0.5, 1.0])
    assert [row[0] for row in rows] == [0.0, 0.5, 1.0]
    robd = evaluate(make_policy('robd', model), data, model)
    assert rows[0][1] == pytest.approx(robd.normalized_avg_cost)
    assert rows[0][2] == pytest.approx(robd.empirical_cr)


def test_policy_sweep_over_switch_thresholds():
    model = CostModel.quadratic(5.0)
    data = dataset(n=4)
    w = network(3)
    rows = policy_sweep(data, model,
                        lambda g: make_policy('switch', model, w, gamma=g),
                        [1.0, 4.0])
    assert [row[0] for row in rows] == [1.0, 4.0]
    direct = evaluate(make_policy('switch', model, w, gamma=4.0), data,
                      model)
    assert rows[1][1] == pytest.approx(direct.normalized_avg_cost)
    assert rows[1][2] == pytest.approx(direct.empirical_cr)


def test_pareto_boundary():
    rows = [(0.0, 1.5, 1.5), (0.5, 1.2, 2.0), (1.0, 1.3, 2.5),
            (2.0, 1.1, 3.0), (5.0, 1.2, 2.0)]
    assert pareto_boundary(rows) == [(2.0, 1.1, 3.0), (0.5, 1.2, 2.0),
                                     (0.0, 1.5, 1.5)]
    assert pareto_boundary([]) == []
    front = pareto_boundary(tradeoff_sweep(dataset(n=4),
                                           CostModel.quadratic(5.0),
                                           network(2), [0.0, 0.5, 2.0]))
    avgs = [row[1] for row in front]
    crs = [row[2] for row in front]
    assert avgs == sorted(avgs)
    assert crs == sorted(crs, reverse=True)

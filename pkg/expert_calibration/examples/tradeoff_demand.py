import matplotlib.pyplot as plt

from expert_calibration.costmodel import CostModel
from expert_calibration.data_files.generate_weather import generate_weather
from expert_calibration.demand import make_dataset
from expert_calibration.evaluation import evaluate
from expert_calibration.evaluation import make_policy
from expert_calibration.evaluation import pareto_boundary
from expert_calibration.evaluation import policy_sweep
from expert_calibration.evaluation import tradeoff_sweep
from expert_calibration.trainer import prepare_samples
from expert_calibration.trainer import PureMLConfig
from expert_calibration.trainer import train_ecl2o
from expert_calibration.trainer import train_pureml
from expert_calibration.trainer import TrainConfig


def run_demo(days=120, epochs=20, seed=0):
    model = CostModel.quadratic(5.0)
    records = generate_weather(days, seed=seed)
    train, val, test = make_dataset(records, split=(59, 31), seed=seed)
    train = prepare_samples(train, model)
    val = prepare_samples(val, model)

    def pureml(kappa):
        config = PureMLConfig(kappa=kappa, epochs=epochs, learning_rate=0.01,
                              seed=seed)
        return train_pureml(train, model, config, validation=val)

    def ecl2o(theta):
        def factory(mu):
            config = TrainConfig(mu=mu, theta=theta, epochs=epochs,
                                 learning_rate=0.01, seed=seed)
            weights = train_ecl2o(train, model, config, validation=val)
            return make_policy('ecl2o', model, weights, theta=theta)
        return factory

    weights = pureml(0.0)
    curves = {
        'MLA-ROBD (theta)': tradeoff_sweep(
            test, model, weights, [0.0, 0.1, 0.3, 0.5, 1.0, 2.0, 5.0]),
        'Switch (gamma)': policy_sweep(
            test, model,
            lambda g: make_policy('switch', model, weights, gamma=g),
            [1.0, 1.5, 2.0, 4.0, 8.0]),
        'PureML (kappa)': policy_sweep(
            test, model, lambda k: make_policy('pureml', model, pureml(k)),
            [0.25, 0.5, 0.75, 1.0]),
    }
    for theta in [0.4, 0.5]:
        curves['EC-L2O (mu, theta=%g)' % theta] = policy_sweep(
            test, model, ecl2o(theta), [0.0, 0.2, 0.6, 1.0])

    for (label, rows), style in zip(sorted(curves.items()),
                                    ['o-', 's-', '^-', 'v-', 'd-']):
        front = pareto_boundary(rows)
        plt.plot([r[1] for r in front], [r[2] for r in front], style,
                 label=label)
        for value, x, y in front:
            plt.annotate("%g" % value, (x, y), textcoords='offset points',
                         xytext=(4, 4))
    star = evaluate(make_policy('pureml', model, weights), test, model)
    plt.plot([star.normalized_avg_cost], [star.empirical_cr], 'k*',
             markersize=12, label='PureML-0')
    plt.title("Average Cost vs. Competitive Ratio")
    plt.xlabel("Normalized Average Cost")
    plt.ylabel("Empirical Competitive Ratio")
    plt.legend()
    plt.show()


if __name__ == "__main__":
    run_demo()

import matplotlib.pyplot as plt
import numpy as np

from expert_calibration.costmodel import CostModel
from expert_calibration.data_files.generate_weather import generate_weather
from expert_calibration.demand import AugmentConfig
from expert_calibration.demand import make_dataset
from expert_calibration.demand import shift_contexts
from expert_calibration.evaluation import evaluate
from expert_calibration.evaluation import make_policy
from expert_calibration.trainer import prepare_samples
from expert_calibration.trainer import PureMLConfig
from expert_calibration.trainer import train_ecl2o
from expert_calibration.trainer import train_pureml
from expert_calibration.trainer import TrainConfig


def run_demo(days=120, epochs=10, seed=0, shift=1.3):
    model = CostModel.quadratic(5.0)
    records = generate_weather(days, seed=seed)
    train, val, test = make_dataset(records, split=(59, 31),
                                    augment_cfg=AugmentConfig(n_train=200),
                                    seed=seed)
    train = prepare_samples(train, model)
    val = prepare_samples(val, model)

    ecl2o = train_ecl2o(train, model, TrainConfig(epochs=epochs, seed=seed,
                                                  learning_rate=0.01),
                        validation=val)
    pureml = train_pureml(train, model, PureMLConfig(epochs=epochs,
                                                     seed=seed,
                                                     learning_rate=0.01),
                          validation=val)

    names = ['robd', 'greedy', 'mlarobd', 'pureml', 'switch', 'ecl2o']
    shifted = shift_contexts(test, shift)
    plain, moved = [], []
    for name in names:
        weights = ecl2o if name == 'ecl2o' else pureml
        policy = make_policy(name, model, weights)
        plain.append(evaluate(policy, test, model, chain_x0=True))
        moved.append(evaluate(policy, shifted, model, chain_x0=True))

    x = np.arange(len(names))
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for ax, attr, title in ((ax1, 'normalized_avg_cost', "Average Cost"),
                            (ax2, 'empirical_cr', "Competitive Ratio")):
        ax.bar(x - 0.2, [getattr(r, attr) for r in plain], 0.4,
               label="test", color="green")
        ax.bar(x + 0.2, [getattr(r, attr) for r in moved], 0.4,
               label="test x%g" % shift, color="red")
        ax.set_xticks(x)
        ax.set_xticklabels(names, rotation=30)
        ax.set_title(title)
        ax.axhline(1.0, color='k', linewidth=0.5)
    ax1.legend(loc=2)
    plt.tight_layout()
    plt.show()


if __name__ == "__main__":
    run_demo()

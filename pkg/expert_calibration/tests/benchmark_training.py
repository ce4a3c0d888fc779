from timeit import timeit

from matplotlib import pyplot as plt
import matplotlib.patches as mpatches


def time(T, hidden, width):
    return timeit('grad_episode(w, inst, model, params, 0.6, 0.1, oracle)',
                  setup=('import numpy as np; '
                         'from expert_calibration.core import '
                         'ProblemInstance; '
                         'from expert_calibration.costmodel import '
                         'CostModel; '
                         'from expert_calibration.calibrator import '
                         'CalibratorParams; '
                         'from expert_calibration.mlopt import '
                         'NetArchitecture, init_weights; '
                         'from expert_calibration.oracle import '
                         'offline_optimal; '
                         'from expert_calibration.trainer import '
                         'grad_episode; '
                         'model = CostModel.quadratic(5.0); '
                         'inst = ProblemInstance(0.0, '
                         'np.random.default_rng(0).uniform(0, 2, %i)); '
                         'oracle = offline_optimal(inst, model); '
                         'params = CalibratorParams.from_theta(model, 0.5); '
                         'w = init_weights(NetArchitecture(2, 1, '
                         'hidden=(%i,) * %i))' % (T, width, hidden)),
                  number=10) / 10


if __name__ == "__main__":
    sizes = [6, 12, 24, 48, 96, 192]

    times = [time(T, 3, 10) for T in sizes]
    plt.plot(sizes, times, 'ro')
    plt.plot(sizes, times, 'r-')

    times = [time(T, 3, 50) for T in sizes]
    plt.plot(sizes, times, 'bo')
    plt.plot(sizes, times, 'b-')

    times = [time(T, 1, 10) for T in sizes]
    plt.plot(sizes, times, 'go')
    plt.plot(sizes, times, 'g-')

    red_patch = mpatches.Patch(color='red', label='3 x 10 hidden')
    blue_patch = mpatches.Patch(color='blue', label='3 x 50 hidden')
    green_patch = mpatches.Patch(color='green', label='1 x 10 hidden')
    plt.legend(handles=[red_patch, blue_patch, green_patch], loc=2)

    plt.xlabel('Episode length T')
    plt.ylabel('Seconds per episode gradient')
    plt.show()

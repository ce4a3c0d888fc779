import matplotlib.pyplot as plt
import numpy as np

from expert_calibration.bounds import bound_curves
from expert_calibration.bounds import crossing_rho


def run_demo(m=1.0, alpha=10.0, beta=10.0, thetas=(0.2, 0.5, 1.0, 2.0)):
    rhos = np.linspace(0.0, 1.0, 101)
    rows = np.array(bound_curves(m, alpha, beta, thetas, rhos))

    plt.plot(rhos, rows[:, 1], 'k--', label="any standalone ML (lower)")
    for i, theta in enumerate(thetas):
        line, = plt.plot(rhos, rows[:, 2 + i],
                         label="MLA-ROBD, theta=%g" % theta)
        rho_star = crossing_rho(m, alpha, beta, theta)
        if rho_star <= rhos[-1]:
            plt.axvline(rho_star, color=line.get_color(), alpha=0.3)
    plt.plot(rhos, rows[:, -1], 'k-', label="R-OBD")

    plt.ylim(1.0, 2 * rows[0, -1])
    plt.xlim(0.0, rhos[-1])
    plt.title("Competitive Ratio Bounds (m=%g, alpha=%g, beta=%g)" %
              (m, alpha, beta))
    plt.xlabel("Prediction Error (rho)")
    plt.ylabel("Competitive Ratio")
    plt.legend(loc=2)
    plt.show()


if __name__ == "__main__":
    run_demo()

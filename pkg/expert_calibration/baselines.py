"""
The baselines module contains the non-learned and hybrid baselines. R-OBD,
greedy and Follow-the-Prediction are special weightings of the MLA-ROBD
calibrator; this module collects them by name and adds the dynamic Switch
algorithm, which alternates between the expert (R-OBD) and a standalone ML
optimizer based on their accumulated costs.

The Switch rule is a reimplementation: the threshold comparison of shadow
costs, the reset of the accumulators after a switch, and the growth factor
of the threshold are choices of this module.
"""

import logging

import numpy as np

from expert_calibration.calibrator import calibrate_step
from expert_calibration.calibrator import CalibratorParams
from expert_calibration.core import EpisodeTrace
from expert_calibration.mlopt import forward

logger = logging.getLogger(__name__)

EXPERT = 'expert'
ML = 'ml'


def robd_params(model, lambda1=1.0):
    return CalibratorParams.robd(model, lambda1)


def greedy_params():
    return CalibratorParams.greedy()


def ftp_params():
    return CalibratorParams.follow_the_prediction()


class SwitchState(object):
    """
    The mutable per-episode state of the Switch algorithm.

    :param active: the policy currently played, ``'ml'`` or ``'expert'``
    :param gamma: the switching threshold, > 1
    :param gamma_growth: the factor the threshold is multiplied by after
        every switch, > 1
    """

    def __init__(self, active=ML, gamma=1.5, gamma_growth=2.0):
        if active not in (ML, EXPERT):
            raise ValueError("active must be 'ml' or 'expert', got %r" %
                             active)
        if not gamma > 1 or not gamma_growth > 1:
            raise ValueError("gamma and gamma_growth must be > 1.")
        self.active = active
        self.gamma = float(gamma)
        self.gamma_growth = float(gamma_growth)
        self.cum_cost_active = 0.0
        self.cum_cost_shadow = 0.0
        self.n_switches = 0

    def copy(self):
        other = SwitchState(self.active, self.gamma, self.gamma_growth)
        other.cum_cost_active = self.cum_cost_active
        other.cum_cost_shadow = self.cum_cost_shadow
        other.n_switches = self.n_switches
        return other

    def __repr__(self):
        return ("SwitchState(active=%r, gamma=%r, switches=%i)" %
                (self.active, self.gamma, self.n_switches))


def _step_cost(model, x, y, x_prev):
    return model.hitting_cost(x, y) + model.switching_cost(x, x_prev)


def switch_step(state, model, y, x_prev, pureml_weights, robd_params):
    """
    Performs one step of Switch. Both candidates are computed from the same
    previous action; the active one is played and the other is tracked as a
    shadow. When the accumulated cost of the active policy exceeds gamma
    times the shadow's, the active policy flips, gamma grows and both
    accumulators restart.

    :return: ``(x_t, new_state)``; the input state is not modified
    """
    state = state.copy()
    x_expert = calibrate_step(model, robd_params, y, x_prev)
    x_ml, _ = forward(pureml_weights, y, x_prev)
    if state.active == ML:
        played, shadow = x_ml, x_expert
    else:
        played, shadow = x_expert, x_ml
    state.cum_cost_active += _step_cost(model, played, y, x_prev)
    state.cum_cost_shadow += _step_cost(model, shadow, y, x_prev)
    if state.cum_cost_active > state.gamma * state.cum_cost_shadow:
        state.active = EXPERT if state.active == ML else ML
        state.gamma *= state.gamma_growth
        state.cum_cost_active = 0.0
        state.cum_cost_shadow = 0.0
        state.n_switches += 1
        logger.debug("switched to %s, gamma is now %g", state.active,
                     state.gamma)
    return played, state


def run_switch(instance, model, pureml_weights, robd_params, gamma=1.5,
               gamma_growth=2.0, initial=ML):
    """
    Runs Switch over an instance.

    :return: ``(trace, state)`` where the final state records the number of
        switches
    """
    state = SwitchState(initial, gamma, gamma_growth)
    x_prev = instance.x0
    actions = []
    for y in instance.contexts:
        x, state = switch_step(state, model, y, x_prev, pureml_weights,
                               robd_params)
        actions.append(x)
        x_prev = x
    actions = np.array(actions)
    hitting, switching = model.episode_costs(instance.x0, instance.contexts,
                                             actions)
    trace = EpisodeTrace(actions, actions, hitting, switching,
                         policy='switch')
    return trace, state

"""
The mlopt module contains the ML-based optimizer h_W, a small fully connected
relu network that maps the current context and the previous action
``(y_t, x_{t-1})`` to a predicted action. It is applied recurrently over an
episode, so both its forward and reverse passes are implemented by hand to
expose the gradient with respect to the previous action.
"""

import json

import numpy as np

from expert_calibration.core import as_vector
from expert_calibration.core import DimensionError
from expert_calibration.core import DivergenceError


class NetArchitecture(object):
    """
    The shape of the ML-based optimizer.

    :param input_dim: q + d, the context and previous action sizes
    :param output_dim: d, the action size
    :param hidden: widths of the hidden layers (default three layers of 10)
    :param activation: the hidden activation, only ``'relu'`` is supported
    :param output_scale: the network output is ``output_scale * z +
        output_shift`` for the last affine layer's output z
    :param output_shift: see output_scale
    """

    def __init__(self, input_dim, output_dim, hidden=(10, 10, 10),
                 activation='relu', output_scale=1.0, output_shift=0.0):
        if activation != 'relu':
            raise ValueError("Unsupported activation: %r" % activation)
        self.hidden = tuple(int(h) for h in hidden)
        if input_dim < 1 or output_dim < 1 or any(h < 1 for h in self.hidden):
            raise ValueError("All layer widths must be >= 1.")
        self.input_dim = int(input_dim)
        self.output_dim = int(output_dim)
        self.activation = activation
        self.output_scale = float(output_scale)
        self.output_shift = float(output_shift)

    @classmethod
    def for_model(cls, q, d, hidden=(10, 10, 10), **kwargs):
        return cls(q + d, d, hidden, **kwargs)

    @property
    def widths(self):
        return (self.input_dim,) + self.hidden + (self.output_dim,)

    def to_dict(self):
        return {'input_dim': self.input_dim, 'output_dim': self.output_dim,
                'hidden': list(self.hidden), 'activation': self.activation,
                'output_scale': self.output_scale,
                'output_shift': self.output_shift}

    @classmethod
    def from_dict(cls, data):
        return cls(data['input_dim'], data['output_dim'],
                   tuple(data['hidden']), data.get('activation', 'relu'),
                   data.get('output_scale', 1.0),
                   data.get('output_shift', 0.0))

    def __eq__(self, other):
        return (isinstance(other, NetArchitecture) and
                self.to_dict() == other.to_dict())

    def __repr__(self):
        return "NetArchitecture(%s)" % ' -> '.join(str(w) for w in
                                                   self.widths)


class PolicyWeights(object):
    """
    The layer weights and biases of the ML-based optimizer. Layer ``k`` maps
    ``h -> W[k] @ h + b[k]``.

    :param arch: the network architecture
    :type arch: NetArchitecture
    :param weights: one matrix per layer, shape (fan_out, fan_in)
    :param biases: one vector per layer
    :param seed: the seed used at initialization, if any
    """

    def __init__(self, arch, weights, biases, seed=None):
        self.arch = arch
        self.weights = [np.array(w, dtype=np.float64) for w in weights]
        self.biases = [np.array(b, dtype=np.float64).reshape(-1)
                       for b in biases]
        self.seed = seed
        widths = arch.widths
        if len(self.weights) != len(widths) - 1 or \
                len(self.biases) != len(widths) - 1:
            raise DimensionError("expected %i layers" % (len(widths) - 1))
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (widths[k + 1], widths[k]) or \
                    b.shape != (widths[k + 1],):
                raise DimensionError("layer %i has shape %s / %s, expected "
                                     "%s" % (k, W.shape, b.shape,
                                             (widths[k + 1], widths[k])))

    @property
    def n_layers(self):
        return len(self.weights)

    def copy(self):
        return PolicyWeights(self.arch, [W.copy() for W in self.weights],
                             [b.copy() for b in self.biases], self.seed)

    def zeros_like(self):
        return PolicyWeights(self.arch,
                             [np.zeros_like(W) for W in self.weights],
                             [np.zeros_like(b) for b in self.biases],
                             self.seed)

    def to_vector(self):
        """
        Returns all parameters as one flat vector, layer by layer, weights
        (row-major) before biases.
        """
        parts = []
        for W, b in zip(self.weights, self.biases):
            parts.append(W.reshape(-1))
            parts.append(b)
        return np.concatenate(parts)

    def from_vector(self, vector):
        """
        Returns new weights with the same architecture and parameters taken
        from a flat vector laid out as :meth:`to_vector`.
        """
        vector = np.asarray(vector, dtype=np.float64)
        weights, biases = [], []
        pos = 0
        for W, b in zip(self.weights, self.biases):
            weights.append(vector[pos:pos + W.size].reshape(W.shape).copy())
            pos += W.size
            biases.append(vector[pos:pos + b.size].copy())
            pos += b.size
        if pos != vector.shape[0]:
            raise DimensionError("vector has %i entries, expected %i" %
                                 (vector.shape[0], pos))
        return PolicyWeights(self.arch, weights, biases, self.seed)

    def is_finite(self):
        return bool(np.all(np.isfinite(self.to_vector())))

    def __repr__(self):
        return "PolicyWeights(%r, seed=%r)" % (self.arch, self.seed)


def init_weights(arch, seed=0):
    """
    Initializes the weights with He scaling, ``N(0, 2 / fan_in)``, and zero
    biases. The result is fully determined by the seed.

    >>> a = init_weights(NetArchitecture(2, 1), seed=3)
    >>> b = init_weights(NetArchitecture(2, 1), seed=3)
    >>> bool(np.array_equal(a.to_vector(), b.to_vector()))
    True
    """
    rng = np.random.default_rng(seed)
    widths = arch.widths
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in),
                                  size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return PolicyWeights(arch, weights, biases, seed)


class Tape(object):
    """
    The intermediate values of one forward pass: the input of every layer and
    the pre-activation of every hidden layer.
    """

    def __init__(self, inputs, pre_activations, q):
        self.inputs = inputs
        self.pre_activations = pre_activations
        self.q = q


def forward(weights, y, x_prev):
    """
    Evaluates ``x_tilde = h_W(y, x_prev)`` on the concatenated input
    ``[y, x_prev]``.

    :return: ``(x_tilde, tape)``
    :raises DivergenceError: if the output is not finite

    >>> arch = NetArchitecture(2, 1, hidden=())
    >>> w = PolicyWeights(arch, [[[1.0, 1.0]]], [[0.0]])
    >>> forward(w, [2.0], [3.0])[0]
    array([5.])
    """
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    x_prev = np.asarray(x_prev, dtype=np.float64).reshape(-1)
    h = np.concatenate([y, x_prev])
    if h.shape[0] != weights.arch.input_dim:
        raise DimensionError("network input has dimension %i, expected %i" %
                             (h.shape[0], weights.arch.input_dim))
    inputs, pre = [], []
    last = weights.n_layers - 1
    for k, (W, b) in enumerate(zip(weights.weights, weights.biases)):
        inputs.append(h)
        z = W @ h + b
        if k < last:
            pre.append(z)
            h = np.maximum(z, 0.0)
        else:
            h = weights.arch.output_scale * z + weights.arch.output_shift
    if not np.all(np.isfinite(h)):
        raise DivergenceError("network output is not finite: %s" % (h,))
    return h, Tape(inputs, pre, y.shape[0])


def backward(weights, tape, grad_out):
    """
    Reverse pass of :func:`forward`: returns the gradients of
    ``<grad_out, x_tilde>`` with respect to the weights and both inputs. The
    relu derivative at exactly 0 is taken as 0.

    :return: ``(grad_weights, grad_x_prev, grad_y)``
    :rtype: (PolicyWeights, numpy array, numpy array)
    """
    g = as_vector(grad_out, dim=weights.arch.output_dim, name='grad_out')
    if len(tape.inputs) != weights.n_layers:
        raise DimensionError("tape does not match the network")
    g = weights.arch.output_scale * g
    grad_W = [None] * weights.n_layers
    grad_b = [None] * weights.n_layers
    for k in range(weights.n_layers - 1, -1, -1):
        grad_W[k] = np.outer(g, tape.inputs[k])
        grad_b[k] = g.copy()
        g = weights.weights[k].T @ g
        if k > 0:
            g = g * (tape.pre_activations[k - 1] > 0.0)
    grads = PolicyWeights(weights.arch, grad_W, grad_b, weights.seed)
    return grads, g[tape.q:], g[:tape.q]


def predictor(weights):
    """
    Returns a callable ``predictor(y, x_prev) -> x_tilde`` for
    :meth:`MLAROBD.run <expert_calibration.calibrator.MLAROBD.run>`.
    """
    def predict(y, x_prev):
        return forward(weights, y, x_prev)[0]
    return predict


def save_weights(weights, path):
    """
    Writes weights to a text file: a JSON header line with the architecture
    and seed, then one line per weight matrix row and one per bias vector.
    Floats are written with ``repr`` so that reading them back is exact.
    """
    with open(path, 'w') as out:
        out.write(json.dumps({'arch': weights.arch.to_dict(),
                              'seed': weights.seed}, sort_keys=True) + '\n')
        for W, b in zip(weights.weights, weights.biases):
            for row in W:
                out.write(' '.join(repr(float(v)) for v in row) + '\n')
            out.write(' '.join(repr(float(v)) for v in b) + '\n')


def load_weights(path):
    """
    Reads weights written by :func:`save_weights`.
    """
    with open(path) as dat:
        header = json.loads(dat.readline())
        rows = [[float(v) for v in line.split()] for line in dat
                if line.strip()]
    arch = NetArchitecture.from_dict(header['arch'])
    widths = arch.widths
    expected = sum(fan_out + 1 for fan_out in widths[1:])
    if expected != len(rows):
        raise ValueError("%s has %i rows, expected %i" % (path, len(rows),
                                                          expected))
    weights, biases = [], []
    pos = 0
    for fan_out in widths[1:]:
        weights.append(rows[pos:pos + fan_out])
        pos += fan_out
        biases.append(rows[pos])
        pos += 1
    return PolicyWeights(arch, weights, biases, header.get('seed'))

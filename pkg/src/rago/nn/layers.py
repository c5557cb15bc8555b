"""Parameter containers, MLPs and the GRU cell."""

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeMismatch
from . import value as V


class ModelWeights(dict):
    """Map from parameter path (``"theta_cost.conv2.edge_mlp.w1"``) to :class:`Value`.

    Iteration and serialization use sorted path order.
    """

    def sorted_items(self):
        return sorted(self.items())

    def num_parameters(self):
        return int(sum(v.data.size for v in self.values()))

    def zero_grad(self):
        for v in self.values():
            v.grad = None

    def grads(self):
        return {k: (v.grad if v.grad is not None else np.zeros_like(v.data)) for k, v in self.items()}

    def copy(self):
        return ModelWeights({k: V.parameter(v.data.copy()) for k, v in self.items()})

    def flat(self):
        return np.concatenate([v.data.ravel() for _, v in self.sorted_items()])

    def set_flat(self, vec):
        i = 0
        for _, v in self.sorted_items():
            n = v.data.size
            v.data = np.asarray(vec[i : i + n], dtype=float).reshape(v.shape).copy()
            i += n


@dataclass(frozen=True)
class MLPSpec:
    sizes: tuple
    activation: str = "relu"

    @property
    def n_layers(self):
        return len(self.sizes) - 1


_ACTIVATIONS = {"relu": V.relu, "tanh": V.tanh, "sigmoid": V.sigmoid}


def kaiming_uniform(rng, fan_in, fan_out):
    bound = np.sqrt(3.0 / fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_mlp(weights, prefix, spec, rng, zero_last=False):
    for i in range(spec.n_layers):
        n_in, n_out = spec.sizes[i], spec.sizes[i + 1]
        last = i == spec.n_layers - 1
        w = np.zeros((n_in, n_out)) if (last and zero_last) else kaiming_uniform(rng, n_in, n_out)
        weights[f"{prefix}.w{i + 1}"] = V.parameter(w)
        weights[f"{prefix}.b{i + 1}"] = V.parameter(np.zeros(n_out))
    return weights


def mlp_forward(weights, prefix, x, spec, first_layer=1):
    """Affine + activation chain; the last layer is linear.

    ``first_layer`` offsets the parameter numbering, for callers that
    evaluate the leading layer themselves.
    """
    act = _ACTIVATIONS[spec.activation]
    for i in range(spec.n_layers):
        w = weights[f"{prefix}.w{i + first_layer}"]
        b = weights[f"{prefix}.b{i + first_layer}"]
        if w.shape != (spec.sizes[i], spec.sizes[i + 1]):
            raise ShapeMismatch(f"{prefix}.w{i + first_layer} has shape {w.shape}, spec wants "
                                f"{(spec.sizes[i], spec.sizes[i + 1])}")
        if x.shape[-1] != w.shape[0]:
            raise ShapeMismatch(f"{prefix}: input width {x.shape[-1]} != {w.shape[0]}")
        x = V.add(V.matmul(x, w), b)
        if i < spec.n_layers - 1:
            x = act(x)
    return x


def init_gru(weights, prefix, hidden, n_in, rng):
    for gate in ("z", "r", "h"):
        weights[f"{prefix}.w{gate}"] = V.parameter(kaiming_uniform(rng, hidden + n_in, hidden) / np.sqrt(2.0))
        weights[f"{prefix}.b{gate}"] = V.parameter(np.zeros(hidden))
    return weights


def gru_cell(weights, prefix, h_prev, x):
    """Standard GRU update.

    ``z = sigmoid(W_z [h, x])``, ``r = sigmoid(W_r [h, x])``,
    ``h~ = tanh(W_h [r*h, x])``, ``h' = (1 - z) h + z h~``.
    """
    wz = weights[f"{prefix}.wz"]
    hidden = wz.shape[1]
    if h_prev.shape[-1] != hidden or h_prev.shape[-1] + x.shape[-1] != wz.shape[0]:
        raise ShapeMismatch(f"{prefix}: hidden {h_prev.shape}, input {x.shape}, weights {wz.shape}")
    hx = V.concat([h_prev, x], axis=-1)
    z = V.sigmoid(V.add(V.matmul(hx, wz), weights[f"{prefix}.bz"]))
    r = V.sigmoid(V.add(V.matmul(hx, weights[f"{prefix}.wr"]), weights[f"{prefix}.br"]))
    rhx = V.concat([V.mul(r, h_prev), x], axis=-1)
    cand = V.tanh(V.add(V.matmul(rhx, weights[f"{prefix}.wh"]), weights[f"{prefix}.bh"]))
    return V.add(h_prev, V.mul(z, V.sub(cand, h_prev)))

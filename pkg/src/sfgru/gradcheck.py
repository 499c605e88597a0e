"""Finite-difference verification of the analytic model gradients.

The oracle perturbs one parameter coordinate at a time by +/- h and takes
central differences of the summed BCE. To keep it affordable, every
perturbed copy of one parameter array is evaluated in a single vectorised
forward pass (the copies ride along a leading broadcast axis), and the
forward pass runs in extended precision so cancellation noise stays far
below the tolerance even for gradient entries near 1e-8.
"""

import copy
from dataclasses import dataclass

import numpy as np

from .architectures import FEATURE_DIMS, backward, batch_loss, forward_batch, init_model
from .numerics import make_rng, relative_error

EXTENDED = np.longdouble


@dataclass
class GradCheckResult:
    max_rel_error: float
    per_array: dict
    n_checked: int

    def passed(self, tol=1e-4):
        return self.max_rel_error < tol


def _cast_params(params, dtype):
    out = copy.deepcopy(params)
    for arr_name, arr in params.named_arrays().items():
        _set(out, arr_name, arr.astype(dtype))
    return out


def _owner(params, dotted):
    parts = dotted.split(".")
    obj = params
    if parts[0] == "classifier":
        return obj.classifier, parts[1]
    return getattr(obj, parts[0])[int(parts[1])], parts[2]


def _set(params, dotted, value):
    owner, attr = _owner(params, dotted)
    setattr(owner, attr, value)


def numeric_gradients(spec, params, inputs, labels, h=1e-5, dtype=EXTENDED, chunk=256):
    """Central-difference gradient of summed BCE for every parameter array."""
    base = _cast_params(params, dtype)
    xin = {k: np.asarray(v).astype(dtype) for k, v in inputs.items()}
    out = {}
    for name, arr in params.named_arrays().items():
        flat = arr.astype(dtype).reshape(-1)
        grad = np.empty(flat.size, dtype=dtype)
        for lo in range(0, flat.size, chunk):
            idx = np.arange(lo, min(lo + chunk, flat.size))
            c = idx.size
            stack = np.repeat(flat[None, :], 2 * c, axis=0)
            stack[np.arange(c), idx] += h
            stack[np.arange(c, 2 * c), idx] -= h
            shaped = stack.reshape((2 * c,) + arr.shape)
            if arr.ndim == 1:
                # vectors broadcast against (copies, N, dim) activations
                shaped = shaped[:, None, :]
            probe = copy.copy(base)
            probe.levels = [copy.copy(g) for g in base.levels]
            probe.streams = [copy.copy(g) for g in base.streams]
            probe.classifier = copy.copy(base.classifier)
            _set(probe, name, shaped)
            losses = batch_loss(spec, probe, xin, labels)
            grad[lo:lo + c] = (losses[:c] - losses[c:]) / (2 * h)
        out[name] = grad.reshape(arr.shape).astype(np.float64)
    return out


def check_model_gradients(spec, params, inputs, labels, h=1e-5):
    probs, cache = forward_batch(spec, params, inputs)
    analytic = backward(spec, params, cache, labels).named_arrays()
    numeric = numeric_gradients(spec, params, inputs, labels, h=h)
    per_array = {}
    n = 0
    for name, g in analytic.items():
        err = relative_error(g, numeric[name])
        per_array[name] = float(err.max())
        n += err.size
    return GradCheckResult(max(per_array.values()), per_array, n)


def random_instance(spec, seed, n_samples=2):
    """Glorot parameters, uniform[-1, 1] inputs and mixed labels for a gradient check."""
    rng = make_rng(seed)
    params = init_model(spec, rng)
    inputs = {
        k: rng.uniform(-1.0, 1.0, size=(n_samples, spec.obs_len, spec.dim(k)))
        for k in spec.fusion_order
    }
    labels = (np.arange(n_samples) % 2 == 0).astype(np.float64)
    return params, inputs, labels

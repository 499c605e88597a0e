"""GRU cell, sequence unrolling with BPTT, the output linear layer and BCE.

Every function accepts either a single sample (1-D vectors) or a batch with
a leading sample axis; parameters are shared across the batch and gradients
are summed over it.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .numerics import DTYPE, as_float, init_uniform, sigmoid

BCE_EPS = 1e-12

GRU_WEIGHTS = ("Wxr", "Wxz", "Wxh", "Whr", "Whz", "Whh")
GRU_BIASES = ("br", "bz", "bh")


@dataclass
class GruParams:
    input_dim: int
    hidden_dim: int
    Wxr: np.ndarray
    Wxz: np.ndarray
    Wxh: np.ndarray
    Whr: np.ndarray
    Whz: np.ndarray
    Whh: np.ndarray
    br: np.ndarray
    bz: np.ndarray
    bh: np.ndarray
    use_bias: bool = True

    def __post_init__(self):
        i, h = self.input_dim, self.hidden_dim
        for name in ("Wxr", "Wxz", "Wxh"):
            if getattr(self, name).shape != (h, i):
                raise ShapeError(name, (h, i), getattr(self, name).shape)
        for name in ("Whr", "Whz", "Whh"):
            if getattr(self, name).shape != (h, h):
                raise ShapeError(name, (h, h), getattr(self, name).shape)
        for name in GRU_BIASES:
            if getattr(self, name).shape != (h,):
                raise ShapeError(name, (h,), getattr(self, name).shape)

    @classmethod
    def zeros(cls, input_dim, hidden_dim, use_bias=True):
        i, h = input_dim, hidden_dim
        mats = {n: np.zeros((h, i)) for n in ("Wxr", "Wxz", "Wxh")}
        mats.update({n: np.zeros((h, h)) for n in ("Whr", "Whz", "Whh")})
        mats.update({n: np.zeros(h) for n in GRU_BIASES})
        return cls(i, h, use_bias=use_bias, **mats)

    @classmethod
    def glorot(cls, rng, input_dim, hidden_dim, use_bias=True):
        """Glorot-uniform weights (drawn in a fixed order), zero biases."""
        p = cls.zeros(input_dim, hidden_dim, use_bias)
        for name in ("Wxr", "Wxz", "Wxh"):
            setattr(p, name, init_uniform(rng, hidden_dim, input_dim))
        for name in ("Whr", "Whz", "Whh"):
            setattr(p, name, init_uniform(rng, hidden_dim, hidden_dim))
        return p

    def zeros_like(self):
        return GruParams.zeros(self.input_dim, self.hidden_dim, self.use_bias)

    def arrays(self):
        """Trainable arrays by name. Biases are omitted when ``use_bias`` is off."""
        names = GRU_WEIGHTS + (GRU_BIASES if self.use_bias else ())
        return {n: getattr(self, n) for n in names}

    def num_params(self):
        return sum(a.size for a in self.arrays().values())


@dataclass
class GruStepCache:
    x: np.ndarray
    h_prev: np.ndarray
    r: np.ndarray
    z: np.ndarray
    h_tilde: np.ndarray
    h: np.ndarray


@dataclass
class LinearParams:
    W: np.ndarray
    b: np.ndarray = field(default_factory=lambda: np.zeros(1))

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=DTYPE).reshape(1, -1)
        self.b = np.asarray(self.b, dtype=DTYPE).reshape(1)

    @property
    def input_dim(self):
        return self.W.shape[-1]

    @classmethod
    def zeros(cls, input_dim):
        return cls(np.zeros((1, input_dim)), np.zeros(1))

    @classmethod
    def glorot(cls, rng, input_dim):
        return cls(init_uniform(rng, 1, input_dim), np.zeros(1))

    def zeros_like(self):
        return LinearParams.zeros(self.input_dim)

    def arrays(self):
        return {"W": self.W, "b": self.b}

    def num_params(self):
        return self.W.size + 1


def _check_last(arr, dim, what):
    if arr.ndim < 1 or arr.shape[-1] != dim:
        raise ShapeError(what, f"(..., {dim})", arr.shape)


def gru_step_forward(p, x, h_prev):
    x = as_float(x)
    h_prev = as_float(h_prev)
    _check_last(x, p.input_dim, "gru input x")
    _check_last(h_prev, p.hidden_dim, "gru h_prev")
    try:
        np.broadcast_shapes(x.shape[:-1], h_prev.shape[:-1])
    except ValueError:
        raise ShapeError("gru batch", x.shape[:-1], h_prev.shape[:-1]) from None

    # .mT rather than .T so parameter stacks with a leading axis also work
    r = sigmoid(x @ p.Wxr.mT + h_prev @ p.Whr.mT + p.br)
    z = sigmoid(x @ p.Wxz.mT + h_prev @ p.Whz.mT + p.bz)
    h_tilde = np.tanh(x @ p.Wxh.mT + (r * h_prev) @ p.Whh.mT + p.bh)
    h = (1.0 - z) * h_prev + z * h_tilde
    return h, GruStepCache(x, h_prev, r, z, h_tilde, h)


def _outer_sum(d, a):
    # sum over the batch of outer(d_n, a_n); works for 1-D and 2-D inputs
    if d.ndim == 1:
        return np.outer(d, a)
    return d.T @ a


def _bias_sum(d):
    return d if d.ndim == 1 else d.sum(axis=0)


def gru_step_backward(p, cache, dh, grads=None):
    """Backpropagate ``dh`` (gradient w.r.t. this step's h) through one step.

    Returns ``(dx, dh_prev, grads)``. When ``grads`` is given, parameter
    gradients are accumulated into it in place.
    """
    dh = np.asarray(dh, dtype=DTYPE)
    if dh.shape != cache.h.shape:
        raise ShapeError("gru dh", cache.h.shape, dh.shape)
    if grads is None:
        grads = p.zeros_like()
    x, h_prev, r, z, ht = cache.x, cache.h_prev, cache.r, cache.z, cache.h_tilde

    dz = dh * (ht - h_prev)
    dh_prev = dh * (1.0 - z)
    dah = dh * z * (1.0 - ht * ht)
    daz = dz * z * (1.0 - z)

    rh = r * h_prev
    drh = dah @ p.Whh
    dar = drh * h_prev * r * (1.0 - r)
    dh_prev = dh_prev + drh * r

    grads.Wxh += _outer_sum(dah, x)
    grads.Whh += _outer_sum(dah, rh)
    grads.Wxz += _outer_sum(daz, x)
    grads.Whz += _outer_sum(daz, h_prev)
    grads.Wxr += _outer_sum(dar, x)
    grads.Whr += _outer_sum(dar, h_prev)
    if p.use_bias:
        grads.bh += _bias_sum(dah)
        grads.bz += _bias_sum(daz)
        grads.br += _bias_sum(dar)

    dx = dar @ p.Wxr + daz @ p.Wxz + dah @ p.Wxh
    dh_prev = dh_prev + dar @ p.Whr + daz @ p.Whz
    return dx, dh_prev, grads


def gru_sequence_forward(p, xs, h0=None):
    """Unroll over ``xs`` of shape ``(..., m, input_dim)``, time on axis -2.

    Returns hidden states stacked the same way, ``(..., m, hidden_dim)``,
    and the per-step caches.
    """
    xs = as_float(xs)
    if xs.ndim < 2 or xs.shape[-2] == 0:
        raise ShapeError("gru sequence", "(..., m, input_dim) with m >= 1", xs.shape)
    if h0 is None:
        h0 = np.zeros(xs.shape[:-2] + (p.hidden_dim,), dtype=xs.dtype)
    h = h0
    hs = []
    caches = []
    for t in range(xs.shape[-2]):
        h, c = gru_step_forward(p, xs[..., t, :], h)
        hs.append(h)
        caches.append(c)
    return np.stack(hs, axis=-2), caches


def gru_sequence_backward(p, caches, dhs, grads=None):
    """BPTT. ``dhs[..., t, :]`` is the external gradient arriving at ``h^t``.

    Returns ``(dxs, dh0, grads)``.
    """
    dhs = np.asarray(dhs, dtype=DTYPE)
    if dhs.ndim < 2 or dhs.shape[-2] != len(caches):
        raise ShapeError("gru dhs", f"(..., {len(caches)}, hidden)", dhs.shape)
    if grads is None:
        grads = p.zeros_like()
    carry = np.zeros_like(dhs[..., 0, :])
    dxs = [None] * len(caches)
    for t in range(len(caches) - 1, -1, -1):
        dxs[t], carry, _ = gru_step_backward(p, caches[t], dhs[..., t, :] + carry, grads)
    return np.stack(dxs, axis=-2), carry, grads


def linear_forward(p, x):
    x = as_float(x)
    _check_last(x, p.input_dim, "linear input")
    return (x @ p.W.mT)[..., 0] + p.b[..., 0]


def linear_backward(p, x, dlogit, grads=None):
    """Gradients of ``dlogit * logit``; returns ``(dx, grads)``."""
    x = np.asarray(x, dtype=DTYPE)
    dlogit = np.asarray(dlogit, dtype=DTYPE)
    if dlogit.shape != x.shape[:-1]:
        raise ShapeError("linear dlogit", x.shape[:-1], dlogit.shape)
    if grads is None:
        grads = p.zeros_like()
    if x.ndim == 1:
        grads.W += dlogit * x[None, :]
        grads.b += dlogit
        dx = dlogit * p.W[0]
    else:
        grads.W += (dlogit @ x)[None, :]
        grads.b += dlogit.sum()
        dx = np.outer(dlogit, p.W[0])
    return dx, grads


def _check_labels(label):
    y = np.asarray(label, dtype=DTYPE)
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError(f"labels must be 0 or 1, got {label!r}")
    return y


def bce_loss(prob, label, eps=BCE_EPS):
    y = _check_labels(label)
    p = np.clip(as_float(prob), eps, 1.0 - eps)
    loss = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    return float(loss) if loss.ndim == 0 else loss


def bce_logit_grad(prob, label):
    """d(BCE)/d(logit) for prob = sigmoid(logit)."""
    y = _check_labels(label)
    g = np.asarray(prob, dtype=DTYPE) - y
    return float(g) if g.ndim == 0 else g

"""The six sequence classifiers: Static, GRU, M-GRU, H-GRU, S-GRU and SF-GRU.

All models map a batch of observation windows (one ``(N, m, dim)`` array per
feature key) to crossing probabilities ``sigmoid(linear(representation))``.
``backward`` differentiates the summed binary cross-entropy exactly.
"""

import enum
import io
import json
import zipfile
from dataclasses import asdict, dataclass

import numpy as np

from .errors import MissingModalityError, SfGruError, ShapeError
from .numerics import DTYPE, as_float, sigmoid
from .recurrent import (
    GruParams,
    LinearParams,
    bce_logit_grad,
    bce_loss,
    gru_sequence_backward,
    gru_sequence_forward,
    linear_backward,
    linear_forward,
)

FEATURE_DIMS = {"Cp": 512, "Cs": 512, "P": 36, "B": 4, "S": 1, "Cps": 512, "D": 2}
DEFAULT_FUSION_ORDER = ("Cp", "Cs", "P", "B", "S")


class Kind(str, enum.Enum):
    STATIC = "static"
    SINGLE_GRU = "gru"
    MULTI_STREAM_GRU = "m-gru"
    HIERARCHICAL_GRU = "h-gru"
    STACKED_GRU = "s-gru"
    STACKED_FUSION_GRU = "sf-gru"

    @property
    def label(self):
        return _LABELS[self]


_LABELS = {
    Kind.STATIC: "Static",
    Kind.SINGLE_GRU: "GRU",
    Kind.MULTI_STREAM_GRU: "M-GRU",
    Kind.HIERARCHICAL_GRU: "H-GRU",
    Kind.STACKED_GRU: "S-GRU",
    Kind.STACKED_FUSION_GRU: "SF-GRU",
}


@dataclass(frozen=True)
class ModelSpec:
    """Which architecture to build.

    ``fusion_order`` doubles as the feature set for the non-fusion variants;
    for SF-GRU its order is the bottom-to-top assignment of features to levels.
    """

    kind: Kind = Kind.STACKED_FUSION_GRU
    fusion_order: tuple = DEFAULT_FUSION_ORDER
    hidden_dim: int = 256
    obs_len: int = 15
    use_bias: bool = True
    feature_dims: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "fusion_order", tuple(self.fusion_order))
        dims = dict(FEATURE_DIMS)
        dims.update(dict(self.feature_dims))
        object.__setattr__(self, "feature_dims", tuple(sorted(dims.items())))
        order = self.fusion_order
        if not order:
            raise SfGruError("fusion_order must not be empty")
        if len(set(order)) != len(order):
            raise SfGruError(f"fusion_order has duplicate keys: {order}")
        for key in order:
            if key not in dims:
                raise SfGruError(f"unknown feature key {key!r}")
        if self.hidden_dim <= 0 or self.obs_len <= 0:
            raise SfGruError("hidden_dim and obs_len must be positive")

    def dim(self, key):
        return dict(self.feature_dims)[key]

    @property
    def dims(self):
        return [self.dim(k) for k in self.fusion_order]

    def to_dict(self):
        d = asdict(self)
        d["kind"] = self.kind.value
        d["fusion_order"] = list(self.fusion_order)
        d["feature_dims"] = [list(kv) for kv in self.feature_dims]
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["feature_dims"] = tuple(tuple(kv) for kv in d.get("feature_dims", ()))
        return cls(**d)


@dataclass
class ModelParams:
    levels: list
    streams: list
    classifier: LinearParams

    def named_arrays(self):
        """Trainable arrays in a fixed order, keyed by dotted path."""
        out = {}
        for group in ("streams", "levels"):
            for i, g in enumerate(getattr(self, group)):
                for name, arr in g.arrays().items():
                    out[f"{group}.{i}.{name}"] = arr
        for name, arr in self.classifier.arrays().items():
            out[f"classifier.{name}"] = arr
        return out

    def zeros_like(self):
        return ModelParams(
            [g.zeros_like() for g in self.levels],
            [g.zeros_like() for g in self.streams],
            self.classifier.zeros_like(),
        )

    def copy(self):
        c = self.zeros_like()
        for name, arr in c.named_arrays().items():
            arr[...] = self.named_arrays()[name]
        return c

    def num_params(self):
        return sum(a.size for a in self.named_arrays().values())


def _layout(spec):
    """GRU input dims as (stream_dims, level_dims, classifier_dim)."""
    h = spec.hidden_dim
    dims = spec.dims
    k = spec.kind
    if k is Kind.STATIC:
        return [], [], sum(dims)
    if k is Kind.SINGLE_GRU:
        return [], [sum(dims)], h
    if k is Kind.MULTI_STREAM_GRU:
        return list(dims), [], h * len(dims)
    if k is Kind.HIERARCHICAL_GRU:
        return list(dims), [h * len(dims)], h
    if k is Kind.STACKED_GRU:
        return [], [sum(dims)] + [h] * (len(dims) - 1), h
    if k is Kind.STACKED_FUSION_GRU:
        return [], [dims[0]] + [h + d for d in dims[1:]], h
    raise SfGruError(f"unsupported model kind {k}")


def level_input_dims(spec):
    return _layout(spec)[1]


def init_model(spec, rng):
    stream_dims, level_dims, cls_dim = _layout(spec)
    h = spec.hidden_dim
    streams = [GruParams.glorot(rng, d, h, spec.use_bias) for d in stream_dims]
    levels = [GruParams.glorot(rng, d, h, spec.use_bias) for d in level_dims]
    return ModelParams(levels, streams, LinearParams.glorot(rng, cls_dim))


def zero_model(spec):
    stream_dims, level_dims, cls_dim = _layout(spec)
    h = spec.hidden_dim
    return ModelParams(
        [GruParams.zeros(d, h, spec.use_bias) for d in level_dims],
        [GruParams.zeros(d, h, spec.use_bias) for d in stream_dims],
        LinearParams.zeros(cls_dim),
    )


def _gru_count(i, h, use_bias):
    return 3 * h * (i + h) + (3 * h if use_bias else 0)


def param_count(spec):
    stream_dims, level_dims, cls_dim = _layout(spec)
    h = spec.hidden_dim
    total = sum(_gru_count(d, h, spec.use_bias) for d in stream_dims + level_dims)
    return total + cls_dim + 1


def check_params(spec, params):
    stream_dims, level_dims, cls_dim = _layout(spec)
    got = ([g.input_dim for g in params.streams], [g.input_dim for g in params.levels])
    if got != (stream_dims, level_dims) or params.classifier.input_dim != cls_dim:
        raise ShapeError("model params", (stream_dims, level_dims, cls_dim),
                         got + (params.classifier.input_dim,))


def _check_inputs(spec, inputs):
    """Validate ``{key: (N, m, dim)}`` (or unbatched ``(m, dim)``) feature arrays."""
    out = {}
    n = None
    for key in spec.fusion_order:
        if key not in inputs:
            raise MissingModalityError(key)
        x = as_float(inputs[key])
        if x.ndim < 2 or x.shape[-1] != spec.dim(key):
            raise ShapeError(f"feature {key}", f"(N, m, {spec.dim(key)})", x.shape)
        if n is None:
            n = x.shape[:-1]
        elif x.shape[:-1] != n:
            raise ShapeError(f"feature {key}", n, x.shape[:-1])
        out[key] = x
    return out


def _concat(parts):
    shape = np.broadcast_shapes(*[p.shape[:-1] for p in parts])
    return np.concatenate([np.broadcast_to(p, shape + p.shape[-1:]) for p in parts], axis=-1)


def _open_unit(p):
    """Keep probabilities strictly inside (0, 1) even when the logit saturates."""
    info = np.finfo(p.dtype)
    return np.clip(p, info.tiny, 1.0 - info.epsneg)


def forward_batch(spec, params, inputs):
    """Probabilities for a batch. Returns ``(probs (N,), cache)``."""
    xs = _check_inputs(spec, inputs)
    keys = spec.fusion_order
    k = spec.kind
    cache = {"stream": [], "level": [], "level_in": []}

    if k is Kind.STATIC:
        rep = _concat([xs[key][..., -1, :] for key in keys])
    elif k is Kind.MULTI_STREAM_GRU or k is Kind.HIERARCHICAL_GRU:
        hs_streams = []
        for g, key in zip(params.streams, keys):
            hs, caches = gru_sequence_forward(g, xs[key])
            hs_streams.append(hs)
            cache["stream"].append(caches)
        if k is Kind.MULTI_STREAM_GRU:
            rep = _concat([hs[..., -1, :] for hs in hs_streams])
        else:
            top_in = _concat(hs_streams)
            hs, caches = gru_sequence_forward(params.levels[0], top_in)
            cache["level"].append(caches)
            rep = hs[..., -1, :]
    else:
        if k is Kind.STACKED_FUSION_GRU:
            seq = xs[keys[0]]
        else:
            seq = _concat([xs[key] for key in keys])
        for j, g in enumerate(params.levels):
            if j > 0:
                seq = _concat([hs, xs[keys[j]]]) if k is Kind.STACKED_FUSION_GRU else hs
            hs, caches = gru_sequence_forward(g, seq)
            cache["level"].append(caches)
        rep = hs[..., -1, :]

    logits = linear_forward(params.classifier, rep)
    probs = _open_unit(sigmoid(logits))
    cache["rep"] = rep
    cache["probs"] = probs
    cache["kind"] = k
    cache["m"] = next(iter(xs.values())).shape[-2]
    return probs, cache


def backward(spec, params, cache, labels, scale=1.0):
    """Gradients of ``scale * sum(BCE)`` over the batch in ``cache``."""
    if cache.get("kind") is not spec.kind:
        raise SfGruError("cache was produced by a different model kind")
    probs = cache["probs"]
    labels = np.asarray(labels, dtype=DTYPE).reshape(probs.shape)
    grads = params.zeros_like()
    dlogit = scale * np.asarray(bce_logit_grad(probs, labels))
    drep, _ = linear_backward(params.classifier, cache["rep"], dlogit, grads.classifier)

    k = spec.kind
    h = spec.hidden_dim
    m = cache["m"]
    if k is Kind.STATIC:
        return grads

    def last_only(d):
        out = np.zeros(d.shape[:-1] + (m, d.shape[-1]))
        out[..., -1, :] = d
        return out

    if k is Kind.MULTI_STREAM_GRU or k is Kind.HIERARCHICAL_GRU:
        if k is Kind.MULTI_STREAM_GRU:
            dhs_all = last_only(drep)
        else:
            dhs_all, _, _ = gru_sequence_backward(
                params.levels[0], cache["level"][0], last_only(drep), grads.levels[0])
        for i, (g, caches) in enumerate(zip(params.streams, cache["stream"])):
            gru_sequence_backward(g, caches, dhs_all[..., i * h:(i + 1) * h], grads.streams[i])
        return grads

    dhs = last_only(drep)
    for j in range(len(params.levels) - 1, -1, -1):
        dxs, _, _ = gru_sequence_backward(
            params.levels[j], cache["level"][j], dhs, grads.levels[j])
        if j > 0:
            dhs = dxs[..., :h]
    return grads


def forward(spec, params, window):
    """Single-window forward. ``window`` is an ObservationWindow or ``{key: (m, dim)}``."""
    feats = getattr(window, "features", window)
    probs, cache = forward_batch(spec, params, {k: np.asarray(v)[None] for k, v in feats.items()})
    return float(probs[0]), cache


def batch_loss(spec, params, inputs, labels):
    """Summed BCE over a batch (the quantity ``backward`` differentiates with scale 1)."""
    probs, _ = forward_batch(spec, params, inputs)
    return np.sum(bce_loss(probs, np.asarray(labels, dtype=DTYPE)), axis=-1)


# checkpoints

def save_checkpoint(path, spec, params):
    """Write spec and parameters as an ``.npz`` archive with fixed zip metadata."""
    arrays = dict(params.named_arrays())
    arrays["__spec__"] = np.frombuffer(
        json.dumps(spec.to_dict(), sort_keys=True).encode(), dtype=np.uint8)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
            info = zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0))
            zf.writestr(info, buf.getvalue())


def load_checkpoint(path):
    with np.load(path, allow_pickle=False) as data:
        spec = ModelSpec.from_dict(json.loads(bytes(data["__spec__"]).decode()))
        params = zero_model(spec)
        named = params.named_arrays()
        expected = set(named) | {"__spec__"}
        if set(data.files) != expected:
            raise SfGruError(f"checkpoint arrays do not match spec: {sorted(set(data.files) ^ expected)}")
        for name, arr in named.items():
            stored = data[name]
            if stored.shape != arr.shape:
                raise ShapeError(name, arr.shape, stored.shape)
            arr[...] = stored
    return spec, params
